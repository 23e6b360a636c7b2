//! The `solve`, `compare`, `counterexample` and `aggregate-solve` drivers.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;
use minimaxpi::aggregation::{solve_aggregate, AggregationProbabilities, RepresentativeSets};
use minimaxpi::async_pi::{run, AlgoState, RunOptions, RunStatus, ScheduleSpec};
use minimaxpi::classic_pi::{
    find_counterexample, hoffman_karp, naive_separated_pi, pollatschek_avi_itzhak, PiOptions, PiResult, PiStatus,
};
use minimaxpi::framework::{value_iterate, MinimaxProblem, SeparatedProblem};
use minimaxpi::models::{separate_markov_game, BetaScaling, MarkovSeparated};

use crate::output::{sibling, values_csv};
use crate::problem::{Model, ProblemFile};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Algo {
    /// Value iteration (Shapley's operator for Markov games).
    Vi,
    /// Hoffman–Karp policy iteration (Markov games).
    Hk,
    /// Pollatschek–Avi-Itzhak policy iteration (Markov games).
    Poa,
    /// Naive policy iteration on the separated form.
    Naive,
    /// Asynchronous optimistic policy iteration.
    Async,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Vi => "vi",
            Algo::Hk => "hk",
            Algo::Poa => "poa",
            Algo::Naive => "naive",
            Algo::Async => "async",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Cycled,
    MaxIters,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::Cycled => 2,
            Status::MaxIters => 3,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::Cycled => "cycled",
            Status::MaxIters => "max_iters",
        })
    }
}

impl From<PiStatus> for Status {
    fn from(s: PiStatus) -> Self {
        match s {
            PiStatus::Converged => Status::Converged,
            PiStatus::Cycled => Status::Cycled,
            PiStatus::MaxIters => Status::MaxIters,
        }
    }
}

impl From<RunStatus> for Status {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => Status::Converged,
            RunStatus::MaxSteps => Status::MaxIters,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub tol: f64,
    /// Iterations, improvements or asynchronous steps, by algorithm.
    pub max_steps: usize,
    pub schedule: ScheduleSpec,
    /// Overrides the problem file's `beta`.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Thread count for the concurrent executor.
    pub parallel: Option<usize>,
    pub timing: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_steps: 1_000_000,
            schedule: ScheduleSpec::RoundRobin { k: minimaxpi::async_pi::schedule::DEFAULT_EVALS },
            beta: None,
            seed: 0,
            parallel: None,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub step: usize,
    pub kind: String,
    pub subset: Option<usize>,
    pub residual1: Option<f64>,
    pub residual2: Option<f64>,
    pub wall_clock: Option<f64>,
}

impl TraceLine {
    fn new(step: usize, kind: &str, residual: f64) -> Self {
        Self { step, kind: kind.into(), subset: None, residual1: Some(residual), residual2: None, wall_clock: None }
    }
}

/// Policy values visited by a detected cycle.
#[derive(Debug, Clone)]
pub struct Cycle {
    pub period: usize,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub algo: Algo,
    pub status: Status,
    pub iterations: usize,
    pub residual: f64,
    /// Values over the minimizer's states, in the problem's own scale.
    pub values: Vec<f64>,
    /// Values over the maximizer's states, when they are plain numbers.
    pub values2: Option<Vec<f64>>,
    pub trace: Vec<TraceLine>,
    pub cycle: Option<Cycle>,
}

/// Access to `J2` as numbers, where it is one.
trait NumericTables: MinimaxProblem {
    fn numeric(j2: &[Self::MaxValue]) -> Option<Vec<f64>>;
}

impl NumericTables for SeparatedProblem {
    fn numeric(j2: &[f64]) -> Option<Vec<f64>> {
        Some(j2.to_vec())
    }
}

impl NumericTables for MarkovSeparated {
    fn numeric(_: &[Self::MaxValue]) -> Option<Vec<f64>> {
        None
    }
}

fn scaled(values: &[f64], scale: f64) -> Vec<f64> {
    values.iter().map(|v| v * scale).collect()
}

fn stamp_last(trace: &mut [TraceLine], opts: &Options, start: Instant) {
    if opts.timing {
        if let Some(last) = trace.last_mut() {
            last.wall_clock = Some(start.elapsed().as_secs_f64());
        }
    }
}

fn cycle_of(period: Option<usize>, history: &[Vec<f64>], scale: f64) -> Option<Cycle> {
    period.map(|p| Cycle {
        period: p,
        values: history[history.len().saturating_sub(p)..].iter().map(|v| scaled(v, scale)).collect(),
    })
}

fn pi_report<U, V, W>(algo: Algo, r: PiResult<U, V, W>, scale: f64, values2: Option<Vec<f64>>, opts: &Options, start: Instant) -> Report {
    let mut trace: Vec<TraceLine> = r.trace.iter().enumerate().map(|(k, &res)| TraceLine::new(k + 1, "improve", res)).collect();
    stamp_last(&mut trace, opts, start);
    Report {
        algo,
        status: r.status.into(),
        iterations: r.iterations,
        residual: r.trace.last().copied().unwrap_or(0.0),
        values: scaled(&r.values, scale),
        values2,
        cycle: cycle_of(r.cycle_length, &r.value_history, scale),
        trace,
    }
}

fn run_separated<P: NumericTables>(p: &P, algo: Algo, scale: f64, opts: &Options) -> Result<Report, CliError> {
    let start = Instant::now();
    match algo {
        Algo::Vi => {
            let (j1, j2) = minimaxpi::framework::zero_tables(p);
            let out = value_iterate(p, j1, j2, opts.tol, opts.max_steps)?;
            let mut trace: Vec<TraceLine> =
                out.residuals.iter().enumerate().map(|(k, &r)| TraceLine::new(k + 1, "sweep", r)).collect();
            stamp_last(&mut trace, opts, start);
            Ok(Report {
                algo,
                status: Status::Converged,
                iterations: out.iterations,
                residual: out.residuals.last().copied().unwrap_or(0.0),
                values: scaled(&out.j1, scale),
                values2: P::numeric(&out.j2),
                trace,
                cycle: None,
            })
        }
        Algo::Naive => {
            let r = naive_separated_pi(p, PiOptions::new(opts.tol, opts.max_steps))?;
            let values2 = P::numeric(&r.values2);
            Ok(pi_report(algo, r, scale, values2, opts, start))
        }
        Algo::Async => {
            let mut schedule = opts.schedule.build(p.space1().len(), p.space2().len(), opts.seed)?;
            let run_opts = RunOptions::new(opts.tol, opts.max_steps).parallel(opts.parallel.is_some()).timing(opts.timing);
            let out = run(p, schedule.as_mut(), AlgoState::initial(p), &run_opts)?;
            let trace = out
                .trace
                .iter()
                .map(|row| TraceLine {
                    step: row.step,
                    kind: row.kind.name().into(),
                    subset: Some(row.subset),
                    residual1: row.residuals.map(|r| r.0),
                    residual2: row.residuals.map(|r| r.1),
                    wall_clock: row.elapsed,
                })
                .collect();
            Ok(Report {
                algo,
                status: out.status.into(),
                iterations: out.steps,
                residual: out.measures.residual(),
                values: scaled(&out.state.j1, scale),
                values2: P::numeric(&out.state.j2),
                trace,
                cycle: None,
            })
        }
        Algo::Hk | Algo::Poa => Err(CliError::Usage(format!("algorithm {algo} applies to Markov games only"))),
    }
}

/// The separated form of a non-game model and the factor mapping its `J1`
/// back to the model's own values.
fn separated_form(model: &Model, beta: Option<f64>) -> Result<(SeparatedProblem, f64), CliError> {
    match model {
        Model::Separated(m) => Ok((m.to_problem(), 1.0)),
        Model::Control { model, beta: file_beta } => {
            let scaling = BetaScaling::resolve(beta.or(*file_beta), model.modulus())?;
            Ok((model.to_problem(scaling)?, scaling.beta()))
        }
        Model::Markov { game, beta: file_beta } => {
            let sep = separate_markov_game(game.clone(), beta.or(*file_beta))?;
            Ok((sep.pure_separated(), sep.beta()))
        }
    }
}

fn run_algorithm(model: &Model, algo: Algo, opts: &Options) -> Result<Report, CliError> {
    info!("running {algo}");
    let start = Instant::now();
    match model {
        Model::Markov { game, beta } => match algo {
            Algo::Vi => {
                let out = game.shapley_value_iteration(opts.tol, opts.max_steps)?;
                let mut trace: Vec<TraceLine> =
                    out.residuals.iter().enumerate().map(|(k, &r)| TraceLine::new(k + 1, "sweep", r)).collect();
                stamp_last(&mut trace, opts, start);
                Ok(Report {
                    algo,
                    status: Status::Converged,
                    iterations: out.iterations,
                    residual: out.residuals.last().copied().unwrap_or(0.0),
                    values: out.values,
                    values2: None,
                    trace,
                    cycle: None,
                })
            }
            Algo::Hk => {
                let r = hoffman_karp(game, opts.tol, opts.max_steps)?;
                Ok(pi_report(algo, r, 1.0, None, opts, start))
            }
            Algo::Poa => {
                let r = pollatschek_avi_itzhak(game, PiOptions::new(opts.tol, opts.max_steps))?;
                Ok(pi_report(algo, r, 1.0, None, opts, start))
            }
            Algo::Naive | Algo::Async => {
                let sep = separate_markov_game(game.clone(), opts.beta.or(*beta))?;
                run_separated(&sep, algo, sep.beta(), opts)
            }
        },
        other => {
            let (p, scale) = separated_form(other, opts.beta)?;
            run_separated(&p, algo, scale, opts)
        }
    }
}

fn in_pool<T: Send>(parallel: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match parallel {
        None => Ok(f()),
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs one algorithm on a loaded model.
pub fn solve(model: &Model, algo: Algo, opts: &Options) -> Result<Report, CliError> {
    in_pool(opts.parallel, || run_algorithm(model, algo, opts))?
}

fn modulus_of(model: &Model) -> f64 {
    match model {
        Model::Markov { game, .. } => game.modulus(),
        Model::Separated(m) => m.modulus(),
        Model::Control { model, .. } => model.modulus(),
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub reports: Vec<Report>,
    /// Largest difference between converged algorithms' values.
    pub max_disagreement: f64,
}

/// Runs every algorithm in `algos`. Each run uses the tolerance
/// `tol * (1 - modulus) / 2`, so that every converged answer is within about
/// `tol` of the fixed point and they agree with each other.
pub fn compare(model: &Model, algos: &[Algo], opts: &Options) -> Result<Comparison, CliError> {
    if algos.is_empty() {
        return Err(CliError::Usage("no algorithms to compare".into()));
    }
    let inner = Options { tol: opts.tol * (1.0 - modulus_of(model)) / 2.0, ..opts.clone() };
    let reports = algos.iter().map(|&a| solve(model, a, &inner)).collect::<Result<Vec<_>, _>>()?;
    let converged: Vec<&Report> = reports.iter().filter(|r| r.status == Status::Converged).collect();
    let mut max_disagreement: f64 = 0.0;
    for (i, a) in converged.iter().enumerate() {
        for b in &converged[i + 1..] {
            for (x, y) in a.values.iter().zip(&b.values) {
                max_disagreement = max_disagreement.max((x - y).abs());
            }
        }
    }
    Ok(Comparison { reports, max_disagreement })
}

/// Writes the oscillation instance to `out` and a note on its cycle to
/// `<out stem>.cycle.txt`.
pub fn counterexample(out: &Path) -> Result<ProblemFile, CliError> {
    let cx = find_counterexample()?;
    let file = ProblemFile::from_markov(&cx.game, None);
    file.save(out)?;
    let max_p = cx.probs.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let values: Vec<String> = cx.cycle_values.iter().map(f64::to_string).collect();
    let note = format!(
        "Exact Pollatschek-Avi-Itzhak policy iteration cycles on this game.\n\
         period: {}\n\
         values: {}\n\
         costs: {:?}\n\
         continuation probabilities: {:?}\n\
         alpha * max p: {}\n",
        cx.cycle_values.len(),
        values.join(", "),
        cx.costs,
        cx.probs,
        cx.game.alpha() * max_p,
    );
    let note_path = out.with_extension("cycle.txt");
    fs::write(&note_path, note).map_err(|e| CliError::io(&note_path, e))?;
    Ok(file)
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub status: Status,
    pub steps: usize,
    /// Interpolated aggregate values over the minimizer's states.
    pub values: Vec<f64>,
    /// Exact values of the lookahead policy pair.
    pub policy_values: Vec<f64>,
    /// Exact fixed point of the full problem.
    pub exact_values: Vec<f64>,
    /// Distance between the lookahead pair's values and the fixed point.
    pub gap: f64,
}

/// Solves the aggregate problem described by the file's aggregation block.
/// For Markov games the maximizer's states are the `(x, i)` pairs, indexed
/// `x * n + i`.
pub fn aggregate_solve(file: &ProblemFile, model: &Model, opts: &Options) -> Result<AggregateReport, CliError> {
    let block = file
        .aggregation
        .as_ref()
        .ok_or_else(|| CliError::Validation { field: "aggregation".into(), message: "block is required".into() })?;
    let (p, scale) = separated_form(model, opts.beta)?;
    let (n1, n2) = (p.space1().len(), p.space2().len());
    let invalid = |e: minimaxpi::SolverError| CliError::Validation { field: "aggregation".into(), message: e.to_string() };
    let reps = RepresentativeSets::new(block.reps1.clone(), block.reps2.clone()).map_err(invalid)?;
    let defaults = AggregationProbabilities::nearest(n1, n2, &reps);
    let phi = AggregationProbabilities::new(
        block.phi1.clone().unwrap_or_else(|| defaults.phi1().to_vec()),
        block.phi2.clone().unwrap_or_else(|| defaults.phi2().to_vec()),
        &reps,
    )
    .map_err(invalid)?;
    in_pool(opts.parallel, || {
        let mut schedule = opts.schedule.build(reps.reps1().len(), reps.reps2().len(), opts.seed)?;
        let run_opts = RunOptions::new(opts.tol, opts.max_steps).parallel(opts.parallel.is_some());
        let sol = solve_aggregate(&p, &reps, &phi, schedule.as_mut(), &run_opts)?;
        let exact = value_iterate(&p, vec![0.0; n1], vec![0.0; n2], opts.tol * 1e-2, opts.max_steps)?;
        let gap = sol.gap(&p, &exact.j1, &exact.j2);
        Ok(AggregateReport {
            status: sol.status.into(),
            steps: sol.steps,
            values: scaled(&sol.j1, scale),
            policy_values: scaled(&sol.policy_j1, scale),
            exact_values: scaled(&exact.j1, scale),
            gap,
        })
    })?
}

pub fn aggregate_csv(r: &AggregateReport) -> String {
    let mut s = String::from("state,aggregate_value,policy_value,exact_value\n");
    for x in 0..r.values.len() {
        s.push_str(&format!("{x},{},{},{}\n", r.values[x], r.policy_values[x], r.exact_values[x]));
    }
    s
}

/// Writes the value tables of `report` to `out` (and `J2` beside it).
pub fn write_values(report: &Report, out: Option<&Path>) -> Result<(), CliError> {
    crate::output::emit(out, &values_csv(&report.values))?;
    if let (Some(path), Some(j2)) = (out, &report.values2) {
        crate::output::emit(Some(&sibling(path, "j2")), &values_csv(j2))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use minimaxpi::models::random_markov_game;

    fn model(seed: u64) -> Model {
        Model::Markov { game: random_markov_game(3, 2, 2, 0.9, seed).unwrap(), beta: None }
    }

    #[test]
    fn algorithms_agree_on_a_random_game() {
        let opts = Options::default();
        let cmp = compare(&model(1), &[Algo::Vi, Algo::Hk, Algo::Poa, Algo::Async], &opts).unwrap();
        assert!(cmp.reports.iter().all(|r| r.status == Status::Converged));
        assert!(cmp.max_disagreement <= 10.0 * opts.tol);
    }

    #[test]
    fn game_only_algorithms_reject_other_models() {
        let m = Model::Separated(minimaxpi::models::random_separated_model(3, 3, 2, 0.8, 1).unwrap());
        assert!(matches!(solve(&m, Algo::Hk, &Options::default()), Err(CliError::Usage(_))));
        assert_eq!(solve(&m, Algo::Async, &Options::default()).unwrap().status, Status::Converged);
    }

    #[test]
    fn parallel_runs_match_serial() {
        let opts = Options::default();
        let a = solve(&model(2), Algo::Async, &opts).unwrap();
        let b = solve(&model(2), Algo::Async, &Options { parallel: Some(2), ..opts }).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.trace, b.trace);
    }
}
