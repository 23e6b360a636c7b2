//! Policy iteration baselines: Hoffman–Karp, Pollatschek–Avi-Itzhak (exact
//! and optimistic), naive separated PI, and cycle detection.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Result, SolverError};
use crate::framework::{
    apply_t1_mu, apply_t2_nu, distance2, first_policies, zero_tables, MinimaxProblem, PairOf, PolicyKey,
    PolicyPair,
};
use crate::matrix_game::{MixedStrategy, PayoffMatrix};
use crate::models::MarkovGame;

/// Largest state count for which exact evaluation uses a dense solve.
const DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiStatus {
    Converged,
    Cycled,
    MaxIters,
}

/// Outcome of a policy iteration run.
#[derive(Debug, Clone)]
pub struct PiResult<U, V, W = f64> {
    /// `J` for Markov games, `J1` for separated problems.
    pub values: Vec<f64>,
    /// `J2` for separated problems; empty for Markov games.
    pub values2: Vec<W>,
    pub min_policy: Vec<U>,
    pub max_policy: Vec<V>,
    /// Improvement steps performed.
    pub iterations: usize,
    pub status: PiStatus,
    pub cycle_length: Option<usize>,
    /// Bellman residual measured at each improvement.
    pub trace: Vec<f64>,
    /// Hashes of the policy pair produced by each improvement.
    pub signatures: Vec<u64>,
    /// Values produced by each evaluation.
    pub value_history: Vec<Vec<f64>>,
}

/// Shared options of the PI drivers.
#[derive(Debug, Clone, Copy)]
pub struct PiOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Evaluate by this many value-iteration sweeps instead of exactly.
    pub optimistic_k: Option<usize>,
    /// Stop as soon as a cycle is confirmed; otherwise run to `max_iters`.
    pub stop_on_cycle: bool,
}

impl PiOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self { tol, max_iters, optimistic_k: None, stop_on_cycle: true }
    }

    pub fn optimistic(mut self, k: usize) -> Self {
        self.optimistic_k = Some(k);
        self
    }

    pub fn run_to_budget(mut self) -> Self {
        self.stop_on_cycle = false;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(SolverError::InvalidInput("tolerance must be positive".into()));
        }
        if self.optimistic_k == Some(0) {
            return Err(SolverError::InvalidInput("optimistic sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Smallest `p >= 1` with `history[t] == history[t - p]` for the last `t`,
/// unless the values converged.
pub fn detect_cycle<T: PartialEq>(history: &[T], converged: bool) -> Option<usize> {
    if converged || history.len() < 2 {
        return None;
    }
    let t = history.len() - 1;
    (1..=t).find(|&p| history[t] == history[t - p])
}

fn signature<U: PolicyKey, V: PolicyKey>(mu: &[U], nu: &[V]) -> u64 {
    let mut h = DefaultHasher::new();
    for u in mu {
        u.key().hash(&mut h);
    }
    usize::MAX.hash(&mut h);
    for v in nu {
        v.key().hash(&mut h);
    }
    h.finish()
}

/// A confirmed cycle: the policy pair repeats with period `p >= 2` and the
/// values repeat with it.
fn confirmed_cycle(signatures: &[u64], values: &[Vec<f64>], tol: f64, dist: impl Fn(&[f64], &[f64]) -> f64) -> Option<usize> {
    let p = detect_cycle(signatures, false)?;
    if p < 2 || values.len() <= p {
        return None;
    }
    let t = values.len() - 1;
    (dist(&values[t], &values[t - p]) <= tol).then_some(p)
}

/// Dense Gaussian elimination with partial pivoting.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot][col].abs() < 1e-14 {
            return Err(SolverError::InvalidInput("singular evaluation system".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Stage games at `j` solved exactly: `(T J, mu, nu)`.
fn improve_game(game: &MarkovGame, j: &[f64]) -> Result<(Vec<f64>, Vec<MixedStrategy>, Vec<MixedStrategy>)> {
    let mut values = Vec::with_capacity(j.len());
    let mut mu = Vec::with_capacity(j.len());
    let mut nu = Vec::with_capacity(j.len());
    for s in game.shapley_games(j)? {
        values.push(s.value);
        mu.push(s.u_star);
        nu.push(s.v_star);
    }
    Ok((values, mu, nu))
}

/// `(g, P)` of a fixed strategy pair.
fn pair_system(game: &MarkovGame, mu: &[MixedStrategy], nu: &[MixedStrategy]) -> (Vec<f64>, Vec<Vec<f64>>) {
    (0..game.state_count())
        .map(|x| {
            let (u, v) = (mu[x].probs(), nu[x].probs());
            (game.payoff(x).bilinear(u, v), game.transition_probs(x, u, v))
        })
        .unzip()
}

/// `J_{mu,nu}` by a dense solve of `(I - alpha P) J = g`, or by iteration
/// for large games.
pub fn evaluate_strategy_pair(
    game: &MarkovGame,
    mu: &[MixedStrategy],
    nu: &[MixedStrategy],
    start: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let (g, p) = pair_system(game, mu, nu);
    let alpha = game.alpha();
    let s = game.state_count();
    if s <= DENSE_LIMIT {
        let a = (0..s)
            .map(|x| (0..s).map(|y| f64::from(u8::from(x == y)) - alpha * p[x][y]).collect())
            .collect();
        return solve_linear(a, g);
    }
    let mut j = start.to_vec();
    loop {
        let next = sweep(&g, &p, alpha, &j);
        let change = game.space().distance(&j, &next);
        j = next;
        if change <= tol * 1e-3 {
            return Ok(j);
        }
    }
}

fn sweep(g: &[f64], p: &[Vec<f64>], alpha: f64, j: &[f64]) -> Vec<f64> {
    g.iter()
        .zip(p)
        .map(|(gx, row)| gx + alpha * row.iter().zip(j).map(|(q, v)| q * v).sum::<f64>())
        .collect()
}

/// The maximizer's best-response value `J_mu` against fixed `mu`, by value
/// iteration from `start` to sweep change `tol`.
pub fn evaluate_min_policy(game: &MarkovGame, mu: &[MixedStrategy], start: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut j = start.to_vec();
    for _ in 0..crate::framework::DEFAULT_MAX_ITERS {
        let next: Vec<f64> = (0..game.state_count())
            .map(|x| {
                let c = game.stage_matrix(x, &j, game.alpha());
                crate::matrix_game::best_response_value(&c, &mu[x]).0
            })
            .collect();
        let change = game.space().distance(&j, &next);
        j = next;
        if change <= tol {
            return Ok(j);
        }
    }
    Err(SolverError::MaxItersExceeded { iterations: crate::framework::DEFAULT_MAX_ITERS, residual: f64::NAN })
}

pub type GamePiResult = PiResult<MixedStrategy, MixedStrategy>;

/// Hoffman–Karp: evaluate `mu` against the maximizer's best response,
/// then improve `mu` by solving each state's matrix game.
///
/// Starts from the first pure row everywhere and stops once the Shapley
/// residual at the evaluated `J_mu` is at most `tol`.
pub fn hoffman_karp(game: &MarkovGame, tol: f64, max_iters: usize) -> Result<GamePiResult> {
    PiOptions::new(tol, max_iters).validate()?;
    let s = game.state_count();
    let mut mu = vec![MixedStrategy::pure(game.n(), 0); s];
    let mut j = vec![0.0; s];
    let mut trace = Vec::new();
    let mut signatures = Vec::new();
    let mut value_history = Vec::new();
    for it in 1..=max_iters {
        j = evaluate_min_policy(game, &mu, &j, tol / 10.0)?;
        value_history.push(j.clone());
        let (tj, next_mu, nu) = improve_game(game, &j)?;
        let residual = game.space().distance(&j, &tj);
        trace.push(residual);
        signatures.push(signature(&next_mu, &nu));
        if residual <= tol {
            return Ok(PiResult {
                values: j,
                values2: Vec::new(),
                min_policy: next_mu,
                max_policy: nu,
                iterations: it,
                status: PiStatus::Converged,
                cycle_length: None,
                trace,
                signatures,
                value_history,
            });
        }
        mu = next_mu;
    }
    let (_, _, nu) = improve_game(game, &j)?;
    Ok(PiResult {
        values: j,
        values2: Vec::new(),
        min_policy: mu,
        max_policy: nu,
        iterations: max_iters,
        status: PiStatus::MaxIters,
        cycle_length: None,
        trace,
        signatures,
        value_history,
    })
}

/// Pollatschek–Avi-Itzhak: evaluate the pair `(mu, nu)` jointly, then
/// replace both by the saddle strategies of each state's matrix game.
pub fn pollatschek_avi_itzhak(game: &MarkovGame, opts: PiOptions) -> Result<GamePiResult> {
    opts.validate()?;
    let s = game.state_count();
    let mut mu = vec![MixedStrategy::pure(game.n(), 0); s];
    let mut nu = vec![MixedStrategy::pure(game.m(), 0); s];
    let mut j = vec![0.0; s];
    let mut trace = Vec::new();
    let mut signatures = vec![signature(&mu, &nu)];
    let mut value_history: Vec<Vec<f64>> = Vec::new();
    let mut cycle = None;
    let dist = |a: &[f64], b: &[f64]| game.space().distance(a, b);
    for it in 1..=opts.max_iters {
        j = match opts.optimistic_k {
            None => evaluate_strategy_pair(game, &mu, &nu, &j, opts.tol)?,
            Some(k) => {
                let (g, p) = pair_system(game, &mu, &nu);
                (0..k).fold(j, |acc, _| sweep(&g, &p, game.alpha(), &acc))
            }
        };
        value_history.push(j.clone());
        let (tj, next_mu, next_nu) = improve_game(game, &j)?;
        let residual = dist(&j, &tj);
        trace.push(residual);
        if residual <= opts.tol {
            return Ok(PiResult {
                values: j,
                values2: Vec::new(),
                min_policy: next_mu,
                max_policy: next_nu,
                iterations: it,
                status: PiStatus::Converged,
                cycle_length: None,
                trace,
                signatures,
                value_history,
            });
        }
        mu = next_mu;
        nu = next_nu;
        signatures.push(signature(&mu, &nu));
        // signatures[t] produced value_history[t]; compare like with like.
        cycle = confirmed_cycle(&signatures[..value_history.len()], &value_history, opts.tol, dist);
        if cycle.is_some() && opts.stop_on_cycle {
            return Ok(PiResult {
                values: j,
                values2: Vec::new(),
                min_policy: mu,
                max_policy: nu,
                iterations: it,
                status: PiStatus::Cycled,
                cycle_length: cycle,
                trace,
                signatures,
                value_history,
            });
        }
    }
    Ok(PiResult {
        values: j,
        values2: Vec::new(),
        min_policy: mu,
        max_policy: nu,
        iterations: opts.max_iters,
        status: if cycle.is_some() { PiStatus::Cycled } else { PiStatus::MaxIters },
        cycle_length: cycle,
        trace,
        signatures,
        value_history,
    })
}

pub type SeparatedPiResult<P> =
    PiResult<<P as MinimaxProblem>::MinAction, <P as MinimaxProblem>::MaxAction, <P as MinimaxProblem>::MaxValue>;

/// Naive PI on a separated problem: evaluate `(mu, nu)` jointly, then improve
/// `mu` against `J2` and `nu` against `J1` (with the new `mu` available).
pub fn naive_separated_pi<P: MinimaxProblem>(p: &P, opts: PiOptions) -> Result<SeparatedPiResult<P>> {
    opts.validate()?;
    let PolicyPair { mut mu, mut nu }: PairOf<P> = first_policies(p);
    let (mut j1, mut j2) = zero_tables(p);
    let mut trace = Vec::new();
    let mut signatures = vec![signature(&mu, &nu)];
    let mut value_history: Vec<Vec<f64>> = Vec::new();
    let mut cycle = None;
    let eval_tol = opts.tol * 1e-3;
    let dist = |a: &[f64], b: &[f64]| p.space1().distance(a, b);
    for it in 1..=opts.max_iters {
        let sweeps = opts.optimistic_k.unwrap_or(usize::MAX);
        for _ in 0..sweeps {
            let n1 = apply_t1_mu(p, &mu, &j2);
            let n2 = apply_t2_nu(p, &nu, &j1);
            let change = p.space1().distance(&j1, &n1).max(distance2(p, &j2, &n2)?);
            j1 = n1;
            j2 = n2;
            if opts.optimistic_k.is_none() && change <= eval_tol {
                break;
            }
        }
        value_history.push(j1.clone());
        let (t1, next_mu) = crate::framework::apply_t1(p, &j2)?;
        let (t2, next_nu) = crate::framework::apply_t2(p, &j1, &next_mu);
        let residual = p.space1().distance(&j1, &t1).max(distance2(p, &j2, &t2)?);
        trace.push(residual);
        if residual <= opts.tol {
            return Ok(PiResult {
                values: j1,
                values2: j2,
                min_policy: next_mu,
                max_policy: next_nu,
                iterations: it,
                status: PiStatus::Converged,
                cycle_length: None,
                trace,
                signatures,
                value_history,
            });
        }
        mu = next_mu;
        nu = next_nu;
        signatures.push(signature(&mu, &nu));
        cycle = confirmed_cycle(&signatures[..value_history.len()], &value_history, opts.tol, dist);
        if cycle.is_some() && opts.stop_on_cycle {
            return Ok(PiResult {
                values: j1,
                values2: j2,
                min_policy: mu,
                max_policy: nu,
                iterations: it,
                status: PiStatus::Cycled,
                cycle_length: cycle,
                trace,
                signatures,
                value_history,
            });
        }
    }
    Ok(PiResult {
        values: j1,
        values2: j2,
        min_policy: mu,
        max_policy: nu,
        iterations: opts.max_iters,
        status: if cycle.is_some() { PiStatus::Cycled } else { PiStatus::MaxIters },
        cycle_length: cycle,
        trace,
        signatures,
        value_history,
    })
}

/// A one-state, 2×2 terminating game on which exact Pollatschek–Avi-Itzhak
/// oscillates.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub game: MarkovGame,
    /// Stage costs `g_ij`.
    pub costs: [[f64; 2]; 2],
    /// Continuation probabilities `p_ij`.
    pub probs: [[f64; 2]; 2],
    /// Values visited by the cycle, in order.
    pub cycle_values: Vec<f64>,
}

/// Whether `m` has a pure saddle `(i, j)` that beats every alternative in its
/// row and column by at least `margin`.
fn strict_pure_saddle(m: &PayoffMatrix, margin: f64) -> bool {
    (0..m.rows()).any(|i| {
        (0..m.cols()).any(|j| {
            let a = m.get(i, j);
            (0..m.cols()).all(|k| k == j || a >= m.get(i, k) + margin)
                && (0..m.rows()).all(|k| k == i || a <= m.get(k, j) - margin)
        })
    })
}

fn counterexample_game(costs: [[f64; 2]; 2], probs: [[f64; 2]; 2]) -> Result<MarkovGame> {
    let a = PayoffMatrix::from_rows(&[costs[0].to_vec(), costs[1].to_vec()])?;
    let q = vec![vec![probs[0][0]], vec![probs[0][1]], vec![probs[1][0]], vec![probs[1][1]]];
    MarkovGame::terminating(vec![a], vec![q], 1.0, None)
}

/// Grid search over `g in {-2..2}^4`, `p in {0.1..0.9}^4` (lexicographic,
/// costs outermost) for the first game where exact Pollatschek–Avi-Itzhak
/// settles into a period-2 cycle whose stage games have strict pure saddles,
/// so that the cycle does not hinge on tie-breaking.
pub fn find_counterexample() -> Result<Counterexample> {
    const MARGIN: f64 = 0.05;
    let gs = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let ps: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    for g in product4(&gs) {
        for p in product4(&ps) {
            let costs = [[g[0], g[1]], [g[2], g[3]]];
            let probs = [[p[0], p[1]], [p[2], p[3]]];
            let game = counterexample_game(costs, probs)?;
            let run = pollatschek_avi_itzhak(&game, PiOptions::new(1e-9, 30))?;
            if run.status != PiStatus::Cycled || run.cycle_length != Some(2) {
                continue;
            }
            let t = run.value_history.len();
            let cycle_values = vec![run.value_history[t - 2][0], run.value_history[t - 1][0]];
            if (cycle_values[0] - cycle_values[1]).abs() <= 1e-6 {
                continue;
            }
            let strict = cycle_values
                .iter()
                .all(|&j| strict_pure_saddle(&game.stage_matrix(0, &[j], 1.0), MARGIN));
            if strict {
                return Ok(Counterexample { game, costs, probs, cycle_values });
            }
        }
    }
    Err(SolverError::SearchFailed)
}

fn product4(values: &[f64]) -> impl Iterator<Item = [f64; 4]> + '_ {
    let k = values.len();
    (0..k.pow(4)).map(move |idx| {
        let d = [idx / (k * k * k), (idx / (k * k)) % k, (idx / k) % k, idx % k];
        [values[d[0]], values[d[1]], values[d[2]], values[d[3]]]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::{bellman_residual, value_iterate};
    use crate::models::{random_markov_game, separate_markov_game, random_separated_model};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_game() -> MarkovGame {
        let a = PayoffMatrix::zeros(2, 2);
        let rows = vec![vec![0.5, 0.5]; 4];
        MarkovGame::discounted(vec![a.clone(), a], vec![rows.clone(), rows], 0.9, None).unwrap()
    }

    #[test]
    fn detect_cycle_examples() {
        assert_eq!(detect_cycle(&[1, 1, 1], true), None);
        assert_eq!(detect_cycle(&['a', 'b', 'a', 'b'], false), Some(2));
        assert_eq!(detect_cycle(&[1], false), None);
    }

    #[test]
    fn detect_cycle_matches_period_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pre = rng.gen_range(0..5);
            let period = rng.gen_range(1..5);
            let body: Vec<u8> = (0..period).map(|_| rng.gen_range(0..3)).collect();
            let mut seq: Vec<u8> = (0..pre).map(|_| 10 + rng.gen_range(0..3)).collect();
            for k in 0..3 * period {
                seq.push(body[k % period]);
            }
            // Brute force: smallest p with seq[t] == seq[t-p].
            let t = seq.len() - 1;
            let oracle = (1..=t).find(|&p| seq[t] == seq[t - p]);
            assert_eq!(detect_cycle(&seq, false), oracle);
            assert!(oracle.unwrap() <= period);
        }
    }

    #[test]
    fn linear_solve() {
        let x = solve_linear(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_linear(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_game_one_iteration() {
        let g = zero_game();
        let hk = hoffman_karp(&g, 1e-8, 100).unwrap();
        assert_eq!((hk.status, hk.iterations), (PiStatus::Converged, 1));
        assert!(hk.values.iter().all(|v| *v == 0.0));
        let poa = pollatschek_avi_itzhak(&g, PiOptions::new(1e-8, 100)).unwrap();
        assert_eq!((poa.status, poa.iterations), (PiStatus::Converged, 1));
    }

    #[test]
    fn pennies_value_zero() {
        let a = PayoffMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let g = MarkovGame::discounted(vec![a], vec![vec![vec![1.0]; 4]], 0.5, None).unwrap();
        let hk = hoffman_karp(&g, 1e-10, 100).unwrap();
        assert_eq!(hk.status, PiStatus::Converged);
        assert!(hk.values[0].abs() < 1e-9);
    }

    #[test]
    fn hk_and_poa_match_shapley_and_hk_is_monotone() {
        for seed in 0..6 {
            let g = random_markov_game(3, 2, 3, 0.9, seed).unwrap();
            let oracle = g.shapley_value_iteration(1e-11, 100_000).unwrap().values;
            let hk = hoffman_karp(&g, 1e-9, 200).unwrap();
            assert_eq!(hk.status, PiStatus::Converged);
            for x in 0..3 {
                assert!((hk.values[x] - oracle[x]).abs() < 1e-6);
            }
            for w in hk.value_history.windows(2) {
                for x in 0..3 {
                    assert!(w[1][x] <= w[0][x] + 1e-9);
                }
            }
            let poa = pollatschek_avi_itzhak(&g, PiOptions::new(1e-9, 200)).unwrap();
            if poa.status == PiStatus::Converged {
                for x in 0..3 {
                    assert!((poa.values[x] - oracle[x]).abs() < 1e-6);
                }
                let tj = g.shapley_operator(&poa.values).unwrap();
                assert!(g.space().distance(&tj, &poa.values) <= 1e-8);
            }
        }
    }

    #[test]
    fn optimistic_limit_matches_exact() {
        let g = random_markov_game(3, 2, 2, 0.5, 9).unwrap();
        let mu = vec![MixedStrategy::uniform(2); 3];
        let nu = vec![MixedStrategy::pure(2, 1); 3];
        let exact = evaluate_strategy_pair(&g, &mu, &nu, &[0.0; 3], 1e-12).unwrap();
        let (gv, p) = pair_system(&g, &mu, &nu);
        let approx = (0..200).fold(vec![0.0; 3], |acc, _| sweep(&gv, &p, 0.5, &acc));
        for x in 0..3 {
            assert!((exact[x] - approx[x]).abs() < 1e-6);
        }
        let opt = pollatschek_avi_itzhak(&g, PiOptions::new(1e-9, 500).optimistic(200)).unwrap();
        let ex = pollatschek_avi_itzhak(&g, PiOptions::new(1e-9, 500)).unwrap();
        if opt.status == PiStatus::Converged && ex.status == PiStatus::Converged {
            for x in 0..3 {
                assert!((opt.values[x] - ex.values[x]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn naive_forced_policies_converge_in_one() {
        let m = crate::models::SeparatedMinimaxModel::new(vec![vec![(1.0, 0)]], vec![vec![(2.0, 0)]], 0.5, None, None).unwrap();
        let r = naive_separated_pi(&m.to_problem(), PiOptions::new(1e-10, 50)).unwrap();
        assert_eq!((r.status, r.iterations), (PiStatus::Converged, 1));
        assert!((r.values[0] - 8.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn naive_matches_value_iteration_when_converged() {
        for seed in 0..5 {
            let p = random_separated_model(4, 4, 3, 0.8, seed).unwrap().to_problem();
            let vi = value_iterate(&p, vec![0.0; 4], vec![0.0; 4], 1e-11, 100_000).unwrap();
            let r = naive_separated_pi(&p, PiOptions::new(1e-9, 200)).unwrap();
            if r.status == PiStatus::Converged {
                for x in 0..4 {
                    assert!((r.values[x] - vi.j1[x]).abs() < 1e-6);
                }
                assert!(bellman_residual(&p, &r.values, &r.values2).unwrap() <= 1e-8);
            }
        }
    }

    /// Closed-form value of a 2×2 pure pair on the one-state game.
    fn pure_pair_value(c: &Counterexample, i: usize, j: usize) -> f64 {
        c.costs[i][j] / (1.0 - c.probs[i][j])
    }

    #[test]
    fn counterexample_cycles_under_exhaustive_enumeration() {
        let c = find_counterexample().unwrap();
        assert!(c.game.modulus() < 1.0);
        // Improvement map over the four pure pairs, by enumeration of saddles.
        let step = |(i, j): (usize, usize)| -> (usize, usize) {
            let jv = pure_pair_value(&c, i, j);
            let m = c.game.stage_matrix(0, &[jv], 1.0);
            let mut found = None;
            for a in 0..2 {
                for b in 0..2 {
                    let v = m.get(a, b);
                    if v >= m.get(a, 1 - b) && v <= m.get(1 - a, b) {
                        found = Some((a, b));
                    }
                }
            }
            found.expect("pure saddle")
        };
        let mut pair = (0, 0);
        let mut seen = vec![pair];
        for _ in 0..8 {
            pair = step(pair);
            seen.push(pair);
        }
        let n = seen.len();
        assert_eq!(seen[n - 1], seen[n - 3]);
        assert_ne!(seen[n - 1], seen[n - 2]);
        let vals = [pure_pair_value(&c, seen[n - 2].0, seen[n - 2].1), pure_pair_value(&c, seen[n - 1].0, seen[n - 1].1)];
        let mut got = c.cycle_values.clone();
        let mut want = vals.to_vec();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        assert!((got[0] - want[0]).abs() < 1e-9 && (got[1] - want[1]).abs() < 1e-9);
    }

    #[test]
    fn poa_cycles_on_counterexample_for_long_runs() {
        let c = find_counterexample().unwrap();
        let r = pollatschek_avi_itzhak(&c.game, PiOptions::new(1e-8, 2000).run_to_budget()).unwrap();
        assert_eq!(r.status, PiStatus::Cycled);
        assert_eq!(r.cycle_length, Some(2));
    }

    #[test]
    fn naive_cycles_on_separated_counterexample() {
        let c = find_counterexample().unwrap();
        let sep = separate_markov_game(c.game, None).unwrap();
        let r = naive_separated_pi(&sep, PiOptions::new(1e-8, 200)).unwrap();
        assert_eq!(r.status, PiStatus::Cycled, "{:?}", r.trace);
    }
}
