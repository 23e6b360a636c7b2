//! Distributed optimistic policy iteration with four operations:
//!
//! ```text
//! MinEval     J1(x1) = H1(x1, mu(x1), max[V2, J2])
//! MinImprove  J1(x1) = V1(x1) = min_u H1(x1, u, max[V2, J2]),  mu(x1) = argmin
//! MaxEval     J2(x2) = H2(x2, nu(x2), min[V1, J1])
//! MaxImprove  J2(x2) = V2(x2) = max_v H2(x2, v, min[V1, J1]),  nu(x2) = argmax
//! ```
//!
//! Any fair interleaving over any state subsets converges to the fixed point
//! `(J1*, J2*)`; reads may lag behind writes by a bounded number of steps.

pub mod extended;
pub mod schedule;

use std::collections::VecDeque;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Result, SolverError};
use crate::framework::{apply_t1, apply_t2, distance2, first_policies, zero_tables, MinimaxProblem};
pub use schedule::{OpKind, Operation, Schedule, ScheduleSpec, Step, Subset};

/// The iterate `(J1, V1, J2, V2, mu, nu)` and the step counter.
pub struct AlgoState<P: MinimaxProblem> {
    pub j1: Vec<f64>,
    pub v1: Vec<f64>,
    pub j2: Vec<P::MaxValue>,
    pub v2: Vec<P::MaxValue>,
    pub mu: Vec<P::MinAction>,
    pub nu: Vec<P::MaxAction>,
    pub t: usize,
}

impl<P: MinimaxProblem> Clone for AlgoState<P> {
    fn clone(&self) -> Self {
        Self {
            j1: self.j1.clone(),
            v1: self.v1.clone(),
            j2: self.j2.clone(),
            v2: self.v2.clone(),
            mu: self.mu.clone(),
            nu: self.nu.clone(),
            t: self.t,
        }
    }
}

impl<P: MinimaxProblem> std::fmt::Debug for AlgoState<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlgoState")
            .field("j1", &self.j1)
            .field("v1", &self.v1)
            .field("j2", &self.j2)
            .field("v2", &self.v2)
            .field("mu", &self.mu)
            .field("nu", &self.nu)
            .field("t", &self.t)
            .finish()
    }
}

impl<P: MinimaxProblem> AlgoState<P> {
    /// Zero tables and first actions.
    pub fn initial(p: &P) -> Self {
        let (j1, j2) = zero_tables(p);
        let pair = first_policies(p);
        Self { v1: j1.clone(), v2: j2.clone(), j1, j2, mu: pair.mu, nu: pair.nu, t: 0 }
    }

    /// `min[V1, J1]`.
    pub fn lower1(&self) -> Vec<f64> {
        self.v1.iter().zip(&self.j1).map(|(v, j)| v.min(*j)).collect()
    }

    /// `max[V2, J2]`.
    pub fn upper2(&self, p: &P) -> Vec<P::MaxValue> {
        self.v2.iter().zip(&self.j2).map(|(v, j)| p.upper_envelope(v, j)).collect()
    }
}

/// New entries for the states of one operation's subset.
enum Update<P: MinimaxProblem> {
    MinEval(Vec<f64>),
    MinImprove(Vec<(f64, P::MinAction)>),
    MaxEval(Vec<P::MaxValue>),
    MaxImprove(Vec<(P::MaxValue, P::MaxAction)>),
}

fn per_state<T: Send>(states: &[usize], parallel: bool, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    if parallel {
        states.par_iter().map(|&x| f(x)).collect()
    } else {
        states.iter().map(|&x| f(x)).collect()
    }
}

fn check_subset(op: &Operation, len: usize) -> Result<()> {
    if op.subset.states.is_empty() {
        return Err(SolverError::InvalidInput(format!("{} on an empty subset", op.kind)));
    }
    if let Some(x) = op.subset.states.iter().find(|&&x| x >= len) {
        return Err(SolverError::InvalidInput(format!("{} on state {x} outside a space of {len}", op.kind)));
    }
    Ok(())
}

fn compute<P: MinimaxProblem>(p: &P, read: &AlgoState<P>, op: &Operation, parallel: bool) -> Result<Update<P>> {
    let states = &op.subset.states;
    Ok(match op.kind {
        OpKind::MinEval => {
            check_subset(op, p.space1().len())?;
            let e2 = read.upper2(p);
            Update::MinEval(per_state(states, parallel, |x| Ok(p.eval_min(x, &read.mu[x], &e2)))?)
        }
        OpKind::MinImprove => {
            check_subset(op, p.space1().len())?;
            let e2 = read.upper2(p);
            Update::MinImprove(per_state(states, parallel, |x| p.improve_min(x, &e2))?)
        }
        OpKind::MaxEval => {
            check_subset(op, p.space2().len())?;
            let e1 = read.lower1();
            Update::MaxEval(per_state(states, parallel, |x| Ok(p.eval_max(x, &read.nu[x], &e1)))?)
        }
        OpKind::MaxImprove => {
            check_subset(op, p.space2().len())?;
            let e1 = read.lower1();
            Update::MaxImprove(per_state(states, parallel, |x| Ok(p.improve_max(x, &e1, &read.mu)))?)
        }
    })
}

fn commit<P: MinimaxProblem>(state: &mut AlgoState<P>, op: &Operation, update: Update<P>) {
    let states = op.subset.states.iter().copied();
    match update {
        Update::MinEval(vals) => {
            for (x, v) in states.zip(vals) {
                state.j1[x] = v;
            }
        }
        Update::MinImprove(vals) => {
            for (x, (v, u)) in states.zip(vals) {
                state.j1[x] = v;
                state.v1[x] = v;
                state.mu[x] = u;
            }
        }
        Update::MaxEval(vals) => {
            for (x, v) in states.zip(vals) {
                state.j2[x] = v;
            }
        }
        Update::MaxImprove(vals) => {
            for (x, (v, a)) in states.zip(vals) {
                state.j2[x] = v.clone();
                state.v2[x] = v;
                state.nu[x] = a;
            }
        }
    }
    state.t += 1;
}

/// Applies `op` to `state`, reading from `snapshot` (an older version of
/// the state, or a copy of it).
pub fn apply_operation<P: MinimaxProblem>(
    p: &P,
    snapshot: &AlgoState<P>,
    state: &mut AlgoState<P>,
    op: &Operation,
) -> Result<()> {
    let update = compute(p, snapshot, op, false)?;
    commit(state, op, update);
    Ok(())
}

fn step_in_place<P: MinimaxProblem>(p: &P, state: &mut AlgoState<P>, op: Operation) -> Result<()> {
    let update = compute(p, state, &op, false)?;
    commit(state, &op, update);
    Ok(())
}

pub fn min_eval_step<P: MinimaxProblem>(p: &P, state: &mut AlgoState<P>, subset: Subset) -> Result<()> {
    step_in_place(p, state, Operation { kind: OpKind::MinEval, subset })
}

pub fn min_improve_step<P: MinimaxProblem>(p: &P, state: &mut AlgoState<P>, subset: Subset) -> Result<()> {
    step_in_place(p, state, Operation { kind: OpKind::MinImprove, subset })
}

pub fn max_eval_step<P: MinimaxProblem>(p: &P, state: &mut AlgoState<P>, subset: Subset) -> Result<()> {
    step_in_place(p, state, Operation { kind: OpKind::MaxEval, subset })
}

pub fn max_improve_step<P: MinimaxProblem>(p: &P, state: &mut AlgoState<P>, subset: Subset) -> Result<()> {
    step_in_place(p, state, Operation { kind: OpKind::MaxImprove, subset })
}

/// Quantities behind the stopping rule, all in weighted sup-norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measures {
    /// `||J1 - T1 max[V2,J2]||`.
    pub residual1: f64,
    /// `||max[V2,J2] - T2 J1||`.
    pub residual2: f64,
    /// `||J1 - V1||`.
    pub gap1: f64,
    /// Evaluation gap between `J2` and `V2`.
    pub gap2: f64,
}

impl Measures {
    pub fn residual(&self) -> f64 {
        self.residual1.max(self.residual2)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.residual() <= tol && self.gap1 <= tol && self.gap2 <= tol
    }
}

/// Residuals of the iterate. The maximizer's table is taken as `max[V2,J2]`,
/// the table the minimizer's operations read; it equals `J2` once `J2 = V2`.
pub fn measure<P: MinimaxProblem>(p: &P, state: &AlgoState<P>) -> Result<Measures> {
    let e2 = state.upper2(p);
    let (t1, _) = apply_t1(p, &e2)?;
    let (t2, _) = apply_t2(p, &state.j1, &state.mu);
    let mut gap2: f64 = 0.0;
    for x in 0..state.j2.len() {
        gap2 = gap2.max(p.evaluation_gap(&state.j2[x], &state.v2[x])? / p.space2().weight(x));
    }
    Ok(Measures {
        residual1: p.space1().distance(&state.j1, &t1),
        residual2: distance2(p, &e2, &t2)?,
        gap1: p.space1().distance(&state.j1, &state.v1),
        gap2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    pub max_steps: usize,
    /// Measure residuals (and test for stopping) every this many steps.
    pub check_every: usize,
    /// Compute each step's per-state updates on the rayon pool.
    pub parallel: bool,
    /// Record elapsed wall-clock time in the trace.
    pub timing: bool,
}

impl RunOptions {
    pub fn new(tol: f64, max_steps: usize) -> Self {
        Self { tol, max_steps, check_every: 1, parallel: false, timing: false }
    }

    pub fn check_every(mut self, every: usize) -> Self {
        self.check_every = every;
        self
    }

    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn timing(mut self, timing: bool) -> Self {
        self.timing = timing;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub kind: OpKind,
    pub subset: usize,
    pub delay: usize,
    /// Present on steps where residuals were measured.
    pub residuals: Option<(f64, f64)>,
    /// Seconds since the run started, when timing is on.
    pub elapsed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxSteps,
}

pub struct RunOutcome<P: MinimaxProblem> {
    pub state: AlgoState<P>,
    pub trace: Vec<TraceRow>,
    pub steps: usize,
    pub status: RunStatus,
    /// The last measurement taken.
    pub measures: Measures,
}

impl<P: MinimaxProblem> RunOutcome<P> {
    /// `Err(MaxSteps)` unless the run converged.
    pub fn require_converged(self) -> Result<Self> {
        match self.status {
            RunStatus::Converged => Ok(self),
            RunStatus::MaxSteps => Err(SolverError::MaxSteps { steps: self.steps, residual: self.measures.residual() }),
        }
    }
}

/// Runs `schedule` from `init` until the residuals and both `J - V` gaps are
/// at most `tol`, or `max_steps` steps have executed.
///
/// Reads of a step with delay `d` see the state as it was `d` steps earlier
/// (clamped to the start); writes always go to the current state.
pub fn run<P: MinimaxProblem>(
    p: &P,
    schedule: &mut dyn Schedule,
    init: AlgoState<P>,
    opts: &RunOptions,
) -> Result<RunOutcome<P>> {
    if !(opts.tol > 0.0) || opts.check_every == 0 {
        return Err(SolverError::InvalidInput("tolerance and check interval must be positive".into()));
    }
    let start = Instant::now();
    let keep = schedule.max_delay();
    let mut history: VecDeque<AlgoState<P>> = VecDeque::with_capacity(keep + 1);
    let mut state = init;
    let mut trace = Vec::new();
    let mut measures = measure(p, &state)?;
    if measures.within(opts.tol) {
        return Ok(RunOutcome { state, trace, steps: 0, status: RunStatus::Converged, measures });
    }
    for step in 1..=opts.max_steps {
        let Step { op, delay } = schedule.next_step();
        let update = if delay == 0 || history.is_empty() {
            compute(p, &state, &op, opts.parallel)?
        } else {
            let idx = history.len().saturating_sub(delay);
            compute(p, &history[idx.min(history.len() - 1)], &op, opts.parallel)?
        };
        if keep > 0 {
            // history holds the states before the last `keep` steps.
            if history.len() == keep {
                history.pop_front();
            }
            history.push_back(state.clone());
        }
        commit(&mut state, &op, update);
        let mut residuals = None;
        if step % opts.check_every == 0 || step == opts.max_steps {
            measures = measure(p, &state)?;
            residuals = Some((measures.residual1, measures.residual2));
        }
        let elapsed = opts.timing.then(|| start.elapsed().as_secs_f64());
        trace.push(TraceRow { step, kind: op.kind, subset: op.subset.id, delay, residuals, elapsed });
        if residuals.is_some() && measures.within(opts.tol) {
            return Ok(RunOutcome { state, trace, steps: step, status: RunStatus::Converged, measures });
        }
    }
    Ok(RunOutcome { state, trace, steps: opts.max_steps, status: RunStatus::MaxSteps, measures })
}
