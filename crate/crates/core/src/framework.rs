//! Finite weighted sup-norm spaces and the separated two-player fixed-point
//! framework.
//!
//! A problem couples a minimizer state space `X1` and a maximizer state space
//! `X2` through two evaluators:
//!
//! ```text
//! J1*(x1) = min_u H1(x1, u, J2*)      J2*(x2) = max_v H2(x2, v, J1*)
//! ```
//!
//! [`MinimaxProblem`] abstracts over how tables on `X2` are represented, so the
//! same value iteration, residual and policy iteration code runs on explicit
//! finite problems ([`SeparatedProblem`]) and on the Markov-game reformulation
//! whose `X2` entries are piecewise-linear functions of a mixed strategy.

use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SolverError};
use crate::matrix_game::{argmax, argmin, MixedStrategy};

/// Default stopping tolerance for iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default iteration budget for iterative solvers.
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

/// Values indexed by state. Always paired with a [`WeightedSpace`] of equal length.
pub type ValueTable = Vec<f64>;

/// A finite state space with positive weights `xi(x)` defining
/// `||J|| = max_x |J(x)| / xi(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSpace {
    weights: Vec<f64>,
}

impl WeightedSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(SolverError::InvalidInput("state space must be nonempty".into()));
        }
        if let Some(x) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SolverError::InvalidInput(format!(
                "weight of state {x} must be positive, got {}",
                weights[x]
            )));
        }
        Ok(Self { weights })
    }

    /// Unit weights.
    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "state space must be nonempty");
        Self { weights: vec![1.0; size] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|w| *w == 1.0)
    }

    /// Weighted sup-norm of a table on this space.
    pub fn norm(&self, j: &[f64]) -> f64 {
        debug_assert_eq!(j.len(), self.len());
        j.iter().zip(&self.weights).map(|(v, w)| v.abs() / w).fold(0.0, f64::max)
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| (x - y).abs() / w)
            .fold(0.0, f64::max)
    }

    /// Restriction to a subset of states, keeping their weights.
    pub fn restrict(&self, states: &[usize]) -> Result<Self> {
        Self::new(states.iter().map(|&x| self.weights[x]).collect())
    }
}

/// Norm on the product space: the larger of the two weighted norms.
pub fn product_norm(space1: &WeightedSpace, j1: &[f64], space2: &WeightedSpace, j2: &[f64]) -> f64 {
    space1.norm(j1).max(space2.norm(j2))
}

/// Hashable key of a policy entry, used for cycle detection.
pub trait PolicyKey {
    fn key(&self) -> Vec<i64>;
}

impl PolicyKey for usize {
    fn key(&self) -> Vec<i64> {
        vec![*self as i64]
    }
}

impl PolicyKey for MixedStrategy {
    fn key(&self) -> Vec<i64> {
        self.rounded_key()
    }
}

/// A separated minimax fixed-point problem.
///
/// Tables on `X1` are plain reals. An entry of a table on `X2` has type
/// [`MinimaxProblem::MaxValue`]; for explicit problems it is a real, for the
/// Markov-game reformulation it is a function of the minimizer's mixed strategy.
pub trait MinimaxProblem: Sync {
    type MinAction: Clone + Debug + PartialEq + PolicyKey + Send + Sync;
    type MaxAction: Clone + Debug + PartialEq + PolicyKey + Send + Sync;
    type MaxValue: Clone + Debug + Send + Sync;

    fn space1(&self) -> &WeightedSpace;
    fn space2(&self) -> &WeightedSpace;

    /// Asserted contraction modulus of `T_{mu,nu}` in the product norm.
    fn modulus(&self) -> f64;

    fn first_min_action(&self, x1: usize) -> Self::MinAction;
    fn first_max_action(&self, x2: usize) -> Self::MaxAction;

    fn zero_max_value(&self, x2: usize) -> Self::MaxValue;

    /// `H1(x1, u, J2)`.
    fn eval_min(&self, x1: usize, u: &Self::MinAction, j2: &[Self::MaxValue]) -> f64;

    /// `min_u H1(x1, u, J2)` and an attaining action (lowest index on ties).
    fn improve_min(&self, x1: usize, j2: &[Self::MaxValue]) -> Result<(f64, Self::MinAction)>;

    /// `H2(x2, v, J1)`.
    fn eval_max(&self, x2: usize, v: &Self::MaxAction, j1: &[f64]) -> Self::MaxValue;

    /// `max_v H2(x2, v, J1)` and an attaining action (lowest index on ties).
    ///
    /// `min_policy` is the minimizer's current policy; representations whose
    /// `X2` entries span several minimizer choices use it to pick the stored
    /// maximizer action. It may be empty.
    fn improve_max(
        &self,
        x2: usize,
        j1: &[f64],
        min_policy: &[Self::MinAction],
    ) -> (Self::MaxValue, Self::MaxAction);

    /// Pointwise maximum of two entries.
    fn upper_envelope(&self, a: &Self::MaxValue, b: &Self::MaxValue) -> Self::MaxValue;

    /// `sup (a - b)` over everything an entry ranges over (unweighted).
    fn sup_difference(&self, a: &Self::MaxValue, b: &Self::MaxValue) -> Result<f64>;

    /// `sup |a - b|` (unweighted).
    fn max_value_distance(&self, a: &Self::MaxValue, b: &Self::MaxValue) -> Result<f64> {
        Ok(self.sup_difference(a, b)?.max(self.sup_difference(b, a)?))
    }

    /// How far an evaluated entry `j` is from the improved entry `v`, for the
    /// asynchronous stopping rule. Defaults to `sup |j - v|`.
    fn evaluation_gap(&self, j: &Self::MaxValue, v: &Self::MaxValue) -> Result<f64> {
        self.max_value_distance(j, v)
    }

    /// Random entry for diagnostics; `scale` bounds its magnitude.
    fn sample_max_value(&self, x2: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self::MaxValue;
    fn sample_min_action(&self, x1: usize, rng: &mut ChaCha8Rng) -> Self::MinAction;
    fn sample_max_action(&self, x2: usize, rng: &mut ChaCha8Rng) -> Self::MaxAction;
}

/// Policies for both players.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPair<U, V> {
    pub mu: Vec<U>,
    pub nu: Vec<V>,
}

impl<U: PolicyKey, V: PolicyKey> PolicyPair<U, V> {
    /// Exact comparison key of the whole pair.
    pub fn signature(&self) -> Vec<i64> {
        let mut key = Vec::new();
        for u in &self.mu {
            key.extend(u.key());
            key.push(i64::MIN);
        }
        for v in &self.nu {
            key.extend(v.key());
            key.push(i64::MIN);
        }
        key
    }
}

pub type PairOf<P> = PolicyPair<<P as MinimaxProblem>::MinAction, <P as MinimaxProblem>::MaxAction>;

/// The pair of first actions at every state.
pub fn first_policies<P: MinimaxProblem>(p: &P) -> PairOf<P> {
    PolicyPair {
        mu: (0..p.space1().len()).map(|x| p.first_min_action(x)).collect(),
        nu: (0..p.space2().len()).map(|x| p.first_max_action(x)).collect(),
    }
}

pub fn zero_tables<P: MinimaxProblem>(p: &P) -> (ValueTable, Vec<P::MaxValue>) {
    (vec![0.0; p.space1().len()], (0..p.space2().len()).map(|x| p.zero_max_value(x)).collect())
}

/// Weighted sup-distance between two `X2` tables.
pub fn distance2<P: MinimaxProblem>(p: &P, a: &[P::MaxValue], b: &[P::MaxValue]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for (x, (ea, eb)) in a.iter().zip(b).enumerate() {
        d = d.max(p.max_value_distance(ea, eb)? / p.space2().weight(x));
    }
    Ok(d)
}

/// `(T_{1,mu} J2)(x1) = H1(x1, mu(x1), J2)`.
pub fn apply_t1_mu<P: MinimaxProblem>(p: &P, mu: &[P::MinAction], j2: &[P::MaxValue]) -> ValueTable {
    (0..p.space1().len()).map(|x| p.eval_min(x, &mu[x], j2)).collect()
}

/// `(T_{2,nu} J1)(x2) = H2(x2, nu(x2), J1)`.
pub fn apply_t2_nu<P: MinimaxProblem>(p: &P, nu: &[P::MaxAction], j1: &[f64]) -> Vec<P::MaxValue> {
    (0..p.space2().len()).map(|x| p.eval_max(x, &nu[x], j1)).collect()
}

/// `T1 J2` with the attaining minimizer policy.
pub fn apply_t1<P: MinimaxProblem>(p: &P, j2: &[P::MaxValue]) -> Result<(ValueTable, Vec<P::MinAction>)> {
    let mut values = Vec::with_capacity(p.space1().len());
    let mut policy = Vec::with_capacity(p.space1().len());
    for x in 0..p.space1().len() {
        let (v, u) = p.improve_min(x, j2)?;
        values.push(v);
        policy.push(u);
    }
    Ok((values, policy))
}

/// `T2 J1` with the attaining maximizer policy.
pub fn apply_t2<P: MinimaxProblem>(
    p: &P,
    j1: &[f64],
    min_policy: &[P::MinAction],
) -> (Vec<P::MaxValue>, Vec<P::MaxAction>) {
    (0..p.space2().len()).map(|x| p.improve_max(x, j1, min_policy)).unzip()
}

/// Components `(||J1 - T1 J2||_1, ||J2 - T2 J1||_2)` of the Bellman residual.
pub fn residual_parts<P: MinimaxProblem>(p: &P, j1: &[f64], j2: &[P::MaxValue]) -> Result<(f64, f64)> {
    let (t1, mu) = apply_t1(p, j2)?;
    let (t2, _) = apply_t2(p, j1, &mu);
    Ok((p.space1().distance(j1, &t1), distance2(p, j2, &t2)?))
}

/// `||(J1, J2) - (T1 J2, T2 J1)||` in the product norm.
pub fn bellman_residual<P: MinimaxProblem>(p: &P, j1: &[f64], j2: &[P::MaxValue]) -> Result<f64> {
    let (r1, r2) = residual_parts(p, j1, j2)?;
    Ok(r1.max(r2))
}

/// Result of [`value_iterate`].
#[derive(Debug, Clone)]
pub struct ValueIterationOutcome<V> {
    pub j1: ValueTable,
    pub j2: Vec<V>,
    pub iterations: usize,
    /// Product-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
}

/// Jacobi value iteration `(J1, J2) <- (T1 J2, T2 J1)` until the product-norm
/// change of a sweep is at most `tol`.
pub fn value_iterate<P: MinimaxProblem>(
    p: &P,
    j1_0: ValueTable,
    j2_0: Vec<P::MaxValue>,
    tol: f64,
    max_iters: usize,
) -> Result<ValueIterationOutcome<P::MaxValue>> {
    if !(tol > 0.0) {
        return Err(SolverError::InvalidInput("tolerance must be positive".into()));
    }
    let (mut j1, mut j2) = (j1_0, j2_0);
    let mut residuals = Vec::new();
    for k in 1..=max_iters {
        let (n1, mu) = apply_t1(p, &j2)?;
        let (n2, _) = apply_t2(p, &j1, &mu);
        let change = p.space1().distance(&j1, &n1).max(distance2(p, &j2, &n2)?);
        residuals.push(change);
        j1 = n1;
        j2 = n2;
        if change <= tol {
            return Ok(ValueIterationOutcome { j1, j2, iterations: k, residuals });
        }
    }
    Err(SolverError::MaxItersExceeded {
        iterations: max_iters,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Fixed point of `T_{mu,nu}` by iteration from `(j1, j2)`.
pub fn evaluate_pair<P: MinimaxProblem>(
    p: &P,
    pair: &PairOf<P>,
    j1: ValueTable,
    j2: Vec<P::MaxValue>,
    tol: f64,
    max_iters: usize,
) -> Result<(ValueTable, Vec<P::MaxValue>, usize)> {
    let (mut j1, mut j2) = (j1, j2);
    for k in 1..=max_iters {
        let n1 = apply_t1_mu(p, &pair.mu, &j2);
        let n2 = apply_t2_nu(p, &pair.nu, &j1);
        let change = p.space1().distance(&j1, &n1).max(distance2(p, &j2, &n2)?);
        j1 = n1;
        j2 = n2;
        if change <= tol {
            return Ok((j1, j2, k));
        }
    }
    Err(SolverError::MaxItersExceeded { iterations: max_iters, residual: f64::NAN })
}

fn sample_tables<P: MinimaxProblem>(p: &P, scale: f64, rng: &mut ChaCha8Rng) -> (ValueTable, Vec<P::MaxValue>) {
    let j1 = (0..p.space1().len())
        .map(|x| rng.gen_range(-scale..scale) * p.space1().weight(x))
        .collect();
    let j2 = (0..p.space2().len()).map(|x| p.sample_max_value(x, scale, rng)).collect();
    (j1, j2)
}

fn sample_pair<P: MinimaxProblem>(p: &P, rng: &mut ChaCha8Rng) -> PairOf<P> {
    PolicyPair {
        mu: (0..p.space1().len()).map(|x| p.sample_min_action(x, rng)).collect(),
        nu: (0..p.space2().len()).map(|x| p.sample_max_action(x, rng)).collect(),
    }
}

/// Largest observed `||T_{mu,nu} a - T_{mu,nu} b|| / ||a - b||` over random
/// table pairs and random policy pairs.
pub fn estimate_modulus<P: MinimaxProblem>(p: &P, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(SolverError::InvalidInput("samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    for _ in 0..samples {
        let pair = sample_pair(p, &mut rng);
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let (a1, a2) = sample_tables(p, scale, &mut rng);
        let (b1, b2) = sample_tables(p, scale, &mut rng);
        let dist = p.space1().distance(&a1, &b1).max(distance2(p, &a2, &b2)?);
        if dist == 0.0 {
            continue;
        }
        let (ta1, ta2) = (apply_t1_mu(p, &pair.mu, &a2), apply_t2_nu(p, &pair.nu, &a1));
        let (tb1, tb2) = (apply_t1_mu(p, &pair.mu, &b2), apply_t2_nu(p, &pair.nu, &b1));
        let image = p.space1().distance(&ta1, &tb1).max(distance2(p, &ta2, &tb2)?);
        let ratio = image / dist;
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(SolverError::DegeneratePair)
}

/// A pair `J <= J'` and a policy under which an evaluator decreased.
#[derive(Debug, Clone)]
pub struct MonotoneViolation {
    /// `1` for the minimizer's evaluator, `2` for the maximizer's.
    pub side: u8,
    pub state: usize,
    /// Amount by which the image of the smaller table exceeded the other.
    pub excess: f64,
}

/// Checks `T_{1,mu} J2 <= T_{1,mu} J2'` and `T_{2,nu} J1 <= T_{2,nu} J1'` on
/// sampled `J <= J'` and sampled policies. Returns the first violation found.
pub fn check_monotone<P: MinimaxProblem>(p: &P, samples: usize, seed: u64) -> Result<Option<MonotoneViolation>> {
    if samples == 0 {
        return Err(SolverError::InvalidInput("samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const SLACK: f64 = 1e-10;
    for _ in 0..samples {
        let pair = sample_pair(p, &mut rng);
        let (j1, j2) = sample_tables(p, 10.0, &mut rng);
        let (d1, d2) = sample_tables(p, 10.0, &mut rng);
        let j1_hi: Vec<f64> = j1.iter().zip(&d1).map(|(a, d)| a + d.abs()).collect();
        let j2_hi: Vec<P::MaxValue> = j2.iter().zip(&d2).map(|(a, d)| p.upper_envelope(a, d)).collect();

        let lo1 = apply_t1_mu(p, &pair.mu, &j2);
        let hi1 = apply_t1_mu(p, &pair.mu, &j2_hi);
        for x in 0..lo1.len() {
            let excess = lo1[x] - hi1[x];
            if excess > SLACK * (1.0 + hi1[x].abs()) {
                return Ok(Some(MonotoneViolation { side: 1, state: x, excess }));
            }
        }
        let lo2 = apply_t2_nu(p, &pair.nu, &j1);
        let hi2 = apply_t2_nu(p, &pair.nu, &j1_hi);
        for x in 0..lo2.len() {
            let excess = p.sup_difference(&lo2[x], &hi2[x])?;
            if excess > SLACK {
                return Ok(Some(MonotoneViolation { side: 2, state: x, excess }));
            }
        }
    }
    Ok(None)
}

type Evaluator = dyn Fn(usize, usize, &[f64]) -> f64 + Send + Sync;

/// An explicit finite separated problem with evaluators given as closures.
///
/// Actions are indices `0..actions1[x1]` and `0..actions2[x2]`.
#[derive(Clone)]
pub struct SeparatedProblem {
    space1: WeightedSpace,
    space2: WeightedSpace,
    actions1: Vec<usize>,
    actions2: Vec<usize>,
    eval1: Arc<Evaluator>,
    eval2: Arc<Evaluator>,
    alpha: f64,
}

impl Debug for SeparatedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeparatedProblem")
            .field("space1", &self.space1)
            .field("space2", &self.space2)
            .field("actions1", &self.actions1)
            .field("actions2", &self.actions2)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl SeparatedProblem {
    /// `eval1(x1, u, J2)` implements `H1`; `eval2(x2, v, J1)` implements `H2`.
    pub fn new(
        space1: WeightedSpace,
        space2: WeightedSpace,
        actions1: Vec<usize>,
        actions2: Vec<usize>,
        eval1: impl Fn(usize, usize, &[f64]) -> f64 + Send + Sync + 'static,
        eval2: impl Fn(usize, usize, &[f64]) -> f64 + Send + Sync + 'static,
        alpha: f64,
    ) -> Result<Self> {
        if actions1.len() != space1.len() || actions2.len() != space2.len() {
            return Err(SolverError::InvalidInput("one action count per state is required".into()));
        }
        if let Some(x) = actions1.iter().position(|&c| c == 0) {
            return Err(SolverError::InvalidInput(format!("minimizer state {x} has no actions")));
        }
        if let Some(x) = actions2.iter().position(|&c| c == 0) {
            return Err(SolverError::InvalidInput(format!("maximizer state {x} has no actions")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(SolverError::InvalidInput(format!("modulus {alpha} outside [0, 1)")));
        }
        Ok(Self {
            space1,
            space2,
            actions1,
            actions2,
            eval1: Arc::new(eval1),
            eval2: Arc::new(eval2),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn actions1(&self) -> &[usize] {
        &self.actions1
    }

    pub fn actions2(&self) -> &[usize] {
        &self.actions2
    }

    pub fn h1(&self, x1: usize, u: usize, j2: &[f64]) -> f64 {
        (self.eval1)(x1, u, j2)
    }

    pub fn h2(&self, x2: usize, v: usize, j1: &[f64]) -> f64 {
        (self.eval2)(x2, v, j1)
    }
}

impl MinimaxProblem for SeparatedProblem {
    type MinAction = usize;
    type MaxAction = usize;
    type MaxValue = f64;

    fn space1(&self) -> &WeightedSpace {
        &self.space1
    }

    fn space2(&self) -> &WeightedSpace {
        &self.space2
    }

    fn modulus(&self) -> f64 {
        self.alpha
    }

    fn first_min_action(&self, _x1: usize) -> usize {
        0
    }

    fn first_max_action(&self, _x2: usize) -> usize {
        0
    }

    fn zero_max_value(&self, _x2: usize) -> f64 {
        0.0
    }

    fn eval_min(&self, x1: usize, u: &usize, j2: &[f64]) -> f64 {
        self.h1(x1, *u, j2)
    }

    fn improve_min(&self, x1: usize, j2: &[f64]) -> Result<(f64, usize)> {
        let values: Vec<f64> = (0..self.actions1[x1]).map(|u| self.h1(x1, u, j2)).collect();
        Ok(argmin(&values))
    }

    fn eval_max(&self, x2: usize, v: &usize, j1: &[f64]) -> f64 {
        self.h2(x2, *v, j1)
    }

    fn improve_max(&self, x2: usize, j1: &[f64], _min_policy: &[usize]) -> (f64, usize) {
        let values: Vec<f64> = (0..self.actions2[x2]).map(|v| self.h2(x2, v, j1)).collect();
        argmax(&values)
    }

    fn upper_envelope(&self, a: &f64, b: &f64) -> f64 {
        a.max(*b)
    }

    fn sup_difference(&self, a: &f64, b: &f64) -> Result<f64> {
        Ok(a - b)
    }

    fn max_value_distance(&self, a: &f64, b: &f64) -> Result<f64> {
        Ok((a - b).abs())
    }

    fn sample_max_value(&self, x2: usize, scale: f64, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-scale..scale) * self.space2.weight(x2)
    }

    fn sample_min_action(&self, x1: usize, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..self.actions1[x1])
    }

    fn sample_max_action(&self, x2: usize, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..self.actions2[x2])
    }
}
