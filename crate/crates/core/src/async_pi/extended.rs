//! The extended operator `G_{mu,nu}` on `(V1, V2, Q1, Q2)` for problems with
//! finite action sets, and the checks behind the convergence argument.
//!
//! ```text
//! M1(x1)    = min_u H1(x1, u, max[V2, Q2^])      Q2^(x2) = Q2(x2, nu(x2))
//! M2(x2)    = max_v H2(x2, v, min[V1, Q1^])      Q1^(x1) = Q1(x1, mu(x1))
//! F1(x1, u) = H1(x1, u, max[V2, Q2^])
//! F2(x2, v) = H2(x2, v, min[V1, Q1^])
//! G(V1, V2, Q1, Q2) = (M1, M2, F1, F2)
//! ```
//!
//! `G` contracts with the problem's modulus for every policy pair, and its
//! fixed point does not depend on the pair. The four asynchronous operations
//! are a reduced form of componentwise `G` updates with `J1 = Q1^`,
//! `J2 = Q2^`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::{OpKind, Operation};
use crate::error::{Result, SolverError};
use crate::framework::{MinimaxProblem, SeparatedProblem, WeightedSpace};
use crate::matrix_game::{argmax, argmin};

#[derive(Debug, Clone, PartialEq)]
pub struct QFactorState {
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// `q1[x1][u]`.
    pub q1: Vec<Vec<f64>>,
    /// `q2[x2][v]`.
    pub q2: Vec<Vec<f64>>,
}

impl QFactorState {
    pub fn zeros(p: &SeparatedProblem) -> Self {
        Self {
            v1: vec![0.0; p.space1().len()],
            v2: vec![0.0; p.space2().len()],
            q1: p.actions1().iter().map(|&c| vec![0.0; c]).collect(),
            q2: p.actions2().iter().map(|&c| vec![0.0; c]).collect(),
        }
    }

    /// `Q1^` under `mu`.
    pub fn q1_hat(&self, mu: &[usize]) -> Vec<f64> {
        self.q1.iter().zip(mu).map(|(row, &u)| row[u]).collect()
    }

    /// `Q2^` under `nu`.
    pub fn q2_hat(&self, nu: &[usize]) -> Vec<f64> {
        self.q2.iter().zip(nu).map(|(row, &v)| row[v]).collect()
    }

    fn upper2(&self, nu: &[usize]) -> Vec<f64> {
        self.v2.iter().zip(self.q2_hat(nu)).map(|(v, q)| v.max(q)).collect()
    }

    fn lower1(&self, mu: &[usize]) -> Vec<f64> {
        self.v1.iter().zip(self.q1_hat(mu)).map(|(v, q)| v.min(q)).collect()
    }

    /// `max{||V1||, ||V2||, ||Q1||, ||Q2||}` of `self - other`.
    pub fn distance(&self, other: &Self, space1: &WeightedSpace, space2: &WeightedSpace) -> f64 {
        let q_dist = |a: &[Vec<f64>], b: &[Vec<f64>], space: &WeightedSpace| {
            a.iter()
                .zip(b)
                .enumerate()
                .flat_map(|(x, (ra, rb))| ra.iter().zip(rb).map(move |(p, q)| (p - q).abs() / space.weight(x)))
                .fold(0.0, f64::max)
        };
        space1
            .distance(&self.v1, &other.v1)
            .max(space2.distance(&self.v2, &other.v2))
            .max(q_dist(&self.q1, &other.q1, space1))
            .max(q_dist(&self.q2, &other.q2, space2))
    }
}

/// `G_{mu,nu}(state)`.
pub fn apply_g(p: &SeparatedProblem, mu: &[usize], nu: &[usize], state: &QFactorState) -> QFactorState {
    let e2 = state.upper2(nu);
    let e1 = state.lower1(mu);
    let q1: Vec<Vec<f64>> =
        (0..p.space1().len()).map(|x| (0..p.actions1()[x]).map(|u| p.h1(x, u, &e2)).collect()).collect();
    let q2: Vec<Vec<f64>> =
        (0..p.space2().len()).map(|x| (0..p.actions2()[x]).map(|v| p.h2(x, v, &e1)).collect()).collect();
    QFactorState {
        v1: q1.iter().map(|row| argmin(row).0).collect(),
        v2: q2.iter().map(|row| argmax(row).0).collect(),
        q1,
        q2,
    }
}

/// The fixed point of `G_{mu,nu}` by repeated application from zero.
pub fn solve_g(p: &SeparatedProblem, mu: &[usize], nu: &[usize], tol: f64, max_iters: usize) -> Result<QFactorState> {
    let mut state = QFactorState::zeros(p);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = apply_g(p, mu, nu, &state);
        residual = next.distance(&state, p.space1(), p.space2());
        state = next;
        if residual <= tol {
            return Ok(state);
        }
    }
    Err(SolverError::MaxItersExceeded { iterations: max_iters, residual })
}

fn random_policies(counts: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    counts.iter().map(|&c| rng.gen_range(0..c)).collect()
}

fn random_qstate(p: &SeparatedProblem, scale: f64, rng: &mut ChaCha8Rng) -> QFactorState {
    let (s1, s2) = (p.space1(), p.space2());
    let mut draw = |w: f64| rng.gen_range(-scale..scale) * w;
    QFactorState {
        v1: (0..s1.len()).map(|x| draw(s1.weight(x))).collect(),
        v2: (0..s2.len()).map(|x| draw(s2.weight(x))).collect(),
        q1: (0..s1.len()).map(|x| (0..p.actions1()[x]).map(|_| draw(s1.weight(x))).collect()).collect(),
        q2: (0..s2.len()).map(|x| (0..p.actions2()[x]).map(|_| draw(s2.weight(x))).collect()).collect(),
    }
}

/// Largest observed `||G a - G b|| / ||a - b||` over `samples` random pairs
/// and random policy pairs. Fails if a ratio exceeds the modulus by more
/// than `1e-10`, or if the fixed points under five random policy pairs differ
/// by more than `1e-8`.
pub fn verify_uniform_contraction(p: &SeparatedProblem, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(SolverError::InvalidInput("at least one sample is required".into()));
    }
    let modulus = p.modulus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let mu = random_policies(p.actions1(), &mut rng);
        let nu = random_policies(p.actions2(), &mut rng);
        let scale = [1.0, 10.0, 1e3][k % 3];
        let a = random_qstate(p, scale, &mut rng);
        // Half the pairs are small perturbations, where kinks of max/min matter.
        let b = if k % 2 == 0 { random_qstate(p, scale, &mut rng) } else { perturb(&a, 1e-3 * scale, &mut rng) };
        let d = a.distance(&b, p.space1(), p.space2());
        if d == 0.0 {
            continue;
        }
        let ratio = apply_g(p, &mu, &nu, &a).distance(&apply_g(p, &mu, &nu, &b), p.space1(), p.space2()) / d;
        if ratio > modulus + 1e-10 {
            return Err(SolverError::ContractionViolation { ratio, modulus });
        }
        worst = worst.max(ratio);
    }

    let tol = 1e-11 * (1.0 - modulus);
    let max_iters = 1_000_000;
    let reference = solve_g(p, &vec![0; p.space1().len()], &vec![0; p.space2().len()], tol, max_iters)?;
    for _ in 0..5 {
        let mu = random_policies(p.actions1(), &mut rng);
        let nu = random_policies(p.actions2(), &mut rng);
        let fixed = solve_g(p, &mu, &nu, tol, max_iters)?;
        let gap = fixed.distance(&reference, p.space1(), p.space2());
        if gap > 1e-8 {
            return Err(SolverError::PolicyDependentFixedPoint { gap });
        }
    }
    Ok(worst)
}

fn perturb(a: &QFactorState, eps: f64, rng: &mut ChaCha8Rng) -> QFactorState {
    let mut b = a.clone();
    let rows = b.q1.iter_mut().chain(b.q2.iter_mut()).flat_map(|r| r.iter_mut());
    for v in b.v1.iter_mut().chain(b.v2.iter_mut()).chain(rows) {
        *v += rng.gen_range(-eps..eps);
    }
    b
}

/// The extended algorithm's iterate: `G`-components plus the policy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub q: QFactorState,
    pub mu: Vec<usize>,
    pub nu: Vec<usize>,
}

impl ExtendedState {
    pub fn initial(p: &SeparatedProblem) -> Self {
        Self { q: QFactorState::zeros(p), mu: vec![0; p.space1().len()], nu: vec![0; p.space2().len()] }
    }
}

/// One componentwise update of `G_{mu,nu}` on the subset of `op`:
/// an evaluation sets the `F` rows, an improvement sets the `M` and `F`
/// components and moves the policy to an attaining action.
pub fn extended_step(p: &SeparatedProblem, state: &mut ExtendedState, op: &Operation) -> Result<()> {
    let len = if op.kind.is_min() { p.space1().len() } else { p.space2().len() };
    if op.subset.states.is_empty() || op.subset.states.iter().any(|&x| x >= len) {
        return Err(SolverError::InvalidInput(format!("{} on an invalid subset", op.kind)));
    }
    let g = apply_g(p, &state.mu, &state.nu, &state.q);
    for &x in op.subset.states.iter() {
        match op.kind {
            OpKind::MinEval => state.q.q1[x] = g.q1[x].clone(),
            OpKind::MinImprove => {
                state.q.q1[x] = g.q1[x].clone();
                state.q.v1[x] = g.v1[x];
                state.mu[x] = argmin(&g.q1[x]).1;
            }
            OpKind::MaxEval => state.q.q2[x] = g.q2[x].clone(),
            OpKind::MaxImprove => {
                state.q.q2[x] = g.q2[x].clone();
                state.q.v2[x] = g.v2[x];
                state.nu[x] = argmax(&g.q2[x]).1;
            }
        }
    }
    Ok(())
}

/// A counterexample to the `min`/`max` nonexpansiveness bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct NonexpansiveViolation {
    /// `"min"` or `"max"`.
    pub side: &'static str,
    pub weights: Vec<f64>,
    pub v: Vec<f64>,
    pub j: Vec<f64>,
    pub v_prime: Vec<f64>,
    pub j_prime: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

/// Checks `||min[V,J] - min[V',J']|| <= max{||V-V'||, ||J-J'||}` and the same
/// with `max` on random weighted quadruples. Returns the first violation.
pub fn check_minmax_nonexpansive(samples: usize, seed: u64) -> Option<NonexpansiveViolation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let n = rng.gen_range(1..=8);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let space = WeightedSpace::new(weights.clone()).expect("positive weights");
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect() };
        let (v, j, vp, jp) = (draw(), draw(), draw(), draw());
        let right = space.distance(&v, &vp).max(space.distance(&j, &jp));
        for (side, f) in [("min", f64::min as fn(f64, f64) -> f64), ("max", f64::max)] {
            let a: Vec<f64> = v.iter().zip(&j).map(|(x, y)| f(*x, *y)).collect();
            let b: Vec<f64> = vp.iter().zip(&jp).map(|(x, y)| f(*x, *y)).collect();
            let left = space.distance(&a, &b);
            if left > right {
                return Some(NonexpansiveViolation {
                    side,
                    weights,
                    v,
                    j,
                    v_prime: vp,
                    j_prime: jp,
                    left,
                    right,
                });
            }
        }
    }
    None
}
