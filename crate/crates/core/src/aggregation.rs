//! Aggregation with representative states: a reduced separated problem over
//! chosen subsets of `X1` and `X2`, whose evaluators read the other player's
//! table through interpolation with aggregation probabilities `phi`.
//!
//! ```text
//! H~1(r1, u, J~2) = H1(r1, u, Phi2 J~2)      (Phi2 J~2)(x2) = sum_r phi2[x2][r] J~2(r)
//! H~2(r2, v, J~1) = H2(r2, v, Phi1 J~1)
//! ```

use std::sync::Arc;

use crate::async_pi::{run, AlgoState, RunOptions, RunStatus, Schedule};
use crate::error::{Result, SolverError};
use crate::framework::{evaluate_pair, product_norm, MinimaxProblem, PolicyPair, SeparatedProblem, WeightedSpace};
use crate::matrix_game::{argmax, argmin};

/// Representative states of each space, as indices into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepresentativeSets {
    reps1: Vec<usize>,
    reps2: Vec<usize>,
}

impl RepresentativeSets {
    pub fn new(reps1: Vec<usize>, reps2: Vec<usize>) -> Result<Self> {
        for (name, reps) in [("first", &reps1), ("second", &reps2)] {
            if reps.is_empty() {
                return Err(SolverError::InvalidInput(format!("{name} representative set is empty")));
            }
            let mut sorted = reps.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != reps.len() {
                return Err(SolverError::InvalidInput(format!("{name} representative set repeats a state")));
            }
        }
        Ok(Self { reps1, reps2 })
    }

    /// Every state is its own representative.
    pub fn full(n1: usize, n2: usize) -> Self {
        Self { reps1: (0..n1).collect(), reps2: (0..n2).collect() }
    }

    pub fn reps1(&self) -> &[usize] {
        &self.reps1
    }

    pub fn reps2(&self) -> &[usize] {
        &self.reps2
    }
}

/// One row of weights over the representatives per state; `None` marks a
/// state with no row, allowed only if no representative's evaluator reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationProbabilities {
    phi1: Vec<Option<Vec<f64>>>,
    phi2: Vec<Option<Vec<f64>>>,
}

fn check_rows(rows: &[Option<Vec<f64>>], width: usize, space: usize) -> Result<()> {
    for (x, row) in rows.iter().enumerate() {
        let Some(row) = row else { continue };
        if row.len() != width {
            return Err(SolverError::InvalidInput(format!(
                "phi{space} row {x} has {} entries for {width} representatives",
                row.len()
            )));
        }
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(SolverError::InvalidInput(format!("phi{space} row {x} has a negative entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(SolverError::InvalidInput(format!("phi{space} row {x} sums to {sum}")));
        }
    }
    Ok(())
}

fn nearest_rows(len: usize, reps: &[usize]) -> Vec<Option<Vec<f64>>> {
    (0..len)
        .map(|x| {
            // Ties go to the lower state index.
            let (k, _) = reps
                .iter()
                .enumerate()
                .min_by_key(|(_, &r)| (r.abs_diff(x), r))
                .expect("nonempty representatives");
            let mut row = vec![0.0; reps.len()];
            row[k] = 1.0;
            Some(row)
        })
        .collect()
}

impl AggregationProbabilities {
    pub fn new(phi1: Vec<Option<Vec<f64>>>, phi2: Vec<Option<Vec<f64>>>, reps: &RepresentativeSets) -> Result<Self> {
        check_rows(&phi1, reps.reps1.len(), 1)?;
        check_rows(&phi2, reps.reps2.len(), 2)?;
        Ok(Self { phi1, phi2 })
    }

    /// Point masses on the representative nearest in state index.
    pub fn nearest(n1: usize, n2: usize, reps: &RepresentativeSets) -> Self {
        Self { phi1: nearest_rows(n1, &reps.reps1), phi2: nearest_rows(n2, &reps.reps2) }
    }

    /// Identity rows when the representatives are the full spaces.
    pub fn identity(n1: usize, n2: usize) -> Self {
        let eye = |n: usize| (0..n).map(|x| Some((0..n).map(|y| if x == y { 1.0 } else { 0.0 }).collect())).collect();
        Self { phi1: eye(n1), phi2: eye(n2) }
    }

    pub fn phi1(&self) -> &[Option<Vec<f64>>] {
        &self.phi1
    }

    pub fn phi2(&self) -> &[Option<Vec<f64>>] {
        &self.phi2
    }
}

/// `sum_r phi[x][r] j_tilde[r]` per state; rowless states get 0.
pub fn interpolate(j_tilde: &[f64], phi: &[Option<Vec<f64>>]) -> Vec<f64> {
    phi.iter()
        .map(|row| match row {
            Some(row) => row.iter().zip(j_tilde).map(|(p, j)| p * j).sum(),
            None => 0.0,
        })
        .collect()
}

/// Bound on `||Phi J~|| / ||J~||` in the weighted norms.
fn interpolation_gain(phi: &[Option<Vec<f64>>], reps: &[usize], space: &WeightedSpace) -> f64 {
    phi.iter()
        .enumerate()
        .filter_map(|(x, row)| {
            row.as_ref().map(|row| {
                row.iter().zip(reps).map(|(p, &r)| p * space.weight(r)).sum::<f64>() / space.weight(x)
            })
        })
        .fold(0.0, f64::max)
}

/// Whether `h(table)` reads entry `x` of a table of length `len`.
fn reads_entry(len: usize, x: usize, h: impl Fn(&[f64]) -> f64) -> bool {
    let base = h(&vec![0.0; len]);
    [1.0, -1.0, 1e3].iter().any(|&s| {
        let mut probe = vec![0.0; len];
        probe[x] = s;
        h(&probe) != base
    })
}

/// The aggregate problem over `(reps1, reps2)`. Rowless states are probed:
/// if a representative's evaluator depends on one, this fails with
/// `MissingAggregationRow`. The modulus is the parent's times the
/// interpolation gain, which is 1 under uniform weights.
pub fn build_aggregate(
    p: &SeparatedProblem,
    reps: &RepresentativeSets,
    phi: &AggregationProbabilities,
) -> Result<SeparatedProblem> {
    let (n1, n2) = (p.space1().len(), p.space2().len());
    if phi.phi1.len() != n1 || phi.phi2.len() != n2 {
        return Err(SolverError::InvalidInput("one phi row per state is required".into()));
    }
    if let Some(&x) = reps.reps1.iter().find(|&&x| x >= n1) {
        return Err(SolverError::InvalidInput(format!("representative {x} outside the first space")));
    }
    if let Some(&x) = reps.reps2.iter().find(|&&x| x >= n2) {
        return Err(SolverError::InvalidInput(format!("representative {x} outside the second space")));
    }
    for x2 in (0..n2).filter(|&x| phi.phi2[x].is_none()) {
        for &r in &reps.reps1 {
            if (0..p.actions1()[r]).any(|u| reads_entry(n2, x2, |j| p.h1(r, u, j))) {
                return Err(SolverError::MissingAggregationRow { space: 2, state: x2 });
            }
        }
    }
    for x1 in (0..n1).filter(|&x| phi.phi1[x].is_none()) {
        for &r in &reps.reps2 {
            if (0..p.actions2()[r]).any(|v| reads_entry(n1, x1, |j| p.h2(r, v, j))) {
                return Err(SolverError::MissingAggregationRow { space: 1, state: x1 });
            }
        }
    }

    let gain = interpolation_gain(&phi.phi1, &reps.reps1, p.space1())
        .max(interpolation_gain(&phi.phi2, &reps.reps2, p.space2()));
    let alpha = p.alpha() * gain;
    if alpha >= 1.0 {
        return Err(SolverError::NonContractive { modulus: alpha });
    }
    let space1 = p.space1().restrict(&reps.reps1)?;
    let space2 = p.space2().restrict(&reps.reps2)?;
    let actions1 = reps.reps1.iter().map(|&x| p.actions1()[x]).collect();
    let actions2 = reps.reps2.iter().map(|&x| p.actions2()[x]).collect();

    let (parent1, parent2) = (Arc::new(p.clone()), Arc::new(p.clone()));
    let (reps1, reps2) = (reps.reps1.clone(), reps.reps2.clone());
    let (phi1, phi2) = (phi.phi1.clone(), phi.phi2.clone());
    SeparatedProblem::new(
        space1,
        space2,
        actions1,
        actions2,
        move |k, u, j2| parent1.h1(reps1[k], u, &interpolate(j2, &phi2)),
        move |k, v, j1| parent2.h2(reps2[k], v, &interpolate(j1, &phi1)),
        alpha,
    )
}

/// One-step lookahead against full-space tables: `argmin_u H1(x1, u, J2)`
/// and `argmax_v H2(x2, v, J1)`, lowest index on ties.
pub fn lookahead_policies(p: &SeparatedProblem, j1: &[f64], j2: &[f64]) -> PolicyPair<usize, usize> {
    let mu = (0..p.space1().len())
        .map(|x| argmin(&(0..p.actions1()[x]).map(|u| p.h1(x, u, j2)).collect::<Vec<_>>()).1)
        .collect();
    let nu = (0..p.space2().len())
        .map(|x| argmax(&(0..p.actions2()[x]).map(|v| p.h2(x, v, j1)).collect::<Vec<_>>()).1)
        .collect();
    PolicyPair { mu, nu }
}

#[derive(Debug, Clone)]
pub struct AggregateSolution {
    /// Values at the representatives.
    pub j1_tilde: Vec<f64>,
    pub j2_tilde: Vec<f64>,
    /// Interpolated values over the full spaces.
    pub j1: Vec<f64>,
    pub j2: Vec<f64>,
    pub policies: PolicyPair<usize, usize>,
    /// Exact values of `policies` in the parent problem.
    pub policy_j1: Vec<f64>,
    pub policy_j2: Vec<f64>,
    pub steps: usize,
    pub status: RunStatus,
}

impl AggregateSolution {
    /// Distance between the lookahead pair's values and `(j1_star, j2_star)`.
    pub fn gap(&self, p: &SeparatedProblem, j1_star: &[f64], j2_star: &[f64]) -> f64 {
        let d1: Vec<f64> = self.policy_j1.iter().zip(j1_star).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = self.policy_j2.iter().zip(j2_star).map(|(a, b)| a - b).collect();
        product_norm(p.space1(), &d1, p.space2(), &d2)
    }
}

/// Builds the aggregate problem, solves it with the asynchronous algorithm,
/// interpolates, and evaluates the lookahead policy pair exactly.
pub fn solve_aggregate(
    p: &SeparatedProblem,
    reps: &RepresentativeSets,
    phi: &AggregationProbabilities,
    schedule: &mut dyn Schedule,
    opts: &RunOptions,
) -> Result<AggregateSolution> {
    let agg = build_aggregate(p, reps, phi)?;
    let out = run(&agg, schedule, AlgoState::initial(&agg), opts)?;
    let j1 = interpolate(&out.state.j1, &phi.phi1);
    let j2 = interpolate(&out.state.j2, &phi.phi2);
    let policies = lookahead_policies(p, &j1, &j2);
    let eval_tol = opts.tol * 1e-2 * (1.0 - p.alpha());
    let (policy_j1, policy_j2, _) =
        evaluate_pair(p, &policies, vec![0.0; j1.len()], vec![0.0; j2.len()], eval_tol, 10_000_000)?;
    Ok(AggregateSolution {
        j1_tilde: out.state.j1,
        j2_tilde: out.state.j2,
        j1,
        j2,
        policies,
        policy_j1,
        policy_j2,
        steps: out.steps,
        status: out.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::async_pi::extended::verify_uniform_contraction;
    use crate::async_pi::schedule::Cyclic;
    use crate::framework::value_iterate;
    use crate::models::random_separated_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Option<Vec<f64>>> {
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = raw.iter().sum();
                Some(raw.iter().map(|v| v / s).collect())
            })
            .collect()
    }

    #[test]
    fn interpolation_examples() {
        let id = AggregationProbabilities::identity(3, 1);
        assert_eq!(interpolate(&[1.0, 2.0, 3.0], id.phi1()), vec![1.0, 2.0, 3.0]);
        let uniform = vec![Some(vec![0.5, 0.5]); 4];
        assert_eq!(interpolate(&[2.0, 4.0], &uniform), vec![3.0; 4]);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_rows(&mut rng, 7, 3);
        let j = [0.3, -1.2, 5.0];
        let out = interpolate(&j, &phi);
        for x in 0..7 {
            let mut acc = 0.0;
            for r in 0..3 {
                acc += phi[x].as_ref().unwrap()[r] * j[r];
            }
            assert_eq!(out[x], acc);
        }
    }

    #[test]
    fn interpolation_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let k = rng.gen_range(1..5);
            let phi = random_rows(&mut rng, 6, k);
            let a: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let lhs = WeightedSpace::uniform(6).distance(&interpolate(&a, &phi), &interpolate(&b, &phi));
            let rhs = WeightedSpace::uniform(k).distance(&a, &b);
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn nearest_defaults_break_ties_low() {
        let reps = RepresentativeSets::new(vec![1, 3], vec![0]).unwrap();
        let phi = AggregationProbabilities::nearest(5, 2, &reps);
        let picks: Vec<usize> = phi.phi1().iter().map(|r| r.as_ref().unwrap().iter().position(|p| *p == 1.0).unwrap()).collect();
        assert_eq!(picks, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn rejects_bad_rows() {
        let reps = RepresentativeSets::new(vec![0], vec![0]).unwrap();
        assert!(AggregationProbabilities::new(vec![Some(vec![0.9])], vec![Some(vec![1.0])], &reps).is_err());
        assert!(RepresentativeSets::new(vec![], vec![0]).is_err());
        assert!(RepresentativeSets::new(vec![1, 1], vec![0]).is_err());
    }

    #[test]
    fn identity_aggregation_is_exact() {
        let p = random_separated_model(5, 4, 3, 0.9, 3).unwrap().to_problem();
        let vi = value_iterate(&p, vec![0.0; 5], vec![0.0; 4], 1e-12, 100_000).unwrap();
        let reps = RepresentativeSets::full(5, 4);
        let mut rr = Cyclic::round_robin(5, 4, 10).unwrap();
        let sol = solve_aggregate(&p, &reps, &AggregationProbabilities::identity(5, 4), &mut rr, &RunOptions::new(1e-10, 1_000_000))
            .unwrap();
        assert_eq!(sol.status, RunStatus::Converged);
        for x in 0..5 {
            assert!((sol.j1[x] - vi.j1[x]).abs() < 1e-8);
            assert!((sol.policy_j1[x] - vi.j1[x]).abs() < 1e-8);
        }
        assert!(sol.gap(&p, &vi.j1, &vi.j2) < 1e-8);
    }

    #[test]
    fn single_representative_matches_scalar_iteration() {
        let p = random_separated_model(4, 3, 2, 0.8, 5).unwrap().to_problem();
        let reps = RepresentativeSets::new(vec![2], vec![1]).unwrap();
        let phi = AggregationProbabilities::nearest(4, 3, &reps);
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for _ in 0..500 {
            let na = (0..p.actions1()[2]).map(|u| p.h1(2, u, &[b; 3])).fold(f64::INFINITY, f64::min);
            let nb = (0..p.actions2()[1]).map(|v| p.h2(1, v, &[a; 4])).fold(f64::NEG_INFINITY, f64::max);
            a = na;
            b = nb;
        }
        let mut rr = Cyclic::round_robin(1, 1, 10).unwrap();
        let sol = solve_aggregate(&p, &reps, &phi, &mut rr, &RunOptions::new(1e-11, 100_000)).unwrap();
        assert!((sol.j1_tilde[0] - a).abs() < 1e-9);
        assert!((sol.j2_tilde[0] - b).abs() < 1e-9);
    }

    #[test]
    fn hard_aggregation_matches_direct_substitution() {
        let p = random_separated_model(6, 5, 3, 0.9, 8).unwrap().to_problem();
        let reps = RepresentativeSets::new(vec![0, 3], vec![1, 4]).unwrap();
        let phi = AggregationProbabilities::nearest(6, 5, &reps);
        let agg = build_aggregate(&p, &reps, &phi).unwrap();
        let near1 = [0usize, 0, 1, 1, 1, 1];
        let near2 = [0usize, 0, 0, 1, 1];
        let parent = p.clone();
        let parent2 = p.clone();
        let direct = SeparatedProblem::new(
            WeightedSpace::uniform(2),
            WeightedSpace::uniform(2),
            vec![p.actions1()[0], p.actions1()[3]],
            vec![p.actions2()[1], p.actions2()[4]],
            move |k, u, j2| parent.h1([0, 3][k], u, &near2.map(|r| j2[r])),
            move |k, v, j1| parent2.h2([1, 4][k], v, &near1.map(|r| j1[r])),
            0.9,
        )
        .unwrap();
        let a = value_iterate(&agg, vec![0.0; 2], vec![0.0; 2], 1e-12, 100_000).unwrap();
        let b = value_iterate(&direct, vec![0.0; 2], vec![0.0; 2], 1e-12, 100_000).unwrap();
        assert_eq!(a.j1, b.j1);
        assert_eq!(a.j2, b.j2);
    }

    #[test]
    fn aggregate_keeps_parent_modulus() {
        let p = random_separated_model(6, 5, 3, 0.9, 9).unwrap().to_problem();
        let reps = RepresentativeSets::new(vec![1, 4], vec![0, 2, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = AggregationProbabilities::new(random_rows(&mut rng, 6, 2), random_rows(&mut rng, 5, 3), &reps).unwrap();
        let agg = build_aggregate(&p, &reps, &phi).unwrap();
        assert_eq!(agg.alpha(), p.alpha());
        assert!(verify_uniform_contraction(&agg, 300, 1).unwrap() <= p.alpha() + 1e-10);
    }

    #[test]
    fn missing_row_is_reported_only_when_read() {
        // H1 reads J2(0) only; H2 reads nothing.
        let p = SeparatedProblem::new(
            WeightedSpace::uniform(1),
            WeightedSpace::uniform(2),
            vec![1],
            vec![1, 1],
            |_, _, j2| 0.5 * j2[0],
            |x, _, _| x as f64,
            0.5,
        )
        .unwrap();
        let reps = RepresentativeSets::new(vec![0], vec![0]).unwrap();
        let ok = AggregationProbabilities::new(vec![None], vec![Some(vec![1.0]), None], &reps).unwrap();
        assert!(build_aggregate(&p, &reps, &ok).is_ok());
        let bad = AggregationProbabilities::new(vec![Some(vec![1.0])], vec![None, Some(vec![1.0])], &reps).unwrap();
        assert_eq!(build_aggregate(&p, &reps, &bad).unwrap_err(), SolverError::MissingAggregationRow { space: 2, state: 0 });
    }

    #[test]
    fn exact_values_give_optimal_lookahead() {
        let p = random_separated_model(5, 5, 3, 0.8, 12).unwrap().to_problem();
        let vi = value_iterate(&p, vec![0.0; 5], vec![0.0; 5], 1e-13, 100_000).unwrap();
        let pair = lookahead_policies(&p, &vi.j1, &vi.j2);
        let (j1, _, _) = evaluate_pair(&p, &pair, vec![0.0; 5], vec![0.0; 5], 1e-13, 100_000).unwrap();
        for x in 0..5 {
            assert!((j1[x] - vi.j1[x]).abs() < 1e-9);
        }
        let forced = SeparatedProblem::new(
            WeightedSpace::uniform(2),
            WeightedSpace::uniform(1),
            vec![1, 1],
            vec![1],
            |_, _, _| 0.0,
            |_, _, _| 0.0,
            0.0,
        )
        .unwrap();
        let pair = lookahead_policies(&forced, &[1.0, 2.0], &[3.0]);
        assert_eq!((pair.mu, pair.nu), (vec![0, 0], vec![0]));
    }
}
