//! Zero-sum Markov games: repeated matrix games whose transitions depend on
//! both players' mixed strategies.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SolverError};
use crate::framework::WeightedSpace;
use crate::matrix_game::{solve_matrix_game, MixedStrategy, PayoffMatrix, SaddleSolution};

const ROW_SUM_TOL: f64 = 1e-10;

/// A Markov game with `n` minimizer (row) and `m` maximizer (column) actions
/// at every state.
///
/// Stage cost `u'A(x)v`, transition probabilities `p_xy(u,v) = u'Q_xy v`.
/// A terminating game has substochastic rows; the missing mass goes to a
/// cost-free absorbing state that is not represented.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGame {
    payoffs: Vec<PayoffMatrix>,
    /// `transitions[x][i * m + j][y] = q_xy(i, j)`.
    transitions: Vec<Vec<Vec<f64>>>,
    alpha: f64,
    terminating: bool,
    space: WeightedSpace,
}

impl MarkovGame {
    /// A discounted game: `alpha` in (0, 1) and stochastic transition rows.
    pub fn discounted(
        payoffs: Vec<PayoffMatrix>,
        transitions: Vec<Vec<Vec<f64>>>,
        alpha: f64,
        space: Option<WeightedSpace>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SolverError::InvalidInput(format!("discount {alpha} outside (0, 1)")));
        }
        Self::build(payoffs, transitions, alpha, false, space)
    }

    /// A terminating game: `alpha` in (0, 1] and substochastic rows. Accepted
    /// only when the weighted modulus bound is below one.
    pub fn terminating(
        payoffs: Vec<PayoffMatrix>,
        transitions: Vec<Vec<Vec<f64>>>,
        alpha: f64,
        space: Option<WeightedSpace>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SolverError::InvalidInput(format!("discount {alpha} outside (0, 1]")));
        }
        let game = Self::build(payoffs, transitions, alpha, true, space)?;
        let modulus = game.modulus();
        if modulus >= 1.0 {
            return Err(SolverError::NonContractive { modulus });
        }
        Ok(game)
    }

    fn build(
        payoffs: Vec<PayoffMatrix>,
        transitions: Vec<Vec<Vec<f64>>>,
        alpha: f64,
        terminating: bool,
        space: Option<WeightedSpace>,
    ) -> Result<Self> {
        let states = payoffs.len();
        if states == 0 {
            return Err(SolverError::InvalidInput("game has no states".into()));
        }
        let (n, m) = (payoffs[0].rows(), payoffs[0].cols());
        if let Some(x) = payoffs.iter().position(|a| a.rows() != n || a.cols() != m) {
            return Err(SolverError::InvalidInput(format!(
                "payoff of state {x} is not {n}x{m} like state 0"
            )));
        }
        if transitions.len() != states {
            return Err(SolverError::InvalidInput("one transition block per state is required".into()));
        }
        for (x, block) in transitions.iter().enumerate() {
            if block.len() != n * m {
                return Err(SolverError::InvalidInput(format!(
                    "transitions of state {x} need {} rows, got {}",
                    n * m,
                    block.len()
                )));
            }
            for (k, row) in block.iter().enumerate() {
                let (i, j) = (k / m, k % m);
                if row.len() != states {
                    return Err(SolverError::InvalidInput(format!(
                        "transition row ({x}, {i}, {j}) has length {}, expected {states}",
                        row.len()
                    )));
                }
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(SolverError::InvalidInput(format!(
                        "transition row ({x}, {i}, {j}) has a negative or non-finite entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                let ok = if terminating { sum <= 1.0 + ROW_SUM_TOL } else { (sum - 1.0).abs() <= ROW_SUM_TOL };
                if !ok {
                    return Err(SolverError::InvalidInput(format!(
                        "transition row ({x}, {i}, {j}) sums to {sum}"
                    )));
                }
            }
        }
        let space = match space {
            Some(s) if s.len() != states => {
                return Err(SolverError::InvalidInput(format!(
                    "{} weights given for {states} states",
                    s.len()
                )))
            }
            Some(s) => s,
            None => WeightedSpace::uniform(states),
        };
        Ok(Self { payoffs, transitions, alpha, terminating, space })
    }

    pub fn state_count(&self) -> usize {
        self.payoffs.len()
    }

    /// Number of minimizer actions.
    pub fn n(&self) -> usize {
        self.payoffs[0].rows()
    }

    /// Number of maximizer actions.
    pub fn m(&self) -> usize {
        self.payoffs[0].cols()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_terminating(&self) -> bool {
        self.terminating
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn payoff(&self, x: usize) -> &PayoffMatrix {
        &self.payoffs[x]
    }

    pub fn payoffs(&self) -> &[PayoffMatrix] {
        &self.payoffs
    }

    /// `q_x.(i, j)`.
    pub fn transition_row(&self, x: usize, i: usize, j: usize) -> &[f64] {
        &self.transitions[x][i * self.m() + j]
    }

    pub fn transitions(&self) -> &[Vec<Vec<f64>>] {
        &self.transitions
    }

    /// `alpha * max_{x,i,j} sum_y q_xy(i,j) xi(y) / xi(x)`: the modulus of the
    /// game's Bellman operator for fixed strategies.
    pub fn modulus(&self) -> f64 {
        let mut rho: f64 = 0.0;
        for x in 0..self.state_count() {
            for row in &self.transitions[x] {
                let s: f64 = row.iter().enumerate().map(|(y, q)| q * self.space.weight(y)).sum();
                rho = rho.max(s / self.space.weight(x));
            }
        }
        self.alpha * rho
    }

    /// `(u'Q_xy v)_y`.
    pub fn transition_probs(&self, x: usize, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.state_count()];
        for (i, ui) in u.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                let w = ui * vj;
                if w == 0.0 {
                    continue;
                }
                for (r, q) in row.iter_mut().zip(self.transition_row(x, i, j)) {
                    *r += w * q;
                }
            }
        }
        row
    }

    /// `A(x) + scale * sum_y Q_xy J(y)`.
    pub fn stage_matrix(&self, x: usize, j: &[f64], scale: f64) -> PayoffMatrix {
        let (n, m) = (self.n(), self.m());
        let a = &self.payoffs[x];
        let mut out = PayoffMatrix::zeros(n, m);
        for i in 0..n {
            for c in 0..m {
                let ev: f64 = self.transition_row(x, i, c).iter().zip(j).map(|(q, v)| q * v).sum();
                out.set(i, c, a.get(i, c) + scale * ev);
            }
        }
        out
    }

    /// `H(x,u,v,J) = u'(A(x) + alpha sum_y Q_xy J(y)) v`.
    pub fn markov_h(&self, x: usize, u: &[f64], v: &[f64], j: &[f64]) -> f64 {
        self.stage_matrix(x, j, self.alpha).bilinear(u, v)
    }

    /// Per-state matrix games of the Shapley operator at `j`.
    pub fn shapley_games(&self, j: &[f64]) -> Result<Vec<SaddleSolution>> {
        (0..self.state_count())
            .map(|x| solve_matrix_game(&self.stage_matrix(x, j, self.alpha), 1e-8))
            .collect()
    }

    /// Shapley's operator `(TJ)(x) = val[A(x) + alpha sum_y Q_xy J(y)]`.
    pub fn shapley_operator(&self, j: &[f64]) -> Result<Vec<f64>> {
        Ok(self.shapley_games(j)?.into_iter().map(|s| s.value).collect())
    }

    /// Value iteration on Shapley's operator from zero.
    pub fn shapley_value_iteration(&self, tol: f64, max_iters: usize) -> Result<ShapleyOutcome> {
        if !(tol > 0.0) {
            return Err(SolverError::InvalidInput("tolerance must be positive".into()));
        }
        let mut j = vec![0.0; self.state_count()];
        let mut residuals = Vec::new();
        for k in 1..=max_iters {
            let next = self.shapley_operator(&j)?;
            let change = self.space.distance(&j, &next);
            residuals.push(change);
            j = next;
            if change <= tol {
                return Ok(ShapleyOutcome { values: j, iterations: k, residuals });
            }
        }
        Err(SolverError::MaxItersExceeded {
            iterations: max_iters,
            residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        })
    }

    /// Largest observed `||T_{u,v}J - T_{u,v}J'|| / ||J - J'||` over sampled
    /// mixed strategy pairs and tables.
    pub fn estimate_modulus(&self, samples: usize, seed: u64) -> Result<f64> {
        if samples == 0 {
            return Err(SolverError::InvalidInput("samples must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.state_count();
        let mut best: Option<f64> = None;
        for _ in 0..samples {
            let a: Vec<f64> = (0..s).map(|x| rng.gen_range(-10.0..10.0) * self.space.weight(x)).collect();
            let b: Vec<f64> = (0..s).map(|x| rng.gen_range(-10.0..10.0) * self.space.weight(x)).collect();
            let dist = self.space.distance(&a, &b);
            if dist == 0.0 {
                continue;
            }
            let mut image: f64 = 0.0;
            for x in 0..s {
                let u = random_strategy(self.n(), &mut rng);
                let v = random_strategy(self.m(), &mut rng);
                let d = self.markov_h(x, u.probs(), v.probs(), &a) - self.markov_h(x, u.probs(), v.probs(), &b);
                image = image.max(d.abs() / self.space.weight(x));
            }
            let ratio = image / dist;
            best = Some(best.map_or(ratio, |c: f64| c.max(ratio)));
        }
        best.ok_or(SolverError::DegeneratePair)
    }
}

/// Result of [`MarkovGame::shapley_value_iteration`].
#[derive(Debug, Clone)]
pub struct ShapleyOutcome {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

/// A random mixed strategy; pure with probability 1/4.
pub(crate) fn random_strategy(len: usize, rng: &mut ChaCha8Rng) -> MixedStrategy {
    if rng.gen_bool(0.25) {
        return MixedStrategy::pure(len, rng.gen_range(0..len));
    }
    let raw: Vec<f64> = (0..len).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    MixedStrategy::new(raw.into_iter().map(|r| r / total).collect()).expect("normalized")
}

fn random_distribution(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Sparse rows make interesting dynamics; keep at least one positive entry.
    let mut raw: Vec<f64> = (0..len).map(|_| if rng.gen_bool(0.6) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
    raw[rng.gen_range(0..len)] += 0.1;
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// A seeded random discounted game with payoffs uniform in [-1, 1].
pub fn random_markov_game(states: usize, n: usize, m: usize, alpha: f64, seed: u64) -> Result<MarkovGame> {
    if states == 0 || n == 0 || m == 0 {
        return Err(SolverError::InvalidInput("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let payoffs = (0..states)
        .map(|_| PayoffMatrix::new(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let transitions = (0..states)
        .map(|_| (0..n * m).map(|_| random_distribution(states, &mut rng)).collect())
        .collect();
    MarkovGame::discounted(payoffs, transitions, alpha, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(c: f64, alpha: f64) -> MarkovGame {
        MarkovGame::discounted(vec![PayoffMatrix::from_rows(&[vec![c]]).unwrap()], vec![vec![vec![1.0]]], alpha, None)
            .unwrap()
    }

    #[test]
    fn h_arithmetic() {
        let g = one_state(1.0, 0.5);
        assert_eq!(g.markov_h(0, &[1.0], &[1.0], &[2.0]), 2.0);
    }

    #[test]
    fn h_without_discount_is_bilinear_payoff() {
        let g = random_markov_game(2, 2, 3, 0.5, 1).unwrap();
        let scaled = g.stage_matrix(1, &[3.0, -4.0], 0.0);
        let u = [0.3, 0.7];
        let v = [0.2, 0.5, 0.3];
        assert_eq!(scaled.bilinear(&u, &v), g.payoff(1).bilinear(&u, &v));
    }

    #[test]
    fn h_matches_double_sum() {
        let g = random_markov_game(2, 2, 2, 0.7, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = rng.gen_range(0..2);
            let u = random_strategy(2, &mut rng);
            let v = random_strategy(2, &mut rng);
            let j = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let mut oracle = 0.0;
            for i in 0..2 {
                for c in 0..2 {
                    let mut inner = g.payoff(x).get(i, c);
                    for y in 0..2 {
                        inner += 0.7 * g.transition_row(x, i, c)[y] * j[y];
                    }
                    oracle += u.probs()[i] * v.probs()[c] * inner;
                }
            }
            assert!((g.markov_h(x, u.probs(), v.probs(), &j) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_probs_selection_and_loop() {
        let g = random_markov_game(3, 2, 2, 0.9, 8).unwrap();
        assert_eq!(g.transition_probs(2, &[0.0, 1.0], &[1.0, 0.0]), g.transition_row(2, 1, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = rng.gen_range(0..3);
            let u = random_strategy(2, &mut rng);
            let v = random_strategy(2, &mut rng);
            let row = g.transition_probs(x, u.probs(), v.probs());
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            for y in 0..3 {
                let mut oracle = 0.0;
                for i in 0..2 {
                    for c in 0..2 {
                        oracle += u.probs()[i] * g.transition_row(x, i, c)[y] * v.probs()[c];
                    }
                }
                assert!(row[y] >= 0.0 && (row[y] - oracle).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uniform_strategies_mix_rows() {
        // Two identical rows per column pair: uniform play averages all four.
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let zeros = PayoffMatrix::zeros(2, 2);
        let g = MarkovGame::discounted(vec![zeros.clone(), zeros], vec![rows.clone(), rows], 0.5, None).unwrap();
        assert_eq!(g.transition_probs(0, &[0.5, 0.5], &[0.5, 0.5]), vec![0.5, 0.5]);
    }

    #[test]
    fn validation() {
        let a = vec![PayoffMatrix::from_rows(&[vec![0.0]]).unwrap()];
        let err = MarkovGame::discounted(a.clone(), vec![vec![vec![0.9]]], 0.5, None).unwrap_err();
        assert!(err.to_string().contains("(0, 0, 0)"), "{err}");
        assert!(MarkovGame::discounted(a.clone(), vec![vec![vec![1.0]]], 1.0, None).is_err());
        assert!(MarkovGame::terminating(a.clone(), vec![vec![vec![0.9]]], 1.0, None).is_ok());
        assert!(matches!(
            MarkovGame::terminating(a, vec![vec![vec![1.0]]], 1.0, None),
            Err(SolverError::NonContractive { .. })
        ));
    }

    #[test]
    fn shapley_single_state_geometric_series() {
        let g = one_state(3.0, 0.5);
        let out = g.shapley_value_iteration(1e-12, 1000).unwrap();
        assert!((out.values[0] - 6.0).abs() < 1e-11);
    }

    #[test]
    fn sampled_modulus_below_discount() {
        let g = random_markov_game(3, 2, 2, 0.9, 3).unwrap();
        assert!(g.estimate_modulus(500, 1).unwrap() <= 0.9 + 1e-10);
        assert!((g.modulus() - 0.9).abs() < 1e-12);
    }
}
