//! The β-scaled separated reformulation of a Markov game.
//!
//! The maximizer's states are `(x, u)` with `u` a mixed strategy, a continuum.
//! A table over them is stored per `x` as a [`LinearEnvelope`]: the pointwise
//! max of finitely many linear functions of `u`. Every operation of the
//! algorithms keeps entries in that form, so `X2` is handled exactly.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::framework::{MinimaxProblem, SeparatedProblem, WeightedSpace};
use crate::matrix_game::{argmax, argmin, min_simplex_max_linear, Line, MixedStrategy};
use crate::models::markov::{random_strategy, MarkovGame};
use crate::models::separated::BetaScaling;

/// `u -> max_k lines[k] . u` on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEnvelope {
    lines: Vec<Vec<f64>>,
}

impl LinearEnvelope {
    pub fn new(lines: Vec<Vec<f64>>) -> Self {
        assert!(!lines.is_empty(), "envelope needs a line");
        let mut env = Self { lines: Vec::with_capacity(lines.len()) };
        for l in lines {
            env.push(l);
        }
        env
    }

    pub fn single(line: Vec<f64>) -> Self {
        Self { lines: vec![line] }
    }

    /// The constant `c` (a constant is linear on the simplex).
    pub fn constant(c: f64, dim: usize) -> Self {
        Self::single(vec![c; dim])
    }

    pub fn lines(&self) -> &[Vec<f64>] {
        &self.lines
    }

    pub fn dim(&self) -> usize {
        self.lines[0].len()
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.lines
            .iter()
            .map(|l| l.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values at the pure strategies.
    pub fn vertex_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.lines.iter().map(|l| l[i]).fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    /// Adds a line unless an existing one dominates it; drops lines it dominates.
    fn push(&mut self, line: Vec<f64>) {
        if self.lines.iter().any(|l| dominates(l, &line)) {
            return;
        }
        self.lines.retain(|l| !dominates(&line, l));
        self.lines.push(line);
    }

    pub fn upper(&self, other: &Self) -> Self {
        let mut env = self.clone();
        for l in &other.lines {
            env.push(l.clone());
        }
        env
    }

    /// `min_u max_k lines[k] . u` with an attaining strategy.
    pub fn minimize(&self) -> Result<(f64, MixedStrategy)> {
        if self.lines.len() == 1 {
            let (v, i) = argmin(&self.lines[0]);
            return Ok((v, MixedStrategy::pure(self.dim(), i)));
        }
        let lines: Vec<Line> = self.lines.iter().map(|l| Line::new(0.0, l.clone())).collect();
        min_simplex_max_linear(&lines)
    }

    /// `sup_u (self(u) - other(u))`, exact.
    pub fn sup_difference(&self, other: &Self) -> Result<f64> {
        if other.lines.len() == 1 {
            let b = &other.lines[0];
            return Ok(self
                .lines
                .iter()
                .flat_map(|a| a.iter().zip(b).map(|(x, y)| x - y))
                .fold(f64::NEG_INFINITY, f64::max));
        }
        let floor = other.vertex_values();
        let mut best = f64::NEG_INFINITY;
        for a in &self.lines {
            // sup_u (a.u - max_l b_l.u) lies between its vertex value and
            // min_l max_i (a - b_l)_i.
            let lower = a.iter().zip(&floor).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max);
            let upper = other
                .lines
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min);
            best = best.max(lower);
            if upper <= best || upper - lower <= 0.0 {
                continue;
            }
            let shifted: Vec<Line> = other
                .lines
                .iter()
                .map(|b| Line::new(0.0, b.iter().zip(a).map(|(x, y)| x - y).collect()))
                .collect();
            let (v, _) = min_simplex_max_linear(&shifted)?;
            best = best.max(-v);
        }
        Ok(best)
    }
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// The separated problem of a Markov game under β-scaling:
///
/// ```text
/// H1(x, u, J2) = J2(x, u) / beta
/// H2((x, u), j, J1) = [u'(A(x) + alpha beta sum_y Q_xy J1(y))]_j
/// ```
///
/// The maximizer's policy is a column index per `x`. When improving it, the
/// column chosen is the best response to the minimizer's current `mu(x)`.
#[derive(Debug, Clone)]
pub struct MarkovSeparated {
    game: Arc<MarkovGame>,
    scaling: BetaScaling,
    modulus: f64,
}

impl MarkovSeparated {
    pub fn new(game: MarkovGame, scaling: BetaScaling) -> Result<Self> {
        let alpha = game.modulus();
        BetaScaling::new(scaling.beta(), alpha)?;
        Ok(Self { modulus: scaling.half_stage_modulus(alpha), game: Arc::new(game), scaling })
    }

    pub fn game(&self) -> &MarkovGame {
        &self.game
    }

    pub fn beta(&self) -> f64 {
        self.scaling.beta()
    }

    /// `A(x) + alpha beta sum_y Q_xy J1(y)` as its columns.
    pub fn columns(&self, x: usize, j1: &[f64]) -> Vec<Vec<f64>> {
        let c = self.game.stage_matrix(x, j1, self.game.alpha() * self.beta());
        (0..c.cols()).map(|j| c.column(j)).collect()
    }

    /// The finite variant where the minimizer commits to a pure row `i`
    /// before the maximizer moves: `X2 = {(x, i)}` indexed `x * n + i`.
    pub fn pure_separated(&self) -> SeparatedProblem {
        let game = Arc::clone(&self.game);
        let (states, n, m) = (game.state_count(), game.n(), game.m());
        let beta = self.beta();
        let scale = game.alpha() * beta;
        let space2 = WeightedSpace::new((0..states * n).map(|k| game.space().weight(k / n)).collect())
            .expect("positive weights");
        SeparatedProblem::new(
            game.space().clone(),
            space2,
            vec![n; states],
            vec![m; states * n],
            move |x, i, j2| j2[x * n + i] / beta,
            move |k, j, j1| {
                let (x, i) = (k / n, k % n);
                let ev: f64 = game.transition_row(x, i, j).iter().zip(j1).map(|(q, v)| q * v).sum();
                game.payoff(x).get(i, j) + scale * ev
            },
            self.modulus,
        )
        .expect("valid dimensions")
    }
}

/// The separated reformulation of `game`; `beta` defaults to `1/sqrt(modulus)`.
pub fn separate_markov_game(game: MarkovGame, beta: Option<f64>) -> Result<MarkovSeparated> {
    let scaling = BetaScaling::resolve(beta, game.modulus())?;
    MarkovSeparated::new(game, scaling)
}

impl MinimaxProblem for MarkovSeparated {
    type MinAction = MixedStrategy;
    type MaxAction = usize;
    type MaxValue = LinearEnvelope;

    fn space1(&self) -> &WeightedSpace {
        self.game.space()
    }

    fn space2(&self) -> &WeightedSpace {
        self.game.space()
    }

    fn modulus(&self) -> f64 {
        self.modulus
    }

    fn first_min_action(&self, _x1: usize) -> MixedStrategy {
        MixedStrategy::pure(self.game.n(), 0)
    }

    fn first_max_action(&self, _x2: usize) -> usize {
        0
    }

    fn zero_max_value(&self, _x2: usize) -> LinearEnvelope {
        LinearEnvelope::constant(0.0, self.game.n())
    }

    fn eval_min(&self, x1: usize, u: &MixedStrategy, j2: &[LinearEnvelope]) -> f64 {
        j2[x1].eval(u.probs()) / self.beta()
    }

    fn improve_min(&self, x1: usize, j2: &[LinearEnvelope]) -> Result<(f64, MixedStrategy)> {
        let (v, u) = j2[x1].minimize()?;
        Ok((v / self.beta(), u))
    }

    fn eval_max(&self, x2: usize, v: &usize, j1: &[f64]) -> LinearEnvelope {
        let c = self.game.stage_matrix(x2, j1, self.game.alpha() * self.beta());
        LinearEnvelope::single(c.column(*v))
    }

    fn improve_max(&self, x2: usize, j1: &[f64], min_policy: &[MixedStrategy]) -> (LinearEnvelope, usize) {
        let cols = self.columns(x2, j1);
        let choice = match min_policy.get(x2) {
            Some(u) => {
                let scores: Vec<f64> = cols.iter().map(|c| c.iter().zip(u.probs()).map(|(a, b)| a * b).sum()).collect();
                argmax(&scores).1
            }
            None => 0,
        };
        (LinearEnvelope::new(cols), choice)
    }

    fn upper_envelope(&self, a: &LinearEnvelope, b: &LinearEnvelope) -> LinearEnvelope {
        a.upper(b)
    }

    fn sup_difference(&self, a: &LinearEnvelope, b: &LinearEnvelope) -> Result<f64> {
        a.sup_difference(b)
    }

    /// An evaluated entry is one column, which stays below the improved
    /// envelope rather than converging to it; only excess over it counts.
    fn evaluation_gap(&self, j: &LinearEnvelope, v: &LinearEnvelope) -> Result<f64> {
        Ok(j.sup_difference(v)?.max(0.0))
    }

    fn sample_max_value(&self, x2: usize, scale: f64, rng: &mut ChaCha8Rng) -> LinearEnvelope {
        let w = self.game.space().weight(x2);
        let count = rng.gen_range(1..=self.game.m());
        LinearEnvelope::new(
            (0..count)
                .map(|_| (0..self.game.n()).map(|_| rng.gen_range(-scale..scale) * w).collect())
                .collect(),
        )
    }

    fn sample_min_action(&self, _x1: usize, rng: &mut ChaCha8Rng) -> MixedStrategy {
        random_strategy(self.game.n(), rng)
    }

    fn sample_max_action(&self, _x2: usize, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..self.game.m())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::{check_monotone, estimate_modulus, value_iterate, zero_tables};
    use crate::matrix_game::PayoffMatrix;
    use crate::models::markov::random_markov_game;
    use rand::SeedableRng;

    fn one_state(c: f64) -> MarkovGame {
        MarkovGame::discounted(vec![PayoffMatrix::from_rows(&[vec![c]]).unwrap()], vec![vec![vec![1.0]]], 0.5, None)
            .unwrap()
    }

    fn random_envelope(k: usize, rng: &mut ChaCha8Rng) -> LinearEnvelope {
        LinearEnvelope::new((0..k).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect())
    }

    fn grid_sup(f: &LinearEnvelope, g: &LinearEnvelope) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let u = [k as f64 / 1000.0, 1.0 - k as f64 / 1000.0];
            best = best.max(f.eval(&u) - g.eval(&u));
        }
        best
    }

    #[test]
    fn envelope_prunes_dominated_lines() {
        let e = LinearEnvelope::new(vec![vec![1.0, 1.0], vec![0.0, 0.5], vec![2.0, 0.0]]);
        assert_eq!(e.lines().len(), 2);
        assert_eq!(e.eval(&[0.5, 0.5]), 1.0);
        assert_eq!(e.vertex_values(), vec![2.0, 1.0]);
    }

    #[test]
    fn sup_difference_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let ka = rng.gen_range(1..4);
            let f = random_envelope(ka, &mut rng);
            let kb = rng.gen_range(1..4);
            let g = random_envelope(kb, &mut rng);
            let exact = f.sup_difference(&g).unwrap();
            let grid = grid_sup(&f, &g);
            assert!(exact >= grid - 1e-9 && exact <= grid + 1e-2, "{exact} vs {grid}");
        }
    }

    #[test]
    fn scaling_identity_one_state() {
        for c in [0.0, 1.5, -2.0] {
            let sep = separate_markov_game(one_state(c), None).unwrap();
            let beta = sep.beta();
            assert!((beta - 2f64.sqrt()).abs() < 1e-15);
            let (j1, j2) = zero_tables(&sep);
            let out = value_iterate(&sep, j1, j2, 1e-12, 10_000).unwrap();
            assert!((out.j1[0] - 2.0 * c / beta).abs() < 1e-10);
            if c == 0.0 {
                assert_eq!(out.j1[0], 0.0);
                assert_eq!(out.j2[0].vertex_values(), vec![0.0]);
            }
        }
    }

    #[test]
    fn invalid_beta_rejected() {
        assert!(separate_markov_game(one_state(1.0), Some(2.5)).is_err());
        assert!(separate_markov_game(one_state(1.0), Some(0.9)).is_err());
    }

    #[test]
    fn scaling_identity_random_games() {
        for seed in 0..4 {
            let game = random_markov_game(3, 2, 2, 0.9, seed).unwrap();
            let shapley = game.shapley_value_iteration(1e-11, 100_000).unwrap();
            let sep = separate_markov_game(game, None).unwrap();
            let (j1, j2) = zero_tables(&sep);
            let out = value_iterate(&sep, j1, j2, 1e-10, 100_000).unwrap();
            for x in 0..3 {
                assert!((sep.beta() * out.j1[x] - shapley.values[x]).abs() < 1e-6, "seed {seed}");
            }
        }
    }

    #[test]
    fn separated_contraction_and_monotonicity() {
        let game = random_markov_game(3, 2, 3, 0.9, 6).unwrap();
        let sep = separate_markov_game(game, None).unwrap();
        let bound = 0.9f64.sqrt();
        assert!((sep.modulus() - bound).abs() < 1e-12);
        assert!(estimate_modulus(&sep, 200, 1).unwrap() <= bound + 1e-10);
        assert!(check_monotone(&sep, 200, 2).unwrap().is_none());
        let pure = sep.pure_separated();
        assert!(estimate_modulus(&pure, 300, 3).unwrap() <= bound + 1e-10);
        assert!(check_monotone(&pure, 300, 4).unwrap().is_none());
    }

    #[test]
    fn max_improve_scans_columns() {
        let game = random_markov_game(2, 3, 3, 0.8, 12).unwrap();
        let sep = separate_markov_game(game, None).unwrap();
        let j1 = [0.4, -1.1];
        let u = MixedStrategy::new(vec![0.2, 0.3, 0.5]).unwrap();
        for x in 0..2 {
            let (env, choice) = sep.improve_max(x, &j1, &[u.clone(), u.clone()]);
            let cols = sep.columns(x, &j1);
            let scores: Vec<f64> = cols.iter().map(|c| c.iter().zip(u.probs()).map(|(a, b)| a * b).sum()).collect();
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(choice, scores.iter().position(|s| *s == best).unwrap());
            assert!((env.eval(u.probs()) - best).abs() < 1e-12);
        }
    }
}
