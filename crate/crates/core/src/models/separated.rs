//! Explicitly separated models and minimax control, mapped into
//! [`SeparatedProblem`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SolverError};
use crate::framework::{SeparatedProblem, WeightedSpace};

/// Splits one discount across two half-stages: the minimizer's half-stage
/// contracts by `1/beta`, the maximizer's by `alpha * beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaScaling {
    beta: f64,
}

impl BetaScaling {
    /// Requires `beta > 1` and `beta * modulus < 1`.
    pub fn new(beta: f64, modulus: f64) -> Result<Self> {
        if !(beta > 1.0 && beta.is_finite() && beta * modulus < 1.0) {
            return Err(SolverError::InvalidBeta { beta, modulus });
        }
        Ok(Self { beta })
    }

    /// `1/sqrt(modulus)`, which makes both half-stages contract by `sqrt(modulus)`.
    pub fn symmetric(modulus: f64) -> Result<Self> {
        if !(modulus < 1.0) {
            return Err(SolverError::NonContractive { modulus });
        }
        if modulus <= 0.0 {
            return Self::new(2.0, modulus);
        }
        Self::new(1.0 / modulus.sqrt(), modulus)
    }

    /// The given `beta`, or the symmetric default.
    pub fn resolve(beta: Option<f64>, modulus: f64) -> Result<Self> {
        match beta {
            Some(b) => Self::new(b, modulus),
            None => Self::symmetric(modulus),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `max(1/beta, modulus * beta)`.
    pub fn half_stage_modulus(&self, modulus: f64) -> f64 {
        (1.0 / self.beta).max(modulus * self.beta)
    }
}

/// Alternating moves with deterministic transitions: the minimizer at `x1`
/// picks `u`, pays `g1`, and moves to `f1(x1,u)` in `X2`; the maximizer mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedMinimaxModel {
    space1: WeightedSpace,
    space2: WeightedSpace,
    /// `moves1[x1][u] = (g1(x1,u), f1(x1,u))`.
    moves1: Vec<Vec<(f64, usize)>>,
    moves2: Vec<Vec<(f64, usize)>>,
    alpha: f64,
}

impl SeparatedMinimaxModel {
    pub fn new(
        moves1: Vec<Vec<(f64, usize)>>,
        moves2: Vec<Vec<(f64, usize)>>,
        alpha: f64,
        space1: Option<WeightedSpace>,
        space2: Option<WeightedSpace>,
    ) -> Result<Self> {
        let (n1, n2) = (moves1.len(), moves2.len());
        if n1 == 0 || n2 == 0 {
            return Err(SolverError::InvalidInput("both state spaces must be nonempty".into()));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(SolverError::InvalidInput(format!("discount {alpha} outside [0, 1)")));
        }
        check_moves(&moves1, n2, "minimizer")?;
        check_moves(&moves2, n1, "maximizer")?;
        let space1 = sized_space(space1, n1)?;
        let space2 = sized_space(space2, n2)?;
        let model = Self { space1, space2, moves1, moves2, alpha };
        let modulus = model.modulus();
        if modulus >= 1.0 {
            return Err(SolverError::NonContractive { modulus });
        }
        Ok(model)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn space1(&self) -> &WeightedSpace {
        &self.space1
    }

    pub fn space2(&self) -> &WeightedSpace {
        &self.space2
    }

    pub fn moves1(&self) -> &[Vec<(f64, usize)>] {
        &self.moves1
    }

    pub fn moves2(&self) -> &[Vec<(f64, usize)>] {
        &self.moves2
    }

    /// `alpha` times the largest weight ratio along a move.
    pub fn modulus(&self) -> f64 {
        let r1 = weight_ratio(&self.moves1, &self.space1, &self.space2);
        let r2 = weight_ratio(&self.moves2, &self.space2, &self.space1);
        self.alpha * r1.max(r2)
    }

    /// `H1 = g1 + alpha J2(f1)`, `H2 = g2 + alpha J1(f2)`.
    pub fn to_problem(&self) -> SeparatedProblem {
        let alpha = self.alpha;
        let m1 = self.moves1.clone();
        let m2 = self.moves2.clone();
        SeparatedProblem::new(
            self.space1.clone(),
            self.space2.clone(),
            self.moves1.iter().map(Vec::len).collect(),
            self.moves2.iter().map(Vec::len).collect(),
            move |x, u, j2| {
                let (g, y) = m1[x][u];
                g + alpha * j2[y]
            },
            move |x, v, j1| {
                let (g, y) = m2[x][v];
                g + alpha * j1[y]
            },
            self.modulus(),
        )
        .expect("validated model")
    }
}

fn check_moves(moves: &[Vec<(f64, usize)>], targets: usize, who: &str) -> Result<()> {
    for (x, acts) in moves.iter().enumerate() {
        if acts.is_empty() {
            return Err(SolverError::InvalidInput(format!("{who} state {x} has no actions")));
        }
        for (a, (g, y)) in acts.iter().enumerate() {
            if !g.is_finite() {
                return Err(SolverError::InvalidInput(format!("{who} state {x} action {a}: cost not finite")));
            }
            if *y >= targets {
                return Err(SolverError::InvalidInput(format!(
                    "{who} state {x} action {a}: next state {y} out of range"
                )));
            }
        }
    }
    Ok(())
}

fn sized_space(space: Option<WeightedSpace>, len: usize) -> Result<WeightedSpace> {
    match space {
        Some(s) if s.len() != len => {
            Err(SolverError::InvalidInput(format!("{} weights given for {len} states", s.len())))
        }
        Some(s) => Ok(s),
        None => Ok(WeightedSpace::uniform(len)),
    }
}

fn weight_ratio(moves: &[Vec<(f64, usize)>], from: &WeightedSpace, to: &WeightedSpace) -> f64 {
    let mut r: f64 = 0.0;
    for (x, acts) in moves.iter().enumerate() {
        for (_, y) in acts {
            r = r.max(to.weight(*y) / from.weight(x));
        }
    }
    r
}

/// One possible result of a `(x, u, v)` choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub cost: f64,
    pub next: usize,
}

impl Outcome {
    pub fn certain(cost: f64, next: usize) -> Self {
        Self { prob: 1.0, cost, next }
    }
}

/// Minimax control: the minimizer picks `u`, the maximizer then picks `v`
/// knowing `u`, and a disturbance `w` with known distribution resolves cost
/// and next state.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxControlModel {
    space: WeightedSpace,
    /// `outcomes[x][u][v]` is the distribution of `(g(x,u,v,w), f(x,u,v,w))`.
    outcomes: Vec<Vec<Vec<Vec<Outcome>>>>,
    alpha: f64,
    /// `(x, u)` for every maximizer state, in index order.
    pairs: Vec<(usize, usize)>,
}

impl MinimaxControlModel {
    pub fn new(outcomes: Vec<Vec<Vec<Vec<Outcome>>>>, alpha: f64, space: Option<WeightedSpace>) -> Result<Self> {
        let states = outcomes.len();
        if states == 0 {
            return Err(SolverError::InvalidInput("model has no states".into()));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(SolverError::InvalidInput(format!("discount {alpha} outside [0, 1)")));
        }
        for (x, controls) in outcomes.iter().enumerate() {
            if controls.is_empty() {
                return Err(SolverError::InvalidInput(format!("state {x} has no controls")));
            }
            for (u, responses) in controls.iter().enumerate() {
                if responses.is_empty() {
                    return Err(SolverError::InvalidInput(format!("state {x} control {u} has no responses")));
                }
                for (v, dist) in responses.iter().enumerate() {
                    let at = format!("state {x} control {u} response {v}");
                    if dist.is_empty() {
                        return Err(SolverError::InvalidInput(format!("{at}: no outcomes")));
                    }
                    if dist.iter().any(|o| !(o.prob >= 0.0 && o.cost.is_finite()) || o.next >= states) {
                        return Err(SolverError::InvalidInput(format!("{at}: invalid outcome")));
                    }
                    let sum: f64 = dist.iter().map(|o| o.prob).sum();
                    if (sum - 1.0).abs() > 1e-10 {
                        return Err(SolverError::InvalidInput(format!("{at}: probabilities sum to {sum}")));
                    }
                }
            }
        }
        let space = sized_space(space, states)?;
        let pairs = outcomes
            .iter()
            .enumerate()
            .flat_map(|(x, c)| (0..c.len()).map(move |u| (x, u)))
            .collect();
        let model = Self { space, outcomes, alpha, pairs };
        let modulus = model.modulus();
        if modulus >= 1.0 {
            return Err(SolverError::NonContractive { modulus });
        }
        Ok(model)
    }

    /// Deterministic model: `moves[x][u][v] = (g, f)`.
    pub fn deterministic(moves: Vec<Vec<Vec<(f64, usize)>>>, alpha: f64, space: Option<WeightedSpace>) -> Result<Self> {
        let outcomes = moves
            .into_iter()
            .map(|c| c.into_iter().map(|r| r.into_iter().map(|(g, y)| vec![Outcome::certain(g, y)]).collect()).collect())
            .collect();
        Self::new(outcomes, alpha, space)
    }

    pub fn state_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn space(&self) -> &WeightedSpace {
        &self.space
    }

    pub fn outcomes(&self) -> &[Vec<Vec<Vec<Outcome>>>] {
        &self.outcomes
    }

    /// Maximizer states `(x, u)` in index order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `alpha * max_{x,u,v} E[xi(next)] / xi(x)`.
    pub fn modulus(&self) -> f64 {
        let mut rho: f64 = 0.0;
        for (x, controls) in self.outcomes.iter().enumerate() {
            for dist in controls.iter().flatten() {
                let e: f64 = dist.iter().map(|o| o.prob * self.space.weight(o.next)).sum();
                rho = rho.max(e / self.space.weight(x));
            }
        }
        self.alpha * rho
    }

    fn expected(&self, dist: &[Outcome], j: &[f64], scale: f64) -> f64 {
        dist.iter().map(|o| o.prob * (o.cost + scale * j[o.next])).sum()
    }

    /// `(TJ)(x) = min_u max_v E[g + alpha J(f)]`.
    pub fn bellman(&self, j: &[f64]) -> Vec<f64> {
        self.outcomes
            .iter()
            .map(|controls| {
                controls
                    .iter()
                    .map(|r| r.iter().map(|d| self.expected(d, j, self.alpha)).fold(f64::NEG_INFINITY, f64::max))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Value iteration on the unseparated Bellman operator from zero.
    pub fn value_iteration(&self, tol: f64, max_iters: usize) -> Result<(Vec<f64>, usize)> {
        let mut j = vec![0.0; self.state_count()];
        for k in 1..=max_iters {
            let next = self.bellman(&j);
            let change = self.space.distance(&j, &next);
            j = next;
            if change <= tol {
                return Ok((j, k));
            }
        }
        Err(SolverError::MaxItersExceeded { iterations: max_iters, residual: f64::NAN })
    }

    /// The separated problem over `X1 = X`, `X2 = {(x,u)}`:
    /// `H1(x,u,J2) = J2(x,u)/beta`, `H2((x,u),v,J1) = E[g + alpha beta J1(f)]`.
    /// `xi2(x,u) = xi(x)`.
    pub fn to_problem(&self, scaling: BetaScaling) -> Result<SeparatedProblem> {
        let beta = scaling.beta();
        let modulus = self.modulus();
        BetaScaling::new(beta, modulus)?;
        let index: Vec<Vec<usize>> = {
            let mut next = 0;
            self.outcomes
                .iter()
                .map(|c| {
                    (0..c.len())
                        .map(|_| {
                            next += 1;
                            next - 1
                        })
                        .collect()
                })
                .collect()
        };
        let space2 = WeightedSpace::new(self.pairs.iter().map(|&(x, _)| self.space.weight(x)).collect())?;
        let pairs = self.pairs.clone();
        let outcomes = self.outcomes.clone();
        let scale = self.alpha * beta;
        SeparatedProblem::new(
            self.space.clone(),
            space2,
            self.outcomes.iter().map(Vec::len).collect(),
            self.pairs.iter().map(|&(x, u)| self.outcomes[x][u].len()).collect(),
            move |x, u, j2| j2[index[x][u]] / beta,
            move |x2, v, j1| {
                let (x, u) = pairs[x2];
                outcomes[x][u][v].iter().map(|o| o.prob * (o.cost + scale * j1[o.next])).sum()
            },
            scaling.half_stage_modulus(modulus),
        )
    }
}

/// A seeded random separated model with costs uniform in [-1, 1].
pub fn random_separated_model(n1: usize, n2: usize, max_actions: usize, alpha: f64, seed: u64) -> Result<SeparatedMinimaxModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side = |count: usize, targets: usize| -> Vec<Vec<(f64, usize)>> {
        (0..count)
            .map(|_| {
                (0..rng.gen_range(1..=max_actions))
                    .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0..targets)))
                    .collect()
            })
            .collect()
    };
    let moves1 = side(n1, n2);
    let moves2 = side(n2, n1);
    SeparatedMinimaxModel::new(moves1, moves2, alpha, None, None)
}

/// A seeded random minimax control model with up to two disturbance outcomes
/// per `(x,u,v)`.
pub fn random_minimax_control(states: usize, max_actions: usize, alpha: f64, seed: u64) -> Result<MinimaxControlModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcomes = (0..states)
        .map(|_| {
            (0..rng.gen_range(1..=max_actions))
                .map(|_| {
                    (0..rng.gen_range(1..=max_actions))
                        .map(|_| {
                            let p = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(0.1..0.9) };
                            let mut dist = vec![Outcome { prob: p, cost: rng.gen_range(-1.0..1.0), next: rng.gen_range(0..states) }];
                            if p < 1.0 {
                                dist.push(Outcome { prob: 1.0 - p, cost: rng.gen_range(-1.0..1.0), next: rng.gen_range(0..states) });
                            }
                            dist
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    MinimaxControlModel::new(outcomes, alpha, None)
}
