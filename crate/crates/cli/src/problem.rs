//! Problem files: versioned JSON documents with a `kind` tag.
//!
//! ```json
//! {"version": 1, "kind": "discounted_markov_game", "alpha": 0.9,
//!  "payoffs": [[[1, 0], [0, 1]]], "transitions": [[[[1.0], [1.0]], [[1.0], [1.0]]]]}
//! ```
//!
//! `transitions[x][i][j][y]` is the probability of moving from `x` to `y`
//! under the action pair `(i, j)`.

use std::fs;
use std::path::Path;

use minimaxpi::framework::WeightedSpace;
use minimaxpi::matrix_game::PayoffMatrix;
use minimaxpi::models::{MarkovGame, MinimaxControlModel, Outcome, SeparatedMinimaxModel};
use minimaxpi::SolverError;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: u32,
    #[serde(flatten)]
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    DiscountedMarkovGame(MarkovGameSpec),
    TerminatingMarkovGame(MarkovGameSpec),
    SeparatedModel(SeparatedSpec),
    MinimaxControl(ControlSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovGameSpec {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// `payoffs[x][i][j]`.
    pub payoffs: Vec<Vec<Vec<f64>>>,
    /// `transitions[x][i][j][y]`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub cost: f64,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSpec {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights2: Option<Vec<f64>>,
    /// `moves1[x1][u]`: cost and successor in `X2`.
    pub moves1: Vec<Vec<Move>>,
    /// `moves2[x2][v]`: cost and successor in `X1`.
    pub moves2: Vec<Vec<Move>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub prob: f64,
    pub cost: f64,
    pub next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// `outcomes[x][u][v]`: distribution of cost and next state.
    pub outcomes: Vec<Vec<Vec<Vec<OutcomeSpec>>>>,
}

/// Representative states and, optionally, aggregation probabilities; rows
/// default to point masses on the nearest representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub reps1: Vec<usize>,
    pub reps2: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi1: Option<Vec<Option<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<Vec<Option<Vec<f64>>>>,
}

/// A validated model.
#[derive(Debug, Clone)]
pub enum Model {
    Markov { game: MarkovGame, beta: Option<f64> },
    Separated(SeparatedMinimaxModel),
    Control { model: MinimaxControlModel, beta: Option<f64> },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation { field: field.into(), message: message.into() }
}

fn wrap(field: &str) -> impl Fn(SolverError) -> CliError + '_ {
    move |e| match e {
        SolverError::NonContractive { .. } => CliError::Solver(e),
        SolverError::InvalidInput(msg) => invalid(field, msg),
        other => invalid(field, other.to_string()),
    }
}

fn space(weights: &Option<Vec<f64>>, len: usize, field: &str) -> Result<Option<WeightedSpace>, CliError> {
    match weights {
        None => Ok(None),
        Some(w) if w.len() != len => Err(invalid(field, format!("{} weights for {len} states", w.len()))),
        Some(w) => WeightedSpace::new(w.clone()).map(Some).map_err(wrap(field)),
    }
}

fn markov_game(spec: &MarkovGameSpec, terminating: bool) -> Result<MarkovGame, CliError> {
    let states = spec.payoffs.len();
    if states == 0 {
        return Err(invalid("payoffs", "no states"));
    }
    if spec.transitions.len() != states {
        return Err(invalid("transitions", format!("{} entries for {states} states", spec.transitions.len())));
    }
    let n = spec.payoffs[0].len();
    let m = spec.payoffs[0].first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(invalid("payoffs[0]", "empty matrix"));
    }
    let mut payoffs = Vec::with_capacity(states);
    let mut transitions = Vec::with_capacity(states);
    for x in 0..states {
        let a = &spec.payoffs[x];
        if a.len() != n || a.iter().any(|r| r.len() != m) {
            return Err(invalid(format!("payoffs[{x}]"), format!("expected a {n}x{m} matrix")));
        }
        payoffs.push(PayoffMatrix::from_rows(a).map_err(wrap("payoffs"))?);
        let q = &spec.transitions[x];
        if q.len() != n || q.iter().any(|r| r.len() != m) {
            return Err(invalid(format!("transitions[{x}]"), format!("expected {n}x{m} rows")));
        }
        let mut rows = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                let row = &q[i][j];
                let field = format!("transitions[{x}][{i}][{j}]");
                if row.len() != states {
                    return Err(invalid(field, format!("{} entries for {states} states", row.len())));
                }
                if row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(invalid(field, "negative probability"));
                }
                let sum: f64 = row.iter().sum();
                if terminating && sum > 1.0 + ROW_SUM_TOL {
                    return Err(invalid(field, format!("row sums to {sum}, more than 1")));
                }
                if !terminating && (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(invalid(field, format!("row sums to {sum}, not 1")));
                }
                rows.push(row.clone());
            }
        }
        transitions.push(rows);
    }
    let space = space(&spec.weights, states, "weights")?;
    let game = if terminating {
        MarkovGame::terminating(payoffs, transitions, spec.alpha, space)
    } else {
        MarkovGame::discounted(payoffs, transitions, spec.alpha, space)
    };
    game.map_err(wrap("alpha"))
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse { message, .. } => CliError::Parse { path: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| CliError::Parse { path: "<input>".into(), message: e.to_string() })?;
        if file.version != FORMAT_VERSION {
            return Err(invalid("version", format!("unsupported version {}", file.version)));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    /// Validates the payload and builds the model.
    pub fn model(&self) -> Result<Model, CliError> {
        match &self.model {
            ModelSpec::DiscountedMarkovGame(s) => Ok(Model::Markov { game: markov_game(s, false)?, beta: s.beta }),
            ModelSpec::TerminatingMarkovGame(s) => Ok(Model::Markov { game: markov_game(s, true)?, beta: s.beta }),
            ModelSpec::SeparatedModel(s) => {
                let moves = |m: &[Vec<Move>]| m.iter().map(|r| r.iter().map(|mv| (mv.cost, mv.next)).collect()).collect();
                let space1 = space(&s.weights1, s.moves1.len(), "weights1")?;
                let space2 = space(&s.weights2, s.moves2.len(), "weights2")?;
                SeparatedMinimaxModel::new(moves(&s.moves1), moves(&s.moves2), s.alpha, space1, space2)
                    .map(Model::Separated)
                    .map_err(wrap("moves"))
            }
            ModelSpec::MinimaxControl(s) => {
                let outcomes = s
                    .outcomes
                    .iter()
                    .map(|c| {
                        c.iter()
                            .map(|r| {
                                r.iter()
                                    .map(|d| d.iter().map(|o| Outcome { prob: o.prob, cost: o.cost, next: o.next }).collect())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                let space = space(&s.weights, s.outcomes.len(), "weights")?;
                let model = MinimaxControlModel::new(outcomes, s.alpha, space).map_err(wrap("outcomes"))?;
                Ok(Model::Control { model, beta: s.beta })
            }
        }
    }

    pub fn from_markov(game: &MarkovGame, beta: Option<f64>) -> Self {
        let (n, m) = (game.n(), game.m());
        let spec = MarkovGameSpec {
            alpha: game.alpha(),
            beta,
            weights: (!game.space().is_uniform()).then(|| game.space().weights().to_vec()),
            payoffs: game.payoffs().iter().map(PayoffMatrix::to_rows).collect(),
            transitions: game
                .transitions()
                .iter()
                .map(|rows| (0..n).map(|i| (0..m).map(|j| rows[i * m + j].clone()).collect()).collect())
                .collect(),
        };
        let model = if game.is_terminating() {
            ModelSpec::TerminatingMarkovGame(spec)
        } else {
            ModelSpec::DiscountedMarkovGame(spec)
        };
        Self { version: FORMAT_VERSION, model, aggregation: None }
    }

    pub fn from_separated(model: &SeparatedMinimaxModel) -> Self {
        let moves = |m: &[Vec<(f64, usize)>]| {
            m.iter().map(|r| r.iter().map(|&(cost, next)| Move { cost, next }).collect()).collect()
        };
        let weights = |s: &WeightedSpace| (!s.is_uniform()).then(|| s.weights().to_vec());
        let spec = SeparatedSpec {
            alpha: model.alpha(),
            weights1: weights(model.space1()),
            weights2: weights(model.space2()),
            moves1: moves(model.moves1()),
            moves2: moves(model.moves2()),
        };
        Self { version: FORMAT_VERSION, model: ModelSpec::SeparatedModel(spec), aggregation: None }
    }

    pub fn from_control(model: &MinimaxControlModel, beta: Option<f64>) -> Self {
        let outcomes = model
            .outcomes()
            .iter()
            .map(|c| {
                c.iter()
                    .map(|r| {
                        r.iter()
                            .map(|d| d.iter().map(|o| OutcomeSpec { prob: o.prob, cost: o.cost, next: o.next }).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let spec = ControlSpec {
            alpha: model.alpha(),
            beta,
            weights: (!model.space().is_uniform()).then(|| model.space().weights().to_vec()),
            outcomes,
        };
        Self { version: FORMAT_VERSION, model: ModelSpec::MinimaxControl(spec), aggregation: None }
    }
}
