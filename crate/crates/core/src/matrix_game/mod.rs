//! Static zero-sum matrix games.
//!
//! The row player minimizes and the column player maximizes `u'Mv`. Both the
//! game value and the more general problem "minimize a pointwise maximum of
//! affine functions over the probability simplex" reduce to one epigraph LP,
//! solved by the dense simplex in [`lp`].

pub mod lp;

use crate::error::{Result, SolverError};
use lp::{Constraint, LinearProgram, Relation};

/// An `rows x cols` payoff matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SolverError::InvalidInput("payoff matrix must be at least 1x1".into()));
        }
        if entries.len() != rows * cols {
            return Err(SolverError::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidInput("payoff entries must be finite".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(SolverError::InvalidInput("ragged payoff matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.cols + j] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// `u'Mv`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, ui) in u.iter().enumerate() {
            if *ui == 0.0 {
                continue;
            }
            let row = self.row(i);
            acc += ui * row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
        acc
    }

    /// Row vector `u'M`.
    pub fn left_mul(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, ui) in u.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += ui * a;
            }
        }
        out
    }

    /// Column vector `Mv`.
    pub fn right_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|v| f(*v)).collect() }
    }
}

/// A probability distribution over a finite set of moves.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    /// Validates and cleans a probability vector: entries down to `-1e-12` are
    /// clamped to zero and the result is renormalized.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(SolverError::InvalidInput("empty strategy".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < -1e-12) {
            return Err(SolverError::InvalidInput(format!("invalid probabilities {probs:?}")));
        }
        let sum: f64 = probs.iter().map(|p| p.max(0.0)).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SolverError::InvalidInput(format!("probabilities sum to {sum}")));
        }
        Ok(Self::normalized(probs))
    }

    fn normalized(probs: Vec<f64>) -> Self {
        let clamped: Vec<f64> = probs.into_iter().map(|p| p.max(0.0)).collect();
        let sum: f64 = clamped.iter().sum();
        Self(clamped.into_iter().map(|p| p / sum).collect())
    }

    pub fn pure(len: usize, index: usize) -> Self {
        let mut p = vec![0.0; len];
        p[index] = 1.0;
        Self(p)
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Probabilities rounded to a `1e-9` grid, for exact comparison.
    pub fn rounded_key(&self) -> Vec<i64> {
        self.0.iter().map(|p| (p * 1e9).round() as i64).collect()
    }
}

/// Value and optimal strategies of a matrix game.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub value: f64,
    /// Minimizer (row player).
    pub u_star: MixedStrategy,
    /// Maximizer (column player).
    pub v_star: MixedStrategy,
}

/// An affine function `offset + u'coeffs` of a point `u` in the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub offset: f64,
    pub coeffs: Vec<f64>,
}

impl Line {
    pub fn new(offset: f64, coeffs: Vec<f64>) -> Self {
        Self { offset, coeffs }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.offset + self.coeffs.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Minimizes `max_k (offset_k + u'coeffs_k)` over the probability simplex.
///
/// Returns the minimum and an attaining strategy. The value returned is the
/// objective evaluated at the (cleaned) strategy, so it is always attained.
pub fn min_simplex_max_linear(lines: &[Line]) -> Result<(f64, MixedStrategy)> {
    let Some(first) = lines.first() else {
        return Err(SolverError::InvalidInput("no lines given".into()));
    };
    let n = first.coeffs.len();
    if n == 0 || lines.iter().any(|l| l.coeffs.len() != n) {
        return Err(SolverError::InvalidInput("lines must share one nonzero dimension".into()));
    }
    if n == 1 {
        let u = MixedStrategy::pure(1, 0);
        let value = lines.iter().map(|l| l.eval(u.probs())).fold(f64::NEG_INFINITY, f64::max);
        return Ok((value, u));
    }

    // Shift so every line is >= 1 on the simplex; the epigraph variable then
    // stays positive and fits the x >= 0 convention.
    let floor = lines
        .iter()
        .map(|l| l.offset + l.coeffs.iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    let shift = 1.0 - floor;

    // Variables: u_0..u_{n-1}, z.
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut constraints = Vec::with_capacity(lines.len() + 1);
    for l in lines {
        let mut coeffs: Vec<f64> = l.coeffs.iter().map(|c| -c).collect();
        coeffs.push(1.0);
        constraints.push(Constraint::new(coeffs, Relation::Ge, l.offset + shift));
    }
    let mut simplex = vec![1.0; n];
    simplex.push(0.0);
    constraints.push(Constraint::new(simplex, Relation::Eq, 1.0));

    let sol = lp::solve(&LinearProgram { objective, constraints })?;
    let u = MixedStrategy::new(sol.x[..n].to_vec())
        .map_err(|e| SolverError::LpNumericalFailure(format!("bad strategy from LP: {e}")))?;
    let value = lines.iter().map(|l| l.eval(u.probs())).fold(f64::NEG_INFINITY, f64::max);
    let lp_value = sol.objective - shift;
    if (value - lp_value).abs() > 1e-7 * (1.0 + value.abs()) {
        return Err(SolverError::LpNumericalFailure(format!(
            "objective {lp_value} disagrees with attained value {value}"
        )));
    }
    Ok((value, u))
}

/// Maximizes `min_k (offset_k + v'coeffs_k)` over the simplex.
pub fn max_simplex_min_linear(lines: &[Line]) -> Result<(f64, MixedStrategy)> {
    let negated: Vec<Line> = lines
        .iter()
        .map(|l| Line::new(-l.offset, l.coeffs.iter().map(|c| -c).collect()))
        .collect();
    let (value, v) = min_simplex_max_linear(&negated)?;
    Ok((-value, v))
}

/// Solves `min_u max_v u'Mv` and the dual `max_v min_u u'Mv` by two LPs.
///
/// Fails with `LpNumericalFailure` when the two values differ by more than
/// `tol`, which can only happen through loss of precision.
pub fn solve_matrix_game(m: &PayoffMatrix, tol: f64) -> Result<SaddleSolution> {
    if m.rows == 1 && m.cols == 1 {
        return Ok(SaddleSolution {
            value: m.get(0, 0),
            u_star: MixedStrategy::pure(1, 0),
            v_star: MixedStrategy::pure(1, 0),
        });
    }
    let columns: Vec<Line> = (0..m.cols).map(|j| Line::new(0.0, m.column(j))).collect();
    let rows: Vec<Line> = (0..m.rows).map(|i| Line::new(0.0, m.row(i).to_vec())).collect();
    let (upper, u_star) = min_simplex_max_linear(&columns)?;
    let (lower, v_star) = max_simplex_min_linear(&rows)?;
    let gap = upper - lower;
    if gap.abs() > tol.max(1e-12) * (1.0 + upper.abs()) {
        return Err(SolverError::LpNumericalFailure(format!(
            "duality gap {gap:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(SaddleSolution { value: 0.5 * (upper + lower), u_star, v_star })
}

/// The maximizer's best pure response to `u`: `max_j u'M(:,j)` and the lowest
/// attaining column.
pub fn best_response_value(m: &PayoffMatrix, u: &MixedStrategy) -> (f64, usize) {
    let payoffs = m.left_mul(u.probs());
    argmax(&payoffs)
}

/// Lowest index attaining the maximum.
pub(crate) fn argmax(values: &[f64]) -> (f64, usize) {
    let mut best = (values[0], 0);
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > best.0 {
            best = (*v, j);
        }
    }
    best
}

/// Lowest index attaining the minimum.
pub(crate) fn argmin(values: &[f64]) -> (f64, usize) {
    let mut best = (values[0], 0);
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v < best.0 {
            best = (*v, j);
        }
    }
    best
}
