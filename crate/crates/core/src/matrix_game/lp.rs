//! Dense two-phase simplex method with Bland's anti-cycling rule.
//!
//! Solves `min c'x` subject to linear constraints and `x >= 0`. The tableau is
//! dense and owned by a single solve, which is all the matrix-game code needs:
//! problems have at most a few dozen rows and columns.

use crate::error::{Result, SolverError};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;
const FEASIBILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }
}

/// A linear program in minimization form over nonnegative variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColumnKind {
    Original,
    Slack,
    Artificial,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry holds minus the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    kinds: Vec<ColumnKind>,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.kinds.len()
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width()]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..=w {
                    row[j] -= f * pivot_row[j];
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for j in 0..=w {
                self.cost[j] -= f * pivot_row[j];
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Installs reduced costs for the cost vector `c` (indexed by column).
    fn price(&mut self, c: &[f64]) {
        let w = self.width();
        let mut cost = vec![0.0; w + 1];
        cost[..w].copy_from_slice(c);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = c[b];
            if cb != 0.0 {
                for j in 0..=w {
                    cost[j] -= cb * self.rows[i][j];
                }
            }
        }
        self.cost = cost;
    }

    /// Runs simplex pivots with Bland's rule until optimal.
    fn optimize(&mut self, allow: impl Fn(ColumnKind) -> bool) -> Result<()> {
        loop {
            if self.pivots > self.max_pivots {
                return Err(SolverError::LpNumericalFailure(format!(
                    "pivot limit {} exceeded",
                    self.max_pivots
                )));
            }
            let entering = (0..self.width())
                .find(|&j| allow(self.kinds[j]) && self.cost[j] < -COST_EPS);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(SolverError::LpUnbounded);
            };
            self.pivot(r, c);
        }
    }
}

/// Solves the program with the two-phase simplex method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    if lp.constraints.iter().any(|c| c.coeffs.len() != n) {
        return Err(SolverError::InvalidInput(
            "constraint width differs from objective".into(),
        ));
    }
    if lp.objective.iter().chain(lp.constraints.iter().flat_map(|c| c.coeffs.iter()))
        .chain(lp.constraints.iter().map(|c| &c.rhs))
        .any(|v| !v.is_finite())
    {
        return Err(SolverError::InvalidInput("non-finite LP data".into()));
    }

    // Normalize to nonnegative right-hand sides.
    let normalized: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let rel = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), rel, -c.rhs)
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            }
        })
        .collect();

    let m = normalized.len();
    let slack_count = normalized.iter().filter(|c| c.1 != Relation::Eq).count();
    let art_count = normalized.iter().filter(|c| c.1 != Relation::Le).count();
    let width = n + slack_count + art_count;

    let mut kinds = vec![ColumnKind::Original; n];
    kinds.extend(std::iter::repeat(ColumnKind::Slack).take(slack_count));
    kinds.extend(std::iter::repeat(ColumnKind::Artificial).take(art_count));

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (n, n + slack_count);
    for (coeffs, rel, rhs) in &normalized {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(coeffs);
        row[width] = *rhs;
        match rel {
            Relation::Le => {
                row[next_slack] = 1.0;
                basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        cost: Vec::new(),
        basis,
        kinds,
        pivots: 0,
        max_pivots: 50 * (m + width) + 1000,
    };

    if art_count > 0 {
        let phase1: Vec<f64> = tab
            .kinds
            .iter()
            .map(|k| if *k == ColumnKind::Artificial { 1.0 } else { 0.0 })
            .collect();
        tab.price(&phase1);
        tab.optimize(|_| true)?;
        let infeasibility = -tab.cost[width];
        let scale = 1.0 + normalized.iter().map(|c| c.2).fold(0.0, f64::max);
        if infeasibility > FEASIBILITY_EPS * scale {
            return Err(SolverError::LpInfeasible);
        }
        // Drive artificial variables out of the basis where possible.
        for r in 0..m {
            if tab.kinds[tab.basis[r]] == ColumnKind::Artificial {
                let col = (0..width).find(|&j| {
                    tab.kinds[j] != ColumnKind::Artificial && tab.rows[r][j].abs() > 1e-9
                });
                if let Some(c) = col {
                    tab.pivot(r, c);
                }
            }
        }
    }

    let mut phase2 = vec![0.0; width];
    phase2[..n].copy_from_slice(&lp.objective);
    tab.price(&phase2);
    tab.optimize(|k| k != ColumnKind::Artificial)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(i);
        }
    }
    for v in x.iter_mut() {
        if *v < 0.0 && *v > -1e-9 {
            *v = 0.0;
        }
    }
    check_feasible(lp, &x)?;
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, objective, pivots: tab.pivots })
}

fn check_feasible(lp: &LinearProgram, x: &[f64]) -> Result<()> {
    if x.iter().any(|v| *v < -1e-7 || !v.is_finite()) {
        return Err(SolverError::LpNumericalFailure("negative variable in solution".into()));
    }
    for (k, c) in lp.constraints.iter().enumerate() {
        let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let slack = 1e-7 * (1.0 + c.rhs.abs() + lhs.abs());
        let ok = match c.relation {
            Relation::Le => lhs <= c.rhs + slack,
            Relation::Ge => lhs >= c.rhs - slack,
            Relation::Eq => (lhs - c.rhs).abs() <= slack,
        };
        if !ok {
            return Err(SolverError::LpNumericalFailure(format!(
                "constraint {k} violated after solve"
            )));
        }
    }
    Ok(())
}
