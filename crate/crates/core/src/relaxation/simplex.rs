//! Dense two-phase primal simplex with Bland's rule.

use super::lp::{LinearProgram, Sense};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// One multiplier per row of the program.
    pub row_duals: Vec<f64>,
    /// One multiplier per finite upper bound (zero for unbounded variables).
    pub bound_duals: Vec<f64>,
    /// Dual objective; equals `value` at optimality up to rounding.
    pub dual_value: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_pivots: 1_000_000,
        }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    d: Vec<f64>,
    /// Current objective value.
    z: f64,
    artificial: Vec<bool>,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, q: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.max_pivots {
            return Err(Error::IterationLimit(self.max_pivots));
        }
        let w = self.width;
        let p = self.t[r * w + q];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[q];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for j in 0..w - 1 {
                self.d[j] -= f * prow[j];
            }
            self.d[q] = 0.0;
            self.z += f * prow[w - 1];
        }
        self.basis[r] = q;
        Ok(())
    }

    /// Runs Bland pivots until optimal; `Ok(false)` means unbounded.
    fn optimize(&mut self) -> Result<bool> {
        loop {
            let Some(q) =
                (0..self.width - 1).find(|&j| !self.artificial[j] && self.d[j] < -COST_TOL)
            else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    let take = match leave {
                        None => true,
                        Some((r, best)) => {
                            ratio < best || (ratio == best && self.basis[i] < self.basis[r])
                        }
                    };
                    if take {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(r, q)?;
        }
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.width;
        self.d = cost.to_vec();
        self.z = 0.0;
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w - 1 {
                    self.d[j] -= cb * self.t[i * w + j];
                }
                self.z += cb * self.t[i * w + w - 1];
            }
        }
    }
}

/// Solves `lp`. Upper bounds become extra rows.
pub fn simplex_solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpOutcome> {
    let n = lp.num_vars();
    struct Row {
        coeffs: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    }
    let mut rows: Vec<Row> = lp
        .rows
        .iter()
        .map(|r| Row {
            coeffs: r.coeffs.clone(),
            sense: r.sense,
            rhs: r.rhs,
        })
        .collect();
    let mut bound_row = vec![usize::MAX; n];
    for (j, &u) in lp.upper.iter().enumerate() {
        if u.is_finite() {
            bound_row[j] = rows.len();
            rows.push(Row {
                coeffs: vec![(j, 1.0)],
                sense: Sense::Le,
                rhs: u,
            });
        }
    }
    for r in &rows {
        if !r.rhs.is_finite() || r.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
            return Err(Error::Validation(
                "linear program has a non-finite or out-of-range entry".into(),
            ));
        }
    }
    let m = rows.len();
    let sign: Vec<f64> = rows
        .iter()
        .map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 })
        .collect();
    // column layout: structural, then one identity column per row, then surplus columns
    let surplus: Vec<Option<usize>> = {
        let mut next = n + m;
        rows.iter()
            .zip(&sign)
            .map(|(r, &s)| {
                let ge = matches!((r.sense, s < 0.0), (Sense::Ge, false) | (Sense::Le, true));
                ge.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let cols = n + m + surplus.iter().flatten().count();
    let width = cols + 1;
    let mut t = vec![0.0; m * width];
    let mut artificial = vec![false; cols];
    for (i, r) in rows.iter().enumerate() {
        let s = sign[i];
        for &(j, a) in &r.coeffs {
            t[i * width + j] += s * a;
        }
        t[i * width + n + i] = 1.0;
        if let Some(c) = surplus[i] {
            t[i * width + c] = -1.0;
        }
        t[i * width + cols] = s * r.rhs;
        artificial[n + i] = r.sense == Sense::Eq || surplus[i].is_some();
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        basis: (n..n + m).collect(),
        d: Vec::new(),
        z: 0.0,
        artificial: vec![false; cols],
        pivots: 0,
        max_pivots: opts.max_pivots,
    };

    if artificial.iter().any(|&a| a) {
        let phase1: Vec<f64> = artificial
            .iter()
            .map(|&a| if a { 1.0 } else { 0.0 })
            .collect();
        tab.set_costs(&phase1);
        // artificials may leave but never re-enter
        tab.artificial = artificial.clone();
        tab.optimize()?;
        let scale = 1.0 + rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if tab.z > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        for i in 0..m {
            if artificial[tab.basis[i]] {
                if let Some(q) =
                    (0..cols).find(|&j| !artificial[j] && tab.at(i, j).abs() > PIVOT_TOL)
                {
                    tab.pivot(i, q)?;
                }
                // otherwise the row is redundant and its artificial stays at zero
            }
        }
    }
    tab.artificial = artificial;
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    tab.set_costs(&cost);
    if !tab.optimize()? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i).max(0.0);
        }
    }
    let duals: Vec<f64> = (0..m).map(|i| -tab.d[n + i] * sign[i]).collect();
    let dual_value = lp.offset + duals.iter().zip(&rows).map(|(y, r)| y * r.rhs).sum::<f64>();
    let bound_duals = bound_row
        .iter()
        .map(|&r| if r == usize::MAX { 0.0 } else { duals[r] })
        .collect();
    Ok(LpOutcome::Optimal(LpSolution {
        value: lp.value(&x),
        x,
        row_duals: duals[..lp.rows.len()].to_vec(),
        bound_duals,
        dual_value,
        pivots: tab.pivots,
    }))
}
