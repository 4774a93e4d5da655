//! Dense two-phase primal simplex for small linear programs.
//!
//! Problems have the form `maximize c·x subject to A x <= b, l <= x <= u`.
//! Variables are shifted to a zero lower bound and finite upper bounds become
//! explicit rows. Phase one minimizes the sum of artificial variables for rows
//! whose shifted right-hand side is negative; a positive residual certifies
//! infeasibility. Both phases use Bland's rule, so the pivot sequence is a
//! deterministic function of the input.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// Maximize `objective · x` with every variable in `[0, +inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            rhs: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    /// Adds `coeffs · x <= bound`.
    pub fn add_le(&mut self, coeffs: Vec<f64>, bound: f64) -> &mut Self {
        self.rows.push(coeffs);
        self.rhs.push(bound);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.bounds[var] = (lower, upper);
        self
    }

    pub fn set_all_bounds(&mut self, lower: f64, upper: f64) -> &mut Self {
        for b in &mut self.bounds {
            *b = (lower, upper);
        }
        self
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraint(&self, r: usize) -> (&[f64], f64) {
        (&self.rows[r], self.rhs[r])
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Loosens (or tightens, for negative `delta`) one right-hand side.
    pub fn shift_rhs(&mut self, r: usize, delta: f64) {
        self.rhs[r] += delta;
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedLp(
                "non-finite objective coefficient".into(),
            ));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|a| !a.is_finite()) || !self.rhs[r].is_finite() {
                return Err(Error::MalformedLp(format!("non-finite entry in row {r}")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || lo > hi || hi == f64::NEG_INFINITY {
                return Err(Error::MalformedLp(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            worst = worst.max(lhs - b);
        }
        for (&(lo, hi), &v) in self.bounds.iter().zip(x) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Plain-text dump in a "maximize / subject to / bounds / end" layout
    /// that LP-format readers accept.
    pub fn to_lp_text(&self) -> String {
        fn terms(out: &mut String, coeffs: &[f64]) {
            let mut any = false;
            for (j, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    let sign = if a < 0.0 { '-' } else { '+' };
                    let _ = write!(out, " {sign} {:e} x{j}", a.abs());
                    any = true;
                }
            }
            if !any {
                out.push_str(" 0 x0");
            }
        }
        let mut out = String::from("maximize\n obj:");
        terms(&mut out, &self.objective);
        out.push_str("\nsubject to\n");
        for (r, (row, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
            let _ = write!(out, " c{r}:");
            terms(&mut out, row);
            let _ = writeln!(out, " <= {b:e}");
        }
        out.push_str("bounds\n");
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            if hi.is_finite() {
                let _ = writeln!(out, " {lo:e} <= x{j} <= {hi:e}");
            } else {
                let _ = writeln!(out, " x{j} >= {lo:e}");
            }
        }
        out.push_str("end\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimizer when `status` is optimal, empty otherwise.
    pub x: Vec<f64>,
    /// `c·x` at the optimizer; NaN unless optimal.
    pub objective_value: f64,
    /// Sum of artificial variables at the end of phase one. Strictly positive
    /// (above the feasibility tolerance) exactly when the LP is infeasible.
    pub phase_one_residual: f64,
    pub pivots: usize,
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    /// Reduced costs; the last entry holds `-z`.
    cost: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.width + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width)
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.width + 1;
        &mut self.data[r * w..(r + 1) * w]
    }

    fn set_objective(&mut self, c: &[f64]) {
        let w = self.width + 1;
        let mut cost = vec![0.0; w];
        cost[..self.width].copy_from_slice(c);
        for r in 0..self.m() {
            let cb = c[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * w..(r + 1) * w];
                for (k, v) in cost.iter_mut().zip(row) {
                    *k -= cb * v;
                }
            }
        }
        self.cost = cost;
    }

    fn value(&self) -> f64 {
        -self.cost[self.width]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width + 1;
        let p = self.at(r, e);
        for v in self.row_mut(r) {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for other in 0..self.m() {
            if other == r {
                continue;
            }
            let f = self.at(other, e);
            if f != 0.0 {
                for (v, pr) in self.row_mut(other).iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        let f = self.cost[e];
        if f != 0.0 {
            for (v, pr) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Bland's rule: lowest-index improving column enters; among minimum
    /// ratio rows the one with the lowest-index basic variable leaves.
    fn run(&mut self, allowed: usize) -> Result<Outcome> {
        for _ in 0..MAX_ITERATIONS {
            let Some(e) = (0..allowed).find(|&j| self.cost[j] > PIVOT_TOL) else {
                return Ok(Outcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m() {
                let a = self.at(r, e);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, best)) => {
                        if ratio < best - RATIO_TIE
                            || (ratio <= best + RATIO_TIE && self.basis[r] < self.basis[br])
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, best))
                        }
                    }
                };
            }
            match leave {
                None => return Ok(Outcome::Unbounded),
                Some((r, _)) => self.pivot(r, e),
            }
        }
        Err(Error::Internal(format!(
            "simplex exceeded {MAX_ITERATIONS} iterations"
        )))
    }
}

/// Solves `lp`. Deterministic: identical input gives a bit-identical result.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.n_vars();
    let lower: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();

    // Shifted rows x' = x - l.
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .rows
        .iter()
        .zip(&lp.rhs)
        .map(|(a, &b)| {
            let shift: f64 = a.iter().zip(&lower).map(|(ai, li)| ai * li).sum();
            (a.clone(), b - shift)
        })
        .collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e, hi - lo));
        }
    }
    let m = rows.len();
    let negated: Vec<bool> = rows.iter().map(|(_, b)| *b < 0.0).collect();
    let n_art = negated.iter().filter(|&&neg| neg).count();
    let width = n + m + n_art;

    let mut data = vec![0.0; m * (width + 1)];
    let mut basis = Vec::with_capacity(m);
    let mut art = n + m;
    for (r, (a, b)) in rows.iter().enumerate() {
        let sign = if negated[r] { -1.0 } else { 1.0 };
        let row = &mut data[r * (width + 1)..(r + 1) * (width + 1)];
        for (dst, &v) in row.iter_mut().zip(a) {
            *dst = sign * v;
        }
        row[n + r] = sign;
        row[width] = sign * b;
        if negated[r] {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(n + r);
        }
    }
    let mut tab = Tableau {
        width,
        data,
        cost: Vec::new(),
        basis,
        pivots: 0,
    };

    let mut residual = 0.0;
    if n_art > 0 {
        let mut phase_one = vec![0.0; width];
        for c in &mut phase_one[n + m..] {
            *c = -1.0;
        }
        tab.set_objective(&phase_one);
        tab.run(width)?;
        residual = -tab.value();
        if residual > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective_value: f64::NAN,
                phase_one_residual: residual,
                pivots: tab.pivots,
            });
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        for r in 0..m {
            if tab.basis[r] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| tab.at(r, j).abs() > PIVOT_TOL) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    let mut phase_two = vec![0.0; width];
    phase_two[..n].copy_from_slice(&lp.objective);
    tab.set_objective(&phase_two);
    if let Outcome::Unbounded = tab.run(n + m)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective_value: f64::NAN,
            phase_one_residual: residual,
            pivots: tab.pivots,
        });
    }

    let mut shifted = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            shifted[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let x: Vec<f64> = shifted
        .iter()
        .zip(&lp.bounds)
        .map(|(&v, &(lo, hi))| (lo + v).clamp(lo, hi))
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.evaluate(&x),
        x,
        phase_one_residual: residual,
        pivots: tab.pivots,
    })
}
