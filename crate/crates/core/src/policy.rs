//! Fairness-constrained treatment policies as linear programs.
//!
//! Two families share one set of constraints:
//!
//! * equal opportunity (`m_r == 0`): one ratio per leaf, shared by every
//!   subgroup, so the opportunity bias is zero by construction;
//! * affirmative action (`m_r > 0`): one ratio per populated (leaf, subgroup)
//!   cell, with within-leaf gaps bounded by `m_r`.
//!
//! Both bound the outcome bias by `m_y` (an infinite `m_y` omits those rows)
//! and the treated count by `round(r_max * N)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_real;
use crate::leaf_stats::{self, LeafGroupStats, Policy};
use crate::lp::{solve, LinearProgram, LpStatus};

/// Tolerance for agreement between the LP objective and the recomputed
/// improvement.
const RECOMPUTE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConstraints {
    /// Largest tolerated outcome bias; `f64::INFINITY` for no bound.
    pub m_y: f64,
    /// Largest tolerated opportunity bias; 0 selects equal opportunity.
    pub m_r: f64,
    /// Largest treated share of the population.
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    EqualOpportunity,
    AffirmativeAction,
}

impl PolicyConstraints {
    pub fn new(m_y: f64, m_r: f64, r_max: f64) -> Result<Self> {
        let c = Self { m_y, m_r, r_max };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_y.is_nan() || self.m_y < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "m_y = {} must be >= 0",
                self.m_y
            )));
        }
        if !self.m_r.is_finite() || self.m_r < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "m_r = {} must be finite and >= 0",
                self.m_r
            )));
        }
        if !(0.0..=1.0).contains(&self.r_max) {
            return Err(Error::InvalidArgument(format!(
                "r_max = {} must lie in [0, 1]",
                self.r_max
            )));
        }
        Ok(())
    }

    pub fn family(&self) -> PolicyFamily {
        if self.m_r == 0.0 {
            PolicyFamily::EqualOpportunity
        } else {
            PolicyFamily::AffirmativeAction
        }
    }

    /// Treatment budget `round(r_max * n)`, halves rounded up.
    pub fn max_treated(&self, n: usize) -> usize {
        (self.r_max * n as f64 + 0.5).floor() as usize
    }

    pub fn with_m_y(self, m_y: f64) -> Self {
        Self { m_y, ..self }
    }

    pub fn with_m_r(self, m_r: f64) -> Self {
        Self { m_r, ..self }
    }
}

/// A built policy LP and the bookkeeping needed to read its solution back.
#[derive(Debug, Clone)]
pub struct PolicyLp {
    pub lp: LinearProgram,
    pub family: PolicyFamily,
    /// `(leaf, subgroup)` per variable; `subgroup` is `None` for leaf-level
    /// variables.
    pub variables: Vec<(usize, Option<usize>)>,
    /// Index range of the outcome-bias rows.
    pub bias_y_rows: std::ops::Range<usize>,
    /// Index range of the opportunity-bias rows.
    pub bias_r_rows: std::ops::Range<usize>,
    pub resource_row: usize,
}

/// Coefficients of subgroup `j`'s expected outcome as affine function of the
/// cell ratios: `ȳ_j(r) = base + Σ_i slope[i] * r_{i,j}`.
fn subgroup_form(stats: &LeafGroupStats, j: usize) -> (f64, Vec<f64>) {
    let size = stats.subgroup_size(j) as f64;
    let mut base = 0.0;
    let slope = (0..stats.n_leaves())
        .map(|i| {
            let c = stats.cell(i, j);
            base += c.n as f64 * c.y0 / size;
            c.n as f64 * c.tau() / size
        })
        .collect();
    (base, slope)
}

fn add_bias_y_rows(
    lp: &mut LinearProgram,
    stats: &LeafGroupStats,
    m_y: f64,
    column: impl Fn(usize, usize) -> Option<usize>,
) {
    if !m_y.is_finite() {
        return;
    }
    let groups = stats.populated_subgroups();
    let forms: Vec<(f64, Vec<f64>)> = groups.iter().map(|&j| subgroup_form(stats, j)).collect();
    for (a, &ja) in groups.iter().enumerate() {
        for (b, &jb) in groups.iter().enumerate() {
            if a == b {
                continue;
            }
            let mut row = vec![0.0; lp.n_vars()];
            for i in 0..stats.n_leaves() {
                if let Some(v) = column(i, ja) {
                    row[v] += forms[a].1[i];
                }
                if let Some(v) = column(i, jb) {
                    row[v] -= forms[b].1[i];
                }
            }
            lp.add_le(row, m_y - forms[a].0 + forms[b].0);
        }
    }
}

/// Equal-opportunity LP: one variable per leaf with estimation rows.
pub fn build_lp_equal(stats: &LeafGroupStats, c: &PolicyConstraints) -> Result<PolicyLp> {
    c.validate()?;
    let n = stats.n_total() as f64;
    let leaves: Vec<usize> = (0..stats.n_leaves())
        .filter(|&i| stats.leaf(i).n > 0)
        .collect();
    let mut var_of = vec![None; stats.n_leaves()];
    for (v, &i) in leaves.iter().enumerate() {
        var_of[i] = Some(v);
    }
    let objective = leaves
        .iter()
        .map(|&i| {
            (0..stats.k_subgroups())
                .map(|j| {
                    let cell = stats.cell(i, j);
                    cell.n as f64 * cell.tau()
                })
                .sum::<f64>()
                / n
        })
        .collect();
    let mut lp = LinearProgram::new(objective);
    lp.set_all_bounds(0.0, 1.0);

    add_bias_y_rows(&mut lp, stats, c.m_y, |i, _| var_of[i]);
    let bias_y_rows = 0..lp.n_constraints();

    let resource = leaves.iter().map(|&i| stats.leaf(i).n as f64 / n).collect();
    lp.add_le(resource, c.max_treated(stats.n_total()) as f64 / n);
    let resource_row = lp.n_constraints() - 1;
    Ok(PolicyLp {
        lp,
        family: PolicyFamily::EqualOpportunity,
        variables: leaves.into_iter().map(|i| (i, None)).collect(),
        bias_r_rows: bias_y_rows.end..bias_y_rows.end,
        bias_y_rows,
        resource_row,
    })
}

/// Affirmative-action LP: one variable per populated cell.
pub fn build_lp_affirmative(stats: &LeafGroupStats, c: &PolicyConstraints) -> Result<PolicyLp> {
    c.validate()?;
    let n = stats.n_total() as f64;
    let k = stats.k_subgroups();
    let mut variables = Vec::new();
    let mut var_of = vec![vec![None; k]; stats.n_leaves()];
    for (i, row) in var_of.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            if stats.cell(i, j).is_populated() {
                *slot = Some(variables.len());
                variables.push((i, Some(j)));
            }
        }
    }
    let objective = variables
        .iter()
        .map(|&(i, j)| {
            let cell = stats.cell(i, j.expect("cell variable"));
            cell.n as f64 * cell.tau() / n
        })
        .collect();
    let mut lp = LinearProgram::new(objective);
    lp.set_all_bounds(0.0, 1.0);

    add_bias_y_rows(&mut lp, stats, c.m_y, |i, j| var_of[i][j]);
    let bias_y_rows = 0..lp.n_constraints();

    for row in &var_of {
        let cols: Vec<usize> = row.iter().flatten().copied().collect();
        for &a in &cols {
            for &b in &cols {
                if a != b {
                    let mut coeffs = vec![0.0; variables.len()];
                    coeffs[a] = 1.0;
                    coeffs[b] = -1.0;
                    lp.add_le(coeffs, c.m_r);
                }
            }
        }
    }
    let bias_r_rows = bias_y_rows.end..lp.n_constraints();

    let resource = variables
        .iter()
        .map(|&(i, j)| stats.cell(i, j.expect("cell variable")).n as f64 / n)
        .collect();
    lp.add_le(resource, c.max_treated(stats.n_total()) as f64 / n);
    let resource_row = lp.n_constraints() - 1;
    Ok(PolicyLp {
        lp,
        family: PolicyFamily::AffirmativeAction,
        variables,
        bias_y_rows,
        bias_r_rows,
        resource_row,
    })
}

/// Builds the LP of the family selected by `c.m_r`.
pub fn build_lp(stats: &LeafGroupStats, c: &PolicyConstraints) -> Result<PolicyLp> {
    match c.family() {
        PolicyFamily::EqualOpportunity => build_lp_equal(stats, c),
        PolicyFamily::AffirmativeAction => build_lp_affirmative(stats, c),
    }
}

impl PolicyLp {
    /// Maps an LP solution back to a full policy table. Leaves without
    /// estimation rows get ratio 0; an empty cell in a populated leaf gets the
    /// count-weighted mean ratio of the leaf's populated cells.
    pub fn policy_from(&self, stats: &LeafGroupStats, x: &[f64]) -> Result<Policy> {
        let k = stats.k_subgroups();
        match self.family {
            PolicyFamily::EqualOpportunity => {
                let mut ratios = vec![0.0; stats.n_leaves()];
                for (&(i, _), &v) in self.variables.iter().zip(x) {
                    ratios[i] = v.clamp(0.0, 1.0);
                }
                Policy::per_leaf(&ratios, k)
            }
            PolicyFamily::AffirmativeAction => {
                let mut ratios = vec![vec![f64::NAN; k]; stats.n_leaves()];
                for (&(i, j), &v) in self.variables.iter().zip(x) {
                    ratios[i][j.expect("cell variable")] = v.clamp(0.0, 1.0);
                }
                for (i, row) in ratios.iter_mut().enumerate() {
                    let (mut w, mut s) = (0.0, 0.0);
                    for (j, r) in row.iter().enumerate() {
                        if !r.is_nan() {
                            let n = stats.cell(i, j).n as f64;
                            w += n;
                            s += n * r;
                        }
                    }
                    let fill = if w > 0.0 {
                        (s / w).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    for r in row.iter_mut().filter(|r| r.is_nan()) {
                        *r = fill;
                    }
                }
                Policy::per_cell(ratios)
            }
        }
    }
}

/// An optimal policy under its constraints, with its recomputed metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficientPolicy {
    pub policy: Policy,
    pub delta_y: f64,
    pub bias_y: f64,
    pub bias_r: f64,
    pub treated_fraction: f64,
    pub lp_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PolicyResult {
    Feasible(EfficientPolicy),
    Infeasible,
}

impl PolicyResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, PolicyResult::Feasible(_))
    }

    pub fn feasible(&self) -> Option<&EfficientPolicy> {
        match self {
            PolicyResult::Feasible(p) => Some(p),
            PolicyResult::Infeasible => None,
        }
    }

    pub fn delta_y(&self) -> Option<f64> {
        self.feasible().map(|p| p.delta_y)
    }

    pub fn status_label(&self) -> &'static str {
        if self.is_feasible() {
            "feasible"
        } else {
            "infeasible"
        }
    }
}

/// Solves for the efficient policy under `c`.
pub fn optimize(stats: &LeafGroupStats, c: &PolicyConstraints) -> Result<PolicyResult> {
    let built = build_lp(stats, c)?;
    let solution = solve(&built.lp)?;
    match solution.status {
        LpStatus::Infeasible => Ok(PolicyResult::Infeasible),
        LpStatus::Unbounded => Err(Error::Internal(
            "policy LP reported unbounded despite unit boxes".into(),
        )),
        LpStatus::Optimal => {
            let policy = built.policy_from(stats, &solution.x)?;
            let delta = leaf_stats::delta_y(&policy, stats)?;
            if (delta - solution.objective_value).abs() > RECOMPUTE_TOL {
                return Err(Error::Internal(format!(
                    "recomputed improvement {delta} disagrees with LP objective {}",
                    solution.objective_value
                )));
            }
            Ok(PolicyResult::Feasible(EfficientPolicy {
                bias_y: leaf_stats::bias_y(&policy, stats)?,
                bias_r: leaf_stats::bias_r(&policy, stats)?,
                treated_fraction: leaf_stats::treated_fraction(&policy, stats)?,
                delta_y: delta,
                lp_objective: solution.objective_value,
                policy,
            }))
        }
    }
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| v.is_nan()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{name} grid must be strictly ascending"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub constraints: PolicyConstraints,
    pub result: PolicyResult,
}

/// One optimization per `m_y` value, other constraints taken from `base`.
/// Output follows grid order.
pub fn sweep_frontier(
    stats: &LeafGroupStats,
    m_y_grid: &[f64],
    base: &PolicyConstraints,
) -> Result<Vec<FrontierPoint>> {
    check_grid("m_y", m_y_grid)?;
    m_y_grid
        .par_iter()
        .map(|&m_y| {
            let constraints = base.with_m_y(m_y);
            optimize(stats, &constraints).map(|result| FrontierPoint {
                constraints,
                result,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub m_y: Vec<f64>,
    pub m_r: Vec<f64>,
    pub r_max: f64,
    /// Row-major: `cells[a * m_r.len() + b]` is `(m_y[a], m_r[b])`.
    pub cells: Vec<PolicyResult>,
}

impl Heatmap {
    pub fn cell(&self, a: usize, b: usize) -> &PolicyResult {
        &self.cells[a * self.m_r.len() + b]
    }
}

/// Optimizes every `(m_y, m_r)` pair at a fixed `r_max`.
pub fn heatmap_grid(
    stats: &LeafGroupStats,
    m_y_grid: &[f64],
    m_r_grid: &[f64],
    r_max: f64,
) -> Result<Heatmap> {
    check_grid("m_y", m_y_grid)?;
    check_grid("m_r", m_r_grid)?;
    let pairs: Vec<(f64, f64)> = m_y_grid
        .iter()
        .flat_map(|&a| m_r_grid.iter().map(move |&b| (a, b)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(m_y, m_r)| optimize(stats, &PolicyConstraints::new(m_y, m_r, r_max)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap {
        m_y: m_y_grid.to_vec(),
        m_r: m_r_grid.to_vec(),
        r_max,
        cells,
    })
}

/// One row of a frontier or heatmap table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub constraints: PolicyConstraints,
    pub feasible: bool,
    pub delta_y: Option<f64>,
    pub bias_y: Option<f64>,
    pub bias_r: Option<f64>,
    pub treated_fraction: Option<f64>,
    pub feasible_fraction: f64,
}

impl SweepRow {
    pub fn from_result(constraints: PolicyConstraints, result: &PolicyResult) -> Self {
        let p = result.feasible();
        Self {
            constraints,
            feasible: p.is_some(),
            delta_y: p.map(|p| p.delta_y),
            bias_y: p.map(|p| p.bias_y),
            bias_r: p.map(|p| p.bias_r),
            treated_fraction: p.map(|p| p.treated_fraction),
            feasible_fraction: if p.is_some() { 1.0 } else { 0.0 },
        }
    }
}

pub const SWEEP_HEADER: [&str; 9] = [
    "m_y",
    "m_r",
    "r_max",
    "status",
    "delta_y",
    "bias_y",
    "bias_r",
    "treated_fraction",
    "feasible_fraction",
];

impl SweepRow {
    /// CSV fields in [`SWEEP_HEADER`] order; metrics are blank when unavailable.
    pub fn record(&self) -> [String; 9] {
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        [
            fmt_real(self.constraints.m_y),
            fmt_real(self.constraints.m_r),
            fmt_real(self.constraints.r_max),
            if self.feasible {
                "feasible"
            } else {
                "infeasible"
            }
            .to_string(),
            opt(self.delta_y),
            opt(self.bias_y),
            opt(self.bias_r),
            opt(self.treated_fraction),
            fmt_real(self.feasible_fraction),
        ]
    }
}

/// Writes sweep rows in long format.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaf_stats::CellStats;

    fn cell(n0: usize, n1: usize, y0: f64, y1: f64) -> CellStats {
        CellStats {
            n: n0 + n1,
            n0,
            n1,
            y0,
            y1,
            fallback: false,
        }
    }

    fn stats(cells: Vec<Vec<CellStats>>) -> LeafGroupStats {
        LeafGroupStats::from_cells(cells).unwrap()
    }

    #[test]
    fn constraint_validation_and_budget() {
        assert!(PolicyConstraints::new(-0.1, 0.0, 0.5).is_err());
        assert!(PolicyConstraints::new(0.1, -1.0, 0.5).is_err());
        assert!(PolicyConstraints::new(0.1, 0.0, 1.5).is_err());
        let c = PolicyConstraints::new(f64::INFINITY, 0.0, 0.25).unwrap();
        assert_eq!(c.max_treated(10), 3); // 2.5 rounds up
        assert_eq!(c.max_treated(9), 2);
        assert_eq!(c.family(), PolicyFamily::EqualOpportunity);
        assert_eq!(c.with_m_r(0.1).family(), PolicyFamily::AffirmativeAction);
    }

    #[test]
    fn single_cell_sign_decides() {
        for (tau, expected) in [(0.5, 1.0), (-0.5, 0.0)] {
            let s = stats(vec![vec![cell(5, 5, 1.0, 1.0 + tau)]]);
            let c = PolicyConstraints::new(1e6, 0.0, 1.0).unwrap();
            let r = optimize(&s, &c).unwrap();
            assert_eq!(r.feasible().unwrap().policy.ratio(0, 0), expected);
        }
    }

    #[test]
    fn equal_stats_rows_are_symmetric() {
        let s = stats(vec![vec![cell(3, 3, 0.0, 1.0), cell(3, 3, 0.0, 1.0)]]);
        let built = build_lp_equal(&s, &PolicyConstraints::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(built.bias_y_rows.len(), 2);
        for r in built.bias_y_rows.clone() {
            let (row, b) = built.lp.constraint(r);
            assert!(row.iter().all(|v| v.abs() < 1e-15));
            assert!(b.abs() < 1e-15);
        }
        let r = optimize(&s, &PolicyConstraints::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert!((r.delta_y().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_row_count() {
        let s = stats(vec![
            vec![cell(2, 2, 0.0, 1.0), cell(2, 1, 0.0, 0.5)],
            vec![cell(1, 2, 0.2, 0.4), cell(3, 3, 0.1, 0.0)],
            vec![cell(2, 2, 0.0, 0.3), cell(1, 1, 0.5, 0.6)],
        ]);
        let built = build_lp_equal(&s, &PolicyConstraints::new(0.1, 0.0, 0.5).unwrap()).unwrap();
        assert_eq!(built.lp.n_vars(), 3);
        assert_eq!(built.lp.n_constraints(), 2 + 1);
        let inf = build_lp_equal(
            &s,
            &PolicyConstraints::new(f64::INFINITY, 0.0, 0.5).unwrap(),
        )
        .unwrap();
        assert_eq!(inf.lp.n_constraints(), 1);
    }

    #[test]
    fn single_subgroup_affirmative_matches_equal() {
        let s = stats(vec![vec![cell(3, 2, 0.0, 1.0)], vec![cell(2, 2, 0.0, 2.0)]]);
        let c = PolicyConstraints::new(0.2, 0.3, 0.4).unwrap();
        let a = build_lp_affirmative(&s, &c).unwrap();
        let e = build_lp_equal(&s, &c).unwrap();
        assert_eq!(a.lp.objective(), e.lp.objective());
        assert_eq!(a.lp.n_constraints(), e.lp.n_constraints());
        let ra = optimize(&s, &c).unwrap().delta_y().unwrap();
        let re = optimize(&s, &c.with_m_r(0.0)).unwrap().delta_y().unwrap();
        assert!((ra - re).abs() < 1e-12);
    }

    #[test]
    fn zero_opportunity_gap_matches_equal_family() {
        let s = stats(vec![
            vec![cell(4, 4, 0.0, 1.0), cell(5, 5, 0.2, 0.5)],
            vec![cell(3, 3, 0.1, 0.9), cell(2, 2, 0.0, 1.5)],
        ]);
        let base = PolicyConstraints::new(0.15, 0.0, 0.5).unwrap();
        let equal = optimize(&s, &base).unwrap().delta_y().unwrap();
        // Affirmative LP with m_r = 0 built directly.
        let built = build_lp_affirmative(&s, &base).unwrap();
        let sol = solve(&built.lp).unwrap();
        assert!((sol.objective_value - equal).abs() < 1e-9);
    }

    #[test]
    fn loose_bias_is_fractional_knapsack() {
        let s = stats(vec![
            vec![cell(5, 5, 0.0, 1.0), cell(5, 5, 0.0, 0.2)],
            vec![cell(5, 5, 0.0, 0.6), cell(5, 5, 0.0, -0.1)],
        ]);
        let c = PolicyConstraints::new(1e9, 1.0, 0.3).unwrap();
        let got = optimize(&s, &c).unwrap().delta_y().unwrap();
        // Budget 12 of 40 rows: 10 at tau 1.0, 2 at tau 0.6.
        let expected = (10.0 * 1.0 + 2.0 * 0.6) / 40.0;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_full_budget_treats_nonnegative_leaves() {
        let s = stats(vec![
            vec![cell(5, 5, 0.0, 1.0), cell(5, 5, 0.0, 0.2)],
            vec![cell(5, 5, 0.0, 0.6), cell(5, 5, 0.0, 0.1)],
        ]);
        let r = optimize(
            &s,
            &PolicyConstraints::new(f64::INFINITY, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let p = &r.feasible().unwrap().policy;
        assert_eq!(p.leaf_ratio(0), Some(1.0));
        assert_eq!(p.leaf_ratio(1), Some(1.0));
    }

    #[test]
    fn gap_too_wide_is_infeasible() {
        // Baseline subgroup gap 0.5; effects at most 0.2.
        let s = stats(vec![
            vec![cell(10, 10, 1.0, 1.1), cell(10, 10, 0.5, 0.7)],
            vec![cell(10, 10, 1.0, 1.0), cell(10, 10, 0.5, 0.6)],
        ]);
        let c = PolicyConstraints::new(0.1, 0.0, 0.05).unwrap();
        assert_eq!(optimize(&s, &c).unwrap(), PolicyResult::Infeasible);
        let zero = PolicyConstraints::new(0.5, 0.0, 0.0).unwrap();
        let r = optimize(&s, &zero).unwrap();
        assert_eq!(r.delta_y(), Some(0.0));
    }

    #[test]
    fn grids_are_validated() {
        let s = stats(vec![vec![cell(1, 1, 0.0, 1.0)]]);
        let base = PolicyConstraints::new(0.0, 0.0, 0.5).unwrap();
        assert!(sweep_frontier(&s, &[], &base).is_err());
        assert!(sweep_frontier(&s, &[0.2, 0.1], &base).is_err());
        assert_eq!(sweep_frontier(&s, &[0.3], &base).unwrap().len(), 1);
    }

    #[test]
    fn sweep_csv_layout() {
        let c = PolicyConstraints::new(0.1, 0.0, 0.5).unwrap();
        let rows = [SweepRow::from_result(c, &PolicyResult::Infeasible)];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "m_y,m_r,r_max,status,delta_y,bias_y,bias_r,treated_fraction,feasible_fraction\n\
             0.10000000000000001,0,0.5,infeasible,,,,,0\n"
        );
    }
}
