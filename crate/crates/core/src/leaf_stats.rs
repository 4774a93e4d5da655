//! Per-leaf, per-subgroup sufficient statistics and the two bias metrics.
//!
//! Everything here is a pure function of an immutable [`LeafGroupStats`]
//! and a candidate [`Policy`] of treatment ratios.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::format::fmt_real;

/// Counts and arm means of one (leaf, subgroup) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    pub n0: usize,
    pub n1: usize,
    pub y0: f64,
    pub y1: f64,
    /// Set when either arm mean was inherited from a coarser level.
    pub fallback: bool,
}

impl CellStats {
    pub fn tau(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn is_populated(&self) -> bool {
        self.n > 0
    }
}

/// Leaf-level aggregate. `y0`/`y1` are subgroup-count-weighted means of the
/// cell means, so `n * y_t == Σ_j n_j * y_{j,t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafTotals {
    pub n: usize,
    pub n0: usize,
    pub n1: usize,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafGroupStats {
    k_subgroups: usize,
    leaves: Vec<LeafTotals>,
    /// `cells[leaf][subgroup]`
    cells: Vec<Vec<CellStats>>,
    /// Plain difference-of-means inputs per leaf: `(ȳ(0), ȳ(1))` over the
    /// leaf's estimation rows, with the global arm mean for an empty arm.
    raw_arm_means: Vec<(f64, f64)>,
    n_total: usize,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n0: usize,
    n1: usize,
    s0: f64,
    s1: f64,
}

impl Acc {
    fn add(&mut self, y: f64, treated: bool) {
        if treated {
            self.n1 += 1;
            self.s1 += y;
        } else {
            self.n0 += 1;
            self.s0 += y;
        }
    }

    fn mean0(&self) -> Option<f64> {
        (self.n0 > 0).then(|| self.s0 / self.n0 as f64)
    }

    fn mean1(&self) -> Option<f64> {
        (self.n1 > 0).then(|| self.s1 / self.n1 as f64)
    }
}

/// Tabulates estimation rows by leaf and subgroup.
///
/// Empty arm means fall back from cell to leaf to global level; a global arm
/// with no rows is an estimation failure.
pub fn tabulate(
    leaf_assignment: &[usize],
    est: &Dataset,
    n_leaves: usize,
    k_subgroups: usize,
) -> Result<LeafGroupStats> {
    if leaf_assignment.len() != est.len() {
        return Err(Error::DimensionMismatch {
            expected: est.len(),
            got: leaf_assignment.len(),
        });
    }
    if k_subgroups < est.k_subgroups() {
        return Err(Error::InvalidArgument(format!(
            "k_subgroups = {k_subgroups} is below the dataset's {}",
            est.k_subgroups()
        )));
    }
    let mut global = Acc::default();
    let mut leaf_acc = vec![Acc::default(); n_leaves];
    let mut cell_acc = vec![vec![Acc::default(); k_subgroups]; n_leaves];
    for (obs, &leaf) in est.observations().iter().zip(leaf_assignment) {
        if leaf >= n_leaves {
            return Err(Error::InvalidArgument(format!(
                "leaf id {leaf} out of range for {n_leaves} leaves"
            )));
        }
        global.add(obs.y, obs.treated);
        leaf_acc[leaf].add(obs.y, obs.treated);
        cell_acc[leaf][obs.z].add(obs.y, obs.treated);
    }
    let (g0, g1) = match (global.mean0(), global.mean1()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::EstimationFailure(format!(
                "estimation set has {} control and {} treated rows",
                global.n0, global.n1
            )))
        }
    };

    let mut leaves = Vec::with_capacity(n_leaves);
    let mut cells = Vec::with_capacity(n_leaves);
    let mut raw_arm_means = Vec::with_capacity(n_leaves);
    for (acc, cell_row) in leaf_acc.iter().zip(&cell_acc) {
        let l0 = acc.mean0().unwrap_or(g0);
        let l1 = acc.mean1().unwrap_or(g1);
        raw_arm_means.push((l0, l1));
        let row: Vec<CellStats> = cell_row
            .iter()
            .map(|c| CellStats {
                n: c.n0 + c.n1,
                n0: c.n0,
                n1: c.n1,
                y0: c.mean0().unwrap_or(l0),
                y1: c.mean1().unwrap_or(l1),
                fallback: c.n0 == 0 || c.n1 == 0,
            })
            .collect();
        let n = acc.n0 + acc.n1;
        let (y0, y1) = if n > 0 {
            let w0: f64 = row.iter().map(|c| c.n as f64 * c.y0).sum();
            let w1: f64 = row.iter().map(|c| c.n as f64 * c.y1).sum();
            (w0 / n as f64, w1 / n as f64)
        } else {
            (l0, l1)
        };
        leaves.push(LeafTotals {
            n,
            n0: acc.n0,
            n1: acc.n1,
            y0,
            y1,
        });
        cells.push(row);
    }
    Ok(LeafGroupStats {
        k_subgroups,
        leaves,
        cells,
        raw_arm_means,
        n_total: est.len(),
    })
}

impl LeafGroupStats {
    /// Builds stats directly from cell tables (`cells[leaf][subgroup]`).
    /// Leaf totals are derived; cells with `n == 0` keep their given means.
    pub fn from_cells(cells: Vec<Vec<CellStats>>) -> Result<Self> {
        let k = cells.first().map_or(0, Vec::len);
        if k == 0 || cells.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument(
                "cells must be a non-empty rectangular table".into(),
            ));
        }
        for c in cells.iter().flatten() {
            if c.n0 + c.n1 != c.n || !c.y0.is_finite() || !c.y1.is_finite() {
                return Err(Error::InvalidArgument(format!("inconsistent cell {c:?}")));
            }
        }
        let mut leaves = Vec::new();
        let mut raw = Vec::new();
        for row in &cells {
            let n: usize = row.iter().map(|c| c.n).sum();
            let n0 = row.iter().map(|c| c.n0).sum();
            let n1 = row.iter().map(|c| c.n1).sum();
            let (y0, y1) = if n > 0 {
                (
                    row.iter().map(|c| c.n as f64 * c.y0).sum::<f64>() / n as f64,
                    row.iter().map(|c| c.n as f64 * c.y1).sum::<f64>() / n as f64,
                )
            } else {
                (row[0].y0, row[0].y1)
            };
            leaves.push(LeafTotals { n, n0, n1, y0, y1 });
            raw.push((y0, y1));
        }
        let n_total = leaves.iter().map(|l| l.n).sum();
        if n_total == 0 {
            return Err(Error::InvalidArgument(
                "stats contain no observations".into(),
            ));
        }
        Ok(Self {
            k_subgroups: k,
            leaves,
            cells,
            raw_arm_means: raw,
            n_total,
        })
    }

    /// Reassembles stats from their stored parts (tree documents).
    pub(crate) fn from_raw_parts(
        k_subgroups: usize,
        leaves: Vec<LeafTotals>,
        cells: Vec<Vec<CellStats>>,
        raw_arm_means: Vec<(f64, f64)>,
        n_total: usize,
    ) -> Result<Self> {
        let counted: usize = leaves.iter().map(|l| l.n).sum();
        if counted != n_total || cells.len() != leaves.len() || raw_arm_means.len() != leaves.len()
        {
            return Err(Error::InvalidArgument(
                "inconsistent leaf statistics".into(),
            ));
        }
        Ok(Self {
            k_subgroups,
            leaves,
            cells,
            raw_arm_means,
            n_total,
        })
    }

    pub fn k_subgroups(&self) -> usize {
        self.k_subgroups
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn leaf(&self, i: usize) -> &LeafTotals {
        &self.leaves[i]
    }

    pub fn cell(&self, i: usize, j: usize) -> &CellStats {
        &self.cells[i][j]
    }

    pub fn raw_leaf_arm_means(&self) -> &[(f64, f64)] {
        &self.raw_arm_means
    }

    /// Number of rows in subgroup `j` across all leaves.
    pub fn subgroup_size(&self, j: usize) -> usize {
        self.cells.iter().map(|row| row[j].n).sum()
    }

    /// Subgroups with at least one estimation row.
    pub fn populated_subgroups(&self) -> Vec<usize> {
        (0..self.k_subgroups)
            .filter(|&j| self.subgroup_size(j) > 0)
            .collect()
    }

    pub fn fallback_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.fallback).count()
    }

    /// Observed treatment ratio `n1 / n` of a cell; 0 for an empty cell.
    pub fn observed_ratio(&self, i: usize, j: usize) -> f64 {
        let c = &self.cells[i][j];
        if c.n == 0 {
            0.0
        } else {
            c.n1 as f64 / c.n as f64
        }
    }

    /// Mean outcome with no one treated: `N⁻¹ Σ_i n_i ȳ_i(0)`.
    pub fn baseline_outcome(&self) -> f64 {
        let s: f64 = self.cells.iter().flatten().map(|c| c.n as f64 * c.y0).sum();
        s / self.n_total as f64
    }

    /// Writes `leaf_id, subgroup, n, n0, n1, y0, y1, fallback_flag`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record([
            "leaf_id",
            "subgroup",
            "n",
            "n0",
            "n1",
            "y0",
            "y1",
            "fallback_flag",
        ])?;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                out.write_record([
                    i.to_string(),
                    j.to_string(),
                    c.n.to_string(),
                    c.n0.to_string(),
                    c.n1.to_string(),
                    fmt_real(c.y0),
                    fmt_real(c.y1),
                    u8::from(c.fallback).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Treatment ratios per (leaf, subgroup).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    ratios: Vec<Vec<f64>>,
    shared_within_leaf: bool,
}

impl Policy {
    /// Subgroup-specific ratios, `ratios[leaf][subgroup]`.
    pub fn per_cell(ratios: Vec<Vec<f64>>) -> Result<Self> {
        if ratios.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidArgument("ratios must lie in [0, 1]".into()));
        }
        Ok(Self {
            ratios,
            shared_within_leaf: false,
        })
    }

    /// One ratio per leaf, replicated over `k_subgroups`.
    pub fn per_leaf(leaf_ratios: &[f64], k_subgroups: usize) -> Result<Self> {
        let mut p = Self::per_cell(leaf_ratios.iter().map(|&r| vec![r; k_subgroups]).collect())?;
        p.shared_within_leaf = true;
        Ok(p)
    }

    pub fn uniform(n_leaves: usize, k_subgroups: usize, ratio: f64) -> Result<Self> {
        Self::per_leaf(&vec![ratio; n_leaves], k_subgroups)
    }

    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        self.ratios[i][j]
    }

    /// The shared ratio of leaf `i`; only meaningful for per-leaf policies.
    pub fn leaf_ratio(&self, i: usize) -> Option<f64> {
        self.shared_within_leaf.then(|| self.ratios[i][0])
    }

    pub fn is_shared_within_leaf(&self) -> bool {
        self.shared_within_leaf
    }

    pub fn n_leaves(&self) -> usize {
        self.ratios.len()
    }

    pub fn ratios(&self) -> &[Vec<f64>] {
        &self.ratios
    }

    fn check(&self, stats: &LeafGroupStats) -> Result<()> {
        if self.ratios.len() != stats.n_leaves()
            || self.ratios.iter().any(|r| r.len() != stats.k_subgroups())
        {
            return Err(Error::DimensionMismatch {
                expected: stats.n_leaves() * stats.k_subgroups(),
                got: self.ratios.iter().map(Vec::len).sum(),
            });
        }
        Ok(())
    }

    /// `[{leaf_id, subgroup, ratio}, ...]`
    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .ratios
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().enumerate().map(
                    move |(j, &r)| serde_json::json!({ "leaf_id": i, "subgroup": j, "ratio": r }),
                )
            })
            .collect();
        serde_json::Value::Array(entries)
    }
}

/// Ratio the policy assigns to cell `(i, j)`.
pub fn treatment_ratio(policy: &Policy, i: usize, j: usize) -> f64 {
    policy.ratio(i, j)
}

/// Largest within-leaf ratio gap over pairs of populated subgroups.
pub fn bias_r(policy: &Policy, stats: &LeafGroupStats) -> Result<f64> {
    policy.check(stats)?;
    let mut worst = 0.0f64;
    for i in 0..stats.n_leaves() {
        let populated: Vec<f64> = (0..stats.k_subgroups())
            .filter(|&j| stats.cell(i, j).is_populated())
            .map(|j| policy.ratio(i, j))
            .collect();
        if let (Some(lo), Some(hi)) = (
            populated.iter().copied().reduce(f64::min),
            populated.iter().copied().reduce(f64::max),
        ) {
            worst = worst.max(hi - lo);
        }
    }
    Ok(worst)
}

/// Expected outcome of subgroup `j` under the policy.
pub fn subgroup_outcome(policy: &Policy, stats: &LeafGroupStats, j: usize) -> Result<f64> {
    policy.check(stats)?;
    if j >= stats.k_subgroups() {
        return Err(Error::InvalidArgument(format!("subgroup {j} out of range")));
    }
    let size = stats.subgroup_size(j);
    if size == 0 {
        return Err(Error::InvalidArgument(format!(
            "subgroup {j} has no observations"
        )));
    }
    let total: f64 = (0..stats.n_leaves())
        .map(|i| {
            let c = stats.cell(i, j);
            let r = policy.ratio(i, j);
            c.n as f64 * (r * c.y1 + (1.0 - r) * c.y0)
        })
        .sum();
    Ok(total / size as f64)
}

/// Largest gap in expected outcomes between populated subgroups.
pub fn bias_y(policy: &Policy, stats: &LeafGroupStats) -> Result<f64> {
    let outcomes = stats
        .populated_subgroups()
        .into_iter()
        .map(|j| subgroup_outcome(policy, stats, j))
        .collect::<Result<Vec<f64>>>()?;
    let hi = outcomes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = outcomes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if outcomes.len() < 2 { 0.0 } else { hi - lo })
}

/// Population mean outcome under the policy.
pub fn overall_outcome(policy: &Policy, stats: &LeafGroupStats) -> Result<f64> {
    policy.check(stats)?;
    let mut total = 0.0;
    for i in 0..stats.n_leaves() {
        for j in 0..stats.k_subgroups() {
            let c = stats.cell(i, j);
            let r = policy.ratio(i, j);
            total += c.n as f64 * (r * c.y1 + (1.0 - r) * c.y0);
        }
    }
    Ok(total / stats.n_total() as f64)
}

/// Improvement of the mean outcome over treating no one.
pub fn delta_y(policy: &Policy, stats: &LeafGroupStats) -> Result<f64> {
    Ok(overall_outcome(policy, stats)? - stats.baseline_outcome())
}

/// Share of the population the policy treats.
pub fn treated_fraction(policy: &Policy, stats: &LeafGroupStats) -> Result<f64> {
    policy.check(stats)?;
    let mut treated = 0.0;
    for i in 0..stats.n_leaves() {
        for j in 0..stats.k_subgroups() {
            treated += stats.cell(i, j).n as f64 * policy.ratio(i, j);
        }
    }
    Ok(treated / stats.n_total() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Observation;

    pub(crate) fn cell(n0: usize, n1: usize, y0: f64, y1: f64) -> CellStats {
        CellStats {
            n: n0 + n1,
            n0,
            n1,
            y0,
            y1,
            fallback: false,
        }
    }

    fn obs(y: f64, treated: bool, z: usize) -> Observation {
        Observation {
            features: vec![0.0],
            y,
            treated,
            z,
        }
    }

    fn linear_delta(policy: &Policy, stats: &LeafGroupStats) -> f64 {
        let mut s = 0.0;
        for i in 0..stats.n_leaves() {
            for j in 0..stats.k_subgroups() {
                let c = stats.cell(i, j);
                s += c.n as f64 * policy.ratio(i, j) * c.tau();
            }
        }
        s / stats.n_total() as f64
    }

    #[test]
    fn tabulate_counts() {
        let est = Dataset::new(
            vec![
                obs(1.0, true, 0),
                obs(0.0, false, 0),
                obs(2.0, true, 1),
                obs(1.0, false, 1),
            ],
            vec!["x".into()],
            2,
        )
        .unwrap();
        let stats = tabulate(&[0, 0, 0, 0], &est, 1, 2).unwrap();
        assert_eq!(stats.n_total(), 4);
        for j in 0..2 {
            assert_eq!(stats.cell(0, j).n0, 1);
            assert_eq!(stats.cell(0, j).n1, 1);
        }
        assert_eq!(stats.fallback_count(), 0);
    }

    #[test]
    fn tabulate_fallback_for_missing_subgroup() {
        let est = Dataset::new(
            vec![obs(3.0, true, 0), obs(1.0, false, 0), obs(5.0, true, 0)],
            vec!["x".into()],
            2,
        )
        .unwrap();
        let stats = tabulate(&[0, 0, 0], &est, 1, 2).unwrap();
        let empty = stats.cell(0, 1);
        assert_eq!(empty.n, 0);
        assert!(empty.fallback);
        assert_eq!((empty.y0, empty.y1), (1.0, 4.0));
    }

    #[test]
    fn cell_without_treated_inherits_leaf_mean() {
        let est = Dataset::new(
            vec![obs(3.0, true, 0), obs(1.0, false, 0), obs(2.0, false, 1)],
            vec!["x".into()],
            2,
        )
        .unwrap();
        let stats = tabulate(&[0, 0, 0], &est, 1, 2).unwrap();
        assert_eq!(stats.cell(0, 1).y1, 3.0);
        assert_eq!(stats.cell(0, 1).y0, 2.0);
    }

    #[test]
    fn leaves_partition_rows() {
        let est = Dataset::new(
            vec![
                obs(1.0, true, 0),
                obs(0.0, false, 1),
                obs(2.0, true, 1),
                obs(1.0, false, 0),
                obs(1.0, false, 0),
            ],
            vec!["x".into()],
            2,
        )
        .unwrap();
        let stats = tabulate(&[0, 1, 1, 0, 1], &est, 2, 2).unwrap();
        assert_eq!(stats.leaf(0).n + stats.leaf(1).n, 5);
        for i in 0..2 {
            let sum: usize = (0..2).map(|j| stats.cell(i, j).n).sum();
            assert_eq!(sum, stats.leaf(i).n);
        }
    }

    #[test]
    fn observed_ratio_convention() {
        let stats =
            LeafGroupStats::from_cells(vec![vec![cell(3, 2, 0.0, 1.0), cell(0, 0, 0.0, 0.0)]])
                .unwrap();
        assert_eq!(stats.observed_ratio(0, 0), 0.4);
        assert_eq!(stats.observed_ratio(0, 1), 0.0);
        let p = Policy::per_cell(vec![vec![0.25, 0.75]]).unwrap();
        assert_eq!(treatment_ratio(&p, 0, 1), 0.75);
    }

    #[test]
    fn bias_r_examples() {
        let stats = LeafGroupStats::from_cells(vec![
            vec![cell(1, 1, 0.0, 1.0), cell(1, 1, 0.0, 1.0)],
            vec![cell(1, 1, 0.0, 1.0), cell(1, 1, 0.0, 1.0)],
        ])
        .unwrap();
        let equal = Policy::uniform(2, 2, 0.3).unwrap();
        assert_eq!(bias_r(&equal, &stats).unwrap(), 0.0);
        let p = Policy::per_cell(vec![vec![0.2, 0.5], vec![0.4, 0.4]]).unwrap();
        assert!((bias_r(&p, &stats).unwrap() - 0.3).abs() < 1e-15);

        let single = LeafGroupStats::from_cells(vec![vec![cell(1, 1, 0.0, 1.0)]]).unwrap();
        let p1 = Policy::per_cell(vec![vec![0.9]]).unwrap();
        assert_eq!(bias_r(&p1, &single).unwrap(), 0.0);
    }

    #[test]
    fn bias_r_ignores_empty_cells() {
        let stats =
            LeafGroupStats::from_cells(vec![vec![cell(1, 1, 0.0, 1.0), cell(0, 0, 0.0, 1.0)]])
                .unwrap();
        let p = Policy::per_cell(vec![vec![0.0, 1.0]]).unwrap();
        assert_eq!(bias_r(&p, &stats).unwrap(), 0.0);
    }

    #[test]
    fn subgroup_outcome_examples() {
        let stats = LeafGroupStats::from_cells(vec![vec![cell(5, 5, 1.0, 2.0)]]).unwrap();
        let p = Policy::uniform(1, 1, 0.3).unwrap();
        assert!((subgroup_outcome(&p, &stats, 0).unwrap() - 1.3).abs() < 1e-15);

        let two = LeafGroupStats::from_cells(vec![
            vec![cell(2, 2, 1.0, 3.0), cell(3, 3, 0.5, 0.7)],
            vec![cell(1, 3, 2.0, 1.0), cell(0, 0, 9.0, 9.0)],
        ])
        .unwrap();
        let zero = Policy::uniform(2, 2, 0.0).unwrap();
        let one = Policy::uniform(2, 2, 1.0).unwrap();
        // weighted control / treated means of subgroup 0: (4*1 + 4*2)/8 and (4*3 + 4*1)/8
        assert_eq!(subgroup_outcome(&zero, &two, 0).unwrap(), 1.5);
        assert_eq!(subgroup_outcome(&one, &two, 0).unwrap(), 2.0);
        assert!(subgroup_outcome(
            &zero,
            &LeafGroupStats::from_cells(vec![vec![cell(1, 1, 0.0, 0.0), cell(0, 0, 0.0, 0.0)]])
                .unwrap(),
            1
        )
        .is_err());
    }

    #[test]
    fn bias_y_examples() {
        let stats =
            LeafGroupStats::from_cells(vec![vec![cell(5, 5, 1.0, 2.0), cell(5, 5, 1.0, 2.0)]])
                .unwrap();
        assert_eq!(
            bias_y(&Policy::uniform(1, 2, 0.4).unwrap(), &stats).unwrap(),
            0.0
        );

        // subgroup 0: r = 0.3 on (1, 2) -> 1.3; subgroup 1: untreated, 1.0
        let gap =
            LeafGroupStats::from_cells(vec![vec![cell(5, 5, 1.0, 2.0), cell(5, 5, 1.0, 1.0)]])
                .unwrap();
        let p = Policy::uniform(1, 2, 0.3).unwrap();
        assert!((bias_y(&p, &gap).unwrap() - 0.3).abs() < 1e-15);

        let single = LeafGroupStats::from_cells(vec![vec![cell(5, 5, 1.0, 2.0)]]).unwrap();
        assert_eq!(
            bias_y(&Policy::uniform(1, 1, 0.7).unwrap(), &single).unwrap(),
            0.0
        );
    }

    #[test]
    fn delta_y_examples() {
        let stats = LeafGroupStats::from_cells(vec![vec![cell(2, 2, 1.0, 4.0)]]).unwrap();
        assert_eq!(
            delta_y(&Policy::uniform(1, 1, 0.0).unwrap(), &stats).unwrap(),
            0.0
        );
        assert_eq!(
            delta_y(&Policy::uniform(1, 1, 1.0).unwrap(), &stats).unwrap(),
            3.0
        );

        let two = LeafGroupStats::from_cells(vec![
            vec![cell(2, 2, 0.0, 1.0)],
            vec![cell(2, 2, 0.0, 2.0)],
        ])
        .unwrap();
        let p = Policy::per_leaf(&[0.0, 1.0], 1).unwrap();
        assert_eq!(delta_y(&p, &two).unwrap(), 1.0);
    }

    #[test]
    fn policy_json_shape() {
        let p = Policy::per_cell(vec![vec![0.5, 1.0]]).unwrap();
        let v = p.to_json();
        assert_eq!(v[1]["subgroup"], 1);
        assert_eq!(v[1]["ratio"], 1.0);
        assert!(Policy::per_cell(vec![vec![1.5]]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stats_strategy() -> impl Strategy<Value = LeafGroupStats> {
            (1usize..4, 1usize..4).prop_flat_map(|(leaves, k)| {
                prop::collection::vec(
                    prop::collection::vec((0usize..6, 0usize..6, -2.0f64..2.0, -2.0f64..2.0), k),
                    leaves,
                )
                .prop_filter_map("needs rows", |rows| {
                    let cells = rows
                        .into_iter()
                        .map(|r| {
                            r.into_iter()
                                .map(|(a, b, y0, y1)| cell(a, b, y0, y1))
                                .collect()
                        })
                        .collect();
                    LeafGroupStats::from_cells(cells).ok()
                })
            })
        }

        fn policy_for(stats: &LeafGroupStats) -> impl Strategy<Value = Policy> {
            prop::collection::vec(
                prop::collection::vec(0.0f64..=1.0, stats.k_subgroups()),
                stats.n_leaves(),
            )
            .prop_map(|r| Policy::per_cell(r).unwrap())
        }

        fn with_policies() -> impl Strategy<Value = (LeafGroupStats, Policy, Policy)> {
            stats_strategy().prop_flat_map(|s| {
                let a = policy_for(&s);
                let b = policy_for(&s);
                (Just(s), a, b)
            })
        }

        fn permute(stats: &LeafGroupStats, policy: &Policy) -> (LeafGroupStats, Policy) {
            let rev = |row: &Vec<CellStats>| row.iter().rev().copied().collect::<Vec<_>>();
            let cells = stats.cells.iter().map(rev).collect();
            let ratios = policy
                .ratios()
                .iter()
                .map(|r| r.iter().rev().copied().collect())
                .collect();
            (
                LeafGroupStats::from_cells(cells).unwrap(),
                Policy::per_cell(ratios).unwrap(),
            )
        }

        proptest! {
            #[test]
            fn delta_is_linear_identity((stats, p, _q) in with_policies()) {
                let d = delta_y(&p, &stats).unwrap();
                prop_assert!((d - linear_delta(&p, &stats)).abs() < 1e-12);
            }

            #[test]
            fn delta_is_linear_in_ratios((stats, p, q) in with_policies(), alpha in 0.0f64..=1.0) {
                let mixed: Vec<Vec<f64>> = p.ratios().iter().zip(q.ratios())
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect())
                    .collect();
                let mixed = Policy::per_cell(mixed).unwrap();
                let lhs = delta_y(&mixed, &stats).unwrap();
                let rhs = alpha * delta_y(&p, &stats).unwrap() + (1.0 - alpha) * delta_y(&q, &stats).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }

            #[test]
            fn biases_invariant_under_subgroup_relabeling((stats, p, _q) in with_policies()) {
                let (s2, p2) = permute(&stats, &p);
                prop_assert!((bias_r(&p, &stats).unwrap() - bias_r(&p2, &s2).unwrap()).abs() < 1e-15);
                prop_assert!((bias_y(&p, &stats).unwrap() - bias_y(&p2, &s2).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn bias_r_in_unit_interval((stats, p, _q) in with_policies()) {
                let b = bias_r(&p, &stats).unwrap();
                prop_assert!((0.0..=1.0).contains(&b));
            }
        }
    }
}
