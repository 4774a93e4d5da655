//! Averaging over trees fitted on independent random splits.
//!
//! Tree `k` uses split seed `base_seed + k`. Each tree gets its own optimal
//! policy per constraint point; reported outcomes are means over trees and a
//! person's treatment probability is the mean of the ratios of the cells they
//! fall in. Means are taken over values sorted ascending, so reordering the
//! trees cannot change any reported number.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal_tree::{fit_honest_tree, CausalTree, TreeConfig};
use crate::dataset::{split_three_way, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::format::fmt_real;
use crate::leaf_stats::LeafGroupStats;
use crate::policy::{check_grid, optimize, PolicyConstraints, PolicyResult, SweepRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub seed: u64,
    pub tree: CausalTree,
    pub stats: LeafGroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub tree: TreeConfig,
    pub fractions: [f64; 3],
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            tree: TreeConfig::default(),
            fractions: [1.0 / 3.0; 3],
        }
    }
}

/// Fits `n_trees` honest trees, tree `k` on the split seeded `base_seed + k`.
pub fn train_ensemble(
    data: &Dataset,
    n_trees: usize,
    base_seed: u64,
    config: &EnsembleConfig,
) -> Result<Ensemble> {
    if n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
    }
    let members = (0..n_trees as u64)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed.wrapping_add(k);
            let spec = SplitSpec {
                fractions: config.fractions,
                seed,
            };
            let parts = split_three_way(data, &spec)?;
            let (tree, stats) = fit_honest_tree(
                &parts.train,
                &parts.validation,
                &parts.estimation,
                &config.tree,
            )?;
            Ok(EnsembleMember { seed, tree, stats })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { members })
}

fn sorted_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePolicyResult {
    pub per_tree: Vec<PolicyResult>,
    /// Mean improvement over the feasible trees.
    pub mean_delta_y: Option<f64>,
    pub mean_bias_y: Option<f64>,
    pub mean_bias_r: Option<f64>,
    pub mean_treated_fraction: Option<f64>,
    pub feasible_fraction: f64,
}

impl EnsemblePolicyResult {
    fn from_trees(per_tree: Vec<PolicyResult>) -> Self {
        let feasible: Vec<_> = per_tree.iter().filter_map(PolicyResult::feasible).collect();
        let metric = |f: fn(&crate::policy::EfficientPolicy) -> f64| {
            sorted_mean(feasible.iter().map(|p| f(p)).collect())
        };
        Self {
            mean_delta_y: metric(|p| p.delta_y),
            mean_bias_y: metric(|p| p.bias_y),
            mean_bias_r: metric(|p| p.bias_r),
            mean_treated_fraction: metric(|p| p.treated_fraction),
            feasible_fraction: feasible.len() as f64 / per_tree.len() as f64,
            per_tree,
        }
    }

    /// A point counts as feasible only when every tree is.
    pub fn is_feasible(&self) -> bool {
        self.per_tree.iter().all(PolicyResult::is_feasible)
    }

    pub fn sweep_row(&self, constraints: PolicyConstraints) -> SweepRow {
        SweepRow {
            constraints,
            feasible: self.is_feasible(),
            delta_y: self.mean_delta_y,
            bias_y: self.mean_bias_y,
            bias_r: self.mean_bias_r,
            treated_fraction: self.mean_treated_fraction,
            feasible_fraction: self.feasible_fraction,
        }
    }
}

impl Ensemble {
    pub fn n_trees(&self) -> usize {
        self.members.len()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.seed).collect()
    }
}

/// Optimizes every tree's policy at `c`.
pub fn optimize_ensemble(ens: &Ensemble, c: &PolicyConstraints) -> Result<EnsemblePolicyResult> {
    let per_tree = ens
        .members
        .par_iter()
        .map(|m| optimize(&m.stats, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsemblePolicyResult::from_trees(per_tree))
}

fn feasible_policies<'a>(
    ens: &Ensemble,
    per_tree: &'a [PolicyResult],
) -> Result<Vec<&'a crate::leaf_stats::Policy>> {
    if per_tree.len() != ens.n_trees() {
        return Err(Error::DimensionMismatch {
            expected: ens.n_trees(),
            got: per_tree.len(),
        });
    }
    let infeasible = per_tree.iter().filter(|r| !r.is_feasible()).count();
    if infeasible > 0 {
        return Err(Error::ProbabilityUnavailable {
            infeasible,
            total: per_tree.len(),
        });
    }
    Ok(per_tree
        .iter()
        .filter_map(|r| r.feasible().map(|p| &p.policy))
        .collect())
}

/// Mean over trees of the ratio for subgroup `j` in the leaf containing `x`.
pub fn treat_probability(
    ens: &Ensemble,
    per_tree: &[PolicyResult],
    x: &[f64],
    j: usize,
) -> Result<f64> {
    let policies = feasible_policies(ens, per_tree)?;
    let mut ratios = Vec::with_capacity(policies.len());
    for (m, policy) in ens.members.iter().zip(policies) {
        if j >= m.stats.k_subgroups() {
            return Err(Error::InvalidArgument(format!("subgroup {j} out of range")));
        }
        ratios.push(policy.ratio(m.tree.leaf_of(x)?, j));
    }
    Ok(sorted_mean(ratios)
        .expect("ensemble is non-empty")
        .clamp(0.0, 1.0))
}

/// Mean over trees of the shared leaf ratio at `x` (equal-opportunity
/// policies only).
pub fn treat_probability_equal(
    ens: &Ensemble,
    per_tree: &[PolicyResult],
    x: &[f64],
) -> Result<f64> {
    let policies = feasible_policies(ens, per_tree)?;
    let mut ratios = Vec::with_capacity(policies.len());
    for (m, policy) in ens.members.iter().zip(policies) {
        let leaf = m.tree.leaf_of(x)?;
        ratios.push(
            policy.leaf_ratio(leaf).ok_or_else(|| {
                Error::InvalidArgument("policy is not shared within leaves".into())
            })?,
        );
    }
    Ok(sorted_mean(ratios)
        .expect("ensemble is non-empty")
        .clamp(0.0, 1.0))
}

/// Per-row treatment probability for every observation of `data`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub row_id: usize,
    pub subgroup: usize,
    pub probability: f64,
}

pub fn assign(
    ens: &Ensemble,
    result: &EnsemblePolicyResult,
    data: &Dataset,
) -> Result<Vec<Assignment>> {
    let shared = result
        .per_tree
        .iter()
        .filter_map(PolicyResult::feasible)
        .all(|p| p.policy.is_shared_within_leaf());
    data.observations()
        .iter()
        .enumerate()
        .map(|(row_id, o)| {
            let probability = if shared {
                treat_probability_equal(ens, &result.per_tree, &o.features)?
            } else {
                treat_probability(ens, &result.per_tree, &o.features, o.z)?
            };
            Ok(Assignment {
                row_id,
                subgroup: o.z,
                probability,
            })
        })
        .collect()
}

/// Writes `row_id, subgroup, probability`.
pub fn write_assignment_csv<W: Write>(rows: &[Assignment], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["row_id", "subgroup", "probability"])?;
    for a in rows {
        out.write_record([
            a.row_id.to_string(),
            a.subgroup.to_string(),
            fmt_real(a.probability),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Ensemble frontier: one [`optimize_ensemble`] per `m_y`, in grid order.
pub fn sweep_frontier_ensemble(
    ens: &Ensemble,
    m_y_grid: &[f64],
    base: &PolicyConstraints,
) -> Result<Vec<(PolicyConstraints, EnsemblePolicyResult)>> {
    check_grid("m_y", m_y_grid)?;
    m_y_grid
        .par_iter()
        .map(|&m_y| {
            let c = base.with_m_y(m_y);
            optimize_ensemble(ens, &c).map(|r| (c, r))
        })
        .collect()
}

/// Ensemble heatmap over `(m_y, m_r)` pairs, row-major in `m_y`.
pub fn heatmap_ensemble(
    ens: &Ensemble,
    m_y_grid: &[f64],
    m_r_grid: &[f64],
    r_max: f64,
) -> Result<Vec<(PolicyConstraints, EnsemblePolicyResult)>> {
    check_grid("m_y", m_y_grid)?;
    check_grid("m_r", m_r_grid)?;
    let points: Vec<PolicyConstraints> = m_y_grid
        .iter()
        .flat_map(|&m_y| m_r_grid.iter().map(move |&m_r| (m_y, m_r)))
        .map(|(m_y, m_r)| PolicyConstraints::new(m_y, m_r, r_max))
        .collect::<Result<_>>()?;
    points
        .par_iter()
        .map(|c| optimize_ensemble(ens, c).map(|r| (*c, r)))
        .collect()
}
