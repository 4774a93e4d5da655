//! Honest causal trees.
//!
//! Structure is grown on a training partition by maximizing the negative
//! expected mean squared error of the treatment effect, depth is picked on a
//! validation partition with the same criterion, and leaf effects are
//! re-estimated on a disjoint estimation partition.
//!
//! Splits send a row left iff `features[feature_index] <= threshold`.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::leaf_stats::{tabulate, CellStats, LeafGroupStats, LeafTotals};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature_index: usize,
    pub threshold: f64,
}

impl SplitRule {
    pub fn goes_left(&self, features: &[f64]) -> bool {
        features[self.feature_index] <= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        rule: SplitRule,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf_id: usize,
    },
}

impl TreeNode {
    fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn truncated(&self, depth: usize) -> TreeNode {
        match self {
            TreeNode::Internal { rule, left, right } if depth > 0 => TreeNode::Internal {
                rule: *rule,
                left: Box::new(left.truncated(depth - 1)),
                right: Box::new(right.truncated(depth - 1)),
            },
            _ => TreeNode::Leaf { leaf_id: 0 },
        }
    }

    /// Renumbers leaves 0..L-1 in depth-first, left-first order.
    fn renumber(&mut self, next: &mut usize) {
        match self {
            TreeNode::Leaf { leaf_id } => {
                *leaf_id = *next;
                *next += 1;
            }
            TreeNode::Internal { left, right, .. } => {
                left.renumber(next);
                right.renumber(next);
            }
        }
    }

    fn route(&self, features: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf_id } => return *leaf_id,
                TreeNode::Internal { rule, left, right } => {
                    node = if rule.goes_left(features) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

/// Growth hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf_treated: usize,
    pub min_leaf_control: usize,
    pub max_split_candidates_per_feature: usize,
    pub min_gain: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_leaf_treated: 10,
            min_leaf_control: 10,
            max_split_candidates_per_feature: 32,
            min_gain: 0.0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf_treated == 0
            || self.min_leaf_control == 0
            || self.max_split_candidates_per_feature == 0
        {
            return Err(Error::InvalidArgument(
                "tree minimums and candidate cap must be positive".into(),
            ));
        }
        if !(self.min_gain >= 0.0) || !self.min_gain.is_finite() {
            return Err(Error::InvalidArgument(
                "min_gain must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Honest per-leaf estimates from the estimation partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEstimates {
    /// `tau[l] = arm_means[l].1 - arm_means[l].0`.
    pub tau: Vec<f64>,
    /// `(mean control outcome, mean treated outcome)` per leaf.
    pub arm_means: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalTree {
    pub root: TreeNode,
    pub config: TreeConfig,
    pub n_features: usize,
    /// Treated fraction of the whole training set, used as `p` in the penalty.
    pub p_treated: f64,
    /// Size of the estimation partition the penalty is computed for.
    pub n_est: f64,
    /// Training-set effect per leaf.
    pub train_effects: Vec<f64>,
    pub estimates: Option<LeafEstimates>,
}

/// Outcomes of the scoring rows that fall in one leaf, split by arm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeafArms {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

impl LeafArms {
    fn push(&mut self, obs: &Observation) {
        if obs.treated {
            self.treated.push(obs.y);
        } else {
            self.control.push(obs.y);
        }
    }

    fn len(&self) -> usize {
        self.treated.len() + self.control.len()
    }

    fn has_both_arms(&self) -> bool {
        !self.treated.is_empty() && !self.control.is_empty()
    }

    fn effect(&self) -> f64 {
        mean(&self.treated) - mean(&self.control)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with the n - 1 denominator; 0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Negative EMSE of a partition of a scoring set:
///
/// `(1/N) Σ_i τ̂²(X_i) − (1/N + 1/N_est) Σ_l [Var(l|t=1)/p + Var(l|t=0)/(1−p)]`
///
/// `N` is the number of scoring rows across `leaves`. When `leaf_taus` is
/// `None` each leaf's effect is the scoring set's own difference of means
/// (the training objective); otherwise the given effects are plugged in
/// (validation scoring). Variances always come from the scoring rows.
pub fn emse_objective(
    leaves: &[LeafArms],
    n_est: f64,
    leaf_taus: Option<&[f64]>,
    p: f64,
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "treated fraction p = {p} not in (0, 1)"
        )));
    }
    if !(n_est > 0.0) {
        return Err(Error::InvalidArgument("n_est must be positive".into()));
    }
    if let Some(taus) = leaf_taus {
        if taus.len() != leaves.len() {
            return Err(Error::DimensionMismatch {
                expected: leaves.len(),
                got: taus.len(),
            });
        }
    }
    let mut fit = 0.0;
    let mut penalty = 0.0;
    let mut n = 0usize;
    for (l, leaf) in leaves.iter().enumerate() {
        if !leaf.has_both_arms() {
            return Err(Error::InvalidPartition(format!(
                "leaf {l} has {} treated and {} control rows",
                leaf.treated.len(),
                leaf.control.len()
            )));
        }
        let tau = match leaf_taus {
            Some(taus) => taus[l],
            None => leaf.effect(),
        };
        fit += leaf.len() as f64 * tau * tau;
        penalty += sample_variance(&leaf.treated) / p + sample_variance(&leaf.control) / (1.0 - p);
        n += leaf.len();
    }
    let n = n as f64;
    Ok(fit / n - (1.0 / n + 1.0 / n_est) * penalty)
}

/// Candidate thresholds for one feature: midpoints between consecutive
/// distinct values, thinned to `cap` equally spaced ones when there are more.
pub fn candidate_thresholds(values: &mut Vec<f64>, cap: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mids: Vec<f64> = values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    if mids.len() <= cap {
        return mids;
    }
    let m = mids.len();
    (0..cap).map(|q| mids[(q + 1) * m / (cap + 1)]).collect()
}

fn arms_of<'a>(rows: impl Iterator<Item = &'a Observation>) -> LeafArms {
    let mut arms = LeafArms::default();
    for obs in rows {
        arms.push(obs);
    }
    arms
}

/// Finds the objective-maximizing split of `node_rows`.
///
/// `n_est_node` is the estimation-set size attributed to this node
/// (proportional share of the full estimation partition). Returns `None`
/// unless the best candidate improves the node's own objective by a strictly
/// positive amount that is also `>= min_gain`. Ties go to the lowest feature
/// index, then the lowest threshold.
pub fn best_split(
    node_rows: &[&Observation],
    n_est_node: f64,
    p: f64,
    config: &TreeConfig,
) -> Result<Option<SplitRule>> {
    let parent = arms_of(node_rows.iter().copied());
    if parent.treated.len() < config.min_leaf_treated
        || parent.control.len() < config.min_leaf_control
    {
        return Ok(None);
    }
    let parent_score = emse_objective(std::slice::from_ref(&parent), n_est_node, None, p)?;
    let n_features = node_rows.first().map_or(0, |o| o.features.len());

    let mut best: Option<(f64, SplitRule)> = None;
    for feature_index in 0..n_features {
        let mut values: Vec<f64> = node_rows
            .iter()
            .map(|o| o.features[feature_index])
            .collect();
        let thresholds = candidate_thresholds(&mut values, config.max_split_candidates_per_feature);
        for threshold in thresholds {
            let rule = SplitRule {
                feature_index,
                threshold,
            };
            let left = arms_of(
                node_rows
                    .iter()
                    .copied()
                    .filter(|o| rule.goes_left(&o.features)),
            );
            let right = arms_of(
                node_rows
                    .iter()
                    .copied()
                    .filter(|o| !rule.goes_left(&o.features)),
            );
            let viable = [&left, &right].iter().all(|c| {
                c.treated.len() >= config.min_leaf_treated
                    && c.control.len() >= config.min_leaf_control
            });
            if !viable {
                continue;
            }
            let score = emse_objective(&[left, right], n_est_node, None, p)?;
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, rule));
            }
        }
    }
    Ok(best.and_then(|(score, rule)| {
        let gain = score - parent_score;
        (gain > 0.0 && gain >= config.min_gain).then_some(rule)
    }))
}

struct GrowContext<'a> {
    rows: &'a [Observation],
    n_train: f64,
    n_est: f64,
    p: f64,
    config: &'a TreeConfig,
}

impl GrowContext<'_> {
    fn grow(&self, indices: Vec<usize>, depth: usize) -> Result<TreeNode> {
        if depth >= self.config.max_depth {
            return Ok(TreeNode::Leaf { leaf_id: 0 });
        }
        let node_rows: Vec<&Observation> = indices.iter().map(|&i| &self.rows[i]).collect();
        let n_est_node = self.n_est * indices.len() as f64 / self.n_train;
        match best_split(&node_rows, n_est_node, self.p, self.config)? {
            None => Ok(TreeNode::Leaf { leaf_id: 0 }),
            Some(rule) => {
                let (left, right): (Vec<usize>, Vec<usize>) = indices
                    .into_iter()
                    .partition(|&i| rule.goes_left(&self.rows[i].features));
                Ok(TreeNode::Internal {
                    rule,
                    left: Box::new(self.grow(left, depth + 1)?),
                    right: Box::new(self.grow(right, depth + 1)?),
                })
            }
        }
    }
}

/// Grows a tree on `train` greedily down to `config.max_depth`.
///
/// The returned tree carries training effects but no honest estimates.
pub fn grow_tree(train: &Dataset, n_est: usize, config: &TreeConfig) -> Result<CausalTree> {
    config.validate()?;
    if n_est == 0 {
        return Err(Error::InvalidArgument(
            "estimation set size must be positive".into(),
        ));
    }
    if train.n_treated() < config.min_leaf_treated || train.n_control() < config.min_leaf_control {
        return Err(Error::UnviableSplit(format!(
            "training set has {} treated / {} control rows, needs at least {} / {}",
            train.n_treated(),
            train.n_control(),
            config.min_leaf_treated,
            config.min_leaf_control
        )));
    }
    let ctx = GrowContext {
        rows: train.observations(),
        n_train: train.len() as f64,
        n_est: n_est as f64,
        p: train.treated_fraction(),
        config,
    };
    let mut root = ctx.grow((0..train.len()).collect(), 0)?;
    root.renumber(&mut 0);
    let mut tree = CausalTree {
        root,
        config: *config,
        n_features: train.n_features(),
        p_treated: ctx.p,
        n_est: ctx.n_est,
        train_effects: Vec::new(),
        estimates: None,
    };
    tree.fit_train_effects(train)?;
    Ok(tree)
}

/// Validation objective of `tree` on `val`: the training objective with the
/// validation rows substituted throughout, so each leaf's effect is the
/// validation difference of means. Any leaf missing an arm in `val` scores
/// `f64::NEG_INFINITY`.
pub fn validation_score(tree: &CausalTree, val: &Dataset) -> Result<f64> {
    let leaves = tree.arms_by_leaf(val)?;
    if leaves.iter().any(|l| !l.has_both_arms()) {
        return Ok(f64::NEG_INFINITY);
    }
    emse_objective(&leaves, tree.n_est, None, tree.p_treated)
}

/// Grows once to `max_depth`, then scores every truncation from the root-only
/// tree up to the full depth on `val` and keeps the best (ties to the
/// shallower tree).
pub fn select_depth(
    train: &Dataset,
    val: &Dataset,
    n_est: usize,
    config: &TreeConfig,
) -> Result<CausalTree> {
    let full = grow_tree(train, n_est, config)?;
    let mut best: Option<(f64, CausalTree)> = None;
    for depth in 0..=full.depth() {
        let candidate = full.truncated(depth, train)?;
        let score = validation_score(&candidate, val)?;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, candidate));
        }
    }
    Ok(best.expect("at least one depth is scored").1)
}

/// Routes `est` through the tree and attaches honest leaf estimates, returning
/// the tabulated per-leaf, per-subgroup statistics alongside.
pub fn estimate_leaves(
    tree: &CausalTree,
    est: &Dataset,
    k_subgroups: usize,
) -> Result<(CausalTree, LeafGroupStats)> {
    if est.is_empty() {
        return Err(Error::EstimationFailure("estimation set is empty".into()));
    }
    let assignment = tree.assign_leaves(est)?;
    let stats = tabulate(&assignment, est, tree.n_leaves(), k_subgroups)?;
    let arm_means = stats.raw_leaf_arm_means().to_vec();
    let tau = arm_means.iter().map(|(y0, y1)| y1 - y0).collect();
    let mut estimated = tree.clone();
    estimated.estimates = Some(LeafEstimates { tau, arm_means });
    Ok((estimated, stats))
}

/// Full single-tree pipeline on pre-split data.
pub fn fit_honest_tree(
    train: &Dataset,
    val: &Dataset,
    est: &Dataset,
    config: &TreeConfig,
) -> Result<(CausalTree, LeafGroupStats)> {
    let tree = select_depth(train, val, est.len(), config)?;
    estimate_leaves(&tree, est, est.k_subgroups())
}

impl CausalTree {
    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Leaf reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.root.route(x))
    }

    /// Honest effect estimate for `x`.
    pub fn predict_tau(&self, x: &[f64]) -> Result<f64> {
        let leaf = self.leaf_of(x)?;
        let est = self
            .estimates
            .as_ref()
            .ok_or_else(|| Error::EstimationFailure("tree has no leaf estimates".into()))?;
        Ok(est.tau[leaf])
    }

    pub fn assign_leaves(&self, data: &Dataset) -> Result<Vec<usize>> {
        data.observations()
            .iter()
            .map(|o| self.leaf_of(&o.features))
            .collect()
    }

    fn arms_by_leaf(&self, data: &Dataset) -> Result<Vec<LeafArms>> {
        let mut leaves = vec![LeafArms::default(); self.n_leaves()];
        for obs in data.observations() {
            leaves[self.leaf_of(&obs.features)?].push(obs);
        }
        Ok(leaves)
    }

    fn fit_train_effects(&mut self, train: &Dataset) -> Result<()> {
        self.train_effects = self
            .arms_by_leaf(train)?
            .iter()
            .map(|l| if l.has_both_arms() { l.effect() } else { 0.0 })
            .collect();
        Ok(())
    }

    /// Copy cut back to `depth`, with training effects recomputed on `train`.
    pub fn truncated(&self, depth: usize, train: &Dataset) -> Result<CausalTree> {
        let mut root = self.root.truncated(depth);
        root.renumber(&mut 0);
        let mut tree = CausalTree {
            root,
            estimates: None,
            train_effects: Vec::new(),
            ..self.clone()
        };
        tree.fit_train_effects(train)?;
        Ok(tree)
    }

    /// Hand-built tree, mostly for fixtures. Leaves are renumbered.
    pub fn from_structure(mut root: TreeNode, n_features: usize) -> Self {
        root.renumber(&mut 0);
        let n = root.n_leaves();
        Self {
            root,
            config: TreeConfig::default(),
            n_features,
            p_treated: 0.5,
            n_est: 1.0,
            train_effects: vec![0.0; n],
            estimates: None,
        }
    }
}

/// Self-contained JSON form of an estimated tree: split nodes carry their
/// rule, leaves carry their honest estimates and per-subgroup cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub n_features: usize,
    pub config: TreeConfig,
    pub p_treated: f64,
    pub n_est: f64,
    pub k_subgroups: usize,
    pub n_total: usize,
    pub root: NodeDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum NodeDocument {
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<NodeDocument>,
        right: Box<NodeDocument>,
    },
    Leaf {
        leaf_id: usize,
        tau: f64,
        y0: f64,
        y1: f64,
        train_effect: f64,
        totals: LeafTotals,
        subgroups: Vec<CellStats>,
    },
}

impl TreeDocument {
    pub fn new(tree: &CausalTree, stats: &LeafGroupStats) -> Result<Self> {
        let est = tree
            .estimates
            .as_ref()
            .ok_or_else(|| Error::EstimationFailure("tree has no leaf estimates".into()))?;
        if stats.n_leaves() != tree.n_leaves() {
            return Err(Error::DimensionMismatch {
                expected: tree.n_leaves(),
                got: stats.n_leaves(),
            });
        }
        fn walk(
            node: &TreeNode,
            tree: &CausalTree,
            est: &LeafEstimates,
            stats: &LeafGroupStats,
        ) -> NodeDocument {
            match node {
                TreeNode::Internal { rule, left, right } => NodeDocument::Split {
                    feature_index: rule.feature_index,
                    threshold: rule.threshold,
                    left: Box::new(walk(left, tree, est, stats)),
                    right: Box::new(walk(right, tree, est, stats)),
                },
                &TreeNode::Leaf { leaf_id } => NodeDocument::Leaf {
                    leaf_id,
                    tau: est.tau[leaf_id],
                    y0: est.arm_means[leaf_id].0,
                    y1: est.arm_means[leaf_id].1,
                    train_effect: tree.train_effects[leaf_id],
                    totals: *stats.leaf(leaf_id),
                    subgroups: (0..stats.k_subgroups())
                        .map(|j| *stats.cell(leaf_id, j))
                        .collect(),
                },
            }
        }
        Ok(Self {
            n_features: tree.n_features,
            config: tree.config,
            p_treated: tree.p_treated,
            n_est: tree.n_est,
            k_subgroups: stats.k_subgroups(),
            n_total: stats.n_total(),
            root: walk(&tree.root, tree, est, stats),
        })
    }

    /// Inverse of [`TreeDocument::new`]; leaf ids must be 0..L-1, each once.
    pub fn into_parts(self) -> Result<(CausalTree, LeafGroupStats)> {
        struct Leaf {
            tau: f64,
            arm: (f64, f64),
            train_effect: f64,
            totals: LeafTotals,
            cells: Vec<CellStats>,
        }
        fn walk(node: NodeDocument, leaves: &mut Vec<Option<Leaf>>, k: usize) -> Result<TreeNode> {
            match node {
                NodeDocument::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => Ok(TreeNode::Internal {
                    rule: SplitRule {
                        feature_index,
                        threshold,
                    },
                    left: Box::new(walk(*left, leaves, k)?),
                    right: Box::new(walk(*right, leaves, k)?),
                }),
                NodeDocument::Leaf {
                    leaf_id,
                    tau,
                    y0,
                    y1,
                    train_effect,
                    totals,
                    subgroups,
                } => {
                    if subgroups.len() != k {
                        return Err(Error::DimensionMismatch {
                            expected: k,
                            got: subgroups.len(),
                        });
                    }
                    if leaves.len() <= leaf_id {
                        leaves.resize_with(leaf_id + 1, || None);
                    }
                    if leaves[leaf_id].is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "duplicate leaf id {leaf_id}"
                        )));
                    }
                    leaves[leaf_id] = Some(Leaf {
                        tau,
                        arm: (y0, y1),
                        train_effect,
                        totals,
                        cells: subgroups,
                    });
                    Ok(TreeNode::Leaf { leaf_id })
                }
            }
        }
        let mut slots = Vec::new();
        let root = walk(self.root, &mut slots, self.k_subgroups)?;
        let leaves = slots
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidArgument(format!("missing leaf id {i}"))))
            .collect::<Result<Vec<_>>>()?;
        let tree = CausalTree {
            root,
            config: self.config,
            n_features: self.n_features,
            p_treated: self.p_treated,
            n_est: self.n_est,
            train_effects: leaves.iter().map(|l| l.train_effect).collect(),
            estimates: Some(LeafEstimates {
                tau: leaves.iter().map(|l| l.tau).collect(),
                arm_means: leaves.iter().map(|l| l.arm).collect(),
            }),
        };
        let stats = LeafGroupStats::from_raw_parts(
            self.k_subgroups,
            leaves.iter().map(|l| l.totals).collect(),
            leaves.iter().map(|l| l.cells.clone()).collect(),
            leaves.iter().map(|l| l.arm).collect(),
            self.n_total,
        )?;
        Ok((tree, stats))
    }
}
