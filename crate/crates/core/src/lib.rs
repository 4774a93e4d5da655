//! Honest causal trees, treatment-bias metrics and fairness-constrained
//! treatment policies solved as linear programs.
//!
//! The pipeline: split a [`dataset::Dataset`] three ways, grow a
//! [`causal_tree::CausalTree`] on one part, choose its depth on another and
//! estimate per-(leaf, subgroup) outcomes on the third
//! ([`leaf_stats::LeafGroupStats`]). A [`policy`] assigns a treatment ratio to
//! every cell, maximizing the expected outcome under limits on resources and
//! on two kinds of subgroup bias. [`ensemble`] averages over many splits.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal_tree;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod format;
pub mod leaf_stats;
pub mod lp;
pub mod policy;

pub use error::{Error, Result};

// The guide's Rust snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/causal-trees.md")]
    mod causal_trees {}
    #[doc = include_str!("../../../book/src/bias-metrics.md")]
    mod bias_metrics {}
    #[doc = include_str!("../../../book/src/lp-policies.md")]
    mod lp_policies {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
