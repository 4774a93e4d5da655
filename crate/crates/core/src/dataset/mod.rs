//! Observations, preprocessing helpers and seeded three-way splits.
//!
//! A [`Dataset`] is immutable once built. Every downstream number (trees,
//! leaf statistics, policies) is a deterministic function of a dataset plus
//! the seeds recorded in a [`SplitSpec`].

mod ingest;
mod synthetic;

pub use ingest::{load_csv, load_csv_reader, ColumnSchema, LoadReport};
pub use synthetic::{
    edgap_like_schema, generate_edgap_like, generate_synthetic, synthetic_outcome,
    write_edgap_like_csv, DEFAULT_INTERACTION, EDGAP_COLUMNS,
};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_real;

/// One unit of observational data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub y: f64,
    pub treated: bool,
    /// Sensitive subgroup label in `0..k_subgroups`.
    pub z: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    feature_names: Vec<String>,
    k_subgroups: usize,
}

impl Dataset {
    /// Builds a dataset, checking dimensions, subgroup labels and that both
    /// arms are present.
    pub fn new(
        observations: Vec<Observation>,
        feature_names: Vec<String>,
        k_subgroups: usize,
    ) -> Result<Self> {
        let data = Self::from_parts(observations, feature_names, k_subgroups)?;
        if data.n_treated() == 0 || data.n_control() == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one treated and one control observation".into(),
            ));
        }
        Ok(data)
    }

    /// Like [`Dataset::new`] but without the two-arm requirement. Used for
    /// partitions and for scoring sets that may legitimately be one-armed.
    pub(crate) fn from_parts(
        observations: Vec<Observation>,
        feature_names: Vec<String>,
        k_subgroups: usize,
    ) -> Result<Self> {
        if k_subgroups == 0 {
            return Err(Error::InvalidArgument(
                "k_subgroups must be positive".into(),
            ));
        }
        let dim = feature_names.len();
        for (i, obs) in observations.iter().enumerate() {
            if obs.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: obs.features.len(),
                });
            }
            if obs.z >= k_subgroups {
                return Err(Error::InvalidArgument(format!(
                    "row {i}: subgroup {} is not below k_subgroups = {k_subgroups}",
                    obs.z
                )));
            }
            if !obs.y.is_finite() || obs.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i}: non-finite value")));
            }
        }
        Ok(Self {
            observations,
            feature_names,
            k_subgroups,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn k_subgroups(&self) -> usize {
        self.k_subgroups
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.observations.iter().filter(|o| o.treated).count()
    }

    pub fn n_control(&self) -> usize {
        self.len() - self.n_treated()
    }

    /// Treated fraction of the whole set.
    pub fn treated_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.n_treated() as f64 / self.len() as f64
    }

    /// Returns a copy with outcomes replaced. Row order is kept.
    pub fn with_outcomes(&self, outcomes: &[f64]) -> Result<Self> {
        if outcomes.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: outcomes.len(),
            });
        }
        let observations = self
            .observations
            .iter()
            .zip(outcomes)
            .map(|(o, &y)| Observation { y, ..o.clone() })
            .collect();
        Self::from_parts(observations, self.feature_names.clone(), self.k_subgroups)
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            observations: indices
                .iter()
                .map(|&i| self.observations[i].clone())
                .collect(),
            feature_names: self.feature_names.clone(),
            k_subgroups: self.k_subgroups,
        }
    }

    /// Writes `features..., y, t, z` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.extend(["y", "t", "z"]);
        out.write_record(&header)?;
        for obs in &self.observations {
            let mut record: Vec<String> = obs.features.iter().map(|&v| fmt_real(v)).collect();
            record.push(fmt_real(obs.y));
            record.push(u8::from(obs.treated).to_string());
            record.push(obs.z.to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Schema matching the layout produced by [`Dataset::write_csv`].
    pub fn native_schema(&self) -> ColumnSchema {
        ColumnSchema {
            outcome: "y".into(),
            treatment: "t".into(),
            sensitive: "z".into(),
            features: self.feature_names.clone(),
            binarize: Vec::new(),
            zscore: Vec::new(),
            k_subgroups: Some(self.k_subgroups),
            include_sensitive_as_feature: false,
        }
    }
}

/// Fractions for (train, validation, estimation) plus the permutation seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn thirds(seed: u64) -> Self {
        Self {
            fractions: [1.0 / 3.0; 3],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be positive, got {:?}",
                self.fractions
            )));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// The three disjoint partitions produced by [`split_three_way`].
#[derive(Debug, Clone)]
pub struct SplitParts {
    pub train: Dataset,
    pub validation: Dataset,
    pub estimation: Dataset,
}

/// Partition sizes for `n` rows: the first two are rounded, the last takes
/// the remainder.
fn part_sizes(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let train = ((fractions[0] * n as f64).round() as usize).min(n);
    let val = ((fractions[1] * n as f64).round() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Shuffles row indices with a seeded permutation and cuts them into
/// train / validation / estimation parts.
pub fn split_three_way(data: &Dataset, spec: &SplitSpec) -> Result<SplitParts> {
    spec.validate()?;
    let n = data.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);

    let [n_train, n_val, _] = part_sizes(n, &spec.fractions);
    let (train_idx, rest) = indices.split_at(n_train);
    let (val_idx, est_idx) = rest.split_at(n_val);

    let parts = [train_idx, val_idx, est_idx].map(|idx| data.subset(idx));
    for (name, part) in ["train", "validation", "estimation"].iter().zip(&parts) {
        if part.n_treated() == 0 || part.n_control() == 0 {
            return Err(Error::UnviableSplit(format!(
                "{name} part has {} treated and {} control rows",
                part.n_treated(),
                part.n_control()
            )));
        }
    }
    let [train, validation, estimation] = parts;
    Ok(SplitParts {
        train,
        validation,
        estimation,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// 1 for values strictly above the median, 0 otherwise.
pub fn binarize_median(values: &[f64]) -> Result<Vec<u8>> {
    if values.is_empty() {
        return Err(Error::DegenerateColumn(
            "cannot binarize an empty column".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateColumn("non-finite value in column".into()));
    }
    let m = median(values);
    Ok(values.iter().map(|&v| u8::from(v > m)).collect())
}

/// Standardizes with the sample (n - 1) standard deviation.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::DegenerateColumn(
            "z-score needs at least two values".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateColumn("zero variance".into()));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}
