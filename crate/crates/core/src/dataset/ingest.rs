use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{binarize_median, zscore, Dataset, Observation};
use crate::error::{Error, Result};

/// Names the columns of an input CSV and the preprocessing to apply.
///
/// Preprocessing runs on the rows that parsed: first every `binarize`
/// column, then every `zscore` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub outcome: String,
    pub treatment: String,
    pub sensitive: String,
    pub features: Vec<String>,
    #[serde(default)]
    pub binarize: Vec<String>,
    #[serde(default)]
    pub zscore: Vec<String>,
    /// Defaults to one more than the largest observed subgroup label.
    #[serde(default)]
    pub k_subgroups: Option<usize>,
    #[serde(default)]
    pub include_sensitive_as_feature: bool,
}

impl ColumnSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidArgument(
                "schema needs at least one feature column".into(),
            ));
        }
        Ok(())
    }

    /// Columns that must parse for a row to be kept, in a fixed order.
    fn required(&self) -> Vec<&str> {
        let mut cols = vec![
            self.outcome.as_str(),
            self.treatment.as_str(),
            self.sensitive.as_str(),
        ];
        for f in &self.features {
            if !cols.contains(&f.as_str()) {
                cols.push(f);
            }
        }
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn parse_cell(raw: &str) -> Option<f64> {
    let v: f64 = raw.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn as_label(v: f64, column: &str, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidArgument(format!(
            "column `{column}` must hold {what} labels after preprocessing, found {v}"
        )))
    }
}

/// Reads a headered CSV into a [`Dataset`].
///
/// Rows with a missing or unparseable required cell are dropped and
/// counted in the returned report.
pub fn load_csv(path: &Path, schema: &ColumnSchema) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    load_csv_reader(std::fs::File::open(path)?, schema)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<R: Read>(input: R, schema: &ColumnSchema) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();

    let required = schema.required();
    let mut positions = Vec::with_capacity(required.len());
    for col in &required {
        positions.push(
            *header
                .get(*col)
                .ok_or_else(|| Error::MissingColumn(col.to_string()))?,
        );
    }
    for col in schema.binarize.iter().chain(&schema.zscore) {
        if !required.contains(&col.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "preprocessing column `{col}` is not one of the schema's columns"
            )));
        }
    }

    // columns[c][r] for required column c and kept row r
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); required.len()];
    let mut rows_read = 0;
    let mut rows_dropped = 0;
    for record in reader.records() {
        let record = record?;
        rows_read += 1;
        let parsed: Option<Vec<f64>> = positions
            .iter()
            .map(|&p| record.get(p).and_then(parse_cell))
            .collect();
        match parsed {
            Some(values) => {
                for (col, v) in columns.iter_mut().zip(values) {
                    col.push(v);
                }
            }
            None => rows_dropped += 1,
        }
    }
    if columns[0].is_empty() {
        return Err(Error::NoValidRows {
            dropped: rows_dropped,
        });
    }

    let index_of = |name: &str| required.iter().position(|c| *c == name).unwrap();
    for name in &schema.binarize {
        let c = index_of(name);
        columns[c] = binarize_median(&columns[c])?
            .into_iter()
            .map(f64::from)
            .collect();
    }
    for name in &schema.zscore {
        let c = index_of(name);
        columns[c] =
            zscore(&columns[c]).map_err(|e| Error::DegenerateColumn(format!("`{name}`: {e}")))?;
    }

    let mut observations = Vec::with_capacity(columns[0].len());
    for (r, &y) in columns[0].iter().enumerate() {
        let t = as_label(columns[1][r], &schema.treatment, "binary")?;
        if t > 1 {
            return Err(Error::InvalidArgument(format!(
                "treatment column `{}` must be 0/1; list it under `binarize` to threshold it",
                schema.treatment
            )));
        }
        let z = as_label(columns[2][r], &schema.sensitive, "subgroup")?;
        let mut features: Vec<f64> = schema
            .features
            .iter()
            .map(|f| columns[index_of(f)][r])
            .collect();
        if schema.include_sensitive_as_feature {
            features.push(z as f64);
        }
        observations.push(Observation {
            features,
            y,
            treated: t == 1,
            z,
        });
    }

    let max_z = observations.iter().map(|o| o.z).max().unwrap_or(0);
    let k = schema.k_subgroups.unwrap_or(max_z + 1);
    let mut names = schema.features.clone();
    if schema.include_sensitive_as_feature {
        names.push(schema.sensitive.clone());
    }
    let data = Dataset::new(observations, names, k)?;
    Ok((
        data,
        LoadReport {
            rows_read,
            rows_dropped,
        },
    ))
}
