use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ColumnSchema, Dataset, Observation};
use crate::error::{Error, Result};
use crate::format::fmt_real;

/// Strength of the extra treatment response of subgroup `z = 1`.
pub const DEFAULT_INTERACTION: f64 = 0.4;

/// Outcome of the two-feature synthetic model: `t * x0 * (1 + interaction * z)`.
pub fn synthetic_outcome(x0: f64, treated: bool, z: usize, interaction: f64) -> f64 {
    let t = f64::from(u8::from(treated));
    t * x0 * (1.0 + interaction * z as f64)
}

/// Draws `n` rows with `x0, x1 ~ U(0, 1)` and independent fair coins for the
/// subgroup and the treatment. Only `x0` drives the outcome.
pub fn generate_synthetic(n: usize, seed: u64, interaction: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !interaction.is_finite() {
        return Err(Error::InvalidArgument("interaction must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observations = (0..n)
        .map(|_| {
            let x0: f64 = rng.gen();
            let x1: f64 = rng.gen();
            let z = usize::from(rng.gen_bool(0.5));
            let treated = rng.gen_bool(0.5);
            Observation {
                features: vec![x0, x1],
                y: synthetic_outcome(x0, treated, z, interaction),
                treated,
                z,
            }
        })
        .collect();
    // Tiny samples may be one-armed; that is the caller's problem at split time.
    Dataset::from_parts(observations, vec!["x0".into(), "x1".into()], 2)
}

/// Header of the county-level education table produced by
/// [`generate_edgap_like`].
pub const EDGAP_COLUMNS: [&str; 19] = [
    "funding",
    "mean_test_score",
    "school_size",
    "magnet_schools",
    "charter_schools",
    "pct_tested",
    "pct_free_lunch",
    "household_income",
    "marriage_ratio",
    "black_ratio",
    "pct_high_school",
    "pct_bachelor",
    "employment_ratio",
    "gini",
    "population_density",
    "student_teacher_ratio",
    "pct_rural",
    "median_age",
    "pct_english_learners",
];

/// Generates raw (unprocessed) rows shaped like a county education table.
///
/// A latent socioeconomic index drives income, education and funding. The
/// Black household ratio is negatively associated with the index and lowers
/// baseline scores; above-median funding raises scores, more so in counties
/// with a higher Black household ratio and more free-lunch students.
pub fn generate_edgap_like(n: usize, seed: u64) -> Result<Vec<[f64; 19]>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut rows = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    for _ in 0..n {
        let ses = normal(&mut rng);
        let black_ratio = 0.6 / (1.0 + (-(-0.3 * ses + 0.9 * normal(&mut rng) - 1.2)).exp());
        let income = 55.0 + 12.0 * ses + 5.0 * normal(&mut rng);
        let pct_bachelor = 25.0 + 7.0 * ses + 4.0 * normal(&mut rng);
        let pct_high_school = 86.0 + 4.0 * ses + 3.0 * normal(&mut rng);
        let employment = 0.6 + 0.05 * ses + 0.03 * normal(&mut rng);
        let gini = 0.45 - 0.02 * ses + 0.02 * normal(&mut rng);
        let marriage = 0.52 + 0.04 * ses - 0.1 * black_ratio + 0.03 * normal(&mut rng);
        let free_lunch = 45.0 - 10.0 * ses + 20.0 * black_ratio + 6.0 * normal(&mut rng);
        let school_size = (6.0 + 0.3 * normal(&mut rng)).exp();
        let magnet = (rng.gen::<f64>() * 3.0).floor();
        let charter = (rng.gen::<f64>() * 4.0).floor();
        let pct_tested = 90.0 + 4.0 * normal(&mut rng);
        let density = (4.0 + normal(&mut rng)).exp();
        let st_ratio = 15.0 + 2.0 * normal(&mut rng);
        let pct_rural = rng.gen::<f64>() * 100.0;
        let median_age = 40.0 + 4.0 * normal(&mut rng);
        let english = rng.gen::<f64>() * 15.0;
        let funding = 10.0 + 0.8 * ses + 1.5 * normal(&mut rng);
        let noise = 0.35 * normal(&mut rng);
        rows.push([
            funding,
            0.0,
            school_size,
            magnet,
            charter,
            pct_tested,
            free_lunch,
            income,
            marriage,
            black_ratio,
            pct_high_school,
            pct_bachelor,
            employment,
            gini,
            density,
            st_ratio,
            pct_rural,
            median_age,
            english,
        ]);
        latent.push(noise);
    }

    let funding: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let black: Vec<f64> = rows.iter().map(|r| r[9]).collect();
    let funded = super::binarize_median(&funding)?;
    let black_high = super::binarize_median(&black)?;
    for (i, row) in rows.iter_mut().enumerate() {
        let base = 0.015 * (row[7] - 55.0) + 0.015 * (row[11] - 25.0) - 1.0 * row[9];
        let effect =
            0.1 + 1.0 * f64::from(black_high[i]) + 0.2 * f64::from(u8::from(row[6] > 55.0));
        row[1] = 50.0 + 10.0 * (base + f64::from(funded[i]) * effect + latent[i]);
    }
    Ok(rows)
}

pub fn write_edgap_like_csv<W: Write>(rows: &[[f64; 19]], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(EDGAP_COLUMNS)?;
    for row in rows {
        out.write_record(row.iter().map(|&v| fmt_real(v)))?;
    }
    out.flush()?;
    Ok(())
}

/// Ingestion schema for the table written by [`write_edgap_like_csv`]:
/// funding and Black household ratio are median-binarized into treatment and
/// subgroup, the test score is z-scored into the outcome.
pub fn edgap_like_schema() -> ColumnSchema {
    let excluded = ["funding", "mean_test_score", "black_ratio"];
    ColumnSchema {
        outcome: "mean_test_score".into(),
        treatment: "funding".into(),
        sensitive: "black_ratio".into(),
        features: EDGAP_COLUMNS
            .iter()
            .filter(|c| !excluded.contains(c))
            .map(|c| c.to_string())
            .collect(),
        binarize: vec!["funding".into(), "black_ratio".into()],
        zscore: vec!["mean_test_score".into()],
        k_subgroups: Some(2),
        include_sensitive_as_feature: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_examples() {
        assert_eq!(synthetic_outcome(0.5, true, 1, 0.4), 0.7);
        assert_eq!(synthetic_outcome(0.37, false, 1, 0.4), 0.0);
        assert_eq!(synthetic_outcome(0.37, false, 0, 0.4), 0.0);
        assert_eq!(synthetic_outcome(1.0, true, 0, 0.4), 1.0);
    }

    #[test]
    fn rejects_zero_rows() {
        assert!(matches!(
            generate_synthetic(0, 1, DEFAULT_INTERACTION),
            Err(Error::InvalidArgument(_))
        ));
        assert!(generate_edgap_like(0, 1).is_err());
    }

    #[test]
    fn rows_follow_the_outcome_model_exactly() {
        let data = generate_synthetic(5000, 11, DEFAULT_INTERACTION).unwrap();
        for o in data.observations() {
            let t = f64::from(u8::from(o.treated));
            assert_eq!(
                o.y - t * o.features[0] * (1.0 + DEFAULT_INTERACTION * o.z as f64),
                0.0
            );
        }
    }

    #[test]
    fn marginals_are_fair() {
        for seed in [0, 1, 2] {
            let data = generate_synthetic(100_000, seed, DEFAULT_INTERACTION).unwrap();
            let n = data.len() as f64;
            let obs = data.observations();
            let mean_t = obs.iter().filter(|o| o.treated).count() as f64 / n;
            let mean_z = obs.iter().map(|o| o.z as f64).sum::<f64>() / n;
            let mean_x0 = obs.iter().map(|o| o.features[0]).sum::<f64>() / n;
            assert!((mean_t - 0.5).abs() < 0.01);
            assert!((mean_z - 0.5).abs() < 0.01);
            assert!((mean_x0 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(50, 5, 0.4).unwrap();
        let b = generate_synthetic(50, 5, 0.4).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            generate_edgap_like(20, 3).unwrap(),
            generate_edgap_like(20, 3).unwrap()
        );
    }
}
