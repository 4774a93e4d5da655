//! The committed school-funding shaped table matches its generator.

use fair_policy::dataset::{
    edgap_like_schema, generate_edgap_like, load_csv, write_edgap_like_csv, ColumnSchema,
};
use std::path::Path;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/edgap_like.csv");
const SCHEMA: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../data/edgap_like_schema.json"
);

#[test]
fn bundled_csv_is_byte_identical_to_regeneration() {
    let mut regenerated = Vec::new();
    write_edgap_like_csv(&generate_edgap_like(2000, 7).unwrap(), &mut regenerated).unwrap();
    assert_eq!(std::fs::read(DATA).unwrap(), regenerated);
}

#[test]
fn bundled_schema_matches_and_loads() {
    let schema = ColumnSchema::from_json_file(Path::new(SCHEMA)).unwrap();
    assert_eq!(schema, edgap_like_schema());
    let (data, report) = load_csv(Path::new(DATA), &schema).unwrap();
    assert_eq!(data.len(), 2000);
    assert_eq!(data.n_features(), 16);
    assert_eq!(data.k_subgroups(), 2);
    assert_eq!(report.rows_dropped, 0);
}
