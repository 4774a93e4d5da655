//! Command-line surface: config loading, subcommands, manifests, exit codes.
//!
//! All outputs are CSV or JSON. Every output directory receives a
//! `manifest.json` with the SHA-256 of the effective config, the seeds used
//! and the crate version.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::causal_tree::{TreeConfig, TreeDocument};
use crate::dataset::{
    edgap_like_schema, generate_edgap_like, generate_synthetic, load_csv, load_csv_reader,
    write_edgap_like_csv, ColumnSchema, Dataset, SplitSpec, DEFAULT_INTERACTION,
};
use crate::ensemble::{
    assign, heatmap_ensemble, optimize_ensemble, sweep_frontier_ensemble, train_ensemble,
    write_assignment_csv, Ensemble, EnsembleConfig,
};
use crate::error::{Error, Result};
use crate::format::fmt_real;
use crate::policy::{build_lp, check_grid, PolicyConstraints, SweepRow, SWEEP_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::MissingFile(_)
        | Error::MissingColumn(_)
        | Error::NoValidRows { .. }
        | Error::DegenerateColumn(_)
        | Error::UnviableSplit(_)
        | Error::InvalidPartition(_)
        | Error::Json(_) => EXIT_INVALID_CONFIG,
        Error::ProbabilityUnavailable { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INTERNAL,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// `y = t * x0 * (1 + interaction * z)` with uniform `x0, x1`.
    Synthetic {
        n: usize,
        seed: u64,
        #[serde(default = "default_interaction")]
        interaction: f64,
    },
    /// 19-column school-funding shaped table with a built-in subgroup effect gap.
    EdgapLike { n: usize, seed: u64 },
    /// Raw CSV plus column schema; relative paths resolve against the config file.
    Csv { path: PathBuf, schema: ColumnSchema },
}

fn default_interaction() -> f64 {
    DEFAULT_INTERACTION
}

/// One constraint point; `m_y = null` means no outcome-bias limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub m_y: Option<f64>,
    pub m_r: f64,
    pub r_max: f64,
}

impl PointConfig {
    pub fn constraints(&self) -> Result<PolicyConstraints> {
        PolicyConstraints::new(self.m_y.unwrap_or(f64::INFINITY), self.m_r, self.r_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub n_trees: usize,
    pub base_seed: u64,
    pub split_fractions: [f64; 3],
    pub tree: TreeConfig,
    /// `null` entries mean unconstrained and must come last.
    pub m_y_grid: Vec<Option<f64>>,
    pub m_r_grid: Vec<f64>,
    pub r_max_grid: Vec<f64>,
    /// Resource level of the affirmative-action frontier curves.
    pub frontier_r_max: f64,
    pub assign: PointConfig,
    pub out_dir: PathBuf,
    /// Also write each tree's LP at the assign point in text form.
    pub dump_lp: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                n: 6000,
                seed: 1,
                interaction: DEFAULT_INTERACTION,
            },
            n_trees: 10,
            base_seed: 0,
            split_fractions: [1.0 / 3.0; 3],
            tree: TreeConfig::default(),
            m_y_grid: [0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5]
                .into_iter()
                .map(Some)
                .collect(),
            m_r_grid: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25],
            r_max_grid: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            frontier_r_max: 0.8,
            assign: PointConfig {
                m_y: Some(0.25),
                m_r: 0.0,
                r_max: 0.4,
            },
            out_dir: PathBuf::from("out"),
            dump_lp: false,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg: RunConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        if let DataSource::Csv { path: csv, .. } = &mut cfg.data {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn m_y_values(&self) -> Vec<f64> {
        self.m_y_grid
            .iter()
            .map(|m| m.unwrap_or(f64::INFINITY))
            .collect()
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            tree: self.tree,
            fractions: self.split_fractions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic { n, interaction, .. } => {
                if *n == 0 {
                    return Err(Error::InvalidArgument("data.n must be positive".into()));
                }
                if !interaction.is_finite() {
                    return Err(Error::InvalidArgument(
                        "data.interaction must be finite".into(),
                    ));
                }
            }
            DataSource::EdgapLike { n, .. } if *n == 0 => {
                return Err(Error::InvalidArgument("data.n must be positive".into()));
            }
            _ => {}
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        SplitSpec {
            fractions: self.split_fractions,
            seed: 0,
        }
        .validate()?;
        self.tree.validate()?;
        check_grid("m_y_grid", &self.m_y_values())?;
        check_grid("m_r_grid", &self.m_r_grid)?;
        check_grid("r_max_grid", &self.r_max_grid)?;
        for &m_y in &self.m_y_values() {
            for &m_r in &self.m_r_grid {
                for &r_max in &self.r_max_grid {
                    PolicyConstraints::new(m_y, m_r, r_max)?;
                }
            }
        }
        PolicyConstraints::new(0.0, 0.0, self.frontier_r_max)?;
        self.assign.constraints()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of this config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn data_seed(&self) -> Option<u64> {
        match self.data {
            DataSource::Synthetic { seed, .. } | DataSource::EdgapLike { seed, .. } => Some(seed),
            DataSource::Csv { .. } => None,
        }
    }

    fn set_seed(&mut self, seed: u64) {
        self.base_seed = seed;
        if let DataSource::Synthetic { seed: s, .. } | DataSource::EdgapLike { seed: s, .. } =
            &mut self.data
        {
            *s = seed;
        }
    }
}

/// Builds the dataset described by `source`.
pub fn load_data(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Synthetic {
            n,
            seed,
            interaction,
        } => generate_synthetic(*n, *seed, *interaction),
        DataSource::EdgapLike { n, seed } => {
            let mut bytes = Vec::new();
            write_edgap_like_csv(&generate_edgap_like(*n, *seed)?, &mut bytes)?;
            Ok(load_csv_reader(bytes.as_slice(), &edgap_like_schema())?.0)
        }
        DataSource::Csv { path, schema } => Ok(load_csv(path, schema)?.0),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fair-policy",
    version,
    about = "Fair treatment policies from honest causal trees"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run config; defaults apply to omitted fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `base_seed` and the generator seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write the configured dataset as CSV.
    Generate,
    /// Frontier curves over `m_y`: one per `r_max` (m_r = 0) and one per `m_r`.
    Frontier,
    /// One `(m_y, m_r)` grid per `r_max`.
    Heatmap,
    /// Per-row treatment probabilities at one constraint point.
    Assign(AssignArgs),
    /// Per-tree leaf statistics and tree structure.
    Stats,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AssignArgs {
    /// Outcome-bias limit; `inf` for none.
    #[arg(long)]
    pub m_y: Option<f64>,
    #[arg(long)]
    pub m_r: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "assignment.csv")]
    pub file: String,
}

/// Resolves config file, CLI overrides and validation.
pub fn effective_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &global.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses nothing; runs an already-parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let cfg = effective_config(&cli.global)?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::Frontier => cmd_frontier(&cfg),
        Command::Heatmap => cmd_heatmap(&cfg),
        Command::Assign(args) => cmd_assign(&cfg, args),
        Command::Stats => cmd_stats(&cfg),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    data_seed: Option<u64>,
    base_seed: u64,
    tree_seeds: Vec<u64>,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn write_manifest(
    cfg: &RunConfig,
    command: &str,
    tree_seeds: Vec<u64>,
    files: Vec<String>,
) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: cfg.hash(),
        data_seed: cfg.data_seed(),
        base_seed: cfg.base_seed,
        tree_seeds,
        files,
        config: cfg,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(cfg.out_dir.join("manifest.json"), text)?;
    Ok(())
}

fn create_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(cfg.out_dir.join(name))?))
}

fn train(cfg: &RunConfig) -> Result<(Dataset, Ensemble)> {
    let data = load_data(&cfg.data)?;
    let ens = train_ensemble(&data, cfg.n_trees, cfg.base_seed, &cfg.ensemble_config())?;
    Ok((data, ens))
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    create_out(cfg)?;
    match &cfg.data {
        DataSource::EdgapLike { n, seed } => {
            // Raw columns, before binarization; pairs with the bundled schema.
            write_edgap_like_csv(&generate_edgap_like(*n, *seed)?, out_file(cfg, "data.csv")?)?;
            let schema = serde_json::to_string_pretty(&edgap_like_schema())? + "\n";
            fs::write(cfg.out_dir.join("schema.json"), schema)?;
            write_manifest(
                cfg,
                "generate",
                vec![],
                vec!["data.csv".into(), "schema.json".into()],
            )
        }
        source => {
            load_data(source)?.write_csv(out_file(cfg, "data.csv")?)?;
            write_manifest(cfg, "generate", vec![], vec!["data.csv".into()])
        }
    }
}

const FRONTIER_PREFIX: [&str; 2] = ["curve", "tree_count"];

fn write_labeled_sweep(
    rows: &[(String, SweepRow)],
    n_trees: usize,
    writer: impl std::io::Write,
) -> Result<()> {
    let mut header: Vec<&str> = FRONTIER_PREFIX.to_vec();
    header.extend(SWEEP_HEADER);
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(&header)?;
    for (label, row) in rows {
        let mut record = vec![label.clone(), n_trees.to_string()];
        record.extend(row.record());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_frontier(cfg: &RunConfig) -> Result<()> {
    create_out(cfg)?;
    let (_, ens) = train(cfg)?;
    let m_y = cfg.m_y_values();
    let mut rows = Vec::new();
    for &r_max in &cfg.r_max_grid {
        let base = PolicyConstraints::new(f64::INFINITY, 0.0, r_max)?;
        for (c, r) in sweep_frontier_ensemble(&ens, &m_y, &base)? {
            rows.push(("r_max".to_string(), r.sweep_row(c)));
        }
    }
    for &m_r in &cfg.m_r_grid {
        let base = PolicyConstraints::new(f64::INFINITY, m_r, cfg.frontier_r_max)?;
        for (c, r) in sweep_frontier_ensemble(&ens, &m_y, &base)? {
            rows.push(("m_r".to_string(), r.sweep_row(c)));
        }
    }
    write_labeled_sweep(&rows, ens.n_trees(), out_file(cfg, "frontier.csv")?)?;
    write_manifest(cfg, "frontier", ens.seeds(), vec!["frontier.csv".into()])
}

/// File name of the heatmap for one resource level.
pub fn heatmap_file_name(r_max: f64) -> String {
    format!("heatmap_r_max_{}.csv", fmt_real(r_max))
}

pub fn cmd_heatmap(cfg: &RunConfig) -> Result<()> {
    create_out(cfg)?;
    let (_, ens) = train(cfg)?;
    let m_y = cfg.m_y_values();
    let mut files = Vec::new();
    for &r_max in &cfg.r_max_grid {
        let rows: Vec<_> = heatmap_ensemble(&ens, &m_y, &cfg.m_r_grid, r_max)?
            .into_iter()
            .map(|(c, r)| ("heatmap".to_string(), r.sweep_row(c)))
            .collect();
        let name = heatmap_file_name(r_max);
        write_labeled_sweep(&rows, ens.n_trees(), out_file(cfg, &name)?)?;
        files.push(name);
    }
    write_manifest(cfg, "heatmap", ens.seeds(), files)
}

pub fn cmd_assign(cfg: &RunConfig, args: &AssignArgs) -> Result<()> {
    // Flags are folded into the config so the manifest hash covers them.
    let mut cfg = cfg.clone();
    cfg.assign = PointConfig {
        m_y: match args.m_y {
            Some(v) if v.is_infinite() => None,
            Some(v) => Some(v),
            None => cfg.assign.m_y,
        },
        m_r: args.m_r.unwrap_or(cfg.assign.m_r),
        r_max: args.r_max.unwrap_or(cfg.assign.r_max),
    };
    let cfg = &cfg;
    let c = cfg.assign.constraints()?;
    if args.file.is_empty() || args.file.contains(['/', '\\']) {
        return Err(Error::InvalidArgument(
            "--file must be a plain file name".into(),
        ));
    }
    create_out(cfg)?;
    let (data, ens) = train(cfg)?;
    let result = optimize_ensemble(&ens, &c)?;
    let mut files = Vec::new();
    if cfg.dump_lp {
        for (k, m) in ens.members.iter().enumerate() {
            let name = format!("lp_tree_{k}.lp");
            fs::write(
                cfg.out_dir.join(&name),
                build_lp(&m.stats, &c)?.lp.to_lp_text(),
            )?;
            files.push(name);
        }
    }
    let rows = assign(&ens, &result, &data)?;
    write_assignment_csv(&rows, out_file(cfg, &args.file)?)?;
    files.push(args.file.clone());
    write_manifest(cfg, "assign", ens.seeds(), files)
}

pub fn cmd_stats(cfg: &RunConfig) -> Result<()> {
    create_out(cfg)?;
    let (_, ens) = train(cfg)?;
    let mut files = Vec::new();
    for (k, m) in ens.members.iter().enumerate() {
        let csv_name = format!("leaf_stats_tree_{k}.csv");
        m.stats.write_csv(out_file(cfg, &csv_name)?)?;
        let json_name = format!("tree_{k}.json");
        let doc = TreeDocument::new(&m.tree, &m.stats)?;
        fs::write(
            cfg.out_dir.join(&json_name),
            serde_json::to_string(&doc)? + "\n",
        )?;
        files.push(csv_name);
        files.push(json_name);
    }
    write_manifest(cfg, "stats", ens.seeds(), files)
}
