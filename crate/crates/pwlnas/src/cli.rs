//! Command-line driver: TOML experiment configs, the five batch commands,
//! and plot-ready CSV emission.
//!
//! Exit codes: 0 success, 1 validation failure (bad flags or config,
//! reported exhaustively before any compute), 2 runtime failure. Every
//! command is deterministic given (config, seed): reruns produce
//! byte-identical output files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::arch::{EdgeRule, SpaceSpec};
use crate::bench::{load_with_space, synth_generate, BenchTable, SynthSpec, TableFormat};
use crate::losses::{LossKind, LossSpec, PwSchedule, ALL_LOSS_KINDS};
use crate::metrics::{
    evaluate, fit_on_portion, run_sweep, sweep_to_csv, MetricReport, OracleScorer, SweepConfig,
    DEFAULT_KS, DEFAULT_TS,
};
use crate::nn::{grad_check_faulted, init_predictor, random_batch, Backbone, TrainConfig};
use crate::search::{
    build_mutation_testset, pwlnas_search, pwlnas_search_oracle, random_search, traces_to_csv,
    LossPlan, SearchConfig, SearchError, SearchPreset, DEFAULT_INIT_SIZE,
    DEFAULT_QUERIES_PER_ITER, DEFAULT_TESTSET_INIT_N, DEFAULT_TESTSET_OUT_N,
    DEFAULT_TESTSET_SEEDS_TOP,
};
use crate::seed::{derive_seed, rng_from_seed, tag_f64, tag_str};

/// Relative error above which a gradient cell fails the audit.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config; nothing was computed. Exit code 1.
    Validation(String),
    /// Failure during compute or output. Exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError::Runtime(err.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "pwlnas",
    version,
    about = "Surrogate-guided architecture search: loss sweeps, evolutionary search, gradient audits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel cells (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic benchmark table and write it to the out dir.
    GenSynth(GenSynthArgs),
    /// Train across portions x losses x repeats and write a tidy CSV.
    Sweep,
    /// Run the evolutionary search and write its trace CSV.
    Search,
    /// Build the mutation test set and evaluate predictors on it.
    MutationEval,
    /// Audit analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    /// Nodes per cell DAG.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Size of a generated op vocabulary.
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Edge rule: dense-dag or fixed-graph-ops-only.
    #[arg(long)]
    pub edge_rule: Option<EdgeRule>,
    /// Number of architectures to tabulate.
    #[arg(long)]
    pub size: Option<usize>,
    /// Mix of rough pairwise structure in the landscape, 0..=1.
    #[arg(long)]
    pub ruggedness: Option<f64>,
    /// Output format: jsonl or csv.
    #[arg(long)]
    pub format: Option<TableFormat>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Check a single loss instead of all eight.
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Check a single backbone instead of both.
    #[arg(long)]
    pub backbone: Option<Backbone>,
    /// Random restarts per (loss, backbone) cell.
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Add a constant to every analytic gradient; proves the audit fails a
    /// wrong-gradient build.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A loss named by kind (defaults for every parameter) or spelled out.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LossEntry {
    Name(String),
    Spec(LossSpec),
}

impl LossEntry {
    fn resolve(&self, field: &str, errors: &mut Vec<String>) -> Option<LossSpec> {
        let spec = match self {
            LossEntry::Name(name) => match name.parse::<LossKind>() {
                Ok(kind) => LossSpec::new(kind),
                Err(_) => {
                    let allowed: Vec<String> =
                        ALL_LOSS_KINDS.iter().map(|k| k.to_string()).collect();
                    errors.push(format!(
                        "{field}: unknown loss name {name:?}; allowed values: {}",
                        allowed.join(", ")
                    ));
                    return None;
                }
            },
            LossEntry::Spec(spec) => spec.clone(),
        };
        if let Err(e) = spec.validate() {
            errors.push(format!("{field}: {e}"));
            return None;
        }
        Some(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub max_nodes: usize,
    /// Size of a generated vocabulary (exclusive with `ops`).
    #[serde(default)]
    pub vocab_size: Option<usize>,
    /// Explicit op vocabulary (exclusive with `vocab_size`).
    #[serde(default)]
    pub ops: Option<Vec<String>>,
    #[serde(default)]
    pub edge_rule: Option<EdgeRule>,
    pub size: usize,
    /// Generator seed; defaults to the base seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ruggedness: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSource {
    /// Path of a benchmark table to load.
    #[serde(default)]
    pub load: Option<PathBuf>,
    /// Format of the loaded table; inferred from the extension by default.
    #[serde(default)]
    pub format: Option<String>,
    /// Synthetic space to generate instead of loading.
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Training portions in percent of the table.
    pub portions: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub losses: Vec<LossEntry>,
    /// Precision@T portions; default 0.5, 1, 5.
    #[serde(default)]
    pub ts: Option<Vec<f64>>,
    /// N@K cutoffs; default 10.
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    #[serde(default)]
    pub backbone: Backbone,
    #[serde(default)]
    pub hidden_dims: Option<Vec<usize>>,
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub budget: usize,
    #[serde(default)]
    pub init_size: Option<usize>,
    #[serde(default)]
    pub iters: Option<usize>,
    #[serde(default)]
    pub candidates_per_iter: Option<usize>,
    #[serde(default)]
    pub parents_per_iter: Option<usize>,
    #[serde(default)]
    pub queries_per_iter: Option<usize>,
    /// Named warm/main combination (exclusive with `loss` and `schedule`).
    #[serde(default)]
    pub preset: Option<String>,
    /// Warm iterations of the preset schedule.
    #[serde(default)]
    pub warm_iters: Option<usize>,
    /// Single loss for every iteration (exclusive with preset/schedule).
    #[serde(default)]
    pub loss: Option<LossEntry>,
    /// Explicit warm/main schedule (exclusive with preset/loss).
    #[serde(default)]
    pub schedule: Option<PwSchedule>,
    #[serde(default)]
    pub backbone: Backbone,
    #[serde(default)]
    pub hidden_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub warm_start: bool,
    /// Also run the random baseline on the same seed and emit both traces.
    #[serde(default)]
    pub compare_random: bool,
    /// Score candidates by stored validation perf instead of a trained
    /// predictor (calibration mode).
    #[serde(default)]
    pub oracle: bool,
    /// Search seed; defaults to the base seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationSection {
    #[serde(default = "default_testset_init_n")]
    pub init_n: usize,
    #[serde(default = "default_testset_seeds_top")]
    pub seeds_top: usize,
    #[serde(default = "default_testset_out_n")]
    pub out_n: usize,
    /// Training portions in percent of the table.
    pub portions: Vec<f64>,
    #[serde(default)]
    pub losses: Vec<LossEntry>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub backbone: Backbone,
    #[serde(default)]
    pub hidden_dims: Option<Vec<usize>>,
    /// Score with the stored-test oracle instead of trained predictors.
    #[serde(default)]
    pub oracle: bool,
}

fn default_testset_init_n() -> usize {
    DEFAULT_TESTSET_INIT_N
}
fn default_testset_seeds_top() -> usize {
    DEFAULT_TESTSET_SEEDS_TOP
}
fn default_testset_out_n() -> usize {
    DEFAULT_TESTSET_OUT_N
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub space: SpaceSource,
    /// Shared training config; commands fall back to per-loss defaults.
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub search: Option<SearchSection>,
    #[serde(default)]
    pub mutation_eval: Option<MutationSection>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&body)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

fn validate_portion(field: &str, portion: f64, errors: &mut Vec<String>) {
    if !(portion > 0.0 && portion <= 100.0) {
        errors.push(format!("{field}: portion {portion} outside (0, 100]"));
    }
}

/// Collect every config problem (invariants, ranges, name resolution) so the
/// user sees the full list before any compute starts.
pub fn validate_config(config: &ExperimentConfig) -> Vec<String> {
    let mut errors = Vec::new();

    match (&config.space.load, &config.space.synth) {
        (None, None) => errors.push("space: needs either load or synth".into()),
        (Some(_), Some(_)) => errors.push("space: load and synth are exclusive, pick one".into()),
        (Some(path), None) => {
            if !path.exists() {
                errors.push(format!("space.load: file {} does not exist", path.display()));
            }
            if let Some(format) = &config.space.format {
                if let Err(e) = format.parse::<TableFormat>() {
                    errors.push(format!("space.format: {e}"));
                }
            }
        }
        (None, Some(synth)) => {
            if config.space.format.is_some() {
                errors.push("space.format: only meaningful with space.load".into());
            }
            if synth.max_nodes < 2 {
                errors.push("space.synth.max_nodes: need at least 2 nodes".into());
            }
            if synth.size < 2 {
                errors.push("space.synth.size: a benchmark needs at least 2 records".into());
            }
            match (&synth.vocab_size, &synth.ops) {
                (None, None) => {
                    errors.push("space.synth: needs either vocab_size or ops".into())
                }
                (Some(_), Some(_)) => {
                    errors.push("space.synth: vocab_size and ops are exclusive".into())
                }
                (Some(0), None) => errors.push("space.synth.vocab_size: must be positive".into()),
                (None, Some(ops)) if ops.is_empty() => {
                    errors.push("space.synth.ops: must not be empty".into())
                }
                _ => {}
            }
            if let Some(r) = synth.ruggedness {
                if !(0.0..=1.0).contains(&r) {
                    errors.push(format!("space.synth.ruggedness: {r} outside [0, 1]"));
                }
            }
        }
    }

    if let Some(train) = &config.train {
        if let Err(e) = train.validate() {
            errors.push(format!("train: {e}"));
        }
    }

    if let Some(sweep) = &config.sweep {
        if sweep.portions.is_empty() {
            errors.push("sweep.portions: must not be empty".into());
        }
        for p in &sweep.portions {
            validate_portion("sweep.portions", *p, &mut errors);
        }
        if sweep.repeats == 0 {
            errors.push("sweep.repeats: must be at least 1".into());
        }
        if sweep.losses.is_empty() {
            errors.push("sweep.losses: must not be empty".into());
        }
        for entry in &sweep.losses {
            entry.resolve("sweep.losses", &mut errors);
        }
        if let Some(ts) = &sweep.ts {
            for t in ts {
                if !(*t > 0.0 && *t <= 100.0) {
                    errors.push(format!("sweep.ts: {t} outside (0, 100]"));
                }
            }
        }
        if let Some(ks) = &sweep.ks {
            if ks.contains(&0) {
                errors.push("sweep.ks: cutoffs must be at least 1".into());
            }
        }
    }

    if let Some(search) = &config.search {
        let plan_sources =
            search.preset.is_some() as u8 + search.loss.is_some() as u8 + search.schedule.is_some() as u8;
        if plan_sources != 1 {
            errors.push("search: needs exactly one of preset, loss, or schedule".into());
        }
        if let Some(name) = &search.preset {
            if let Err(e) = name.parse::<SearchPreset>() {
                errors.push(format!("search.preset: {e}"));
            }
        }
        if search.warm_iters.is_some() && search.preset.is_none() {
            errors.push("search.warm_iters: only meaningful with search.preset".into());
        }
        if let Some(entry) = &search.loss {
            entry.resolve("search.loss", &mut errors);
        }
        // Structural invariants (positivity, init <= budget) are checked via
        // the resolved SearchConfig so the rules live in one place.
        if plan_sources == 1 {
            let mut scratch = Vec::new();
            if let Ok(cfg) = resolve_search_config(config, search, &mut scratch) {
                if let Err(e) = cfg.validate() {
                    errors.push(format!("search: {e}"));
                }
            }
            errors.extend(scratch);
        }
    }

    if let Some(me) = &config.mutation_eval {
        for (name, v) in
            [("init_n", me.init_n), ("seeds_top", me.seeds_top), ("out_n", me.out_n)]
        {
            if v == 0 {
                errors.push(format!("mutation_eval.{name}: must be positive"));
            }
        }
        if me.seeds_top > me.init_n {
            errors.push(format!(
                "mutation_eval.seeds_top: {} exceeds init_n {}",
                me.seeds_top, me.init_n
            ));
        }
        if me.out_n < 10 {
            errors.push(format!(
                "mutation_eval.out_n: {} is below the N@10 cutoff, need at least 10",
                me.out_n
            ));
        }
        if me.portions.is_empty() {
            errors.push("mutation_eval.portions: must not be empty".into());
        }
        for p in &me.portions {
            validate_portion("mutation_eval.portions", *p, &mut errors);
        }
        if me.losses.is_empty() && !me.oracle {
            errors.push("mutation_eval.losses: must not be empty (or set oracle = true)".into());
        }
        for entry in &me.losses {
            entry.resolve("mutation_eval.losses", &mut errors);
        }
        if me.repeats == 0 {
            errors.push("mutation_eval.repeats: must be at least 1".into());
        }
    }

    errors
}

fn resolve_losses(entries: &[LossEntry], field: &str) -> Result<Vec<LossSpec>, CliError> {
    let mut errors = Vec::new();
    let specs: Vec<LossSpec> =
        entries.iter().filter_map(|e| e.resolve(field, &mut errors)).collect();
    if errors.is_empty() {
        Ok(specs)
    } else {
        Err(CliError::Validation(errors.join("\n")))
    }
}

fn resolve_search_config(
    config: &ExperimentConfig,
    section: &SearchSection,
    errors: &mut Vec<String>,
) -> Result<SearchConfig, ()> {
    let plan = if let Some(name) = &section.preset {
        let preset: SearchPreset = name.parse().map_err(|_| ())?;
        LossPlan::Schedule(preset.schedule(section.warm_iters.unwrap_or(3)))
    } else if let Some(entry) = &section.loss {
        match entry.resolve("search.loss", errors) {
            Some(spec) => LossPlan::Fixed(spec),
            None => return Err(()),
        }
    } else if let Some(schedule) = &section.schedule {
        LossPlan::Schedule(schedule.clone())
    } else {
        return Err(());
    };
    let init_size = section.init_size.unwrap_or(DEFAULT_INIT_SIZE.min(section.budget));
    let queries = section.queries_per_iter.unwrap_or(DEFAULT_QUERIES_PER_ITER);
    let iters = section
        .iters
        .unwrap_or_else(|| section.budget.saturating_sub(init_size).div_ceil(queries.max(1)));
    let mut cfg = SearchConfig::for_budget(section.budget, plan);
    cfg.init_size = init_size;
    cfg.iters = iters;
    cfg.queries_per_iter = queries;
    if let Some(v) = section.candidates_per_iter {
        cfg.candidates_per_iter = v;
    }
    if let Some(v) = section.parents_per_iter {
        cfg.parents_per_iter = v;
    }
    cfg.backbone = section.backbone;
    cfg.hidden_dims = section.hidden_dims.clone();
    cfg.train = config.train.clone().unwrap_or_default();
    cfg.warm_start = section.warm_start;
    cfg.seed = section.seed.unwrap_or(config.base_seed);
    Ok(cfg)
}

/// Build the benchmark table named by the config, returning it with a label
/// for the CSV `space` column.
pub fn resolve_table(config: &ExperimentConfig) -> Result<(BenchTable, String), CliError> {
    if let Some(path) = &config.space.load {
        let format = match &config.space.format {
            Some(f) => f.parse::<TableFormat>().map_err(CliError::Validation)?,
            None => match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => TableFormat::Csv,
                _ => TableFormat::Jsonl,
            },
        };
        let table = load_with_space(path, format, None).map_err(runtime)?;
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("loaded")
            .to_string();
        return Ok((table, label));
    }
    let synth = config.space.synth.as_ref().expect("validated space source");
    let spec = match (&synth.ops, &synth.vocab_size) {
        (Some(ops), None) => SpaceSpec::new(
            synth.max_nodes,
            ops.clone(),
            synth.edge_rule.unwrap_or(EdgeRule::FixedGraphOpsOnly),
        ),
        (None, Some(v)) => SpaceSpec::with_generated_vocab(
            synth.max_nodes,
            *v,
            synth.edge_rule.unwrap_or(EdgeRule::FixedGraphOpsOnly),
        ),
        _ => unreachable!("validated vocab source"),
    };
    let synth_spec = SynthSpec::new(
        spec,
        synth.size,
        synth.seed.unwrap_or(config.base_seed),
        synth.ruggedness.unwrap_or(0.3),
    );
    let table = synth_generate(&synth_spec).map_err(runtime)?;
    Ok((table, "synthetic".to_string()))
}

fn require_config<'a>(
    config: Option<&'a ExperimentConfig>,
    what: &str,
) -> Result<&'a ExperimentConfig, CliError> {
    config.ok_or_else(|| CliError::Validation(format!("{what} needs --config <FILE>")))
}

fn require_section<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("config has no [{name}] section")))
}

fn write_output(out_dir: &Path, name: &str, body: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    std::fs::write(&path, body)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn sha256_hex(body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(body.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Generate and save a synthetic table; prints its size and checksum.
/// Flags override the config's `[space.synth]` section when both are given.
pub fn cmd_gen_synth(
    args: &GenSynthArgs,
    config: Option<&ExperimentConfig>,
    out_dir: &Path,
    base_seed: u64,
) -> Result<(), CliError> {
    let section = config.and_then(|c| c.space.synth.as_ref());
    let mut errors = Vec::new();

    let max_nodes = args.nodes.or(section.map(|s| s.max_nodes)).unwrap_or(5);
    let size = match args.size.or(section.map(|s| s.size)) {
        Some(n) if n >= 2 => n,
        Some(n) => {
            errors.push(format!("--size {n}: a benchmark needs at least 2 records"));
            0
        }
        None => {
            errors.push("--size is required (or a [space.synth] config section)".into());
            0
        }
    };
    let ruggedness = args
        .ruggedness
        .or(section.and_then(|s| s.ruggedness))
        .unwrap_or(0.3);
    if !(0.0..=1.0).contains(&ruggedness) {
        errors.push(format!("--ruggedness {ruggedness}: outside [0, 1]"));
    }
    if max_nodes < 2 {
        errors.push(format!("--nodes {max_nodes}: need at least 2"));
    }
    let edge_rule = args
        .edge_rule
        .or(section.and_then(|s| s.edge_rule))
        .unwrap_or(EdgeRule::FixedGraphOpsOnly);
    let spec = match (args.vocab, section.and_then(|s| s.ops.clone())) {
        (Some(0), _) => {
            errors.push("--vocab: must be positive".into());
            None
        }
        (Some(v), _) => Some(SpaceSpec::with_generated_vocab(max_nodes, v, edge_rule)),
        (None, Some(ops)) => Some(SpaceSpec::new(max_nodes, ops, edge_rule)),
        (None, None) => {
            let v = section.and_then(|s| s.vocab_size).unwrap_or(4);
            Some(SpaceSpec::with_generated_vocab(max_nodes, v, edge_rule))
        }
    };
    if !errors.is_empty() {
        return Err(CliError::Validation(errors.join("\n")));
    }

    let seed = section.and_then(|s| s.seed).unwrap_or(base_seed);
    let synth = SynthSpec::new(spec.expect("validated"), size, seed, ruggedness);
    let table = synth_generate(&synth).map_err(runtime)?;

    let format = args.format.unwrap_or(TableFormat::Jsonl);
    let name = match format {
        TableFormat::Jsonl => "synth_table.jsonl",
        TableFormat::Csv => "synth_table.csv",
    };
    let body = match format {
        TableFormat::Jsonl => crate::bench::to_jsonl_string(&table),
        TableFormat::Csv => crate::bench::to_csv_string(&table),
    };
    let path = write_output(out_dir, name, &body)?;
    println!("wrote {} n={} sha256={}", path.display(), table.len(), sha256_hex(&body));
    Ok(())
}

/// Run the configured sweep and write `sweep.csv`. Exit is clean only if no
/// cell failed.
pub fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path, base_seed: u64) -> Result<(), CliError> {
    let section = require_section(&config.sweep, "sweep")?;
    let losses = resolve_losses(&section.losses, "sweep.losses")?;
    let (table, label) = resolve_table(config)?;
    let sweep_cfg = SweepConfig {
        space_label: label,
        backbone: section.backbone,
        hidden_dims: section.hidden_dims.clone(),
        train: config.train.clone(),
        ts: section.ts.clone().unwrap_or_else(|| DEFAULT_TS.to_vec()),
        ks: section.ks.clone().unwrap_or_else(|| DEFAULT_KS.to_vec()),
        base_seed,
    };
    let result = run_sweep(&table, &section.portions, section.repeats, &losses, &sweep_cfg);
    let body = sweep_to_csv(&result);
    let path = write_output(out_dir, "sweep.csv", &body)?;
    println!(
        "wrote {} cells={} failed={} sha256={}",
        path.display(),
        result.rows.len() + result.failures.len(),
        result.failures.len(),
        sha256_hex(&body)
    );
    if result.failures.is_empty() {
        Ok(())
    } else {
        let mut lines: Vec<String> = result
            .failures
            .iter()
            .map(|f| format!("portion {} loss {} run {}: {}", f.portion, f.loss, f.run, f.error))
            .collect();
        lines.truncate(10);
        Err(CliError::Runtime(format!(
            "{} sweep cell(s) failed:\n{}",
            result.failures.len(),
            lines.join("\n")
        )))
    }
}

/// Run the configured search (optionally paired with the random baseline on
/// the same seed) and write `search_trace.csv`.
pub fn cmd_search(config: &ExperimentConfig, out_dir: &Path, base_seed: u64) -> Result<(), CliError> {
    let section = require_section(&config.search, "search")?;
    let mut errors = Vec::new();
    let mut cfg = resolve_search_config(config, section, &mut errors)
        .map_err(|_| CliError::Validation(errors.join("\n")))?;
    if section.seed.is_none() {
        cfg.seed = base_seed;
    }
    let (table, _) = resolve_table(config)?;

    let map_err = |e: SearchError| match e {
        SearchError::InvalidConfig(_) => CliError::Validation(e.to_string()),
        other => runtime(other),
    };
    let trace = if section.oracle {
        pwlnas_search_oracle(&table, &cfg).map_err(map_err)?
    } else {
        pwlnas_search(&table, &cfg).map_err(map_err)?
    };
    let mut traces = vec![("pwlnas", &trace)];
    let baseline;
    if section.compare_random {
        baseline = random_search(&table, cfg.budget, cfg.seed).map_err(map_err)?;
        traces.push(("random", &baseline));
    }
    let body = traces_to_csv(&traces);
    let path = write_output(out_dir, "search_trace.csv", &body)?;
    println!(
        "wrote {} spent={} best_val={} best_test={} sha256={}",
        path.display(),
        trace.spent,
        trace.best_val,
        trace.best_test,
        sha256_hex(&body)
    );
    Ok(())
}

/// Build the mutation test set, train per configured (portion, loss, run),
/// and evaluate on the mutation set only. Writes `mutation_eval.csv` whose
/// header records the evaluation set size.
pub fn cmd_mutation_eval(
    config: &ExperimentConfig,
    out_dir: &Path,
    base_seed: u64,
) -> Result<(), CliError> {
    use std::fmt::Write as _;
    let section = require_section(&config.mutation_eval, "mutation_eval")?;
    let losses = if section.oracle {
        Vec::new()
    } else {
        resolve_losses(&section.losses, "mutation_eval.losses")?
    };
    let (table, label) = resolve_table(config)?;

    let mut rng = rng_from_seed(derive_seed(base_seed, &[tag_str("mutation-testset")]));
    let keys =
        build_mutation_testset(&table, section.init_n, section.seeds_top, section.out_n, &mut rng)
            .map_err(runtime)?;

    // Local discrimination is what this set stresses, so report the
    // top-of-table metrics alongside tau: P@5 and N@10.
    let ts = [5.0];
    let ks = [10];
    let mut rows: Vec<(f64, String, usize, u64, MetricReport)> = Vec::new();
    for &portion in &section.portions {
        if section.oracle {
            let report =
                evaluate(&OracleScorer::test(&table), &table, Some(keys.as_slice()), &ts, &ks)
                    .map_err(runtime)?;
            rows.push((portion, "oracle".into(), 1, base_seed, report));
            continue;
        }
        for loss in &losses {
            for run in 1..=section.repeats {
                let seed = derive_seed(
                    base_seed,
                    &[
                        tag_str("mutation-eval"),
                        tag_f64(portion),
                        tag_str(&loss.kind.to_string()),
                        run as u64,
                    ],
                );
                let predictor = fit_on_portion(
                    &table,
                    portion,
                    loss,
                    section.backbone,
                    section.hidden_dims.as_deref(),
                    config.train.as_ref(),
                    seed,
                )
                .map_err(runtime)?;
                let report = evaluate(&predictor, &table, Some(keys.as_slice()), &ts, &ks)
                    .map_err(runtime)?;
                rows.push((portion, loss.kind.to_string(), run, seed, report));
            }
        }
    }

    let mut body = format!("# mutation_test_set_size = {}\n", keys.len());
    body.push_str("space,portion,loss,run,tau,precision_5,n_at_10,seed\n");
    for (portion, loss, run, seed, report) in &rows {
        writeln!(
            body,
            "{label},{portion},{loss},{run},{},{},{},{seed}",
            report.tau, report.precision_at[0].1, report.n_at[0].1
        )
        .unwrap();
    }
    let path = write_output(out_dir, "mutation_eval.csv", &body)?;
    println!(
        "wrote {} testset={} rows={} sha256={}",
        path.display(),
        keys.len(),
        rows.len(),
        sha256_hex(&body)
    );
    Ok(())
}

/// One row of the gradient audit.
#[derive(Debug, Clone)]
pub struct GradCell {
    pub loss: LossKind,
    pub backbone: Backbone,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub pass: bool,
}

/// Audit every requested (loss, backbone) cell over several random restarts.
/// `fault` is added to the analytic gradients (0 for an honest audit).
pub fn run_gradcheck(
    losses: &[LossKind],
    backbones: &[Backbone],
    restarts: usize,
    eps: f64,
    fault: f64,
    base_seed: u64,
) -> Result<Vec<GradCell>, CliError> {
    let space = SpaceSpec::with_generated_vocab(4, 3, EdgeRule::FixedGraphOpsOnly);
    let mut cells = Vec::new();
    for &loss in losses {
        for &backbone in backbones {
            let spec = LossSpec::new(loss);
            let mut max_rel_error = 0.0f64;
            let mut checked = 0;
            let mut skipped = 0;
            for restart in 0..restarts {
                // A draw can land within the kink-exclusion zone and check
                // nothing; redraw so every restart compares gradients.
                for attempt in 0..20u64 {
                    let cell_seed = derive_seed(
                        base_seed,
                        &[
                            tag_str("gradcheck"),
                            tag_str(&loss.to_string()),
                            tag_str(&backbone.to_string()),
                            restart as u64,
                            attempt,
                        ],
                    );
                    let p =
                        init_predictor(backbone, &space, &[12, 12], cell_seed).map_err(runtime)?;
                    let batch =
                        random_batch(&space, 8, derive_seed(cell_seed, &[tag_str("batch")]));
                    let report =
                        grad_check_faulted(&p, &spec, &batch, eps, fault).map_err(runtime)?;
                    if report.checked == 0 && attempt < 19 {
                        continue;
                    }
                    max_rel_error = max_rel_error.max(report.max_rel_error);
                    checked += report.checked;
                    skipped += report.skipped;
                    break;
                }
            }
            cells.push(GradCell {
                loss,
                backbone,
                max_rel_error,
                checked,
                skipped,
                pass: max_rel_error <= GRADCHECK_TOLERANCE,
            });
        }
    }
    Ok(cells)
}

/// Run the gradient audit, write `gradcheck.csv`, and fail if any cell's
/// error exceeds the tolerance.
pub fn cmd_gradcheck(args: &GradcheckArgs, out_dir: &Path, base_seed: u64) -> Result<(), CliError> {
    use std::fmt::Write as _;
    let mut errors = Vec::new();
    if args.restarts == 0 {
        errors.push("--restarts: must be at least 1".to_string());
    }
    if !(args.eps > 0.0 && args.eps <= 1e-2) {
        errors.push(format!("--eps {}: outside (0, 1e-2]", args.eps));
    }
    if !errors.is_empty() {
        return Err(CliError::Validation(errors.join("\n")));
    }

    let losses: Vec<LossKind> = match args.loss {
        Some(kind) => vec![kind],
        None => ALL_LOSS_KINDS.to_vec(),
    };
    let backbones = match args.backbone {
        Some(b) => vec![b],
        None => vec![Backbone::Mlp, Backbone::Gcn],
    };
    let fault = if args.inject_fault { 0.05 } else { 0.0 };
    let cells = run_gradcheck(&losses, &backbones, args.restarts, args.eps, fault, base_seed)?;

    let mut body = String::from("loss,backbone,restarts,checked,skipped,max_rel_error,status\n");
    for cell in &cells {
        let status = if cell.pass { "pass" } else { "fail" };
        writeln!(
            body,
            "{},{},{},{},{},{:.3e},{}",
            cell.loss, cell.backbone, args.restarts, cell.checked, cell.skipped,
            cell.max_rel_error, status
        )
        .unwrap();
        println!(
            "{:<13} {:<4} {} max_rel_error={:.3e} checked={} skipped={}",
            cell.loss.to_string(),
            cell.backbone.to_string(),
            status,
            cell.max_rel_error,
            cell.checked,
            cell.skipped
        );
    }
    write_output(out_dir, "gradcheck.csv", &body)?;

    let failed = cells.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{failed} of {} gradient cell(s) exceeded tolerance {GRADCHECK_TOLERANCE:e}",
            cells.len()
        )))
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if cli.jobs > 0 {
        // Only the first initialization wins; later calls in one process
        // keep the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }

    let config = cli.config.as_deref().map(load_config).transpose()?;
    if let Some(cfg) = &config {
        let errors = validate_config(cfg);
        if !errors.is_empty() {
            return Err(CliError::Validation(errors.join("\n")));
        }
    }
    let base_seed = cli
        .seed
        .or(config.as_ref().map(|c| c.base_seed))
        .unwrap_or(0);
    let out_dir = cli
        .out
        .clone()
        .or(config.as_ref().map(|c| c.out_dir.clone()))
        .unwrap_or_else(default_out_dir);

    match &cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args, config.as_ref(), &out_dir, base_seed),
        Command::Sweep => cmd_sweep(require_config(config.as_ref(), "sweep")?, &out_dir, base_seed),
        Command::Search => {
            cmd_search(require_config(config.as_ref(), "search")?, &out_dir, base_seed)
        }
        Command::MutationEval => {
            cmd_mutation_eval(require_config(config.as_ref(), "mutation-eval")?, &out_dir, base_seed)
        }
        Command::Gradcheck(args) => cmd_gradcheck(args, &out_dir, base_seed),
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
