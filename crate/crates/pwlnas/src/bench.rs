//! Tabular ground truth: benchmark tables mapping architectures to validation
//! and test performance, a seeded synthetic generator, portion-based splits,
//! and query-budget accounting.
//!
//! Validation performance is the training target throughout; test performance
//! is reserved for final reporting (e.g. the test accuracy of a search's
//! selected architecture).

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    canonical_key, sample_valid, space_size, validate, Architecture, EdgeRule, SpaceSpec,
    ValidationIssue,
};
use crate::seed::{derive_seed, rng_from_seed, tag_str, unit_from_tags};

/// Ground-truth performance of one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfRecord {
    pub arch: Architecture,
    /// Validation performance in [0, 1]; the training target.
    pub val_perf: f64,
    /// Test performance in [0, 1]; reporting only.
    pub test_perf: f64,
}

/// Immutable benchmark table with a canonical-key index.
#[derive(Debug, Clone)]
pub struct BenchTable {
    spec: SpaceSpec,
    records: Vec<PerfRecord>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate architecture key {key:?}")]
    DuplicateKey { key: String },
    #[error("line {line}: invalid architecture: {}", issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidArch { line: usize, issues: Vec<ValidationIssue> },
    #[error("requested {requested} architectures but the space only has {available}")]
    ExhaustedSpace { requested: usize, available: u128 },
    #[error("training portion {portion} outside (0, 100]")]
    InvalidPortion { portion: f64 },
    #[error("unknown architecture key {key:?}")]
    UnknownKey { key: String },
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: usize },
}

impl BenchTable {
    /// Build a table, checking key uniqueness and record validity.
    pub fn from_records(spec: SpaceSpec, records: Vec<PerfRecord>) -> Result<Self, BenchError> {
        let mut index = HashMap::with_capacity(records.len());
        for (pos, rec) in records.iter().enumerate() {
            let report = validate(&rec.arch, &spec);
            if !report.is_valid() {
                return Err(BenchError::InvalidArch { line: pos + 1, issues: report.issues });
            }
            let key = canonical_key(&rec.arch);
            if index.insert(key.clone(), pos).is_some() {
                return Err(BenchError::DuplicateKey { key });
            }
        }
        Ok(Self { spec, records, index })
    }

    pub fn spec(&self) -> &SpaceSpec {
        &self.spec
    }

    pub fn records(&self) -> &[PerfRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&PerfRecord> {
        self.index.get(key).map(|&pos| &self.records[pos])
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    /// Keys in record order.
    pub fn keys(&self) -> impl Iterator<Item = String> + '_ {
        self.records.iter().map(|r| canonical_key(&r.arch))
    }
}

/// Budget accounting for ground-truth queries. Re-queries of an already seen
/// key are free; `spent` is always the number of distinct keys queried.
#[derive(Debug, Clone)]
pub struct QueryLedger {
    budget: usize,
    queried: BTreeSet<String>,
}

impl QueryLedger {
    pub fn new(budget: usize) -> Self {
        Self { budget, queried: BTreeSet::new() }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn spent(&self) -> usize {
        self.queried.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.spent()
    }

    pub fn has_queried(&self, key: &str) -> bool {
        self.queried.contains(key)
    }
}

/// Look up a record, charging the ledger for first-time keys.
pub fn query<'t>(
    table: &'t BenchTable,
    key: &str,
    ledger: &mut QueryLedger,
) -> Result<&'t PerfRecord, BenchError> {
    let rec = table.get(key).ok_or_else(|| BenchError::UnknownKey { key: to_owned_key(key) })?;
    if !ledger.queried.contains(key) {
        if ledger.spent() >= ledger.budget {
            return Err(BenchError::BudgetExhausted { budget: ledger.budget });
        }
        ledger.queried.insert(to_owned_key(key));
    }
    Ok(rec)
}

fn to_owned_key(key: &str) -> String {
    key.to_string()
}

/// Split a table into train keys and holdout keys by training portion
/// (a percentage of the table). Train size is `max(1, floor(portion*N/100))`
/// so sub-percent portions on small tables still train on something.
/// Both halves come back in record order.
pub fn split(
    table: &BenchTable,
    portion: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), BenchError> {
    if !(portion > 0.0 && portion <= 100.0) {
        return Err(BenchError::InvalidPortion { portion });
    }
    let n = table.len();
    let train_size = ((portion * n as f64 / 100.0).floor() as usize).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, &[tag_str("split")])));
    let mut chosen = vec![false; n];
    for &i in order.iter().take(train_size) {
        chosen[i] = true;
    }
    let keys: Vec<String> = table.keys().collect();
    let mut train = Vec::with_capacity(train_size);
    let mut holdout = Vec::with_capacity(n - train_size);
    for (i, key) in keys.into_iter().enumerate() {
        if chosen[i] {
            train.push(key);
        } else {
            holdout.push(key);
        }
    }
    Ok((train, holdout))
}

/// Specification for a deterministic synthetic benchmark.
///
/// The landscape blends a smooth per-op score component with seeded pairwise
/// interaction noise between the ops joined by each edge; `ruggedness` is the
/// mixing weight of the noise. At ruggedness 0 validation performance is a
/// strictly increasing function of the summed per-op scores, which makes the
/// full ranking of any generated table computable in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub spec: SpaceSpec,
    pub size: usize,
    pub seed: u64,
    pub ruggedness: f64,
}

impl SynthSpec {
    pub fn new(spec: SpaceSpec, size: usize, seed: u64, ruggedness: f64) -> Self {
        assert!(size >= 2, "a benchmark needs at least two records");
        assert!((0.0..=1.0).contains(&ruggedness), "ruggedness must be in [0, 1]");
        Self { spec, size, seed, ruggedness }
    }
}

/// Smooth per-op score in [0, 1), derived from the generator seed and the
/// op's vocabulary index.
pub fn synth_op_score(s: &SynthSpec, op_idx: usize) -> f64 {
    unit_from_tags(s.seed, &[tag_str("op-score"), op_idx as u64])
}

fn synth_pair_score(s: &SynthSpec, a_idx: usize, b_idx: usize) -> f64 {
    unit_from_tags(s.seed, &[tag_str("pair-score"), a_idx as u64, b_idx as u64])
}

/// Smooth landscape component: mean per-op score over the nodes.
pub fn synth_smooth_component(s: &SynthSpec, arch: &Architecture) -> f64 {
    let total: f64 = arch
        .ops()
        .iter()
        .map(|op| synth_op_score(s, s.spec.op_index(op).expect("op in vocabulary")))
        .sum();
    total / arch.num_nodes() as f64
}

fn synth_rough_component(s: &SynthSpec, arch: &Architecture) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, j) in arch.edges() {
        let a = s.spec.op_index(&arch.ops()[i]).expect("op in vocabulary");
        let b = s.spec.op_index(&arch.ops()[j]).expect("op in vocabulary");
        total += synth_pair_score(s, a, b);
        count += 1;
    }
    if count == 0 {
        0.5
    } else {
        total / count as f64
    }
}

/// Validation performance of one architecture under the synthetic landscape,
/// mapped into [0.05, 0.95] so the val/test gap never clips.
pub fn synth_val_perf(s: &SynthSpec, arch: &Architecture) -> f64 {
    let smooth = synth_smooth_component(s, arch);
    let rough = synth_rough_component(s, arch);
    let mix = (1.0 - s.ruggedness) * smooth + s.ruggedness * rough;
    0.05 + 0.9 * mix
}

fn synth_gap(s: &SynthSpec, key: &str) -> f64 {
    (unit_from_tags(s.seed, &[tag_str("val-test-gap"), tag_str(key)]) - 0.5) * 0.02
}

/// Generate a synthetic table of `s.size` distinct valid architectures.
/// Deterministic in the seed; validation performance comes straight from the
/// landscape and test performance differs from it by at most 0.01.
pub fn synth_generate(s: &SynthSpec) -> Result<BenchTable, BenchError> {
    assert!(s.size >= 2, "a benchmark needs at least two records");
    if let Some(total) = space_size(&s.spec) {
        if (s.size as u128) > total {
            return Err(BenchError::ExhaustedSpace { requested: s.size, available: total });
        }
    }
    let mut rng = rng_from_seed(derive_seed(s.seed, &[tag_str("synth-sample")]));
    let mut seen = HashMap::with_capacity(s.size);
    let mut records = Vec::with_capacity(s.size);
    while records.len() < s.size {
        let arch = sample_valid(&s.spec, &mut rng);
        let key = canonical_key(&arch);
        if seen.contains_key(&key) {
            continue;
        }
        let val_perf = synth_val_perf(s, &arch).clamp(0.0, 1.0);
        let test_perf = (val_perf - synth_gap(s, &key)).clamp(0.0, 1.0);
        seen.insert(key, records.len());
        records.push(PerfRecord { arch, val_perf, test_perf });
    }
    BenchTable::from_records(s.spec.clone(), records)
}

/// On-disk serialization formats for benchmark tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(TableFormat::Jsonl),
            "csv" => Ok(TableFormat::Csv),
            other => Err(format!("unknown table format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Units {
    Fraction,
    Percent,
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    space: SpaceSpec,
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    num_nodes: usize,
    adjacency: Vec<Vec<u8>>,
    ops: Vec<String>,
    val: f64,
    test: f64,
    units: Units,
}

fn record_to_arch(
    line: usize,
    num_nodes: usize,
    adjacency_bits: Vec<u8>,
    ops: Vec<String>,
) -> Result<Architecture, BenchError> {
    if num_nodes == 0 {
        return Err(BenchError::Parse { line, msg: "num_nodes must be positive".into() });
    }
    if adjacency_bits.len() != num_nodes * num_nodes {
        return Err(BenchError::Parse {
            line,
            msg: format!(
                "adjacency has {} entries, expected {}",
                adjacency_bits.len(),
                num_nodes * num_nodes
            ),
        });
    }
    if ops.len() != num_nodes {
        return Err(BenchError::Parse {
            line,
            msg: format!("{} ops for {} nodes", ops.len(), num_nodes),
        });
    }
    for &b in &adjacency_bits {
        if b > 1 {
            return Err(BenchError::Parse { line, msg: format!("adjacency entry {b} not 0/1") });
        }
    }
    Ok(Architecture::new(num_nodes, adjacency_bits.iter().map(|&b| b == 1).collect(), ops))
}

fn normalize_perf(line: usize, raw: f64, units: Units, field: &str) -> Result<f64, BenchError> {
    if !raw.is_finite() {
        return Err(BenchError::Parse { line, msg: format!("{field} is not finite") });
    }
    let frac = match units {
        Units::Fraction => raw,
        Units::Percent => raw / 100.0,
    };
    Ok(frac.clamp(0.0, 1.0))
}

/// Serialize a table to its JSONL form: a header line carrying the space,
/// then one record per line with ids set to canonical keys and performances
/// stored as fractions.
pub fn to_jsonl_string(table: &BenchTable) -> String {
    let mut out = String::new();
    let header = JsonlHeader { space: table.spec.clone() };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for rec in &table.records {
        let n = rec.arch.num_nodes();
        let bits: Vec<u8> = rec.arch.adjacency_bits().collect();
        let adjacency: Vec<Vec<u8>> = (0..n).map(|i| bits[i * n..(i + 1) * n].to_vec()).collect();
        let line = JsonlRecord {
            id: canonical_key(&rec.arch),
            num_nodes: n,
            adjacency,
            ops: rec.arch.ops().to_vec(),
            val: rec.val_perf,
            test: rec.test_perf,
            units: Units::Fraction,
        };
        out.push_str(&serde_json::to_string(&line).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Serialize a table to CSV with header
/// `id,num_nodes,adjacency_bits,ops,val,test,units`. The space itself is not
/// representable in CSV; reloading needs an explicit space (or inference).
pub fn to_csv_string(table: &BenchTable) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["id", "num_nodes", "adjacency_bits", "ops", "val", "test", "units"])
        .expect("csv header");
    for rec in &table.records {
        let bits: String =
            rec.arch.adjacency_bits().map(|b| if b == 1 { '1' } else { '0' }).collect();
        let mut val = String::new();
        write!(val, "{}", rec.val_perf).unwrap();
        let mut test = String::new();
        write!(test, "{}", rec.test_perf).unwrap();
        wtr.write_record([
            canonical_key(&rec.arch).as_str(),
            &rec.arch.num_nodes().to_string(),
            &bits,
            &rec.arch.ops().join("|"),
            &val,
            &test,
            "fraction",
        ])
        .expect("csv record");
    }
    String::from_utf8(wtr.into_inner().expect("csv flush")).expect("csv is utf-8")
}

/// Write a table to disk in the given format.
pub fn save(table: &BenchTable, path: &Path, format: TableFormat) -> Result<(), BenchError> {
    let body = match format {
        TableFormat::Jsonl => to_jsonl_string(table),
        TableFormat::Csv => to_csv_string(table),
    };
    std::fs::write(path, body).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}

struct RawRecord {
    line: usize,
    arch: Architecture,
    val: f64,
    test: f64,
}

/// Load a table, resolving the space as: explicit `space` argument if given,
/// else a JSONL header line if present, else inference from the records
/// (vocabulary by first appearance; fixed-graph rule iff all adjacencies are
/// identical).
pub fn load_with_space(
    path: &Path,
    format: TableFormat,
    space: Option<&SpaceSpec>,
) -> Result<BenchTable, BenchError> {
    let body = std::fs::read_to_string(path)
        .map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    let (header_space, raw) = match format {
        TableFormat::Jsonl => parse_jsonl(&body)?,
        TableFormat::Csv => (None, parse_csv(&body)?),
    };
    let spec = match (space, header_space) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s,
        (None, None) => infer_space(&raw)?,
    };
    let mut records = Vec::with_capacity(raw.len());
    let mut index: HashMap<String, usize> = HashMap::with_capacity(raw.len());
    for r in raw {
        let report = validate(&r.arch, &spec);
        if !report.is_valid() {
            return Err(BenchError::InvalidArch { line: r.line, issues: report.issues });
        }
        let key = canonical_key(&r.arch);
        if index.insert(key.clone(), records.len()).is_some() {
            return Err(BenchError::DuplicateKey { key });
        }
        records.push(PerfRecord { arch: r.arch, val_perf: r.val, test_perf: r.test });
    }
    Ok(BenchTable { spec, records, index })
}

/// Load a table, taking the space from the file itself (JSONL header) or
/// inferring it from the records.
pub fn load(path: &Path, format: TableFormat) -> Result<BenchTable, BenchError> {
    load_with_space(path, format, None)
}

fn parse_jsonl(body: &str) -> Result<(Option<SpaceSpec>, Vec<RawRecord>), BenchError> {
    let mut header = None;
    let mut raw = Vec::new();
    for (idx, text) in body.lines().enumerate() {
        let line = idx + 1;
        if text.trim().is_empty() {
            continue;
        }
        if raw.is_empty() && header.is_none() {
            if let Ok(h) = serde_json::from_str::<JsonlHeader>(text) {
                header = Some(h.space);
                continue;
            }
        }
        let rec: JsonlRecord = serde_json::from_str(text)
            .map_err(|e| BenchError::Parse { line, msg: e.to_string() })?;
        let bits: Vec<u8> = rec.adjacency.iter().flatten().copied().collect();
        if rec.adjacency.len() != rec.num_nodes
            || rec.adjacency.iter().any(|row| row.len() != rec.num_nodes)
        {
            return Err(BenchError::Parse {
                line,
                msg: format!("adjacency is not {0}x{0}", rec.num_nodes),
            });
        }
        let arch = record_to_arch(line, rec.num_nodes, bits, rec.ops)?;
        let val = normalize_perf(line, rec.val, rec.units, "val")?;
        let test = normalize_perf(line, rec.test, rec.units, "test")?;
        raw.push(RawRecord { line, arch, val, test });
    }
    Ok((header, raw))
}

fn parse_csv(body: &str) -> Result<Vec<RawRecord>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    {
        let headers = rdr.headers().map_err(|e| BenchError::Parse { line: 1, msg: e.to_string() })?;
        let expected = ["id", "num_nodes", "adjacency_bits", "ops", "val", "test", "units"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(BenchError::Parse {
                line: 1,
                msg: format!("csv header {:?}, expected {:?}", headers, expected.join(",")),
            });
        }
    }
    let mut raw = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2; // header occupies line 1
        let row = row.map_err(|e| BenchError::Parse { line, msg: e.to_string() })?;
        if row.len() != 7 {
            return Err(BenchError::Parse { line, msg: format!("{} fields, expected 7", row.len()) });
        }
        let num_nodes: usize = row[1]
            .parse()
            .map_err(|_| BenchError::Parse { line, msg: format!("bad num_nodes {:?}", &row[1]) })?;
        let bits: Vec<u8> = row[2]
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(BenchError::Parse {
                    line,
                    msg: format!("bad adjacency bit {other:?}"),
                }),
            })
            .collect::<Result<_, _>>()?;
        let ops: Vec<String> = if row[3].is_empty() {
            Vec::new()
        } else {
            row[3].split('|').map(str::to_string).collect()
        };
        let units = match &row[6] {
            "fraction" => Units::Fraction,
            "percent" => Units::Percent,
            other => {
                return Err(BenchError::Parse { line, msg: format!("unknown units {other:?}") })
            }
        };
        let val_raw: f64 = row[4]
            .parse()
            .map_err(|_| BenchError::Parse { line, msg: format!("bad val {:?}", &row[4]) })?;
        let test_raw: f64 = row[5]
            .parse()
            .map_err(|_| BenchError::Parse { line, msg: format!("bad test {:?}", &row[5]) })?;
        let arch = record_to_arch(line, num_nodes, bits, ops)?;
        let val = normalize_perf(line, val_raw, units, "val")?;
        let test = normalize_perf(line, test_raw, units, "test")?;
        raw.push(RawRecord { line, arch, val, test });
    }
    Ok(raw)
}

fn infer_space(raw: &[RawRecord]) -> Result<SpaceSpec, BenchError> {
    if raw.is_empty() {
        return Err(BenchError::Parse { line: 1, msg: "empty table, cannot infer space".into() });
    }
    let max_nodes = raw.iter().map(|r| r.arch.num_nodes()).max().unwrap();
    let mut vocab: Vec<String> = Vec::new();
    for r in raw {
        for op in r.arch.ops() {
            if !vocab.iter().any(|v| v == op) {
                vocab.push(op.clone());
            }
        }
    }
    let first_bits: Vec<u8> = raw[0].arch.adjacency_bits().collect();
    let fixed = raw.iter().all(|r| {
        r.arch.num_nodes() == raw[0].arch.num_nodes()
            && r.arch.adjacency_bits().collect::<Vec<u8>>() == first_bits
    });
    let edge_rule = if fixed { EdgeRule::FixedGraphOpsOnly } else { EdgeRule::DenseDag };
    Ok(SpaceSpec::new(max_nodes, vocab, edge_rule))
}
