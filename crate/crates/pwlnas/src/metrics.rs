//! Predictor assessment: rank correlation, top-K retrieval metrics, and the
//! batch sweep protocol (portions x losses x repetitions).
//!
//! Rank convention everywhere: rank 1 is the best (highest) value and ties
//! are broken by ascending index. Kendall's tau is computed on the raw score
//! and performance values (tau-a: tied pairs count as neither concordant nor
//! discordant), by both a quadratic reference and a merge-sort fast path
//! that must agree exactly.

use ndarray::Array1;
use rayon::prelude::*;
use thiserror::Error;

use crate::arch::{canonical_key, encode, Architecture, EncodedArch};
use crate::bench::{split, BenchError, BenchTable};
use crate::losses::{ranks_desc, LossKind, LossSpec};
use crate::nn::{fit, forward, init_predictor, Backbone, NnError, Predictor, TrainConfig};
use crate::seed::{derive_seed, tag_f64, tag_str};

pub const DEFAULT_TS: [f64; 3] = [0.5, 1.0, 5.0];
pub const DEFAULT_KS: [usize; 1] = [10];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 evaluation points, got {got}")]
    TooFew { got: usize },
    #[error("precision portion {t} outside (0, 100]")]
    InvalidT { t: f64 },
    #[error("top-K {k} outside [1, {n}]")]
    InvalidK { k: usize, n: usize },
    #[error("architecture {key:?} not in the table")]
    UnknownKey { key: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// Anything that can score an architecture. The predictor scores from the
/// encoding; table-backed oracles score by lookup and serve as stubs that
/// bound what a perfect predictor could achieve.
pub trait Scorer {
    fn score(&self, arch: &Architecture, enc: &EncodedArch) -> Result<f64, NnError>;
}

impl Scorer for Predictor {
    fn score(&self, _arch: &Architecture, enc: &EncodedArch) -> Result<f64, NnError> {
        Ok(forward(self, std::slice::from_ref(enc))?[0])
    }
}

/// Stub scorer that returns the stored performance of the architecture.
pub struct OracleScorer<'a> {
    table: &'a BenchTable,
    use_test: bool,
}

impl<'a> OracleScorer<'a> {
    /// Score by stored validation performance (search-time oracle).
    pub fn val(table: &'a BenchTable) -> Self {
        Self { table, use_test: false }
    }

    /// Score by stored test performance (evaluation-time oracle).
    pub fn test(table: &'a BenchTable) -> Self {
        Self { table, use_test: true }
    }
}

impl Scorer for OracleScorer<'_> {
    fn score(&self, arch: &Architecture, _enc: &EncodedArch) -> Result<f64, NnError> {
        let key = canonical_key(arch);
        let rec = self
            .table
            .get(&key)
            .ok_or_else(|| NnError::Shape(format!("architecture {key:?} not in oracle table")))?;
        Ok(if self.use_test { rec.test_perf } else { rec.val_perf })
    }
}

/// Scores and ground truth over an evaluation set, with both rankings.
#[derive(Debug, Clone)]
pub struct RankedEval {
    pub pred_scores: Vec<f64>,
    pub gt_perfs: Vec<f64>,
    /// Rank of each prediction, 1 = highest score.
    pub pred_ranks: Vec<usize>,
    /// Rank of each ground truth, 1 = highest performance.
    pub actual_ranks: Vec<usize>,
}

impl RankedEval {
    pub fn new(pred_scores: Vec<f64>, gt_perfs: Vec<f64>) -> Self {
        assert_eq!(pred_scores.len(), gt_perfs.len(), "score/perf length mismatch");
        let pred_ranks = ranks_desc(Array1::from(pred_scores.clone()).view());
        let actual_ranks = ranks_desc(Array1::from(gt_perfs.clone()).view());
        Self { pred_scores, gt_perfs, pred_ranks, actual_ranks }
    }

    pub fn len(&self) -> usize {
        self.pred_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred_scores.is_empty()
    }
}

/// Quadratic reference for Kendall's tau-a: concordant minus discordant over
/// all pairs, ties in either vector counting as neither.
pub fn kendall_tau_brute(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    let mut concordant: i64 = 0;
    let mut discordant: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let dp = pred[i] - pred[j];
            let dg = gt[i] - gt[j];
            let prod = dp * dg;
            if prod > 0.0 {
                concordant += 1;
            } else if prod < 0.0 {
                discordant += 1;
            }
        }
    }
    2.0 * (concordant - discordant) as f64 / (n * (n - 1)) as f64
}

fn count_tied_pairs<K: PartialEq>(sorted: &[K]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

fn merge_count_inversions(values: &mut [f64]) -> i64 {
    // Bottom-up merge sort counting strict inversions (left > right).
    let n = values.len();
    let mut buf = vec![0.0; n];
    let mut inversions = 0i64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo + width < n {
            let mid = lo + width;
            let hi = (mid + width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if values[i] <= values[j] {
                    buf[k] = values[i];
                    i += 1;
                } else {
                    inversions += (mid - i) as i64;
                    buf[k] = values[j];
                    j += 1;
                }
                k += 1;
            }
            while i < mid {
                buf[k] = values[i];
                i += 1;
                k += 1;
            }
            while j < hi {
                buf[k] = values[j];
                j += 1;
                k += 1;
            }
            values[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo = hi;
        }
        width *= 2;
    }
    inversions
}

/// Merge-sort Kendall tau-a in O(n log n); agrees exactly with the brute
/// force because both reduce to the same integer pair counts.
pub fn kendall_tau_fast(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Sort by pred ascending, ties by gt ascending: tied-pred groups are
    // then sorted in gt and contribute no inversions.
    order.sort_by(|&a, &b| {
        pred[a]
            .partial_cmp(&pred[b])
            .expect("finite scores")
            .then(gt[a].partial_cmp(&gt[b]).expect("finite perfs"))
    });
    let sorted_pairs: Vec<(f64, f64)> = order.iter().map(|&i| (pred[i], gt[i])).collect();

    let tie_pred = count_tied_pairs(&sorted_pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let tie_both = count_tied_pairs(&sorted_pairs);
    let mut gt_sorted: Vec<f64> = gt.to_vec();
    gt_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite perfs"));
    let tie_gt = count_tied_pairs(&gt_sorted);

    let mut gt_in_pred_order: Vec<f64> = sorted_pairs.iter().map(|p| p.1).collect();
    let discordant = merge_count_inversions(&mut gt_in_pred_order);

    let total = (n as i64) * (n as i64 - 1) / 2;
    let concordant = total - tie_pred - tie_gt + tie_both - discordant;
    2.0 * (concordant - discordant) as f64 / (n * (n - 1)) as f64
}

/// Kendall's tau-a of an evaluation (fast path).
pub fn kendall_tau(eval: &RankedEval) -> Result<f64, MetricsError> {
    if eval.len() < 2 {
        return Err(MetricsError::TooFew { got: eval.len() });
    }
    Ok(kendall_tau_fast(&eval.pred_scores, &eval.gt_perfs))
}

/// Portion of the actual top-T% among the predicted top-T%, as a percent.
/// The cutoff size is `max(1, floor(T*N/100))`.
pub fn precision_at_t(eval: &RankedEval, t: f64) -> Result<f64, MetricsError> {
    if !(t > 0.0 && t <= 100.0) {
        return Err(MetricsError::InvalidT { t });
    }
    let n = eval.len();
    if n < 1 {
        return Err(MetricsError::TooFew { got: n });
    }
    let m = ((t * n as f64 / 100.0).floor() as usize).max(1);
    let hits = (0..n).filter(|&i| eval.actual_ranks[i] <= m && eval.pred_ranks[i] <= m).count();
    Ok(100.0 * hits as f64 / m as f64)
}

/// Best actual rank among the top-K predicted architectures (lower is
/// better; 1 means the true best was retrieved).
pub fn n_at_k(eval: &RankedEval, k: usize) -> Result<usize, MetricsError> {
    let n = eval.len();
    if !(1..=n).contains(&k) {
        return Err(MetricsError::InvalidK { k, n });
    }
    Ok((0..n)
        .filter(|&i| eval.pred_ranks[i] <= k)
        .map(|i| eval.actual_ranks[i])
        .min()
        .expect("top-K set is non-empty"))
}

/// All requested metrics for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub n_eval: usize,
    pub tau: f64,
    /// `(T, precision percent)` in request order.
    pub precision_at: Vec<(f64, f64)>,
    /// `(K, best actual rank)` in request order.
    pub n_at: Vec<(usize, usize)>,
}

pub fn report_from_eval(
    eval: &RankedEval,
    ts: &[f64],
    ks: &[usize],
) -> Result<MetricReport, MetricsError> {
    let tau = kendall_tau(eval)?;
    let precision_at =
        ts.iter().map(|&t| precision_at_t(eval, t).map(|p| (t, p))).collect::<Result<_, _>>()?;
    let n_at = ks.iter().map(|&k| n_at_k(eval, k).map(|v| (k, v))).collect::<Result<_, _>>()?;
    Ok(MetricReport { n_eval: eval.len(), tau, precision_at, n_at })
}

/// Score the evaluation set with the scorer and compute all metrics against
/// TEST performance. `eval_keys = None` evaluates the whole table.
pub fn evaluate<S: Scorer>(
    scorer: &S,
    table: &BenchTable,
    eval_keys: Option<&[String]>,
    ts: &[f64],
    ks: &[usize],
) -> Result<MetricReport, MetricsError> {
    let mut scores = Vec::new();
    let mut gts = Vec::new();
    let mut score_one = |arch: &Architecture, test_perf: f64| -> Result<(), MetricsError> {
        let enc = encode(arch, table.spec());
        scores.push(scorer.score(arch, &enc)?);
        gts.push(test_perf);
        Ok(())
    };
    match eval_keys {
        None => {
            for rec in table.records() {
                score_one(&rec.arch, rec.test_perf)?;
            }
        }
        Some(keys) => {
            for key in keys {
                let rec = table
                    .get(key)
                    .ok_or_else(|| MetricsError::UnknownKey { key: key.clone() })?;
                score_one(&rec.arch, rec.test_perf)?;
            }
        }
    }
    report_from_eval(&RankedEval::new(scores, gts), ts, ks)
}

/// Configuration of a portion/loss sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Label written to the `space` column of the CSV output.
    pub space_label: String,
    pub backbone: Backbone,
    /// Hidden widths; `None` uses the backbone default.
    pub hidden_dims: Option<Vec<usize>>,
    /// Base training config; `None` derives per-loss defaults (the listwise
    /// loss gets its larger learning rate).
    pub train: Option<TrainConfig>,
    pub ts: Vec<f64>,
    pub ks: Vec<usize>,
    pub base_seed: u64,
}

impl SweepConfig {
    pub fn new(space_label: impl Into<String>, backbone: Backbone, base_seed: u64) -> Self {
        Self {
            space_label: space_label.into(),
            backbone,
            hidden_dims: None,
            train: None,
            ts: DEFAULT_TS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            base_seed,
        }
    }
}

/// One completed sweep cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub portion: f64,
    pub loss: LossKind,
    /// 1-indexed repetition.
    pub run: usize,
    pub seed: u64,
    pub report: MetricReport,
}

/// One failed sweep cell; failures never abort the sweep.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub portion: f64,
    pub loss: LossKind,
    pub run: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub space_label: String,
    pub ts: Vec<f64>,
    pub ks: Vec<usize>,
    pub base_seed: u64,
    pub repeats: usize,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

/// Per-run seed: a stable hash of the base seed and the cell coordinates.
pub fn sweep_run_seed(base_seed: u64, portion: f64, loss: LossKind, run: usize) -> u64 {
    derive_seed(
        base_seed,
        &[tag_str("sweep"), tag_f64(portion), tag_str(&loss.to_string()), run as u64],
    )
}

/// Train a fresh predictor on the seeded portion split of the table: the
/// one-cell unit shared by the sweep and the mutation-eval protocol.
/// `train = None` uses the per-loss default training config.
pub fn fit_on_portion(
    table: &BenchTable,
    portion: f64,
    loss: &LossSpec,
    backbone: Backbone,
    hidden_dims: Option<&[usize]>,
    train: Option<&TrainConfig>,
    seed: u64,
) -> Result<Predictor, MetricsError> {
    let (train_keys, _) = split(table, portion, seed)?;
    let train_data: Vec<(EncodedArch, f64)> = train_keys
        .iter()
        .map(|key| {
            let rec = table.get(key).expect("key from split");
            (encode(&rec.arch, table.spec()), rec.val_perf)
        })
        .collect();
    let hidden = match hidden_dims {
        Some(h) => h.to_vec(),
        None => crate::nn::default_hidden_dims(backbone),
    };
    let mut predictor =
        init_predictor(backbone, table.spec(), &hidden, derive_seed(seed, &[tag_str("init")]))?;
    let mut tcfg = train.cloned().unwrap_or_else(|| TrainConfig::for_loss(loss.kind));
    tcfg.seed = derive_seed(seed, &[tag_str("train")]);
    fit(&mut predictor, &train_data, loss, &tcfg)?;
    Ok(predictor)
}

fn run_cell(
    table: &BenchTable,
    encodings: &[EncodedArch],
    portion: f64,
    loss: &LossSpec,
    run: usize,
    cfg: &SweepConfig,
) -> Result<SweepRow, String> {
    let seed = sweep_run_seed(cfg.base_seed, portion, loss.kind, run);
    let predictor = fit_on_portion(
        table,
        portion,
        loss,
        cfg.backbone,
        cfg.hidden_dims.as_deref(),
        cfg.train.as_ref(),
        seed,
    )
    .map_err(|e| e.to_string())?;

    let mut scores = Vec::with_capacity(table.len());
    let mut gts = Vec::with_capacity(table.len());
    for (rec, enc) in table.records().iter().zip(encodings) {
        scores.push(predictor.score(&rec.arch, enc).map_err(|e| e.to_string())?);
        gts.push(rec.test_perf);
    }
    let report =
        report_from_eval(&RankedEval::new(scores, gts), &cfg.ts, &cfg.ks).map_err(|e| e.to_string())?;
    Ok(SweepRow { portion, loss: loss.kind, run, seed, report })
}

/// Run the full protocol: for every (portion, loss, repetition), split the
/// table, train a fresh predictor on validation performance, and evaluate on
/// the whole table against test performance. Cells run in parallel and are
/// reported in (portion, loss, run) order; failed cells are recorded, not
/// fatal.
pub fn run_sweep(
    table: &BenchTable,
    portions: &[f64],
    repeats: usize,
    losses: &[LossSpec],
    cfg: &SweepConfig,
) -> SweepResult {
    assert!(repeats >= 1, "repeats must be at least 1");
    let encodings: Vec<EncodedArch> =
        table.records().iter().map(|r| encode(&r.arch, table.spec())).collect();
    let cells: Vec<(f64, &LossSpec, usize)> = portions
        .iter()
        .flat_map(|&p| {
            losses.iter().flat_map(move |l| (1..=repeats).map(move |run| (p, l, run)))
        })
        .collect();
    let outcomes: Vec<Result<SweepRow, SweepFailure>> = cells
        .par_iter()
        .map(|&(portion, loss, run)| {
            run_cell(table, &encodings, portion, loss, run, cfg).map_err(|error| {
                SweepFailure { portion, loss: loss.kind, run, error }
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    SweepResult {
        space_label: cfg.space_label.clone(),
        ts: cfg.ts.clone(),
        ks: cfg.ks.clone(),
        base_seed: cfg.base_seed,
        repeats,
        rows,
        failures,
    }
}

/// Aggregate statistics of one (portion, loss) cell group.
#[derive(Debug, Clone, PartialEq)]
pub struct AggRow {
    pub portion: f64,
    pub loss: LossKind,
    pub runs: usize,
    pub mean: MetricVector,
    pub std: MetricVector,
}

/// Metric values in the column order of the CSV (tau, precisions, n_at).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector(pub Vec<f64>);

fn metric_vector(report: &MetricReport) -> MetricVector {
    let mut v = vec![report.tau];
    v.extend(report.precision_at.iter().map(|&(_, p)| p));
    v.extend(report.n_at.iter().map(|&(_, n)| n as f64));
    MetricVector(v)
}

/// Mean and sample standard deviation (0 for a single run) per (portion,
/// loss) group, ordered as the rows are.
pub fn aggregate(result: &SweepResult) -> Vec<AggRow> {
    let mut groups: Vec<((u64, LossKind), Vec<&SweepRow>)> = Vec::new();
    for row in &result.rows {
        let key = (row.portion.to_bits(), row.loss);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
        .into_iter()
        .map(|((portion_bits, loss), rows)| {
            let n = rows.len();
            let width = metric_vector(&rows[0].report).0.len();
            let mut mean = vec![0.0; width];
            for r in &rows {
                for (m, v) in mean.iter_mut().zip(metric_vector(&r.report).0) {
                    *m += v / n as f64;
                }
            }
            let mut std = vec![0.0; width];
            if n > 1 {
                for r in &rows {
                    for ((s, v), m) in std.iter_mut().zip(metric_vector(&r.report).0).zip(&mean) {
                        *s += (v - m) * (v - m) / (n - 1) as f64;
                    }
                }
                for s in &mut std {
                    *s = s.sqrt();
                }
            }
            AggRow {
                portion: f64::from_bits(portion_bits),
                loss,
                runs: n,
                mean: MetricVector(mean),
                std: MetricVector(std),
            }
        })
        .collect()
}

/// Tidy CSV: one raw row per run plus mean/std rows flagged `agg=1`.
pub fn sweep_to_csv(result: &SweepResult) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("space,portion,loss,run,tau");
    for t in &result.ts {
        write!(out, ",precision_{t}").unwrap();
    }
    for k in &result.ks {
        write!(out, ",n_at_{k}").unwrap();
    }
    out.push_str(",seed,agg\n");

    for row in &result.rows {
        write!(out, "{},{},{},{},{}", result.space_label, row.portion, row.loss, row.run, row.report.tau)
            .unwrap();
        for &(_, p) in &row.report.precision_at {
            write!(out, ",{p}").unwrap();
        }
        for &(_, n) in &row.report.n_at {
            write!(out, ",{n}").unwrap();
        }
        writeln!(out, ",{},0", row.seed).unwrap();
    }
    for agg in aggregate(result) {
        for (stat, vals) in [("mean", &agg.mean), ("std", &agg.std)] {
            write!(out, "{},{},{},{}", result.space_label, agg.portion, agg.loss, stat).unwrap();
            for v in &vals.0 {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{},1", result.base_seed).unwrap();
        }
    }
    out
}
