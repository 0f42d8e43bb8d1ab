//! Predictor-guided evolutionary search with a switchable loss schedule, a
//! random-search baseline, and the mutation-based test-set builder.
//!
//! One search run is strictly sequential: the query ledger has a single
//! writer. Multi-seed comparisons should run as independent jobs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{canonical_key, encode, mutate, neighbors, Architecture};
use crate::bench::{query, BenchError, BenchTable, QueryLedger};
use crate::losses::{pw_select, LossKind, LossSpec, PwSchedule};
use crate::metrics::{OracleScorer, Scorer};
use crate::nn::{fit, init_predictor, Backbone, NnError, TrainConfig};
use crate::seed::{derive_seed, rng_from_seed, tag_str, Rng};

use rand::seq::SliceRandom;
use rand::Rng as _;

pub const DEFAULT_INIT_SIZE: usize = 20;
pub const DEFAULT_QUERIES_PER_ITER: usize = 5;
pub const DEFAULT_PARENTS_PER_ITER: usize = 10;
pub const DEFAULT_CANDIDATES_PER_ITER: usize = 100;

/// Mutation retries per candidate slot before falling back to a uniform
/// draw from the unqueried remainder of the table.
const MUTATION_ATTEMPTS_PER_SLOT: usize = 16;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("table has {have} architectures, need at least {needed}")]
    TableTooSmall { needed: usize, have: usize },
    #[error("mutation neighborhood exhausted: requested {requested}, found {achieved}")]
    ExhaustedNeighborhood { requested: usize, achieved: usize },
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Either one loss for every iteration or a warm/main switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LossPlan {
    Schedule(PwSchedule),
    Fixed(LossSpec),
}

impl LossPlan {
    /// Active loss at a 1-indexed outer iteration.
    pub fn at(&self, outer_iter: usize) -> &LossSpec {
        match self {
            LossPlan::Fixed(spec) => spec,
            LossPlan::Schedule(schedule) => pw_select(schedule, outer_iter),
        }
    }
}

fn default_init_size() -> usize {
    DEFAULT_INIT_SIZE
}
fn default_queries_per_iter() -> usize {
    DEFAULT_QUERIES_PER_ITER
}
fn default_parents_per_iter() -> usize {
    DEFAULT_PARENTS_PER_ITER
}
fn default_candidates_per_iter() -> usize {
    DEFAULT_CANDIDATES_PER_ITER
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum number of distinct ground-truth queries.
    pub budget: usize,
    #[serde(default = "default_init_size")]
    pub init_size: usize,
    /// Evolutionary iterations; the budget usually stops the loop first.
    pub iters: usize,
    #[serde(default = "default_candidates_per_iter")]
    pub candidates_per_iter: usize,
    #[serde(default = "default_parents_per_iter")]
    pub parents_per_iter: usize,
    #[serde(default = "default_queries_per_iter")]
    pub queries_per_iter: usize,
    pub plan: LossPlan,
    #[serde(default)]
    pub backbone: Backbone,
    /// Hidden widths of the surrogate; `None` uses the backbone default.
    #[serde(default)]
    pub hidden_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Keep the surrogate weights across iterations instead of retraining
    /// from scratch (the default retrains a fresh predictor every iteration).
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SearchConfig {
    /// A config whose iteration count is sized so the budget, not `iters`,
    /// ends the run.
    pub fn for_budget(budget: usize, plan: LossPlan) -> Self {
        let init = DEFAULT_INIT_SIZE.min(budget);
        let iters = budget.saturating_sub(init).div_ceil(DEFAULT_QUERIES_PER_ITER);
        Self {
            budget,
            init_size: init,
            iters,
            candidates_per_iter: DEFAULT_CANDIDATES_PER_ITER,
            parents_per_iter: DEFAULT_PARENTS_PER_ITER,
            queries_per_iter: DEFAULT_QUERIES_PER_ITER,
            plan,
            backbone: Backbone::default(),
            hidden_dims: None,
            train: TrainConfig::default(),
            warm_start: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let positive = [
            ("budget", self.budget),
            ("init_size", self.init_size),
            ("candidates_per_iter", self.candidates_per_iter),
            ("parents_per_iter", self.parents_per_iter),
            ("queries_per_iter", self.queries_per_iter),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(SearchError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.init_size > self.budget {
            return Err(SearchError::InvalidConfig(format!(
                "init_size {} exceeds budget {}",
                self.init_size, self.budget
            )));
        }
        self.train
            .validate()
            .map_err(|e| SearchError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Best-so-far snapshot after one phase of a search (the initialization or
/// one evolutionary iteration).
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    /// 0 for the initialization phase, then 1-indexed iterations.
    pub iter: usize,
    /// Loss in effect; `None` for phases that train nothing.
    pub loss: Option<LossKind>,
    /// Keys queried during this phase, in query order.
    pub queried: Vec<String>,
    /// Cumulative queries after this phase.
    pub spent: usize,
    pub best_key: String,
    pub best_val: f64,
    pub best_test: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub seed: u64,
    pub budget: usize,
    pub points: Vec<TracePoint>,
    pub spent: usize,
    pub best_key: String,
    pub best_val: f64,
    pub best_test: f64,
}

/// Tracks the best-val architecture seen so far; ties keep the earlier one.
struct BestSoFar {
    key: String,
    val: f64,
    test: f64,
}

impl BestSoFar {
    fn update(&mut self, key: &str, val: f64, test: f64) {
        if val > self.val {
            self.key = key.to_string();
            self.val = val;
            self.test = test;
        }
    }
}

enum Surrogate<'t> {
    Predictor,
    /// Test stub scoring by stored validation performance: an upper bound on
    /// what a trained predictor could do, useful for calibrating the search
    /// loop itself.
    OracleVal(OracleScorer<'t>),
}

fn run_pwlnas(
    table: &BenchTable,
    cfg: &SearchConfig,
    surrogate: Surrogate,
) -> Result<SearchTrace, SearchError> {
    cfg.validate()?;
    if table.len() < cfg.init_size {
        return Err(SearchError::TableTooSmall { needed: cfg.init_size, have: table.len() });
    }
    let spec = table.spec();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[tag_str("pwlnas")]));
    let mut ledger = QueryLedger::new(cfg.budget);
    let mut points = Vec::new();

    // Queried architectures in query order, with their validation perf.
    let mut queried: Vec<(Architecture, f64)> = Vec::new();
    let mut best = BestSoFar { key: String::new(), val: f64::NEG_INFINITY, test: f64::NEG_INFINITY };
    let query_key = |key: &str,
                         ledger: &mut QueryLedger,
                         queried: &mut Vec<(Architecture, f64)>,
                         best: &mut BestSoFar|
     -> Result<bool, SearchError> {
        match query(table, key, ledger) {
            Ok(rec) => {
                queried.push((rec.arch.clone(), rec.val_perf));
                best.update(key, rec.val_perf, rec.test_perf);
                Ok(true)
            }
            Err(BenchError::BudgetExhausted { .. }) => Ok(false),
            Err(e) => Err(e.into()),
        }
    };

    // Initialization: uniform sample of the table without replacement.
    let mut all_keys: Vec<String> = table.keys().collect();
    all_keys.shuffle(&mut rng);
    let mut init_queried = Vec::with_capacity(cfg.init_size);
    for key in all_keys.iter().take(cfg.init_size) {
        if query_key(key, &mut ledger, &mut queried, &mut best)? {
            init_queried.push(key.clone());
        }
    }
    points.push(TracePoint {
        iter: 0,
        loss: None,
        queried: init_queried,
        spent: ledger.spent(),
        best_key: best.key.clone(),
        best_val: best.val,
        best_test: best.test,
    });

    let hidden = cfg
        .hidden_dims
        .clone()
        .unwrap_or_else(|| crate::nn::default_hidden_dims(cfg.backbone));
    let mut warm_predictor = None;

    for t in 1..=cfg.iters {
        if ledger.remaining() == 0 || queried.len() == table.len() {
            break;
        }
        let loss = cfg.plan.at(t).clone();

        // Surrogate for this iteration, trained on everything queried so far.
        let predictor = match &surrogate {
            Surrogate::OracleVal(_) => None,
            Surrogate::Predictor => {
                let mut p = match (cfg.warm_start, warm_predictor.take()) {
                    (true, Some(p)) => p,
                    _ => init_predictor(
                        cfg.backbone,
                        spec,
                        &hidden,
                        derive_seed(cfg.seed, &[tag_str("surrogate-init"), t as u64]),
                    )?,
                };
                let train_data: Vec<_> =
                    queried.iter().map(|(a, v)| (encode(a, spec), *v)).collect();
                let mut tcfg = cfg.train.clone();
                tcfg.seed = derive_seed(cfg.seed, &[tag_str("surrogate-train"), t as u64]);
                match fit(&mut p, &train_data, &loss, &tcfg) {
                    Ok(_) => {}
                    // A degenerate queried set (too few distinct targets for
                    // a rank loss) leaves the surrogate untrained for this
                    // iteration; the search must not die holding spent
                    // budget it can still use.
                    Err(NnError::NoUsableBatches) => {}
                    Err(e) => return Err(e.into()),
                }
                Some(p)
            }
        };

        // Parents: best queried by val perf, ties by query order.
        let mut order: Vec<usize> = (0..queried.len()).collect();
        order.sort_by(|&a, &b| {
            queried[b].1.partial_cmp(&queried[a].1).expect("finite val perf").then(a.cmp(&b))
        });
        let parents: Vec<&Architecture> =
            order.iter().take(cfg.parents_per_iter).map(|&i| &queried[i].0).collect();

        // Unqueried table keys, available for the uniform fallback.
        let mut available: Vec<String> =
            table.keys().filter(|k| !ledger.has_queried(k)).collect();
        let mut candidates: Vec<Architecture> = Vec::with_capacity(cfg.candidates_per_iter);
        let mut candidate_keys: std::collections::HashSet<String> = Default::default();
        for slot in 0..cfg.candidates_per_iter {
            if available.is_empty() {
                break;
            }
            let parent = parents[slot % parents.len()];
            let mut found = None;
            for _ in 0..MUTATION_ATTEMPTS_PER_SLOT {
                let Ok(mutant) = mutate(parent, spec, &mut rng) else { break };
                let key = canonical_key(&mutant);
                if table.contains(&key)
                    && !ledger.has_queried(&key)
                    && !candidate_keys.contains(&key)
                {
                    found = Some((mutant, key));
                    break;
                }
            }
            let (mutant, key) = match found {
                Some(hit) => hit,
                None => {
                    // Uniform fallback over the unqueried, unproposed table.
                    let idx = rng.gen_range(0..available.len());
                    let key = available[idx].clone();
                    let arch = table.get(&key).expect("available key is in table").arch.clone();
                    (arch, key)
                }
            };
            available.retain(|k| k != &key);
            candidate_keys.insert(key);
            candidates.push(mutant);
        }
        if candidates.is_empty() {
            break;
        }

        // Score candidates and query the top few.
        let mut scored: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
        for (i, cand) in candidates.iter().enumerate() {
            let enc = encode(cand, spec);
            let score = match &surrogate {
                Surrogate::Predictor => {
                    predictor.as_ref().expect("trained this iteration").score(cand, &enc)?
                }
                Surrogate::OracleVal(oracle) => oracle.score(cand, &enc)?,
            };
            scored.push((i, score));
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));

        let mut iter_queried = Vec::new();
        for &(idx, _) in scored.iter().take(cfg.queries_per_iter) {
            let key = canonical_key(&candidates[idx]);
            if !query_key(&key, &mut ledger, &mut queried, &mut best)? {
                break;
            }
            iter_queried.push(key);
        }
        points.push(TracePoint {
            iter: t,
            loss: Some(loss.kind),
            queried: iter_queried,
            spent: ledger.spent(),
            best_key: best.key.clone(),
            best_val: best.val,
            best_test: best.test,
        });
        if cfg.warm_start {
            warm_predictor = predictor;
        }
    }

    Ok(SearchTrace {
        seed: cfg.seed,
        budget: cfg.budget,
        points,
        spent: ledger.spent(),
        best_key: best.key,
        best_val: best.val,
        best_test: best.test,
    })
}

/// Predictor-guided evolutionary search: query a random initial set, then
/// per iteration select the scheduled loss, train the surrogate on all
/// queried pairs, mutate the best queried architectures round-robin into a
/// candidate pool (excluding already-queried keys, uniform fallback when a
/// slot cannot be filled by mutation), and query the top-scored candidates.
/// Budget exhaustion is normal termination. Deterministic in `cfg.seed`.
pub fn pwlnas_search(table: &BenchTable, cfg: &SearchConfig) -> Result<SearchTrace, SearchError> {
    run_pwlnas(table, cfg, Surrogate::Predictor)
}

/// Same loop with the surrogate replaced by a stored-validation oracle.
/// This calibrates the search machinery in isolation from predictor quality
/// and bounds what a perfect predictor could achieve.
pub fn pwlnas_search_oracle(
    table: &BenchTable,
    cfg: &SearchConfig,
) -> Result<SearchTrace, SearchError> {
    run_pwlnas(table, cfg, Surrogate::OracleVal(OracleScorer::val(table)))
}

/// Uniform queries without replacement, one trace point per query. A budget
/// of at least the table size queries everything.
pub fn random_search(table: &BenchTable, budget: usize, seed: u64) -> Result<SearchTrace, SearchError> {
    if budget == 0 {
        return Err(SearchError::InvalidConfig("budget must be positive".into()));
    }
    if table.is_empty() {
        return Err(SearchError::TableTooSmall { needed: 1, have: 0 });
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[tag_str("random-search")]));
    let mut ledger = QueryLedger::new(budget);
    let mut keys: Vec<String> = table.keys().collect();
    keys.shuffle(&mut rng);

    let mut best = BestSoFar { key: String::new(), val: f64::NEG_INFINITY, test: f64::NEG_INFINITY };
    let mut points = Vec::new();
    for (i, key) in keys.iter().take(budget.min(table.len())).enumerate() {
        let rec = query(table, key, &mut ledger)?;
        best.update(key, rec.val_perf, rec.test_perf);
        points.push(TracePoint {
            iter: i + 1,
            loss: None,
            queried: vec![key.clone()],
            spent: ledger.spent(),
            best_key: best.key.clone(),
            best_val: best.val,
            best_test: best.test,
        });
    }
    Ok(SearchTrace {
        seed,
        budget,
        points,
        spent: ledger.spent(),
        best_key: best.key,
        best_val: best.val,
        best_test: best.test,
    })
}

pub const DEFAULT_TESTSET_INIT_N: usize = 50;
pub const DEFAULT_TESTSET_SEEDS_TOP: usize = 10;
pub const DEFAULT_TESTSET_OUT_N: usize = 200;

/// Build the mutation-based evaluation set: sample `init_n` architectures,
/// keep the `seeds_top` best by validation perf, and collect `out_n`
/// distinct in-table single-edit mutants of the seeds, drawn round-robin.
/// Every returned key is at edit distance 1 from a seed and absent from the
/// seed set.
pub fn build_mutation_testset(
    table: &BenchTable,
    init_n: usize,
    seeds_top: usize,
    out_n: usize,
    rng: &mut Rng,
) -> Result<Vec<String>, SearchError> {
    if init_n == 0 || seeds_top == 0 || out_n == 0 {
        return Err(SearchError::InvalidConfig("init_n, seeds_top, out_n must be positive".into()));
    }
    if seeds_top > init_n {
        return Err(SearchError::InvalidConfig(format!(
            "seeds_top {seeds_top} exceeds init_n {init_n}"
        )));
    }
    if table.len() < init_n {
        return Err(SearchError::TableTooSmall { needed: init_n, have: table.len() });
    }
    let spec = table.spec();

    let mut keys: Vec<String> = table.keys().collect();
    keys.shuffle(rng);
    let mut init: Vec<(&str, f64)> = keys
        .iter()
        .take(init_n)
        .map(|k| (k.as_str(), table.get(k).expect("sampled from table").val_perf))
        .collect();
    // Seeds: best of the initial sample, ties keep sample order (stable sort).
    init.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite val perf"));
    let seed_keys: Vec<String> = init.iter().take(seeds_top).map(|(k, _)| k.to_string()).collect();
    let seed_set: std::collections::HashSet<&str> =
        seed_keys.iter().map(|s| s.as_str()).collect();

    // Per-seed pools of usable mutants, enumerated then shuffled so the
    // round-robin draw stays random but provably terminates.
    let mut pools: Vec<Vec<String>> = seed_keys
        .iter()
        .map(|k| {
            let arch = &table.get(k).expect("seed from table").arch;
            let mut pool: Vec<String> = neighbors(arch, spec)
                .iter()
                .map(canonical_key)
                .filter(|nk| table.contains(nk) && !seed_set.contains(nk.as_str()))
                .collect();
            pool.shuffle(rng);
            pool
        })
        .collect();

    let mut out = Vec::with_capacity(out_n);
    let mut taken: std::collections::HashSet<String> = Default::default();
    let mut progressed = true;
    while out.len() < out_n && progressed {
        progressed = false;
        for pool in &mut pools {
            while let Some(key) = pool.pop() {
                if taken.insert(key.clone()) {
                    out.push(key);
                    progressed = true;
                    break;
                }
            }
            if out.len() == out_n {
                break;
            }
        }
    }
    if out.len() < out_n {
        return Err(SearchError::ExhaustedNeighborhood { requested: out_n, achieved: out.len() });
    }
    Ok(out)
}

/// Named warm/main loss combinations for the shipped benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchPreset {
    Nb201Like,
    Nb101Like,
    TransnasJigsawLike,
    TransnasOtherLike,
}

pub const ALL_PRESETS: [SearchPreset; 4] = [
    SearchPreset::Nb201Like,
    SearchPreset::Nb101Like,
    SearchPreset::TransnasJigsawLike,
    SearchPreset::TransnasOtherLike,
];

impl SearchPreset {
    /// Warm and main loss kinds of the preset.
    pub fn loss_kinds(self) -> (LossKind, LossKind) {
        match self {
            SearchPreset::Nb201Like => (LossKind::HingeRank, LossKind::Mape),
            SearchPreset::Nb101Like => (LossKind::Listmle, LossKind::Warp),
            SearchPreset::TransnasJigsawLike => (LossKind::Mse, LossKind::ExpWeighted),
            SearchPreset::TransnasOtherLike => (LossKind::HingeRank, LossKind::Warp),
        }
    }

    pub fn schedule(self, warm_iters: usize) -> PwSchedule {
        let (warm, main) = self.loss_kinds();
        PwSchedule {
            warm_loss: LossSpec::new(warm),
            main_loss: LossSpec::new(main),
            warm_iters,
        }
    }
}

impl std::fmt::Display for SearchPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SearchPreset::Nb201Like => "nb201-like",
            SearchPreset::Nb101Like => "nb101-like",
            SearchPreset::TransnasJigsawLike => "transnas-jigsaw-like",
            SearchPreset::TransnasOtherLike => "transnas-other-like",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SearchPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_PRESETS
            .iter()
            .find(|p| p.to_string() == s)
            .copied()
            .ok_or_else(|| {
                let known: Vec<String> = ALL_PRESETS.iter().map(|p| p.to_string()).collect();
                format!("unknown preset {s:?}, expected one of: {}", known.join(", "))
            })
    }
}

fn csv_escape(field: &str) -> std::borrow::Cow<'_, str> {
    if field.contains([',', '"', '\n']) {
        std::borrow::Cow::Owned(format!("\"{}\"", field.replace('"', "\"\"")))
    } else {
        std::borrow::Cow::Borrowed(field)
    }
}

/// Tidy CSV of one or more labeled traces: one row per trace point plus a
/// summary row (`iter=final`) per trace.
pub fn traces_to_csv(traces: &[(&str, &SearchTrace)]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("strategy,iter,loss,spent,best_val,best_test,seed,best_key\n");
    for (label, trace) in traces {
        for p in &trace.points {
            let loss = p.loss.map(|k| k.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_escape(label),
                p.iter,
                loss,
                p.spent,
                p.best_val,
                p.best_test,
                trace.seed,
                csv_escape(&p.best_key),
            )
            .unwrap();
        }
        writeln!(
            out,
            "{},final,,{},{},{},{},{}",
            csv_escape(label),
            trace.spent,
            trace.best_val,
            trace.best_test,
            trace.seed,
            csv_escape(&trace.best_key),
        )
        .unwrap();
    }
    out
}
