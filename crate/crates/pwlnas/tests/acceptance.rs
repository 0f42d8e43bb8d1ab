//! Acceptance gate for the toolkit: nine end-to-end checks, one test each.
//!
//! Every check writes a single `acceptance N <name>: PASS/FAIL (...)` line
//! straight to stderr (bypassing libtest capture) so a full run doubles as a
//! human-readable checklist, then asserts. Empirical floors were pinned by
//! `cargo run --release --example pilot_calibration`; rerun it and update
//! the constants below if the generator, trainer, or search loop changes.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{arr1, Array1};
use rand::seq::SliceRandom as _;
use rand::Rng as _;

use pwlnas::arch::{edit_distance, EdgeRule, SpaceSpec};
use pwlnas::bench::{synth_generate, BenchTable, SynthSpec};
use pwlnas::cli::run_gradcheck;
use pwlnas::losses::{
    evaluate_loss, pw_select, LossKind, LossSpec, PwSchedule, WeightType, ALL_LOSS_KINDS,
};
use pwlnas::metrics::{
    evaluate, fit_on_portion, kendall_tau_brute, kendall_tau_fast, n_at_k, precision_at_t,
    sweep_run_seed, RankedEval,
};
use pwlnas::nn::{Backbone, TrainConfig};
use pwlnas::search::{
    build_mutation_testset, pwlnas_search, pwlnas_search_oracle, random_search, LossPlan,
    SearchConfig,
};
use pwlnas::seed::{derive_seed, rng_from_seed, tag_str, Rng};

/// Gradient audit threshold (relative error, central differences).
const GRAD_TOL: f64 = 1e-4;
/// Invariance tolerance for rank-based losses under order-preserving maps.
const RANK_INV_TOL: f64 = 1e-9;
/// Mean full-table tau floor for GCN + hinge rank on a 5% split of the
/// reference table. Pilot: mean 0.7750, std 0.0211 over 10 runs; floor is
/// mean minus three standard deviations rounded down to 0.05.
const TAU_FLOOR: f64 = 0.70;
/// Paired-seed wins required for guided search over random at budget 100.
/// Pilot: 95 of 100.
const DOMINANCE_FLOOR: usize = 90;

fn verdict(idx: usize, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {idx} {name}: {status} ({detail})\n");
    // Direct handle write so the line is visible without --nocapture.
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "acceptance {idx} {name}: {detail}");
}

/// The reference benchmark used by the learnability and search checks.
fn reference_table() -> BenchTable {
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    synth_generate(&SynthSpec::new(space, 1000, 7, 0.3)).expect("space holds 1000 archs")
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let cells = run_gradcheck(
        &ALL_LOSS_KINDS,
        &[Backbone::Mlp, Backbone::Gcn],
        20,
        1e-5,
        0.0,
        0,
    )
    .expect("audit runs");
    let elapsed = start.elapsed();

    let worst = cells.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let checked: usize = cells.iter().map(|c| c.checked).sum();
    let all_pass = cells.len() == 16 && cells.iter().all(|c| c.pass && c.max_rel_error <= GRAD_TOL);
    let in_time = elapsed < Duration::from_secs(120);
    verdict(
        1,
        "gradient suite",
        all_pass && in_time,
        &format!(
            "16 cells x 20 restarts, {checked} params checked, max rel err {worst:.3e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// Rank of element `i` when sorting `by` descending, ties broken by index.
/// Deliberately quadratic: the scan the fast paths are checked against.
fn scan_rank(by: &[f64], i: usize) -> usize {
    1 + (0..by.len()).filter(|&j| by[j] > by[i] || (by[j] == by[i] && j < i)).count()
}

#[test]
fn criterion_2_metric_oracles() {
    let mut rng = rng_from_seed(101);

    // Merge-sort tau must equal the quadratic reference bit for bit, ties
    // included. Coarse grids force plenty of ties in both vectors.
    for case in 0..1000 {
        let n = rng.gen_range(2..=60);
        let grid = if case % 2 == 0 { 8.0 } else { 1000.0 };
        let pred: Vec<f64> =
            (0..n).map(|_| (rng.gen_range(0..grid as i64) as f64) / grid).collect();
        let gt: Vec<f64> =
            (0..n).map(|_| (rng.gen_range(0..grid as i64) as f64) / grid).collect();
        let fast = kendall_tau_fast(&pred, &gt);
        let brute = kendall_tau_brute(&pred, &gt);
        assert_eq!(fast.to_bits(), brute.to_bits(), "case {case}: {fast} vs {brute}");
    }

    let ident: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let rev: Vec<f64> = ident.iter().rev().copied().collect();
    assert_eq!(kendall_tau_fast(&ident, &ident), 1.0);
    assert_eq!(kendall_tau_fast(&rev, &ident), -1.0);

    // Precision@T and N@K against exhaustive scans on 100 random evals,
    // and N@K monotonicity on each.
    let ts = [1.0, 5.0, 10.0, 25.0, 50.0];
    for case in 0..100 {
        let n = rng.gen_range(10..=80);
        let pred: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..25) as f64) / 25.0).collect();
        let gt: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..25) as f64) / 25.0).collect();
        let eval = RankedEval::new(pred.clone(), gt.clone());

        for t in ts {
            let m = ((t * n as f64 / 100.0).floor() as usize).max(1);
            let hits = (0..n)
                .filter(|&i| scan_rank(&pred, i) <= m && scan_rank(&gt, i) <= m)
                .count();
            let expect = 100.0 * hits as f64 / m as f64;
            assert_eq!(precision_at_t(&eval, t).unwrap(), expect, "case {case} t {t}");
        }

        let mut prev = usize::MAX;
        for k in 1..=n {
            let scan = (0..n)
                .filter(|&i| scan_rank(&pred, i) <= k)
                .map(|i| scan_rank(&gt, i))
                .min()
                .unwrap();
            let got = n_at_k(&eval, k).unwrap();
            assert_eq!(got, scan, "case {case} k {k}");
            assert!(got <= prev, "case {case}: N@{k} = {got} rose above N@{} = {prev}", k - 1);
            prev = got;
        }
    }

    verdict(
        2,
        "metric oracles",
        true,
        "tau fast == brute on 1000 tied vectors, extremes exact, P@T and N@K match scans on 100 evals, N@K monotone",
    );
}

#[test]
fn criterion_3_rank_invariance() {
    // Order-based loss set: the pairwise and listwise losses. Value-weighted
    // WARP variants read target magnitudes, so the target-transform half
    // uses order-based weights only.
    let shift_specs = [
        LossSpec::new(LossKind::HingeRank),
        LossSpec::new(LossKind::LogisticRank),
        LossSpec::new(LossKind::Listmle),
        LossSpec::new(LossKind::Warp),
        LossSpec::new(LossKind::Warp).with_weight_type(WeightType::Ranking),
        LossSpec::new(LossKind::Warp).with_weight_type(WeightType::None),
    ];
    let transform_specs = [
        LossSpec::new(LossKind::HingeRank),
        LossSpec::new(LossKind::LogisticRank),
        LossSpec::new(LossKind::Listmle),
        LossSpec::new(LossKind::Warp).with_weight_type(WeightType::Ranking),
        LossSpec::new(LossKind::Warp).with_weight_type(WeightType::None),
    ];

    let mut rng = rng_from_seed(33);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.gen_range(3..=40);
        let scores = Array1::from_iter((0..n).map(|_| rng.gen_range(-0.5..0.5)));
        let targets = Array1::from_iter((0..n).map(|_| rng.gen_range(0.0..1.0)));
        let shift = rng.gen_range(-3.0..3.0);
        let shifted = &scores + shift;
        // Strictly increasing, deliberately nonlinear.
        let transformed = targets.mapv(|y: f64| 0.05 + 0.4 * y + 0.5 * y.powi(3));

        for spec in &shift_specs {
            let a = evaluate_loss(spec, scores.view(), targets.view(), &mut rng_from_seed(9))
                .unwrap()
                .value;
            let b = evaluate_loss(spec, shifted.view(), targets.view(), &mut rng_from_seed(9))
                .unwrap()
                .value;
            worst = worst.max((a - b).abs());
            assert!(
                (a - b).abs() <= RANK_INV_TOL,
                "case {case} {:?}: shift broke invariance ({a} vs {b})",
                spec.kind
            );
        }
        for spec in &transform_specs {
            let a = evaluate_loss(spec, scores.view(), targets.view(), &mut rng_from_seed(9))
                .unwrap()
                .value;
            let b = evaluate_loss(spec, scores.view(), transformed.view(), &mut rng_from_seed(9))
                .unwrap()
                .value;
            worst = worst.max((a - b).abs());
            assert!(
                (a - b).abs() <= RANK_INV_TOL,
                "case {case} {:?}: target transform broke invariance ({a} vs {b})",
                spec.kind
            );
        }

        // Metrics: strictly increasing score transforms change nothing,
        // exactly.
        let pred: Vec<f64> = scores.to_vec();
        let gt: Vec<f64> = targets.to_vec();
        let mapped: Vec<f64> = pred.iter().map(|&s| 1.5 + 2.0 * s + 0.3 * s.powi(3)).collect();
        let base = RankedEval::new(pred, gt.clone());
        let moved = RankedEval::new(mapped, gt);
        for t in [5.0, 25.0, 60.0] {
            assert_eq!(
                precision_at_t(&base, t).unwrap().to_bits(),
                precision_at_t(&moved, t).unwrap().to_bits(),
                "case {case} t {t}"
            );
        }
        for k in [1, 2, n / 2 + 1, n] {
            assert_eq!(n_at_k(&base, k).unwrap(), n_at_k(&moved, k).unwrap(), "case {case} k {k}");
        }
    }

    verdict(
        3,
        "rank invariance",
        true,
        &format!("50 cases, worst loss deviation {worst:.2e} (tol {RANK_INV_TOL:.0e}), metric checks exact"),
    );
}

#[test]
fn criterion_4_closed_forms() {
    let ln2 = std::f64::consts::LN_2;
    let mut details = Vec::new();

    // Logistic pair at zero score gap: softplus(0) = ln 2.
    let out = evaluate_loss(
        &LossSpec::new(LossKind::LogisticRank),
        arr1(&[0.4, 0.4]).view(),
        arr1(&[0.9, 0.2]).view(),
        &mut rng_from_seed(1),
    )
    .unwrap();
    let logistic_err = (out.value - ln2).abs();
    assert!(logistic_err <= 1e-12, "logistic zero gap: {} vs ln 2", out.value);
    details.push(format!("logistic |err| {logistic_err:.1e}"));

    // ListMLE on two equal scores: -ln(1/2) = ln 2.
    let out = evaluate_loss(
        &LossSpec::new(LossKind::Listmle),
        arr1(&[0.1, 0.1]).view(),
        arr1(&[0.8, 0.3]).view(),
        &mut rng_from_seed(1),
    )
    .unwrap();
    let listmle_err = (out.value - ln2).abs();
    assert!(listmle_err <= 1e-12, "listmle equal pair: {} vs ln 2", out.value);
    details.push(format!("listmle |err| {listmle_err:.1e}"));

    // WARP, one anchor over ten losers, all scores equal: the first sampled
    // candidate violates the margin, so the implied rank is (11-1)/1 = 10
    // and the anchor's weight is the harmonic number H_10. The batch value
    // is H_10 * margin / n, which recovers the weight exactly.
    let mut warp_spec = LossSpec::new(LossKind::Warp).with_weight_type(WeightType::None);
    warp_spec.margin = 0.1;
    let mut targets = vec![0.0; 11];
    targets[0] = 1.0;
    let out = evaluate_loss(
        &warp_spec,
        Array1::zeros(11).view(),
        Array1::from(targets).view(),
        &mut rng_from_seed(2),
    )
    .unwrap();
    let phi = out.value * 11.0 / 0.1;
    let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
    let warp_err = (phi - h10).abs();
    assert!((h10 - 2.928_968_253_968_253_8).abs() < 1e-15);
    assert!(warp_err <= 1e-9, "warp weight: {phi} vs H_10 = {h10}");
    details.push(format!("warp |phi - H_10| {warp_err:.1e}"));

    // Unit-weighted exp_weighted collapses to plain MSE, bit for bit.
    let mut rng = rng_from_seed(17);
    for _ in 0..20 {
        let n = rng.gen_range(2..=30);
        let scores = Array1::from_iter((0..n).map(|_| rng.gen_range(-1.0..1.0)));
        let targets = Array1::from_iter((0..n).map(|_| rng.gen_range(0.0..1.0)));
        let ew = evaluate_loss(
            &LossSpec::new(LossKind::ExpWeighted).with_weight_type(WeightType::None),
            scores.view(),
            targets.view(),
            &mut rng_from_seed(1),
        )
        .unwrap();
        let mse = evaluate_loss(
            &LossSpec::new(LossKind::Mse),
            scores.view(),
            targets.view(),
            &mut rng_from_seed(1),
        )
        .unwrap();
        assert_eq!(ew.value.to_bits(), mse.value.to_bits());
        assert_eq!(ew.grad.len(), mse.grad.len());
        for (a, b) in ew.grad.iter().zip(mse.grad.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    details.push("exp_weighted(none) == mse bitwise on 20 batches".into());

    verdict(4, "closed forms", true, &details.join(", "));
}

#[test]
fn criterion_5_end_to_end_learnability() {
    let start = Instant::now();
    let table = reference_table();
    let spec = LossSpec::new(LossKind::HingeRank);

    let mut taus = Vec::new();
    for run in 0..10 {
        let seed = sweep_run_seed(7, 5.0, LossKind::HingeRank, run);
        let predictor =
            fit_on_portion(&table, 5.0, &spec, Backbone::Gcn, None, None, seed).unwrap();
        let report = evaluate(&predictor, &table, None, &[], &[]).unwrap();
        taus.push(report.tau);
    }
    let elapsed = start.elapsed();
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    let lo = taus.iter().copied().fold(f64::INFINITY, f64::min);

    let pass = mean >= TAU_FLOOR && elapsed < Duration::from_secs(300);
    verdict(
        5,
        "end-to-end learnability",
        pass,
        &format!(
            "mean tau {mean:.4} over 10 runs (min {lo:.4}, floor {TAU_FLOOR}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

fn random_config(rng: &mut Rng) -> SearchConfig {
    let budget = rng.gen_range(5..=40);
    let fixed = rng.gen_bool(0.5);
    let rand_kind = |rng: &mut Rng| ALL_LOSS_KINDS[rng.gen_range(0..ALL_LOSS_KINDS.len())];
    let plan = if fixed {
        LossPlan::Fixed(LossSpec::new(rand_kind(rng)))
    } else {
        LossPlan::Schedule(PwSchedule {
            warm_loss: LossSpec::new(rand_kind(rng)),
            main_loss: LossSpec::new(rand_kind(rng)),
            warm_iters: rng.gen_range(0..=5),
        })
    };
    let train = TrainConfig { epochs: 8, batch_size: 8, ..TrainConfig::default() };
    SearchConfig {
        budget,
        init_size: rng.gen_range(1..=budget),
        iters: rng.gen_range(0..=10),
        candidates_per_iter: rng.gen_range(4..=30),
        parents_per_iter: rng.gen_range(1..=8),
        queries_per_iter: rng.gen_range(1..=6),
        plan,
        backbone: if rng.gen_bool(0.5) { Backbone::Gcn } else { Backbone::Mlp },
        hidden_dims: Some(vec![6]),
        train,
        warm_start: rng.gen_bool(0.3),
        seed: rng.gen(),
    }
}

#[test]
fn criterion_6_schedule_fidelity_and_budget_safety() {
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    let table = synth_generate(&SynthSpec::new(space, 150, 23, 0.3)).unwrap();

    let mut rng = rng_from_seed(555);
    let mut points_seen = 0usize;
    for case in 0..100 {
        let cfg = random_config(&mut rng);
        let trace = pwlnas_search(&table, &cfg).unwrap_or_else(|e| {
            panic!("case {case}: search failed on a valid random config: {e}")
        });
        assert!(
            trace.spent <= cfg.budget,
            "case {case}: spent {} over budget {}",
            trace.spent,
            cfg.budget
        );
        for point in &trace.points {
            if point.iter == 0 {
                assert_eq!(point.loss, None, "case {case}: init point carries a loss");
                continue;
            }
            points_seen += 1;
            let expect = match &cfg.plan {
                LossPlan::Fixed(spec) => spec.kind,
                LossPlan::Schedule(schedule) => pw_select(schedule, point.iter).kind,
            };
            assert_eq!(
                point.loss,
                Some(expect),
                "case {case} iter {}: recorded loss diverged from the schedule",
                point.iter
            );
        }
    }

    verdict(
        6,
        "schedule fidelity and budget safety",
        true,
        &format!("100 random configs, {points_seen} scheduled iterations, zero violations"),
    );
}

#[test]
fn criterion_7_search_sanity() {
    let table = reference_table();
    let plan = LossPlan::Fixed(LossSpec::new(LossKind::Mse));

    let mut wins = 0;
    for seed in 0..100u64 {
        let mut cfg = SearchConfig::for_budget(100, plan.clone());
        cfg.seed = seed;
        let guided = pwlnas_search_oracle(&table, &cfg).unwrap();
        let random = random_search(&table, 100, seed).unwrap();
        if guided.best_test >= random.best_test {
            wins += 1;
        }
    }

    // Exhaustive random search must retrieve the global optimum every time.
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    let small = synth_generate(&SynthSpec::new(space, 300, 13, 0.3)).unwrap();
    let best_val =
        small.records().iter().map(|r| r.val_perf).fold(f64::NEG_INFINITY, f64::max);
    for seed in 0..20u64 {
        let trace = random_search(&small, small.len(), seed).unwrap();
        assert_eq!(trace.spent, small.len());
        assert_eq!(trace.best_val.to_bits(), best_val.to_bits(), "seed {seed} missed the optimum");
    }

    let pass = wins >= DOMINANCE_FLOOR;
    verdict(
        7,
        "search sanity",
        pass,
        &format!(
            "guided >= random on {wins}/100 paired seeds (floor {DOMINANCE_FLOOR}), exhaustive random optimal on 20/20"
        ),
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pwlnas"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// 3 nodes x 17 ops on the fixed graph: 4913 archs, every seed has 48
/// in-table single-edit neighbors, dense enough for a 200-mutant set.
const DENSE_CONFIG: &str = r#"
base_seed = 7

[space.synth]
max_nodes = 3
vocab_size = 17
edge_rule = "fixed-graph-ops-only"
size = 4913
ruggedness = 0.3

[mutation_eval]
portions = [10.0]
oracle = true
"#;

#[test]
fn criterion_8_mutation_protocol_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "dense.toml", DENSE_CONFIG);
    let out = dir.path().join("out");

    let result = bin()
        .args(["mutation-eval", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        result.status.success(),
        "mutation-eval failed: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let csv = std::fs::read_to_string(out.join("mutation_eval.csv")).unwrap();
    let header = csv.lines().next().unwrap_or_default();
    assert_eq!(header, "# mutation_test_set_size = 200", "unexpected header: {header}");

    // Rebuild the set the command built (same table, same derived rng) and
    // check its structure: every element a single edit from a top-10 seed
    // of the 50-element random init, and not itself a seed.
    let space = SpaceSpec::with_generated_vocab(3, 17, EdgeRule::FixedGraphOpsOnly);
    let table = synth_generate(&SynthSpec::new(space, 4913, 7, 0.3)).unwrap();
    let mut rng = rng_from_seed(derive_seed(7, &[tag_str("mutation-testset")]));
    let testset =
        build_mutation_testset(&table, 50, 10, 200, &mut rng).expect("dense table suffices");
    assert_eq!(testset.len(), 200);

    // The seed set falls out of replaying the same rng prefix.
    let mut replay = rng_from_seed(derive_seed(7, &[tag_str("mutation-testset")]));
    let mut keys: Vec<String> = table.keys().collect();
    keys.shuffle(&mut replay);
    let mut init: Vec<(&str, f64)> =
        keys.iter().take(50).map(|k| (k.as_str(), table.get(k).unwrap().val_perf)).collect();
    init.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let seeds: Vec<&str> = init.iter().take(10).map(|(k, _)| *k).collect();

    let mut distinct = std::collections::HashSet::new();
    for key in &testset {
        assert!(distinct.insert(key.clone()), "duplicate member {key}");
        assert!(!seeds.contains(&key.as_str()), "seed leaked into the set: {key}");
        let arch = &table.get(key).expect("member must be in the table").arch;
        let min_dist = seeds
            .iter()
            .map(|s| edit_distance(arch, &table.get(s).unwrap().arch))
            .min()
            .unwrap();
        assert_eq!(min_dist, 1, "{key} is not a single edit from any seed");
    }

    verdict(
        8,
        "mutation protocol fidelity",
        true,
        "200-element set, all distinct non-seed archs at edit distance 1 from a top-10 seed of the 50-arch init",
    );
}

/// Small space for the cheap determinism runs.
const SMALL_CONFIG: &str = r#"
base_seed = 11

[space.synth]
max_nodes = 5
vocab_size = 4
size = 300
ruggedness = 0.3

[train]
epochs = 30

[sweep]
portions = [10.0]
repeats = 2
losses = ["mse"]
backbone = "gcn"
hidden_dims = [16]

[search]
budget = 30
loss = "hinge_rank"
oracle = true
compare_random = true
"#;

#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let small = write_config(dir.path(), "small.toml", SMALL_CONFIG);
    let dense = write_config(dir.path(), "dense.toml", DENSE_CONFIG);

    // (subcommand, config, produced file)
    let runs: &[(&str, &PathBuf, &str)] = &[
        ("gen-synth", &small, "synth_table.jsonl"),
        ("sweep", &small, "sweep.csv"),
        ("search", &small, "search_trace.csv"),
        ("mutation-eval", &dense, "mutation_eval.csv"),
        ("gradcheck", &small, "gradcheck.csv"),
    ];

    let mut details = Vec::new();
    for (cmd, config, file) in runs {
        let mut outputs = Vec::new();
        for rerun in 0..2 {
            let out = dir.path().join(format!("{cmd}-{rerun}"));
            let mut invocation = bin();
            invocation.arg(cmd).arg("--config").arg(config).arg("--out").arg(&out);
            if *cmd == "gradcheck" {
                // Restart seeds derive from the base seed, so this run's
                // fixtures are a subset of the ones criterion 1 audits.
                invocation.args(["--restarts", "2", "--seed", "0"]);
            }
            let result = invocation.output().unwrap();
            assert!(
                result.status.success(),
                "{cmd} rerun {rerun} failed: {}",
                String::from_utf8_lossy(&result.stderr)
            );
            outputs.push(std::fs::read(out.join(file)).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{cmd}: reruns differ in {file}");
        details.push(format!("{cmd} ({} bytes)", outputs[0].len()));
    }

    verdict(9, "cli determinism", true, &format!("byte-identical reruns: {}", details.join(", ")));
}
