//! Calibration pilot behind the two empirical floors in the acceptance suite.
//!
//! Part A measures the rank correlation a GCN + hinge-rank predictor reaches
//! on the reference synthetic benchmark (1000 archs, ruggedness 0.3, seed 7)
//! when trained on a 5% split, averaged over 10 seeded runs. The suite pins
//! `TAU_FLOOR` to the observed mean minus three standard deviations, rounded
//! down to the nearest 0.05.
//!
//! Part B runs 100 paired (oracle-surrogate search, random search) seeds at
//! budget 100 on the same table and counts how often the guided search ends
//! with final test performance at least as good as random's. The suite pins
//! `DOMINANCE_FLOOR` wins out of 100.
//!
//! Rerun with `cargo run --release --example pilot_calibration` after any
//! change to the synthetic generator, the trainer, or the search loop, and
//! refresh the pinned constants if the floors moved.

use pwlnas::arch::{EdgeRule, SpaceSpec};
use pwlnas::bench::{synth_generate, BenchTable, SynthSpec};
use pwlnas::losses::{LossKind, LossSpec};
use pwlnas::metrics::{evaluate, fit_on_portion, sweep_run_seed};
use pwlnas::nn::Backbone;
use pwlnas::search::{pwlnas_search_oracle, random_search, LossPlan, SearchConfig};

const PORTION: f64 = 5.0;
const RUNS: usize = 10;
const PAIRS: u64 = 100;
const BUDGET: usize = 100;

fn reference_table() -> BenchTable {
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    synth_generate(&SynthSpec::new(space, 1000, 7, 0.3)).expect("space holds 1000 archs")
}

fn tau_pilot(table: &BenchTable) -> (f64, f64) {
    let spec = LossSpec::new(LossKind::HingeRank);
    let mut taus = Vec::with_capacity(RUNS);
    for run in 0..RUNS {
        let seed = sweep_run_seed(7, PORTION, LossKind::HingeRank, run);
        let predictor =
            fit_on_portion(table, PORTION, &spec, Backbone::Gcn, None, None, seed).unwrap();
        // Rank quality is scored over the whole table, training archs
        // included, matching how the acceptance gate measures it.
        let report = evaluate(&predictor, table, None, &[], &[]).unwrap();
        println!("run {run:2}  seed {seed:20}  tau {:+.4}", report.tau);
        taus.push(report.tau);
    }
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    let var =
        taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (taus.len() as f64 - 1.0);
    (mean, var.sqrt())
}

fn dominance_pilot(table: &BenchTable) -> usize {
    let plan = LossPlan::Fixed(LossSpec::new(LossKind::Mse));
    let mut wins = 0;
    for seed in 0..PAIRS {
        let mut cfg = SearchConfig::for_budget(BUDGET, plan.clone());
        cfg.seed = seed;
        let guided = pwlnas_search_oracle(table, &cfg).unwrap();
        let random = random_search(table, BUDGET, seed).unwrap();
        if guided.best_test >= random.best_test {
            wins += 1;
        }
    }
    wins
}

fn main() {
    let table = reference_table();
    println!("reference table: {} records", table.len());

    println!("\npart A: GCN + hinge rank on a {PORTION}% split, {RUNS} runs");
    let (mean, std) = tau_pilot(&table);
    let floor = ((mean - 3.0 * std) / 0.05).floor() * 0.05;
    println!("mean tau {mean:.4}  std {std:.4}");
    println!("suggested TAU_FLOOR (mean - 3 std, rounded down to 0.05): {floor:.2}");

    println!("\npart B: oracle-surrogate search vs random, budget {BUDGET}, {PAIRS} pairs");
    let wins = dominance_pilot(&table);
    println!("guided >= random on {wins}/{PAIRS} paired seeds");
}
