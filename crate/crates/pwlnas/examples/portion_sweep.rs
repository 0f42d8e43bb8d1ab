//! Sweep training-set size against loss choice and aggregate the results.
//!
//! Cells run in parallel; each gets a seed derived from the base seed and
//! its (portion, loss, run) coordinates, so adding rows never reshuffles
//! existing ones. The CSV mirrors what the `pwlnas sweep` subcommand writes.

use pwlnas::arch::{EdgeRule, SpaceSpec};
use pwlnas::bench::{synth_generate, SynthSpec};
use pwlnas::losses::{LossKind, LossSpec};
use pwlnas::metrics::{aggregate, run_sweep, sweep_to_csv, SweepConfig};
use pwlnas::nn::Backbone;

fn main() {
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    let table = synth_generate(&SynthSpec::new(space, 400, 3, 0.3)).unwrap();

    let portions = [5.0, 20.0];
    let losses = [LossSpec::new(LossKind::Mse), LossSpec::new(LossKind::HingeRank)];
    let cfg = SweepConfig::new("synthetic", Backbone::Gcn, 3);

    let result = run_sweep(&table, &portions, 3, &losses, &cfg);
    println!(
        "{} cells done, {} failed",
        result.rows.len(),
        result.failures.len()
    );

    // The first metric column is Kendall tau (then precisions, then n_at).
    println!("\n{:<8} {:<12} {:>8} {:>8}", "portion", "loss", "mean tau", "std");
    for agg in aggregate(&result) {
        println!(
            "{:<8} {:<12} {:>8.4} {:>8.4}",
            agg.portion,
            agg.loss.to_string(),
            agg.mean.0[0],
            agg.std.0[0]
        );
    }

    let csv = sweep_to_csv(&result);
    let path = std::env::temp_dir().join("pwlnas_sweep_example.csv");
    std::fs::write(&path, &csv).unwrap();
    println!("\nfull grid written to {}", path.display());
    println!("first lines:\n{}", csv.lines().take(3).collect::<Vec<_>>().join("\n"));
}
