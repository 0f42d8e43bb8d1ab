//! Surrogate-guided architecture search with a piecewise loss schedule.
//!
//! The loop trains a predictor on everything queried so far, mutates the
//! current best archs, scores the candidates, and queries the most
//! promising ones. A preset schedule warms up on one loss before switching
//! to another. A random-search baseline runs on the same seed for contrast.

use pwlnas::arch::{EdgeRule, SpaceSpec};
use pwlnas::bench::{synth_generate, SynthSpec};
use pwlnas::search::{
    pwlnas_search, random_search, traces_to_csv, LossPlan, SearchConfig, SearchPreset,
};

fn main() {
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    let table = synth_generate(&SynthSpec::new(space, 500, 21, 0.3)).unwrap();

    let preset = SearchPreset::Nb201Like;
    let mut cfg = SearchConfig::for_budget(60, LossPlan::Schedule(preset.schedule(3)));
    cfg.seed = 4;

    let guided = pwlnas_search(&table, &cfg).unwrap();
    let random = random_search(&table, cfg.budget, cfg.seed).unwrap();

    println!("preset {preset}: {:?} then {:?}", preset.loss_kinds().0, preset.loss_kinds().1);
    println!("\n{:<6} {:<14} {:>6} {:>10}", "iter", "loss", "spent", "best val");
    for point in &guided.points {
        let loss = point.loss.map_or("-".to_string(), |l| l.to_string());
        println!("{:<6} {:<14} {:>6} {:>10.4}", point.iter, loss, point.spent, point.best_val);
    }

    println!("\nguided: best test {:.4} ({} queries)", guided.best_test, guided.spent);
    println!("random: best test {:.4} ({} queries)", random.best_test, random.spent);

    let csv = traces_to_csv(&[("pwlnas", &guided), ("random", &random)]);
    let path = std::env::temp_dir().join("pwlnas_search_example.csv");
    std::fs::write(&path, &csv).unwrap();
    println!("\npaired traces written to {}", path.display());
}
