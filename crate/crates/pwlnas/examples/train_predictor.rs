//! Train both predictor backbones on a small split and compare rank quality.
//!
//! `fit_on_portion` is the one-cell training unit: seeded split, seeded
//! init, seeded optimizer. Evaluation scores the held-out archs and reports
//! Kendall tau plus the top-of-table metrics that matter for search
//! (precision at the top 5%, best actual rank inside the predicted top 10).

use pwlnas::arch::{EdgeRule, SpaceSpec};
use pwlnas::bench::{split, synth_generate, SynthSpec};
use pwlnas::losses::{LossKind, LossSpec};
use pwlnas::metrics::{evaluate, fit_on_portion};
use pwlnas::nn::Backbone;

fn main() {
    let space = SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag);
    let table = synth_generate(&SynthSpec::new(space, 600, 11, 0.3)).unwrap();
    let loss = LossSpec::new(LossKind::HingeRank);
    let portion = 10.0;
    let seed = 2024;

    for backbone in [Backbone::Gcn, Backbone::Mlp] {
        let predictor =
            fit_on_portion(&table, portion, &loss, backbone, None, None, seed).unwrap();
        let (train_keys, eval_keys) = split(&table, portion, seed).unwrap();
        let report =
            evaluate(&predictor, &table, Some(&eval_keys), &[5.0], &[10]).unwrap();
        println!(
            "{:?}: trained on {} archs, evaluated on {}",
            backbone,
            train_keys.len(),
            report.n_eval
        );
        println!("  tau            {:+.4}", report.tau);
        println!("  precision@5%   {:.1}%", report.precision_at[0].1);
        println!("  best rank in predicted top-10: {}", report.n_at[0].1);
    }
}
