//! Build a mutation test set and measure how well a predictor ranks it.
//!
//! The set stresses local discrimination: every element is one edit away
//! from a strong seed architecture, so global trends carry little signal
//! and the predictor has to separate close neighbors. An oracle scorer is
//! included as the ceiling any predictor is chasing.

use pwlnas::arch::{edit_distance, EdgeRule, SpaceSpec};
use pwlnas::bench::{synth_generate, SynthSpec};
use pwlnas::losses::{LossKind, LossSpec};
use pwlnas::metrics::{evaluate, fit_on_portion, OracleScorer};
use pwlnas::nn::Backbone;
use pwlnas::search::build_mutation_testset;
use pwlnas::seed::rng_from_seed;

fn main() {
    // 3 nodes x 17 ops on a fixed graph: 4913 archs, dense enough that every
    // seed has 48 in-table neighbors.
    let space = SpaceSpec::with_generated_vocab(3, 17, EdgeRule::FixedGraphOpsOnly);
    let table = synth_generate(&SynthSpec::new(space, 4913, 5, 0.3)).unwrap();

    let mut rng = rng_from_seed(77);
    let testset = build_mutation_testset(&table, 50, 10, 200, &mut rng).unwrap();
    println!("mutation test set: {} archs", testset.len());

    // Every member should be a single edit from some table arch (its seed).
    let max_min_dist = testset
        .iter()
        .map(|key| {
            let arch = &table.get(key).unwrap().arch;
            table
                .records()
                .iter()
                .filter(|r| pwlnas::arch::canonical_key(&r.arch) != *key)
                .map(|r| edit_distance(arch, &r.arch))
                .min()
                .unwrap()
        })
        .max()
        .unwrap();
    println!("max over members of (min edit distance to rest of table): {max_min_dist}");

    let oracle = OracleScorer::test(&table);
    let ceiling = evaluate(&oracle, &table, Some(&testset), &[5.0], &[10]).unwrap();
    println!("\noracle on the set:    tau {:+.3}  p@5 {:>5.1}%  n@10 {}", ceiling.tau, ceiling.precision_at[0].1, ceiling.n_at[0].1);

    let loss = LossSpec::new(LossKind::HingeRank);
    let predictor =
        fit_on_portion(&table, 10.0, &loss, Backbone::Gcn, None, None, 77).unwrap();
    let report = evaluate(&predictor, &table, Some(&testset), &[5.0], &[10]).unwrap();
    println!("predictor on the set: tau {:+.3}  p@5 {:>5.1}%  n@10 {}", report.tau, report.precision_at[0].1, report.n_at[0].1);
}
