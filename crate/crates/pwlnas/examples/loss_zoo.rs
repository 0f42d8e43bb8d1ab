//! Tour of the eight predictor losses on one small batch.
//!
//! Each loss reports its value, the gradient with respect to the predicted
//! scores, and a kink gap: the distance to the nearest non-differentiable
//! point (infinite for smooth losses). The second half shows a piecewise
//! schedule switching from a warm-up loss to a refinement loss mid-run.

use ndarray::arr1;
use pwlnas::losses::{
    evaluate_loss, pw_select, LossKind, LossSpec, PwSchedule, ALL_LOSS_KINDS,
};
use pwlnas::seed::rng_from_seed;

fn main() {
    let scores = arr1(&[0.32, 0.71, 0.18, 0.55, 0.44]);
    let targets = arr1(&[0.30, 0.80, 0.10, 0.60, 0.40]);
    let mut rng = rng_from_seed(9);

    println!("{:<14} {:>10} {:>12} {:>10}", "loss", "value", "|grad|", "kink gap");
    for kind in ALL_LOSS_KINDS {
        let spec = LossSpec::new(kind);
        let out = evaluate_loss(&spec, scores.view(), targets.view(), &mut rng).unwrap();
        let gnorm = out.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        println!("{:<14} {:>10.5} {:>12.5} {:>10.3e}", kind.to_string(), out.value, gnorm, out.kink_gap);
    }

    // A tuned variant: wider hinge margin changes both value and kinks.
    let mut wide = LossSpec::new(LossKind::HingeRank);
    wide.margin = 0.25;
    let out = evaluate_loss(&wide, scores.view(), targets.view(), &mut rng).unwrap();
    println!("\nhinge_rank with margin 0.25: value {:.5}, kink gap {:.3e}", out.value, out.kink_gap);

    let schedule = PwSchedule {
        warm_loss: LossSpec::new(LossKind::HingeRank),
        main_loss: LossSpec::new(LossKind::Mape),
        warm_iters: 3,
    };
    println!("\npiecewise schedule (warm for 3 outer iterations):");
    for iter in 1..=6 {
        println!("  iter {iter}: {}", pw_select(&schedule, iter).kind);
    }
}
