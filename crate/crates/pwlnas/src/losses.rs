//! Loss functions for training performance predictors: plain regression,
//! pairwise and listwise ranking, weighted regression variants, and the
//! piecewise schedule that switches losses between search iterations.
//!
//! Every loss returns its value together with the gradient w.r.t. the
//! prediction scores, plus `kink_gap`: the distance from the evaluation point
//! to the nearest non-differentiability (hinge boundaries, absolute values),
//! which the finite-difference checker uses to reject ill-posed comparisons.
//! Gradients of sampled losses are exact for the realized sample.

use ndarray::{Array1, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::Rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LossError {
    #[error("scores have length {scores}, targets {targets}")]
    LengthMismatch { scores: usize, targets: usize },
    #[error("all targets are equal; no strict pairs exist")]
    NoStrictPairs,
    #[error("pair batch is empty")]
    EmptyPairs,
}

/// The available loss kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    HingeRank,
    LogisticRank,
    MseSr,
    Listmle,
    Mape,
    ExpWeighted,
    Warp,
}

pub const ALL_LOSS_KINDS: [LossKind; 8] = [
    LossKind::Mse,
    LossKind::HingeRank,
    LossKind::LogisticRank,
    LossKind::MseSr,
    LossKind::Listmle,
    LossKind::Mape,
    LossKind::ExpWeighted,
    LossKind::Warp,
];

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LossKind::Mse => "mse",
            LossKind::HingeRank => "hinge_rank",
            LossKind::LogisticRank => "logistic_rank",
            LossKind::MseSr => "mse_sr",
            LossKind::Listmle => "listmle",
            LossKind::Mape => "mape",
            LossKind::ExpWeighted => "exp_weighted",
            LossKind::Warp => "warp",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "hinge_rank" => Ok(LossKind::HingeRank),
            "logistic_rank" => Ok(LossKind::LogisticRank),
            "mse_sr" => Ok(LossKind::MseSr),
            "listmle" => Ok(LossKind::Listmle),
            "mape" => Ok(LossKind::Mape),
            "exp_weighted" => Ok(LossKind::ExpWeighted),
            "warp" => Ok(LossKind::Warp),
            other => Err(format!("unknown loss kind {other:?}")),
        }
    }
}

/// How per-element weights are derived from targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightType {
    /// Weight by the target value itself.
    Gt,
    /// Weight by `exp(alpha * y)`, normalized so the batch maximum is 1.
    ExpGt,
    /// Weight by `1 - (r - 1)/n` with r the target rank (1 = best).
    Ranking,
    /// Unit weights.
    None,
}

impl std::fmt::Display for WeightType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            WeightType::Gt => "gt",
            WeightType::ExpGt => "exp_gt",
            WeightType::Ranking => "ranking",
            WeightType::None => "none",
        };
        write!(f, "{name}")
    }
}

fn default_margin() -> f64 {
    0.1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    10.0
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_weight_type() -> WeightType {
    WeightType::ExpGt
}
fn default_warp_max_trials() -> usize {
    32
}

/// A fully parameterized loss. Parameters irrelevant to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Margin of the hinge and WARP losses.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Mixing coefficient of the ranking term in `mse_sr`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Temperature of the exp-of-target weighting.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Denominator floor of the percentage-error loss.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_weight_type")]
    pub weight_type: WeightType,
    #[serde(default = "default_warp_max_trials")]
    pub warp_max_trials: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            margin: default_margin(),
            lambda: default_lambda(),
            alpha: default_alpha(),
            epsilon: default_epsilon(),
            weight_type: default_weight_type(),
            warp_max_trials: default_warp_max_trials(),
        }
    }

    pub fn with_weight_type(mut self, weight_type: WeightType) -> Self {
        self.weight_type = weight_type;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.margin > 0.0) {
            return Err(format!("margin {} must be positive", self.margin));
        }
        if !(self.lambda >= 0.0) {
            return Err(format!("lambda {} must be nonnegative", self.lambda));
        }
        if !(self.alpha >= 0.0) {
            return Err(format!("alpha {} must be nonnegative", self.alpha));
        }
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.warp_max_trials == 0 {
            return Err("warp_max_trials must be at least 1".into());
        }
        Ok(())
    }
}

/// Loss switch: `warm_loss` for the first `warm_iters` outer iterations
/// (inclusive, 1-indexed), `main_loss` afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwSchedule {
    pub warm_loss: LossSpec,
    pub main_loss: LossSpec,
    pub warm_iters: usize,
}

/// Pick the active loss for a 1-indexed outer iteration.
pub fn pw_select(schedule: &PwSchedule, outer_iter: usize) -> &LossSpec {
    assert!(outer_iter >= 1, "outer iterations are 1-indexed");
    if outer_iter <= schedule.warm_iters {
        &schedule.warm_loss
    } else {
        &schedule.main_loss
    }
}

/// Value and score-gradient of a loss, plus the distance to the nearest
/// non-differentiable point along any inspected decision (infinite for
/// everywhere-smooth losses).
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Array1<f64>,
    pub kink_gap: f64,
}

impl LossOutput {
    fn smooth(value: f64, grad: Array1<f64>) -> Self {
        Self { value, grad, kink_gap: f64::INFINITY }
    }
}

/// Ordered index pairs `(i, j)` with `targets[i] > targets[j]` strictly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize)>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pair construction policy for the pairwise losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStrategy {
    /// Every strict pair; quadratic, intended for batches of at most 256.
    All,
    /// The given number of seeded random strict partners per element.
    PerAnchorK(usize),
}

/// Ranks with 1 = best (highest value), ties broken by ascending index.
pub fn ranks_desc(values: ArrayView1<f64>) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).expect("finite values").then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    ranks
}

/// Indices sorted by descending value; ties keep ascending index order.
fn order_desc(values: ArrayView1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).expect("finite values").then(a.cmp(&b))
    });
    order
}

/// Draw a pair batch from the targets. Ties are never paired; a batch of
/// all-equal targets has no strict pairs and is an error.
pub fn sample_pairs(
    targets: ArrayView1<f64>,
    rng: &mut Rng,
    strategy: PairStrategy,
) -> Result<PairBatch, LossError> {
    let n = targets.len();
    let mut pairs = Vec::new();
    match strategy {
        PairStrategy::All => {
            for a in 0..n {
                for b in a + 1..n {
                    if targets[a] > targets[b] {
                        pairs.push((a, b));
                    } else if targets[b] > targets[a] {
                        pairs.push((b, a));
                    }
                }
            }
        }
        PairStrategy::PerAnchorK(k) => {
            for a in 0..n {
                let partners: Vec<usize> =
                    (0..n).filter(|&b| targets[b] != targets[a]).collect();
                if partners.is_empty() {
                    continue;
                }
                for _ in 0..k {
                    let b = partners[rng.gen_range(0..partners.len())];
                    if targets[a] > targets[b] {
                        pairs.push((a, b));
                    } else {
                        pairs.push((b, a));
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(LossError::NoStrictPairs);
    }
    Ok(PairBatch { pairs })
}

/// Pairs of elements adjacent in the target-sorted (descending) order,
/// skipping tied neighbors. This is the sequence-ranking pair set.
pub fn adjacent_pairs(targets: ArrayView1<f64>) -> PairBatch {
    let order = order_desc(targets);
    let mut pairs = Vec::with_capacity(order.len().saturating_sub(1));
    for w in order.windows(2) {
        if targets[w[0]] > targets[w[1]] {
            pairs.push((w[0], w[1]));
        }
    }
    PairBatch { pairs }
}

fn check_lengths(scores: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<(), LossError> {
    if scores.len() != targets.len() {
        return Err(LossError::LengthMismatch { scores: scores.len(), targets: targets.len() });
    }
    Ok(())
}

/// Mean squared error: `(1/n) sum (s_i - y_i)^2`.
pub fn mse(scores: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<LossOutput, LossError> {
    check_lengths(scores, targets)?;
    let n = scores.len() as f64;
    let mut value = 0.0;
    let mut grad = Array1::zeros(scores.len());
    for i in 0..scores.len() {
        let d = scores[i] - targets[i];
        value += d * d;
        grad[i] = 2.0 * d / n;
    }
    Ok(LossOutput::smooth(value / n, grad))
}

/// Pairwise hinge: `(1/|P|) sum max(0, m - (s_i - s_j))` over pairs with
/// better `i`. The subgradient at the kink is 0 (inactive).
pub fn hinge_rank(scores: ArrayView1<f64>, pairs: &PairBatch, margin: f64) -> Result<LossOutput, LossError> {
    if pairs.is_empty() {
        return Err(LossError::EmptyPairs);
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    let mut grad = Array1::zeros(scores.len());
    let mut kink_gap = f64::INFINITY;
    for &(i, j) in &pairs.pairs {
        let slack = margin - (scores[i] - scores[j]);
        kink_gap = kink_gap.min(slack.abs());
        if slack > 0.0 {
            value += slack;
            grad[i] -= inv;
            grad[j] += inv;
        }
    }
    Ok(LossOutput { value: value * inv, grad, kink_gap })
}

/// Numerically stable `log(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise logistic: `(1/|P|) sum log(1 + exp(-(s_i - s_j)))`.
pub fn logistic_rank(scores: ArrayView1<f64>, pairs: &PairBatch) -> Result<LossOutput, LossError> {
    if pairs.is_empty() {
        return Err(LossError::EmptyPairs);
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    let mut grad = Array1::zeros(scores.len());
    for &(i, j) in &pairs.pairs {
        let d = scores[i] - scores[j];
        value += softplus(-d);
        // d softplus(-d) / dd = -sigmoid(-d)
        let g = -sigmoid(-d) * inv;
        grad[i] += g;
        grad[j] -= g;
    }
    Ok(LossOutput::smooth(value * inv, grad))
}

/// MSE plus `lambda` times the logistic ranking term over the given pairs
/// (canonically the adjacent pairs in target-sorted order).
pub fn mse_sr(
    scores: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    pairs: &PairBatch,
    lambda: f64,
) -> Result<LossOutput, LossError> {
    let base = mse(scores, targets)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    let rank = logistic_rank(scores, pairs)?;
    Ok(LossOutput::smooth(base.value + lambda * rank.value, base.grad + lambda * rank.grad))
}

/// Stable `log(sum exp(x))`.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Plackett-Luce negative log-likelihood of the target-descending order:
/// `sum_k [ LSE(s_{pi(k)}, ..., s_{pi(n)}) - s_{pi(k)} ]` with ties in the
/// targets broken by ascending index. Gradient uses the suffix-softmax form.
pub fn listmle(scores: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<LossOutput, LossError> {
    check_lengths(scores, targets)?;
    let order = order_desc(targets);
    let n = order.len();
    let mut value = 0.0;
    let mut grad = Array1::zeros(n);
    for k in 0..n {
        let suffix: Vec<f64> = order[k..].iter().map(|&i| scores[i]).collect();
        let lse = log_sum_exp(&suffix);
        value += lse - scores[order[k]];
        for &idx in &order[k..] {
            grad[idx] += (scores[idx] - lse).exp();
        }
        grad[order[k]] -= 1.0;
    }
    Ok(LossOutput::smooth(value, grad))
}

/// Absolute percentage error measured on the error scale:
/// `(1/n) sum |s_i - y_i| / max(1 - y_i, eps)`. The closer a target is to
/// perfect accuracy, the larger its implicit weight.
pub fn mape(
    scores: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    epsilon: f64,
) -> Result<LossOutput, LossError> {
    check_lengths(scores, targets)?;
    let n = scores.len() as f64;
    let mut value = 0.0;
    let mut grad = Array1::zeros(scores.len());
    let mut kink_gap = f64::INFINITY;
    for i in 0..scores.len() {
        let denom = (1.0 - targets[i]).max(epsilon);
        let d = scores[i] - targets[i];
        kink_gap = kink_gap.min(d.abs());
        value += d.abs() / denom;
        // Subgradient 0 exactly at d = 0.
        grad[i] = if d == 0.0 { 0.0 } else { d.signum() / (denom * n) };
    }
    Ok(LossOutput { value: value / n, grad, kink_gap })
}

/// Per-element weight for the weighted losses. `r` is the target rank
/// (1 = best) and `y_max` the batch maximum target, used to normalize the
/// exponential weighting so its largest weight is exactly 1.
pub fn weight_of(y: f64, r: usize, n: usize, weight_type: WeightType, alpha: f64, y_max: f64) -> f64 {
    match weight_type {
        WeightType::Gt => y,
        WeightType::ExpGt => (alpha * (y - y_max)).exp(),
        WeightType::Ranking => 1.0 - (r as f64 - 1.0) / n as f64,
        WeightType::None => 1.0,
    }
}

fn batch_weights(targets: ArrayView1<f64>, weight_type: WeightType, alpha: f64) -> Vec<f64> {
    let n = targets.len();
    let ranks = ranks_desc(targets);
    let y_max = targets.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    (0..n).map(|i| weight_of(targets[i], ranks[i], n, weight_type, alpha, y_max)).collect()
}

/// Weighted squared error: `(1/n) sum w_i (s_i - y_i)^2` where the weights
/// depend only on the targets (constants for the gradient).
pub fn exp_weighted(
    scores: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    alpha: f64,
    weight_type: WeightType,
) -> Result<LossOutput, LossError> {
    check_lengths(scores, targets)?;
    let n = scores.len() as f64;
    let weights = batch_weights(targets, weight_type, alpha);
    let mut value = 0.0;
    let mut grad = Array1::zeros(scores.len());
    for i in 0..scores.len() {
        let d = scores[i] - targets[i];
        value += weights[i] * d * d;
        grad[i] = 2.0 * weights[i] * d / n;
    }
    Ok(LossOutput::smooth(value / n, grad))
}

/// Harmonic number `H_rho`.
fn harmonic(rho: usize) -> f64 {
    (1..=rho).map(|k| 1.0 / k as f64).sum()
}

/// Sampled weighted-approximate-rank loss. For each anchor (taken in
/// descending-target order) candidates with strictly worse targets are
/// sampled uniformly until one violates the margin (`s_j + m > s_i`) or
/// `max_trials` is exhausted. A violation found on sample `s` contributes
/// `H_rho * max(0, m - s_i + s_j)` with `rho = floor((n-1)/s)`, scaled by the
/// anchor weight; the total is averaged over the batch. The rank factor is a
/// constant for the gradient, which flows through the hinge alone.
#[allow(clippy::too_many_arguments)]
pub fn warp(
    scores: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    margin: f64,
    max_trials: usize,
    weight_type: WeightType,
    alpha: f64,
    rng: &mut Rng,
) -> Result<LossOutput, LossError> {
    check_lengths(scores, targets)?;
    let n = scores.len();
    if n < 2 {
        return Err(LossError::NoStrictPairs);
    }
    let order = order_desc(targets);
    let weights = batch_weights(targets, weight_type, alpha);
    let mut value = 0.0;
    let mut grad = Array1::zeros(n);
    let mut kink_gap = f64::INFINITY;
    for &i in &order {
        let candidates: Vec<usize> = (0..n).filter(|&j| targets[j] < targets[i]).collect();
        if candidates.is_empty() {
            continue;
        }
        for trial in 1..=max_trials {
            let j = candidates[rng.gen_range(0..candidates.len())];
            let slack = margin - (scores[i] - scores[j]);
            kink_gap = kink_gap.min(slack.abs());
            if slack > 0.0 {
                let rho = (n - 1) / trial;
                let scale = harmonic(rho) * weights[i];
                value += scale * slack;
                grad[i] -= scale;
                grad[j] += scale;
                break;
            }
        }
    }
    let inv = 1.0 / n as f64;
    grad.mapv_inplace(|g| g * inv);
    Ok(LossOutput { value: value * inv, grad, kink_gap })
}

/// Evaluate a [`LossSpec`] on a batch, constructing whatever pair sets the
/// kind needs. Pairwise kinds enumerate all strict pairs up to 256 elements
/// and fall back to 8 sampled partners per anchor beyond that; the sequence
/// term of `mse_sr` always uses adjacent pairs in target-sorted order.
pub fn evaluate_loss(
    spec: &LossSpec,
    scores: ArrayView1<f64>,
    targets: ArrayView1<f64>,
    rng: &mut Rng,
) -> Result<LossOutput, LossError> {
    check_lengths(scores, targets)?;
    let strategy = if targets.len() <= 256 { PairStrategy::All } else { PairStrategy::PerAnchorK(8) };
    match spec.kind {
        LossKind::Mse => mse(scores, targets),
        LossKind::HingeRank => {
            let pairs = sample_pairs(targets, rng, strategy)?;
            hinge_rank(scores, &pairs, spec.margin)
        }
        LossKind::LogisticRank => {
            let pairs = sample_pairs(targets, rng, strategy)?;
            logistic_rank(scores, &pairs)
        }
        LossKind::MseSr => {
            let pairs = adjacent_pairs(targets);
            if spec.lambda != 0.0 && pairs.is_empty() {
                return Err(LossError::NoStrictPairs);
            }
            mse_sr(scores, targets, &pairs, spec.lambda)
        }
        LossKind::Listmle => listmle(scores, targets),
        LossKind::Mape => mape(scores, targets, spec.epsilon),
        LossKind::ExpWeighted => exp_weighted(scores, targets, spec.alpha, spec.weight_type),
        LossKind::Warp => warp(
            scores,
            targets,
            spec.margin,
            spec.warp_max_trials,
            spec.weight_type,
            spec.alpha,
            rng,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{rng_from_seed, Rng};
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use proptest::prelude::*;

    fn rand_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| rng.gen_range(lo..hi)))
    }

    /// Central finite differences against the analytic gradient; returns the
    /// max relative error over coordinates. Callers must keep `eps` well
    /// below the loss's reported kink gap.
    fn max_fd_rel_err(
        f: &dyn Fn(ArrayView1<f64>) -> LossOutput,
        scores: &Array1<f64>,
        eps: f64,
    ) -> f64 {
        let out = f(scores.view());
        let mut worst = 0.0f64;
        for i in 0..scores.len() {
            let mut plus = scores.clone();
            plus[i] += eps;
            let mut minus = scores.clone();
            minus[i] -= eps;
            let numeric = (f(plus.view()).value - f(minus.view()).value) / (2.0 * eps);
            let analytic = out.grad[i];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
        worst
    }

    /// Run the finite-difference check on `draws` random batches, resampling
    /// any draw whose evaluation point sits within `min_gap` of a kink.
    fn fd_check(
        name: &str,
        draws: usize,
        min_gap: f64,
        f: &dyn Fn(ArrayView1<f64>, ArrayView1<f64>) -> LossOutput,
    ) {
        let mut rng = rng_from_seed(0xFD);
        let mut done = 0;
        let mut attempts = 0;
        while done < draws {
            attempts += 1;
            assert!(attempts < draws * 50, "{name}: too many kink resamples");
            let n = rng.gen_range(2..12);
            let scores = rand_vec(&mut rng, n, -1.0, 1.0);
            let targets = rand_vec(&mut rng, n, 0.0, 1.0);
            if f(scores.view(), targets.view()).kink_gap < min_gap {
                continue;
            }
            // eps sits far below min_gap (no activation flips) yet far above
            // the cancellation noise of the value differences.
            let g = |s: ArrayView1<f64>| f(s, targets.view());
            let err = max_fd_rel_err(&g, &scores, 1e-4);
            assert!(err <= 1e-4, "{name}: fd relative error {err}");
            done += 1;
        }
    }

    #[test]
    fn mse_matches_hand_values() {
        let out = mse(arr1(&[0.5]).view(), arr1(&[0.0]).view()).unwrap();
        assert_abs_diff_eq!(out.value, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out.grad[0], 1.0, epsilon = 1e-15);

        let same = arr1(&[0.3, 0.7, 0.1]);
        let out = mse(same.view(), same.view()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_matches_independent_recomputation() {
        let mut rng = rng_from_seed(7);
        let scores = rand_vec(&mut rng, 7, -1.0, 1.0);
        let targets = rand_vec(&mut rng, 7, 0.0, 1.0);
        let out = mse(scores.view(), targets.view()).unwrap();
        let expected: f64 =
            scores.iter().zip(&targets).map(|(s, t)| (s - t) * (s - t)).sum::<f64>() / 7.0;
        assert_abs_diff_eq!(out.value, expected, epsilon = 1e-15);
    }

    #[test]
    fn mse_rejects_length_mismatch() {
        let err = mse(arr1(&[0.1, 0.2]).view(), arr1(&[0.1]).view()).unwrap_err();
        assert_eq!(err, LossError::LengthMismatch { scores: 2, targets: 1 });
    }

    #[test]
    fn sample_pairs_all_emits_every_strict_pair() {
        let targets = arr1(&[0.1, 0.2, 0.3]);
        let pairs = sample_pairs(targets.view(), &mut rng_from_seed(0), PairStrategy::All).unwrap();
        assert_eq!(pairs.len(), 3);
        for &(i, j) in &pairs.pairs {
            assert!(targets[i] > targets[j]);
        }
    }

    #[test]
    fn sample_pairs_rejects_all_equal_targets() {
        let targets = arr1(&[0.5, 0.5, 0.5]);
        for strategy in [PairStrategy::All, PairStrategy::PerAnchorK(4)] {
            let err = sample_pairs(targets.view(), &mut rng_from_seed(0), strategy).unwrap_err();
            assert_eq!(err, LossError::NoStrictPairs);
        }
    }

    #[test]
    fn sample_pairs_is_deterministic_in_seed() {
        let mut rng = rng_from_seed(3);
        let targets = rand_vec(&mut rng, 20, 0.0, 1.0);
        let a =
            sample_pairs(targets.view(), &mut rng_from_seed(9), PairStrategy::PerAnchorK(3)).unwrap();
        let b =
            sample_pairs(targets.view(), &mut rng_from_seed(9), PairStrategy::PerAnchorK(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hinge_rank_matches_hand_values() {
        // Pair (0, 1): difference 0.4 is inactive at margin 0.1.
        let pairs = PairBatch { pairs: vec![(0, 1)] };
        let out = hinge_rank(arr1(&[0.5, 0.1]).view(), &pairs, 0.1).unwrap();
        assert_eq!(out.value, 0.0);
        // Difference 0.05 leaves slack 0.05.
        let out = hinge_rank(arr1(&[0.15, 0.1]).view(), &pairs, 0.1).unwrap();
        assert_abs_diff_eq!(out.value, 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(out.grad[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.grad[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hinge_rank_rejects_empty_pairs() {
        let err = hinge_rank(arr1(&[0.1]).view(), &PairBatch { pairs: vec![] }, 0.1).unwrap_err();
        assert_eq!(err, LossError::EmptyPairs);
    }

    #[test]
    fn logistic_rank_matches_hand_values() {
        let pairs = PairBatch { pairs: vec![(0, 1)] };
        let out = logistic_rank(arr1(&[0.4, 0.4]).view(), &pairs).unwrap();
        assert_abs_diff_eq!(out.value, std::f64::consts::LN_2, epsilon = 1e-12);
        // Huge positive difference: contribution vanishes without overflow.
        let out = logistic_rank(arr1(&[50.0, 0.0]).view(), &pairs).unwrap();
        assert!(out.value < 1e-20);
        assert!(out.value.is_finite());
    }

    #[test]
    fn mse_sr_with_zero_lambda_is_mse() {
        let mut rng = rng_from_seed(4);
        let scores = rand_vec(&mut rng, 9, -1.0, 1.0);
        let targets = rand_vec(&mut rng, 9, 0.0, 1.0);
        let pairs = adjacent_pairs(targets.view());
        let combined = mse_sr(scores.view(), targets.view(), &pairs, 0.0).unwrap();
        let plain = mse(scores.view(), targets.view()).unwrap();
        assert_eq!(combined.value, plain.value);
        assert_eq!(combined.grad, plain.grad);
    }

    #[test]
    fn mse_sr_penalizes_finite_gaps_even_at_perfect_regression() {
        let targets = arr1(&[0.9, 0.5, 0.1]);
        let scores = targets.clone();
        let pairs = adjacent_pairs(targets.view());
        let out = mse_sr(scores.view(), targets.view(), &pairs, 1.0).unwrap();
        // mse is zero; each adjacent pair still pays log(1 + exp(-0.4)).
        let expected = softplus(-0.4);
        assert_abs_diff_eq!(out.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn adjacent_pairs_follow_target_order_and_skip_ties() {
        let targets = arr1(&[0.2, 0.9, 0.2, 0.5]);
        let pairs = adjacent_pairs(targets.view());
        // Descending order: 1 (0.9), 3 (0.5), 0 (0.2), 2 (0.2 tie by index).
        assert_eq!(pairs.pairs, vec![(1, 3), (3, 0)]);
    }

    #[test]
    fn listmle_single_element_is_zero() {
        let out = listmle(arr1(&[0.7]).view(), arr1(&[0.3]).view()).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grad[0], 0.0);
    }

    #[test]
    fn listmle_two_equal_scores_is_ln_two() {
        let out = listmle(arr1(&[0.4, 0.4]).view(), arr1(&[0.9, 0.1]).view()).unwrap();
        assert_abs_diff_eq!(out.value, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn listmle_three_element_oracle() {
        // Targets already descending, so the likelihood decomposes as
        // -(s0 - LSE(s0,s1,s2)) - (s1 - LSE(s1,s2)); recomputed locally.
        let scores = arr1(&[1.0, 0.5, 0.2]);
        let targets = arr1(&[0.9, 0.6, 0.3]);
        let lse3 = log_sum_exp(&[1.0, 0.5, 0.2]);
        let lse2 = log_sum_exp(&[0.5, 0.2]);
        let expected = -(1.0 - lse3) - (0.5 - lse2);
        let out = listmle(scores.view(), targets.view()).unwrap();
        assert_abs_diff_eq!(out.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn mape_matches_hand_values() {
        let out = mape(arr1(&[0.8]).view(), arr1(&[0.9]).view(), 1e-2).unwrap();
        assert_abs_diff_eq!(out.value, 1.0, epsilon = 1e-12);

        let same = arr1(&[0.4, 0.6]);
        let out = mape(same.view(), same.view(), 1e-2).unwrap();
        assert_eq!(out.value, 0.0);

        // Perfect target: the denominator clamps to epsilon.
        let out = mape(arr1(&[0.99]).view(), arr1(&[1.0]).view(), 1e-2).unwrap();
        assert!(out.value.is_finite());
        assert_abs_diff_eq!(out.value, 0.01 / 1e-2, epsilon = 1e-9);
    }

    #[test]
    fn weight_of_matches_stated_rules() {
        assert_eq!(weight_of(0.4, 1, 10, WeightType::Ranking, 10.0, 0.9), 1.0);
        assert_abs_diff_eq!(
            weight_of(0.4, 10, 10, WeightType::Ranking, 10.0, 0.9),
            0.1,
            epsilon = 1e-15
        );
        assert_eq!(weight_of(0.9, 3, 10, WeightType::ExpGt, 10.0, 0.9), 1.0);
        assert_eq!(weight_of(0.7, 2, 5, WeightType::Gt, 10.0, 0.9), 0.7);
        assert_eq!(weight_of(0.7, 2, 5, WeightType::None, 10.0, 0.9), 1.0);
    }

    #[test]
    fn exp_weighted_with_unit_weights_equals_mse() {
        let mut rng = rng_from_seed(6);
        let scores = rand_vec(&mut rng, 11, -1.0, 1.0);
        let targets = rand_vec(&mut rng, 11, 0.0, 1.0);
        let weighted =
            exp_weighted(scores.view(), targets.view(), 10.0, WeightType::None).unwrap();
        let plain = mse(scores.view(), targets.view()).unwrap();
        assert_eq!(weighted.value, plain.value);
        assert_eq!(weighted.grad, plain.grad);
    }

    #[test]
    fn exp_weighted_zero_target_alone_gets_unit_weight() {
        // Batch of one: y = 0 is also the batch max, so exp weighting is 1.
        let out = exp_weighted(arr1(&[0.5]).view(), arr1(&[0.0]).view(), 10.0, WeightType::ExpGt)
            .unwrap();
        assert_abs_diff_eq!(out.value, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn exp_weighted_matches_independent_recomputation() {
        let mut rng = rng_from_seed(12);
        let scores = rand_vec(&mut rng, 8, -1.0, 1.0);
        let targets = rand_vec(&mut rng, 8, 0.0, 1.0);
        let out = exp_weighted(scores.view(), targets.view(), 10.0, WeightType::ExpGt).unwrap();
        let y_max = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expected: f64 = scores
            .iter()
            .zip(&targets)
            .map(|(s, y)| (10.0 * (y - y_max)).exp() * (s - y) * (s - y))
            .sum::<f64>()
            / 8.0;
        assert_abs_diff_eq!(out.value, expected, epsilon = 1e-14);
    }

    #[test]
    fn warp_without_violations_is_zero() {
        // Scores widely separated in the correct order: no candidate ever
        // violates the margin.
        let scores = arr1(&[3.0, 2.0, 1.0, 0.0]);
        let targets = arr1(&[0.9, 0.7, 0.5, 0.3]);
        let out = warp(
            scores.view(),
            targets.view(),
            0.1,
            32,
            WeightType::None,
            10.0,
            &mut rng_from_seed(1),
        )
        .unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn warp_first_sample_violation_uses_full_harmonic_weight() {
        // One anchor above ten equal losers, all scores equal: the first
        // sampled candidate violates, so rho = (11-1)/1 = 10 and the anchor
        // contributes H_10 * margin / n.
        let mut targets = vec![0.0; 11];
        targets[0] = 1.0;
        let targets = Array1::from(targets);
        let scores = Array1::zeros(11);
        let out = warp(
            scores.view(),
            targets.view(),
            0.1,
            32,
            WeightType::None,
            10.0,
            &mut rng_from_seed(2),
        )
        .unwrap();
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert_abs_diff_eq!(h10, 2.9289682539682538, epsilon = 1e-15);
        assert_abs_diff_eq!(out.value, h10 * 0.1 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grad[0], -h10 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn warp_is_deterministic_in_seed() {
        let mut rng = rng_from_seed(8);
        let scores = rand_vec(&mut rng, 16, -0.2, 0.2);
        let targets = rand_vec(&mut rng, 16, 0.0, 1.0);
        let a = warp(scores.view(), targets.view(), 0.1, 32, WeightType::ExpGt, 10.0, &mut rng_from_seed(5))
            .unwrap();
        let b = warp(scores.view(), targets.view(), 0.1, 32, WeightType::ExpGt, 10.0, &mut rng_from_seed(5))
            .unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn pw_select_switches_after_warm_iters() {
        let schedule = PwSchedule {
            warm_loss: LossSpec::new(LossKind::HingeRank),
            main_loss: LossSpec::new(LossKind::Mape),
            warm_iters: 5,
        };
        assert_eq!(pw_select(&schedule, 3).kind, LossKind::HingeRank);
        assert_eq!(pw_select(&schedule, 5).kind, LossKind::HingeRank);
        assert_eq!(pw_select(&schedule, 6).kind, LossKind::Mape);

        let always_main = PwSchedule { warm_iters: 0, ..schedule };
        assert_eq!(pw_select(&always_main, 1).kind, LossKind::Mape);
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check("mse", 20, 0.0, &|s, t| mse(s, t).unwrap());
        fd_check("hinge_rank", 20, 1e-2, &|s, t| {
            let pairs = sample_pairs(t, &mut rng_from_seed(1), PairStrategy::All).unwrap();
            hinge_rank(s, &pairs, 0.1).unwrap()
        });
        fd_check("logistic_rank", 20, 0.0, &|s, t| {
            let pairs = sample_pairs(t, &mut rng_from_seed(1), PairStrategy::All).unwrap();
            logistic_rank(s, &pairs).unwrap()
        });
        fd_check("mse_sr", 20, 0.0, &|s, t| {
            let pairs = adjacent_pairs(t);
            mse_sr(s, t, &pairs, 1.0).unwrap()
        });
        fd_check("listmle", 20, 0.0, &|s, t| listmle(s, t).unwrap());
        fd_check("mape", 20, 1e-2, &|s, t| mape(s, t, 1e-2).unwrap());
        fd_check("exp_weighted", 20, 0.0, &|s, t| {
            exp_weighted(s, t, 10.0, WeightType::ExpGt).unwrap()
        });
        fd_check("warp", 20, 1e-2, &|s, t| {
            warp(s, t, 0.1, 32, WeightType::ExpGt, 10.0, &mut rng_from_seed(77)).unwrap()
        });
    }

    #[test]
    fn ranking_losses_are_shift_invariant_and_regression_losses_are_not() {
        let mut rng = rng_from_seed(21);
        let scores = rand_vec(&mut rng, 10, -0.5, 0.5);
        let targets = rand_vec(&mut rng, 10, 0.0, 1.0);
        let shifted = &scores + 0.37;
        let pairs = sample_pairs(targets.view(), &mut rng_from_seed(2), PairStrategy::All).unwrap();

        let invariant: Vec<(&str, f64, f64)> = vec![
            (
                "hinge_rank",
                hinge_rank(scores.view(), &pairs, 0.1).unwrap().value,
                hinge_rank(shifted.view(), &pairs, 0.1).unwrap().value,
            ),
            (
                "logistic_rank",
                logistic_rank(scores.view(), &pairs).unwrap().value,
                logistic_rank(shifted.view(), &pairs).unwrap().value,
            ),
            (
                "listmle",
                listmle(scores.view(), targets.view()).unwrap().value,
                listmle(shifted.view(), targets.view()).unwrap().value,
            ),
            (
                "warp",
                warp(scores.view(), targets.view(), 0.1, 32, WeightType::None, 10.0, &mut rng_from_seed(3))
                    .unwrap()
                    .value,
                warp(shifted.view(), targets.view(), 0.1, 32, WeightType::None, 10.0, &mut rng_from_seed(3))
                    .unwrap()
                    .value,
            ),
        ];
        for (name, a, b) in invariant {
            assert!((a - b).abs() <= 1e-9, "{name} not shift invariant: {a} vs {b}");
        }

        let not_invariant: Vec<(&str, f64, f64)> = vec![
            (
                "mse",
                mse(scores.view(), targets.view()).unwrap().value,
                mse(shifted.view(), targets.view()).unwrap().value,
            ),
            (
                "mape",
                mape(scores.view(), targets.view(), 1e-2).unwrap().value,
                mape(shifted.view(), targets.view(), 1e-2).unwrap().value,
            ),
            (
                "exp_weighted",
                exp_weighted(scores.view(), targets.view(), 10.0, WeightType::ExpGt).unwrap().value,
                exp_weighted(shifted.view(), targets.view(), 10.0, WeightType::ExpGt).unwrap().value,
            ),
        ];
        for (name, a, b) in not_invariant {
            assert!((a - b).abs() > 1e-9, "{name} unexpectedly shift invariant");
        }
    }

    #[test]
    fn order_based_losses_ignore_monotone_target_transforms() {
        let mut rng = rng_from_seed(31);
        let scores = rand_vec(&mut rng, 9, -0.5, 0.5);
        let targets = rand_vec(&mut rng, 9, 0.0, 1.0);
        // Strictly increasing on [0, 1], so the target order is unchanged.
        let transformed = targets.mapv(|y| 0.2 + 0.5 * y * y);

        let p1 = sample_pairs(targets.view(), &mut rng_from_seed(4), PairStrategy::All).unwrap();
        let p2 = sample_pairs(transformed.view(), &mut rng_from_seed(4), PairStrategy::All).unwrap();
        assert_eq!(p1, p2);

        assert_eq!(
            listmle(scores.view(), targets.view()).unwrap().value,
            listmle(scores.view(), transformed.view()).unwrap().value,
        );
        assert_eq!(
            hinge_rank(scores.view(), &p1, 0.1).unwrap().value,
            hinge_rank(scores.view(), &p2, 0.1).unwrap().value,
        );
        assert_eq!(
            logistic_rank(scores.view(), &p1).unwrap().value,
            logistic_rank(scores.view(), &p2).unwrap().value,
        );
    }

    #[test]
    fn pairwise_gradients_sum_to_zero() {
        let mut rng = rng_from_seed(41);
        let scores = rand_vec(&mut rng, 14, -0.3, 0.3);
        let targets = rand_vec(&mut rng, 14, 0.0, 1.0);
        let pairs = sample_pairs(targets.view(), &mut rng_from_seed(5), PairStrategy::All).unwrap();
        for (name, out) in [
            ("hinge_rank", hinge_rank(scores.view(), &pairs, 0.1).unwrap()),
            ("logistic_rank", logistic_rank(scores.view(), &pairs).unwrap()),
            ("listmle", listmle(scores.view(), targets.view()).unwrap()),
            (
                "warp",
                warp(scores.view(), targets.view(), 0.1, 32, WeightType::ExpGt, 10.0, &mut rng_from_seed(6))
                    .unwrap(),
            ),
        ] {
            assert!(out.grad.sum().abs() < 1e-12, "{name} grad sums to {}", out.grad.sum());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pw_select_has_exactly_one_switch_point(warm in 0usize..20) {
            let schedule = PwSchedule {
                warm_loss: LossSpec::new(LossKind::Mse),
                main_loss: LossSpec::new(LossKind::Warp),
                warm_iters: warm,
            };
            let mut switches = 0;
            let mut prev = pw_select(&schedule, 1).kind;
            for iter in 2..40 {
                let cur = pw_select(&schedule, iter).kind;
                if cur != prev {
                    switches += 1;
                    prop_assert_eq!(iter, warm + 1);
                }
                prev = cur;
            }
            prop_assert_eq!(switches, if warm == 0 { 0 } else { 1 });
        }

        #[test]
        fn evaluate_loss_is_finite_on_random_batches(
            seed in any::<u64>(),
            n in 2usize..20,
        ) {
            let mut rng = rng_from_seed(seed);
            let scores = rand_vec(&mut rng, n, -2.0, 2.0);
            let targets = rand_vec(&mut rng, n, 0.0, 1.0);
            for kind in ALL_LOSS_KINDS {
                let spec = LossSpec::new(kind);
                let out = evaluate_loss(&spec, scores.view(), targets.view(), &mut rng_from_seed(seed ^ 1))
                    .unwrap();
                prop_assert!(out.value.is_finite());
                prop_assert!(out.value >= 0.0);
                prop_assert!(out.grad.iter().all(|g| g.is_finite()));
            }
        }
    }
}
