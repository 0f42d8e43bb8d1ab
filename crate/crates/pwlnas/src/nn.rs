//! Performance predictors: a graph-convolution backbone and an MLP backbone
//! with hand-derived reverse-mode gradients, an adaptive-moment optimizer,
//! checkpointing, and a finite-difference gradient checker.
//!
//! Both backbones map one encoded architecture to one unbounded real score.
//! The GCN applies `H' = ReLU(A_hat * H * W + b)` per layer on the one-hot
//! node features, mean-pools over nodes, and finishes with a linear readout.
//! The MLP applies `h' = ReLU(h * W + b)` on the flat encoding zero-padded to
//! the space's maximum node count, with a linear final layer.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{EncodedArch, SpaceSpec};
use crate::losses::{evaluate_loss, LossError, LossKind, LossSpec};
use crate::seed::{derive_seed, rng_from_seed, tag_str, Rng};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no batch yielded a usable loss (all targets tied?)")]
    NoUsableBatches,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("unsupported checkpoint version {got}")]
    Version { got: u32 },
}

/// Predictor architecture family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Mlp,
    #[default]
    Gcn,
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backbone::Mlp => write!(f, "mlp"),
            Backbone::Gcn => write!(f, "gcn"),
        }
    }
}

impl std::str::FromStr for Backbone {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Backbone::Mlp),
            "gcn" => Ok(Backbone::Gcn),
            other => Err(format!("unknown backbone {other:?} (expected mlp or gcn)")),
        }
    }
}

/// One dense layer: weights stored `(fan_in, fan_out)` so a row vector of
/// activations multiplies from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LayerParams {
    fn zeros_like(other: &LayerParams) -> Self {
        Self { w: Array2::zeros(other.w.raw_dim()), b: Array1::zeros(other.b.raw_dim()) }
    }
}

/// Parameter gradients, shaped exactly like the predictor's layers.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

/// A scoring network over one search space. Layers are the hidden stack
/// (graph convolutions for the GCN, dense layers for the MLP) followed by
/// one linear output layer of width 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    backbone: Backbone,
    space: SpaceSpec,
    hidden_dims: Vec<usize>,
    layers: Vec<LayerParams>,
}

fn xavier_layer(fan_in: usize, fan_out: usize, rng: &mut Rng) -> LayerParams {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut w = Array2::zeros((fan_in, fan_out));
    for i in 0..fan_in {
        for j in 0..fan_out {
            w[(i, j)] = rng.gen_range(-bound..bound);
        }
    }
    LayerParams { w, b: Array1::zeros(fan_out) }
}

/// Hidden widths of the default predictors.
pub fn default_hidden_dims(backbone: Backbone) -> Vec<usize> {
    match backbone {
        Backbone::Gcn => vec![64, 64, 64],
        Backbone::Mlp => vec![64, 64],
    }
}

/// Initialize a predictor with uniform Xavier weights and zero biases,
/// deterministically in the seed.
pub fn init_predictor(
    backbone: Backbone,
    space: &SpaceSpec,
    hidden_dims: &[usize],
    seed: u64,
) -> Result<Predictor, NnError> {
    if hidden_dims.is_empty() {
        return Err(NnError::Shape("hidden_dims must be non-empty".into()));
    }
    if hidden_dims.contains(&0) {
        return Err(NnError::Shape("hidden_dims must be positive".into()));
    }
    let input_dim = match backbone {
        Backbone::Gcn => space.op_vocabulary.len(),
        Backbone::Mlp => space.flat_len(),
    };
    let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden_dims);
    dims.push(1);
    let mut rng = rng_from_seed(derive_seed(seed, &[tag_str("init"), tag_str(&backbone.to_string())]));
    let layers = dims.windows(2).map(|d| xavier_layer(d[0], d[1], &mut rng)).collect();
    Ok(Predictor { backbone, space: space.clone(), hidden_dims: hidden_dims.to_vec(), layers })
}

/// Zero-pad an encoding's flat vector into the space-level layout: a
/// `max_nodes x vocab` feature block followed by a `max_nodes x max_nodes`
/// adjacency block, with absent nodes all zero.
fn padded_flat(enc: &EncodedArch, space: &SpaceSpec) -> Result<Array1<f64>, NnError> {
    let n = enc.features.nrows();
    let v = enc.features.ncols();
    if v != space.op_vocabulary.len() {
        return Err(NnError::Shape(format!(
            "encoding has {v} feature columns, space vocabulary has {}",
            space.op_vocabulary.len()
        )));
    }
    let m = space.max_nodes;
    if n > m {
        return Err(NnError::Shape(format!("encoding has {n} nodes, space allows {m}")));
    }
    let mut out = Array1::zeros(space.flat_len());
    for node in 0..n {
        for idx in 0..v {
            out[node * v + idx] = enc.features[(node, idx)];
        }
    }
    // Raw adjacency bits live after the feature block of the flat vector.
    for i in 0..n {
        for j in 0..n {
            out[m * v + i * m + j] = enc.flat[n * v + i * n + j];
        }
    }
    Ok(out)
}

/// Per-example forward intermediates kept for the backward pass.
enum Cache {
    Mlp {
        /// Input to each layer; `inputs[l]` feeds `layers[l]`.
        inputs: Vec<Array1<f64>>,
        /// Pre-activations of the hidden layers.
        pre: Vec<Array1<f64>>,
    },
    Gcn {
        /// Node features entering each conv layer; `hs[l]` feeds conv `l`.
        hs: Vec<Array2<f64>>,
        /// Pre-activations of each conv layer.
        pre: Vec<Array2<f64>>,
        /// `A_hat * hs[l]`, reused by the weight gradient.
        ah: Vec<Array2<f64>>,
        norm_adjacency: Array2<f64>,
        pooled: Array1<f64>,
    },
}

impl Predictor {
    pub fn backbone(&self) -> Backbone {
        self.backbone
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn get_param(&self, flat: usize) -> f64 {
        let (layer, offset) = self.locate(flat);
        let l = &self.layers[layer];
        if offset < l.w.len() {
            l.w.as_slice().expect("contiguous")[offset]
        } else {
            l.b[offset - l.w.len()]
        }
    }

    fn set_param(&mut self, flat: usize, value: f64) {
        let (layer, offset) = self.locate(flat);
        let l = &mut self.layers[layer];
        if offset < l.w.len() {
            l.w.as_slice_mut().expect("contiguous")[offset] = value;
        } else {
            let w_len = l.w.len();
            l.b[offset - w_len] = value;
        }
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (idx, l) in self.layers.iter().enumerate() {
            let size = l.w.len() + l.b.len();
            if flat < size {
                return (idx, flat);
            }
            flat -= size;
        }
        panic!("parameter index out of range");
    }

    fn forward_cached(&self, enc: &EncodedArch) -> Result<(f64, Cache), NnError> {
        let hidden = self.layers.len() - 1;
        match self.backbone {
            Backbone::Mlp => {
                let mut x = padded_flat(enc, &self.space)?;
                let mut inputs = Vec::with_capacity(hidden + 1);
                let mut pre = Vec::with_capacity(hidden);
                for l in &self.layers[..hidden] {
                    inputs.push(x.clone());
                    let z = x.dot(&l.w) + &l.b;
                    pre.push(z.clone());
                    x = z.mapv(|v| v.max(0.0));
                }
                inputs.push(x.clone());
                let out = &self.layers[hidden];
                let score = x.dot(&out.w.column(0)) + out.b[0];
                Ok((score, Cache::Mlp { inputs, pre }))
            }
            Backbone::Gcn => {
                if enc.features.ncols() != self.space.op_vocabulary.len() {
                    return Err(NnError::Shape(format!(
                        "encoding has {} feature columns, space vocabulary has {}",
                        enc.features.ncols(),
                        self.space.op_vocabulary.len()
                    )));
                }
                let mut h = enc.features.clone();
                let mut hs = Vec::with_capacity(hidden);
                let mut pre = Vec::with_capacity(hidden);
                let mut ah = Vec::with_capacity(hidden);
                for l in &self.layers[..hidden] {
                    hs.push(h.clone());
                    let a_h = enc.norm_adjacency.dot(&h);
                    let z = a_h.dot(&l.w) + &l.b;
                    ah.push(a_h);
                    pre.push(z.clone());
                    h = z.mapv(|v| v.max(0.0));
                }
                let pooled = h.mean_axis(Axis(0)).expect("at least one node");
                let out = &self.layers[hidden];
                let score = pooled.dot(&out.w.column(0)) + out.b[0];
                Ok((
                    score,
                    Cache::Gcn { hs, pre, ah, norm_adjacency: enc.norm_adjacency.clone(), pooled },
                ))
            }
        }
    }

    /// Smallest |pre-activation| across every ReLU in the batch; the
    /// gradient checker treats points near 0 as non-differentiable.
    fn relu_kink_gap(&self, batch: &[EncodedArch]) -> Result<f64, NnError> {
        let mut gap = f64::INFINITY;
        for enc in batch {
            let (_, cache) = self.forward_cached(enc)?;
            match cache {
                Cache::Mlp { pre, .. } => {
                    for z in &pre {
                        for &v in z {
                            gap = gap.min(v.abs());
                        }
                    }
                }
                Cache::Gcn { pre, .. } => {
                    for z in &pre {
                        for &v in z {
                            gap = gap.min(v.abs());
                        }
                    }
                }
            }
        }
        Ok(gap)
    }
}

/// Score a batch. Examples never interact, so scores are independent of the
/// rest of the batch.
pub fn forward(p: &Predictor, batch: &[EncodedArch]) -> Result<Array1<f64>, NnError> {
    let mut scores = Array1::zeros(batch.len());
    for (i, enc) in batch.iter().enumerate() {
        scores[i] = p.forward_cached(enc)?.0;
    }
    Ok(scores)
}

fn relu_mask_vec(dz: &mut Array1<f64>, pre: &Array1<f64>) {
    for (d, &z) in dz.iter_mut().zip(pre) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }
}

fn relu_mask_mat(dz: &mut Array2<f64>, pre: &Array2<f64>) {
    for (d, &z) in dz.iter_mut().zip(pre) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }
}

fn outer_into(acc: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for i in 0..col.len() {
        if col[i] == 0.0 {
            continue;
        }
        for j in 0..row.len() {
            acc[(i, j)] += col[i] * row[j];
        }
    }
}

/// Exact reverse-mode gradients of `sum_i d_scores[i] * score_i` with
/// respect to every parameter.
pub fn backward(
    p: &Predictor,
    batch: &[EncodedArch],
    d_scores: &Array1<f64>,
) -> Result<ParamGrads, NnError> {
    if d_scores.len() != batch.len() {
        return Err(NnError::Shape(format!(
            "{} score gradients for a batch of {}",
            d_scores.len(),
            batch.len()
        )));
    }
    let mut grads: Vec<LayerParams> = p.layers.iter().map(LayerParams::zeros_like).collect();
    let hidden = p.layers.len() - 1;
    for (enc, &ds) in batch.iter().zip(d_scores) {
        if ds == 0.0 {
            continue;
        }
        let (_, cache) = p.forward_cached(enc)?;
        match cache {
            Cache::Mlp { inputs, pre } => {
                let out = &p.layers[hidden];
                let h_last = &inputs[hidden];
                // Output layer: d w = h^T * ds, d b = ds, d h = ds * w.
                for i in 0..h_last.len() {
                    grads[hidden].w[(i, 0)] += h_last[i] * ds;
                }
                grads[hidden].b[0] += ds;
                let mut dx = out.w.column(0).to_owned() * ds;
                for l in (0..hidden).rev() {
                    let mut dz = dx;
                    relu_mask_vec(&mut dz, &pre[l]);
                    outer_into(&mut grads[l].w, &inputs[l], &dz);
                    grads[l].b += &dz;
                    dx = p.layers[l].w.dot(&dz);
                }
            }
            Cache::Gcn { hs, pre, ah, norm_adjacency, pooled } => {
                let out = &p.layers[hidden];
                for i in 0..pooled.len() {
                    grads[hidden].w[(i, 0)] += pooled[i] * ds;
                }
                grads[hidden].b[0] += ds;
                // Mean pool spreads the readout gradient evenly over nodes.
                let n = hs[0].nrows();
                let dpool = out.w.column(0).to_owned() * ds;
                let mut dh = Array2::zeros((n, dpool.len()));
                for mut row in dh.rows_mut() {
                    row.assign(&(&dpool / n as f64));
                }
                for l in (0..hidden).rev() {
                    let mut dz = dh;
                    relu_mask_mat(&mut dz, &pre[l]);
                    grads[l].w = &grads[l].w + &ah[l].t().dot(&dz);
                    grads[l].b += &dz.sum_axis(Axis(0));
                    dh = norm_adjacency.t().dot(&dz).dot(&p.layers[l].w.t());
                }
            }
        }
    }
    Ok(ParamGrads { layers: grads })
}

fn default_learning_rate() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    300
}
fn default_batch_size() -> usize {
    64
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_weight_decay() -> f64 {
    1e-5
}

/// Training hyperparameters for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            weight_decay: default_weight_decay(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Default config adjusted per loss: the listwise loss prefers a larger
    /// learning rate.
    pub fn for_loss(kind: LossKind) -> Self {
        let mut cfg = Self::default();
        if kind == LossKind::Listmle {
            cfg.learning_rate = 4e-3;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate >= 0.0) {
            return Err(format!("learning_rate {} must be nonnegative", self.learning_rate));
        }
        if self.epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("{name} {v} must be in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(format!("adam_eps {} must be positive", self.adam_eps));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(format!("weight_decay {} must be nonnegative", self.weight_decay));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone)]
pub struct TrainStats {
    /// Mean loss of each epoch over batches that produced a loss; NaN for an
    /// epoch in which every batch was skipped.
    pub epoch_losses: Vec<f64>,
    /// Batches skipped because the loss had no strict pairs to rank.
    pub skipped_batches: usize,
}

impl TrainStats {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

struct Adam {
    m: Vec<LayerParams>,
    v: Vec<LayerParams>,
    t: usize,
}

impl Adam {
    fn new(layers: &[LayerParams]) -> Self {
        Self {
            m: layers.iter().map(LayerParams::zeros_like).collect(),
            v: layers.iter().map(LayerParams::zeros_like).collect(),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut Predictor, grads: &ParamGrads, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (l, layer) in p.layers.iter_mut().enumerate() {
            let update = |theta: &mut f64, g_raw: f64, m: &mut f64, v: &mut f64| {
                let g = g_raw + cfg.weight_decay * *theta;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            };
            for ((theta, &g), (m, v)) in layer
                .w
                .iter_mut()
                .zip(grads.layers[l].w.iter())
                .zip(self.m[l].w.iter_mut().zip(self.v[l].w.iter_mut()))
            {
                update(theta, g, m, v);
            }
            for ((theta, &g), (m, v)) in layer
                .b
                .iter_mut()
                .zip(grads.layers[l].b.iter())
                .zip(self.m[l].b.iter_mut().zip(self.v[l].b.iter_mut()))
            {
                update(theta, g, m, v);
            }
        }
    }
}

/// Train in place with mini-batch adaptive-moment updates. Deterministic in
/// `cfg.seed`; batches whose targets admit no strict pairs are skipped for
/// the pair-based losses and counted in the stats.
pub fn fit(
    p: &mut Predictor,
    train: &[(EncodedArch, f64)],
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainStats, NnError> {
    assert!(!train.is_empty(), "training set must be non-empty");
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[tag_str("fit")]));
    let mut adam = Adam::new(&p.layers);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut skipped_batches = 0usize;
    let mut any_usable = false;
    let mut indices: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_count = 0usize;
        for (batch_idx, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let encs: Vec<EncodedArch> = chunk.iter().map(|&i| train[i].0.clone()).collect();
            let targets = Array1::from_iter(chunk.iter().map(|&i| train[i].1));
            let scores = forward(p, &encs)?;
            let out = match evaluate_loss(loss, scores.view(), targets.view(), &mut rng) {
                Ok(out) => out,
                Err(LossError::NoStrictPairs | LossError::EmptyPairs) => {
                    skipped_batches += 1;
                    continue;
                }
                Err(e @ LossError::LengthMismatch { .. }) => {
                    return Err(NnError::Shape(e.to_string()))
                }
            };
            if !out.value.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteLoss { epoch: epoch + 1, batch: batch_idx + 1 });
            }
            let grads = backward(p, &encs, &out.grad)?;
            adam.step(p, &grads, cfg);
            epoch_sum += out.value * chunk.len() as f64;
            epoch_count += chunk.len();
            any_usable = true;
        }
        epoch_losses.push(if epoch_count > 0 { epoch_sum / epoch_count as f64 } else { f64::NAN });
    }
    if !any_usable {
        return Err(NnError::NoUsableBatches);
    }
    Ok(TrainStats { epoch_losses, skipped_batches })
}

/// Sample `n` distinct valid architectures with uniform random targets in
/// (0.05, 0.95): the standard fixture for gradient checks.
pub fn random_batch(space: &SpaceSpec, n: usize, seed: u64) -> Vec<(EncodedArch, f64)> {
    use rand::Rng as _;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    while out.len() < n {
        let arch = crate::arch::sample_valid(space, &mut rng);
        if !seen.insert(crate::arch::canonical_key(&arch)) {
            continue;
        }
        let target = rng.gen_range(0.05..0.95);
        out.push((crate::arch::encode(&arch, space), target));
    }
    out
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error over the checked parameters (0 when none checked).
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because the evaluation point sits too close to a
    /// hinge or ReLU kink for finite differences to be meaningful.
    pub skipped: usize,
    /// Smallest kink distance observed (loss kinks and ReLU pre-activations).
    pub kink_gap: f64,
}

const GRAD_CHECK_LOSS_SEED: u64 = 0x6AC;
const GRAD_CHECK_PICK_SEED: u64 = 0x91C;

fn loss_at(
    p: &Predictor,
    loss: &LossSpec,
    batch: &[EncodedArch],
    targets: &Array1<f64>,
) -> Result<crate::losses::LossOutput, NnError> {
    let scores = forward(p, batch)?;
    // The same loss seed at every evaluation point keeps sampled losses
    // (pair subsets, WARP trials) on the same sample path.
    evaluate_loss(loss, scores.view(), targets.view(), &mut rng_from_seed(GRAD_CHECK_LOSS_SEED))
        .map_err(|e| NnError::Shape(e.to_string()))
}

/// Compare analytic parameter gradients of the total loss against central
/// finite differences on at least 50 randomly chosen parameters (all of them
/// for small nets). If the evaluation point lies within `100 * eps` of a
/// loss kink or a ReLU pre-activation sign change, the comparisons are
/// skipped and reported as such rather than producing false mismatches.
pub fn grad_check(
    p: &Predictor,
    loss: &LossSpec,
    sample_batch: &[(EncodedArch, f64)],
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    grad_check_faulted(p, loss, sample_batch, eps, 0.0)
}

/// [`grad_check`] with `fault` added to every analytic gradient before the
/// comparison. A nonzero fault simulates a wrong-gradient build; harnesses
/// use it to prove they would actually catch one.
pub fn grad_check_faulted(
    p: &Predictor,
    loss: &LossSpec,
    sample_batch: &[(EncodedArch, f64)],
    eps: f64,
    fault: f64,
) -> Result<GradCheckReport, NnError> {
    assert!(eps > 0.0 && eps <= 1e-2, "eps must be in (0, 1e-2]");
    let batch: Vec<EncodedArch> = sample_batch.iter().map(|(e, _)| e.clone()).collect();
    let targets = Array1::from_iter(sample_batch.iter().map(|(_, t)| *t));

    let out = loss_at(p, loss, &batch, &targets)?;
    let kink_gap = out.kink_gap.min(p.relu_kink_gap(&batch)?);
    let total = p.num_params();
    let want = 50.max(total / 10).min(total);
    let mut picks: Vec<usize> = (0..total).collect();
    picks.shuffle(&mut rng_from_seed(GRAD_CHECK_PICK_SEED));
    picks.truncate(want);

    if kink_gap < 100.0 * eps {
        return Ok(GradCheckReport { max_rel_error: 0.0, checked: 0, skipped: want, kink_gap });
    }

    let analytic = backward(p, &batch, &out.grad)?;
    let flat_analytic = |flat: usize| -> f64 {
        let (layer, offset) = p.locate(flat);
        let l = &analytic.layers[layer];
        if offset < l.w.len() {
            l.w.as_slice().expect("contiguous")[offset]
        } else {
            l.b[offset - l.w.len()]
        }
    };

    let mut probe = p.clone();
    let mut max_rel_error = 0.0f64;
    for &k in &picks {
        let original = probe.get_param(k);
        probe.set_param(k, original + eps);
        let plus = loss_at(&probe, loss, &batch, &targets)?.value;
        probe.set_param(k, original - eps);
        let minus = loss_at(&probe, loss, &batch, &targets)?.value;
        probe.set_param(k, original);
        let numeric = (plus - minus) / (2.0 * eps);
        let a = flat_analytic(k) + fault;
        // Floor the denominator at 1e-6: below that the difference quotient
        // is dominated by cancellation noise (~|loss| * 1e-16 / eps), so a
        // ratio against the raw magnitude would measure noise, not gradient
        // quality.
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        max_rel_error = max_rel_error.max((a - numeric).abs() / denom);
    }
    Ok(GradCheckReport { max_rel_error, checked: picks.len(), skipped: 0, kink_gap })
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    backbone: Backbone,
    space: SpaceSpec,
    hidden_dims: Vec<usize>,
    layers: Vec<CheckpointLayer>,
}

const CHECKPOINT_VERSION: u32 = 1;

/// Write a versioned JSON checkpoint whose reload reproduces forward outputs
/// bit-exactly.
pub fn save_checkpoint(p: &Predictor, path: &Path) -> Result<(), NnError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        backbone: p.backbone,
        space: p.space.clone(),
        hidden_dims: p.hidden_dims.clone(),
        layers: p
            .layers
            .iter()
            .map(|l| CheckpointLayer {
                rows: l.w.nrows(),
                cols: l.w.ncols(),
                w: l.w.iter().copied().collect(),
                b: l.b.to_vec(),
            })
            .collect(),
    };
    let body = serde_json::to_string(&file).expect("checkpoint serializes");
    std::fs::write(path, body).map_err(|source| NnError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Predictor, NnError> {
    let body = std::fs::read_to_string(path)
        .map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
    let file: CheckpointFile =
        serde_json::from_str(&body).map_err(|e| NnError::Parse(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(NnError::Version { got: file.version });
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for cl in file.layers {
        if cl.w.len() != cl.rows * cl.cols {
            return Err(NnError::Parse(format!(
                "layer data has {} weights for a {}x{} matrix",
                cl.w.len(),
                cl.rows,
                cl.cols
            )));
        }
        let w = Array2::from_shape_vec((cl.rows, cl.cols), cl.w)
            .map_err(|e| NnError::Parse(e.to_string()))?;
        layers.push(LayerParams { w, b: Array1::from(cl.b) });
    }
    Ok(Predictor {
        backbone: file.backbone,
        space: file.space,
        hidden_dims: file.hidden_dims,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{encode, sample_valid, Architecture, EdgeRule};
    use crate::losses::ALL_LOSS_KINDS;
    use approx::assert_abs_diff_eq;

    fn space() -> SpaceSpec {
        SpaceSpec::with_generated_vocab(5, 4, EdgeRule::DenseDag)
    }

    fn sample_batch(space: &SpaceSpec, n: usize, seed: u64) -> Vec<(EncodedArch, f64)> {
        random_batch(space, n, seed)
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let sp = space();
        let a = init_predictor(Backbone::Mlp, &sp, &[64, 64], 5).unwrap();
        let b = init_predictor(Backbone::Mlp, &sp, &[64, 64], 5).unwrap();
        assert_eq!(a, b);
        let l = sp.flat_len();
        let shapes: Vec<(usize, usize)> = a.layers().iter().map(|l| l.w.dim()).collect();
        assert_eq!(shapes, vec![(l, 64), (64, 64), (64, 1)]);
        assert!(a.layers().iter().all(|l| l.b.iter().all(|&x| x == 0.0)));

        let g = init_predictor(Backbone::Gcn, &sp, &[64, 64, 64], 5).unwrap();
        assert_eq!(g.layers().len(), 4); // three convolutions plus readout
        assert_eq!(g.layers()[0].w.dim(), (sp.op_vocabulary.len(), 64));
        assert_eq!(g.layers()[3].w.dim(), (64, 1));
    }

    #[test]
    fn init_weights_respect_xavier_bound() {
        let sp = space();
        let p = init_predictor(Backbone::Gcn, &sp, &[8, 8], 3).unwrap();
        for l in p.layers() {
            let bound = (6.0 / (l.w.nrows() + l.w.ncols()) as f64).sqrt();
            assert!(l.w.iter().all(|&w| w.abs() < bound));
        }
    }

    #[test]
    fn init_rejects_empty_hidden_dims() {
        assert!(matches!(
            init_predictor(Backbone::Mlp, &space(), &[], 0),
            Err(NnError::Shape(_))
        ));
    }

    #[test]
    fn zeroed_output_layer_scores_zero() {
        let sp = space();
        let mut p = init_predictor(Backbone::Gcn, &sp, &[16, 16], 7).unwrap();
        let last = p.layers.len() - 1;
        p.layers[last].w.fill(0.0);
        p.layers[last].b.fill(0.0);
        let batch: Vec<EncodedArch> = sample_batch(&sp, 4, 1).into_iter().map(|(e, _)| e).collect();
        let scores = forward(&p, &batch).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn scores_are_independent_of_batch_composition() {
        let sp = space();
        let p = init_predictor(Backbone::Mlp, &sp, &[32, 32], 9).unwrap();
        let batch: Vec<EncodedArch> = sample_batch(&sp, 6, 2).into_iter().map(|(e, _)| e).collect();
        let all = forward(&p, &batch).unwrap();
        let single = forward(&p, &batch[2..3]).unwrap();
        assert_eq!(all[2].to_bits(), single[0].to_bits());

        // Permuting the batch permutes the scores identically.
        let permuted: Vec<EncodedArch> = vec![
            batch[3].clone(),
            batch[0].clone(),
            batch[5].clone(),
            batch[1].clone(),
            batch[4].clone(),
            batch[2].clone(),
        ];
        let p_scores = forward(&p, &permuted).unwrap();
        for (orig, perm) in [(3usize, 0usize), (0, 1), (5, 2), (1, 3), (4, 4), (2, 5)] {
            assert_eq!(all[orig].to_bits(), p_scores[perm].to_bits());
        }
    }

    #[test]
    fn gcn_forward_matches_straight_line_reimplementation() {
        let sp = space();
        let p = init_predictor(Backbone::Gcn, &sp, &[6, 5], 11).unwrap();
        let arch = sample_valid(&sp, &mut rng_from_seed(3));
        let enc = encode(&arch, &sp);
        let got = forward(&p, std::slice::from_ref(&enc)).unwrap()[0];

        // Independent scalar-loop evaluation of the same layer rules.
        let n = enc.features.nrows();
        let mut h: Vec<Vec<f64>> =
            (0..n).map(|i| enc.features.row(i).iter().copied().collect()).collect();
        for l in &p.layers()[..p.layers().len() - 1] {
            let d_in = l.w.nrows();
            let d_out = l.w.ncols();
            let mut ah = vec![vec![0.0; d_in]; n];
            for i in 0..n {
                for k in 0..n {
                    for c in 0..d_in {
                        ah[i][c] += enc.norm_adjacency[(i, k)] * h[k][c];
                    }
                }
            }
            let mut next = vec![vec![0.0; d_out]; n];
            for i in 0..n {
                for j in 0..d_out {
                    let mut z = l.b[j];
                    for c in 0..d_in {
                        z += ah[i][c] * l.w[(c, j)];
                    }
                    next[i][j] = z.max(0.0);
                }
            }
            h = next;
        }
        let width = h[0].len();
        let mut pooled = vec![0.0; width];
        for row in &h {
            for (c, &v) in row.iter().enumerate() {
                pooled[c] += v / n as f64;
            }
        }
        let out = &p.layers()[p.layers().len() - 1];
        let mut expected = out.b[0];
        for c in 0..width {
            expected += pooled[c] * out.w[(c, 0)];
        }
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn mlp_pads_smaller_architectures() {
        // A 3-node chain inside a 5-node space must still score, via
        // zero-padding to the space's flat layout.
        let sp = space();
        let p = init_predictor(Backbone::Mlp, &sp, &[16], 13).unwrap();
        let arch = Architecture::chain(vec!["op0".into(), "op1".into(), "op2".into()]);
        let enc = encode(&arch, &sp);
        let score = forward(&p, std::slice::from_ref(&enc)).unwrap()[0];
        assert!(score.is_finite());
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let sp = space();
        let p = init_predictor(Backbone::Gcn, &sp, &[8, 8], 17).unwrap();
        let batch: Vec<EncodedArch> = sample_batch(&sp, 3, 4).into_iter().map(|(e, _)| e).collect();
        let grads = backward(&p, &batch, &Array1::zeros(3)).unwrap();
        for l in grads.layers {
            assert!(l.w.iter().all(|&g| g == 0.0));
            assert!(l.b.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn output_layer_gradient_is_input_outer_product() {
        // The final layer is linear, so its weight gradient must equal the
        // layer input scaled by the upstream score gradient.
        let sp = space();
        let p = init_predictor(Backbone::Mlp, &sp, &[12], 19).unwrap();
        let batch: Vec<EncodedArch> = sample_batch(&sp, 1, 5).into_iter().map(|(e, _)| e).collect();
        let (_, cache) = p.forward_cached(&batch[0]).unwrap();
        let h_last = match cache {
            Cache::Mlp { inputs, .. } => inputs.last().unwrap().clone(),
            _ => unreachable!(),
        };
        let ds = 0.7;
        let grads = backward(&p, &batch, &Array1::from(vec![ds])).unwrap();
        let out_grad = &grads.layers[1];
        for i in 0..h_last.len() {
            assert_abs_diff_eq!(out_grad.w[(i, 0)], h_last[i] * ds, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(out_grad.b[0], ds, epsilon = 1e-14);
    }

    #[test]
    fn grad_check_passes_for_every_loss_and_backbone() {
        let sp = space();
        for backbone in [Backbone::Mlp, Backbone::Gcn] {
            for kind in ALL_LOSS_KINDS {
                for restart in 0..2u64 {
                    let p = init_predictor(
                        backbone,
                        &sp,
                        &default_hidden_dims(backbone),
                        90 + restart,
                    )
                    .unwrap();
                    let batch = sample_batch(&sp, 8, 100 + restart);
                    let spec = LossSpec::new(kind);
                    let report = grad_check(&p, &spec, &batch, 1e-5).unwrap();
                    if report.checked > 0 {
                        assert!(
                            report.max_rel_error <= 1e-4,
                            "{backbone} {kind} restart {restart}: rel err {}",
                            report.max_rel_error
                        );
                    } else {
                        assert!(report.skipped > 0);
                    }
                }
            }
        }
    }

    #[test]
    fn grad_check_skips_near_kinks() {
        // A large eps inflates the kink threshold past the hinge margin, so
        // every comparison must be skipped rather than reported as failing.
        let sp = space();
        let p = init_predictor(Backbone::Mlp, &sp, &[16, 16], 23).unwrap();
        let batch = sample_batch(&sp, 6, 7);
        let spec = LossSpec::new(LossKind::HingeRank);
        let report = grad_check(&p, &spec, &batch, 1e-2).unwrap();
        assert_eq!(report.checked, 0);
        assert!(report.skipped >= 50);
    }

    #[test]
    fn fit_memorizes_a_single_sample() {
        let sp = space();
        let mut p = init_predictor(Backbone::Mlp, &sp, &[32, 32], 29).unwrap();
        let train = sample_batch(&sp, 1, 8);
        let cfg = TrainConfig {
            epochs: 2000,
            batch_size: 1,
            seed: 1,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let stats = fit(&mut p, &train, &LossSpec::new(LossKind::Mse), &cfg).unwrap();
        assert!(
            stats.final_loss() <= 1e-4,
            "memorization stalled at loss {}",
            stats.final_loss()
        );
    }

    #[test]
    fn fit_with_zero_learning_rate_keeps_parameters() {
        let sp = space();
        let mut p = init_predictor(Backbone::Gcn, &sp, &[8, 8], 31).unwrap();
        let before = p.clone();
        let train = sample_batch(&sp, 10, 9);
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, seed: 2, ..TrainConfig::default() };
        fit(&mut p, &train, &LossSpec::new(LossKind::Mse), &cfg).unwrap();
        for (a, b) in p.layers().iter().zip(before.layers()) {
            assert!(a.w.iter().zip(b.w.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.b.iter().zip(b.b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn fit_is_deterministic_in_seed() {
        let sp = space();
        let train = sample_batch(&sp, 20, 10);
        let cfg = TrainConfig { epochs: 5, seed: 3, ..TrainConfig::default() };
        let run = || {
            let mut p = init_predictor(Backbone::Gcn, &sp, &[16, 16], 37).unwrap();
            fit(&mut p, &train, &LossSpec::new(LossKind::HingeRank), &cfg).unwrap();
            p
        };
        let a = run();
        let b = run();
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            assert!(la.w.iter().zip(lb.w.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn fit_rejects_all_tied_targets_for_ranking_losses() {
        let sp = space();
        let mut p = init_predictor(Backbone::Mlp, &sp, &[8], 41).unwrap();
        let mut train = sample_batch(&sp, 6, 11);
        for item in &mut train {
            item.1 = 0.5;
        }
        let cfg = TrainConfig { epochs: 2, seed: 4, ..TrainConfig::default() };
        match fit(&mut p, &train, &LossSpec::new(LossKind::HingeRank), &cfg) {
            Err(NnError::NoUsableBatches) => {}
            other => panic!("expected NoUsableBatches, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trips_forward_outputs_bit_exactly() {
        let sp = space();
        let mut p = init_predictor(Backbone::Gcn, &sp, &[24, 24], 43).unwrap();
        let train = sample_batch(&sp, 12, 12);
        let cfg = TrainConfig { epochs: 3, seed: 5, ..TrainConfig::default() };
        fit(&mut p, &train, &LossSpec::new(LossKind::Mse), &cfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictor.json");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        let batch: Vec<EncodedArch> = train.into_iter().map(|(e, _)| e).collect();
        let a = forward(&p, &batch).unwrap();
        let b = forward(&q, &batch).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_unknown_version() {
        let sp = space();
        let p = init_predictor(Backbone::Mlp, &sp, &[8], 47).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictor.json");
        save_checkpoint(&p, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, body).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(NnError::Version { got: 9 })));
    }
}
