//! Loss, optimizer, initialization, dropout masks and the epoch loop.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::bptt::{loss_and_grad, sample_inputs, Gradients, LossKind};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::linalg::{argmax, draw_bernoulli, draw_uniform, softmax, Matrix, Rng, Vector};
use crate::model::{forward, Activation, LayerSchedule, ModelDims, ModelParams};

/// Smallest probability fed to the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

static CLAMPED_PROBS: AtomicU64 = AtomicU64::new(0);

/// How many times [`cross_entropy`] had to floor a zero probability.
pub fn clamp_warnings() -> u64 {
    CLAMPED_PROBS.load(Ordering::Relaxed)
}

/// `−ln q[target]`, flooring the probability at [`PROB_FLOOR`].
pub fn cross_entropy(target: usize, probs: &[f64]) -> f64 {
    let q = probs[target];
    if q < PROB_FLOOR {
        CLAMPED_PROBS.fetch_add(1, Ordering::Relaxed);
        return -PROB_FLOOR.ln();
    }
    -q.ln()
}

/// `softmax(logits) − onehot(target)`.
pub fn softmax_xent_grad(logits: &[f64], target: usize) -> Vector {
    let mut g = softmax(logits);
    g[target] -= 1.0;
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments, flattened in [`ModelParams::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let n = params.num_trainable();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            config,
        }
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powf(state.t as f64);
    let bc2 = 1.0 - beta2.powf(state.t as f64);
    let mut k = 0;
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    if grads.len() != params.len() {
        return Err(Error::config("gradient layout differs from parameters"));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::config("gradient tensor shape differs from parameter"));
        }
        for (theta, &gi) in p.iter_mut().zip(g) {
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            k += 1;
        }
    }
    if k != state.m.len() {
        return Err(Error::config("optimizer state size differs from parameters"));
    }
    Ok(())
}

/// `rows × cols` matrix with entries `U(−√(6/cols), √(6/cols))`; `cols` is the
/// fan-in of the layer.
pub fn kaiming_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / cols as f64).sqrt();
    let data = draw_uniform(rng, -bound, bound, rows * cols)
        .expect("positive fan-in gives a valid range")
        .into_vec();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// Fresh network: Kaiming weights, zero biases, `α = 1`.
///
/// The embedding table uses the same uniform bound with its width as fan-in.
pub fn init_params(dims: &ModelDims, activation: &Activation, rng: &mut Rng) -> Result<ModelParams> {
    if dims.input == 0 || dims.hidden == 0 || dims.output == 0 || dims.l_w == 0 {
        return Err(Error::config("all model dimensions must be positive"));
    }
    let mut p = ModelParams::zeros(dims, activation);
    p.alpha = 1.0;
    if let Some(v) = dims.vocab {
        p.embedding = Some(kaiming_init(v, dims.input, rng));
    }
    p.w_xh = kaiming_init(dims.hidden, dims.input, rng);
    for slot in &mut p.slots {
        slot.w_hh = kaiming_init(dims.hidden, dims.hidden, rng);
    }
    p.w_hy = kaiming_init(dims.output, dims.hidden, rng);
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeepProbs {
    pub input: f64,
    pub recurrent: f64,
    pub output: f64,
}

impl KeepProbs {
    pub fn uniform(p: f64) -> Self {
        KeepProbs {
            input: p,
            recurrent: p,
            output: p,
        }
    }
}

/// Variational dropout masks, drawn once per mini-batch and reused at every
/// step. Kept entries hold `1/keep` (inverted dropout).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub m_xh: Vector,
    pub m_hh: Vector,
    pub m_hy: Vector,
    pub keep: KeepProbs,
}

impl DropoutMasks {
    pub fn identity(input: usize, hidden: usize) -> Self {
        DropoutMasks {
            m_xh: Vector::filled(input, 1.0),
            m_hh: Vector::filled(hidden, 1.0),
            m_hy: Vector::filled(hidden, 1.0),
            keep: KeepProbs::uniform(1.0),
        }
    }
}

fn scaled_mask(rng: &mut Rng, keep: f64, n: usize) -> Result<Vector> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::config(format!("keep probability {keep} outside (0, 1]")));
    }
    let mut m = draw_bernoulli(rng, keep, n)?;
    let s = 1.0 / keep;
    for v in m.iter_mut() {
        *v *= s;
    }
    Ok(m)
}

/// Input, recurrent and readout masks in that draw order.
pub fn make_masks(rng: &mut Rng, input: usize, hidden: usize, keep: KeepProbs) -> Result<DropoutMasks> {
    Ok(DropoutMasks {
        m_xh: scaled_mask(rng, keep.input, input)?,
        m_hh: scaled_mask(rng, keep.recurrent, hidden)?,
        m_hy: scaled_mask(rng, keep.output, hidden)?,
        keep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Variational dropout; `None` trains without masks.
    pub dropout: Option<KeepProbs>,
    /// Global gradient-norm cap; off by default.
    pub clip_norm: Option<f64>,
    /// Keep `W_xh` and `b_x` at their initial random values.
    pub freeze_input: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            adam: AdamConfig::default(),
            dropout: None,
            clip_norm: None,
            freeze_input: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean of the per-batch training losses, weighted by batch size.
    pub train_loss: f64,
    pub batches: usize,
    pub validation: Option<Evaluation>,
}

/// One pass over `dataset` in an order shuffled by `rng`, with one Adam step
/// per mini-batch. Masks (when enabled) are drawn from `rng` after the
/// shuffle, one set per batch.
pub fn train_epoch(
    params: &mut ModelParams,
    state: &mut AdamState,
    dataset: &[Sample],
    sched: &LayerSchedule,
    config: &TrainConfig,
    rng: &mut Rng,
    validation: Option<&[Sample]>,
) -> Result<EpochStats> {
    if config.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if dataset.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut order);

    let mut weighted_loss = 0.0;
    let mut batches = 0;
    let mut batch: Vec<Sample> = Vec::with_capacity(config.batch_size);
    for chunk in order.chunks(config.batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
        let masks = match config.dropout {
            Some(keep) => Some(make_masks(rng, params.input_dim(), params.hidden_dim(), keep)?),
            None => None,
        };
        let (loss, mut grads) = loss_and_grad(params, sched, &batch, LossKind::CrossEntropy, masks.as_ref())?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss or gradient in batch {batches}")));
        }
        if config.freeze_input {
            grads.d_w_xh.data_mut().fill(0.0);
            grads.d_b_x.as_mut_slice().fill(0.0);
        }
        if let Some(c) = config.clip_norm {
            grads.clip_norm(c);
        }
        adam_step(params, &grads, state)?;
        weighted_loss += loss * chunk.len() as f64;
        batches += 1;
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters left the finite range".into()));
    }
    let validation = match validation {
        Some(v) if !v.is_empty() => Some(evaluate(params, v, sched)?),
        _ => None,
    };
    Ok(EpochStats {
        train_loss: weighted_loss / dataset.len() as f64,
        batches,
        validation,
    })
}

/// Mean cross-entropy and argmax error rate without dropout.
pub fn evaluate(params: &ModelParams, dataset: &[Sample], sched: &LayerSchedule) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::config("empty evaluation set"));
    }
    let mut loss = 0.0;
    let mut wrong = 0usize;
    for sample in dataset {
        let (_, logits) = forward(params, sched, sample_inputs(sample), None, None)?;
        loss += cross_entropy(sample.target, &softmax(&logits));
        if argmax(&logits) != sample.target {
            wrong += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        error_rate: wrong as f64 / n,
    })
}
