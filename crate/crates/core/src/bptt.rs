//! Reverse pass through the unrolled recurrence.
//!
//! Slots shared by several steps accumulate the contribution of every step
//! that used them.

use crate::data::{Sample, SampleInput};
use crate::error::{Error, Result};
use crate::linalg::{softmax, Matrix, Vector};
use crate::model::{forward, ForwardTrace, LayerSchedule, ModelParams, StepInputs};
use crate::oscillator::{osc_backward, DriveMode};
use crate::train::{cross_entropy, softmax_xent_grad, DropoutMasks};

#[derive(Debug, Clone, PartialEq)]
pub struct SlotGrads {
    pub d_w_hh: Matrix,
    pub d_b_h: Vector,
}

/// Same layout as [`ModelParams`], holding `∂L/∂θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_alpha: f64,
    pub d_w_xh: Matrix,
    pub d_b_x: Vector,
    pub slots: Vec<SlotGrads>,
    pub d_w_hy: Matrix,
    pub d_b_y: Vector,
    pub d_embedding: Option<Matrix>,
    pub d_gamma_p: Option<f64>,
    pub d_gamma_nl: Option<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let (h, x, y) = (params.hidden_dim(), params.input_dim(), params.output_dim());
        Gradients {
            d_alpha: 0.0,
            d_w_xh: Matrix::zeros(h, x),
            d_b_x: Vector::zeros(h),
            slots: params
                .slots
                .iter()
                .map(|_| SlotGrads {
                    d_w_hh: Matrix::zeros(h, h),
                    d_b_h: Vector::zeros(h),
                })
                .collect(),
            d_w_hy: Matrix::zeros(y, h),
            d_b_y: Vector::zeros(y),
            d_embedding: params.embedding.as_ref().map(|e| Matrix::zeros(e.rows(), e.cols())),
            d_gamma_p: params.osc.as_ref().map(|_| 0.0),
            d_gamma_nl: params.osc.as_ref().map(|_| 0.0),
        }
    }

    /// Tensors in the same order as [`ModelParams::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            std::slice::from_ref(&self.d_alpha),
            self.d_w_xh.data(),
            self.d_b_x.as_slice(),
        ];
        for s in &self.slots {
            out.push(s.d_w_hh.data());
            out.push(s.d_b_h.as_slice());
        }
        out.push(self.d_w_hy.data());
        out.push(self.d_b_y.as_slice());
        if let Some(e) = &self.d_embedding {
            out.push(e.data());
        }
        if let Some(g) = &self.d_gamma_p {
            out.push(std::slice::from_ref(g));
        }
        if let Some(g) = &self.d_gamma_nl {
            out.push(std::slice::from_ref(g));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            std::slice::from_mut(&mut self.d_alpha),
            self.d_w_xh.data_mut(),
            self.d_b_x.as_mut_slice(),
        ];
        for s in &mut self.slots {
            out.push(s.d_w_hh.data_mut());
            out.push(s.d_b_h.as_mut_slice());
        }
        out.push(self.d_w_hy.data_mut());
        out.push(self.d_b_y.as_mut_slice());
        if let Some(e) = &mut self.d_embedding {
            out.push(e.data_mut());
        }
        if let Some(g) = &mut self.d_gamma_p {
            out.push(std::slice::from_mut(g));
        }
        if let Some(g) = &mut self.d_gamma_nl {
            out.push(std::slice::from_mut(g));
        }
        out
    }

    /// Flattened copy in declaration order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so that the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Exact gradients of the loss whose logit gradient is `d_logits`, given a
/// trace from [`forward`] with the same parameters, schedule and masks.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    sched: &LayerSchedule,
    d_logits: &[f64],
    masks: Option<&DropoutMasks>,
) -> Result<Gradients> {
    let mut g = Gradients::zeros_like(params);
    backward_accumulate(trace, params, sched, d_logits, masks, &mut g)?;
    Ok(g)
}

/// [`backward`] that adds into an existing accumulator instead of allocating.
pub fn backward_accumulate(
    trace: &ForwardTrace,
    params: &ModelParams,
    sched: &LayerSchedule,
    d_logits: &[f64],
    masks: Option<&DropoutMasks>,
    g: &mut Gradients,
) -> Result<()> {
    let l_t = sched.l_t();
    let h_dim = params.hidden_dim();
    if trace.states.len() != l_t + 1
        || trace.pre.len() != l_t
        || d_logits.len() != params.output_dim()
        || trace.states[0].len() != h_dim
        || sched.l_w() != params.slots.len()
    {
        return Err(Error::config("trace does not match parameters / schedule"));
    }
    let relu = params.osc.is_none();
    if (relu && trace.relu_masks.len() != l_t) || (!relu && trace.osc_inner.len() != l_t) {
        return Err(Error::config("trace was produced with a different activation"));
    }

    if g.slots.len() != params.slots.len() || g.d_w_xh.shape() != params.w_xh.shape() {
        return Err(Error::config("gradient accumulator does not match parameters"));
    }
    for (a, b) in g.d_b_y.iter_mut().zip(d_logits) {
        *a += b;
    }
    g.d_w_hy.add_outer(d_logits, &trace.readout);

    let mut d_h = Vector::zeros(h_dim);
    params.w_hy.matvec_t_add_into(d_logits, &mut d_h);
    if let Some(m) = masks {
        for (v, s) in d_h.iter_mut().zip(m.m_hy.iter()) {
            *v *= s;
        }
    }

    let use_recurrent = params
        .osc
        .as_ref()
        .map_or(true, |o| o.drive == DriveMode::Recurrent);
    // Sum of ∂L/∂z over steps, for a repeated input.
    let mut d_z_total = Vector::zeros(h_dim);
    let mut d_inputs: Vec<Vector> = Vec::new();
    let want_inputs = trace.tokens.is_some();

    for t in (0..l_t).rev() {
        let p = sched.slot(t);
        let h = &trace.states[t];
        // ∂L/∂(α·h[t] + f(z[t])) after the recurrent mask.
        let mut d_s = d_h;
        if let Some(m) = masks {
            for (v, s) in d_s.iter_mut().zip(m.m_hh.iter()) {
                *v *= s;
            }
        }
        g.d_alpha += crate::linalg::dot(h, &d_s);

        let mut d_h_prev: Vector = d_s.iter().map(|v| params.alpha * v).collect::<Vec<_>>().into();
        let d_z: Vector = match &params.osc {
            None => d_s
                .iter()
                .zip(trace.relu_masks[t].iter())
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>()
                .into(),
            Some(cfg) => {
                let og = osc_backward(&trace.osc_inner[t], &d_s, cfg);
                *g.d_gamma_p.as_mut().expect("oscillator grads") += og.d_gamma_p;
                *g.d_gamma_nl.as_mut().expect("oscillator grads") += og.d_gamma_nl;
                for (a, b) in d_h_prev.iter_mut().zip(og.d_h_prev.iter()) {
                    *a += b;
                }
                og.d_drive
            }
        };

        let slot = &mut g.slots[p];
        for (a, b) in slot.d_b_h.iter_mut().zip(d_z.iter()) {
            *a += b;
        }
        if use_recurrent {
            slot.d_w_hh.add_outer(&d_z, h);
            params.slots[p].w_hh.matvec_t_add_into(&d_z, &mut d_h_prev);
        }
        for (a, b) in g.d_b_x.iter_mut().zip(d_z.iter()) {
            *a += b;
        }
        if trace.repeated {
            for (a, b) in d_z_total.iter_mut().zip(d_z.iter()) {
                *a += b;
            }
        } else {
            g.d_w_xh.add_outer(&d_z, trace.input_at(t));
        }
        if want_inputs {
            let mut d_x = Vector::zeros(params.input_dim());
            params.w_xh.matvec_t_add_into(&d_z, &mut d_x);
            d_inputs.push(d_x);
        }
        d_h = d_h_prev;
    }
    if trace.repeated {
        g.d_w_xh.add_outer(&d_z_total, &trace.inputs[0]);
    }

    if let (Some(tokens), Some(d_emb)) = (&trace.tokens, g.d_embedding.as_mut()) {
        // d_inputs was filled from t = l_t-1 down to 0.
        for (t, d_x) in d_inputs.iter().rev().enumerate() {
            let row = d_emb.row_mut(tokens[t]);
            match masks {
                Some(m) => {
                    for ((r, d), s) in row.iter_mut().zip(d_x.iter()).zip(m.m_xh.iter()) {
                        *r += d * s;
                    }
                }
                None => {
                    for (r, d) in row.iter_mut().zip(d_x.iter()) {
                        *r += d;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Scalar objective applied to the logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy against the sample's target class.
    CrossEntropy,
    /// `‖logits‖² / 2`, independent of the target.
    HalfSquaredNorm,
}

impl LossKind {
    pub fn value_and_grad(&self, logits: &[f64], target: usize) -> (f64, Vector) {
        match self {
            LossKind::CrossEntropy => {
                let probs = softmax(logits);
                (cross_entropy(target, &probs), softmax_xent_grad(logits, target))
            }
            LossKind::HalfSquaredNorm => (
                0.5 * logits.iter().map(|v| v * v).sum::<f64>(),
                Vector::from_vec(logits.to_vec()),
            ),
        }
    }
}

pub(crate) fn sample_inputs(sample: &Sample) -> StepInputs<'_> {
    match &sample.input {
        SampleInput::Image(x) => StepInputs::Repeated(x),
        SampleInput::Sequence(xs) => StepInputs::Sequence(xs),
        SampleInput::Tokens(t) => StepInputs::Tokens(t),
    }
}

fn check_target(params: &ModelParams, sample: &Sample) -> Result<()> {
    if sample.target >= params.output_dim() {
        return Err(Error::config(format!(
            "target {} outside 0..{}",
            sample.target,
            params.output_dim()
        )));
    }
    Ok(())
}

/// Loss and gradients of one example.
pub fn example_loss_and_grad(
    params: &ModelParams,
    sched: &LayerSchedule,
    sample: &Sample,
    loss: LossKind,
    masks: Option<&DropoutMasks>,
) -> Result<(f64, Gradients)> {
    check_target(params, sample)?;
    let (trace, logits) = forward(params, sched, sample_inputs(sample), None, masks)?;
    let (value, d_logits) = loss.value_and_grad(&logits, sample.target);
    let g = backward(&trace, params, sched, &d_logits, masks)?;
    Ok((value, g))
}

/// Mean loss and mean gradients over a mini-batch. One mask set (if any) is
/// shared by every example and every step. Examples are accumulated in
/// batch order.
pub fn loss_and_grad(
    params: &ModelParams,
    sched: &LayerSchedule,
    batch: &[Sample],
    loss: LossKind,
    masks: Option<&DropoutMasks>,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let mut total = Gradients::zeros_like(params);
    let mut total_loss = 0.0;
    for sample in batch {
        check_target(params, sample)?;
        let (trace, logits) = forward(params, sched, sample_inputs(sample), None, masks)?;
        let (value, d_logits) = loss.value_and_grad(&logits, sample.target);
        total_loss += value;
        backward_accumulate(&trace, params, sched, &d_logits, masks, &mut total)?;
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((total_loss / n, total))
}
