//! The layer-reusing recurrent network.
//!
//! A pass runs `l_t` steps of
//!
//! ```text
//! h[t+1] = α·h[t] + f(W_xh·x[t] + b_x + W_hh[p]·h[t] + b_h[p]),   p = slot(t)
//! ```
//!
//! and reads out `W_hy·h[l_t] + b_y`. `slot(t) = t mod l_w` unless an explicit
//! slot pattern is supplied. With `l_w = 1` this is a stateless RNN; with
//! `l_w = l_t` every step has its own parameters and the pass is a plain deep
//! residual MLP.

pub mod checkpoint;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{relu_mask, Matrix, Vector};
use crate::oscillator::{osc_activation_traced, DriveMode, OscParams};
use crate::train::DropoutMasks;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSchedule {
    l_w: usize,
    l_t: usize,
    pattern: Option<Vec<usize>>,
}

impl LayerSchedule {
    /// Periodic schedule; requires `1 ≤ l_w ≤ l_t`.
    pub fn new(l_w: usize, l_t: usize) -> Result<Self> {
        if !Self::is_feasible(l_w, l_t) {
            return Err(Error::config(format!(
                "infeasible schedule: l_w = {l_w}, l_t = {l_t} (need 1 <= l_w <= l_t)"
            )));
        }
        Ok(LayerSchedule {
            l_w,
            l_t,
            pattern: None,
        })
    }

    /// Explicit (possibly aperiodic) slot sequence, one entry per step.
    pub fn with_pattern(l_w: usize, pattern: Vec<usize>) -> Result<Self> {
        let l_t = pattern.len();
        if !Self::is_feasible(l_w, l_t) {
            return Err(Error::config(format!(
                "infeasible schedule: l_w = {l_w}, pattern length {l_t}"
            )));
        }
        if let Some(&bad) = pattern.iter().find(|&&p| p >= l_w) {
            return Err(Error::config(format!("pattern slot {bad} out of range for l_w = {l_w}")));
        }
        Ok(LayerSchedule {
            l_w,
            l_t,
            pattern: Some(pattern),
        })
    }

    pub fn is_feasible(l_w: usize, l_t: usize) -> bool {
        l_w >= 1 && l_w <= l_t
    }

    pub fn l_w(&self) -> usize {
        self.l_w
    }

    pub fn l_t(&self) -> usize {
        self.l_t
    }

    pub fn pattern(&self) -> Option<&[usize]> {
        self.pattern.as_deref()
    }

    pub fn slot_index(&self, t: usize) -> Result<usize> {
        if t >= self.l_t {
            return Err(Error::config(format!("time step {t} outside 0..{}", self.l_t)));
        }
        Ok(self.slot(t))
    }

    /// Unchecked variant of [`slot_index`](Self::slot_index).
    pub fn slot(&self, t: usize) -> usize {
        match &self.pattern {
            Some(p) => p[t],
            None => t % self.l_w,
        }
    }
}

pub fn slot_index(t: usize, sched: &LayerSchedule) -> Result<usize> {
    sched.slot_index(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenSlot {
    pub w_hh: Matrix,
    pub b_h: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Oscillator(OscParams),
}

/// Tensor shapes of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Per-step input width `X` (the embedding width when `vocab` is set).
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub l_w: usize,
    /// Vocabulary size when steps consume token indices through an embedding.
    pub vocab: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub w_xh: Matrix,
    pub b_x: Vector,
    pub slots: Vec<HiddenSlot>,
    pub w_hy: Matrix,
    pub b_y: Vector,
    pub embedding: Option<Matrix>,
    pub osc: Option<OscParams>,
}

impl ModelParams {
    /// All-zero tensors, `α = 0`.
    pub fn zeros(dims: &ModelDims, activation: &Activation) -> Self {
        let h = dims.hidden;
        ModelParams {
            alpha: 0.0,
            w_xh: Matrix::zeros(h, dims.input),
            b_x: Vector::zeros(h),
            slots: (0..dims.l_w)
                .map(|_| HiddenSlot {
                    w_hh: Matrix::zeros(h, h),
                    b_h: Vector::zeros(h),
                })
                .collect(),
            w_hy: Matrix::zeros(dims.output, h),
            b_y: Vector::zeros(dims.output),
            embedding: dims.vocab.map(|v| Matrix::zeros(v, dims.input)),
            osc: match activation {
                Activation::Relu => None,
                Activation::Oscillator(p) => Some(p.clone()),
            },
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.w_xh.cols(),
            hidden: self.w_xh.rows(),
            output: self.w_hy.rows(),
            l_w: self.slots.len(),
            vocab: self.embedding.as_ref().map(Matrix::rows),
        }
    }

    pub fn activation(&self) -> Activation {
        match &self.osc {
            None => Activation::Relu,
            Some(p) => Activation::Oscillator(p.clone()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_xh.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xh.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_hy.rows()
    }

    /// Checks that every tensor agrees with `w_xh` / `w_hy` on `H`, `X`, `Y`.
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        let x = self.input_dim();
        let y = self.output_dim();
        if h == 0 || y == 0 {
            return Err(Error::config("hidden and output widths must be positive"));
        }
        if self.slots.is_empty() {
            return Err(Error::config("at least one hidden slot is required"));
        }
        if self.b_x.len() != h {
            return Err(Error::config("b_x length differs from hidden width"));
        }
        for (p, s) in self.slots.iter().enumerate() {
            if s.w_hh.shape() != (h, h) || s.b_h.len() != h {
                return Err(Error::config(format!("hidden slot {p} has the wrong shape")));
            }
        }
        if self.w_hy.cols() != h || self.b_y.len() != y {
            return Err(Error::config("readout shape mismatch"));
        }
        if let Some(e) = &self.embedding {
            if e.cols() != x {
                return Err(Error::config("embedding width differs from input width"));
            }
        }
        if let Some(o) = &self.osc {
            if !(o.dt > 0.0) {
                return Err(Error::config("oscillator dt must be positive"));
            }
        }
        Ok(())
    }

    /// Trainable tensors in declaration order: α, W_xh, b_x, per slot
    /// (W_hh, b_h), W_hy, b_y, embedding, γ_p, γ_nl.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            std::slice::from_ref(&self.alpha),
            self.w_xh.data(),
            self.b_x.as_slice(),
        ];
        for s in &self.slots {
            out.push(s.w_hh.data());
            out.push(s.b_h.as_slice());
        }
        out.push(self.w_hy.data());
        out.push(self.b_y.as_slice());
        if let Some(e) = &self.embedding {
            out.push(e.data());
        }
        if let Some(o) = &self.osc {
            out.push(std::slice::from_ref(&o.gamma_p));
            out.push(std::slice::from_ref(&o.gamma_nl));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            std::slice::from_mut(&mut self.alpha),
            self.w_xh.data_mut(),
            self.b_x.as_mut_slice(),
        ];
        for s in &mut self.slots {
            out.push(s.w_hh.data_mut());
            out.push(s.b_h.as_mut_slice());
        }
        out.push(self.w_hy.data_mut());
        out.push(self.b_y.as_mut_slice());
        if let Some(e) = &mut self.embedding {
            out.push(e.data_mut());
        }
        if let Some(o) = &mut self.osc {
            out.push(std::slice::from_mut(&mut o.gamma_p));
            out.push(std::slice::from_mut(&mut o.gamma_nl));
        }
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Copies every slot out to its own layer so that the returned network,
    /// run with the returned `l_t`-slot schedule, computes the same function
    /// without any weight sharing.
    pub fn untied(&self, sched: &LayerSchedule) -> (ModelParams, LayerSchedule) {
        let mut out = self.clone();
        out.slots = (0..sched.l_t())
            .map(|t| self.slots[sched.slot(t)].clone())
            .collect();
        let untied_sched = LayerSchedule::new(sched.l_t(), sched.l_t())
            .expect("l_t >= 1 for any valid schedule");
        (out, untied_sched)
    }
}

/// What the network reads at each step.
#[derive(Debug, Clone, Copy)]
pub enum StepInputs<'a> {
    /// The same vector at every step (image mode).
    Repeated(&'a [f64]),
    /// One vector per step.
    Sequence(&'a [Vector]),
    /// One token per step, looked up in the embedding table.
    Tokens(&'a [usize]),
}

impl StepInputs<'_> {
    fn validate(&self, params: &ModelParams, l_t: usize) -> Result<()> {
        let x = params.input_dim();
        match *self {
            StepInputs::Repeated(v) => {
                if v.len() != x {
                    return Err(Error::config(format!("input has {} entries, expected {x}", v.len())));
                }
            }
            StepInputs::Sequence(seq) => {
                if seq.len() != l_t {
                    return Err(Error::config(format!(
                        "input sequence has {} steps, schedule has {l_t}",
                        seq.len()
                    )));
                }
                if seq.iter().any(|v| v.len() != x) {
                    return Err(Error::config(format!("sequence element width differs from {x}")));
                }
            }
            StepInputs::Tokens(tokens) => {
                let table = params
                    .embedding
                    .as_ref()
                    .ok_or_else(|| Error::config("token inputs need an embedding table"))?;
                if tokens.len() != l_t {
                    return Err(Error::config(format!(
                        "token window has {} steps, schedule has {l_t}",
                        tokens.len()
                    )));
                }
                if let Some(&bad) = tokens.iter().find(|&&t| t >= table.rows()) {
                    return Err(Error::config(format!("token {bad} outside vocabulary")));
                }
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Inputs as fed to `W_xh` (after the input mask). A single entry when
    /// the same input repeats at every step.
    pub inputs: Vec<Vector>,
    pub repeated: bool,
    pub tokens: Option<Vec<usize>>,
    /// `h[0] ..= h[l_t]`.
    pub states: Vec<Vector>,
    /// Pre-activation (ReLU) or oscillator drive per step.
    pub pre: Vec<Vector>,
    /// `f(pre[t])`: ReLU output or the final oscillator inner state.
    pub act: Vec<Vector>,
    /// ReLU derivative masks, stored so backward agrees with forward at 0.
    pub relu_masks: Vec<Vector>,
    /// Oscillator inner states `h_c^(0..eta)` per step.
    pub osc_inner: Vec<Vec<Vector>>,
    /// `m_hy ⊙ h[l_t]`, the vector hitting `W_hy`.
    pub readout: Vector,
    pub logits: Vector,
}

impl ForwardTrace {
    pub fn input_at(&self, t: usize) -> &Vector {
        if self.repeated {
            &self.inputs[0]
        } else {
            &self.inputs[t]
        }
    }
}

fn masked(v: &[f64], mask: Option<&Vector>) -> Vector {
    match mask {
        Some(m) => v.iter().zip(m.iter()).map(|(a, b)| a * b).collect::<Vec<_>>().into(),
        None => Vector::from_vec(v.to_vec()),
    }
}

/// Runs the network for `sched.l_t()` steps starting from `h0` (zeros when
/// `None`). Masks, when given, stay fixed across all steps of the pass.
pub fn forward(
    params: &ModelParams,
    sched: &LayerSchedule,
    inputs: StepInputs<'_>,
    h0: Option<&[f64]>,
    masks: Option<&DropoutMasks>,
) -> Result<(ForwardTrace, Vector)> {
    params.validate()?;
    let l_t = sched.l_t();
    if sched.l_w() != params.slots.len() {
        return Err(Error::config(format!(
            "schedule has l_w = {}, parameters have {} slots",
            sched.l_w(),
            params.slots.len()
        )));
    }
    inputs.validate(params, l_t)?;
    let h_dim = params.hidden_dim();
    if let Some(m) = masks {
        if m.m_xh.len() != params.input_dim() || m.m_hh.len() != h_dim || m.m_hy.len() != h_dim {
            return Err(Error::config("dropout mask shape mismatch"));
        }
    }
    let h0 = match h0 {
        Some(v) if v.len() != h_dim => {
            return Err(Error::config(format!("h0 has {} entries, expected {h_dim}", v.len())))
        }
        Some(v) => Vector::from_vec(v.to_vec()),
        None => Vector::zeros(h_dim),
    };

    let m_xh = masks.map(|m| &m.m_xh);
    let (fed, repeated, tokens): (Vec<Vector>, bool, Option<Vec<usize>>) = match inputs {
        StepInputs::Repeated(x) => (vec![masked(x, m_xh)], true, None),
        StepInputs::Sequence(seq) => (seq.iter().map(|x| masked(x, m_xh)).collect(), false, None),
        StepInputs::Tokens(tok) => {
            let table = params.embedding.as_ref().expect("validated above");
            (
                tok.iter().map(|&k| masked(table.row(k), m_xh)).collect(),
                false,
                Some(tok.to_vec()),
            )
        }
    };
    // W_xh·x + b_x once per distinct input.
    let projected: Vec<Vector> = fed
        .iter()
        .map(|x| {
            let mut u = params.b_x.clone();
            params.w_xh.matvec_add_into(x, &mut u);
            u
        })
        .collect();

    let mut trace = ForwardTrace {
        inputs: fed,
        repeated,
        tokens,
        states: Vec::with_capacity(l_t + 1),
        pre: Vec::with_capacity(l_t),
        act: Vec::with_capacity(l_t),
        relu_masks: Vec::new(),
        osc_inner: Vec::new(),
        readout: Vector::zeros(0),
        logits: Vector::zeros(0),
    };
    trace.states.push(h0);

    for t in 0..l_t {
        let slot = &params.slots[sched.slot(t)];
        let h = &trace.states[t];
        let u = if repeated { &projected[0] } else { &projected[t] };
        let mut z = u.clone();
        for (zi, bi) in z.iter_mut().zip(slot.b_h.iter()) {
            *zi += bi;
        }
        let use_recurrent = params
            .osc
            .as_ref()
            .map_or(true, |o| o.drive == DriveMode::Recurrent);
        if use_recurrent {
            slot.w_hh.matvec_add_into(h, &mut z);
        }
        let f = match &params.osc {
            None => {
                let mask = relu_mask(&z);
                let f: Vector = z.iter().map(|&v| v.max(0.0)).collect::<Vec<_>>().into();
                trace.relu_masks.push(mask);
                f
            }
            Some(cfg) => {
                let (out, inner) = osc_activation_traced(h, &z, cfg);
                trace.osc_inner.push(inner);
                out
            }
        };
        let mut next: Vector = h
            .iter()
            .zip(f.iter())
            .map(|(&hv, &fv)| params.alpha * hv + fv)
            .collect::<Vec<_>>()
            .into();
        if let Some(m) = masks {
            for (v, s) in next.iter_mut().zip(m.m_hh.iter()) {
                *v *= s;
            }
        }
        trace.pre.push(z);
        trace.act.push(f);
        trace.states.push(next);
    }

    let readout = masked(&trace.states[l_t], masks.map(|m| &m.m_hy));
    let mut logits = params.b_y.clone();
    params.w_hy.matvec_add_into(&readout, &mut logits);
    trace.readout = readout;
    trace.logits = logits.clone();
    Ok((trace, logits))
}

/// Logits only; convenience wrapper over [`forward`].
pub fn predict(params: &ModelParams, sched: &LayerSchedule, inputs: StepInputs<'_>) -> Result<Vector> {
    forward(params, sched, inputs, None, None).map(|(_, logits)| logits)
}

/// Trainable-parameter breakdown in the four groups used by the reported
/// tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub other: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.input + self.hidden + self.output + self.other
    }

    pub fn for_dims(dims: &ModelDims, oscillator: bool) -> Self {
        let h = dims.hidden;
        let mut other = 1;
        if oscillator {
            other += 2;
        }
        if let Some(v) = dims.vocab {
            other += v * dims.input;
        }
        ParamCounts {
            input: h * dims.input + h,
            hidden: count_hidden_params(h, dims.l_w),
            output: dims.output * h + dims.output,
            other,
        }
    }
}

/// `l_w · (h² + h)`: one `H×H` matrix and one bias per slot.
pub fn count_hidden_params(h: usize, l_w: usize) -> usize {
    l_w * (h * h + h)
}

pub fn count_all_params(params: &ModelParams) -> ParamCounts {
    ParamCounts::for_dims(&params.dims(), params.osc.is_some())
}

/// Nominal budget of the reference fixed-budget grid.
pub const REFERENCE_BUDGET: usize = 33_000;

/// Reference hidden widths for `l_w = 1..=8` at [`REFERENCE_BUDGET`].
pub const REFERENCE_WIDTHS: [usize; 8] = [192, 128, 104, 91, 80, 73, 68, 64];

/// Hidden width whose hidden-parameter count plus α lands on `budget`.
///
/// At [`REFERENCE_BUDGET`] with `l_w ≤ 8` this returns the reference grid.
/// Otherwise it returns the `h` minimising `|l_w·(h²+h) + 1 − budget|`
/// (ties go to the smaller width), so the counted budget is always within
/// one width increment of the target.
pub fn width_for_budget(budget: usize, l_w: usize) -> Result<usize> {
    if l_w == 0 {
        return Err(Error::config("l_w must be at least 1"));
    }
    if budget == REFERENCE_BUDGET && l_w <= REFERENCE_WIDTHS.len() {
        return Ok(REFERENCE_WIDTHS[l_w - 1]);
    }
    nearest_width_for_budget(budget, l_w)
}

/// The closed rule used by [`width_for_budget`] away from the reference grid.
pub fn nearest_width_for_budget(budget: usize, l_w: usize) -> Result<usize> {
    if l_w == 0 {
        return Err(Error::config("l_w must be at least 1"));
    }
    let cost = |h: usize| count_hidden_params(h, l_w) + 1;
    if budget < cost(1) {
        return Err(Error::config(format!(
            "budget {budget} cannot fit even one hidden unit per slot with l_w = {l_w}"
        )));
    }
    let mut h = 1;
    while cost(h + 1) <= budget {
        h += 1;
    }
    // cost(h) <= budget < cost(h + 1)
    if cost(h + 1) - budget < budget - cost(h) {
        h += 1;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{draw_uniform, Rng};
    use proptest::prelude::*;

    fn random_params(rng: &mut Rng, dims: &ModelDims, activation: &Activation) -> ModelParams {
        let mut p = ModelParams::zeros(dims, activation);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.uniform_in(-0.8, 0.8);
            }
        }
        p.alpha = 0.7;
        p
    }

    fn dims(x: usize, h: usize, y: usize, l_w: usize) -> ModelDims {
        ModelDims {
            input: x,
            hidden: h,
            output: y,
            l_w,
            vocab: None,
        }
    }

    #[test]
    fn slot_index_examples() {
        let s = LayerSchedule::new(2, 4).unwrap();
        assert_eq!(slot_index(0, &s).unwrap(), 0);
        assert_eq!(slot_index(1, &s).unwrap(), 1);
        assert_eq!(slot_index(2, &s).unwrap(), 0);
        let s = LayerSchedule::new(1, 7).unwrap();
        assert!((0..7).all(|t| s.slot_index(t).unwrap() == 0));
        let s = LayerSchedule::new(4, 8).unwrap();
        assert_eq!(s.slot_index(5).unwrap(), 1);
        assert!(s.slot_index(8).is_err());
    }

    #[test]
    fn infeasible_schedules_rejected() {
        assert!(LayerSchedule::new(3, 2).is_err());
        assert!(LayerSchedule::new(0, 2).is_err());
        assert!(LayerSchedule::with_pattern(2, vec![0, 2, 1]).is_err());
        let s = LayerSchedule::with_pattern(2, vec![1, 1, 0]).unwrap();
        assert_eq!(s.slot(0), 1);
        assert_eq!(s.slot(2), 0);
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let d = dims(3, 4, 2, 2);
        let p = ModelParams::zeros(&d, &Activation::Relu);
        let s = LayerSchedule::new(2, 5).unwrap();
        let (_, logits) = forward(&p, &s, StepInputs::Repeated(&[1.0, -2.0, 3.0]), None, None).unwrap();
        assert_eq!(logits.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn pure_residual_chain_is_identity() {
        let d = dims(3, 4, 2, 2);
        let mut p = ModelParams::zeros(&d, &Activation::Relu);
        p.alpha = 1.0;
        let s = LayerSchedule::new(2, 5).unwrap();
        let h0 = [0.5, -1.0, 2.0, 0.0];
        let (trace, _) = forward(&p, &s, StepInputs::Repeated(&[1.0, 1.0, 1.0]), Some(&h0), None).unwrap();
        assert_eq!(trace.states.len(), 6);
        assert_eq!(trace.states[5].as_slice(), &h0);
    }

    #[test]
    fn matches_direct_recurrence() {
        let mut rng = Rng::new(1234);
        let d = dims(3, 4, 2, 2);
        let p = random_params(&mut rng, &d, &Activation::Relu);
        let s = LayerSchedule::new(2, 5).unwrap();
        let xs: Vec<Vector> = (0..5).map(|_| draw_uniform(&mut rng, -1.0, 1.0, 3).unwrap()).collect();
        let (_, logits) = forward(&p, &s, StepInputs::Sequence(&xs), None, None).unwrap();

        // Interpreted recurrence with explicit index loops.
        let mut h = vec![0.0; 4];
        for (t, xt) in xs.iter().enumerate() {
            let slot = &p.slots[t % 2];
            let mut next = vec![0.0; 4];
            for i in 0..4 {
                let mut z = p.b_x[i] + slot.b_h[i];
                for j in 0..3 {
                    z += p.w_xh.get(i, j) * xt[j];
                }
                for j in 0..4 {
                    z += slot.w_hh.get(i, j) * h[j];
                }
                next[i] = p.alpha * h[i] + z.max(0.0);
            }
            h = next;
        }
        for k in 0..2 {
            let mut y = p.b_y[k];
            for j in 0..4 {
                y += p.w_hy.get(k, j) * h[j];
            }
            assert!((y - logits[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn input_only_drive_ignores_hidden_matrices() {
        let mut rng = Rng::new(5);
        let d = dims(3, 4, 2, 2);
        let osc = OscParams {
            drive: DriveMode::InputOnly,
            ..OscParams::default()
        };
        let p = random_params(&mut rng, &d, &Activation::Oscillator(osc));
        let mut q = p.clone();
        for s in &mut q.slots {
            s.w_hh = Matrix::zeros(4, 4);
        }
        let sched = LayerSchedule::new(2, 4).unwrap();
        let x = [0.1, 0.2, -0.3];
        assert_eq!(
            predict(&p, &sched, StepInputs::Repeated(&x)).unwrap(),
            predict(&q, &sched, StepInputs::Repeated(&x)).unwrap()
        );
    }

    #[test]
    fn token_inputs_match_gathered_sequence() {
        let mut rng = Rng::new(17);
        let d = ModelDims {
            input: 3,
            hidden: 4,
            output: 5,
            l_w: 2,
            vocab: Some(5),
        };
        let p = random_params(&mut rng, &d, &Activation::Relu);
        let s = LayerSchedule::new(2, 4).unwrap();
        let tokens = [1, 4, 0, 4];
        let seq: Vec<Vector> = tokens
            .iter()
            .map(|&k| Vector::from_vec(p.embedding.as_ref().unwrap().row(k).to_vec()))
            .collect();
        assert_eq!(
            predict(&p, &s, StepInputs::Tokens(&tokens)).unwrap(),
            predict(&p, &s, StepInputs::Sequence(&seq)).unwrap()
        );
        assert!(predict(&p, &s, StepInputs::Tokens(&[1, 9, 0, 0])).is_err());
    }

    #[test]
    fn dimension_errors() {
        let d = dims(3, 4, 2, 2);
        let p = ModelParams::zeros(&d, &Activation::Relu);
        let s = LayerSchedule::new(2, 3).unwrap();
        assert!(predict(&p, &s, StepInputs::Repeated(&[1.0, 2.0])).is_err());
        let s1 = LayerSchedule::new(1, 3).unwrap();
        assert!(predict(&p, &s1, StepInputs::Repeated(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn hidden_counts_match_reported_tables() {
        assert_eq!(count_hidden_params(64, 1), 4160);
        assert_eq!(count_hidden_params(64, 12), 49920);
        assert_eq!(count_hidden_params(104, 3), 32760);
    }

    #[test]
    fn full_breakdown() {
        let p = ModelParams::zeros(&dims(3072, 64, 10, 12), &Activation::Relu);
        assert_eq!(
            count_all_params(&p),
            ParamCounts {
                input: 196_672,
                hidden: 49_920,
                output: 650,
                other: 1
            }
        );
        let p = ModelParams::zeros(&dims(1, 1, 1, 1), &Activation::Relu);
        assert_eq!(
            count_all_params(&p),
            ParamCounts {
                input: 2,
                hidden: 2,
                output: 2,
                other: 1
            }
        );
        assert_eq!(count_all_params(&p).total(), p.num_trainable());
        let nlp = ModelDims {
            input: 36,
            hidden: 8,
            output: 43,
            l_w: 2,
            vocab: Some(43),
        };
        let p = ModelParams::zeros(&nlp, &Activation::Oscillator(OscParams::default()));
        assert_eq!(count_all_params(&p).other, 1 + 2 + 43 * 36);
        assert_eq!(count_all_params(&p).total(), p.num_trainable());
    }

    #[test]
    fn reference_grid_widths() {
        let got: Vec<usize> = (1..=8).map(|l| width_for_budget(33_000, l).unwrap()).collect();
        assert_eq!(got, vec![192, 128, 104, 91, 80, 73, 68, 64]);
        assert!(width_for_budget(2, 1).is_err());
        assert_eq!(width_for_budget(3, 1).unwrap(), 1);
    }

    proptest! {
        #[test]
        fn schedule_is_periodic(l_w in 1usize..8, extra in 0usize..10, t in 0usize..20) {
            let l_t = l_w + extra + 1;
            let s = LayerSchedule::new(l_w, l_t).unwrap();
            prop_assume!(t + l_w < l_t);
            prop_assert_eq!(s.slot(t), s.slot(t + l_w));
        }

        #[test]
        fn hidden_count_linear_in_slots(h in 1usize..300, l_w in 1usize..16) {
            prop_assert_eq!(count_hidden_params(h, l_w), l_w * count_hidden_params(h, 1));
        }

        #[test]
        fn nearest_width_within_one_increment(budget in 10usize..200_000, l_w in 1usize..12) {
            let cost = |h: usize| count_hidden_params(h, l_w) + 1;
            prop_assume!(budget >= cost(1));
            let h = nearest_width_for_budget(budget, l_w).unwrap();
            let step = cost(h + 1) - cost(h);
            prop_assert!(cost(h).abs_diff(budget) <= step);
        }
    }
}
