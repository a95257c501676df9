//! Independent oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use relaxnet::bptt::{backward, loss_and_grad, Gradients, LossKind};
use relaxnet::data::{Sample, SampleInput};
use relaxnet::linalg::{draw_uniform, Rng, Vector};
use relaxnet::model::{forward, Activation, LayerSchedule, ModelDims, ModelParams, StepInputs};
use relaxnet::oscillator::{DriveMode, OscParams};
use relaxnet::train::{make_masks, DropoutMasks, KeepProbs};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub dims: ModelDims,
    pub l_t: usize,
    pub activation: Activation,
    pub dropout: bool,
    pub seed: u64,
}

/// Deterministic spread of small networks covering both activations, both
/// drive modes, dropout on/off and all three input kinds.
pub fn grad_cases(n: usize, seed: u64) -> Vec<GradCase> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let l_w = 1 + i % 3;
            let l_t = l_w + rng.below(7 - l_w);
            let activation = match i % 4 {
                0 | 2 => Activation::Relu,
                1 => Activation::Oscillator(OscParams {
                    gamma_p: rng.uniform_in(0.5, 1.5),
                    gamma_nl: rng.uniform_in(0.1, 0.9),
                    ..OscParams::default()
                }),
                _ => Activation::Oscillator(OscParams {
                    gamma_p: rng.uniform_in(0.5, 1.5),
                    gamma_nl: rng.uniform_in(0.1, 0.9),
                    drive: if i % 8 == 3 { DriveMode::InputOnly } else { DriveMode::Recurrent },
                    ..OscParams::default()
                }),
            };
            let vocab = (i % 5 == 4).then(|| 3 + rng.below(4));
            GradCase {
                dims: ModelDims {
                    input: 1 + rng.below(5),
                    hidden: 1 + rng.below(8),
                    output: 1 + rng.below(3),
                    l_w,
                    vocab,
                },
                l_t,
                activation,
                dropout: (i / 2) % 2 == 1,
                seed: rng.next_u64(),
            }
        })
        .collect()
}

pub fn random_params(rng: &mut Rng, dims: &ModelDims, activation: &Activation) -> ModelParams {
    // The explicit cubic update is only stable for moderate states.
    let (bound, alpha_lo) = match activation {
        Activation::Relu => (0.6, 0.5),
        Activation::Oscillator(_) => (0.3, 0.3),
    };
    let mut p = ModelParams::zeros(dims, activation);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.uniform_in(-bound, bound);
        }
    }
    p.alpha = rng.uniform_in(alpha_lo, 0.8);
    if let Some(o) = &mut p.osc {
        if let Activation::Oscillator(src) = activation {
            o.gamma_p = src.gamma_p;
            o.gamma_nl = src.gamma_nl;
        }
    }
    p
}

pub fn random_sample(rng: &mut Rng, dims: &ModelDims, l_t: usize, kind: usize) -> Sample {
    let target = rng.below(dims.output);
    let input = match (dims.vocab, kind % 2) {
        (Some(v), _) => SampleInput::Tokens((0..l_t).map(|_| rng.below(v)).collect()),
        (None, 0) => SampleInput::Image(draw_uniform(rng, -1.0, 1.0, dims.input).unwrap()),
        (None, _) => SampleInput::Sequence(
            (0..l_t)
                .map(|_| draw_uniform(rng, -1.0, 1.0, dims.input).unwrap())
                .collect(),
        ),
    };
    Sample { input, target }
}

pub fn step_inputs(s: &Sample) -> StepInputs<'_> {
    match &s.input {
        SampleInput::Image(x) => StepInputs::Repeated(x.as_slice()),
        SampleInput::Sequence(x) => StepInputs::Sequence(x),
        SampleInput::Tokens(t) => StepInputs::Tokens(t),
    }
}

fn batch_loss(params: &ModelParams, sched: &LayerSchedule, batch: &[Sample], masks: Option<&DropoutMasks>) -> f64 {
    loss_and_grad(params, sched, batch, LossKind::CrossEntropy, masks).unwrap().0
}

/// Smallest |pre-activation| across the batch; ReLU is not differentiable at 0.
fn relu_margin(params: &ModelParams, sched: &LayerSchedule, batch: &[Sample], masks: Option<&DropoutMasks>) -> f64 {
    if params.osc.is_some() {
        return f64::INFINITY;
    }
    let mut m = f64::INFINITY;
    for s in batch {
        let (trace, _) = forward(params, sched, step_inputs(s), None, masks).unwrap();
        for z in &trace.pre {
            for &v in z.iter() {
                m = m.min(v.abs());
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub entries: usize,
    pub max_rel: f64,
    pub max_abs: f64,
}

/// Compares every trainable entry's analytic gradient on a two-example batch
/// with a central difference. Returns the first mismatch as an error.
pub fn check_case(case: &GradCase) -> Result<GradReport, String> {
    let mut rng = Rng::new(case.seed);
    let sched = LayerSchedule::new(case.dims.l_w, case.l_t).unwrap();
    // Redraw until no ReLU pre-activation sits within reach of the FD step.
    let (params, batch, masks) = loop {
        let params = random_params(&mut rng, &case.dims, &case.activation);
        let batch: Vec<Sample> = (0..2).map(|k| random_sample(&mut rng, &case.dims, case.l_t, k)).collect();
        let masks = case
            .dropout
            .then(|| make_masks(&mut rng, case.dims.input, case.dims.hidden, KeepProbs::uniform(0.7)).unwrap());
        if relu_margin(&params, &sched, &batch, masks.as_ref()) > 1e-3 {
            break (params, batch, masks);
        }
    };
    let (_, grads) = loss_and_grad(&params, &sched, &batch, LossKind::CrossEntropy, masks.as_ref()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let n_tensors = params.tensors().len();
    if analytic.len() != n_tensors {
        return Err(format!("{} gradient tensors for {} parameter tensors", analytic.len(), n_tensors));
    }
    let mut report = GradReport::default();
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].len();
        for j in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][j] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][j] -= FD_STEP;
            let num = (batch_loss(&plus, &sched, &batch, masks.as_ref()) - batch_loss(&minus, &sched, &batch, masks.as_ref()))
                / (2.0 * FD_STEP);
            let a = analytic[ti][j];
            let abs = (a - num).abs();
            let rel = abs / a.abs().max(num.abs()).max(f64::MIN_POSITIVE);
            report.entries += 1;
            if abs > ABS_TOL {
                report.max_rel = report.max_rel.max(rel);
            }
            report.max_abs = report.max_abs.max(abs);
            if abs > ABS_TOL && rel > REL_TOL {
                return Err(format!(
                    "{case:?}: tensor {ti} entry {j}: analytic {a:e} vs numeric {num:e} (rel {rel:e})"
                ));
            }
        }
    }
    Ok(report)
}

/// Straight-line stateless RNN: one `(W, b)` pair applied at every step.
/// Summation order matches a left-to-right dot product added onto the bias.
pub fn stateless_rnn_reference(params: &ModelParams, x: &[f64], l_t: usize) -> Vec<f64> {
    let h_dim = params.hidden_dim();
    let w_xh = params.w_xh.data();
    let xd = params.input_dim();
    let mut u = vec![0.0; h_dim];
    for i in 0..h_dim {
        let mut s = 0.0;
        for j in 0..xd {
            s += w_xh[i * xd + j] * x[j];
        }
        u[i] = params.b_x[i] + s;
    }
    let w = params.slots[0].w_hh.data();
    let b = &params.slots[0].b_h;
    let mut h = vec![0.0; h_dim];
    for _ in 0..l_t {
        let mut next = vec![0.0; h_dim];
        for i in 0..h_dim {
            let mut s = 0.0;
            for k in 0..h_dim {
                s += w[i * h_dim + k] * h[k];
            }
            let z = (u[i] + b[i]) + s;
            next[i] = params.alpha * h[i] + z.max(0.0);
        }
        h = next;
    }
    readout_reference(params, &h)
}

/// Chain of distinct residual layers `h ← α·h + relu(W_l·h + b_l + u)`,
/// one per slot, with the input projection `u` injected into every layer.
pub fn feedforward_chain_reference(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let h_dim = params.hidden_dim();
    let xd = params.input_dim();
    let w_xh = params.w_xh.data();
    let u: Vec<f64> = (0..h_dim)
        .map(|i| params.b_x[i] + (0..xd).fold(0.0, |s, j| s + w_xh[i * xd + j] * x[j]))
        .collect();
    let h = params.slots.iter().fold(vec![0.0; h_dim], |h, layer| {
        let w = layer.w_hh.data();
        (0..h_dim)
            .map(|i| {
                let s = (0..h_dim).fold(0.0, |s, k| s + w[i * h_dim + k] * h[k]);
                let z = (u[i] + layer.b_h[i]) + s;
                params.alpha * h[i] + z.max(0.0)
            })
            .collect()
    });
    readout_reference(params, &h)
}

fn readout_reference(params: &ModelParams, h: &[f64]) -> Vec<f64> {
    let h_dim = params.hidden_dim();
    let w = params.w_hy.data();
    (0..params.output_dim())
        .map(|o| params.b_y[o] + (0..h_dim).fold(0.0, |s, k| s + w[o * h_dim + k] * h[k]))
        .collect()
}

/// Forward outputs of tied vs. untied networks on one random example, and the
/// worst deviation between each tied slot gradient and its replicas' sum.
pub fn tying_case(seed: u64) -> (bool, f64) {
    let mut rng = Rng::new(seed);
    let l_w = 1 + rng.below(3);
    let l_t = l_w + rng.below(6);
    let dims = ModelDims {
        input: 1 + rng.below(5),
        hidden: 1 + rng.below(8),
        output: 1 + rng.below(3),
        l_w,
        vocab: None,
    };
    let activation = if seed % 2 == 0 {
        Activation::Relu
    } else {
        Activation::Oscillator(OscParams::default())
    };
    let sched = LayerSchedule::new(l_w, l_t).unwrap();
    let params = random_params(&mut rng, &dims, &activation);
    let sample = random_sample(&mut rng, &dims, l_t, seed as usize / 2);
    let (untied, usched) = params.untied(&sched);

    let (trace, logits) = forward(&params, &sched, step_inputs(&sample), None, None).unwrap();
    let (utrace, ulogits) = forward(&untied, &usched, step_inputs(&sample), None, None).unwrap();
    let same_forward = logits.as_slice() == ulogits.as_slice() && trace.states == utrace.states;

    let d_logits = draw_uniform(&mut rng, -1.0, 1.0, dims.output).unwrap();
    let g = backward(&trace, &params, &sched, &d_logits, None).unwrap();
    let ug = backward(&utrace, &untied, &usched, &d_logits, None).unwrap();
    let mut worst: f64 = 0.0;
    for p in 0..l_w {
        let mut w_sum = vec![0.0; dims.hidden * dims.hidden];
        let mut b_sum = vec![0.0; dims.hidden];
        for t in (0..l_t).filter(|&t| sched.slot(t) == p) {
            for (s, v) in w_sum.iter_mut().zip(ug.slots[t].d_w_hh.data()) {
                *s += v;
            }
            for (s, v) in b_sum.iter_mut().zip(ug.slots[t].d_b_h.iter()) {
                *s += v;
            }
        }
        for (a, b) in g.slots[p].d_w_hh.data().iter().zip(&w_sum) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in g.slots[p].d_b_h.iter().zip(&b_sum) {
            worst = worst.max((a - b).abs());
        }
    }
    worst = worst.max(shared_deviation(&g, &ug));
    (same_forward, worst)
}

/// Largest difference in the non-slot gradients.
fn shared_deviation(a: &Gradients, b: &Gradients) -> f64 {
    let pairs: [(&[f64], &[f64]); 5] = [
        (std::slice::from_ref(&a.d_alpha), std::slice::from_ref(&b.d_alpha)),
        (a.d_w_xh.data(), b.d_w_xh.data()),
        (a.d_b_x.as_slice(), b.d_b_x.as_slice()),
        (a.d_w_hy.data(), b.d_w_hy.data()),
        (a.d_b_y.as_slice(), b.d_b_y.as_slice()),
    ];
    pairs
        .iter()
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn random_relu_params(seed: u64, l_w: usize) -> (ModelParams, Vector) {
    let mut rng = Rng::new(seed);
    let dims = ModelDims {
        input: 2 + rng.below(4),
        hidden: 2 + rng.below(7),
        output: 1 + rng.below(3),
        l_w,
        vocab: None,
    };
    let p = random_params(&mut rng, &dims, &Activation::Relu);
    let x = draw_uniform(&mut rng, -1.0, 1.0, dims.input).unwrap();
    (p, x)
}
