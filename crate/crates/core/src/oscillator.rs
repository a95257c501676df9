//! Oscillator-node activation: an explicit-Euler integration of
//! `ẋ = (γ_p − γ_nl·x²)·x + drive` over `eta` inner steps, started from the
//! previous hidden state.

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

/// What feeds the oscillator drive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMode {
    /// `W_xh·x + b_x + W_hh[slot]·h + b_h[slot]`, the same pre-activation the
    /// ReLU network uses.
    Recurrent,
    /// `W_xh·x + b_x + b_h[slot]`; the hidden-to-hidden matrices are unused.
    InputOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscParams {
    /// Trainable linear gain.
    pub gamma_p: f64,
    /// Trainable cubic damping.
    pub gamma_nl: f64,
    pub dt: f64,
    pub eta: usize,
    pub drive: DriveMode,
}

impl Default for OscParams {
    fn default() -> Self {
        OscParams {
            gamma_p: 1.0,
            gamma_nl: 0.5,
            dt: 0.1,
            eta: 3,
            drive: DriveMode::Recurrent,
        }
    }
}

/// One Euler step: `h + dt·((γ_p − γ_nl·h²)·h + drive)`.
pub fn osc_step(h: &[f64], drive: &[f64], cfg: &OscParams) -> Vector {
    debug_assert_eq!(h.len(), drive.len());
    h.iter()
        .zip(drive)
        .map(|(&x, &d)| x + cfg.dt * ((cfg.gamma_p - cfg.gamma_nl * x * x) * x + d))
        .collect::<Vec<_>>()
        .into()
}

/// `eta` Euler steps from `h_prev` with the drive held fixed. The caller adds
/// the residual term.
pub fn osc_activation(h_prev: &[f64], drive: &[f64], cfg: &OscParams) -> Vector {
    let mut h = Vector::from_vec(h_prev.to_vec());
    for _ in 0..cfg.eta {
        h = osc_step(&h, drive, cfg);
    }
    h
}

/// Like [`osc_activation`] but also returns the `eta` states the steps
/// started from (`h_c^(0)` .. `h_c^(eta-1)`), which the backward pass needs.
pub fn osc_activation_traced(h_prev: &[f64], drive: &[f64], cfg: &OscParams) -> (Vector, Vec<Vector>) {
    let mut inner = Vec::with_capacity(cfg.eta);
    let mut h = Vector::from_vec(h_prev.to_vec());
    for _ in 0..cfg.eta {
        let next = osc_step(&h, drive, cfg);
        inner.push(h);
        h = next;
    }
    (h, inner)
}

/// Gradients of one oscillator activation.
#[derive(Debug, Clone, PartialEq)]
pub struct OscGrads {
    pub d_h_prev: Vector,
    pub d_drive: Vector,
    pub d_gamma_p: f64,
    pub d_gamma_nl: f64,
}

/// Reverse pass through the inner Euler steps given `∂L/∂h_c^(eta)`.
pub fn osc_backward(inner: &[Vector], d_out: &[f64], cfg: &OscParams) -> OscGrads {
    let n = d_out.len();
    let mut d_h = Vector::from_vec(d_out.to_vec());
    let mut d_drive = Vector::zeros(n);
    let mut d_gamma_p = 0.0;
    let mut d_gamma_nl = 0.0;
    for c in inner.iter().rev() {
        for i in 0..n {
            let x = c[i];
            let g = d_h[i];
            d_drive[i] += cfg.dt * g;
            d_gamma_p += cfg.dt * g * x;
            d_gamma_nl -= cfg.dt * g * x * x * x;
            d_h[i] = g * (1.0 + cfg.dt * (cfg.gamma_p - 3.0 * cfg.gamma_nl * x * x));
        }
    }
    OscGrads {
        d_h_prev: d_h,
        d_drive,
        d_gamma_p,
        d_gamma_nl,
    }
}
