//! Surrogate gradients, the backward passes of the spiking layer, and the
//! optimizer.
//!
//! The spike function H(u' − v_th) has no usable derivative, so backward
//! passes substitute the piecewise-quadratic surrogate derivative
//! g'(x) = −α²|x| + α on |x| ≤ 1/α (zero outside). Four backward modes are
//! supported:
//!
//! * `Bptt` — full recursion through membrane state and reset,
//! * `BpttDetached` — reset factor treated as a constant,
//! * `Sltt` — temporal term dropped entirely,
//! * `Sdn` — same formulas as SLTT; the forward pass got its leak term from
//!   the surrogate dynamic network, and that prediction is a constant in the
//!   backward graph.
//!
//! Gradient-checking happens against `relaxed_forward`, which replaces H by
//! the surrogate primitive g and freezes the prediction — a fully smooth
//! function whose analytic gradient is exactly what the SLTT/SDN backward
//! computes.

use crate::error::{Error, Result};
use crate::lif::{NeuronParams, ResetMode};
use num_traits::Float;

/// Piecewise-quadratic surrogate with sharpness α (derivative peak α at 0,
/// support |x| ≤ 1/α).
#[derive(Debug, Clone, Copy)]
pub struct SurrogateFn {
    pub alpha: f64,
}

impl Default for SurrogateFn {
    fn default() -> Self {
        SurrogateFn { alpha: 1.0 }
    }
}

impl SurrogateFn {
    /// g'(x) = −α²|x| + α inside the support, 0 outside.
    pub fn grad<T: Float>(&self, x: T) -> T {
        let alpha = T::from(self.alpha).unwrap();
        let ax = x.abs();
        if ax > alpha.recip() {
            T::zero()
        } else {
            alpha - alpha * alpha * ax
        }
    }

    /// The primitive g: 0 below −1/α, −½α²|x|·x + αx + ½ inside, 1 above.
    pub fn primitive<T: Float>(&self, x: T) -> T {
        let alpha = T::from(self.alpha).unwrap();
        let half = T::from(0.5).unwrap();
        if x < -alpha.recip() {
            T::zero()
        } else if x > alpha.recip() {
            T::one()
        } else {
            -half * alpha * alpha * x.abs() * x + alpha * x + half
        }
    }
}

/// Backward-mode selector for spiking layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Bptt,
    BpttDetached,
    Sltt,
    Sdn,
}

impl TrainMode {
    pub fn parse(s: &str) -> Result<TrainMode> {
        match s {
            "bptt" => Ok(TrainMode::Bptt),
            "bptt-detached" => Ok(TrainMode::BpttDetached),
            "sltt" => Ok(TrainMode::Sltt),
            "sdn" => Ok(TrainMode::Sdn),
            other => Err(Error::invalid(format!(
                "unknown mode '{other}' (expected bptt, bptt-detached, sltt, sdn)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Bptt => "bptt",
            TrainMode::BpttDetached => "bptt-detached",
            TrainMode::Sltt => "sltt",
            TrainMode::Sdn => "sdn",
        }
    }

    /// Whether the forward pass runs the iterative neuron (vs the parallel
    /// SDN path).
    pub fn iterative_forward(&self) -> bool {
        !matches!(self, TrainMode::Sdn)
    }
}

/// Gradients leaving a spiking layer: per-step input gradient and the
/// accumulated threshold gradient.
#[derive(Debug, Clone)]
pub struct GradSignal {
    pub d_input: Vec<f64>,
    pub d_vth: f64,
}

/// Fixed-threshold backward pass. `delta` is the upstream gradient of the
/// spike outputs; `pre_reset`/`spikes` are the forward trace of the same
/// mode's forward graph. Hard reset only (the reset-coupling term below is
/// derived for it).
pub fn backward_spiking(
    mode: TrainMode,
    delta: &[f64],
    pre_reset: &[f64],
    spikes: &[u8],
    params: &NeuronParams,
    sg: &SurrogateFn,
) -> Result<GradSignal> {
    params.validate()?;
    if params.reset != ResetMode::Hard {
        return Err(Error::invalid("backward_spiking supports hard reset only"));
    }
    let l = delta.len();
    if pre_reset.len() != l || spikes.len() != l {
        return Err(Error::invalid("backward_spiking: trace/delta length mismatch"));
    }
    let tau = params.tau;
    let v_th = params.v_th;
    let u_r = params.u_r;
    let mut d_input = vec![0.0; l];
    let mut d_vth = 0.0;
    // Reverse sweep; carry = ∂L/∂u'_{t+1}.
    let mut carry = 0.0;
    for t in (0..l).rev() {
        let g = sg.grad(pre_reset[t] - v_th);
        let keep = 1.0 - spikes[t] as f64;
        let (gu, spike_path) = match mode {
            TrainMode::Bptt => {
                let spike_path = delta[t] + tau * carry * (u_r - pre_reset[t]);
                (spike_path * g + tau * carry * keep, spike_path)
            }
            TrainMode::BpttDetached => (delta[t] * g + tau * carry * keep, delta[t]),
            TrainMode::Sltt | TrainMode::Sdn => (delta[t] * g, delta[t]),
        };
        d_input[t] = gu;
        d_vth -= spike_path * g;
        carry = gu;
    }
    Ok(GradSignal { d_input, d_vth })
}

/// Scaled-input backward pass for the SDN/SLTT forward that consumed x/v_th
/// with the threshold normalized to 1: ġ_t = g'(pred_t + x_t/v_th − 1),
/// ∂L/∂x_t = δ_t·ġ_t/v_th, ∂L/∂v_th = Σ_t δ_t·ġ_t·(−x_t/v_th²).
pub fn backward_spiking_scaled(
    delta: &[f64],
    pred: &[f64],
    x: &[f64],
    v_th: f64,
    sg: &SurrogateFn,
) -> Result<GradSignal> {
    if !(v_th > 0.0) || !v_th.is_finite() {
        return Err(Error::invalid(format!("v_th {v_th} must be > 0")));
    }
    let l = delta.len();
    if pred.len() != l || x.len() != l {
        return Err(Error::invalid("backward_spiking_scaled: length mismatch"));
    }
    let mut d_input = vec![0.0; l];
    let mut d_vth = 0.0;
    for t in 0..l {
        let g = sg.grad(pred[t] + x[t] / v_th - 1.0);
        d_input[t] = delta[t] * g / v_th;
        d_vth -= delta[t] * g * x[t] / (v_th * v_th);
    }
    Ok(GradSignal { d_input, d_vth })
}

/// Threshold gradient alone for the scaled-input form, given precomputed
/// surrogate derivatives ġ_t.
pub fn threshold_grad_scaled(delta: &[f64], sg_values: &[f64], x: &[f64], v_th: f64) -> Result<f64> {
    if !(v_th > 0.0) || !v_th.is_finite() {
        return Err(Error::invalid(format!("v_th {v_th} must be > 0")));
    }
    if delta.len() != sg_values.len() || delta.len() != x.len() {
        return Err(Error::invalid("threshold_grad_scaled: length mismatch"));
    }
    Ok(delta
        .iter()
        .zip(sg_values)
        .zip(x)
        .map(|((&d, &g), &xt)| -d * g * xt / (v_th * v_th))
        .sum())
}

/// Which smooth forward the gradient check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdForm {
    /// u' = pred + x, spike relaxed to g(u' − v_th).
    Fixed,
    /// u' = pred + x/v_th, spike relaxed to g(u' − 1).
    Scaled,
}

/// Smooth stand-in for the spiking layer: the Heaviside becomes the
/// surrogate primitive and `pred` (the leak term) is a constant, so this is
/// differentiable in `x` and `v_th` and its analytic gradient is exactly the
/// SLTT/SDN backward. `weights` are the per-step loss weights (play the role
/// of δ_t).
pub fn relaxed_forward(
    form: ThresholdForm,
    weights: &[f64],
    x: &[f64],
    pred: &[f64],
    v_th: f64,
    sg: &SurrogateFn,
) -> f64 {
    let mut loss = 0.0;
    for t in 0..x.len() {
        let arg = match form {
            ThresholdForm::Fixed => pred[t] + x[t] - v_th,
            ThresholdForm::Scaled => pred[t] + x[t] / v_th - 1.0,
        };
        loss += weights[t] * sg.primitive(arg);
    }
    loss
}

/// AdamW over one flat f32 parameter tensor; moment state is kept in f64.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64, n: usize) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid("AdamW: parameter/gradient size mismatch"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical("AdamW: non-finite gradient"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i] as f64;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let mut p = params[i] as f64;
            p *= 1.0 - self.lr * self.weight_decay;
            p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            params[i] = p as f32;
        }
        Ok(())
    }
}
