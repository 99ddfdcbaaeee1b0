//! Surrogate dynamic network (SDN): a 185-parameter causal conv net that
//! predicts the decayed post-reset membrane potential τ·u_{t−1} from strictly
//! past inputs, letting the spike train be computed in parallel as
//! s = H(pred + x/v_th − 1).
//!
//! Architecture (train form):
//!   pointwise conv 1→8 (encoder) → grouped conv 8→8 (k=8, zero-pad 8,
//!   truncate to the first L steps) → batch-norm → relu →
//!   [ pointwise conv 8→8 → batch-norm ] residual add → relu →
//!   pointwise conv 8→1 (decoder).
//!
//! The pad-8-then-truncate arrangement makes output t a function of inputs
//! [t−8, t−1] only — exactly the window that determines τ·u_{t−1} up to a
//! τ^8 ≈ 2.6e-6 tail at τ = 0.2. Convs feeding a batch-norm carry no bias
//! (the norm's shift absorbs it), which is what keeps the count below 200.
//!
//! For inference the batch-norms fold into their preceding convs and the
//! encoder folds into the grouped conv, leaving conv(1→8,k8) → relu →
//! [pointwise + add] → relu → pointwise 8→1 with 153 parameters.

use crate::error::{Error, Result};
use crate::lif::SpikeTrain;
use crate::rng::Rng;
use num_traits::Float;

pub const CHANNELS: usize = 8;
pub const KERNEL: usize = 8;

// Flat layout of the 185 trainable parameters.
const ENC_W: usize = 0; // 8
const ENC_B: usize = 8; // 8
const G_W: usize = 16; // 64, [channel][tap]
const GAMMA1: usize = 80; // 8
const BETA1: usize = 88; // 8
const PW_W: usize = 96; // 64, [out][in]
const GAMMA2: usize = 160; // 8
const BETA2: usize = 168; // 8
const DEC_W: usize = 176; // 8
const DEC_B: usize = 184; // 1
pub const PARAM_COUNT: usize = 185;

#[derive(Debug, Clone)]
pub struct SdnModel {
    /// Trainable parameters, flat (see layout constants).
    pub params: Vec<f32>,
    pub running_mean1: [f32; CHANNELS],
    pub running_var1: [f32; CHANNELS],
    pub running_mean2: [f32; CHANNELS],
    pub running_var2: [f32; CHANNELS],
    pub momentum: f32,
    pub eps: f32,
    pub fused: Option<FusedSdn>,
}

/// Inference form after batch-norm/encoder fusion.
#[derive(Debug, Clone)]
pub struct FusedSdn {
    /// Grouped conv over raw input, encoder already folded in: [channel][tap].
    pub conv_w: [[f32; KERNEL]; CHANNELS],
    /// Bias for t ≥ 8 (all taps in range).
    pub bias_steady: [f32; CHANNELS],
    /// Bias for t = 0..7, where leading taps fall into padding and the folded
    /// encoder bias must only count in-range taps: [t][channel].
    pub bias_head: [[f32; CHANNELS]; KERNEL],
    pub pw_w: [[f32; CHANNELS]; CHANNELS],
    pub pw_b: [f32; CHANNELS],
    pub dec_w: [f32; CHANNELS],
    pub dec_b: f32,
}

/// Reusable intermediate tensors for the batched train-mode pass (plus the
/// gradient buffers of the matching backward, so steady-state training does
/// no per-step allocation).
#[derive(Debug, Default)]
pub struct SdnTrainCache {
    b: usize,
    l: usize,
    e: Vec<f32>,
    g: Vec<f32>,
    a: Vec<f32>,
    p: Vec<f32>,
    c2: Vec<f32>,
    pub y: Vec<f32>,
    mu1: [f32; CHANNELS],
    inv_std1: [f32; CHANNELS],
    mu2: [f32; CHANNELS],
    inv_std2: [f32; CHANNELS],
    dz: Vec<f32>,
    da: Vec<f32>,
    dp: Vec<f32>,
    dg: Vec<f32>,
    de: Vec<f32>,
}

impl SdnTrainCache {
    fn ensure(&mut self, b: usize, l: usize) {
        self.b = b;
        self.l = l;
        let n = b * CHANNELS * l;
        self.e.resize(n, 0.0);
        self.g.resize(n, 0.0);
        self.a.resize(n, 0.0);
        self.p.resize(n, 0.0);
        self.c2.resize(n, 0.0);
        self.y.resize(b * l, 0.0);
        self.dz.resize(n, 0.0);
        self.da.resize(n, 0.0);
        self.dp.resize(n, 0.0);
        self.dg.resize(n, 0.0);
        self.de.resize(n, 0.0);
    }
}

#[inline]
fn axpy(dst: &mut [f32], a: f32, src: &[f32]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Eight-accumulator dot product; the unroll lets the compiler vectorize a
/// reduction it would otherwise have to keep strictly sequential.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let head = a.len() - a.len() % 8;
    for (ca, cb) in a[..head].chunks_exact(8).zip(b[..head].chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in a[head..].iter().zip(&b[head..]) {
        s += x * y;
    }
    s
}

/// Scratch buffers for the per-sequence fused forward.
#[derive(Debug, Default)]
pub struct SdnScratch {
    xpad: Vec<f32>,
    a: Vec<f32>,
    p: Vec<f32>,
}

impl SdnModel {
    /// Fresh train-mode model: conv weights uniform in ±1/√fan_in, norms at
    /// identity.
    pub fn init(rng: &mut Rng) -> SdnModel {
        let mut params = vec![0.0f32; PARAM_COUNT];
        let mut fill = |range: std::ops::Range<usize>, fan_in: f64, rng: &mut Rng| {
            let bound = 1.0 / fan_in.sqrt();
            for i in range {
                params[i] = rng.uniform(-bound, bound) as f32;
            }
        };
        fill(ENC_W..ENC_B, 1.0, rng);
        fill(ENC_B..G_W, 1.0, rng);
        fill(G_W..GAMMA1, KERNEL as f64, rng);
        fill(PW_W..GAMMA2, CHANNELS as f64, rng);
        fill(DEC_W..DEC_B + 1, CHANNELS as f64, rng);
        for c in 0..CHANNELS {
            params[GAMMA1 + c] = 1.0;
            params[GAMMA2 + c] = 1.0;
        }
        SdnModel {
            params,
            running_mean1: [0.0; CHANNELS],
            running_var1: [1.0; CHANNELS],
            running_mean2: [0.0; CHANNELS],
            running_var2: [1.0; CHANNELS],
            momentum: 0.1,
            eps: 1e-5,
            fused: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Rebuild an unfused model around an existing flat parameter vector
    /// (identity running statistics; set them separately if needed).
    pub fn from_params(params: Vec<f32>) -> Result<SdnModel> {
        if params.len() != PARAM_COUNT {
            return Err(Error::invalid(format!(
                "expected {PARAM_COUNT} parameters, got {}",
                params.len()
            )));
        }
        Ok(SdnModel {
            params,
            running_mean1: [0.0; CHANNELS],
            running_var1: [1.0; CHANNELS],
            running_mean2: [0.0; CHANNELS],
            running_var2: [1.0; CHANNELS],
            momentum: 0.1,
            eps: 1e-5,
            fused: None,
        })
    }

    fn w(&self, off: usize, n: usize) -> &[f32] {
        &self.params[off..off + n]
    }

    /// Batched train-mode forward with batch statistics; updates running
    /// stats and fills `cache` for a subsequent backward pass.
    /// `x` is row-major [b][t].
    pub fn forward_train(&mut self, x: &[f32], b: usize, l: usize, cache: &mut SdnTrainCache) {
        assert_eq!(x.len(), b * l);
        cache.ensure(b, l);
        let (enc_w, enc_b) = (self.params[ENC_W..ENC_B].to_vec(), self.params[ENC_B..G_W].to_vec());
        // Encoder.
        for bi in 0..b {
            let xs = &x[bi * l..(bi + 1) * l];
            for c in 0..CHANNELS {
                let dst = &mut cache.e[(bi * CHANNELS + c) * l..(bi * CHANNELS + c + 1) * l];
                let (w, bias) = (enc_w[c], enc_b[c]);
                for (d, &s) in dst.iter_mut().zip(xs) {
                    *d = w * s + bias;
                }
            }
        }
        // Grouped causal conv (pad 8, keep first L).
        grouped_conv_forward(self.w(G_W, 64), &cache.e, &mut cache.g, b, l);
        // BN1 (batch stats) + relu.
        let (mu1, var1) = batch_stats(&cache.g, b, l);
        update_running(&mut self.running_mean1, &mut self.running_var1, &mu1, &var1, self.momentum, b * l);
        for c in 0..CHANNELS {
            cache.mu1[c] = mu1[c];
            cache.inv_std1[c] = 1.0 / (var1[c] + self.eps).sqrt();
        }
        affine_relu(
            &cache.g,
            &mut cache.a,
            &cache.mu1,
            &cache.inv_std1,
            self.w(GAMMA1, 8),
            self.w(BETA1, 8),
            b,
            l,
        );
        // Residual segment: pointwise conv + BN2, added back, relu.
        pointwise_forward(self.w(PW_W, 64), &cache.a, &mut cache.p, b, l);
        let (mu2, var2) = batch_stats(&cache.p, b, l);
        update_running(&mut self.running_mean2, &mut self.running_var2, &mu2, &var2, self.momentum, b * l);
        for c in 0..CHANNELS {
            cache.mu2[c] = mu2[c];
            cache.inv_std2[c] = 1.0 / (var2[c] + self.eps).sqrt();
        }
        let gamma2 = self.w(GAMMA2, 8).to_vec();
        let beta2 = self.w(BETA2, 8).to_vec();
        for bi in 0..b {
            for c in 0..CHANNELS {
                let base = (bi * CHANNELS + c) * l;
                let scale = gamma2[c] * cache.inv_std2[c];
                let shift = beta2[c] - cache.mu2[c] * scale;
                for t in 0..l {
                    let z = cache.a[base + t] + cache.p[base + t] * scale + shift;
                    cache.c2[base + t] = if z > 0.0 { z } else { 0.0 };
                }
            }
        }
        // Decoder.
        let dec_w = self.w(DEC_W, 8).to_vec();
        let dec_b = self.params[DEC_B];
        for bi in 0..b {
            let y = &mut cache.y[bi * l..(bi + 1) * l];
            y.iter_mut().for_each(|v| *v = dec_b);
            for c in 0..CHANNELS {
                let src = &cache.c2[(bi * CHANNELS + c) * l..(bi * CHANNELS + c + 1) * l];
                let w = dec_w[c];
                for (d, &s) in y.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }

    /// Backward for the train-mode pass; `dy` is ∂loss/∂output, row-major
    /// [b][t]. Accumulates into `grads` (same layout as `params`).
    pub fn backward_train(&self, x: &[f32], dy: &[f32], cache: &mut SdnTrainCache, grads: &mut [f32]) {
        let (b, l) = (cache.b, cache.l);
        assert_eq!(dy.len(), b * l);
        assert_eq!(grads.len(), PARAM_COUNT);
        // Decoder backward, with the relu2 gate applied in the same pass:
        // dz = dec_w·dy where c2 > 0, else 0.
        let mut d_dec_b = 0.0f64;
        for bi in 0..b {
            let dys = &dy[bi * l..(bi + 1) * l];
            for c in 0..CHANNELS {
                let base = (bi * CHANNELS + c) * l;
                let w = self.params[DEC_W + c];
                grads[DEC_W + c] += dot(dys, &cache.c2[base..base + l]);
                let dst = &mut cache.dz[base..base + l];
                let gate = &cache.c2[base..base + l];
                for ((d, &g), &dv) in dst.iter_mut().zip(gate).zip(dys) {
                    *d = if g > 0.0 { w * dv } else { 0.0 };
                }
            }
            d_dec_b += dys.iter().sum::<f32>() as f64;
        }
        grads[DEC_B] += d_dec_b as f32;
        // Residual split: da gets dz directly; BN2 branch gets dz too.
        cache.da.copy_from_slice(&cache.dz);
        // BN2 backward (batch statistics over b·l per channel).
        bn_backward(
            &cache.dz,
            &cache.p,
            &cache.mu2,
            &cache.inv_std2,
            self.w(GAMMA2, 8),
            &mut cache.dp,
            &mut grads[GAMMA2..GAMMA2 + 16],
            b,
            l,
        );
        // Pointwise backward: dW += dp·aᵀ, da += Wᵀ·dp.
        for bi in 0..b {
            for o in 0..CHANNELS {
                let dpo = &cache.dp[(bi * CHANNELS + o) * l..(bi * CHANNELS + o + 1) * l];
                for i in 0..CHANNELS {
                    let ai = &cache.a[(bi * CHANNELS + i) * l..(bi * CHANNELS + i + 1) * l];
                    grads[PW_W + o * CHANNELS + i] += dot(dpo, ai);
                }
            }
            for i in 0..CHANNELS {
                let base_i = (bi * CHANNELS + i) * l;
                for o in 0..CHANNELS {
                    let w = self.params[PW_W + o * CHANNELS + i];
                    let dpo = &cache.dp[(bi * CHANNELS + o) * l..(bi * CHANNELS + o + 1) * l];
                    axpy(&mut cache.da[base_i..base_i + l], w, dpo);
                }
            }
        }
        // relu1 gate.
        for (d, &v) in cache.da.iter_mut().zip(&cache.a) {
            if v <= 0.0 {
                *d = 0.0;
            }
        }
        // BN1 backward.
        bn_backward(
            &cache.da,
            &cache.g,
            &cache.mu1,
            &cache.inv_std1,
            self.w(GAMMA1, 8),
            &mut cache.dg,
            &mut grads[GAMMA1..GAMMA1 + 16],
            b,
            l,
        );
        // Grouped conv backward.
        grouped_conv_backward(self.w(G_W, 64), &cache.e, &cache.dg, &mut cache.de, &mut grads[G_W..G_W + 64], b, l);
        // Encoder backward.
        for bi in 0..b {
            let xs = &x[bi * l..(bi + 1) * l];
            for c in 0..CHANNELS {
                let des = &cache.de[(bi * CHANNELS + c) * l..(bi * CHANNELS + c + 1) * l];
                grads[ENC_W + c] += dot(des, xs);
                grads[ENC_B + c] += des.iter().sum::<f32>();
            }
        }
    }

    /// Evaluation-mode forward (running statistics, unfused), one sequence.
    pub fn forward_eval(&self, x: &[f32]) -> Vec<f32> {
        let l = x.len();
        assert!(l > 0, "empty input");
        let mut e = vec![0.0f32; CHANNELS * l];
        for c in 0..CHANNELS {
            let (w, bias) = (self.params[ENC_W + c], self.params[ENC_B + c]);
            for t in 0..l {
                e[c * l + t] = w * x[t] + bias;
            }
        }
        let mut g = vec![0.0f32; CHANNELS * l];
        grouped_conv_forward(self.w(G_W, 64), &e, &mut g, 1, l);
        let mut a = vec![0.0f32; CHANNELS * l];
        for c in 0..CHANNELS {
            let inv = 1.0 / (self.running_var1[c] + self.eps).sqrt();
            let scale = self.params[GAMMA1 + c] * inv;
            let shift = self.params[BETA1 + c] - self.running_mean1[c] * scale;
            for t in 0..l {
                let v = g[c * l + t] * scale + shift;
                a[c * l + t] = if v > 0.0 { v } else { 0.0 };
            }
        }
        let mut p = vec![0.0f32; CHANNELS * l];
        pointwise_forward(self.w(PW_W, 64), &a, &mut p, 1, l);
        let mut y = vec![self.params[DEC_B]; l];
        for c in 0..CHANNELS {
            let inv = 1.0 / (self.running_var2[c] + self.eps).sqrt();
            let scale = self.params[GAMMA2 + c] * inv;
            let shift = self.params[BETA2 + c] - self.running_mean2[c] * scale;
            let w = self.params[DEC_W + c];
            for t in 0..l {
                let z = a[c * l + t] + p[c * l + t] * scale + shift;
                let c2 = if z > 0.0 { z } else { 0.0 };
                y[t] += w * c2;
            }
        }
        y
    }

    /// Fold batch-norms (running statistics) and the encoder into the convs.
    /// Errors if already fused.
    pub fn fuse(&mut self) -> Result<()> {
        if self.fused.is_some() {
            return Err(Error::invalid("model is already fused"));
        }
        let mut conv_w = [[0.0f32; KERNEL]; CHANNELS];
        let mut bias_steady = [0.0f32; CHANNELS];
        let mut bias_head = [[0.0f32; CHANNELS]; KERNEL];
        for c in 0..CHANNELS {
            let inv = 1.0 / (self.running_var1[c] + self.eps).sqrt();
            let scale = self.params[GAMMA1 + c] * inv; // BN1 fold
            let bn_shift = self.params[BETA1 + c] - self.running_mean1[c] * scale;
            let enc_w = self.params[ENC_W + c];
            let enc_b = self.params[ENC_B + c];
            let mut tap_sum_all = 0.0f32;
            let mut suffix_sums = [0.0f32; KERNEL + 1]; // Σ_{k ≥ j} ĝ[k]
            for k in (0..KERNEL).rev() {
                let g_hat = self.params[G_W + c * KERNEL + k] * scale;
                conv_w[c][k] = g_hat * enc_w;
                tap_sum_all += g_hat;
                suffix_sums[k] = suffix_sums[k + 1] + g_hat;
            }
            bias_steady[c] = enc_b * tap_sum_all + bn_shift;
            // At t < 8 only taps k ≥ 8−t touch real input; the folded encoder
            // bias must count just those.
            for t in 0..KERNEL {
                bias_head[t][c] = enc_b * suffix_sums[KERNEL - t] + bn_shift;
            }
        }
        let mut pw_w = [[0.0f32; CHANNELS]; CHANNELS];
        let mut pw_b = [0.0f32; CHANNELS];
        for o in 0..CHANNELS {
            let inv = 1.0 / (self.running_var2[o] + self.eps).sqrt();
            let scale = self.params[GAMMA2 + o] * inv;
            for i in 0..CHANNELS {
                pw_w[o][i] = self.params[PW_W + o * CHANNELS + i] * scale;
            }
            pw_b[o] = self.params[BETA2 + o] - self.running_mean2[o] * scale;
        }
        let mut dec_w = [0.0f32; CHANNELS];
        dec_w.copy_from_slice(self.w(DEC_W, 8));
        self.fused = Some(FusedSdn {
            conv_w,
            bias_steady,
            bias_head,
            pw_w,
            pw_b,
            dec_w,
            dec_b: self.params[DEC_B],
        });
        Ok(())
    }

    /// Forward through the fused form if present, else the eval form.
    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        match &self.fused {
            Some(f) => {
                let mut out = vec![0.0f32; x.len()];
                let mut scratch = SdnScratch::default();
                f.forward_into(x, &mut scratch, &mut out);
                out
            }
            Option::None => self.forward_eval(x),
        }
    }
}

impl FusedSdn {
    pub fn param_count(&self) -> usize {
        // conv 64 + steady bias 8 + pointwise 64 + 8 + decoder 8 + 1; the
        // per-position head biases are derived values, not free parameters.
        64 + 8 + 64 + 8 + 8 + 1
    }

    /// One sequence; `out` must match `x` in length.
    pub fn forward_into(&self, x: &[f32], scratch: &mut SdnScratch, out: &mut [f32]) {
        let l = x.len();
        assert!(l > 0, "empty input");
        assert_eq!(out.len(), l);
        scratch.xpad.resize(l + KERNEL, 0.0);
        scratch.xpad[..KERNEL].fill(0.0);
        scratch.xpad[KERNEL..].copy_from_slice(x);
        scratch.a.resize(CHANNELS * l, 0.0);
        scratch.p.resize(CHANNELS * l, 0.0);
        let xpad = &scratch.xpad;
        for c in 0..CHANNELS {
            let a = &mut scratch.a[c * l..(c + 1) * l];
            let steady = self.bias_steady[c];
            for (t, v) in a.iter_mut().enumerate() {
                *v = if t < KERNEL { self.bias_head[t][c] } else { steady };
            }
            for (k, &w) in self.conv_w[c].iter().enumerate() {
                axpy(a, w, &xpad[k..k + l]);
            }
            for v in a.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        for o in 0..CHANNELS {
            let bias = self.pw_b[o];
            scratch.p[o * l..(o + 1) * l].fill(bias);
        }
        for o in 0..CHANNELS {
            for i in 0..CHANNELS {
                let ai = &scratch.a[i * l..(i + 1) * l];
                axpy(&mut scratch.p[o * l..(o + 1) * l], self.pw_w[o][i], ai);
            }
        }
        for t in 0..l {
            out[t] = self.dec_b;
        }
        for c in 0..CHANNELS {
            let w = self.dec_w[c];
            let a = &scratch.a[c * l..(c + 1) * l];
            let p = &scratch.p[c * l..(c + 1) * l];
            for t in 0..l {
                let z = a[t] + p[t];
                if z > 0.0 {
                    out[t] += w * z;
                }
            }
        }
    }
}

/// Parallel spike generation from a leak-term prediction: u'_t = pred_t +
/// x_t/v_th, s_t = H(u'_t − 1). With exact predictions this reproduces the
/// iterative neuron bit for bit (the update is the same two floating-point
/// operations).
pub fn parallel_spike<T: Float>(pred: &[T], x: &[T], v_th: f64) -> Result<(SpikeTrain, Vec<T>)> {
    if !(v_th > 0.0) || !v_th.is_finite() {
        return Err(Error::invalid(format!("v_th {v_th} must be > 0")));
    }
    if pred.len() != x.len() {
        return Err(Error::invalid("parallel_spike: prediction/input length mismatch"));
    }
    let v = T::from(v_th).unwrap();
    let one = T::one();
    let mut spikes = Vec::with_capacity(x.len());
    let mut pre = Vec::with_capacity(x.len());
    for t in 0..x.len() {
        let u = pred[t] + x[t] / v;
        spikes.push((u >= one) as u8);
        pre.push(u);
    }
    Ok((SpikeTrain(spikes), pre))
}

fn grouped_conv_forward(w: &[f32], e: &[f32], g: &mut [f32], b: usize, l: usize) {
    // out[c][t] = Σ_k w[c][k] · e[c][t−8+k], zero-padded on the left.
    let mut epad = vec![0.0f32; l + KERNEL];
    for bc in 0..b * CHANNELS {
        let c = bc % CHANNELS;
        epad[..KERNEL].fill(0.0);
        epad[KERNEL..].copy_from_slice(&e[bc * l..(bc + 1) * l]);
        let out = &mut g[bc * l..(bc + 1) * l];
        out.fill(0.0);
        for k in 0..KERNEL {
            axpy(out, w[c * KERNEL + k], &epad[k..k + l]);
        }
    }
}

fn grouped_conv_backward(
    w: &[f32],
    e: &[f32],
    dg: &[f32],
    de: &mut [f32],
    dw: &mut [f32],
    b: usize,
    l: usize,
) {
    let mut epad = vec![0.0f32; l + KERNEL];
    let mut depad = vec![0.0f32; l + KERNEL];
    for bc in 0..b * CHANNELS {
        let c = bc % CHANNELS;
        epad[..KERNEL].fill(0.0);
        epad[KERNEL..].copy_from_slice(&e[bc * l..(bc + 1) * l]);
        depad.fill(0.0);
        let dgs = &dg[bc * l..(bc + 1) * l];
        for k in 0..KERNEL {
            dw[c * KERNEL + k] += dot(dgs, &epad[k..k + l]);
            axpy(&mut depad[k..k + l], w[c * KERNEL + k], dgs);
        }
        let des = &mut de[bc * l..(bc + 1) * l];
        des.copy_from_slice(&depad[KERNEL..]);
    }
}

fn pointwise_forward(w: &[f32], a: &[f32], p: &mut [f32], b: usize, l: usize) {
    for bi in 0..b {
        for o in 0..CHANNELS {
            let dst = &mut p[(bi * CHANNELS + o) * l..(bi * CHANNELS + o + 1) * l];
            dst.fill(0.0);
            for i in 0..CHANNELS {
                let src = &a[(bi * CHANNELS + i) * l..(bi * CHANNELS + i + 1) * l];
                axpy(dst, w[o * CHANNELS + i], src);
            }
        }
    }
}

fn batch_stats(x: &[f32], b: usize, l: usize) -> ([f32; CHANNELS], [f32; CHANNELS]) {
    let n = (b * l) as f64;
    let mut mean = [0.0f32; CHANNELS];
    let mut var = [0.0f32; CHANNELS];
    for c in 0..CHANNELS {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for bi in 0..b {
            let xs = &x[(bi * CHANNELS + c) * l..(bi * CHANNELS + c + 1) * l];
            for &v in xs {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
        }
        let m = sum / n;
        mean[c] = m as f32;
        var[c] = ((sq / n) - m * m).max(0.0) as f32;
    }
    (mean, var)
}

fn update_running(
    mean: &mut [f32; CHANNELS],
    var: &mut [f32; CHANNELS],
    batch_mean: &[f32; CHANNELS],
    batch_var: &[f32; CHANNELS],
    momentum: f32,
    n: usize,
) {
    // Unbiased variance for the running estimate, biased for normalization —
    // the usual convention.
    let unbias = if n > 1 { n as f32 / (n as f32 - 1.0) } else { 1.0 };
    for c in 0..CHANNELS {
        mean[c] = (1.0 - momentum) * mean[c] + momentum * batch_mean[c];
        var[c] = (1.0 - momentum) * var[c] + momentum * batch_var[c] * unbias;
    }
}

fn affine_relu(
    x: &[f32],
    out: &mut [f32],
    mu: &[f32; CHANNELS],
    inv_std: &[f32; CHANNELS],
    gamma: &[f32],
    beta: &[f32],
    b: usize,
    l: usize,
) {
    for bi in 0..b {
        for c in 0..CHANNELS {
            let base = (bi * CHANNELS + c) * l;
            let scale = gamma[c] * inv_std[c];
            let shift = beta[c] - mu[c] * scale;
            for t in 0..l {
                let v = x[base + t] * scale + shift;
                out[base + t] = if v > 0.0 { v } else { 0.0 };
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bn_backward(
    dout: &[f32],
    x: &[f32],
    mu: &[f32; CHANNELS],
    inv_std: &[f32; CHANNELS],
    gamma: &[f32],
    dx: &mut [f32],
    // Gradient slice covering [gamma; beta] back to back (the flat parameter
    // layout keeps them adjacent).
    dgamma_beta: &mut [f32],
    b: usize,
    l: usize,
) {
    let n = (b * l) as f64;
    for c in 0..CHANNELS {
        // Per-channel sums over (batch, time).
        let mut sum_d = 0.0f64;
        let mut sum_dx_hat = 0.0f64;
        for bi in 0..b {
            let base = (bi * CHANNELS + c) * l;
            for t in 0..l {
                let d = dout[base + t] as f64;
                let xh = ((x[base + t] - mu[c]) * inv_std[c]) as f64;
                sum_d += d;
                sum_dx_hat += d * xh;
            }
        }
        dgamma_beta[c] += sum_dx_hat as f32;
        dgamma_beta[CHANNELS + c] += sum_d as f32;
        let mean_d = (sum_d / n) as f32;
        let mean_dxh = (sum_dx_hat / n) as f32;
        let scale = gamma[c] * inv_std[c];
        for bi in 0..b {
            let base = (bi * CHANNELS + c) * l;
            for t in 0..l {
                let xh = (x[base + t] - mu[c]) * inv_std[c];
                dx[base + t] = scale * (dout[base + t] - mean_d - xh * mean_dxh);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lif::{lif_run, NeuronParams};

    #[test]
    fn param_count_is_under_200() {
        let m = SdnModel::init(&mut Rng::new(1));
        assert_eq!(m.param_count(), 185);
        assert!(m.param_count() < 200);
    }

    #[test]
    fn init_is_deterministic() {
        let a = SdnModel::init(&mut Rng::new(9));
        let b = SdnModel::init(&mut Rng::new(9));
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn output_length_matches_input_length() {
        let m = SdnModel::init(&mut Rng::new(2));
        for l in [1usize, 3, 8, 9, 1024] {
            let x: Vec<f32> = Rng::new(l as u64).normal_seq_f32(l, 0.0, 1.0).unwrap();
            assert_eq!(m.forward_eval(&x).len(), l);
        }
    }

    #[test]
    fn prediction_is_strictly_causal() {
        // Perturbing x at positions ≥ t must leave outputs < t... and since
        // the window is [t−8, t−1], perturbing at position t leaves output t
        // itself unchanged too.
        let mut m = SdnModel::init(&mut Rng::new(3));
        // Push running stats off identity so the eval path is non-trivial.
        let mut cache = SdnTrainCache::default();
        let xb: Vec<f32> = Rng::new(50).normal_seq_f32(4 * 64, 0.0, 1.0).unwrap();
        m.forward_train(&xb, 4, 64, &mut cache);
        let l = 64;
        let x: Vec<f32> = Rng::new(7).normal_seq_f32(l, 0.0, 1.0).unwrap();
        let base = m.forward_eval(&x);
        let mut fused = m.clone();
        fused.fuse().unwrap();
        let base_fused = fused.forward(&x);
        for cut in [0usize, 10, 31, 63] {
            let mut xp = x.clone();
            for v in xp.iter_mut().skip(cut) {
                *v += 5.0;
            }
            let out = m.forward_eval(&xp);
            let out_fused = fused.forward(&xp);
            for t in 0..=cut.min(l - 1) {
                assert_eq!(out[t], base[t], "eval path leaked future at t={t}, cut={cut}");
                assert_eq!(out_fused[t], base_fused[t], "fused path leaked future at t={t}, cut={cut}");
            }
        }
    }

    #[test]
    fn train_mode_stats_update_running_estimates() {
        let mut m = SdnModel::init(&mut Rng::new(4));
        let before = m.running_mean1;
        let x: Vec<f32> = Rng::new(5).normal_seq_f32(8 * 32, 0.5, 1.0).unwrap();
        let mut cache = SdnTrainCache::default();
        m.forward_train(&x, 8, 32, &mut cache);
        assert_ne!(before, m.running_mean1, "running stats must move");
    }

    #[test]
    fn fusion_matches_eval_outputs() {
        let mut m = SdnModel::init(&mut Rng::new(6));
        // Give the norms non-trivial statistics first.
        let mut cache = SdnTrainCache::default();
        for round in 0..5 {
            let x: Vec<f32> = Rng::new(100 + round).normal_seq_f32(16 * 128, 0.0, 1.0).unwrap();
            m.forward_train(&x, 16, 128, &mut cache);
        }
        let mut fused = m.clone();
        fused.fuse().unwrap();
        let f = fused.fused.as_ref().unwrap();
        assert!(f.param_count() <= m.param_count());
        for trial in 0..20 {
            let l = [1usize, 4, 8, 33, 256][trial % 5];
            let x: Vec<f32> = Rng::new(500 + trial as u64).normal_seq_f32(l, 0.0, 1.0).unwrap();
            let unfused = m.forward_eval(&x);
            let fused_out = fused.forward(&x);
            for t in 0..l {
                assert!(
                    (unfused[t] - fused_out[t]).abs() <= 1e-5,
                    "trial {trial} t={t}: {} vs {}",
                    unfused[t],
                    fused_out[t]
                );
            }
        }
    }

    #[test]
    fn fusing_twice_is_rejected() {
        let mut m = SdnModel::init(&mut Rng::new(8));
        m.fuse().unwrap();
        assert!(m.fuse().is_err());
    }

    #[test]
    fn parallel_spike_hand_example() {
        let (s, pre) = parallel_spike(&[0.0, 0.3], &[0.6, 0.8], 1.0).unwrap();
        assert_eq!(s.0, vec![0, 1]);
        assert!((pre[0] - 0.6).abs() < 1e-12);
        assert!((pre[1] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn oracle_predictions_reproduce_iterative_run_bitwise() {
        let params = NeuronParams::default();
        for seed in 0..50u64 {
            let x = Rng::new(seed).normal_seq(256, 0.0, 1.0).unwrap();
            let (s_ref, trace) = lif_run(&x, &params).unwrap();
            let mut pred = vec![0.0f64; x.len()];
            for t in 1..x.len() {
                pred[t] = params.tau * trace.post_reset[t - 1];
            }
            let (s_par, pre) = parallel_spike(&pred, &x, params.v_th).unwrap();
            assert_eq!(s_par, s_ref, "seed {seed}");
            for t in 0..x.len() {
                assert!(
                    pre[t].to_bits() == trace.pre_reset[t].to_bits(),
                    "seed {seed} t={t}: {} vs {}",
                    pre[t],
                    trace.pre_reset[t]
                );
            }
        }
    }

    #[test]
    fn parallel_path_threshold_scaling_is_exact() {
        // Scaling (x, v_th) by α > 0 leaves the parallel spike train
        // unchanged: the path only sees x/v_th.
        let mut m = SdnModel::init(&mut Rng::new(12));
        m.fuse().unwrap();
        let mut rng = Rng::new(13);
        for _ in 0..50 {
            let l = 64;
            let x64 = rng.normal_seq(l, 0.0, 1.0).unwrap();
            let alpha = rng.uniform(0.1, 10.0);
            let v_th = rng.uniform(0.2, 3.0);
            let spikes_of = |xs: &[f64], v: f64| {
                let scaled: Vec<f32> = xs.iter().map(|&q| (q / v) as f32).collect();
                let pred = m.forward(&scaled);
                parallel_spike(&pred, &scaled, 1.0).unwrap().0
            };
            let s0 = spikes_of(&x64, v_th);
            let xs: Vec<f64> = x64.iter().map(|&q| alpha * q).collect();
            let s1 = spikes_of(&xs, alpha * v_th);
            assert_eq!(s0, s1);
        }
    }

    #[test]
    fn parallel_spike_rejects_bad_arguments() {
        assert!(parallel_spike(&[0.0f64], &[0.0, 1.0], 1.0).is_err());
        assert!(parallel_spike(&[0.0f64], &[0.0], 0.0).is_err());
        assert!(parallel_spike(&[0.0f64], &[0.0], -2.0).is_err());
    }

    /// Independent straight-line f64 re-implementation of the train-mode
    /// forward, used as a finite-difference oracle (the f32 graph is too
    /// noisy and its relu kinks too dense for stable difference quotients).
    fn reference_mse_f64(params: &[f64], eps: f64, x: &[f32], target: &[f32], b: usize, l: usize) -> f64 {
        let n = b * l;
        let mut e = vec![0.0f64; b * CHANNELS * l];
        for bi in 0..b {
            for c in 0..CHANNELS {
                for t in 0..l {
                    e[(bi * CHANNELS + c) * l + t] =
                        params[ENC_W + c] * x[bi * l + t] as f64 + params[ENC_B + c];
                }
            }
        }
        let mut g = vec![0.0f64; b * CHANNELS * l];
        for bi in 0..b {
            for c in 0..CHANNELS {
                for t in 0..l {
                    let mut acc = 0.0;
                    for k in 0..KERNEL {
                        let j = (t + k) as isize - KERNEL as isize;
                        if j >= 0 {
                            acc += params[G_W + c * KERNEL + k] * e[(bi * CHANNELS + c) * l + j as usize];
                        }
                    }
                    g[(bi * CHANNELS + c) * l + t] = acc;
                }
            }
        }
        let bn = |src: &[f64], gamma_off: usize, beta_off: usize| -> Vec<f64> {
            let mut out = vec![0.0f64; src.len()];
            for c in 0..CHANNELS {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for bi in 0..b {
                    for t in 0..l {
                        let v = src[(bi * CHANNELS + c) * l + t];
                        sum += v;
                        sq += v * v;
                    }
                }
                let mu = sum / n as f64;
                let var = (sq / n as f64 - mu * mu).max(0.0);
                let inv = 1.0 / (var + eps).sqrt();
                for bi in 0..b {
                    for t in 0..l {
                        let i = (bi * CHANNELS + c) * l + t;
                        out[i] = params[gamma_off + c] * (src[i] - mu) * inv + params[beta_off + c];
                    }
                }
            }
            out
        };
        let a: Vec<f64> = bn(&g, GAMMA1, BETA1).iter().map(|&v| v.max(0.0)).collect();
        let mut p = vec![0.0f64; b * CHANNELS * l];
        for bi in 0..b {
            for o in 0..CHANNELS {
                for t in 0..l {
                    let mut acc = 0.0;
                    for i in 0..CHANNELS {
                        acc += params[PW_W + o * CHANNELS + i] * a[(bi * CHANNELS + i) * l + t];
                    }
                    p[(bi * CHANNELS + o) * l + t] = acc;
                }
            }
        }
        let p_bn = bn(&p, GAMMA2, BETA2);
        let mut loss = 0.0;
        for bi in 0..b {
            for t in 0..l {
                let mut y = params[DEC_B];
                for c in 0..CHANNELS {
                    let i = (bi * CHANNELS + c) * l + t;
                    y += params[DEC_W + c] * (a[i] + p_bn[i]).max(0.0);
                }
                let d = y - target[bi * l + t] as f64;
                loss += d * d;
            }
        }
        loss / n as f64
    }

    #[test]
    fn train_forward_matches_f64_reference() {
        let b = 3;
        let l = 24;
        let x: Vec<f32> = Rng::new(21).normal_seq_f32(b * l, 0.0, 1.0).unwrap();
        let target: Vec<f32> = Rng::new(22).normal_seq_f32(b * l, 0.0, 0.3).unwrap();
        let mut model = SdnModel::init(&mut Rng::new(23));
        let params64: Vec<f64> = model.params.iter().map(|&v| v as f64).collect();
        let ref_loss = reference_mse_f64(&params64, model.eps as f64, &x, &target, b, l);
        let mut cache = SdnTrainCache::default();
        model.forward_train(&x, b, l, &mut cache);
        let mut loss = 0.0f64;
        for i in 0..b * l {
            let d = (cache.y[i] - target[i]) as f64;
            loss += d * d;
        }
        loss /= (b * l) as f64;
        assert!((loss - ref_loss).abs() <= 1e-5 * ref_loss.max(1.0), "{loss} vs {ref_loss}");
    }

    #[test]
    fn train_backward_matches_finite_differences() {
        // Central differences of the f64 reference loss against the analytic
        // f32 backward, probing every parameter block (batch-statistic terms
        // of the norms included).
        let b = 3;
        let l = 24;
        let x: Vec<f32> = Rng::new(21).normal_seq_f32(b * l, 0.0, 1.0).unwrap();
        let target: Vec<f32> = Rng::new(22).normal_seq_f32(b * l, 0.0, 0.3).unwrap();
        let mut model = SdnModel::init(&mut Rng::new(23));
        let params64: Vec<f64> = model.params.iter().map(|&v| v as f64).collect();
        let mut cache = SdnTrainCache::default();
        model.forward_train(&x, b, l, &mut cache);
        let mut dy = vec![0.0f32; b * l];
        for i in 0..b * l {
            dy[i] = 2.0 * (cache.y[i] - target[i]) / (b * l) as f32;
        }
        let mut grads = vec![0.0f32; PARAM_COUNT];
        model.backward_train(&x, &dy, &mut cache, &mut grads);
        let h = 1e-6;
        for idx in 0..PARAM_COUNT {
            let mut up = params64.clone();
            up[idx] += h;
            let mut down = params64.clone();
            down[idx] -= h;
            let fd = (reference_mse_f64(&up, model.eps as f64, &x, &target, b, l)
                - reference_mse_f64(&down, model.eps as f64, &x, &target, b, l))
                / (2.0 * h);
            let got = grads[idx] as f64;
            assert!(
                (fd - got).abs() <= 1e-3 * fd.abs().max(got.abs()) + 1e-5,
                "param {idx}: fd {fd} vs analytic {got}"
            );
        }
    }
}
