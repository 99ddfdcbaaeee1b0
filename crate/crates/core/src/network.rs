//! The assembled spiking state-space network: a dense encoder, a stack of
//! blocks (norm → per-channel SSM → spiking neuron → feature-mix dense →
//! dropout → residual), and a mean-pool classifier head. The spiking stage
//! runs either iteratively (the reference LIF neuron) or in parallel through
//! a frozen surrogate dynamic network, and training supports four gradient
//! modes that share this forward graph.
//!
//! Numeric layout: all trainable parameters are f32, split into two flat
//! arenas — `gen` (encoder, feature-mix, decoder; gets weight decay) and
//! `aux` (SSM C/log Δ, norm scale/shift, thresholds; no decay, learning rate
//! capped at 1e-3 as is conventional for state-space kernels). Tensors are
//! row-major [batch][channel][time].

use crate::error::{Error, Result};
use crate::fft::{mul_conj_accum, mul_into, FftConv};
use crate::grad::{backward_spiking, backward_spiking_scaled, AdamW, SurrogateFn, TrainMode};
use crate::lif::{lif_run, NeuronParams, ResetMode, SpikeTrain};
use crate::metrics::{histogram_from_samples, LayerHistogram};
use crate::rng::Rng;
use crate::s4d::{discretize_zoh_unchecked, kernel_param_grads, s4d_lin_init, ssm_kernel_f32};
use crate::sdn::{SdnModel, SdnScratch};
use num_complex::{Complex, Complex64};

type C32 = Complex<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Batch,
    Layer,
}

impl NormKind {
    pub fn parse(s: &str) -> Result<NormKind> {
        match s {
            "batch" => Ok(NormKind::Batch),
            "layer" => Ok(NormKind::Layer),
            other => Err(Error::invalid(format!("unknown norm '{other}' (expected batch or layer)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NormKind::Batch => "batch",
            NormKind::Layer => "layer",
        }
    }
}

/// Which forward graph produces the spike trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    /// Frozen surrogate network predicts the leak term; spikes in one shot.
    Parallel,
    /// Reference step-by-step LIF neuron.
    Iterative,
}

impl SpikeMode {
    pub fn for_training(mode: TrainMode) -> SpikeMode {
        if mode.iterative_forward() {
            SpikeMode::Iterative
        } else {
            SpikeMode::Parallel
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockConfig {
    pub h: usize,
    pub n: usize,
    pub norm: NormKind,
    pub prenorm: bool,
    pub dropout: f64,
    pub tau: f64,
    pub v_th_init: f64,
    pub learnable_vth: bool,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Surrogate sharpness for training.
    pub alpha: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            h: 64,
            n: 64,
            norm: NormKind::Layer,
            prenorm: true,
            dropout: 0.1,
            tau: 0.2,
            v_th_init: 1.0,
            learnable_vth: true,
            delta_min: 1e-3,
            delta_max: 1e-1,
            alpha: 1.0,
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.n == 0 || self.n % 2 != 0 {
            return Err(Error::invalid("block needs h > 0 and even n > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::invalid(format!("tau {} outside [0, 1]", self.tau)));
        }
        if !(self.v_th_init > 0.0) {
            return Err(Error::invalid("v_th_init must be > 0"));
        }
        if !(self.delta_min > 0.0 && self.delta_max >= self.delta_min) {
            return Err(Error::invalid("need 0 < delta_min <= delta_max"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NetConfig {
    pub depth: usize,
    pub classes: usize,
    pub block: BlockConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { depth: 2, classes: 10, block: BlockConfig::default() }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.classes < 2 {
            return Err(Error::invalid("network needs depth > 0 and at least two classes"));
        }
        self.block.validate()
    }
}

// Offsets into the two parameter arenas.
#[derive(Debug, Clone)]
struct Layout {
    enc_w: usize,
    enc_b: usize,
    mix_w: Vec<usize>,
    mix_b: Vec<usize>,
    dec_w: usize,
    dec_b: usize,
    gen_total: usize,
    c: Vec<usize>,
    log_delta: Vec<usize>,
    gamma: Vec<usize>,
    beta: Vec<usize>,
    v_th: Vec<usize>,
    aux_total: usize,
}

impl Layout {
    fn new(cfg: &NetConfig) -> Layout {
        let h = cfg.block.h;
        let mut gen = 0usize;
        let enc_w = gen;
        gen += h;
        let enc_b = gen;
        gen += h;
        let mut mix_w = Vec::new();
        let mut mix_b = Vec::new();
        for _ in 0..cfg.depth {
            mix_w.push(gen);
            gen += h * h;
            mix_b.push(gen);
            gen += h;
        }
        let dec_w = gen;
        gen += cfg.classes * h;
        let dec_b = gen;
        gen += cfg.classes;
        let mut aux = 0usize;
        let mut c = Vec::new();
        let mut log_delta = Vec::new();
        let mut gamma = Vec::new();
        let mut beta = Vec::new();
        let mut v_th = Vec::new();
        for _ in 0..cfg.depth {
            c.push(aux);
            aux += h * cfg.block.n;
            log_delta.push(aux);
            aux += h;
            gamma.push(aux);
            aux += h;
            beta.push(aux);
            aux += h;
            v_th.push(aux);
            aux += 1;
        }
        Layout {
            enc_w,
            enc_b,
            mix_w,
            mix_b,
            dec_w,
            dec_b,
            gen_total: gen,
            c,
            log_delta,
            gamma,
            beta,
            v_th,
            aux_total: aux,
        }
    }
}

pub struct SpikingSsmNetwork {
    pub cfg: NetConfig,
    /// Weight-decayed parameters: encoder, feature-mix layers, decoder.
    pub gen: Vec<f32>,
    /// Decay-free parameters: SSM C/log Δ, norm scale/shift, thresholds.
    pub aux: Vec<f32>,
    layout: Layout,
    /// Shared fixed state matrix (−1/2 + iπk) and input vector (ones).
    a_fixed: Vec<Complex64>,
    b_fixed: Vec<Complex64>,
    /// Batch-norm running statistics per block (used when norm = batch).
    bn_mean: Vec<Vec<f32>>,
    bn_var: Vec<Vec<f32>>,
    pub sdn: Option<SdnModel>,
    pub eps: f32,
    pub bn_momentum: f32,
    /// Install to collect per-stage wall times across forward/backward calls.
    pub timers: Option<StageTimers>,
}

#[derive(Debug, Default)]
struct BlockTape {
    x_in: Vec<f32>,
    z: Vec<f32>,
    norm_mu: Vec<f32>,
    norm_inv: Vec<f32>,
    x_spec: Vec<C32>,
    kernels: Vec<f32>,
    y: Vec<f32>,
    /// SDN leak predictions (parallel mode).
    pred: Vec<f32>,
    /// Pre-reset membrane trace (iterative mode).
    pre: Vec<f32>,
    spikes: Vec<u8>,
    mask: Vec<u8>,
    /// Residual sum before a post-norm (post-norm placement only).
    r: Vec<f32>,
}

/// Activation record of one forward pass, consumed by `backward`.
#[derive(Debug, Default)]
pub struct Tape {
    b: usize,
    l: usize,
    mode: Option<SpikeMode>,
    train: bool,
    x_raw: Vec<f32>,
    blocks: Vec<BlockTape>,
    final_out: Vec<f32>,
    pooled: Vec<f32>,
}

/// Per-stage wall-time accumulators (seconds), filled by `forward` and
/// `backward` when installed on the network. The spiking stage is split into
/// its integration part (the membrane recursion, or the surrogate network
/// that replaces it) and its fire part (thresholding plus the fire-rule
/// gradient).
#[derive(Debug, Default, Clone)]
pub struct StageTimers {
    pub encoder: f64,
    pub norm: f64,
    pub ssm: f64,
    pub leak_integrate: f64,
    pub fire: f64,
    pub output_linear: f64,
    pub decoder: f64,
}

impl StageTimers {
    pub fn merge(&mut self, other: &StageTimers) {
        self.encoder += other.encoder;
        self.norm += other.norm;
        self.ssm += other.ssm;
        self.leak_integrate += other.leak_integrate;
        self.fire += other.fire;
        self.output_linear += other.output_linear;
        self.decoder += other.decoder;
    }

    pub fn rows(&self) -> [(&'static str, f64); 7] {
        [
            ("encoder", self.encoder),
            ("norm", self.norm),
            ("ssm", self.ssm),
            ("leak-integrate", self.leak_integrate),
            ("fire", self.fire),
            ("output-linear", self.output_linear),
            ("decoder", self.decoder),
        ]
    }
}

pub struct ForwardStats {
    pub logits: Vec<f32>,
    pub spike_ones: u64,
    pub spike_total: u64,
}

impl ForwardStats {
    pub fn mean_spiking_rate(&self) -> f64 {
        if self.spike_total == 0 {
            0.0
        } else {
            self.spike_ones as f64 / self.spike_total as f64
        }
    }
}

impl SpikingSsmNetwork {
    pub fn init(cfg: &NetConfig, seed: u64) -> Result<SpikingSsmNetwork> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let h = cfg.block.h;
        let n = cfg.block.n;
        let mut rng = Rng::new(seed);
        let mut gen = vec![0.0f32; layout.gen_total];
        let mut aux = vec![0.0f32; layout.aux_total];
        let uniform = |dst: &mut [f32], bound: f64, rng: &mut Rng| {
            for v in dst.iter_mut() {
                *v = rng.uniform(-bound, bound) as f32;
            }
        };
        uniform(&mut gen[layout.enc_w..layout.enc_w + h], 1.0, &mut rng);
        uniform(&mut gen[layout.enc_b..layout.enc_b + h], 1.0, &mut rng);
        let mut a_fixed = Vec::new();
        for i in 0..cfg.depth {
            let params = s4d_lin_init(h, n, (cfg.block.delta_min, cfg.block.delta_max), &mut rng)?;
            if i == 0 {
                a_fixed = params[0].a.clone();
            }
            for (ch, p) in params.iter().enumerate() {
                let base = layout.c[i] + ch * n;
                for (m, cv) in p.c.iter().enumerate() {
                    aux[base + 2 * m] = cv.re as f32;
                    aux[base + 2 * m + 1] = cv.im as f32;
                }
                aux[layout.log_delta[i] + ch] = p.log_delta as f32;
            }
            let bound = 1.0 / (h as f64).sqrt();
            uniform(&mut gen[layout.mix_w[i]..layout.mix_w[i] + h * h], bound, &mut rng);
            uniform(&mut gen[layout.mix_b[i]..layout.mix_b[i] + h], bound, &mut rng);
            for c in 0..h {
                aux[layout.gamma[i] + c] = 1.0;
            }
            aux[layout.v_th[i]] = cfg.block.v_th_init as f32;
        }
        let bound = 1.0 / (h as f64).sqrt();
        uniform(&mut gen[layout.dec_w..layout.dec_w + cfg.classes * h], bound, &mut rng);
        uniform(&mut gen[layout.dec_b..layout.dec_b + cfg.classes], bound, &mut rng);
        Ok(SpikingSsmNetwork {
            cfg: *cfg,
            gen,
            aux,
            layout,
            a_fixed,
            b_fixed: vec![Complex64::new(1.0, 0.0); n / 2],
            bn_mean: vec![vec![0.0; h]; cfg.depth],
            bn_var: vec![vec![1.0; h]; cfg.depth],
            sdn: None,
            eps: 1e-5,
            bn_momentum: 0.1,
            timers: None,
        })
    }

    /// Install the frozen spiking-prediction network, fusing it for
    /// inference if needed.
    pub fn attach_sdn(&mut self, sdn: &SdnModel) -> Result<()> {
        let mut local = sdn.clone();
        if local.fused.is_none() {
            local.fuse()?;
        }
        self.sdn = Some(local);
        Ok(())
    }

    pub fn gen_len(&self) -> usize {
        self.layout.gen_total
    }

    pub fn aux_len(&self) -> usize {
        self.layout.aux_total
    }

    pub fn v_th(&self, block: usize) -> f32 {
        self.aux[self.layout.v_th[block]]
    }

    /// Per-block batch-norm running (mean, variance) pairs.
    pub fn bn_running(&self) -> Vec<(Vec<f32>, Vec<f32>)> {
        self.bn_mean
            .iter()
            .zip(&self.bn_var)
            .map(|(m, v)| (m.clone(), v.clone()))
            .collect()
    }

    pub fn set_bn_running(&mut self, block: usize, mean: &[f32], var: &[f32]) -> Result<()> {
        let h = self.cfg.block.h;
        if block >= self.cfg.depth || mean.len() != h || var.len() != h {
            return Err(Error::invalid("running-stat shape mismatch"));
        }
        self.bn_mean[block].copy_from_slice(mean);
        self.bn_var[block].copy_from_slice(var);
        Ok(())
    }

    fn channel_c(&self, block: usize, ch: usize) -> Vec<Complex64> {
        let n = self.cfg.block.n;
        let base = self.layout.c[block] + ch * n;
        (0..n / 2)
            .map(|m| Complex64::new(self.aux[base + 2 * m] as f64, self.aux[base + 2 * m + 1] as f64))
            .collect()
    }

    /// Norm stage for one block: writes the normalized tensor into `z` and
    /// records statistics for the backward pass. In train mode a batch norm
    /// also updates its running estimates.
    #[allow(clippy::too_many_arguments)]
    fn norm_apply(
        &mut self,
        block: usize,
        x: &[f32],
        b: usize,
        l: usize,
        train: bool,
        z: &mut [f32],
        mu_out: &mut Vec<f32>,
        inv_out: &mut Vec<f32>,
    ) {
        let h = self.cfg.block.h;
        let gamma = &self.aux[self.layout.gamma[block]..self.layout.gamma[block] + h];
        let beta = &self.aux[self.layout.beta[block]..self.layout.beta[block] + h];
        match self.cfg.block.norm {
            NormKind::Layer => {
                ln_forward(x, b, h, l, gamma, beta, self.eps, z, mu_out, inv_out);
            }
            NormKind::Batch => {
                if train {
                    let (mu, var) = bn_batch_stats(x, b, h, l);
                    let count = b * l;
                    let unbias = if count > 1 { count as f32 / (count as f32 - 1.0) } else { 1.0 };
                    for c in 0..h {
                        self.bn_mean[block][c] =
                            (1.0 - self.bn_momentum) * self.bn_mean[block][c] + self.bn_momentum * mu[c];
                        self.bn_var[block][c] = (1.0 - self.bn_momentum) * self.bn_var[block][c]
                            + self.bn_momentum * var[c] * unbias;
                    }
                    mu_out.clear();
                    mu_out.extend_from_slice(&mu);
                    inv_out.clear();
                    inv_out.extend(var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()));
                } else {
                    mu_out.clear();
                    mu_out.extend_from_slice(&self.bn_mean[block]);
                    inv_out.clear();
                    inv_out.extend(self.bn_var[block].iter().map(|&v| 1.0 / (v + self.eps).sqrt()));
                }
                bn_apply(x, b, h, l, mu_out, inv_out, gamma, beta, z);
            }
        }
    }

    /// Per-channel SSM stage: builds kernels from the current parameters and
    /// convolves every row. Stores kernels and input spectra when given tape
    /// slots (the backward pass reuses both).
    #[allow(clippy::too_many_arguments)]
    fn ssm_apply(
        &self,
        block: usize,
        z: &[f32],
        b: usize,
        l: usize,
        plan: &FftConv<f32>,
        y: &mut [f32],
        kernels: &mut [f32],
        mut x_spec: Option<&mut [C32]>,
    ) {
        let h = self.cfg.block.h;
        let size = plan.size();
        let mut scratch = plan.make_scratch();
        let mut kf = plan.make_buf();
        let mut work = plan.make_buf();
        let mut local_spec = plan.make_buf();
        for ch in 0..h {
            let c = self.channel_c(block, ch);
            let delta = (self.aux[self.layout.log_delta[block] + ch] as f64).exp();
            let disc = discretize_zoh_unchecked(&self.a_fixed, &self.b_fixed, delta);
            let krow = &mut kernels[ch * l..(ch + 1) * l];
            krow.copy_from_slice(&ssm_kernel_f32(&disc, &c, l));
            plan.spectrum_into(krow, &mut kf, &mut scratch);
            for bi in 0..b {
                let row = &z[(bi * h + ch) * l..(bi * h + ch + 1) * l];
                let spec: &mut [C32] = match x_spec.as_deref_mut() {
                    Some(slab) => &mut slab[(bi * h + ch) * size..(bi * h + ch + 1) * size],
                    Option::None => &mut local_spec,
                };
                plan.spectrum_into(row, spec, &mut scratch);
                mul_into(spec, &kf, &mut work);
                plan.inverse_prefix(&mut work, &mut scratch, &mut y[(bi * h + ch) * l..(bi * h + ch + 1) * l]);
            }
        }
    }

    /// Spiking stage: y → binary spikes, recording either the SDN
    /// predictions (parallel) or the pre-reset trace (iterative). `split`
    /// optionally receives (integration seconds, fire seconds).
    #[allow(clippy::too_many_arguments)]
    fn spike_stage(
        &self,
        block: usize,
        y: &[f32],
        b: usize,
        l: usize,
        mode: SpikeMode,
        spikes: &mut [u8],
        pred: &mut Vec<f32>,
        pre: &mut Vec<f32>,
        split: Option<&mut (f64, f64)>,
    ) -> Result<(u64, u64)> {
        let h = self.cfg.block.h;
        let v_th = self.v_th(block);
        if !(v_th > 0.0) {
            return Err(Error::numerical(format!(
                "block {block}: threshold drifted to {v_th} (must stay positive)"
            )));
        }
        let mut ones = 0u64;
        let mut li = 0.0f64;
        let timing = split.is_some();
        let clock = |on: bool| on.then(std::time::Instant::now);
        match mode {
            SpikeMode::Parallel => {
                let sdn = self.sdn.as_ref().ok_or_else(|| {
                    Error::invalid("parallel spiking requires an attached surrogate network")
                })?;
                let fused = sdn
                    .fused
                    .as_ref()
                    .ok_or_else(|| Error::invalid("attached surrogate network must be fused"))?;
                pred.resize(b * h * l, 0.0);
                pre.clear();
                let mut scratch = SdnScratch::default();
                let mut scaled = vec![0.0f32; b * h * l];
                let t0 = clock(timing);
                for (s, &v) in scaled.iter_mut().zip(y) {
                    *s = v / v_th;
                }
                for r in 0..b * h {
                    fused.forward_into(
                        &scaled[r * l..(r + 1) * l],
                        &mut scratch,
                        &mut pred[r * l..(r + 1) * l],
                    );
                }
                if let Some(t0) = t0 {
                    li = t0.elapsed().as_secs_f64();
                }
                let t1 = clock(timing);
                for ((sp, &p), &sc) in spikes.iter_mut().zip(pred.iter()).zip(scaled.iter()) {
                    let fire = p + sc >= 1.0;
                    *sp = fire as u8;
                    ones += fire as u64;
                }
                if let Some(s) = split {
                    s.0 += li;
                    s.1 += t1.unwrap().elapsed().as_secs_f64();
                }
            }
            SpikeMode::Iterative => {
                let params = NeuronParams {
                    tau: self.cfg.block.tau,
                    v_th: v_th as f64,
                    u_r: 0.0,
                    reset: ResetMode::Hard,
                };
                pre.resize(b * h * l, 0.0);
                pred.clear();
                let t0 = clock(timing);
                for r in 0..b * h {
                    let yrow = &y[r * l..(r + 1) * l];
                    let (_, trace) = lif_run(yrow, &params)?;
                    pre[r * l..(r + 1) * l].copy_from_slice(&trace.pre_reset);
                }
                if let Some(t0) = t0 {
                    li = t0.elapsed().as_secs_f64();
                }
                // Fire decision re-read from the pre-reset trace (identical
                // to the in-loop rule: fire iff u' >= threshold).
                let t1 = clock(timing);
                let vth32 = v_th;
                for (sp, &u) in spikes.iter_mut().zip(pre.iter()) {
                    let fire = u >= vth32;
                    *sp = fire as u8;
                    ones += fire as u64;
                }
                if let Some(s) = split {
                    s.0 += li;
                    s.1 += t1.unwrap().elapsed().as_secs_f64();
                }
            }
        }
        Ok((ones, (b * h * l) as u64))
    }

    /// Full forward pass. `train` enables batch statistics and dropout (the
    /// latter needs `dropout_rng`); `tape` captures activations for a
    /// subsequent `backward`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &mut self,
        x: &[f32],
        b: usize,
        l: usize,
        mode: SpikeMode,
        train: bool,
        mut dropout_rng: Option<&mut Rng>,
        mut tape: Option<&mut Tape>,
    ) -> Result<ForwardStats> {
        if x.len() != b * l || b == 0 || l == 0 {
            return Err(Error::invalid(format!(
                "input length {} does not match batch {b} x length {l}",
                x.len()
            )));
        }
        let h = self.cfg.block.h;
        let depth = self.cfg.depth;
        let dropout = if train { self.cfg.block.dropout } else { 0.0 };
        if dropout > 0.0 && dropout_rng.is_none() {
            return Err(Error::invalid("training forward with dropout needs an RNG"));
        }
        if let Some(t) = tape.as_deref_mut() {
            t.b = b;
            t.l = l;
            t.mode = Some(mode);
            t.train = train;
            t.x_raw.clear();
            t.x_raw.extend_from_slice(x);
            t.blocks.resize_with(depth, BlockTape::default);
        }
        let timing = self.timers.is_some();
        let clock = |on: bool| on.then(std::time::Instant::now);
        let lap = |t0: Option<std::time::Instant>, acc: &mut f64| {
            if let Some(t0) = t0 {
                *acc += t0.elapsed().as_secs_f64();
            }
        };
        let mut tm = StageTimers::default();
        let mut spike_split = (0.0f64, 0.0f64);
        let plan = FftConv::<f32>::new(l);
        let size = plan.size();
        // Encoder: scalar per step → h channels.
        let t0 = clock(timing);
        let mut cur = vec![0.0f32; b * h * l];
        for bi in 0..b {
            let xs = &x[bi * l..(bi + 1) * l];
            for c in 0..h {
                let w = self.gen[self.layout.enc_w + c];
                let bias = self.gen[self.layout.enc_b + c];
                let dst = &mut cur[(bi * h + c) * l..(bi * h + c + 1) * l];
                for (d, &s) in dst.iter_mut().zip(xs) {
                    *d = w * s + bias;
                }
            }
        }
        lap(t0, &mut tm.encoder);
        let mut ones_total = 0u64;
        let mut steps_total = 0u64;
        // Reusable per-block buffers when no tape is kept.
        let mut z_buf = vec![0.0f32; b * h * l];
        let mut y_buf = vec![0.0f32; b * h * l];
        let mut kern_buf = vec![0.0f32; h * l];
        let mut spike_buf = vec![0u8; b * h * l];
        let mut pred_buf = Vec::new();
        let mut pre_buf = Vec::new();
        let mut mu_buf = Vec::new();
        let mut inv_buf = Vec::new();
        let mut mt = vec![0.0f32; l * h];
        for i in 0..depth {
            let local_mask: Vec<u8>;
            if let Some(t) = tape.as_deref_mut() {
                let bt = &mut t.blocks[i];
                bt.x_in.clear();
                bt.x_in.extend_from_slice(&cur);
                bt.z.resize(b * h * l, 0.0);
                bt.y.resize(b * h * l, 0.0);
                bt.kernels.resize(h * l, 0.0);
                bt.x_spec.resize(b * h * size, C32::new(0.0, 0.0));
                bt.spikes.resize(b * h * l, 0);
            }
            // Pre-norm (or pass-through).
            {
                let t0 = clock(timing);
                let (z, mu, inv): (&mut [f32], &mut Vec<f32>, &mut Vec<f32>) = match tape.as_deref_mut() {
                    Some(t) => {
                        let bt = &mut t.blocks[i];
                        (&mut bt.z, &mut bt.norm_mu, &mut bt.norm_inv)
                    }
                    Option::None => (&mut z_buf, &mut mu_buf, &mut inv_buf),
                };
                if self.cfg.block.prenorm {
                    let x_in = cur.clone();
                    self.norm_apply(i, &x_in, b, l, train, z, mu, inv);
                } else {
                    z.copy_from_slice(&cur);
                }
                lap(t0, &mut tm.norm);
            }
            // SSM + spiking, reading/writing tape slots when present.
            {
                let (z, y, kernels, spec, spikes, pred, pre): (
                    &[f32],
                    &mut [f32],
                    &mut [f32],
                    Option<&mut [C32]>,
                    &mut [u8],
                    &mut Vec<f32>,
                    &mut Vec<f32>,
                ) = match tape.as_deref_mut() {
                    Some(t) => {
                        let bt = &mut t.blocks[i];
                        (
                            &bt.z,
                            &mut bt.y,
                            &mut bt.kernels,
                            Some(&mut bt.x_spec),
                            &mut bt.spikes,
                            &mut bt.pred,
                            &mut bt.pre,
                        )
                    }
                    Option::None => (
                        &z_buf,
                        &mut y_buf,
                        &mut kern_buf,
                        Option::None,
                        &mut spike_buf,
                        &mut pred_buf,
                        &mut pre_buf,
                    ),
                };
                let t0 = clock(timing);
                self.ssm_apply(i, z, b, l, &plan, y, kernels, spec);
                lap(t0, &mut tm.ssm);
                let split = timing.then_some(&mut spike_split);
                let (ones, steps) = self.spike_stage(i, y, b, l, mode, spikes, pred, pre, split)?;
                ones_total += ones;
                steps_total += steps;
            }
            // Feature mix over binary spikes, dropout, residual.
            let t0 = clock(timing);
            let mix_w = &self.gen[self.layout.mix_w[i]..self.layout.mix_w[i] + h * h];
            let mix_b = &self.gen[self.layout.mix_b[i]..self.layout.mix_b[i] + h];
            // Transposed weights: row per input channel for spike-gathered adds.
            let mut wt = vec![0.0f32; h * h];
            for o in 0..h {
                for ic in 0..h {
                    wt[ic * h + o] = mix_w[o * h + ic];
                }
            }
            let keep = 1.0 - dropout as f32;
            let mut mask: Vec<u8> = Vec::new();
            if dropout > 0.0 {
                let rng = dropout_rng.as_deref_mut().unwrap();
                mask.resize(b * h * l, 0);
                for m in mask.iter_mut() {
                    *m = (rng.next_f64() >= dropout) as u8;
                }
            }
            let (spikes, mask): (&[u8], &[u8]) = match tape.as_deref_mut() {
                Some(t) => {
                    t.blocks[i].mask = mask;
                    let bt = &t.blocks[i];
                    (&bt.spikes, &bt.mask)
                }
                Option::None => {
                    local_mask = mask;
                    (&spike_buf, &local_mask)
                }
            };
            for bi in 0..b {
                // m[t][o] accumulated per position from active input channels.
                for t in 0..l {
                    mt[t * h..(t + 1) * h].copy_from_slice(mix_b);
                }
                for ic in 0..h {
                    let srow = &spikes[(bi * h + ic) * l..(bi * h + ic + 1) * l];
                    let wrow = &wt[ic * h..(ic + 1) * h];
                    for (t, &s) in srow.iter().enumerate() {
                        if s == 1 {
                            let dst = &mut mt[t * h..(t + 1) * h];
                            for (d, &w) in dst.iter_mut().zip(wrow) {
                                *d += w;
                            }
                        }
                    }
                }
                for o in 0..h {
                    let dst = &mut cur[(bi * h + o) * l..(bi * h + o + 1) * l];
                    if dropout > 0.0 {
                        let mrow = &mask[(bi * h + o) * l..(bi * h + o + 1) * l];
                        for t in 0..l {
                            let m = mt[t * h + o] * (mrow[t] as f32) / keep;
                            dst[t] += m;
                        }
                    } else {
                        for t in 0..l {
                            dst[t] += mt[t * h + o];
                        }
                    }
                }
            }
            lap(t0, &mut tm.output_linear);
            // Post-norm.
            if !self.cfg.block.prenorm {
                let tn = clock(timing);
                let r_copy = cur.clone();
                let (mu, inv): (&mut Vec<f32>, &mut Vec<f32>) = match tape.as_deref_mut() {
                    Some(t) => {
                        let bt = &mut t.blocks[i];
                        bt.r.clear();
                        bt.r.extend_from_slice(&r_copy);
                        (&mut bt.norm_mu, &mut bt.norm_inv)
                    }
                    Option::None => (&mut mu_buf, &mut inv_buf),
                };
                let mut normed = vec![0.0f32; b * h * l];
                // Field-splitting dance: norm_apply needs &mut self.
                let mut mu_local = std::mem::take(mu);
                let mut inv_local = std::mem::take(inv);
                self.norm_apply(i, &r_copy, b, l, train, &mut normed, &mut mu_local, &mut inv_local);
                cur.copy_from_slice(&normed);
                match tape.as_deref_mut() {
                    Some(t) => {
                        t.blocks[i].norm_mu = mu_local;
                        t.blocks[i].norm_inv = inv_local;
                    }
                    Option::None => {
                        mu_buf = mu_local;
                        inv_buf = inv_local;
                    }
                }
                lap(tn, &mut tm.norm);
            }
        }
        // Mean-pool over time, then the classifier.
        let t0 = clock(timing);
        let classes = self.cfg.classes;
        let mut pooled = vec![0.0f32; b * h];
        for bi in 0..b {
            for c in 0..h {
                let row = &cur[(bi * h + c) * l..(bi * h + c + 1) * l];
                pooled[bi * h + c] = row.iter().sum::<f32>() / l as f32;
            }
        }
        let mut logits = vec![0.0f32; b * classes];
        for bi in 0..b {
            for k in 0..classes {
                let w = &self.gen[self.layout.dec_w + k * h..self.layout.dec_w + (k + 1) * h];
                let mut acc = self.gen[self.layout.dec_b + k];
                for (wv, pv) in w.iter().zip(&pooled[bi * h..(bi + 1) * h]) {
                    acc += wv * pv;
                }
                logits[bi * classes + k] = acc;
            }
        }
        lap(t0, &mut tm.decoder);
        if let Some(t) = tape.as_deref_mut() {
            t.final_out = cur;
            t.pooled = pooled;
        }
        if let Some(sink) = self.timers.as_mut() {
            tm.leak_integrate = spike_split.0;
            tm.fire = spike_split.1;
            sink.merge(&tm);
        }
        Ok(ForwardStats { logits, spike_ones: ones_total, spike_total: steps_total })
    }

    /// One block's norm → SSM → spiking pipeline in evaluation semantics,
    /// returning the binary spike tensor.
    pub fn block_forward(&mut self, block: usize, x: &[f32], b: usize, l: usize, mode: SpikeMode) -> Result<SpikeTrain> {
        if block >= self.cfg.depth {
            return Err(Error::invalid(format!("block index {block} out of range")));
        }
        let h = self.cfg.block.h;
        if x.len() != b * h * l {
            return Err(Error::invalid("block input shape mismatch"));
        }
        let plan = FftConv::<f32>::new(l);
        let mut z = vec![0.0f32; b * h * l];
        let mut mu = Vec::new();
        let mut inv = Vec::new();
        if self.cfg.block.prenorm {
            self.norm_apply(block, x, b, l, false, &mut z, &mut mu, &mut inv);
        } else {
            z.copy_from_slice(x);
        }
        let mut y = vec![0.0f32; b * h * l];
        let mut kernels = vec![0.0f32; h * l];
        self.ssm_apply(block, &z, b, l, &plan, &mut y, &mut kernels, Option::None);
        let mut spikes = vec![0u8; b * h * l];
        let mut pred = Vec::new();
        let mut pre = Vec::new();
        self.spike_stage(block, &y, b, l, mode, &mut spikes, &mut pred, &mut pre, Option::None)?;
        let train = SpikeTrain(spikes);
        train.assert_binary()?;
        Ok(train)
    }

    /// Backward pass matching `forward` with a tape. `mode` picks the spike
    /// gradient rule; its forward graph must match the taped one.
    pub fn backward(
        &mut self,
        tape: &Tape,
        dlogits: &[f32],
        mode: TrainMode,
        gen_grads: &mut [f32],
        aux_grads: &mut [f32],
    ) -> Result<()> {
        let (b, l) = (tape.b, tape.l);
        let h = self.cfg.block.h;
        let classes = self.cfg.classes;
        if dlogits.len() != b * classes {
            return Err(Error::invalid("dlogits shape mismatch"));
        }
        let taped_mode = tape.mode.ok_or_else(|| Error::invalid("tape has no recorded forward"))?;
        if taped_mode != SpikeMode::for_training(mode) {
            return Err(Error::invalid(
                "taped forward graph does not match the requested gradient mode",
            ));
        }
        if gen_grads.len() != self.layout.gen_total || aux_grads.len() != self.layout.aux_total {
            return Err(Error::invalid("gradient arena size mismatch"));
        }
        let sg = SurrogateFn { alpha: self.cfg.block.alpha };
        let timing = self.timers.is_some();
        let clock = |on: bool| on.then(std::time::Instant::now);
        let lap = |t0: Option<std::time::Instant>, acc: &mut f64| {
            if let Some(t0) = t0 {
                *acc += t0.elapsed().as_secs_f64();
            }
        };
        let mut tm = StageTimers::default();
        // Decoder backward.
        let t0 = clock(timing);
        let mut dpool = vec![0.0f32; b * h];
        for bi in 0..b {
            for k in 0..classes {
                let d = dlogits[bi * classes + k];
                gen_grads[self.layout.dec_b + k] += d;
                let wrow = &self.gen[self.layout.dec_w + k * h..self.layout.dec_w + (k + 1) * h];
                for c in 0..h {
                    gen_grads[self.layout.dec_w + k * h + c] += d * tape.pooled[bi * h + c];
                    dpool[bi * h + c] += d * wrow[c];
                }
            }
        }
        // Un-pool: gradient of the time mean.
        let mut dout = vec![0.0f32; b * h * l];
        for bi in 0..b {
            for c in 0..h {
                let g = dpool[bi * h + c] / l as f32;
                for t in 0..l {
                    dout[(bi * h + c) * l + t] = g;
                }
            }
        }
        lap(t0, &mut tm.decoder);
        let dropout = if tape.train { self.cfg.block.dropout } else { 0.0 };
        let keep = 1.0 - dropout as f32;
        let plan = FftConv::<f32>::new(l);
        let size = plan.size();
        let mut scratch = plan.make_scratch();
        let mut kf = plan.make_buf();
        let mut dy_spec = plan.make_buf();
        let mut work = plan.make_buf();
        let mut dk_acc = plan.make_buf();
        for i in (0..self.cfg.depth).rev() {
            let bt = &tape.blocks[i];
            let gamma_off = self.layout.gamma[i];
            // Post-norm backward (if placed there).
            let mut dr = dout;
            if !self.cfg.block.prenorm {
                let tn = clock(timing);
                let mut dr_new = vec![0.0f32; b * h * l];
                let gamma = self.aux[gamma_off..gamma_off + h].to_vec();
                norm_backward(
                    self.cfg.block.norm,
                    &dr,
                    &bt.r,
                    b,
                    h,
                    l,
                    &bt.norm_mu,
                    &bt.norm_inv,
                    &gamma,
                    &mut dr_new,
                    &mut aux_grads[gamma_off..gamma_off + 2 * h],
                );
                dr = dr_new;
                lap(tn, &mut tm.norm);
            }
            // Residual split: dx_in starts as dr, mix branch gets dr, too.
            let mut dx_in = dr.clone();
            let mut dm = dr;
            if dropout > 0.0 {
                for (d, &m) in dm.iter_mut().zip(&bt.mask) {
                    *d *= (m as f32) / keep;
                }
            }
            // Feature-mix backward.
            let t0 = clock(timing);
            let mix_w = &self.gen[self.layout.mix_w[i]..self.layout.mix_w[i] + h * h];
            let mut dwt = vec![0.0f32; h * h]; // [in][out]
            let mut db = vec![0.0f32; h];
            let mut dsp = vec![0.0f32; b * h * l]; // spike grads, [b][h][l]
            let mut dmt = vec![0.0f32; l * h];
            let mut dspt = vec![0.0f32; l * h];
            for bi in 0..b {
                for o in 0..h {
                    let src = &dm[(bi * h + o) * l..(bi * h + o + 1) * l];
                    for t in 0..l {
                        dmt[t * h + o] = src[t];
                    }
                }
                for t in 0..l {
                    let row = &dmt[t * h..(t + 1) * h];
                    for (acc, &v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                for ic in 0..h {
                    let srow = &bt.spikes[(bi * h + ic) * l..(bi * h + ic + 1) * l];
                    let dwrow = &mut dwt[ic * h..(ic + 1) * h];
                    for (t, &s) in srow.iter().enumerate() {
                        if s == 1 {
                            let row = &dmt[t * h..(t + 1) * h];
                            for (d, &v) in dwrow.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
                dspt.iter_mut().for_each(|v| *v = 0.0);
                for t in 0..l {
                    let dmrow = &dmt[t * h..(t + 1) * h];
                    let dst = &mut dspt[t * h..(t + 1) * h];
                    for o in 0..h {
                        let w = &mix_w[o * h..(o + 1) * h];
                        let dv = dmrow[o];
                        if dv != 0.0 {
                            for (d, &wv) in dst.iter_mut().zip(w) {
                                *d += dv * wv;
                            }
                        }
                    }
                }
                for ic in 0..h {
                    let dst = &mut dsp[(bi * h + ic) * l..(bi * h + ic + 1) * l];
                    for t in 0..l {
                        dst[t] = dspt[t * h + ic];
                    }
                }
            }
            for o in 0..h {
                for ic in 0..h {
                    gen_grads[self.layout.mix_w[i] + o * h + ic] += dwt[ic * h + o];
                }
                gen_grads[self.layout.mix_b[i] + o] += db[o];
            }
            lap(t0, &mut tm.output_linear);
            // Spike backward per row.
            let t0 = clock(timing);
            let v_th = self.v_th(i) as f64;
            let params = NeuronParams {
                tau: self.cfg.block.tau,
                v_th,
                u_r: 0.0,
                reset: ResetMode::Hard,
            };
            let mut dy = vec![0.0f32; b * h * l];
            let mut d_vth = 0.0f64;
            let mut delta64 = vec![0.0f64; l];
            let mut aux64_a = vec![0.0f64; l];
            let mut aux64_b = vec![0.0f64; l];
            for r in 0..b * h {
                let drow = &dsp[r * l..(r + 1) * l];
                for (d, &s) in delta64.iter_mut().zip(drow) {
                    *d = s as f64;
                }
                let signal = match mode {
                    TrainMode::Sdn => {
                        for (d, &s) in aux64_a.iter_mut().zip(&bt.pred[r * l..(r + 1) * l]) {
                            *d = s as f64;
                        }
                        for (d, &s) in aux64_b.iter_mut().zip(&bt.y[r * l..(r + 1) * l]) {
                            *d = s as f64;
                        }
                        backward_spiking_scaled(&delta64, &aux64_a, &aux64_b, v_th, &sg)?
                    }
                    _ => {
                        for (d, &s) in aux64_a.iter_mut().zip(&bt.pre[r * l..(r + 1) * l]) {
                            *d = s as f64;
                        }
                        backward_spiking(
                            mode,
                            &delta64,
                            &aux64_a,
                            &bt.spikes[r * l..(r + 1) * l],
                            &params,
                            &sg,
                        )?
                    }
                };
                d_vth += signal.d_vth;
                for (d, &g) in dy[r * l..(r + 1) * l].iter_mut().zip(&signal.d_input) {
                    *d = g as f32;
                }
            }
            aux_grads[self.layout.v_th[i]] += d_vth as f32;
            // Spike-rule gradient time: the integration recursion carries the
            // cost for the temporal modes, the fire rule for the one-shot one.
            if let Some(t0) = t0 {
                let dt = t0.elapsed().as_secs_f64();
                match mode {
                    TrainMode::Sdn => tm.fire += dt,
                    _ => tm.leak_integrate += dt,
                }
            }
            // SSM backward: dz rows plus kernel-parameter gradients.
            let t0 = clock(timing);
            let mut dz = vec![0.0f32; b * h * l];
            let mut dk_row = vec![0.0f32; l];
            let mut dk64 = vec![0.0f64; l];
            for ch in 0..h {
                plan.spectrum_into(&bt.kernels[ch * l..(ch + 1) * l], &mut kf, &mut scratch);
                dk_acc.iter_mut().for_each(|v| *v = C32::new(0.0, 0.0));
                for bi in 0..b {
                    let r = bi * h + ch;
                    plan.spectrum_into(&dy[r * l..(r + 1) * l], &mut dy_spec, &mut scratch);
                    work.iter_mut().for_each(|v| *v = C32::new(0.0, 0.0));
                    mul_conj_accum(&dy_spec, &kf, &mut work);
                    plan.inverse_prefix(&mut work, &mut scratch, &mut dz[r * l..(r + 1) * l]);
                    mul_conj_accum(&dy_spec, &bt.x_spec[r * size..(r + 1) * size], &mut dk_acc);
                }
                let mut dk_local = dk_acc.clone();
                plan.inverse_prefix(&mut dk_local, &mut scratch, &mut dk_row);
                for (d, &s) in dk64.iter_mut().zip(&dk_row) {
                    *d = s as f64;
                }
                let c = self.channel_c(i, ch);
                let delta = (self.aux[self.layout.log_delta[i] + ch] as f64).exp();
                let (dc, d_delta) = kernel_param_grads(&self.a_fixed, &self.b_fixed, &c, delta, &dk64);
                let n = self.cfg.block.n;
                let base = self.layout.c[i] + ch * n;
                for (m, g) in dc.iter().enumerate() {
                    aux_grads[base + 2 * m] += g.re as f32;
                    aux_grads[base + 2 * m + 1] += g.im as f32;
                }
                // Chain through Δ = exp(log Δ).
                aux_grads[self.layout.log_delta[i] + ch] += (d_delta * delta) as f32;
            }
            lap(t0, &mut tm.ssm);
            // Pre-norm backward (or pass-through).
            let t0 = clock(timing);
            if self.cfg.block.prenorm {
                let mut dxn = vec![0.0f32; b * h * l];
                let gamma = self.aux[gamma_off..gamma_off + h].to_vec();
                norm_backward(
                    self.cfg.block.norm,
                    &dz,
                    &bt.x_in,
                    b,
                    h,
                    l,
                    &bt.norm_mu,
                    &bt.norm_inv,
                    &gamma,
                    &mut dxn,
                    &mut aux_grads[gamma_off..gamma_off + 2 * h],
                );
                for (d, &g) in dx_in.iter_mut().zip(&dxn) {
                    *d += g;
                }
            } else {
                for (d, &g) in dx_in.iter_mut().zip(&dz) {
                    *d += g;
                }
            }
            lap(t0, &mut tm.norm);
            dout = dx_in;
        }
        // Encoder backward.
        let t0 = clock(timing);
        for bi in 0..b {
            let xs = &tape.x_raw[bi * l..(bi + 1) * l];
            for c in 0..h {
                let drow = &dout[(bi * h + c) * l..(bi * h + c + 1) * l];
                let mut dw = 0.0f32;
                let mut dbi = 0.0f32;
                for (dv, &xv) in drow.iter().zip(xs) {
                    dw += dv * xv;
                    dbi += dv;
                }
                gen_grads[self.layout.enc_w + c] += dw;
                gen_grads[self.layout.enc_b + c] += dbi;
            }
        }
        lap(t0, &mut tm.encoder);
        if let Some(sink) = self.timers.as_mut() {
            sink.merge(&tm);
        }
        Ok(())
    }

    /// Zero the threshold gradients (used when the threshold is configured
    /// as fixed rather than learnable).
    pub fn clear_vth_grads(&self, aux_grads: &mut [f32]) {
        for i in 0..self.cfg.depth {
            aux_grads[self.layout.v_th[i]] = 0.0;
        }
    }

    /// Per-block surrogate-argument histograms (the value whose sign decides
    /// a spike and whose magnitude decides surrogate-gradient support).
    pub fn membrane_histogram(
        &mut self,
        x: &[f32],
        b: usize,
        l: usize,
        mode: SpikeMode,
        bins: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Vec<LayerHistogram>> {
        let mut tape = Tape::default();
        self.forward(x, b, l, mode, false, Option::None, Some(&mut tape))?;
        let h = self.cfg.block.h;
        let mut out = Vec::new();
        for (i, bt) in tape.blocks.iter().enumerate() {
            let v_th = self.v_th(i);
            let values: Vec<f64> = match mode {
                SpikeMode::Parallel => bt
                    .pred
                    .iter()
                    .zip(&bt.y)
                    .map(|(&p, &y)| (p + y / v_th) as f64 - 1.0)
                    .collect(),
                SpikeMode::Iterative => bt.pre.iter().map(|&u| (u - v_th) as f64).collect(),
            };
            debug_assert_eq!(values.len(), b * h * l);
            out.push(histogram_from_samples(
                format!("block{i}"),
                values,
                bins,
                lo,
                hi,
                self.cfg.block.alpha,
            )?);
        }
        Ok(out)
    }
}

// ---- norm helpers -----------------------------------------------------

/// Layer norm across channels at each (batch, time) position.
#[allow(clippy::too_many_arguments)]
fn ln_forward(
    x: &[f32],
    b: usize,
    h: usize,
    l: usize,
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
    z: &mut [f32],
    mu_out: &mut Vec<f32>,
    inv_out: &mut Vec<f32>,
) {
    mu_out.resize(b * l, 0.0);
    inv_out.resize(b * l, 0.0);
    for bi in 0..b {
        for t in 0..l {
            let mut sum = 0.0f32;
            let mut sq = 0.0f32;
            for c in 0..h {
                let v = x[(bi * h + c) * l + t];
                sum += v;
                sq += v * v;
            }
            let mu = sum / h as f32;
            let var = (sq / h as f32 - mu * mu).max(0.0);
            let inv = 1.0 / (var + eps).sqrt();
            mu_out[bi * l + t] = mu;
            inv_out[bi * l + t] = inv;
            for c in 0..h {
                let idx = (bi * h + c) * l + t;
                z[idx] = gamma[c] * (x[idx] - mu) * inv + beta[c];
            }
        }
    }
}

fn bn_batch_stats(x: &[f32], b: usize, h: usize, l: usize) -> (Vec<f32>, Vec<f32>) {
    let n = (b * l) as f64;
    let mut mu = vec![0.0f32; h];
    let mut var = vec![0.0f32; h];
    for c in 0..h {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for bi in 0..b {
            for &v in &x[(bi * h + c) * l..(bi * h + c + 1) * l] {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
        }
        let m = sum / n;
        mu[c] = m as f32;
        var[c] = ((sq / n) - m * m).max(0.0) as f32;
    }
    (mu, var)
}

#[allow(clippy::too_many_arguments)]
fn bn_apply(
    x: &[f32],
    b: usize,
    h: usize,
    l: usize,
    mu: &[f32],
    inv: &[f32],
    gamma: &[f32],
    beta: &[f32],
    z: &mut [f32],
) {
    for bi in 0..b {
        for c in 0..h {
            let scale = gamma[c] * inv[c];
            let shift = beta[c] - mu[c] * scale;
            let src = &x[(bi * h + c) * l..(bi * h + c + 1) * l];
            let dst = &mut z[(bi * h + c) * l..(bi * h + c + 1) * l];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s * scale + shift;
            }
        }
    }
}

/// Backward through either norm. `dgamma_beta` covers [gamma; beta] back to
/// back. For batch norm the stats are per channel; for layer norm per
/// position. Both use the full three-term normalization gradient.
#[allow(clippy::too_many_arguments)]
fn norm_backward(
    kind: NormKind,
    dout: &[f32],
    x: &[f32],
    b: usize,
    h: usize,
    l: usize,
    mu: &[f32],
    inv: &[f32],
    gamma: &[f32],
    dx: &mut [f32],
    dgamma_beta: &mut [f32],
) {
    match kind {
        NormKind::Layer => {
            for bi in 0..b {
                for t in 0..l {
                    let m = mu[bi * l + t];
                    let iv = inv[bi * l + t];
                    let mut sum_d = 0.0f32;
                    let mut sum_dxh = 0.0f32;
                    for c in 0..h {
                        let idx = (bi * h + c) * l + t;
                        let xh = (x[idx] - m) * iv;
                        let dg = dout[idx] * gamma[c];
                        sum_d += dg;
                        sum_dxh += dg * xh;
                        dgamma_beta[c] += dout[idx] * xh;
                        dgamma_beta[h + c] += dout[idx];
                    }
                    let mean_d = sum_d / h as f32;
                    let mean_dxh = sum_dxh / h as f32;
                    for c in 0..h {
                        let idx = (bi * h + c) * l + t;
                        let xh = (x[idx] - m) * iv;
                        dx[idx] = iv * (dout[idx] * gamma[c] - mean_d - xh * mean_dxh);
                    }
                }
            }
        }
        NormKind::Batch => {
            let n = (b * l) as f64;
            for c in 0..h {
                let m = mu[c];
                let iv = inv[c];
                let mut sum_d = 0.0f64;
                let mut sum_dxh = 0.0f64;
                for bi in 0..b {
                    let base = (bi * h + c) * l;
                    for t in 0..l {
                        let xh = ((x[base + t] - m) * iv) as f64;
                        let d = dout[base + t] as f64;
                        sum_d += d;
                        sum_dxh += d * xh;
                    }
                }
                dgamma_beta[c] += sum_dxh as f32;
                dgamma_beta[h + c] += sum_d as f32;
                let mean_d = (sum_d / n) as f32;
                let mean_dxh = (sum_dxh / n) as f32;
                let scale = gamma[c] * iv;
                for bi in 0..b {
                    let base = (bi * h + c) * l;
                    for t in 0..l {
                        let xh = (x[base + t] - m) * iv;
                        dx[base + t] = scale * (dout[base + t] - mean_d - xh * mean_dxh);
                    }
                }
            }
        }
    }
}

// ---- task harness ------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TaskDataset {
    /// Row-major [count][length], values expected in [0, 1].
    pub inputs: Vec<f32>,
    pub labels: Vec<u8>,
    pub count: usize,
    pub length: usize,
    pub classes: usize,
}

impl TaskDataset {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.count * self.length || self.labels.len() != self.count {
            return Err(Error::data("task dataset shape mismatch"));
        }
        if let Some(&bad) = self.labels.iter().find(|&&lb| lb as usize >= self.classes) {
            return Err(Error::data(format!("label {bad} outside {} classes", self.classes)));
        }
        Ok(())
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.length..(i + 1) * self.length]
    }
}

/// Softmax cross-entropy; returns mean loss and fills dlogits with the mean
/// gradient.
pub fn softmax_ce(logits: &[f32], labels: &[u8], b: usize, classes: usize, dlogits: &mut [f32]) -> f64 {
    let mut loss = 0.0f64;
    for bi in 0..b {
        let row = &logits[bi * classes..(bi + 1) * classes];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f64;
        for &v in row {
            denom += ((v - max) as f64).exp();
        }
        let label = labels[bi] as usize;
        loss += denom.ln() - (row[label] - max) as f64;
        for k in 0..classes {
            let p = ((row[k] - max) as f64).exp() / denom;
            dlogits[bi * classes + k] = ((p - if k == label { 1.0 } else { 0.0 }) / b as f64) as f32;
        }
    }
    loss / b as f64
}

#[derive(Debug, Clone, Copy)]
pub struct TrainTaskConfig {
    pub net: NetConfig,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub test_mean_rate: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TaskEval {
    pub accuracy: f64,
    pub mean_spiking_rate: f64,
}

/// Accuracy and mean spiking rate over a dataset.
pub fn evaluate(
    net: &mut SpikingSsmNetwork,
    ds: &TaskDataset,
    mode: SpikeMode,
    batch: usize,
) -> Result<TaskEval> {
    ds.validate()?;
    if batch == 0 {
        return Err(Error::invalid("batch must be positive"));
    }
    let classes = net.cfg.classes;
    let mut correct = 0u64;
    let mut ones = 0u64;
    let mut total = 0u64;
    let mut start = 0usize;
    while start < ds.count {
        let bsz = batch.min(ds.count - start);
        let x = &ds.inputs[start * ds.length..(start + bsz) * ds.length];
        let stats = net.forward(x, bsz, ds.length, mode, false, Option::None, Option::None)?;
        for bi in 0..bsz {
            let row = &stats.logits[bi * classes..(bi + 1) * classes];
            let mut best = 0usize;
            for k in 1..classes {
                if row[k] > row[best] {
                    best = k;
                }
            }
            if best == ds.labels[start + bi] as usize {
                correct += 1;
            }
        }
        ones += stats.spike_ones;
        total += stats.spike_total;
        start += bsz;
    }
    Ok(TaskEval {
        accuracy: correct as f64 / ds.count as f64,
        mean_spiking_rate: if total == 0 { 0.0 } else { ones as f64 / total as f64 },
    })
}

/// Train a fresh network on a classification task; reports per-epoch loss
/// and held-out accuracy/sparsity. Aborts on non-finite loss.
pub fn train_task(
    cfg: &TrainTaskConfig,
    train_ds: &TaskDataset,
    test_ds: &TaskDataset,
    sdn: Option<&SdnModel>,
) -> Result<(SpikingSsmNetwork, Vec<EpochLog>)> {
    train_ds.validate()?;
    test_ds.validate()?;
    if cfg.epochs == 0 || cfg.batch == 0 {
        return Err(Error::invalid("epochs and batch must be positive"));
    }
    let mut net = SpikingSsmNetwork::init(&cfg.net, cfg.seed)?;
    if !cfg.mode.iterative_forward() {
        let sdn = sdn.ok_or_else(|| Error::invalid("surrogate-network training mode needs an SDN"))?;
        net.attach_sdn(sdn)?;
    }
    let spike_mode = SpikeMode::for_training(cfg.mode);
    let mut opt_gen = AdamW::new(cfg.lr, cfg.weight_decay, net.gen_len());
    let mut opt_aux = AdamW::new(cfg.lr.min(1e-3), 0.0, net.aux_len());
    let mut rng = Rng::new(cfg.seed ^ 0x5eed_1234);
    let mut order: Vec<usize> = (0..train_ds.count).collect();
    let l = train_ds.length;
    let mut xb = vec![0.0f32; cfg.batch * l];
    let mut yb = vec![0u8; cfg.batch];
    let mut tape = Tape::default();
    let mut gen_grads = vec![0.0f32; net.gen_len()];
    let mut aux_grads = vec![0.0f32; net.aux_len()];
    let mut logs = Vec::new();
    for epoch in 0..cfg.epochs {
        // Cosine decay to 1% of the base rates; short-budget runs gain a
        // couple of points of final accuracy from the settled finish.
        let t = epoch as f64 / (cfg.epochs.max(2) - 1) as f64;
        let decay = 0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        opt_gen.lr = cfg.lr * decay;
        opt_aux.lr = cfg.lr.min(1e-3) * decay;
        let mut shuffler = rng.split(4_000 + epoch as u64);
        shuffler.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let bsz = chunk.len();
            for (slot, &row) in chunk.iter().enumerate() {
                xb[slot * l..(slot + 1) * l].copy_from_slice(train_ds.input(row));
                yb[slot] = train_ds.labels[row];
            }
            let stats = net.forward(
                &xb[..bsz * l],
                bsz,
                l,
                spike_mode,
                true,
                Some(&mut rng),
                Some(&mut tape),
            )?;
            let mut dlogits = vec![0.0f32; bsz * net.cfg.classes];
            let loss = softmax_ce(&stats.logits, &yb[..bsz], bsz, net.cfg.classes, &mut dlogits);
            if !loss.is_finite() {
                return Err(Error::numerical(format!(
                    "task training diverged at epoch {epoch}: non-finite loss"
                )));
            }
            loss_sum += loss;
            batches += 1;
            gen_grads.fill(0.0);
            aux_grads.fill(0.0);
            net.backward(&tape, &dlogits, cfg.mode, &mut gen_grads, &mut aux_grads)?;
            if !net.cfg.block.learnable_vth {
                net.clear_vth_grads(&mut aux_grads);
            }
            opt_gen.step(&mut net.gen, &gen_grads)?;
            opt_aux.step(&mut net.aux, &aux_grads)?;
        }
        let eval = evaluate(&mut net, test_ds, spike_mode, cfg.batch)?;
        logs.push(EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / batches.max(1) as f64,
            test_accuracy: eval.accuracy,
            test_mean_rate: eval.mean_spiking_rate,
        });
    }
    Ok((net, logs))
}
