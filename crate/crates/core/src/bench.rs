//! Training-step latency harness. Times one full training step (forward,
//! backward, optimizer update) for each gradient mode across a sweep of
//! sequence lengths, on identical network parameters and identical input
//! batches, and reports medians with spread plus a per-stage breakdown.
//!
//! All numbers are wall-clock times on the current thread; there is no
//! device-asynchrony caveat to worry about, and the report says so in its
//! summary header.

use crate::error::{Error, Result};
use crate::grad::{AdamW, TrainMode};
use crate::network::{softmax_ce, NetConfig, SpikeMode, SpikingSsmNetwork, StageTimers, Tape};
use crate::rng::Rng;
use crate::sdn::SdnModel;
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub lengths: Vec<usize>,
    pub batch: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub modes: Vec<TrainMode>,
    /// Worker threads the run is pinned to; recorded in the report. This
    /// implementation always computes on one thread.
    pub workers: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            lengths: vec![1024, 2048, 4096, 8192],
            batch: 64,
            repetitions: 5,
            warmup: 2,
            modes: vec![TrainMode::Bptt, TrainMode::Sltt, TrainMode::Sdn],
            workers: 1,
            seed: 17,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths.iter().any(|&l| l == 0) {
            return Err(Error::invalid("bench lengths must be non-empty and positive"));
        }
        if self.repetitions < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 repetitions for a spread estimate, got {}",
                self.repetitions
            )));
        }
        if self.batch == 0 || self.modes.is_empty() || self.workers == 0 {
            return Err(Error::invalid("bench needs batch > 0, workers > 0 and at least one mode"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub mode: TrainMode,
    pub length: usize,
    pub batch: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

impl BenchRow {
    /// Relative spread of the repetitions around the median.
    pub fn spread(&self) -> f64 {
        (self.p90_ms - self.p10_ms) / self.median_ms
    }
}

#[derive(Debug, Clone)]
pub struct BreakdownRow {
    pub mode: TrainMode,
    pub module: &'static str,
    pub cpu_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Per-stage mean milliseconds per step, measured at the largest length.
    pub breakdown: Vec<BreakdownRow>,
    /// (length, iterative-BPTT median / SDN median), when both modes ran.
    pub speedups: Vec<(usize, f64)>,
    pub workers: usize,
    pub batch: usize,
}

impl BenchReport {
    pub fn speedup_at(&self, length: usize) -> Option<f64> {
        self.speedups.iter().find(|(l, _)| *l == length).map(|(_, s)| *s)
    }

    pub fn speedup_monotone(&self) -> bool {
        self.speedups.windows(2).all(|w| w[1].1 > w[0].1)
    }

    pub fn latency_csv(&self) -> String {
        let mut out = String::from("mode,length,batch,median_ms,p10_ms,p90_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{:.3},{:.3}",
                r.mode.name(),
                r.length,
                r.batch,
                r.median_ms,
                r.p10_ms,
                r.p90_ms
            );
        }
        out
    }

    pub fn breakdown_csv(&self) -> String {
        let mut out = String::from("mode,module,cpu_ms\n");
        for r in &self.breakdown {
            let _ = writeln!(out, "{},{},{:.3}", r.mode.name(), r.module, r.cpu_ms);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "training-step latency (wall-clock only, single-thread compute, workers={}, batch={})\n",
            self.workers, self.batch
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "  {:<14} L={:<6} median {:>10.2} ms  (p10 {:.2}, p90 {:.2})",
                r.mode.name(),
                r.length,
                r.median_ms,
                r.p10_ms,
                r.p90_ms
            );
        }
        for (l, s) in &self.speedups {
            let _ = writeln!(out, "  speedup over iterative bptt at L={l}: {s:.2}x");
        }
        out
    }
}

/// Nearest-rank quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Timer sanity: the monotonic clock must resolve far below the workload.
fn clock_resolution() -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min((b - a).as_secs_f64());
    }
    best
}

/// Time one configuration: median/p10/p90 over `repetitions` full training
/// steps after `warmup` discarded steps. Stage timers accumulate over the
/// timed steps only.
fn time_mode(
    cfg: &NetConfig,
    mode: TrainMode,
    length: usize,
    spec: &BenchSpec,
    sdn: Option<&SdnModel>,
    x: &[f32],
    labels: &[u8],
) -> Result<(Vec<f64>, StageTimers)> {
    let mut net = SpikingSsmNetwork::init(cfg, spec.seed)?;
    if !mode.iterative_forward() {
        let sdn = sdn.ok_or_else(|| Error::invalid("benchmarking the SDN mode needs a surrogate network"))?;
        net.attach_sdn(sdn)?;
    }
    let spike_mode = SpikeMode::for_training(mode);
    let mut opt_gen = AdamW::new(1e-3, 0.01, net.gen_len());
    let mut opt_aux = AdamW::new(1e-3, 0.0, net.aux_len());
    let mut rng = Rng::new(spec.seed ^ 0xbe9c);
    let mut tape = Tape::default();
    let mut gen_grads = vec![0.0f32; net.gen_len()];
    let mut aux_grads = vec![0.0f32; net.aux_len()];
    let classes = cfg.classes;
    let b = spec.batch;
    let mut step = |net: &mut SpikingSsmNetwork, rng: &mut Rng, tape: &mut Tape| -> Result<()> {
        let stats = net.forward(x, b, length, spike_mode, true, Some(rng), Some(tape))?;
        let mut dlogits = vec![0.0f32; b * classes];
        softmax_ce(&stats.logits, labels, b, classes, &mut dlogits);
        gen_grads.fill(0.0);
        aux_grads.fill(0.0);
        net.backward(tape, &dlogits, mode, &mut gen_grads, &mut aux_grads)?;
        opt_gen.step(&mut net.gen, &gen_grads)?;
        opt_aux.step(&mut net.aux, &aux_grads)?;
        Ok(())
    };
    for _ in 0..spec.warmup {
        step(&mut net, &mut rng, &mut tape)?;
    }
    net.timers = Some(StageTimers::default());
    let mut times = Vec::with_capacity(spec.repetitions);
    for _ in 0..spec.repetitions {
        let t0 = Instant::now();
        step(&mut net, &mut rng, &mut tape)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let timers = net.timers.take().unwrap();
    let res = clock_resolution() * 1e3;
    let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 100.0 * res {
        return Err(Error::invalid(format!(
            "step time {min:.6} ms is too close to timer resolution {res:.6} ms; \
             increase the workload (longer sequences or larger batch)"
        )));
    }
    Ok((times, timers))
}

/// Run the latency sweep. All modes share the network seed and the input
/// batch at each length; data generation and reporting sit outside the timed
/// region.
pub fn run_bench(spec: &BenchSpec, cfg: &NetConfig, sdn: Option<&SdnModel>) -> Result<BenchReport> {
    spec.validate()?;
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut breakdown = Vec::new();
    let mut lengths = spec.lengths.clone();
    lengths.sort_unstable();
    lengths.dedup();
    let max_len = *lengths.last().unwrap();
    let mut medians: Vec<(TrainMode, usize, f64)> = Vec::new();
    for &length in &lengths {
        let mut rng = Rng::new(spec.seed.wrapping_add(length as u64));
        let x = rng.normal_seq_f32(spec.batch * length, 0.5, 0.25)?;
        let labels: Vec<u8> = (0..spec.batch).map(|i| (i % cfg.classes) as u8).collect();
        for &mode in &spec.modes {
            let (mut times, timers) = time_mode(cfg, mode, length, spec, sdn, &x, &labels)?;
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = quantile(&times, 0.5);
            rows.push(BenchRow {
                mode,
                length,
                batch: spec.batch,
                median_ms: median,
                p10_ms: quantile(&times, 0.1),
                p90_ms: quantile(&times, 0.9),
            });
            medians.push((mode, length, median));
            if length == max_len {
                for (module, secs) in timers.rows() {
                    breakdown.push(BreakdownRow {
                        mode,
                        module,
                        cpu_ms: secs * 1e3 / spec.repetitions as f64,
                    });
                }
            }
        }
    }
    let mut speedups = Vec::new();
    for &length in &lengths {
        let bptt = medians
            .iter()
            .find(|(m, l, _)| *m == TrainMode::Bptt && *l == length)
            .map(|(_, _, t)| *t);
        let sdn_t = medians
            .iter()
            .find(|(m, l, _)| *m == TrainMode::Sdn && *l == length)
            .map(|(_, _, t)| *t);
        if let (Some(b), Some(s)) = (bptt, sdn_t) {
            speedups.push((length, b / s));
        }
    }
    Ok(BenchReport { rows, breakdown, speedups, workers: spec.workers, batch: spec.batch })
}
