//! Spiking-rate statistics, MAC/AC operation counting, the pJ energy model,
//! and membrane-potential histograms.
//!
//! Counting convention: only feature-mix (dense) layers are counted — a layer
//! with real-valued inputs costs multiply-accumulates, a layer consuming
//! binary spikes costs plain accumulates at the observed spiking rate. Bias
//! additions and norm/elementwise work are excluded.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub mac: u64,
    pub ac: u64,
}

impl OpCounts {
    pub fn add(&self, other: &OpCounts) -> OpCounts {
        OpCounts { mac: self.mac + other.mac, ac: self.ac + other.ac }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyModel {
    /// Energy per multiply-accumulate, picojoules.
    pub e_mac_pj: f64,
    /// Energy per accumulate, picojoules.
    pub e_ac_pj: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel { e_mac_pj: 4.6, e_ac_pj: 0.9 }
    }
}

/// Fraction of ones in a binary train. Rejects non-binary or empty input.
pub fn spiking_rate(spikes: &[u8]) -> Result<f64> {
    if spikes.is_empty() {
        return Err(Error::invalid("spiking rate of an empty train is undefined"));
    }
    let mut ones = 0u64;
    for &s in spikes {
        match s {
            0 => {}
            1 => ones += 1,
            other => return Err(Error::invalid(format!("non-binary spike value {other}"))),
        }
    }
    Ok(ones as f64 / spikes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    /// Real-valued inputs: every connection is a multiply-accumulate.
    Dense,
    /// Binary spike inputs: active connections are plain accumulates.
    SpikeInput,
}

#[derive(Debug, Clone, Copy)]
pub struct LayerShape {
    pub d_in: usize,
    pub d_out: usize,
    pub kind: LayerKind,
    /// Mean spiking rate of the layer's inputs; only read for `SpikeInput`.
    pub rate: f64,
}

/// Operation counts for a stack of feature-mix layers over `len` time steps.
/// Spike-input layers contribute the expected accumulate count
/// rate·len·d_in·d_out, rounded to the nearest integer.
pub fn count_ops(layers: &[LayerShape], len: usize) -> Result<OpCounts> {
    let mut counts = OpCounts::default();
    for (i, layer) in layers.iter().enumerate() {
        let conns = (len as u64) * (layer.d_in as u64) * (layer.d_out as u64);
        match layer.kind {
            LayerKind::Dense => counts.mac += conns,
            LayerKind::SpikeInput => {
                if !(0.0..=1.0).contains(&layer.rate) {
                    return Err(Error::invalid(format!(
                        "layer {i}: spiking rate {} outside [0, 1]",
                        layer.rate
                    )));
                }
                counts.ac += (layer.rate * conns as f64).round() as u64;
            }
        }
    }
    Ok(counts)
}

/// Total energy in joules: mac·e_mac + ac·e_ac, constants in picojoules.
pub fn energy(counts: &OpCounts, model: &EnergyModel) -> f64 {
    (counts.mac as f64 * model.e_mac_pj + counts.ac as f64 * model.e_ac_pj) * 1e-12
}

pub fn energy_csv(counts: &OpCounts, model: &EnergyModel) -> String {
    format!(
        "mac,ac,e_mac_pj,e_ac_pj,joules\n{},{},{},{},{}\n",
        counts.mac,
        counts.ac,
        model.e_mac_pj,
        model.e_ac_pj,
        energy(counts, model)
    )
}

#[derive(Debug, Clone)]
pub struct LayerHistogram {
    pub layer: String,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Fraction of samples inside [−1/α, 1/α], the region where the
    /// surrogate gradient is non-zero.
    pub band_occupancy: f64,
    pub total: u64,
}

/// Bin centred-membrane values (u' − v_th). Out-of-range values land in the
/// edge bins so the histogram mass always equals the sample count.
pub fn histogram_from_samples(
    layer: impl Into<String>,
    samples: impl IntoIterator<Item = f64>,
    bins: usize,
    lo: f64,
    hi: f64,
    alpha: f64,
) -> Result<LayerHistogram> {
    if bins == 0 || !(hi > lo) || !(alpha > 0.0) {
        return Err(Error::invalid("histogram needs bins > 0, hi > lo, alpha > 0"));
    }
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    let band = 1.0 / alpha;
    let mut in_band = 0u64;
    let mut total = 0u64;
    for v in samples {
        let idx = (((v - lo) / width).floor() as i64).clamp(0, bins as i64 - 1) as usize;
        counts[idx] += 1;
        if v.abs() <= band {
            in_band += 1;
        }
        total += 1;
    }
    Ok(LayerHistogram {
        layer: layer.into(),
        lo,
        hi,
        counts,
        band_occupancy: if total == 0 { 0.0 } else { in_band as f64 / total as f64 },
        total,
    })
}

pub fn histogram_csv(layers: &[LayerHistogram]) -> String {
    let mut out = String::from("layer,bin_left,bin_right,count\n");
    for h in layers {
        let width = (h.hi - h.lo) / h.counts.len() as f64;
        for (i, &c) in h.counts.iter().enumerate() {
            let left = h.lo + i as f64 * width;
            out.push_str(&format!("{},{},{},{}\n", h.layer, left, left + width, c));
        }
    }
    out
}
