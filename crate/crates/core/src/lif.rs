//! Iterative leaky integrate-and-fire reference dynamics.
//!
//! This is the ground-truth oracle: every parallel path in the crate is
//! certified against `lif_run`. The update per step is
//!
//!   u'_t = τ·u_{t−1} + I_t,    s_t = H(u'_t − v_th),
//!
//! with the membrane reset to `u_r` (hard), reduced by `v_th` (soft), or left
//! alone (none) after a spike. The boundary convention is H(0) = 1: a
//! potential exactly at threshold spikes. Initial membrane potential is 0.
//!
//! Arithmetic note: `u'` is computed as `tau * u + x` in exactly that order,
//! with no fused multiply-add, so an externally supplied `tau * u` term plus
//! `x` reproduces the same floating-point values bit for bit.

use crate::error::{Error, Result};
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    Hard,
    Soft,
    None,
}

/// Parameters of one LIF neuron population.
#[derive(Debug, Clone, Copy)]
pub struct NeuronParams {
    /// Leak coefficient τ ∈ [0, 1]; the default 0.2 matches the trained
    /// surrogate network.
    pub tau: f64,
    /// Firing threshold, > 0.
    pub v_th: f64,
    /// Reset potential (hard mode), must sit below threshold.
    pub u_r: f64,
    pub reset: ResetMode,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            tau: 0.2,
            v_th: 1.0,
            u_r: 0.0,
            reset: ResetMode::Hard,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) || !self.tau.is_finite() {
            return Err(Error::invalid(format!("tau {} outside [0, 1]", self.tau)));
        }
        if !(self.v_th > 0.0) || !self.v_th.is_finite() {
            return Err(Error::invalid(format!("v_th {} must be > 0", self.v_th)));
        }
        if !(self.u_r < self.v_th) || !self.u_r.is_finite() {
            return Err(Error::invalid(format!(
                "u_r {} must be below v_th {}",
                self.u_r, self.v_th
            )));
        }
        Ok(())
    }

    pub fn with_tau(tau: f64) -> Self {
        NeuronParams { tau, ..Default::default() }
    }
}

/// Binary spike sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain(pub Vec<u8>);

impl SpikeTrain {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|&s| s as usize).sum()
    }

    pub fn assert_binary(&self) -> Result<()> {
        if self.0.iter().all(|&s| s <= 1) {
            Ok(())
        } else {
            Err(Error::invalid("spike train contains non-binary values"))
        }
    }
}

/// Pre-reset (u') and post-reset (u) membrane potentials over a run.
#[derive(Debug, Clone)]
pub struct MembraneTrace<T> {
    pub pre_reset: Vec<T>,
    pub post_reset: Vec<T>,
}

/// Step the LIF neuron over `inputs` from a zero initial potential.
pub fn lif_run<T: Float>(inputs: &[T], params: &NeuronParams) -> Result<(SpikeTrain, MembraneTrace<T>)> {
    params.validate()?;
    if inputs.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("lif_run: non-finite input"));
    }
    let tau = T::from(params.tau).unwrap();
    let v_th = T::from(params.v_th).unwrap();
    let u_r = T::from(params.u_r).unwrap();
    let mut spikes = Vec::with_capacity(inputs.len());
    let mut pre = Vec::with_capacity(inputs.len());
    let mut post = Vec::with_capacity(inputs.len());
    let mut u = T::zero();
    for &x in inputs {
        let u_pre = tau * u + x;
        let s = u_pre >= v_th;
        u = match (s, params.reset) {
            (true, ResetMode::Hard) => u_r,
            (true, ResetMode::Soft) => u_pre - v_th,
            _ => u_pre,
        };
        spikes.push(s as u8);
        pre.push(u_pre);
        post.push(u);
    }
    Ok((SpikeTrain(spikes), MembraneTrace { pre_reset: pre, post_reset: post }))
}

/// Closed-form pre-reset potential for a hard-reset, u_r = 0 run with known
/// spikes: u'_t = Σ_{i ≤ t} τ^{t−i}·I_i·∏_{j=i}^{t−1}(1 − s_j). Since any
/// spike in (i, t] zeroes the product, only inputs after the most recent
/// spike contribute; terms are summed in ascending i.
pub fn unrolled_pre_reset(inputs: &[f64], spikes: &SpikeTrain, params: &NeuronParams) -> Result<Vec<f64>> {
    params.validate()?;
    if params.reset != ResetMode::Hard || params.u_r != 0.0 {
        return Err(Error::invalid(
            "unrolled_pre_reset assumes hard reset with u_r = 0",
        ));
    }
    if spikes.len() != inputs.len() {
        return Err(Error::invalid("unrolled_pre_reset: spike/input length mismatch"));
    }
    spikes.assert_binary()?;
    let tau = params.tau;
    let mut out = vec![0.0; inputs.len()];
    // Index of the latest spike strictly before t, or None.
    let mut last_spike: Option<usize> = None;
    for t in 0..inputs.len() {
        let start = match last_spike {
            Some(j) => j + 1,
            Option::None => 0,
        };
        // Gather τ^{t−i} descending, then accumulate ascending in i.
        let mut powers = Vec::with_capacity(t + 1 - start);
        let mut p = 1.0;
        for _ in start..=t {
            powers.push(p);
            p *= tau;
        }
        let mut acc = 0.0;
        for (offset, i) in (start..=t).enumerate() {
            acc += powers[t - start - offset] * inputs[i];
        }
        out[t] = acc;
        if spikes.0[t] == 1 {
            last_spike = Some(t);
        }
    }
    Ok(out)
}

/// Threshold a pre-reset trace: s_t = H(u'_t − v_th), H(0) = 1.
pub fn spike_from_potential<T: Float>(pre_reset: &[T], v_th: f64) -> Result<SpikeTrain> {
    if !(v_th > 0.0) || !v_th.is_finite() {
        return Err(Error::invalid(format!("v_th {v_th} must be > 0")));
    }
    let v = T::from(v_th).unwrap();
    Ok(SpikeTrain(pre_reset.iter().map(|&u| (u >= v) as u8).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn hand_iterated_hard_reset() {
        // τ=0.5, v_th=1: u' = [0.6, 0.5·0.6+0.8, 0.5·0+0.3] = [0.6, 1.1, 0.3].
        let p = NeuronParams { tau: 0.5, v_th: 1.0, u_r: 0.0, reset: ResetMode::Hard };
        let (s, m) = lif_run(&[0.6, 0.8, 0.3], &p).unwrap();
        assert_eq!(s.0, vec![0, 1, 0]);
        for (got, want) in m.pre_reset.iter().zip([0.6, 1.1, 0.3]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in m.post_reset.iter().zip([0.6, 0.0, 0.3]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_iterated_soft_reset() {
        // Same input; after the spike u = 1.1 − 1 = 0.1, then u' = 0.35.
        let p = NeuronParams { tau: 0.5, v_th: 1.0, u_r: 0.0, reset: ResetMode::Soft };
        let (s, m) = lif_run(&[0.6, 0.8, 0.3], &p).unwrap();
        assert_eq!(s.0, vec![0, 1, 0]);
        for (got, want) in m.post_reset.iter().zip([0.6, 0.1, 0.35]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_stays_silent() {
        let (s, m) = lif_run(&[0.0; 32], &NeuronParams::default()).unwrap();
        assert_eq!(s.count(), 0);
        assert!(m.pre_reset.iter().all(|&u| u == 0.0));
        assert!(m.post_reset.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn threshold_boundary_spikes() {
        // Exactly at threshold ⇒ spike (H(0) = 1).
        let (s, _) = lif_run(&[1.0, 0.5], &NeuronParams::default()).unwrap();
        assert_eq!(s.0[0], 1);
        let s2 = spike_from_potential(&[0.6, 1.0, 0.3], 1.0).unwrap();
        assert_eq!(s2.0, vec![0, 1, 0]);
        let s3 = spike_from_potential(&[0.6, 1.0, 0.3], 1e18).unwrap();
        assert_eq!(s3.count(), 0, "huge threshold never fires");
    }

    #[test]
    fn reset_mode_invariants_hold() {
        let mut rng = Rng::new(5);
        let x = rng.normal_seq(256, 0.0, 1.0).unwrap();
        for reset in [ResetMode::Hard, ResetMode::Soft, ResetMode::None] {
            let p = NeuronParams { reset, ..Default::default() };
            let (s, m) = lif_run(&x, &p).unwrap();
            for t in 0..x.len() {
                let (u_pre, u_post, spk) = (m.pre_reset[t], m.post_reset[t], s.0[t]);
                match reset {
                    ResetMode::Hard => {
                        let want = if spk == 1 { p.u_r } else { u_pre };
                        assert_eq!(u_post, want);
                    }
                    ResetMode::Soft => {
                        let want = u_pre - f64::from(spk) * p.v_th;
                        assert!((u_post - want).abs() < 1e-12);
                    }
                    ResetMode::None => assert_eq!(u_post, u_pre),
                }
            }
        }
    }

    #[test]
    fn unrolled_form_matches_iterative() {
        let p = NeuronParams { tau: 0.5, ..Default::default() };
        let (s, m) = lif_run(&[0.6, 0.8, 0.3], &p).unwrap();
        let u = unrolled_pre_reset(&[0.6, 0.8, 0.3], &s, &p).unwrap();
        for (a, b) in u.iter().zip(&m.pre_reset) {
            assert!((a - b).abs() < 1e-12);
        }
        // Long random run: accumulated rounding stays ≤ 1e-9.
        for l in [256usize, 4096] {
            let x = Rng::new(l as u64).normal_seq(l, 0.0, 1.0).unwrap();
            let (s, m) = lif_run(&x, &NeuronParams::default()).unwrap();
            let u = unrolled_pre_reset(&x, &s, &NeuronParams::default()).unwrap();
            for (a, b) in u.iter().zip(&m.pre_reset) {
                assert!((a - b).abs() <= 1e-9, "L={l}");
            }
        }
    }

    #[test]
    fn unrolled_no_spikes_is_leaky_integrator() {
        let tau = 0.5;
        let p = NeuronParams { tau, ..Default::default() };
        let x = [0.1, 0.2, 0.3, 0.1];
        let s = SpikeTrain(vec![0; 4]);
        let u = unrolled_pre_reset(&x, &s, &p).unwrap();
        for t in 0..4 {
            let want: f64 = (0..=t).map(|i| tau.powi((t - i) as i32) * x[i]).sum();
            assert!((u[t] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unrolled_tau_zero_is_memoryless() {
        let p = NeuronParams { tau: 0.0, ..Default::default() };
        let x = Rng::new(8).normal_seq(64, 0.0, 1.0).unwrap();
        let (s, _) = lif_run(&x, &p).unwrap();
        let u = unrolled_pre_reset(&x, &s, &p).unwrap();
        assert_eq!(u, x, "τ=0 passes inputs through unchanged");
    }

    #[test]
    fn unrolled_rejects_nonzero_reset_potential() {
        let p = NeuronParams { u_r: -0.5, ..Default::default() };
        let s = SpikeTrain(vec![0; 3]);
        assert!(unrolled_pre_reset(&[0.1, 0.1, 0.1], &s, &p).is_err());
        let soft = NeuronParams { reset: ResetMode::Soft, ..Default::default() };
        assert!(unrolled_pre_reset(&[0.1, 0.1, 0.1], &s, &soft).is_err());
    }

    #[test]
    fn rejects_bad_inputs_and_params() {
        assert!(lif_run(&[f64::NAN], &NeuronParams::default()).is_err());
        assert!(lif_run(&[1.0], &NeuronParams { tau: 1.5, ..Default::default() }).is_err());
        assert!(lif_run(&[1.0], &NeuronParams { v_th: 0.0, ..Default::default() }).is_err());
        assert!(lif_run(&[1.0], &NeuronParams { u_r: 2.0, ..Default::default() }).is_err());
        assert!(spike_from_potential(&[1.0], 0.0).is_err());
    }

    #[test]
    fn no_reset_spikes_at_least_as_often_as_hard_reset() {
        // Without reset the membrane keeps its super-threshold charge, so
        // across many random sequences it must fire at least as often.
        let mut rng = Rng::new(77);
        let mut hard_total = 0usize;
        let mut none_total = 0usize;
        let mut none_wins = 0usize;
        for _ in 0..1000 {
            let x = rng.normal_seq(128, 0.0, 1.0).unwrap();
            let hard = lif_run(&x, &NeuronParams::default()).unwrap().0.count();
            let none = lif_run(&x, &NeuronParams { reset: ResetMode::None, ..Default::default() })
                .unwrap()
                .0
                .count();
            hard_total += hard;
            none_total += none;
            if none >= hard {
                none_wins += 1;
            }
        }
        assert!(
            none_total > hard_total,
            "no-reset should spike more overall: {none_total} vs {hard_total}"
        );
        assert!(none_wins >= 950, "no-reset should win on ≥95% of sequences, got {none_wins}/1000");
    }

    #[test]
    fn threshold_scaling_leaves_spikes_unchanged() {
        // α·I with α·v_th fires identically to I with v_th (u_r = 0).
        let mut rng = Rng::new(123);
        for _ in 0..100 {
            let x = rng.normal_seq(128, 0.0, 1.0).unwrap();
            let alpha = rng.uniform(0.05, 20.0);
            let v_th = rng.uniform(0.1, 3.0);
            let base = NeuronParams { v_th, ..Default::default() };
            let scaled_params = NeuronParams { v_th: alpha * v_th, ..Default::default() };
            let scaled_x: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let (s0, _) = lif_run(&x, &base).unwrap();
            let (s1, _) = lif_run(&scaled_x, &scaled_params).unwrap();
            assert_eq!(s0, s1);
        }
    }
}
