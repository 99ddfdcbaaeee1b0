//! FFT-based causal convolution and correlation.
//!
//! Sequences are zero-padded to the next power of two ≥ 2L−1 so circular
//! wraparound never aliases into the first L samples; the padded transforms
//! make both linear convolution and one-sided cross-correlation exact.

use crate::error::{Error, Result};
use num_complex::Complex;
use num_traits::Float;
use rustfft::{Fft, FftNum, FftPlanner};
use std::sync::Arc;

pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Planned FFT pair for length-`len` causal operations. Construction plans
/// both directions once; the per-call entry points write into caller-owned
/// buffers so batched loops can run allocation-free.
pub struct FftConv<T: FftNum> {
    len: usize,
    size: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: FftNum + Float> FftConv<T> {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "sequence length must be positive");
        let size = next_pow2(2 * len - 1);
        let mut planner = FftPlanner::new();
        FftConv {
            len,
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn make_buf(&self) -> Vec<Complex<T>> {
        vec![Complex::new(T::zero(), T::zero()); self.size]
    }

    pub fn make_scratch(&self) -> Vec<Complex<T>> {
        let n = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        vec![Complex::new(T::zero(), T::zero()); n]
    }

    /// Forward transform of a real signal (zero-padded) into `buf`.
    pub fn spectrum_into(&self, signal: &[T], buf: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        debug_assert!(signal.len() <= self.len);
        debug_assert_eq!(buf.len(), self.size);
        for (dst, &s) in buf.iter_mut().zip(signal) {
            *dst = Complex::new(s, T::zero());
        }
        for dst in buf.iter_mut().skip(signal.len()) {
            *dst = Complex::new(T::zero(), T::zero());
        }
        self.fwd.process_with_scratch(buf, scratch);
    }

    /// Inverse transform of `buf` (destroyed), writing the first `out.len()`
    /// real samples, normalized.
    pub fn inverse_prefix(&self, buf: &mut [Complex<T>], scratch: &mut [Complex<T>], out: &mut [T]) {
        debug_assert!(out.len() <= self.size);
        self.inv.process_with_scratch(buf, scratch);
        let norm = T::one() / T::from(self.size).unwrap();
        for (dst, src) in out.iter_mut().zip(buf.iter()) {
            *dst = src.re * norm;
        }
    }
}

/// dst = a ∘ b (elementwise).
pub fn mul_into<T: FftNum>(a: &[Complex<T>], b: &[Complex<T>], dst: &mut [Complex<T>]) {
    for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
        *d = x * y;
    }
}

/// dst += a ∘ conj(b) (elementwise), the frequency-domain form of one-sided
/// cross-correlation.
pub fn mul_conj_accum<T: FftNum>(a: &[Complex<T>], b: &[Complex<T>], dst: &mut [Complex<T>]) {
    for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
        *d = *d + x * y.conj();
    }
}

/// Causal convolution: out[t] = Σ_{k ≤ t} kernel[t−k]·signal[k], lengths equal.
pub fn causal_convolve<T: FftNum + Float>(kernel: &[T], signal: &[T]) -> Result<Vec<T>> {
    if kernel.len() != signal.len() {
        return Err(Error::invalid(format!(
            "causal_convolve: kernel length {} != signal length {}",
            kernel.len(),
            signal.len()
        )));
    }
    if kernel.is_empty() {
        return Err(Error::invalid("causal_convolve: empty sequences"));
    }
    let conv = FftConv::new(kernel.len());
    let mut scratch = conv.make_scratch();
    let mut ka = conv.make_buf();
    let mut xa = conv.make_buf();
    conv.spectrum_into(kernel, &mut ka, &mut scratch);
    conv.spectrum_into(signal, &mut xa, &mut scratch);
    for (k, x) in ka.iter_mut().zip(xa.iter()) {
        *k = *k * *x;
    }
    let mut out = vec![T::zero(); kernel.len()];
    conv.inverse_prefix(&mut ka, &mut scratch, &mut out);
    Ok(out)
}

/// One-sided cross-correlation: out[j] = Σ_{t ≥ j} a[t]·b[t−j], lengths equal.
/// This is the adjoint of causal convolution and carries the backward pass of
/// every convolutional layer here.
pub fn causal_correlate<T: FftNum + Float>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "causal_correlate: length {} != length {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("causal_correlate: empty sequences"));
    }
    let conv = FftConv::new(a.len());
    let mut scratch = conv.make_scratch();
    let mut aa = conv.make_buf();
    let mut ba = conv.make_buf();
    conv.spectrum_into(a, &mut aa, &mut scratch);
    conv.spectrum_into(b, &mut ba, &mut scratch);
    for (x, y) in aa.iter_mut().zip(ba.iter()) {
        *x = *x * y.conj();
    }
    let mut out = vec![T::zero(); a.len()];
    conv.inverse_prefix(&mut aa, &mut scratch, &mut out);
    Ok(out)
}

/// Direct O(L²) reference used by tests and available to callers that want
/// an FFT-free cross-check.
pub fn causal_convolve_direct<T: Float>(kernel: &[T], signal: &[T]) -> Vec<T> {
    let l = kernel.len();
    let mut out = vec![T::zero(); l];
    for t in 0..l {
        let mut acc = T::zero();
        for k in 0..=t {
            acc = acc + kernel[t - k] * signal[k];
        }
        out[t] = acc;
    }
    out
}
