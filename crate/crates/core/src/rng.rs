//! Deterministic, splittable randomness.
//!
//! Everything downstream (dataset generation, weight init, dropout, shuffling)
//! draws from this generator, so sample streams are pinned by this file alone
//! and reproduce bit-for-bit across platforms. The generator is SplitMix64;
//! normal variates come from the Box–Muller transform.

use crate::error::{Error, Result};

/// Name recorded in file metadata so artifacts can state how their random
/// content was produced.
pub const ALGORITHM: &str = "splitmix64/box-muller";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 generator. Same seed ⇒ identical stream; child streams created
/// by [`Rng::split`] are seeded through an extra mixing round so workers get
/// statistically disjoint subsequences.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    seed: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed, seed }
    }

    /// Seed this generator was created with (recorded in artifact metadata).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child stream. Children of distinct `stream` ids
    /// (and the parent itself) start from seeds separated by a full 64-bit
    /// mix, so their outputs do not overlap in practice.
    pub fn split(&self, stream: u64) -> Rng {
        Rng::new(mix(self.seed ^ mix(stream.wrapping_add(1).wrapping_mul(GOLDEN))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in [0, 1), 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Uses the 128-bit multiply reduction; the
    /// bias is < n/2^64 and irrelevant next to determinism here.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// One Box–Muller pair of independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 − u ∈ (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// `n` i.i.d. samples from N(mean, std²). The pairwise fill below is the
    /// canonical consumption order; an odd `n` discards the second half of
    /// the final pair.
    pub fn normal_seq(&mut self, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("normal_seq: n must be >= 1"));
        }
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::invalid("normal_seq: mean and std must be finite"));
        }
        if std < 0.0 {
            return Err(Error::invalid("normal_seq: std must be >= 0"));
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (a, b) = self.normal_pair();
            out.push(mean + std * a);
            if out.len() < n {
                out.push(mean + std * b);
            }
        }
        Ok(out)
    }

    /// f32 convenience for training tensors; samples are drawn in f64 and
    /// rounded once.
    pub fn normal_seq_f32(&mut self, n: usize, mean: f64, std: f64) -> Result<Vec<f32>> {
        Ok(self.normal_seq(n, mean, std)?.into_iter().map(|x| x as f32).collect())
    }

    /// Serialized state for checkpoints.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn from_state(seed: u64, state: u64) -> Self {
        Rng { state, seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(7).normal_seq(4, 0.0, 1.0).unwrap();
        let b = Rng::new(7).normal_seq(4, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_std_collapses_to_mean() {
        for n in [1, 5, 8] {
            let xs = Rng::new(7).normal_seq(n, 0.0, 0.0).unwrap();
            assert!(xs.iter().all(|&x| x == 0.0), "std=0 must give all zeros");
            let ys = Rng::new(9).normal_seq(n, 2.5, 0.0).unwrap();
            assert!(ys.iter().all(|&y| y == 2.5));
        }
    }

    #[test]
    fn moments_within_clt_bounds() {
        // For n = 10^6 standard normals the sample mean is within ±0.004
        // (≈4σ of 1/√n) and the sample variance within ±0.01 of 1.
        let xs = Rng::new(2024).normal_seq(1_000_000, 0.0, 1.0).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.004, "sample mean {mean} out of bounds");
        assert!((var - 1.0).abs() < 0.01, "sample variance {var} out of bounds");
    }

    #[test]
    fn split_streams_differ_and_are_stable() {
        let root = Rng::new(42);
        let a: Vec<u64> = {
            let mut r = root.split(0);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = root.split(1);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, b, "distinct streams must differ");
        let a2: Vec<u64> = {
            let mut r = Rng::new(42).split(0);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, a2, "splitting is a pure function of (seed, stream)");
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(Rng::new(1).normal_seq(0, 0.0, 1.0).is_err());
        assert!(Rng::new(1).normal_seq(4, f64::NAN, 1.0).is_err());
        assert!(Rng::new(1).normal_seq(4, 0.0, -1.0).is_err());
        assert!(Rng::new(1).normal_seq(4, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..100).collect();
        Rng::new(3).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<u32>>());
        assert_ne!(v, (0..100).collect::<Vec<u32>>(), "seed 3 should move something");
    }
}
