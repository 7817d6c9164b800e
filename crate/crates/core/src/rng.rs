//! Deterministic random streams and Wiener increments.
//!
//! Every trajectory owns one [`NoiseStream`]. Streams are ChaCha12 keystreams
//! keyed by the master seed and a channel tag, with the trajectory index used
//! as the ChaCha stream id, so trajectory `k` draws the same numbers no matter
//! which worker runs it or in which order.
//!
//! Gaussians come from the Marsaglia polar method. Each accepted pair is
//! consumed in order (first value, then the cached second value), which fixes
//! the draw sequence for a given stream across platforms.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream tag for positive-P trajectories.
pub const TAG_PPR: u64 = 0x5050_525f_5452_414a;
/// Stream tag for truncated-Wigner trajectories.
pub const TAG_TWA: u64 = 0x5457_415f_5452_414a;
/// Stream tag for ancillary draws (tests, sweeps).
pub const TAG_AUX: u64 = 0x4155_585f_5354_524d;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. for sweep members.
pub fn derive_seed(master: u64, label: u64) -> u64 {
    mix64(master ^ mix64(label.wrapping_add(0xD134_2543_DE82_EF95)))
}

#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl NoiseStream {
    pub fn new(master_seed: u64, tag: u64, index: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = master_seed ^ tag;
        for chunk in key.chunks_exact_mut(8) {
            s = mix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(index);
        Self { rng, spare: None }
    }

    /// Uniform on the open interval (-1, 1).
    fn signed_unit(&mut self) -> f64 {
        // 53 random bits mapped to the centres of 2^53 bins.
        let bits = self.rng.next_u64() >> 11;
        ((bits as f64) + 0.5) * (2.0 / (1u64 << 53) as f64) - 1.0
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        ((bits as f64) + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal deviate.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(x) = self.spare.take() {
            return x;
        }
        loop {
            let u = self.signed_unit();
            let v = self.signed_unit();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    /// Zero-mean Gaussian with the given variance.
    pub fn normal(&mut self, variance: f64) -> f64 {
        if variance == 0.0 {
            // still consume a draw so the sequence does not depend on parameters
            let _ = self.standard_normal();
            return 0.0;
        }
        self.standard_normal() * variance.sqrt()
    }

    /// Fill `out` with i.i.d. Wiener increments of the given variance.
    pub fn wiener_increments(&mut self, out: &mut [f64], variance: f64) {
        let sd = variance.sqrt();
        for x in out.iter_mut() {
            *x = self.standard_normal() * sd;
        }
    }
}

/// i.i.d. zero-mean Gaussian increments with the requested variance.
pub fn wiener_increments(stream: &mut NoiseStream, count: usize, variance: f64) -> Vec<f64> {
    assert!(variance >= 0.0, "variance must be non-negative");
    let mut out = vec![0.0; count];
    stream.wiener_increments(&mut out, variance);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_gives_zeros() {
        let mut s = NoiseStream::new(1, TAG_AUX, 0);
        assert!(wiener_increments(&mut s, 100, 0.0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<f64> = {
            let mut s = NoiseStream::new(7, TAG_PPR, 3);
            (0..16).map(|_| s.standard_normal()).collect()
        };
        let b: Vec<f64> = {
            let mut s = NoiseStream::new(7, TAG_PPR, 3);
            (0..16).map(|_| s.standard_normal()).collect()
        };
        let c: Vec<f64> = {
            let mut s = NoiseStream::new(7, TAG_PPR, 4);
            (0..16).map(|_| s.standard_normal()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_mean_vanishes() {
        let n = 1_000_000;
        let var = 0.3;
        let mut s = NoiseStream::new(11, TAG_AUX, 0);
        let xs = wiener_increments(&mut s, n, var);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!(mean.abs() < 5.0 * se, "mean {mean} se {se}");
        let v = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // SE of the variance for Gaussians is var*sqrt(2/n)
        assert!((v - var).abs() < 5.0 * var * (2.0 / n as f64).sqrt(), "var {v}");
    }

    #[test]
    fn channels_are_uncorrelated() {
        let n = 1_000_000;
        let mut s = NoiseStream::new(12, TAG_AUX, 0);
        let mut acc = 0.0;
        for _ in 0..n {
            let a = s.standard_normal();
            let b = s.standard_normal();
            acc += a * b;
        }
        let cov = acc / n as f64;
        assert!(cov.abs() < 5.0 / (n as f64).sqrt(), "cov {cov}");
    }
}
