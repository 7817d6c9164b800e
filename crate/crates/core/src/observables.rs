//! Matched local oscillator, quadratures and ordering-corrected squeezing.
//!
//! The homodyne quadrature is M_θ = Σ d_τ [f φ e^{iθ} + f* φ̄ e^{−iθ}] with
//! φ̄ = φ⁺ for the PPR and φ* for the TWA. A coherent state has unit
//! symmetric variance in this normalization, so
//!
//! * PPR (normal order):    S_θ = 1 + Re E[(M − E M)²]
//! * TWA (symmetric order): S_θ = Var M
//!
//! For the PPR, Re E[(M − EM)²] = Var(Re M) − Var(Im M) is a real-valued
//! functional of the doubled variables; taking Re M per sample first would
//! forbid S < 1.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::ensemble::{EnsembleStats, SliceStats};
use crate::error::{Error, Result};
use crate::model::Method;
use crate::stats::{mean_std_error, variance_difference, PowerSums};

/// Below this sample count sub-batching is skipped and the estimate flagged.
pub const MIN_SUBBATCH_SAMPLES: u64 = 16;
pub const DEFAULT_N_THETA: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOscillator {
    /// Mode function on the τ grid; P = Σ d_τ f φ.
    pub f: Vec<C64>,
    pub d_tau: f64,
}

impl LocalOscillator {
    /// Σ d_τ f φ.
    pub fn overlap(&self, phi: &[C64]) -> C64 {
        self.f.iter().zip(phi).map(|(f, p)| f * p).sum::<C64>() * self.d_tau
    }

    pub fn norm_sqr(&self) -> f64 {
        self.f.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.d_tau
    }
}

/// LO matched to `pulse`: f = pulse*/‖pulse‖, so Σ d_τ |f|² = 1 and a field
/// proportional to the pulse has a real, positive overlap.
pub fn matched_lo(pulse: &[C64], d_tau: f64) -> Result<LocalOscillator> {
    if !(d_tau > 0.0 && d_tau.is_finite()) {
        return Err(Error::invalid("d_tau must be finite and > 0"));
    }
    let energy: f64 = pulse.iter().map(|z| z.norm_sqr()).sum::<f64>() * d_tau;
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(Error::invalid("local oscillator needs a pulse with finite, nonzero energy"));
    }
    let s = 1.0 / energy.sqrt();
    Ok(LocalOscillator { f: pulse.iter().map(|z| z.conj() * s).collect(), d_tau })
}

/// M_θ for one field sample.
pub fn quadrature(phi: &[C64], phi_bar: &[C64], lo: &LocalOscillator, theta: f64) -> Result<C64> {
    if phi.len() != lo.f.len() || phi_bar.len() != lo.f.len() {
        return Err(Error::invalid(format!(
            "grid mismatch: field has {} / {} samples, local oscillator {}",
            phi.len(),
            phi_bar.len(),
            lo.f.len()
        )));
    }
    let e = C64::from_polar(1.0, theta);
    let p = lo.overlap(phi);
    let q: C64 = lo.f.iter().zip(phi_bar).map(|(f, b)| f.conj() * b).sum::<C64>() * lo.d_tau;
    Ok(e * p + e.conj() * q)
}

pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| PI * j as f64 / n as f64).collect()
}

/// Coefficients of (Re M_θ, Im M_θ) on (Re P, Im P, Re Q, Im Q).
pub fn quadrature_forms(theta: f64) -> ([f64; 4], [f64; 4]) {
    let (s, c) = theta.sin_cos();
    ([c, -s, c, s], [s, c, -s, c])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezingEstimate {
    pub theta: f64,
    pub s: f64,
    /// max(moment formula, sub-batch spread).
    pub std_error: f64,
    pub moment_error: f64,
    pub subbatch_error: Option<f64>,
    /// E[M_θ] (real part).
    pub mean: f64,
    /// Ensemble mean of Im M_θ with its standard error (PPR diagnostic).
    pub imag_residue: f64,
    pub imag_residue_error: f64,
    pub n: u64,
    /// Too few samples for the sub-batch cross-check.
    pub flagged: bool,
}

fn s_from(acc: &PowerSums, method: Method, noise: bool, cx: &[f64; 4], cy: &[f64; 4]) -> (f64, f64) {
    match method {
        Method::Ppr => {
            let v = variance_difference(acc, cx, cy);
            (1.0 + v.value, v.std_error)
        }
        Method::Twa => {
            let v = variance_difference(acc, cx, &[0.0; 4]);
            let vacuum = if noise { 0.0 } else { 1.0 };
            (vacuum + v.value, v.std_error)
        }
    }
}

/// S_θ at one recorded z. With `noise` false the TWA samples carry no vacuum
/// and S is reported relative to the coherent state they stand for.
pub fn squeezing_ratio(
    slice: &SliceStats,
    reference_p: C64,
    method: Method,
    noise: bool,
    theta: f64,
) -> Result<SqueezingEstimate> {
    let n = slice.quad.count();
    if n < 2 {
        return Err(Error::invalid(format!("squeezing ratio needs >= 2 accepted samples, got {n}")));
    }
    let (cx, cy) = quadrature_forms(theta);
    let (s, moment_error) = s_from(&slice.quad, method, noise, &cx, &cy);
    let subbatch_error = if n >= MIN_SUBBATCH_SAMPLES {
        let vals: Vec<f64> = slice
            .batches
            .iter()
            .filter(|b| b.count() >= 2)
            .map(|b| s_from(b, method, noise, &cx, &cy).0)
            .collect();
        subbatch_spread(&vals)
    } else {
        None
    };
    let std_error = match subbatch_error {
        Some(e) => moment_error.max(e),
        None => moment_error,
    };
    let m_ref = C64::from_polar(1.0, theta) * reference_p * 2.0;
    let mean = slice.quad.mean_linear(&cx) + m_ref.re;
    let (imag_residue, imag_residue_error) = match method {
        Method::Ppr => (slice.quad.mean_linear(&cy), mean_std_error(&slice.quad, &cy)),
        Method::Twa => (0.0, 0.0),
    };
    Ok(SqueezingEstimate {
        theta,
        s,
        std_error,
        moment_error,
        subbatch_error,
        mean,
        imag_residue,
        imag_residue_error,
        n,
        flagged: subbatch_error.is_none(),
    })
}

/// Standard error of the mean over batch estimates.
fn subbatch_spread(vals: &[f64]) -> Option<f64> {
    let b = vals.len();
    if b < 2 {
        return None;
    }
    let bf = b as f64;
    let mean = vals.iter().sum::<f64>() / bf;
    let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (bf * (bf - 1.0))).sqrt())
}

/// Grid argmin (ties towards smaller θ) refined by a periodic three-point parabola.
pub fn optimal_angle(thetas: &[f64], s: &[f64]) -> (f64, f64) {
    assert_eq!(thetas.len(), s.len());
    assert!(!s.is_empty());
    let mut best = 0;
    for (j, &v) in s.iter().enumerate() {
        if v < s[best] {
            best = j;
        }
    }
    let n = s.len();
    if n < 3 {
        return (thetas[best], s[best]);
    }
    let step = PI / n as f64;
    let (l, c, r) = (s[(best + n - 1) % n], s[best], s[(best + 1) % n]);
    let curv = l - 2.0 * c + r;
    if !(curv > 0.0) {
        return (thetas[best], c);
    }
    let offset = (0.5 * (l - r) / curv).clamp(-0.5, 0.5);
    let s_min = c - 0.25 * (l - r) * offset;
    let theta = (thetas[best] + offset * step).rem_euclid(PI);
    (theta, s_min)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingError {
    pub std_error: f64,
    pub moment_error: f64,
    pub subbatch_error: Option<f64>,
    pub flagged: bool,
}

/// Standard error of the sample variance of `samples`: the fourth-moment
/// formula, cross-checked by 32 interleaved sub-batches; the larger wins.
pub fn sampling_error(samples: &[f64]) -> Result<SamplingError> {
    if samples.len() < 2 {
        return Err(Error::invalid("sampling error needs >= 2 samples"));
    }
    let mut acc = PowerSums::new(1, 4);
    let mut batches: Vec<PowerSums> = (0..crate::ensemble::SUBBATCHES).map(|_| PowerSums::new(1, 2)).collect();
    let shift = samples[0];
    for (i, &x) in samples.iter().enumerate() {
        acc.push(&[x - shift]);
        let nb = batches.len();
        batches[i % nb].push(&[x - shift]);
    }
    let moment_error = variance_difference(&acc, &[1.0], &[0.0]).std_error;
    let subbatch_error = if samples.len() as u64 >= MIN_SUBBATCH_SAMPLES {
        let vals: Vec<f64> = batches
            .iter()
            .filter(|b| b.count() >= 2)
            .map(|b| variance_difference(b, &[1.0], &[0.0]).value)
            .collect();
        subbatch_spread(&vals)
    } else {
        None
    };
    Ok(SamplingError {
        std_error: subbatch_error.map_or(moment_error, |e| e.max(moment_error)),
        moment_error,
        subbatch_error,
        flagged: subbatch_error.is_none(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Mean imaginary part (PPR only).
    pub imag: f64,
}

/// Photon number per recorded z. The TWA estimate removes the symmetric-
/// ordering offset of half a quantum per τ mode, n_tau/2.
pub fn mean_flux(stats: &EnsembleStats) -> Vec<FluxEstimate> {
    stats
        .slices
        .iter()
        .zip(&stats.reference_flux)
        .map(|(s, &r)| {
            let offset = match stats.method {
                Method::Twa if stats.noise => 0.5 * stats.n_tau as f64,
                _ => 0.0,
            };
            FluxEstimate {
                mean: s.flux.mean_linear(&[1.0, 0.0]) + r - offset,
                std_error: mean_std_error(&s.flux, &[1.0, 0.0]),
                imag: s.flux.mean_linear(&[0.0, 1.0]),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceObservables {
    pub z: f64,
    pub per_theta: Vec<SqueezingEstimate>,
    pub theta_star: f64,
    pub s_min: f64,
    /// Standard error of S at the grid point nearest θ*.
    pub s_min_error: f64,
}

/// S_θ on the θ grid and its optimum at every recorded z.
pub fn squeezing_table(stats: &EnsembleStats, n_theta: usize) -> Result<Vec<SliceObservables>> {
    if n_theta == 0 {
        return Err(Error::invalid("n_theta must be >= 1"));
    }
    if stats.n_accepted() == 0 {
        return Err(Error::AllDiverged(stats.n_requested as usize));
    }
    let thetas = theta_grid(n_theta);
    stats
        .slices
        .iter()
        .enumerate()
        .map(|(k, slice)| {
            let per_theta = thetas
                .iter()
                .map(|&t| squeezing_ratio(slice, stats.reference_p[k], stats.method, stats.noise, t))
                .collect::<Result<Vec<_>>>()?;
            let s: Vec<f64> = per_theta.iter().map(|e| e.s).collect();
            let (theta_star, s_min) = optimal_angle(&thetas, &s);
            let nearest = ((theta_star / (PI / n_theta as f64)).round() as usize) % n_theta;
            Ok(SliceObservables {
                z: stats.z[k],
                s_min_error: per_theta[nearest].std_error,
                per_theta,
                theta_star,
                s_min,
            })
        })
        .collect()
}
