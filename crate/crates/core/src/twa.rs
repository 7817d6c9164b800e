//! Truncated-Wigner drift and reservoir noise.
//!
//! Variables are strict conjugate pairs, so each cell stores (β₁, β₂) only
//! and the field is a single complex array. The drift is the classical
//! Maxwell–Bloch flow; quantum noise enters through the initial Wigner
//! sample and the reservoir, never through the atoms.

use num_complex::Complex64 as C64;

use crate::model::{FreqClass, LatticeConfig};
use crate::ppr::{noise_scaling, NoiseScaling};
use crate::rng::NoiseStream;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Ordering offset s for the reservoir correlator κ(n̄+s).
pub const TWA_ORDERING_OFFSET: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwaCell {
    pub beta1: C64,
    pub beta2: C64,
}

impl TwaCell {
    pub fn ground(n_atoms: f64) -> Self {
        TwaCell {
            beta1: C64::new(n_atoms.max(0.0).sqrt(), 0.0),
            beta2: C64::new(0.0, 0.0),
        }
    }

    pub fn number(&self) -> f64 {
        self.beta1.norm_sqr() + self.beta2.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.beta1.re.is_finite()
            && self.beta1.im.is_finite()
            && self.beta2.re.is_finite()
            && self.beta2.im.is_finite()
    }

    pub(crate) fn axpy(&mut self, h: f64, d: &TwaCell) {
        self.beta1 += d.beta1 * h;
        self.beta2 += d.beta2 * h;
    }
}

/// dβ₁ = −(i/2)Δβ₁ − i g α* β₂,  dβ₂ = +(i/2)Δβ₂ − i g α β₁.
#[inline]
pub fn twa_atomic_drift(cell: &TwaCell, alpha: C64, detuning: f64, g: f64) -> TwaCell {
    let half_det = 0.5 * detuning;
    TwaCell {
        beta1: -I * cell.beta1 * half_det - I * (alpha.conj() * cell.beta2) * g,
        beta2: I * cell.beta2 * half_det - I * (alpha * cell.beta1) * g,
    }
}

/// R⁻ = 2β₁*β₂/N; zero for an empty cell.
#[inline]
pub fn twa_polarization(cell: &TwaCell, n_atoms: f64) -> C64 {
    if n_atoms <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    cell.beta1.conj() * cell.beta2 * (2.0 / n_atoms)
}

/// ∂φ/∂z = −(κ/2)φ − i g_φ Σ_ν ρ_1D w_ν R⁻_ν.
pub fn twa_field_drift(
    phi: C64,
    r_minus: &[C64],
    classes: &[FreqClass],
    kappa: f64,
    g_phi: f64,
    rho_1d: f64,
) -> C64 {
    let src: C64 = r_minus
        .iter()
        .zip(classes)
        .map(|(r, c)| r * (rho_1d * c.weight))
        .sum();
    -phi * (0.5 * kappa) - I * src * g_phi
}

pub fn twa_interaction_noise_scaling(
    lattice: &LatticeConfig,
    kappa: f64,
    n_bar: f64,
    tau_substeps: usize,
) -> NoiseScaling {
    noise_scaling(lattice, kappa, n_bar + TWA_ORDERING_OFFSET, tau_substeps)
}

/// One complex reservoir increment with ⟨|F|²⟩ = `variance`.
#[inline]
pub(crate) fn complex_increment(rng: &mut NoiseStream, variance: f64) -> C64 {
    let v = 0.5 * variance;
    C64::new(rng.normal(v), rng.normal(v))
}

/// Reservoir increments for one z-step: one complex Gaussian per τ sample
/// with ⟨F F*⟩ = κ(n̄+1/2)·d_z/d_τ.
pub fn twa_reservoir_noise(
    kappa: f64,
    n_bar: f64,
    lattice: &LatticeConfig,
    rng: &mut NoiseStream,
) -> Vec<C64> {
    let var = twa_interaction_noise_scaling(lattice, kappa, n_bar, 1).reservoir_variance;
    (0..lattice.n_tau())
        .map(|_| complex_increment(rng, var))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lattice, LineshapeSpec, PhysicalConfig, PulseSpec};
    use crate::ppr::{ppr_atomic_drift, ppr_field_drift, ppr_polarization, PprCell};
    use crate::rng::TAG_AUX;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_c(rng: &mut NoiseStream) -> C64 {
        c(rng.standard_normal(), rng.standard_normal())
    }

    fn lattice(kappa: f64) -> LatticeConfig {
        let phys = PhysicalConfig {
            g_phi: 1.0,
            kappa,
            n_bar: 0.0,
            rho_1d: 0.0,
            lineshape: LineshapeSpec::sharp(8e-7),
            pulse: PulseSpec::new(1.0, 0.0),
            z_max: 2.0,
            v_g: 1.0,
        };
        build_lattice(&phys, 32, 20, 1).unwrap()
    }

    #[test]
    fn unexcited_free_atoms_only_rotate() {
        let cell = TwaCell::ground(9.0);
        let d = twa_atomic_drift(&cell, c(0.0, 0.0), 0.6, 1.0);
        assert!((d.beta1 - (-I * 0.3 * 3.0)).norm() < 1e-15);
        assert_eq!(d.beta2, c(0.0, 0.0));
    }

    #[test]
    fn drift_conserves_cell_number() {
        let mut rng = NoiseStream::new(21, TAG_AUX, 0);
        for _ in 0..1000 {
            let cell = TwaCell { beta1: random_c(&mut rng), beta2: random_c(&mut rng) };
            let a = random_c(&mut rng);
            let d = twa_atomic_drift(&cell, a, rng.standard_normal(), 0.7);
            let dn = 2.0 * (cell.beta1.conj() * d.beta1 + cell.beta2.conj() * d.beta2).re;
            assert!(dn.abs() < 1e-13 * cell.number() * (1.0 + a.norm()));
        }
    }

    #[test]
    fn resonant_rabi_rotation_matches_closed_form() {
        // constant real α: β₁ = √N cos(gαt), β₂ = −i√N sin(gαt)
        let (g, alpha, n) = (1.3, 0.8, 4.0);
        let omega = g * alpha;
        let period = std::f64::consts::PI / omega;
        let steps = 20000;
        let h = period / steps as f64;
        let mut cell = TwaCell::ground(n);
        let rk4 = |y: &TwaCell| twa_atomic_drift(y, c(alpha, 0.0), 0.0, g);
        for _ in 0..steps {
            let k1 = rk4(&cell);
            let mut y = cell;
            y.axpy(0.5 * h, &k1);
            let k2 = rk4(&y);
            let mut y = cell;
            y.axpy(0.5 * h, &k2);
            let k3 = rk4(&y);
            let mut y = cell;
            y.axpy(h, &k3);
            let k4 = rk4(&y);
            cell.beta1 += (k1.beta1 + 2.0 * k2.beta1 + 2.0 * k3.beta1 + k4.beta1) * (h / 6.0);
            cell.beta2 += (k1.beta2 + 2.0 * k2.beta2 + 2.0 * k3.beta2 + k4.beta2) * (h / 6.0);
        }
        // one population period π/(gα) flips the sign of the amplitudes
        assert!((cell.beta1 - c(-2.0, 0.0)).norm() < 1e-10, "{:?}", cell);
        assert!(cell.beta2.norm() < 1e-10);
    }

    #[test]
    fn classical_limit_matches_positive_p() {
        let mut rng = NoiseStream::new(22, TAG_AUX, 0);
        let classes = [
            FreqClass { detuning: -0.4, weight: 0.3 },
            FreqClass { detuning: 0.9, weight: 0.7 },
        ];
        let n = [3.0, 7.0];
        for _ in 0..1000 {
            let cells: Vec<TwaCell> = (0..2)
                .map(|_| TwaCell { beta1: random_c(&mut rng), beta2: random_c(&mut rng) })
                .collect();
            let alpha = random_c(&mut rng);
            let phi = random_c(&mut rng);
            for (k, cell) in cells.iter().enumerate() {
                let p = PprCell {
                    beta1: cell.beta1,
                    beta1_plus: cell.beta1.conj(),
                    beta2: cell.beta2,
                    beta2_plus: cell.beta2.conj(),
                };
                let dt = twa_atomic_drift(cell, alpha, classes[k].detuning, 0.9);
                let dp = ppr_atomic_drift(&p, alpha, alpha.conj(), classes[k].detuning, 0.9);
                let scale = p.max_norm() * (1.0 + alpha.norm() + classes[k].detuning.abs());
                assert!((dt.beta1 - dp.beta1).norm() <= 1e-13 * scale);
                assert!((dt.beta2 - dp.beta2).norm() <= 1e-13 * scale);
                assert!((dt.beta1.conj() - dp.beta1_plus).norm() <= 1e-13 * scale);
                assert!((dt.beta2.conj() - dp.beta2_plus).norm() <= 1e-13 * scale);
            }
            let rt: Vec<C64> = cells.iter().zip(n).map(|(c, n)| twa_polarization(c, n)).collect();
            let (rm, rp): (Vec<C64>, Vec<C64>) = cells
                .iter()
                .zip(n)
                .map(|(c, n)| {
                    let p = PprCell {
                        beta1: c.beta1,
                        beta1_plus: c.beta1.conj(),
                        beta2: c.beta2,
                        beta2_plus: c.beta2.conj(),
                    };
                    ppr_polarization(&p, n)
                })
                .unzip();
            let ft = twa_field_drift(phi, &rt, &classes, 0.2, 1.1, 5.0);
            let (fp, fpp) = ppr_field_drift(phi, phi.conj(), &rm, &rp, &classes, 0.2, 1.1, 5.0);
            let scale = ft.norm().max(1.0);
            assert!((ft - fp).norm() <= 1e-13 * scale);
            assert!((ft.conj() - fpp).norm() <= 1e-13 * scale);
        }
    }

    #[test]
    fn transparent_medium_and_loss() {
        let classes = [FreqClass { detuning: 0.0, weight: 1.0 }];
        assert_eq!(twa_field_drift(c(1.0, 1.0), &[c(0.0, 0.0)], &classes, 0.0, 1.0, 1.0), c(0.0, 0.0));
        assert_eq!(twa_field_drift(c(2.0, 0.0), &[], &[], 0.5, 1.0, 1.0), c(-0.5, 0.0));
    }

    #[test]
    fn no_loss_no_reservoir_noise() {
        let l = lattice(0.0);
        let mut rng = NoiseStream::new(23, TAG_AUX, 0);
        assert!(twa_reservoir_noise(0.0, 5.0, &l, &mut rng).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn vacuum_half_quantum_enters_the_reservoir() {
        let l = lattice(0.4);
        let s = twa_interaction_noise_scaling(&l, 0.4, 0.0, 1);
        assert!((s.reservoir_variance - 0.4 * 0.5 * l.d_z / l.d_tau()).abs() < 1e-12);
        let p = crate::ppr::ppr_interaction_noise_scaling(&l, 0.4, 0.0, 1);
        assert_eq!(p.reservoir_variance, 0.0);
    }

    #[test]
    fn reservoir_second_moment() {
        let (kappa, n_bar) = (0.4, 2.0);
        let l = lattice(kappa);
        let expected = kappa * (n_bar + 0.5) * l.d_z / l.d_tau();
        let mut rng = NoiseStream::new(24, TAG_AUX, 0);
        let mut xs = Vec::with_capacity(1_000_000);
        while xs.len() < 1_000_000 {
            xs.extend(twa_reservoir_noise(kappa, n_bar, &l, &mut rng).iter().map(|z| z.norm_sqr()));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - expected).abs() < 5.0 * se, "{mean} vs {expected} (se {se})");
        // ⟨F F⟩ vanishes for a phase-insensitive reservoir
        let mut rng = NoiseStream::new(25, TAG_AUX, 0);
        let mut acc = c(0.0, 0.0);
        let mut m = 0.0;
        while m < 1e5 {
            for z in twa_reservoir_noise(kappa, n_bar, &l, &mut rng) {
                acc += z * z;
                m += 1.0;
            }
        }
        assert!((acc / m).norm() < 5.0 * expected / m.sqrt());
    }
}
