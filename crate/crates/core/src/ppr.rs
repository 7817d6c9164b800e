//! Positive-P drift and noise kernels on the doubled phase space.
//!
//! Variables per spatio-frequency cell are (β₁, β₁⁺, β₂, β₂⁺); the field
//! partner of φ is φ⁺. The `+` partners are independent variables, never
//! conjugates. Per-cell noise is driven by six real Wiener increments: two
//! reservoir channels shared by every class of a τ-cell and four
//! field–atom channels per class.

use num_complex::Complex64 as C64;

use crate::model::{FreqClass, LatticeConfig};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PprCell {
    pub beta1: C64,
    pub beta1_plus: C64,
    pub beta2: C64,
    pub beta2_plus: C64,
}

impl PprCell {
    pub const ZERO: PprCell = PprCell {
        beta1: C64 { re: 0.0, im: 0.0 },
        beta1_plus: C64 { re: 0.0, im: 0.0 },
        beta2: C64 { re: 0.0, im: 0.0 },
        beta2_plus: C64 { re: 0.0, im: 0.0 },
    };

    /// All `n_atoms` atoms in the ground mode: β₁ = β₁⁺ = √N, β₂ = β₂⁺ = 0.
    pub fn ground(n_atoms: f64) -> Self {
        let b = C64::new(n_atoms.max(0.0).sqrt(), 0.0);
        PprCell {
            beta1: b,
            beta1_plus: b,
            ..Self::ZERO
        }
    }

    /// β₁⁺β₁ + β₂⁺β₂, the per-cell boson number.
    pub fn number(&self) -> C64 {
        self.beta1_plus * self.beta1 + self.beta2_plus * self.beta2
    }

    /// β₂⁺β₂, the excited-mode occupation.
    pub fn excitation(&self) -> C64 {
        self.beta2_plus * self.beta2
    }

    pub fn is_finite(&self) -> bool {
        [self.beta1, self.beta1_plus, self.beta2, self.beta2_plus]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_norm(&self) -> f64 {
        [self.beta1, self.beta1_plus, self.beta2, self.beta2_plus]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn axpy(&mut self, h: f64, d: &PprCell) {
        self.beta1 += d.beta1 * h;
        self.beta1_plus += d.beta1_plus * h;
        self.beta2 += d.beta2 * h;
        self.beta2_plus += d.beta2_plus * h;
    }
}

/// Which right-hand side to use for dβ₂⁺/dτ.
///
/// `Conjugate` mirrors the β₂ equation (+ig α⁺ β₁⁺) and conserves the cell
/// number. `AsPrinted` (+ig α⁺ β₂⁺) exists only so tests can show that it
/// does not.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Beta2PlusForm {
    #[default]
    Conjugate,
    AsPrinted,
}

/// Time derivative of one cell driven by the local mode amplitudes (α, α⁺).
#[inline]
pub fn ppr_atomic_drift(cell: &PprCell, alpha: C64, alpha_plus: C64, detuning: f64, g: f64) -> PprCell {
    ppr_atomic_drift_with(cell, alpha, alpha_plus, detuning, g, Beta2PlusForm::Conjugate)
}

#[inline]
pub fn ppr_atomic_drift_with(
    cell: &PprCell,
    alpha: C64,
    alpha_plus: C64,
    detuning: f64,
    g: f64,
    form: Beta2PlusForm,
) -> PprCell {
    let half_det = 0.5 * detuning;
    let beta2_plus = match form {
        Beta2PlusForm::Conjugate => I * (alpha_plus * cell.beta1_plus) * g - I * cell.beta2_plus * half_det,
        Beta2PlusForm::AsPrinted => I * (alpha_plus * cell.beta2_plus) * g - I * cell.beta2_plus * half_det,
    };
    PprCell {
        beta1: -I * (alpha_plus * cell.beta2) * g - I * cell.beta1 * half_det,
        beta1_plus: I * (alpha * cell.beta2_plus) * g + I * cell.beta1_plus * half_det,
        beta2: -I * (alpha * cell.beta1) * g + I * cell.beta2 * half_det,
        beta2_plus,
    }
}

/// Polarization fields (R⁻, R⁺) = (2β₁⁺β₂/N, 2β₂⁺β₁/N). Empty cells give 0.
#[inline]
pub fn ppr_polarization(cell: &PprCell, n_atoms: f64) -> (C64, C64) {
    if n_atoms <= 0.0 {
        return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    }
    let s = 2.0 / n_atoms;
    (cell.beta1_plus * cell.beta2 * s, cell.beta2_plus * cell.beta1 * s)
}

/// ∂(φ, φ⁺)/∂z at one τ sample:
///   ∂φ/∂z  = −(κ/2)φ  − i g_φ Σ_ν ρ_1D w_ν R⁻_ν
///   ∂φ⁺/∂z = −(κ/2)φ⁺ + i g_φ Σ_ν ρ_1D w_ν R⁺_ν
#[allow(clippy::too_many_arguments)]
pub fn ppr_field_drift(
    phi: C64,
    phi_plus: C64,
    r_minus: &[C64],
    r_plus: &[C64],
    classes: &[FreqClass],
    kappa: f64,
    g_phi: f64,
    rho_1d: f64,
) -> (C64, C64) {
    let mut src = C64::new(0.0, 0.0);
    let mut src_plus = C64::new(0.0, 0.0);
    for ((rm, rp), c) in r_minus.iter().zip(r_plus).zip(classes) {
        let dens = rho_1d * c.weight;
        src += rm * dens;
        src_plus += rp * dens;
    }
    (
        -phi * (0.5 * kappa) - I * src * g_phi,
        -phi_plus * (0.5 * kappa) + I * src_plus * g_phi,
    )
}

/// Complex noise amplitudes for one cell.
///
/// Columns are the real increments (η¹ … η⁶); rows are the variables
/// (α, α⁺, β₁, β₁⁺, β₂, β₂⁺):
///
/// ```text
///   F^α   = r (η¹ + iη²) + X a (η³ + iη⁴)
///   F^α⁺  = r (η¹ − iη²) + X b (η⁵ + iη⁶)
///   F^β₁  = a/X (η³ − iη⁴)
///   F^β₁⁺ = b/X (η⁵ − iη⁶)
/// ```
///
/// with r = √(γn̄/2), a = √(−igβ₂/2), b = √(igβ₂⁺/2) on the principal branch
/// and X the diffusion-gauge factor (1 by default).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseBlock {
    pub reservoir: f64,
    pub field_atom: C64,
    pub field_atom_plus: C64,
    pub gauge: f64,
}

impl NoiseBlock {
    pub fn with_gauge(mut self, gauge: f64) -> Self {
        self.gauge = gauge;
        self
    }

    /// The 6×6 matrix B_n (rows: variables, columns: η¹…η⁶).
    pub fn matrix(&self) -> [[C64; 6]; 6] {
        let z = C64::new(0.0, 0.0);
        let r = C64::new(self.reservoir, 0.0);
        let x = self.gauge;
        let a = self.field_atom;
        let b = self.field_atom_plus;
        [
            [r, I * r, a * x, I * a * x, z, z],
            [r, -I * r, z, z, b * x, I * b * x],
            [z, z, a / x, -I * a / x, z, z],
            [z, z, z, z, b / x, -I * b / x],
            [z; 6],
            [z; 6],
        ]
    }

    /// Noise increments (F^α, F^α⁺, F^β₁, F^β₁⁺, F^β₂, F^β₂⁺) for real increments η.
    pub fn apply(&self, eta: &[f64; 6]) -> [C64; 6] {
        let m = self.matrix();
        let mut out = [C64::new(0.0, 0.0); 6];
        for (row, o) in m.iter().zip(out.iter_mut()) {
            *o = row.iter().zip(eta).map(|(b, e)| b * e).sum();
        }
        out
    }
}

/// Noise amplitudes of one cell at its current state.
pub fn build_noise_block(cell: &PprCell, g: f64, gamma: f64, n_bar: f64) -> NoiseBlock {
    NoiseBlock {
        reservoir: (0.5 * gamma * n_bar).sqrt(),
        field_atom: field_atom_amplitude(cell.beta2, g),
        field_atom_plus: field_atom_amplitude_plus(cell.beta2_plus, g),
        gauge: 1.0,
    }
}

/// √(−i g β₂ / 2), principal branch.
#[inline]
pub fn field_atom_amplitude(beta2: C64, g: f64) -> C64 {
    (-I * beta2 * (0.5 * g)).sqrt()
}

/// √(+i g β₂⁺ / 2), principal branch.
#[inline]
pub fn field_atom_amplitude_plus(beta2_plus: C64, g: f64) -> C64 {
    (I * beta2_plus * (0.5 * g)).sqrt()
}

/// Analytic diffusion block D_n in the variable order (α, α⁺, β₁, β₁⁺, β₂, β₂⁺).
pub fn diffusion_matrix(cell: &PprCell, g: f64, gamma: f64, n_bar: f64) -> [[C64; 6]; 6] {
    let mut d = [[C64::new(0.0, 0.0); 6]; 6];
    let res = C64::new(gamma * n_bar, 0.0);
    d[0][1] = res;
    d[1][0] = res;
    let da = -I * cell.beta2 * g;
    d[0][2] = da;
    d[2][0] = da;
    let dp = I * cell.beta2_plus * g;
    d[1][3] = dp;
    d[3][1] = dp;
    d
}

/// B·Bᵀ (plain transpose, no conjugation).
pub fn outer_transpose(b: &[[C64; 6]; 6]) -> [[C64; 6]; 6] {
    let mut d = [[C64::new(0.0, 0.0); 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            d[i][j] = (0..6).map(|k| b[i][k] * b[j][k]).sum();
        }
    }
    d
}

/// Grid multipliers that turn the continuum δ-correlated noises into
/// per-step increments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScaling {
    /// ⟨ΔF ΔF*⟩ of the reservoir increment per (τ sample, z step): κ(n̄+s)·d_z/d_τ.
    pub reservoir_variance: f64,
    /// Variance of each real atomic-sweep increment (one τ substep).
    pub atom_increment_variance: f64,
    /// Factor mapping one cell's summed field–atom increments over a τ sample
    /// into a photon-flux increment: √(d_z/v_g)/d_τ.
    pub field_from_cell: f64,
}

/// Ordering offset s for the reservoir correlator κ(n̄+s).
pub const PPR_ORDERING_OFFSET: f64 = 0.0;

pub fn ppr_interaction_noise_scaling(
    lattice: &LatticeConfig,
    kappa: f64,
    n_bar: f64,
    tau_substeps: usize,
) -> NoiseScaling {
    noise_scaling(lattice, kappa, n_bar + PPR_ORDERING_OFFSET, tau_substeps)
}

pub(crate) fn noise_scaling(
    lattice: &LatticeConfig,
    kappa: f64,
    occupation: f64,
    tau_substeps: usize,
) -> NoiseScaling {
    let d_tau = lattice.d_tau();
    NoiseScaling {
        reservoir_variance: kappa * occupation * lattice.d_z / d_tau,
        atom_increment_variance: d_tau / tau_substeps.max(1) as f64,
        field_from_cell: lattice.flux_to_mode / d_tau,
    }
}
