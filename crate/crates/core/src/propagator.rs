//! One trajectory: z-stepping with a fresh atomic τ-sweep per slice.
//!
//! Each z-step owns fresh ground-state atoms. They are swept over the τ
//! window, driven by the field at slice entry, and once the sweep has passed
//! sample i the field there is advanced by one d_z step (Itô order, so the
//! increments are non-anticipating).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    input_field_noise, sech_pulse, wigner_vacuum, LatticeConfig, Method, PhysicalConfig,
};
use crate::observables::{matched_lo, LocalOscillator};
use crate::ppr::{
    field_atom_amplitude, field_atom_amplitude_plus, ppr_atomic_drift_with, ppr_field_drift,
    ppr_interaction_noise_scaling, ppr_polarization, Beta2PlusForm, PprCell,
};
use crate::rng::{NoiseStream, TAG_PPR, TAG_TWA};
use crate::twa::{
    complex_increment, twa_atomic_drift, twa_field_drift, twa_interaction_noise_scaling,
    twa_polarization, TwaCell,
};

/// Target rotation angle g|α|·h per atomic substep.
pub const RABI_ANGLE_PER_SUBSTEP: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeVariant {
    #[default]
    EulerMaruyama,
    /// Detuning and loss treated implicitly, everything else explicit.
    DriftImplicitEuler,
    /// Trapezoidal drift in both τ and z with the noise taken at the left
    /// point, so it stays Itô-consistent without drift corrections. Explicit
    /// Euler inflates near-resonant field components by √(1 + (c·d_z/ω)²)
    /// per step, which the Wigner vacuum noise feels at n_z of a few hundred.
    PredictorCorrector,
}

impl SchemeVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeVariant::EulerMaruyama => "euler_maruyama",
            SchemeVariant::DriftImplicitEuler => "drift_implicit_euler",
            SchemeVariant::PredictorCorrector => "predictor_corrector",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScheme {
    pub variant: SchemeVariant,
    /// z-steps between recorded output slices.
    pub z_substeps: usize,
    /// Atomic substeps per τ sample; 0 picks the Rabi-angle rule.
    pub tau_substeps: usize,
}

impl Default for StepScheme {
    fn default() -> Self {
        StepScheme { variant: SchemeVariant::EulerMaruyama, z_substeps: 1, tau_substeps: 0 }
    }
}

impl StepScheme {
    /// Smallest substep count with 2 g_φ |φ|_max · d_τ/m ≤ 0.05.
    pub fn auto_tau_substeps(g_phi: f64, peak_flux: f64, d_tau: f64) -> usize {
        let angle = 2.0 * g_phi * peak_flux.abs() * d_tau;
        ((angle / RABI_ANGLE_PER_SUBSTEP).ceil() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoMode {
    /// Matched to the noise-free propagated pulse at each recorded z.
    #[default]
    Propagated,
    /// Matched to the input pulse at every z.
    Input,
}

impl LoMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoMode::Propagated => "propagated",
            LoMode::Input => "input",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Master switch for every stochastic term, including Wigner initial noise.
    pub noise: bool,
    pub beta2_plus_form: Beta2PlusForm,
    /// Diffusion gauge X: field-noise columns ×X, atom-noise columns ×1/X.
    pub gauge: f64,
    /// A trajectory diverges once |φ| or |φ⁺| exceeds this multiple of its initial scale.
    pub divergence_bound: f64,
    pub local_oscillator: LoMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            noise: true,
            beta2_plus_form: Beta2PlusForm::Conjugate,
            gauge: 1.0,
            divergence_bound: 1e6,
            local_oscillator: LoMode::Propagated,
        }
    }
}

/// Noise-free propagation shared by both methods: local oscillators and the
/// deterministic shift applied to streamed samples.
#[derive(Clone, Debug)]
pub struct Reference {
    pub z: Vec<f64>,
    pub fields: Vec<Vec<C64>>,
    pub lo: Vec<LocalOscillator>,
    /// Σ d_τ f φ_cl at each recorded z.
    pub p: Vec<C64>,
    /// Σ d_τ |φ_cl|².
    pub flux: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub physical: PhysicalConfig,
    pub lattice: LatticeConfig,
    pub scheme: StepScheme,
    pub options: SimOptions,
    pub master_seed: u64,
    pub input: Vec<C64>,
    pub reference: Reference,
}

/// Per-slice sample from one trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceSample {
    /// Σ d_τ f φ.
    pub p: C64,
    /// Σ d_τ f* φ̄ (φ̄ = φ⁺ or φ*).
    pub q: C64,
    /// Σ d_τ φ̄ φ.
    pub flux: C64,
}

impl SliceSample {
    /// M_θ = e^{iθ}P + e^{−iθ}Q (complex for the PPR).
    pub fn m_theta(&self, theta: f64) -> C64 {
        let e = C64::from_polar(1.0, theta);
        e * self.p + e.conj() * self.q
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub diverged: bool,
    /// One entry per recorded z; truncated at the slice where divergence hit.
    pub samples: Vec<SliceSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldState {
    Ppr { phi: Vec<C64>, phi_plus: Vec<C64> },
    Twa { phi: Vec<C64> },
}

impl FieldState {
    pub fn phi(&self) -> &[C64] {
        match self {
            FieldState::Ppr { phi, .. } | FieldState::Twa { phi } => phi,
        }
    }

    /// φ⁺ for the PPR, φ* for the TWA.
    pub fn phi_bar(&self) -> Vec<C64> {
        match self {
            FieldState::Ppr { phi_plus, .. } => phi_plus.clone(),
            FieldState::Twa { phi } => phi.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Largest amplitude; infinite if any entry is not finite.
    fn max_norm(&self) -> f64 {
        match self {
            FieldState::Ppr { phi, phi_plus } => max_norm(phi).max(max_norm(phi_plus)),
            FieldState::Twa { phi } => max_norm(phi),
        }
    }
}

fn max_norm(v: &[C64]) -> f64 {
    let mut m = 0.0_f64;
    for z in v {
        let n = z.norm();
        if !n.is_finite() {
            return f64::INFINITY;
        }
        m = m.max(n);
    }
    m
}

impl Simulation {
    pub fn new(
        physical: PhysicalConfig,
        lattice: LatticeConfig,
        scheme: StepScheme,
        options: SimOptions,
        master_seed: u64,
    ) -> Result<Self> {
        physical.validate()?;
        if scheme.z_substeps == 0 || lattice.n_z % scheme.z_substeps != 0 {
            return Err(Error::invalid(format!(
                "z_substeps ({}) must be >= 1 and divide n_z ({})",
                scheme.z_substeps, lattice.n_z
            )));
        }
        if !(options.gauge > 0.0 && options.gauge.is_finite()) {
            return Err(Error::invalid("gauge must be finite and > 0"));
        }
        if !(options.divergence_bound > 1.0) {
            return Err(Error::invalid("divergence_bound must be > 1"));
        }
        let input = sech_pulse(&physical.pulse, physical.g_phi, &lattice.tau)?;
        let peak = input.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut scheme = scheme;
        if scheme.tau_substeps == 0 {
            scheme.tau_substeps = StepScheme::auto_tau_substeps(physical.g_phi, peak, lattice.d_tau());
        }
        let mut sim = Simulation {
            physical,
            lattice,
            scheme,
            options,
            master_seed,
            input,
            reference: Reference { z: vec![], fields: vec![], lo: vec![], p: vec![], flux: vec![] },
        };
        sim.reference = sim.compute_reference()?;
        Ok(sim)
    }

    pub fn n_output(&self) -> usize {
        self.lattice.n_z / self.scheme.z_substeps + 1
    }

    pub fn output_z(&self) -> Vec<f64> {
        (0..self.n_output())
            .map(|k| (k * self.scheme.z_substeps) as f64 * self.lattice.d_z)
            .collect()
    }

    /// Initial scale used by the divergence monitor.
    pub fn field_scale(&self) -> f64 {
        let peak = self.input.iter().map(|z| z.norm()).fold(0.0, f64::max);
        peak.max(1.0 / self.lattice.d_tau().sqrt())
    }

    fn compute_reference(&self) -> Result<Reference> {
        let mut quiet = self.clone();
        quiet.options.noise = false;
        let mut field = FieldState::Ppr { phi: self.input.clone(), phi_plus: self.input.clone() };
        let mut rng = NoiseStream::new(0, TAG_PPR, 0);
        let d_tau = self.lattice.d_tau();
        let input_lo = matched_lo(&self.input, d_tau)?;
        let mut fields = vec![self.input.clone()];
        for _ in 1..self.n_output() {
            for _ in 0..self.scheme.z_substeps {
                if !propagate_slice(&quiet, &mut field, &mut rng) {
                    return Err(Error::invalid("noise-free reference propagation diverged"));
                }
            }
            fields.push(field.phi().to_vec());
        }
        let mut lo = Vec::with_capacity(fields.len());
        for f in &fields {
            lo.push(match self.options.local_oscillator {
                LoMode::Input => input_lo.clone(),
                LoMode::Propagated => matched_lo(f, d_tau)?,
            });
        }
        let p = fields
            .iter()
            .zip(&lo)
            .map(|(f, l)| l.overlap(f))
            .collect();
        let flux = fields
            .iter()
            .map(|f| f.iter().map(|z| z.norm_sqr()).sum::<f64>() * d_tau)
            .collect();
        Ok(Reference { z: self.output_z(), fields, lo, p, flux })
    }

    fn sample(&self, k: usize, field: &FieldState) -> SliceSample {
        let lo = &self.reference.lo[k];
        let d_tau = self.lattice.d_tau();
        let mut p = C64::new(0.0, 0.0);
        let mut q = C64::new(0.0, 0.0);
        let mut flux = C64::new(0.0, 0.0);
        match field {
            FieldState::Ppr { phi, phi_plus } => {
                for ((f, a), b) in lo.f.iter().zip(phi).zip(phi_plus) {
                    p += f * a;
                    q += f.conj() * b;
                    flux += b * a;
                }
            }
            FieldState::Twa { phi } => {
                for (f, a) in lo.f.iter().zip(phi) {
                    p += f * a;
                    flux += a.norm_sqr();
                }
                q = p.conj();
            }
        }
        SliceSample { p: p * d_tau, q: q * d_tau, flux: flux * d_tau }
    }
}

/// Advance the field by one z-step. Returns false when the trajectory diverged.
pub fn propagate_slice(sim: &Simulation, field: &mut FieldState, rng: &mut NoiseStream) -> bool {
    match field {
        FieldState::Ppr { phi, phi_plus } => propagate_slice_ppr(sim, phi, phi_plus, rng),
        FieldState::Twa { phi } => propagate_slice_twa(sim, phi, rng),
    }
    let m = field.max_norm();
    m.is_finite() && m <= sim.options.divergence_bound * sim.field_scale()
}

/// Increments of one z-step, drawn up front in the fixed order
/// (τ sample, then reservoir channels, then class, substep, channel) so a
/// predictor–corrector pass can replay the same atomic noise.
struct PprSliceNoise {
    reservoir: Vec<(C64, C64)>,
    /// Four standard normals per (τ sample, active class, substep).
    atoms: Vec<f64>,
}

fn draw_ppr_noise(sim: &Simulation, res_amp: f64, rng: &mut NoiseStream) -> Option<PprSliceNoise> {
    if !sim.options.noise {
        return None;
    }
    let lat = &sim.lattice;
    let active = lat.atoms_per_cell.iter().filter(|&&n| n > 0.0).count();
    let per_sample = 4 * active * sim.scheme.tau_substeps;
    let mut reservoir = Vec::with_capacity(lat.n_tau());
    let mut atoms = Vec::with_capacity(lat.n_tau() * per_sample);
    for _ in 0..lat.n_tau() {
        let e1 = rng.standard_normal() * res_amp;
        let e2 = rng.standard_normal() * res_amp;
        reservoir.push((C64::new(e1, e2), C64::new(e1, -e2)));
        for _ in 0..per_sample {
            atoms.push(rng.standard_normal());
        }
    }
    Some(PprSliceNoise { reservoir, atoms })
}

/// Slice-averaged polarization per (τ sample, class) and the summed
/// field–atom noise per τ sample.
struct PprSweep {
    r_minus: Vec<C64>,
    r_plus: Vec<C64>,
    noise: Vec<(C64, C64)>,
    cells: Vec<PprCell>,
    /// max over τ samples and classes of |β₁⁺β₁ + β₂⁺β₂ − N|/N.
    max_number_error: f64,
}

/// Sweep fresh ground-state atoms over the window, driven by `(phi, phi_plus)`.
fn ppr_sweep(sim: &Simulation, phi: &[C64], phi_plus: &[C64], noise: Option<&PprSliceNoise>) -> PprSweep {
    let lat = &sim.lattice;
    let m = sim.scheme.tau_substeps;
    let h = lat.d_tau() / m as f64;
    let g = lat.g_cell;
    let x = sim.options.gauge;
    let form = sim.options.beta2_plus_form;
    let variant = sim.scheme.variant;
    let eta_sd = (lat.d_tau() / m as f64).sqrt();
    let classes = &lat.freq_classes;
    let nc = classes.len();
    let rotations: Vec<(C64, C64)> = classes
        .iter()
        .map(|c| {
            let a = C64::new(1.0, 0.5 * c.detuning * h);
            (a.inv(), a.conj().inv())
        })
        .collect();
    let mut cells: Vec<PprCell> = lat.atoms_per_cell.iter().map(|&n| PprCell::ground(n)).collect();
    let zero = C64::new(0.0, 0.0);
    let mut out = PprSweep {
        r_minus: vec![zero; phi.len() * nc],
        r_plus: vec![zero; phi.len() * nc],
        noise: vec![(zero, zero); phi.len()],
        cells: vec![],
        max_number_error: 0.0,
    };
    let inv_m = 1.0 / m as f64;
    let mut cursor = 0;

    for i in 0..phi.len() {
        let alpha = phi[i] * lat.flux_to_mode;
        let alpha_plus = phi_plus[i] * lat.flux_to_mode;
        let mut noise_sum = zero;
        let mut noise_sum_plus = zero;
        for (k, cell) in cells.iter_mut().enumerate() {
            let n_atoms = lat.atoms_per_cell[k];
            if n_atoms <= 0.0 {
                continue;
            }
            let det = classes[k].detuning;
            let mut rm = zero;
            let mut rp = zero;
            for _ in 0..m {
                let (n1, n1p) = match noise {
                    Some(nz) => {
                        let e = &nz.atoms[cursor..cursor + 4];
                        cursor += 4;
                        let amp = field_atom_amplitude(cell.beta2, g);
                        let amp_plus = field_atom_amplitude_plus(cell.beta2_plus, g);
                        let (e3, e4, e5, e6) = (e[0] * eta_sd, e[1] * eta_sd, e[2] * eta_sd, e[3] * eta_sd);
                        noise_sum += amp * C64::new(e3, e4) * x;
                        noise_sum_plus += amp_plus * C64::new(e5, e6) * x;
                        (amp * C64::new(e3, -e4) / x, amp_plus * C64::new(e5, -e6) / x)
                    }
                    None => (zero, zero),
                };
                match variant {
                    SchemeVariant::EulerMaruyama => {
                        let (a, b) = ppr_polarization(cell, n_atoms);
                        rm += a;
                        rp += b;
                        let d = ppr_atomic_drift_with(cell, alpha, alpha_plus, det, g, form);
                        cell.axpy(h, &d);
                    }
                    SchemeVariant::DriftImplicitEuler => {
                        let (a, b) = ppr_polarization(cell, n_atoms);
                        rm += a;
                        rp += b;
                        let d = ppr_atomic_drift_with(cell, alpha, alpha_plus, 0.0, g, form);
                        let (div, div_conj) = rotations[k];
                        // the β₁ and β₂⁺ lines carry −iΔ/2, the β₁⁺ and β₂ lines +iΔ/2
                        cell.beta1 = (cell.beta1 + d.beta1 * h + n1) * div;
                        cell.beta1_plus = (cell.beta1_plus + d.beta1_plus * h + n1p) * div_conj;
                        cell.beta2 = (cell.beta2 + d.beta2 * h) * div_conj;
                        cell.beta2_plus = (cell.beta2_plus + d.beta2_plus * h) * div;
                        continue;
                    }
                    SchemeVariant::PredictorCorrector => {
                        let (a0, b0) = ppr_polarization(cell, n_atoms);
                        let d1 = ppr_atomic_drift_with(cell, alpha, alpha_plus, det, g, form);
                        let mut pred = *cell;
                        pred.axpy(h, &d1);
                        let d2 = ppr_atomic_drift_with(&pred, alpha, alpha_plus, det, g, form);
                        cell.axpy(0.5 * h, &d1);
                        cell.axpy(0.5 * h, &d2);
                        cell.beta1 += n1;
                        cell.beta1_plus += n1p;
                        let (a1, b1) = ppr_polarization(cell, n_atoms);
                        rm += (a0 + a1) * 0.5;
                        rp += (b0 + b1) * 0.5;
                        continue;
                    }
                }
                cell.beta1 += n1;
                cell.beta1_plus += n1p;
            }
            out.r_minus[i * nc + k] = rm * inv_m;
            out.r_plus[i * nc + k] = rp * inv_m;
            if noise.is_none() {
                let err = (cell.number() - n_atoms).norm() / n_atoms;
                out.max_number_error = out.max_number_error.max(err);
            }
        }
        out.noise[i] = (noise_sum, noise_sum_plus);
    }
    out.cells = cells;
    out
}

/// Noise-free atomic sweep of one slice driven by a classical field.
#[derive(Clone, Debug)]
pub struct SliceAtoms {
    /// Cell states after the whole window has passed, one per class.
    pub cells: Vec<PprCell>,
    /// Largest relative drift of the per-cell number during the sweep.
    pub max_number_error: f64,
}

impl SliceAtoms {
    /// Excitations left behind in the slice, Σ_k Re β₂⁺β₂.
    pub fn excitation(&self) -> f64 {
        self.cells.iter().map(|c| c.excitation().re).sum()
    }
}

pub fn sweep_atoms(sim: &Simulation, phi: &[C64]) -> SliceAtoms {
    let sw = ppr_sweep(sim, phi, phi, None);
    SliceAtoms { cells: sw.cells, max_number_error: sw.max_number_error }
}

fn propagate_slice_ppr(sim: &Simulation, phi: &mut [C64], phi_plus: &mut [C64], rng: &mut NoiseStream) {
    let lat = &sim.lattice;
    let phys = &sim.physical;
    let d_z = lat.d_z;
    let m = sim.scheme.tau_substeps;
    let scaling = ppr_interaction_noise_scaling(lat, phys.kappa, phys.n_bar, m);
    let res_amp = (0.5 * scaling.reservoir_variance).sqrt();
    let loss_div = 1.0 / (1.0 + 0.5 * phys.kappa * d_z);
    let classes = &lat.freq_classes;
    let nc = classes.len();
    let zero = C64::new(0.0, 0.0);

    let noise = draw_ppr_noise(sim, res_amp, rng);
    let first = ppr_sweep(sim, phi, phi_plus, noise.as_ref());
    let kicks = |i: usize| -> (C64, C64) {
        match &noise {
            Some(nz) => {
                let (r, rp) = nz.reservoir[i];
                let (a, ap) = first.noise[i];
                (a * scaling.field_from_cell + r, ap * scaling.field_from_cell + rp)
            }
            None => (zero, zero),
        }
    };
    let drift = |sw: &PprSweep, i: usize, p: C64, pp: C64, kappa: f64| {
        let r = &sw.r_minus[i * nc..(i + 1) * nc];
        let rp = &sw.r_plus[i * nc..(i + 1) * nc];
        ppr_field_drift(p, pp, r, rp, classes, kappa, phys.g_phi, phys.rho_1d)
    };

    match sim.scheme.variant {
        SchemeVariant::EulerMaruyama => {
            for i in 0..phi.len() {
                let (d, dp) = drift(&first, i, phi[i], phi_plus[i], phys.kappa);
                let (k, kp) = kicks(i);
                phi[i] += d * d_z + k;
                phi_plus[i] += dp * d_z + kp;
            }
        }
        SchemeVariant::DriftImplicitEuler => {
            for i in 0..phi.len() {
                let (d, dp) = drift(&first, i, phi[i], phi_plus[i], 0.0);
                let (k, kp) = kicks(i);
                phi[i] = (phi[i] + d * d_z + k) * loss_div;
                phi_plus[i] = (phi_plus[i] + dp * d_z + kp) * loss_div;
            }
        }
        SchemeVariant::PredictorCorrector => {
            let d1: Vec<(C64, C64)> =
                (0..phi.len()).map(|i| drift(&first, i, phi[i], phi_plus[i], phys.kappa)).collect();
            let pred: Vec<C64> = (0..phi.len()).map(|i| phi[i] + d1[i].0 * d_z).collect();
            let pred_plus: Vec<C64> = (0..phi.len()).map(|i| phi_plus[i] + d1[i].1 * d_z).collect();
            let second = ppr_sweep(sim, &pred, &pred_plus, noise.as_ref());
            for i in 0..phi.len() {
                let (d2, d2p) = drift(&second, i, pred[i], pred_plus[i], phys.kappa);
                let (k, kp) = kicks(i);
                phi[i] += (d1[i].0 + d2) * (0.5 * d_z) + k;
                phi_plus[i] += (d1[i].1 + d2p) * (0.5 * d_z) + kp;
            }
        }
    }
}

/// Slice-averaged R⁻ per (τ sample, class) for atoms starting from `init`.
fn twa_sweep(sim: &Simulation, phi: &[C64], init: &[TwaCell]) -> Vec<C64> {
    let lat = &sim.lattice;
    let m = sim.scheme.tau_substeps;
    let h = lat.d_tau() / m as f64;
    let g = lat.g_cell;
    let classes = &lat.freq_classes;
    let nc = classes.len();
    let variant = sim.scheme.variant;
    let rotations: Vec<C64> = classes
        .iter()
        .map(|c| C64::new(1.0, 0.5 * c.detuning * h).inv())
        .collect();
    let mut cells = init.to_vec();
    let mut r_minus = vec![C64::new(0.0, 0.0); phi.len() * nc];
    let inv_m = 1.0 / m as f64;

    for i in 0..phi.len() {
        let alpha = phi[i] * lat.flux_to_mode;
        for (k, cell) in cells.iter_mut().enumerate() {
            let n_atoms = lat.atoms_per_cell[k];
            if n_atoms <= 0.0 {
                continue;
            }
            let det = classes[k].detuning;
            let mut rm = C64::new(0.0, 0.0);
            for _ in 0..m {
                match variant {
                    SchemeVariant::EulerMaruyama => {
                        rm += twa_polarization(cell, n_atoms);
                        let d = twa_atomic_drift(cell, alpha, det, g);
                        cell.axpy(h, &d);
                    }
                    SchemeVariant::DriftImplicitEuler => {
                        rm += twa_polarization(cell, n_atoms);
                        let d = twa_atomic_drift(cell, alpha, 0.0, g);
                        let div = rotations[k];
                        cell.beta1 = (cell.beta1 + d.beta1 * h) * div;
                        cell.beta2 = (cell.beta2 + d.beta2 * h) * div.conj();
                    }
                    SchemeVariant::PredictorCorrector => {
                        let r0 = twa_polarization(cell, n_atoms);
                        let d1 = twa_atomic_drift(cell, alpha, det, g);
                        let mut pred = *cell;
                        pred.axpy(h, &d1);
                        let d2 = twa_atomic_drift(&pred, alpha, det, g);
                        cell.axpy(0.5 * h, &d1);
                        cell.axpy(0.5 * h, &d2);
                        rm += (r0 + twa_polarization(cell, n_atoms)) * 0.5;
                    }
                }
            }
            r_minus[i * nc + k] = rm * inv_m;
        }
    }
    r_minus
}

fn propagate_slice_twa(sim: &Simulation, phi: &mut [C64], rng: &mut NoiseStream) {
    let lat = &sim.lattice;
    let phys = &sim.physical;
    let noise = sim.options.noise;
    let d_z = lat.d_z;
    let scaling = twa_interaction_noise_scaling(lat, phys.kappa, phys.n_bar, sim.scheme.tau_substeps);
    let loss_div = 1.0 / (1.0 + 0.5 * phys.kappa * d_z);
    let classes = &lat.freq_classes;
    let nc = classes.len();

    let init: Vec<TwaCell> = lat
        .atoms_per_cell
        .iter()
        .map(|&n| {
            let mut c = TwaCell::ground(n);
            if noise && n > 0.0 {
                c.beta1 += wigner_vacuum(rng);
                c.beta2 += wigner_vacuum(rng);
            }
            c
        })
        .collect();
    let reservoir: Vec<C64> = (0..phi.len())
        .map(|_| if noise { complex_increment(rng, scaling.reservoir_variance) } else { C64::new(0.0, 0.0) })
        .collect();
    let drift = |r: &[C64], i: usize, p: C64, kappa: f64| {
        twa_field_drift(p, &r[i * nc..(i + 1) * nc], classes, kappa, phys.g_phi, phys.rho_1d)
    };
    let first = twa_sweep(sim, phi, &init);

    match sim.scheme.variant {
        SchemeVariant::EulerMaruyama => {
            for i in 0..phi.len() {
                phi[i] += drift(&first, i, phi[i], phys.kappa) * d_z + reservoir[i];
            }
        }
        SchemeVariant::DriftImplicitEuler => {
            for i in 0..phi.len() {
                phi[i] = (phi[i] + drift(&first, i, phi[i], 0.0) * d_z + reservoir[i]) * loss_div;
            }
        }
        SchemeVariant::PredictorCorrector => {
            let d1: Vec<C64> = (0..phi.len()).map(|i| drift(&first, i, phi[i], phys.kappa)).collect();
            let pred: Vec<C64> = (0..phi.len()).map(|i| phi[i] + d1[i] * d_z).collect();
            let second = twa_sweep(sim, &pred, &init);
            for i in 0..phi.len() {
                phi[i] += (d1[i] + drift(&second, i, pred[i], phys.kappa)) * (0.5 * d_z) + reservoir[i];
            }
        }
    }
}

pub fn method_tag(method: Method) -> u64 {
    match method {
        Method::Ppr => TAG_PPR,
        Method::Twa => TAG_TWA,
    }
}

/// Initial field for one trajectory: the coherent pulse, plus Wigner vacuum
/// noise for the TWA.
pub fn initial_field(sim: &Simulation, method: Method, rng: &mut NoiseStream) -> FieldState {
    match method {
        Method::Ppr => FieldState::Ppr { phi: sim.input.clone(), phi_plus: sim.input.clone() },
        Method::Twa => {
            let mut phi = sim.input.clone();
            if sim.options.noise {
                for (p, d) in phi.iter_mut().zip(input_field_noise(&sim.lattice.tau, rng)) {
                    *p += d;
                }
            }
            FieldState::Twa { phi }
        }
    }
}

/// Run trajectory `index` to z_max, recording every output slice.
pub fn run_trajectory(sim: &Simulation, method: Method, index: u64) -> TrajectoryRecord {
    let mut rng = NoiseStream::new(sim.master_seed, method_tag(method), index);
    let mut field = initial_field(sim, method, &mut rng);
    let mut samples = Vec::with_capacity(sim.n_output());
    samples.push(sim.sample(0, &field));
    for k in 1..sim.n_output() {
        for _ in 0..sim.scheme.z_substeps {
            if !propagate_slice(sim, &mut field, &mut rng) {
                return TrajectoryRecord { index, diverged: true, samples };
            }
        }
        samples.push(sim.sample(k, &field));
    }
    TrajectoryRecord { index, diverged: false, samples }
}

/// Propagate a field with this simulation's kernels and return the field at z_max.
pub fn propagate_to_end(sim: &Simulation, mut field: FieldState, rng: &mut NoiseStream) -> Result<FieldState> {
    for _ in 0..sim.lattice.n_z {
        if !propagate_slice(sim, &mut field, rng) {
            return Err(Error::invalid("trajectory diverged"));
        }
    }
    Ok(field)
}

/// Rabi area ∫ 4 g_φ |φ| dτ of a field on the lattice grid.
pub fn pulse_area(field: &[C64], g_phi: f64, d_tau: f64) -> f64 {
    4.0 * g_phi * field.iter().map(|z| z.norm()).sum::<f64>() * d_tau
}

/// Number of absorption lengths z·4g_φ²ρ_1D/A covered by the medium.
pub fn absorption_lengths(phys: &PhysicalConfig) -> f64 {
    phys.z_max * 4.0 * phys.g_phi * phys.g_phi * phys.rho_1d / phys.pulse.inverse_width
}
