//! Physical configuration, lineshape, lattice mapping and initial states.
//!
//! All quantities are SI: retarded time in seconds, position in metres,
//! angular frequencies in s⁻¹. The field is carried as a photon flux
//! (s^-1/2) everywhere; the conversion to a per-cell mode amplitude happens
//! only through [`LatticeConfig::flux_to_mode`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::ppr::PprCell;
use crate::rng::NoiseStream;
use crate::twa::TwaCell;

pub type C64 = Complex64;

/// Default half-width of the retarded-time window, in units of 1/A.
pub const DEFAULT_WINDOW_HALF_WIDTH: f64 = 8.0;
/// Required clearance between the pulse centre and the window edges, in 1/A.
pub const MIN_WINDOW_MARGIN: f64 = 5.0;
/// Default frequency-grid truncation, in multiples of the FWHM.
pub const DEFAULT_CUTOFF_FWHM: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ppr,
    Twa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ppr => "ppr",
            Method::Twa => "twa",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Voigt lineshape parameters. Widths are angular frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineshapeSpec {
    pub center_wavelength: f64,
    /// Quoted FWHM of the full profile. Zero means "derive from the parts".
    pub fwhm_voigt: f64,
    pub gaussian_sigma: f64,
    pub lorentzian_hwhm: f64,
}

impl LineshapeSpec {
    pub fn sharp(center_wavelength: f64) -> Self {
        // a vanishing Lorentzian keeps the lineshape valid; one class ignores it anyway
        Self {
            center_wavelength,
            fwhm_voigt: 0.0,
            gaussian_sigma: 0.0,
            lorentzian_hwhm: f64::MIN_POSITIVE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("center_wavelength", self.center_wavelength),
            ("fwhm_voigt", self.fwhm_voigt),
            ("gaussian_sigma", self.gaussian_sigma),
            ("lorentzian_hwhm", self.lorentzian_hwhm),
        ] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        if self.gaussian_sigma <= 0.0 && self.lorentzian_hwhm <= 0.0 {
            return Err(Error::invalid(
                "at least one of gaussian_sigma, lorentzian_hwhm must be > 0",
            ));
        }
        Ok(())
    }

    /// FWHM used for the frequency grid: the quoted value if set, otherwise
    /// the numerical half-maximum width of the profile.
    pub fn fwhm(&self) -> Result<f64> {
        if self.fwhm_voigt > 0.0 {
            return Ok(self.fwhm_voigt);
        }
        numerical_fwhm(self)
    }
}

/// Sech pulse parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// A, s⁻¹.
    pub inverse_width: f64,
    /// τ₀, s.
    pub offset: f64,
    /// (τ_min, τ_max), s.
    pub tau_window: (f64, f64),
    /// Rabi pulse area ∫Ω dτ in radians; 2π is the soliton.
    pub area: f64,
    /// Explicit peak photon flux (s^-1/2). Overrides `area`; needed when g_φ = 0.
    #[serde(default)]
    pub peak_flux: Option<f64>,
}

impl PulseSpec {
    /// Pulse centred at `offset` with the default ±8/A window and area 2π.
    pub fn new(inverse_width: f64, offset: f64) -> Self {
        let half = DEFAULT_WINDOW_HALF_WIDTH / inverse_width;
        Self {
            inverse_width,
            offset,
            tau_window: (offset - half, offset + half),
            area: 2.0 * PI,
            peak_flux: None,
        }
    }

    pub fn with_area(mut self, area: f64) -> Self {
        self.area = area;
        self
    }

    pub fn with_peak_flux(mut self, peak: f64) -> Self {
        self.peak_flux = Some(peak);
        self
    }

    /// Peak flux c·A/g_φ with c = area/(4π), unless overridden.
    pub fn peak(&self, g_phi: f64) -> Result<f64> {
        if let Some(p) = self.peak_flux {
            ensure_finite("peak_flux", p)?;
            return Ok(p);
        }
        ensure_finite("g_phi", g_phi)?;
        if g_phi <= 0.0 {
            return Err(Error::invalid(
                "g_phi must be > 0 to define a pulse amplitude from its area (or set peak_flux)",
            ));
        }
        Ok(self.area / (4.0 * PI) * self.inverse_width / g_phi)
    }

    pub fn with_window(mut self, min: f64, max: f64) -> Self {
        self.tau_window = (min, max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("inverse_width", self.inverse_width)?;
        ensure_finite("offset", self.offset)?;
        ensure_finite("tau_window.min", self.tau_window.0)?;
        ensure_finite("tau_window.max", self.tau_window.1)?;
        ensure_finite("area", self.area)?;
        if let Some(p) = self.peak_flux {
            ensure_finite("peak_flux", p)?;
        }
        if self.inverse_width <= 0.0 {
            return Err(Error::invalid("pulse inverse_width must be > 0"));
        }
        let margin = MIN_WINDOW_MARGIN / self.inverse_width;
        let (lo, hi) = self.tau_window;
        // relative slack so that the default window passes after rounding
        let slack = 1e-9 * margin;
        if self.offset - lo < margin - slack || hi - self.offset < margin - slack {
            return Err(Error::invalid(format!(
                "pulse window [{lo:e}, {hi:e}] must contain offset {:e} with margin >= 5/A = {margin:e}",
                self.offset
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// One-dimensional atom–field coupling g_φ, s^-1/2.
    pub g_phi: f64,
    /// Attenuation coefficient κ, m⁻¹.
    pub kappa: f64,
    /// Reservoir thermal occupation n̄.
    pub n_bar: f64,
    /// Linear atomic density ρ_1D, m⁻¹.
    pub rho_1d: f64,
    pub lineshape: LineshapeSpec,
    pub pulse: PulseSpec,
    /// Propagation length, m.
    pub z_max: f64,
    /// Group velocity, m/s.
    pub v_g: f64,
}

impl PhysicalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g_phi", self.g_phi),
            ("kappa", self.kappa),
            ("n_bar", self.n_bar),
            ("rho_1d", self.rho_1d),
            ("z_max", self.z_max),
            ("v_g", self.v_g),
        ] {
            ensure_finite(name, v)?;
        }
        if self.g_phi < 0.0 {
            return Err(Error::invalid("g_phi must be >= 0"));
        }
        if self.kappa < 0.0 {
            return Err(Error::invalid("kappa must be >= 0"));
        }
        if self.n_bar < 0.0 {
            return Err(Error::invalid("n_bar must be >= 0"));
        }
        if self.rho_1d < 0.0 {
            return Err(Error::invalid("rho_1d must be >= 0"));
        }
        if self.z_max <= 0.0 {
            return Err(Error::invalid("z_max must be > 0"));
        }
        if self.v_g <= 0.0 {
            return Err(Error::invalid("v_g must be > 0"));
        }
        self.lineshape.validate()?;
        self.pulse.validate()
    }

    /// Reservoir loss rate γ = κ v_g.
    pub fn gamma(&self) -> f64 {
        self.kappa * self.v_g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqClass {
    pub detuning: f64,
    pub weight: f64,
}

/// Uniform retarded-time grid τ_i = start + i·step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl TauGrid {
    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.point(i))
    }

    /// Same window sampled `factor` times more finely.
    pub fn refined(&self, factor: usize) -> TauGrid {
        TauGrid {
            start: self.start,
            step: self.step / factor as f64,
            len: self.len * factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub tau: TauGrid,
    pub n_z: usize,
    pub d_z: f64,
    pub freq_classes: Vec<FreqClass>,
    /// N_n per (z-cell, ν), aligned with `freq_classes`.
    pub atoms_per_cell: Vec<f64>,
    /// Per-cell coupling g = 2 g_φ √(v_g/d_z), s⁻¹.
    pub g_cell: f64,
    /// Reservoir rate γ = κ v_g, s⁻¹.
    pub gamma_cell: f64,
    /// α = φ·flux_to_mode converts a photon flux into a cell amplitude.
    pub flux_to_mode: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl LatticeConfig {
    pub fn d_tau(&self) -> f64 {
        self.tau.step
    }

    pub fn n_tau(&self) -> usize {
        self.tau.len
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms_per_cell.iter().any(|&n| n > 0.0)
    }
}

/// Voigt profile at angular detuning `omega` from line centre, normalized to
/// unit area over ω.
pub fn voigt_profile(omega: f64, spec: &LineshapeSpec) -> Result<f64> {
    ensure_finite("omega", omega)?;
    spec.validate()?;
    Ok(voigt_unchecked(omega.abs(), spec.gaussian_sigma, spec.lorentzian_hwhm))
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

fn lorentzian(x: f64, hwhm: f64) -> f64 {
    hwhm / (PI * (x * x + hwhm * hwhm))
}

fn voigt_unchecked(x: f64, sigma: f64, hwhm: f64) -> f64 {
    if hwhm <= 0.0 {
        return gaussian(x, sigma);
    }
    if sigma <= 0.0 {
        return lorentzian(x, hwhm);
    }
    // Convolution in the Gaussian variable u = t/σ:
    //   V(x) = ∫ φ(u) L(x − σu) du,   φ standard normal density.
    let centre = x / sigma;
    let width = hwhm / sigma;
    let integrand = |u: f64| {
        (-0.5 * u * u).exp() / (2.0 * PI).sqrt() * lorentzian(x - sigma * u, hwhm)
    };
    let (lo, hi) = (-12.0_f64, 12.0_f64);
    let mut breaks = vec![lo, hi];
    for k in [-20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0] {
        let b = centre + k * width;
        if b > lo && b < hi {
            breaks.push(b);
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let scale = gaussian(x, sigma).max(lorentzian(x, hwhm)).max(1e-300);
    let tol = 1e-11 * scale;
    breaks
        .windows(2)
        .map(|w| adaptive_simpson(&integrand, w[0], w[1], tol / breaks.len() as f64))
        .sum()
}

pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn numerical_fwhm(spec: &LineshapeSpec) -> Result<f64> {
    spec.validate()?;
    let (s, l) = (spec.gaussian_sigma, spec.lorentzian_hwhm);
    let half = 0.5 * voigt_unchecked(0.0, s, l);
    let mut hi = s.max(l).max(f64::MIN_POSITIVE);
    while voigt_unchecked(hi, s, l) > half {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if voigt_unchecked(mid, s, l) > half {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(lo + hi)
}

/// Frequency classes on a uniform grid over ±cutoff·FWHM with weights
/// proportional to the Voigt profile at each node.
pub fn discretize_lineshape(
    spec: &LineshapeSpec,
    n_classes: usize,
    cutoff_fwhm: f64,
) -> Result<Vec<FreqClass>> {
    if n_classes == 0 {
        return Err(Error::invalid("n_classes must be >= 1"));
    }
    ensure_finite("cutoff_fwhm", cutoff_fwhm)?;
    if cutoff_fwhm <= 0.0 {
        return Err(Error::invalid("cutoff_fwhm must be > 0"));
    }
    spec.validate()?;
    if n_classes == 1 {
        return Ok(vec![FreqClass {
            detuning: 0.0,
            weight: 1.0,
        }]);
    }
    let span = 2.0 * cutoff_fwhm * spec.fwhm()?;
    let h = span / n_classes as f64;
    let half = n_classes as f64 / 2.0;
    let mut classes: Vec<FreqClass> = (0..n_classes)
        .map(|k| {
            let detuning = (k as f64 + 0.5 - half) * h;
            FreqClass {
                detuning,
                weight: voigt_unchecked(detuning.abs(), spec.gaussian_sigma, spec.lorentzian_hwhm),
            }
        })
        .collect();
    let total: f64 = classes.iter().map(|c| c.weight).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("lineshape has no weight on the frequency grid"));
    }
    for c in &mut classes {
        c.weight /= total;
    }
    Ok(classes)
}

/// Map a physical configuration onto the simulation lattice.
pub fn build_lattice(
    phys: &PhysicalConfig,
    n_tau: usize,
    n_z: usize,
    n_classes: usize,
) -> Result<LatticeConfig> {
    build_lattice_with_cutoff(phys, n_tau, n_z, n_classes, DEFAULT_CUTOFF_FWHM)
}

pub fn build_lattice_with_cutoff(
    phys: &PhysicalConfig,
    n_tau: usize,
    n_z: usize,
    n_classes: usize,
    cutoff_fwhm: f64,
) -> Result<LatticeConfig> {
    phys.validate()?;
    if n_tau == 0 || n_z == 0 || n_classes == 0 {
        return Err(Error::invalid("n_tau, n_z and n_classes must be >= 1"));
    }
    let (t_lo, t_hi) = phys.pulse.tau_window;
    let tau = TauGrid {
        start: t_lo,
        step: (t_hi - t_lo) / n_tau as f64,
        len: n_tau,
    };
    let d_z = phys.z_max / n_z as f64;
    let freq_classes = discretize_lineshape(&phys.lineshape, n_classes, cutoff_fwhm)?;
    let atoms_per_cell: Vec<f64> = freq_classes
        .iter()
        .map(|c| phys.rho_1d * d_z * c.weight)
        .collect();
    let mut warnings = Vec::new();
    if phys.rho_1d > 0.0 {
        let sparse = atoms_per_cell.iter().filter(|&&n| n < 1.0).count();
        if sparse > 0 {
            let msg = format!(
                "{sparse} of {} frequency classes hold fewer than one atom per cell (min N_n = {:.3e})",
                atoms_per_cell.len(),
                atoms_per_cell.iter().cloned().fold(f64::INFINITY, f64::min)
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let g_cell = 2.0 * phys.g_phi * (phys.v_g / d_z).sqrt();
    let flux_to_mode = (d_z / phys.v_g).sqrt();
    let lattice = LatticeConfig {
        tau,
        n_z,
        d_z,
        freq_classes,
        atoms_per_cell,
        g_cell,
        gamma_cell: phys.gamma(),
        flux_to_mode,
        warnings,
    };
    for (name, v) in [
        ("d_tau", lattice.tau.step),
        ("d_z", d_z),
        ("g_cell", g_cell),
        ("flux_to_mode", flux_to_mode),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!("derived {name} is not finite: {v}")));
        }
    }
    Ok(lattice)
}

/// Sech input pulse φ(τ) = c·(A/g_φ)·sech(A(τ−τ₀)), with c = area/(4π) so that
/// the Rabi area ∫4g_φφ dτ equals `pulse.area`.
pub fn sech_pulse(pulse: &PulseSpec, g_phi: f64, grid: &TauGrid) -> Result<Vec<C64>> {
    pulse.validate()?;
    let a = pulse.inverse_width;
    let peak = pulse.peak(g_phi)?;
    Ok(grid
        .points()
        .map(|t| C64::new(peak / (a * (t - pulse.offset)).cosh(), 0.0))
        .collect())
}

/// Photon number 2·peak²/A carried by the sech pulse (2c²A/g_φ² for c = area/4π).
pub fn sech_photon_number(pulse: &PulseSpec, g_phi: f64) -> f64 {
    match pulse.peak(g_phi) {
        Ok(p) => 2.0 * p * p / pulse.inverse_width,
        Err(_) => f64::NAN,
    }
}

/// Atomic amplitudes for one fresh z-slice.
#[derive(Clone, Debug, PartialEq)]
pub enum AtomSet {
    Ppr(Vec<PprCell>),
    Twa(Vec<TwaCell>),
}

/// Ground-state atoms for one z-slice. The TWA adds Wigner vacuum noise with
/// ⟨δβ δβ*⟩ = 1/2 to both modes of every populated cell; the PPR is exact and
/// deterministic. Unpopulated classes draw nothing.
pub fn initial_atoms(lattice: &LatticeConfig, method: Method, rng: &mut NoiseStream) -> AtomSet {
    match method {
        Method::Ppr => AtomSet::Ppr(
            lattice
                .atoms_per_cell
                .iter()
                .map(|&n| PprCell::ground(n))
                .collect(),
        ),
        Method::Twa => AtomSet::Twa(
            lattice
                .atoms_per_cell
                .iter()
                .map(|&n| {
                    let mut cell = TwaCell::ground(n);
                    if n > 0.0 {
                        cell.beta1 += wigner_vacuum(rng);
                        cell.beta2 += wigner_vacuum(rng);
                    }
                    cell
                })
                .collect(),
        ),
    }
}

/// One complex Gaussian with ⟨|δ|²⟩ = 1/2.
pub(crate) fn wigner_vacuum(rng: &mut NoiseStream) -> C64 {
    let re = rng.normal(0.25);
    let im = rng.normal(0.25);
    C64::new(re, im)
}

/// Wigner vacuum noise on the input field: ⟨δφ δφ*⟩ = 1/(2 d_τ) per sample.
pub fn input_field_noise(grid: &TauGrid, rng: &mut NoiseStream) -> Vec<C64> {
    let var = 0.25 / grid.step;
    (0..grid.len)
        .map(|_| {
            let re = rng.normal(var);
            let im = rng.normal(var);
            C64::new(re, im)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::TAG_AUX;

    fn spec(sigma: f64, hwhm: f64) -> LineshapeSpec {
        LineshapeSpec {
            center_wavelength: 7.94e-7,
            fwhm_voigt: 0.0,
            gaussian_sigma: sigma,
            lorentzian_hwhm: hwhm,
        }
    }

    fn phys() -> PhysicalConfig {
        PhysicalConfig {
            g_phi: 1.0,
            kappa: 0.0,
            n_bar: 0.0,
            rho_1d: 1e12,
            lineshape: spec(0.0, 1.0),
            pulse: PulseSpec::new(1e12, 0.0),
            z_max: 1.0,
            v_g: 3e8,
        }
    }

    #[test]
    fn pure_limits() {
        let g = voigt_profile(0.0, &spec(2.0, 0.0)).unwrap();
        assert!((g - 1.0 / (2.0 * (2.0 * PI).sqrt())).abs() < 1e-15);
        let l = voigt_profile(0.0, &spec(0.0, 3.0)).unwrap();
        assert!((l - 1.0 / (3.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn voigt_is_normalized_and_symmetric() {
        let s = spec(1.0, 0.5);
        let a = voigt_profile(0.7, &s).unwrap();
        let b = voigt_profile(-0.7, &s).unwrap();
        assert_eq!(a, b);
        // Lorentzian tails decay like 1/x², so integrate in x = tan(t)
        let total = adaptive_simpson(
            &|t: f64| {
                let x = t.tan();
                voigt_unchecked(x.abs(), 1.0, 0.5) * (1.0 + x * x)
            },
            -PI / 2.0 + 1e-9,
            PI / 2.0 - 1e-9,
            1e-12,
        );
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn non_finite_omega_is_rejected() {
        assert!(voigt_profile(f64::NAN, &spec(1.0, 1.0)).is_err());
    }

    #[test]
    fn invalid_lineshape_is_rejected() {
        assert!(voigt_profile(0.0, &spec(0.0, 0.0)).is_err());
        assert!(voigt_profile(0.0, &spec(-1.0, 1.0)).is_err());
    }

    #[test]
    fn single_class_is_sharp() {
        let c = discretize_lineshape(&spec(1.0, 1.0), 1, 4.0).unwrap();
        assert_eq!(c, vec![FreqClass { detuning: 0.0, weight: 1.0 }]);
        assert!(discretize_lineshape(&spec(1.0, 1.0), 0, 4.0).is_err());
    }

    #[test]
    fn classes_are_symmetric_and_normalized() {
        for n in [2usize, 7, 16, 33] {
            let c = discretize_lineshape(&spec(1.0, 0.3), n, 4.0).unwrap();
            let total: f64 = c.iter().map(|c| c.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for k in 0..n {
                let m = n - 1 - k;
                assert_eq!(c[k].detuning, -c[m].detuning);
                assert!((c[k].weight - c[m].weight).abs() < 1e-12);
                assert!(c[k].weight >= 0.0);
            }
        }
    }

    #[test]
    fn lattice_products() {
        let mut p = phys();
        p.z_max = 1e-6 * 1000.0;
        let l = build_lattice(&p, 64, 1000, 1).unwrap();
        assert!((l.d_z - 1e-6).abs() < 1e-21);
        assert!((l.atoms_per_cell[0] - 1e6).abs() < 1e-6);
        let p = phys();
        let l = build_lattice(&p, 64, 1000, 1).unwrap();
        assert!((l.d_z - 1e-3).abs() < 1e-18);
        // g·α = 2 g_φ φ
        assert!((l.g_cell * l.flux_to_mode - 2.0 * p.g_phi).abs() < 1e-12);
    }

    #[test]
    fn sparse_cells_raise_a_warning() {
        let mut p = phys();
        p.rho_1d = 10.0;
        let l = build_lattice(&p, 16, 100, 1).unwrap();
        assert_eq!(l.warnings.len(), 1);
    }

    #[test]
    fn zero_counts_are_rejected() {
        assert!(build_lattice(&phys(), 0, 10, 1).is_err());
        assert!(build_lattice(&phys(), 10, 0, 1).is_err());
    }

    #[test]
    fn window_margin_is_enforced() {
        let p = PulseSpec::new(1.0, 0.0).with_window(-4.0, 8.0);
        assert!(p.validate().is_err());
        assert!(PulseSpec::new(1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn sech_peak_and_quadratures() {
        let pulse = PulseSpec::new(2.0, 0.0).with_area(4.0 * PI);
        let g_phi = 0.5;
        let grid = TauGrid { start: -8.0 / 2.0, step: 1.0 / 256.0, len: 2048 };
        let phi = sech_pulse(&pulse, g_phi, &grid).unwrap();
        // τ₀ = 0 is sample 1024
        assert!((phi[1024].re - 2.0 / 0.5).abs() < 1e-12);
        // ∫_{−L}^{L} sech = 4 atan(tanh(L/2)); the window clips the tails at AL = 8
        let clipped = 4.0 * (4.0f64.tanh()).atan() / PI;
        let area: f64 = phi.iter().map(|p| g_phi * p.re * grid.step).sum();
        assert!((area - PI * clipped).abs() < 1e-5, "area {area}");
        let photons: f64 = phi.iter().map(|p| p.norm_sqr() * grid.step).sum();
        assert!((photons - 2.0 * 2.0 / 0.25).abs() / 16.0 < 1e-5);
        assert!((photons - sech_photon_number(&pulse, g_phi)).abs() / 16.0 < 1e-5);
    }

    #[test]
    fn default_area_is_rabi_two_pi() {
        let pulse = PulseSpec::new(1.0, 0.0);
        let grid = TauGrid { start: -8.0, step: 1.0 / 128.0, len: 2048 };
        let phi = sech_pulse(&pulse, 3.0, &grid).unwrap();
        let rabi_area: f64 = phi.iter().map(|p| 4.0 * 3.0 * p.re * grid.step).sum();
        let clipped = 4.0 * (4.0f64.tanh()).atan() / PI;
        assert!((rabi_area - 2.0 * PI * clipped).abs() < 1e-5, "{rabi_area}");
    }

    #[test]
    fn ppr_atoms_are_deterministic() {
        let l = build_lattice(&phys(), 8, 10, 1).unwrap();
        let mut rng = NoiseStream::new(1, TAG_AUX, 0);
        match initial_atoms(&l, Method::Ppr, &mut rng) {
            AtomSet::Ppr(cells) => {
                let n = l.atoms_per_cell[0];
                assert_eq!(cells[0].beta1, C64::new(n.sqrt(), 0.0));
                assert_eq!(cells[0].beta1_plus, C64::new(n.sqrt(), 0.0));
                assert_eq!(cells[0].beta2, C64::new(0.0, 0.0));
                assert_eq!(cells[0].beta2_plus, C64::new(0.0, 0.0));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn twa_atoms_sample_the_vacuum() {
        let mut p = phys();
        p.rho_1d = 400.0;
        let l = build_lattice(&p, 8, 1, 1).unwrap();
        let n = l.atoms_per_cell[0];
        let draws = 10_000;
        let mut rng = NoiseStream::new(5, TAG_AUX, 0);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut mean_b1 = C64::new(0.0, 0.0);
        for _ in 0..draws {
            if let AtomSet::Twa(c) = initial_atoms(&l, Method::Twa, &mut rng) {
                mean_b1 += c[0].beta1;
                let d = c[0].beta1.re - n.sqrt();
                s1 += d;
                s2 += d * d;
            }
        }
        let nd = draws as f64;
        mean_b1 /= nd;
        let se_mean = (0.5 / nd).sqrt();
        assert!((mean_b1 - C64::new(n.sqrt(), 0.0)).norm() < 3.0 * se_mean);
        let m = s1 / nd;
        let var = s2 / nd - m * m;
        // SE of a Gaussian variance: σ²√(2/n)
        assert!((var - 0.25).abs() < 3.0 * 0.25 * (2.0 / nd).sqrt(), "var {var}");
    }

    #[test]
    fn twa_initial_noise_is_uncorrelated_across_cells() {
        let mut p = phys();
        p.rho_1d = 400.0;
        p.lineshape = spec(1.0, 0.2);
        let l = build_lattice(&p, 4, 1, 2).unwrap();
        let draws = 20_000;
        let mut rng = NoiseStream::new(6, TAG_AUX, 0);
        let grid = l.tau;
        let (mut c12, mut c1phi, mut c_cells) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let dphi = input_field_noise(&grid, &mut rng);
            if let AtomSet::Twa(c) = initial_atoms(&l, Method::Twa, &mut rng) {
                let d1 = c[0].beta1 - C64::new(l.atoms_per_cell[0].sqrt(), 0.0);
                let d2 = c[0].beta2;
                let e1 = c[1].beta1 - C64::new(l.atoms_per_cell[1].sqrt(), 0.0);
                c12 += (d1 * d2.conj()).re;
                c1phi += (d1 * dphi[0].conj()).re * grid.step.sqrt();
                c_cells += (d1 * e1.conj()).re;
            }
        }
        let nd = draws as f64;
        // each product has standard deviation 1/(2√2) for ⟨|δ|²⟩ = 1/2 factors
        let se = 0.5 / (2.0f64).sqrt() / nd.sqrt();
        for (name, c) in [("b1b2", c12), ("b1phi", c1phi), ("cells", c_cells)] {
            assert!((c / nd).abs() < 3.0 * se, "{name} cross covariance {}", c / nd);
        }
    }
}
