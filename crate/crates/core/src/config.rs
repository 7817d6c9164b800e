//! Run configuration: a TOML document with explicit units on every physical
//! quantity, resolved to SI at parse time.
//!
//! Quantities are written either as a string `"3.66 ps"` or as an inline
//! table `{ value = 3.66, unit = "ps" }`. Parsing collects every problem it
//! finds instead of stopping at the first one, and unknown keys are errors.
//! [`emit`] writes the resolved configuration back in canonical SI units, so
//! `parse(emit(c)) == c`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{
    build_lattice_with_cutoff, LineshapeSpec, Method, PhysicalConfig, PulseSpec, C64,
    DEFAULT_CUTOFF_FWHM, DEFAULT_WINDOW_HALF_WIDTH,
};
use crate::oracle::OracleConfig;
use crate::propagator::{LoMode, SchemeVariant, SimOptions, Simulation, StepScheme};
use crate::rng::derive_seed;
use crate::single_cell::{ComparisonTolerances, SingleCellConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Propagate,
    Oracle,
    Compare,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Propagate => "propagate",
            Mode::Oracle => "oracle",
            Mode::Compare => "compare",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Ppr,
    Twa,
    Both,
}

impl MethodSelection {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodSelection::Ppr => "ppr",
            MethodSelection::Twa => "twa",
            MethodSelection::Both => "both",
        }
    }

    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::Ppr => vec![Method::Ppr],
            MethodSelection::Twa => vec![Method::Twa],
            MethodSelection::Both => vec![Method::Ppr, Method::Twa],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ppr" => Some(MethodSelection::Ppr),
            "twa" => Some(MethodSelection::Twa),
            "both" => Some(MethodSelection::Both),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n_tau: usize,
    pub n_z: usize,
    /// Number of recorded output intervals; must divide n_z.
    pub n_out: usize,
    /// 0 picks the Rabi-angle rule.
    pub tau_substeps: usize,
    pub scheme: SchemeVariant,
    pub freq_classes: usize,
    pub cutoff_fwhm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionsSpec {
    pub noise: bool,
    pub gauge: f64,
    pub divergence_bound: f64,
    pub local_oscillator: LoMode,
    pub n_theta: usize,
}

impl Default for OptionsSpec {
    fn default() -> Self {
        let d = SimOptions::default();
        OptionsSpec {
            noise: d.noise,
            gauge: d.gauge,
            divergence_bound: d.divergence_bound,
            local_oscillator: d.local_oscillator,
            n_theta: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub config: OracleConfig,
    /// |z| threshold of the comparison harness.
    pub z_max: f64,
    /// Single-cell steps between outputs; 0 = automatic.
    pub steps_per_output: usize,
}

impl OracleSpec {
    pub fn single_cell(&self, options: &OptionsSpec) -> SingleCellConfig {
        let mut c = SingleCellConfig::from_oracle(&self.config);
        c.steps_per_output = self.steps_per_output;
        c.gauge = options.gauge;
        c.divergence_bound = options.divergence_bound;
        c
    }

    pub fn tolerances(&self) -> ComparisonTolerances {
        ComparisonTolerances { z_max: self.z_max, ..ComparisonTolerances::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Density,
    Kappa,
    NBar,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Density => "density",
            SweepAxis::Kappa => "kappa",
            SweepAxis::NBar => "n_bar",
        }
    }

    fn si_unit(self) -> &'static str {
        match self {
            SweepAxis::Density => "m^-1",
            SweepAxis::Kappa => "m^-1",
            SweepAxis::NBar => "",
        }
    }
}

/// Sweep values already mapped onto the swept `PhysicalConfig` field
/// (ρ_1D for density, after mode-area conversion and desk scaling).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// How the physical section was obtained. Echoed in outputs, never re-applied.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub preset: Option<String>,
    pub mode_area: Option<f64>,
    pub density_3d: Option<f64>,
    pub g_phi_3d: Option<f64>,
    pub desk_photon_number: Option<f64>,
    /// ρ_1D multiplier applied by desk scaling (g_φ²/g_φ'²).
    pub desk_density_factor: Option<f64>,
}

impl Provenance {
    fn is_empty(&self) -> bool {
        *self == Provenance::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub method: MethodSelection,
    pub trajectories: usize,
    /// TWA trajectory count when it differs from `trajectories`.
    pub twa_trajectories: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub output: String,
    pub physical: PhysicalConfig,
    pub lattice: LatticeSpec,
    pub options: OptionsSpec,
    pub oracle: Option<OracleSpec>,
    pub sweep: Option<SweepSpec>,
    pub provenance: Provenance,
}

impl RunConfig {
    pub fn trajectories_for(&self, method: Method) -> usize {
        match method {
            Method::Ppr => self.trajectories,
            Method::Twa => self.twa_trajectories.unwrap_or(self.trajectories),
        }
    }

    pub fn step_scheme(&self) -> StepScheme {
        StepScheme {
            variant: self.lattice.scheme,
            z_substeps: self.lattice.n_z / self.lattice.n_out.max(1),
            tau_substeps: self.lattice.tau_substeps,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            noise: self.options.noise,
            gauge: self.options.gauge,
            divergence_bound: self.options.divergence_bound,
            local_oscillator: self.options.local_oscillator,
            ..SimOptions::default()
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let lattice = build_lattice_with_cutoff(
            &self.physical,
            self.lattice.n_tau,
            self.lattice.n_z,
            self.lattice.freq_classes,
            self.lattice.cutoff_fwhm,
        )?;
        Simulation::new(self.physical.clone(), lattice, self.step_scheme(), self.sim_options(), self.seed)
    }

    /// One child configuration per sweep value, each with its own derived seed.
    pub fn sweep_children(&self) -> Result<Vec<(f64, RunConfig)>> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::invalid("configuration has no [sweep] section"))?;
        if sweep.values.is_empty() {
            return Err(Error::invalid("sweep value list is empty"));
        }
        Ok(sweep
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut c = self.clone();
                c.sweep = None;
                c.seed = derive_seed(self.seed, i as u64);
                match sweep.axis {
                    SweepAxis::Density => c.physical.rho_1d = v,
                    SweepAxis::Kappa => c.physical.kappa = v,
                    SweepAxis::NBar => c.physical.n_bar = v,
                }
                (v, c)
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// units

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    Length,
    Time,
    Rate,
    InvLength,
    Density3,
    Area,
    Velocity,
    Coupling1,
    Coupling3,
    Flux,
    Angle,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Length => "length",
            Dim::Time => "time",
            Dim::Rate => "angular rate",
            Dim::InvLength => "inverse length",
            Dim::Density3 => "volume density",
            Dim::Area => "area",
            Dim::Velocity => "velocity",
            Dim::Coupling1 => "1-D coupling",
            Dim::Coupling3 => "3-D coupling",
            Dim::Flux => "photon flux amplitude",
            Dim::Angle => "angle",
        }
    }

    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Length => &[("m", 1.0), ("cm", 1e-2), ("mm", 1e-3), ("um", 1e-6), ("µm", 1e-6), ("nm", 1e-9)],
            Dim::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("ns", 1e-9), ("ps", 1e-12), ("fs", 1e-15)],
            Dim::Rate => &[
                ("s^-1", 1.0),
                ("1/s", 1.0),
                ("rad/s", 1.0),
                ("ms^-1", 1e3),
                ("us^-1", 1e6),
                ("ns^-1", 1e9),
                ("ps^-1", 1e12),
            ],
            Dim::InvLength => &[("m^-1", 1.0), ("1/m", 1.0), ("cm^-1", 1e2), ("km^-1", 1e-3)],
            Dim::Density3 => &[("m^-3", 1.0), ("cm^-3", 1e6)],
            Dim::Area => &[("m^2", 1.0), ("cm^2", 1e-4), ("mm^2", 1e-6), ("um^2", 1e-12), ("µm^2", 1e-12)],
            Dim::Velocity => &[("m/s", 1.0), ("km/s", 1e3), ("c", 299_792_458.0)],
            Dim::Coupling1 => &[("s^-1/2", 1.0), ("1/sqrt(s)", 1.0)],
            Dim::Coupling3 => &[("m^2/s^1/2", 1.0), ("m^2*s^-1/2", 1.0), ("m^2/sqrt(s)", 1.0)],
            Dim::Flux => &[("s^-1/2", 1.0), ("1/sqrt(s)", 1.0)],
            Dim::Angle => &[("rad", 1.0), ("pi", PI), ("deg", PI / 180.0)],
        }
    }

    fn canonical(self) -> &'static str {
        self.units()[0].0
    }

    fn factor(self, unit: &str) -> Option<f64> {
        let u: String = unit.chars().filter(|c| !c.is_whitespace()).collect();
        self.units().iter().find(|(n, _)| *n == u).map(|&(_, f)| f)
    }

    fn expected(self) -> String {
        let names: Vec<&str> = self.units().iter().map(|(n, _)| *n).collect();
        format!("a {} quantity such as \"1.0 {}\" (units: {})", self.name(), self.canonical(), names.join(", "))
    }
}

fn quantity_string(v: f64, dim: Dim) -> String {
    format!("{v:e} {}", dim.canonical())
}

// ---------------------------------------------------------------------------
// parsing helpers

#[derive(Default)]
struct Collector {
    errors: std::cell::RefCell<Vec<ConfigError>>,
}

impl Collector {
    fn err(&self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.borrow_mut().push(ConfigError { path: path.into(), message: message.into() });
    }

    fn is_empty(&self) -> bool {
        self.errors.borrow().is_empty()
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Report keys of `t` not in `allowed`.
fn check_keys(c: &Collector, path: &str, t: &Table, allowed: &[&str]) {
    for k in t.keys() {
        if !allowed.contains(&k.as_str()) {
            c.err(join(path, k), format!("unknown key (expected one of: {})", allowed.join(", ")));
        }
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn number(c: &Collector, path: &str, t: &Table, key: &str) -> Option<f64> {
    let v = t.get(key)?;
    match as_number(v) {
        Some(x) if x.is_finite() => Some(x),
        Some(_) => {
            c.err(join(path, key), "must be finite");
            None
        }
        None => {
            c.err(join(path, key), "expected a number");
            None
        }
    }
}

fn integer(c: &Collector, path: &str, t: &Table, key: &str) -> Option<u64> {
    let v = t.get(key)?;
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as u64),
        _ => {
            c.err(join(path, key), "expected a non-negative integer");
            None
        }
    }
}

// TOML integers stop at i64::MAX, so larger seeds travel as decimal strings
fn seed_value(c: &Collector, t: &Table) -> Option<u64> {
    match t.get("seed")? {
        Value::String(s) => match s.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                c.err("seed", "expected a non-negative integer or a decimal string");
                None
            }
        },
        _ => integer(c, "", t, "seed"),
    }
}

fn string<'a>(c: &Collector, path: &str, t: &'a Table, key: &str) -> Option<&'a str> {
    let v = t.get(key)?;
    match v.as_str() {
        Some(s) => Some(s),
        None => {
            c.err(join(path, key), "expected a string");
            None
        }
    }
}

fn boolean(c: &Collector, path: &str, t: &Table, key: &str) -> Option<bool> {
    let v = t.get(key)?;
    match v.as_bool() {
        Some(b) => Some(b),
        None => {
            c.err(join(path, key), "expected true or false");
            None
        }
    }
}

fn sub_table<'a>(c: &Collector, path: &str, t: &'a Table, key: &str) -> Option<&'a Table> {
    let v = t.get(key)?;
    match v.as_table() {
        Some(s) => Some(s),
        None => {
            c.err(join(path, key), "expected a table");
            None
        }
    }
}

fn parse_quantity_value(v: &Value, dim: Dim) -> std::result::Result<f64, String> {
    let (value, unit) = match v {
        Value::String(s) => {
            let s = s.trim();
            let split = s.find(|ch: char| ch.is_whitespace()).ok_or_else(|| {
                format!("missing unit in \"{s}\"; expected {}", dim.expected())
            })?;
            let (num, unit) = s.split_at(split);
            let value: f64 = num
                .trim()
                .parse()
                .map_err(|_| format!("cannot read a number from \"{num}\"; expected {}", dim.expected()))?;
            (value, unit.trim().to_string())
        }
        Value::Table(t) => {
            let value = t
                .get("value")
                .and_then(as_number)
                .ok_or_else(|| format!("quantity table needs a numeric `value`; expected {}", dim.expected()))?;
            let unit = t
                .get("unit")
                .and_then(|u| u.as_str())
                .ok_or_else(|| format!("quantity table needs a `unit` string; expected {}", dim.expected()))?;
            if let Some(k) = t.keys().find(|k| *k != "value" && *k != "unit") {
                return Err(format!("unknown key `{k}` in quantity table"));
            }
            (value, unit.to_string())
        }
        Value::Float(_) | Value::Integer(_) => {
            return Err(format!("bare number without unit; expected {}", dim.expected()));
        }
        _ => return Err(format!("expected {}", dim.expected())),
    };
    let f = dim
        .factor(&unit)
        .ok_or_else(|| format!("unit \"{unit}\" is not a {} unit; expected {}", dim.name(), dim.expected()))?;
    let x = value * f;
    if !x.is_finite() {
        return Err("must be finite".into());
    }
    Ok(x)
}

fn quantity(c: &Collector, path: &str, t: &Table, key: &str, dim: Dim) -> Option<f64> {
    let v = t.get(key)?;
    match parse_quantity_value(v, dim) {
        Ok(x) => Some(x),
        Err(m) => {
            c.err(join(path, key), m);
            None
        }
    }
}

fn required<T>(c: &Collector, path: &str, key: &str, v: Option<T>, t: &Table, expected: &str) -> Option<T> {
    if v.is_none() && !t.contains_key(key) {
        c.err(join(path, key), format!("missing required field ({expected})"));
    }
    v
}

fn non_negative(c: &Collector, path: &str, key: &str, v: Option<f64>) -> Option<f64> {
    match v {
        Some(x) if x < 0.0 => {
            c.err(join(path, key), format!("{key} must be ≥ 0"));
            None
        }
        other => other,
    }
}

fn positive(c: &Collector, path: &str, key: &str, v: Option<f64>) -> Option<f64> {
    match v {
        Some(x) if x <= 0.0 => {
            c.err(join(path, key), format!("{key} must be > 0"));
            None
        }
        other => other,
    }
}

// ---------------------------------------------------------------------------
// presets

struct Preset {
    density_3d: f64,
    kappa: f64,
    n_bar: f64,
    center_wavelength: f64,
    fwhm: f64,
    g_phi_3d: f64,
    duration: f64,
}

pub const PRESET_NAMES: [&str; 6] = [
    "fig1_lowdensity",
    "fig1_middensity",
    "fig1_highdensity",
    "fig2_lowdensity",
    "fig2_middensity",
    "fig2_highdensity",
];

/// The three benchmark densities, m⁻³.
pub const BENCHMARK_DENSITIES: [f64; 3] = [2.65e21, 1.33e22, 3.7e22];

fn preset(name: &str) -> Option<Preset> {
    let (fig, level) = name.split_once('_')?;
    let density_3d = match level {
        "lowdensity" => BENCHMARK_DENSITIES[0],
        "middensity" => BENCHMARK_DENSITIES[1],
        "highdensity" => BENCHMARK_DENSITIES[2],
        _ => return None,
    };
    let (kappa, n_bar) = match fig {
        "fig1" => (0.0, 0.0),
        "fig2" => (1e-6, 26.0),
        _ => return None,
    };
    Some(Preset {
        density_3d,
        kappa,
        n_bar,
        center_wavelength: 7.94e-7,
        fwhm: 5.27e8,
        g_phi_3d: 9.16e-8,
        duration: 3.66e-12,
    })
}

// ---------------------------------------------------------------------------
// document → RunConfig

const TOP_KEYS: &[&str] = &[
    "preset",
    "mode",
    "method",
    "trajectories",
    "twa_trajectories",
    "seed",
    "workers",
    "output",
    "physical",
    "lattice",
    "options",
    "oracle",
    "sweep",
    "provenance",
];

pub fn parse_config(document: &str) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    parse_config_as(document, None)
}

/// Like [`parse_config`], with `mode` (when given) replacing the document's
/// own `mode` key, as the CLI subcommands do.
pub fn parse_config_as(document: &str, mode: Option<Mode>) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let table: Table = match document.parse() {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ConfigError { path: "<document>".into(), message: e.to_string().trim().to_string() }]);
        }
    };
    let c = Collector::default();
    let cfg = parse_table(&c, &table, mode);
    match cfg {
        Some(cfg) if c.is_empty() => Ok(cfg),
        _ => {
            if c.is_empty() {
                c.err("<document>", "configuration incomplete");
            }
            Err(c.errors.into_inner())
        }
    }
}

/// Parse a document, mapping errors into [`Error::Config`].
pub fn load(document: &str) -> Result<RunConfig> {
    parse_config(document).map_err(Error::Config)
}

pub fn load_file(path: &std::path::Path, mode: Option<Mode>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_as(&text, mode).map_err(Error::Config)
}

fn parse_table(c: &Collector, t: &Table, mode_override: Option<Mode>) -> Option<RunConfig> {
    check_keys(c, "", t, TOP_KEYS);

    let preset_name = string(c, "", t, "preset");
    let preset = match preset_name {
        Some(n) => match preset(n) {
            Some(p) => Some(p),
            None => {
                c.err("preset", format!("unknown preset \"{n}\" (expected one of: {})", PRESET_NAMES.join(", ")));
                None
            }
        },
        None => None,
    };

    let mode = match string(c, "", t, "mode") {
        _ if mode_override.is_some() => mode_override,
        None => Some(Mode::Propagate),
        Some("propagate") => Some(Mode::Propagate),
        Some("oracle") => Some(Mode::Oracle),
        Some("compare") => Some(Mode::Compare),
        Some(other) => {
            c.err("mode", format!("unknown mode \"{other}\" (expected propagate, oracle or compare)"));
            None
        }
    };
    let method = match string(c, "", t, "method") {
        None => Some(MethodSelection::Both),
        Some(s) => match MethodSelection::parse(s) {
            Some(m) => Some(m),
            None => {
                c.err("method", format!("unknown method \"{s}\" (expected ppr, twa or both)"));
                None
            }
        },
    };
    let trajectories = integer(c, "", t, "trajectories").unwrap_or(1000) as usize;
    if trajectories < 2 {
        c.err("trajectories", "trajectories must be ≥ 2");
    }
    let twa_trajectories = integer(c, "", t, "twa_trajectories").map(|n| n as usize);
    if matches!(twa_trajectories, Some(n) if n < 2) {
        c.err("twa_trajectories", "twa_trajectories must be ≥ 2");
    }
    let seed = seed_value(c, t).unwrap_or(1);
    let workers = integer(c, "", t, "workers").unwrap_or(1) as usize;
    if workers == 0 {
        c.err("workers", "workers must be ≥ 1");
    }
    let output = string(c, "", t, "output").unwrap_or("out").to_string();

    let mut provenance = match sub_table(c, "", t, "provenance") {
        Some(p) => parse_provenance(c, p),
        None => Provenance::default(),
    };
    if let Some(n) = preset_name {
        provenance.preset = Some(n.to_string());
    }

    let empty = Table::new();
    let mode_is_propagate = mode == Some(Mode::Propagate);
    let physical_table = sub_table(c, "", t, "physical");
    let lattice_table = sub_table(c, "", t, "lattice");
    // the oracle modes need no pulse description
    let need_physical = mode_is_propagate || physical_table.is_some() || preset.is_some();

    let mut density_factor = 1.0;
    let physical = if need_physical {
        match physical_table {
            Some(p) => parse_physical(c, p, preset.as_ref(), &mut provenance, &mut density_factor),
            None => {
                if preset.is_some() {
                    parse_physical(c, &empty, preset.as_ref(), &mut provenance, &mut density_factor)
                } else {
                    c.err("physical", "missing required section");
                    None
                }
            }
        }
    } else {
        Some(placeholder_physical())
    };
    let lattice = match (lattice_table, need_physical) {
        (Some(l), _) => parse_lattice(c, l, physical.as_ref()),
        (None, false) => Some(placeholder_lattice()),
        (None, true) => {
            c.err("lattice", "missing required section");
            None
        }
    };
    let options = match sub_table(c, "", t, "options") {
        Some(o) => parse_options(c, o),
        None => Some(OptionsSpec::default()),
    };
    let oracle = match sub_table(c, "", t, "oracle") {
        Some(o) => parse_oracle(c, o),
        None => None,
    };
    if !mode_is_propagate && mode.is_some() && oracle.is_none() && !t.contains_key("oracle") {
        c.err("oracle", "missing required section for oracle/compare mode");
    }
    let sweep = match sub_table(c, "", t, "sweep") {
        Some(s) => parse_sweep(c, s, &provenance, density_factor),
        None => None,
    };

    if let (Some(p), Some(l)) = (&physical, &lattice) {
        if need_physical {
            if let Err(e) = p.validate() {
                c.err("physical", e.to_string());
            } else if let Err(e) = build_lattice_with_cutoff(p, l.n_tau, l.n_z, l.freq_classes, l.cutoff_fwhm) {
                c.err("lattice", e.to_string());
            }
        }
    }

    Some(RunConfig {
        mode: mode?,
        method: method?,
        trajectories,
        twa_trajectories,
        seed,
        workers,
        output,
        physical: physical?,
        lattice: lattice?,
        options: options?,
        oracle,
        sweep,
        provenance,
    })
}

/// Stand-in physics for oracle-only documents; never propagated.
fn placeholder_physical() -> PhysicalConfig {
    PhysicalConfig {
        g_phi: 0.0,
        kappa: 0.0,
        n_bar: 0.0,
        rho_1d: 0.0,
        lineshape: LineshapeSpec::sharp(1.0),
        pulse: PulseSpec::new(1.0, 0.0).with_peak_flux(0.0),
        z_max: 1.0,
        v_g: 1.0,
    }
}

fn placeholder_lattice() -> LatticeSpec {
    LatticeSpec {
        n_tau: 2,
        n_z: 1,
        n_out: 1,
        tau_substeps: 0,
        scheme: SchemeVariant::EulerMaruyama,
        freq_classes: 1,
        cutoff_fwhm: DEFAULT_CUTOFF_FWHM,
    }
}

const PHYSICAL_KEYS: &[&str] = &[
    "g_phi",
    "mode_area",
    "density",
    "rho_1d",
    "kappa",
    "n_bar",
    "v_g",
    "z_max",
    "desk_photon_number",
    "lineshape",
    "pulse",
];

fn parse_physical(
    c: &Collector,
    t: &Table,
    preset: Option<&Preset>,
    provenance: &mut Provenance,
    density_factor: &mut f64,
) -> Option<PhysicalConfig> {
    let path = "physical";
    check_keys(c, path, t, PHYSICAL_KEYS);

    let mode_area = positive(c, path, "mode_area", quantity(c, path, t, "mode_area", Dim::Area));

    // g_φ: a 1-D value directly, or a 3-D value divided by the mode area
    let g_phi = match t.get("g_phi") {
        Some(v) => {
            if let Ok(g) = parse_quantity_value(v, Dim::Coupling1) {
                Some(g)
            } else {
                match parse_quantity_value(v, Dim::Coupling3) {
                    Ok(g3) => {
                        provenance.g_phi_3d = Some(g3);
                        resolve_3d(c, "physical.g_phi", mode_area, |a| g3 / a)
                    }
                    Err(_) => {
                        c.err(
                            "physical.g_phi",
                            format!("expected {} or {}", Dim::Coupling1.expected(), Dim::Coupling3.expected()),
                        );
                        None
                    }
                }
            }
        }
        None => match preset {
            Some(p) => {
                provenance.g_phi_3d = Some(p.g_phi_3d);
                resolve_3d(c, "physical.g_phi", mode_area, |a| p.g_phi_3d / a)
            }
            None => {
                c.err("physical.g_phi", format!("missing required field ({})", Dim::Coupling1.expected()));
                None
            }
        },
    };
    let g_phi = non_negative(c, path, "g_phi", g_phi);

    let rho_1d = match (t.contains_key("density"), t.contains_key("rho_1d")) {
        (true, true) => {
            c.err("physical.density", "give either density or rho_1d, not both");
            None
        }
        (false, true) => non_negative(c, path, "rho_1d", quantity(c, path, t, "rho_1d", Dim::InvLength)),
        (true, false) => {
            let rho = non_negative(c, path, "density", quantity(c, path, t, "density", Dim::Density3));
            rho.and_then(|r| {
                provenance.density_3d = Some(r);
                resolve_3d(c, "physical.density", mode_area, |a| r * a)
            })
        }
        (false, false) => match preset {
            Some(p) => {
                provenance.density_3d = Some(p.density_3d);
                resolve_3d(c, "physical.density", mode_area, |a| p.density_3d * a)
            }
            None => {
                c.err("physical.rho_1d", format!("missing required field ({})", Dim::InvLength.expected()));
                None
            }
        },
    };
    if mode_area.is_some() {
        provenance.mode_area = mode_area;
    }

    let kappa = non_negative(c, path, "kappa", quantity(c, path, t, "kappa", Dim::InvLength))
        .or(if t.contains_key("kappa") { None } else { Some(preset.map_or(0.0, |p| p.kappa)) });
    let n_bar = non_negative(c, path, "n_bar", number(c, path, t, "n_bar"))
        .or(if t.contains_key("n_bar") { None } else { Some(preset.map_or(0.0, |p| p.n_bar)) });
    let v_g = positive(c, path, "v_g", required(c, path, "v_g", quantity(c, path, t, "v_g", Dim::Velocity), t, &Dim::Velocity.expected()));
    let z_max = positive(c, path, "z_max", required(c, path, "z_max", quantity(c, path, t, "z_max", Dim::Length), t, &Dim::Length.expected()));

    let lineshape = match sub_table(c, path, t, "lineshape") {
        Some(l) => parse_lineshape(c, l, preset),
        None => {
            c.err("physical.lineshape", "missing required section (kind = \"sharp\", or gaussian_sigma and lorentzian_hwhm)");
            None
        }
    };
    let pulse = match sub_table(c, path, t, "pulse") {
        Some(p) => parse_pulse(c, p, preset),
        None => match preset {
            Some(p) => Some(PulseSpec::new(1.0 / p.duration, 0.0)),
            None => {
                c.err("physical.pulse", "missing required section");
                None
            }
        },
    };

    let mut g_phi = g_phi?;
    let mut rho_1d = rho_1d?;
    let pulse = pulse?;

    if let Some(n) = positive(c, path, "desk_photon_number", number(c, path, t, "desk_photon_number")) {
        // Keep the area (so g_φ·φ) and g_φ²ρ fixed: the classical dynamics are
        // unchanged while the photon number becomes n.
        if pulse.peak_flux.is_some() {
            c.err("physical.desk_photon_number", "cannot rescale a pulse given by peak_flux");
        } else {
            let ca = pulse.area / (4.0 * PI);
            let g_new = (2.0 * ca * ca * pulse.inverse_width / n).sqrt();
            if g_phi > 0.0 {
                let f = (g_phi / g_new).powi(2);
                rho_1d *= f;
                *density_factor = f;
                provenance.desk_density_factor = Some(f);
            }
            provenance.desk_photon_number = Some(n);
            g_phi = g_new;
        }
    }

    Some(PhysicalConfig {
        g_phi,
        kappa: kappa?,
        n_bar: n_bar?,
        rho_1d,
        lineshape: lineshape?,
        pulse,
        z_max: z_max?,
        v_g: v_g?,
    })
}

fn resolve_3d(c: &Collector, path: &str, mode_area: Option<f64>, f: impl Fn(f64) -> f64) -> Option<f64> {
    match mode_area {
        Some(a) => Some(f(a)),
        None => {
            c.err(path, "a 3-D value needs physical.mode_area (the effective mode area is not stated anywhere and must be chosen explicitly)");
            None
        }
    }
}

fn parse_lineshape(c: &Collector, t: &Table, preset: Option<&Preset>) -> Option<LineshapeSpec> {
    let path = "physical.lineshape";
    check_keys(c, path, t, &["kind", "center_wavelength", "fwhm", "gaussian_sigma", "lorentzian_hwhm"]);
    let center = positive(c, path, "center_wavelength", quantity(c, path, t, "center_wavelength", Dim::Length))
        .or(if t.contains_key("center_wavelength") { None } else { preset.map(|p| p.center_wavelength) });
    if center.is_none() && !t.contains_key("center_wavelength") {
        c.err(join(path, "center_wavelength"), format!("missing required field ({})", Dim::Length.expected()));
    }
    let kind = string(c, path, t, "kind").unwrap_or("voigt");
    match kind {
        "sharp" => {
            for k in ["fwhm", "gaussian_sigma", "lorentzian_hwhm"] {
                if t.contains_key(k) {
                    c.err(join(path, k), "not used with kind = \"sharp\"");
                }
            }
            Some(LineshapeSpec::sharp(center?))
        }
        "voigt" => {
            let fwhm = non_negative(c, path, "fwhm", quantity(c, path, t, "fwhm", Dim::Rate))
                .or(if t.contains_key("fwhm") { None } else { Some(preset.map_or(0.0, |p| p.fwhm)) });
            let sigma = non_negative(
                c,
                path,
                "gaussian_sigma",
                required(c, path, "gaussian_sigma", quantity(c, path, t, "gaussian_sigma", Dim::Rate), t, &Dim::Rate.expected()),
            );
            let gamma = non_negative(
                c,
                path,
                "lorentzian_hwhm",
                required(c, path, "lorentzian_hwhm", quantity(c, path, t, "lorentzian_hwhm", Dim::Rate), t, &Dim::Rate.expected()),
            );
            let spec = LineshapeSpec {
                center_wavelength: center?,
                fwhm_voigt: fwhm?,
                gaussian_sigma: sigma?,
                lorentzian_hwhm: gamma?,
            };
            if let Err(e) = spec.validate() {
                c.err(path, e.to_string());
                return None;
            }
            Some(spec)
        }
        other => {
            c.err(join(path, "kind"), format!("unknown lineshape kind \"{other}\" (expected voigt or sharp)"));
            None
        }
    }
}

fn parse_pulse(c: &Collector, t: &Table, preset: Option<&Preset>) -> Option<PulseSpec> {
    let path = "physical.pulse";
    check_keys(c, path, t, &["inverse_width", "duration", "offset", "window", "window_widths", "area", "peak_flux"]);
    let a = match (t.contains_key("inverse_width"), t.contains_key("duration")) {
        (true, true) => {
            c.err(join(path, "duration"), "give either inverse_width or duration, not both");
            None
        }
        (true, false) => positive(c, path, "inverse_width", quantity(c, path, t, "inverse_width", Dim::Rate)),
        (false, true) => positive(c, path, "duration", quantity(c, path, t, "duration", Dim::Time)).map(|d| 1.0 / d),
        (false, false) => match preset {
            Some(p) => Some(1.0 / p.duration),
            None => {
                c.err(join(path, "duration"), format!("missing required field ({})", Dim::Time.expected()));
                None
            }
        },
    };
    let offset = quantity(c, path, t, "offset", Dim::Time).or(if t.contains_key("offset") { None } else { Some(0.0) });
    let area = quantity(c, path, t, "area", Dim::Angle).or(if t.contains_key("area") { None } else { Some(2.0 * PI) });
    let peak_flux = non_negative(c, path, "peak_flux", quantity(c, path, t, "peak_flux", Dim::Flux));

    let (a, offset, area) = (a?, offset?, area?);
    let window = match (t.get("window"), t.get("window_widths")) {
        (Some(_), Some(_)) => {
            c.err(join(path, "window"), "give either window or window_widths, not both");
            None
        }
        (Some(w), None) => match w.as_table() {
            Some(wt) => {
                let p = join(path, "window");
                check_keys(c, &p, wt, &["min", "max"]);
                let lo = required(c, &p, "min", quantity(c, &p, wt, "min", Dim::Time), wt, &Dim::Time.expected());
                let hi = required(c, &p, "max", quantity(c, &p, wt, "max", Dim::Time), wt, &Dim::Time.expected());
                Some((lo?, hi?))
            }
            None => {
                c.err(join(path, "window"), "expected a table { min = \"… s\", max = \"… s\" }");
                None
            }
        },
        (None, Some(w)) => {
            let pair = w.as_array().and_then(|arr| {
                if arr.len() == 2 {
                    Some((as_number(&arr[0])?, as_number(&arr[1])?))
                } else {
                    None
                }
            });
            match pair {
                Some((lo, hi)) => Some((offset + lo / a, offset + hi / a)),
                None => {
                    c.err(join(path, "window_widths"), "expected [low, high] in units of the pulse width 1/A");
                    None
                }
            }
        }
        (None, None) => {
            let h = DEFAULT_WINDOW_HALF_WIDTH / a;
            Some((offset - h, offset + h))
        }
    }?;
    let mut pulse = PulseSpec::new(a, offset).with_area(area).with_window(window.0, window.1);
    pulse.peak_flux = peak_flux;
    if let Err(e) = pulse.validate() {
        c.err(path, e.to_string());
        return None;
    }
    Some(pulse)
}

fn parse_lattice(c: &Collector, t: &Table, phys: Option<&PhysicalConfig>) -> Option<LatticeSpec> {
    let path = "lattice";
    check_keys(
        c,
        path,
        t,
        &["n_tau", "samples_per_width", "n_z", "n_out", "tau_substeps", "scheme", "freq_classes", "cutoff_fwhm"],
    );
    let n_tau = match (t.contains_key("n_tau"), t.contains_key("samples_per_width")) {
        (true, true) => {
            c.err("lattice.n_tau", "give either n_tau or samples_per_width, not both");
            None
        }
        (true, false) => integer(c, path, t, "n_tau").map(|n| n as usize),
        (false, true) => positive(c, path, "samples_per_width", number(c, path, t, "samples_per_width")).and_then(|s| {
            let pulse = &phys?.pulse;
            let (lo, hi) = pulse.tau_window;
            Some(((hi - lo) * pulse.inverse_width * s).round() as usize)
        }),
        (false, false) => {
            c.err("lattice.n_tau", "missing required field (n_tau or samples_per_width)");
            None
        }
    };
    if matches!(n_tau, Some(n) if n < 2) {
        c.err("lattice.n_tau", "n_tau must be ≥ 2");
    }
    let n_z = required(c, path, "n_z", integer(c, path, t, "n_z"), t, "a positive integer").map(|n| n as usize);
    if n_z == Some(0) {
        c.err("lattice.n_z", "n_z must be ≥ 1");
    }
    let n_out = integer(c, path, t, "n_out").map(|n| n as usize).or(if t.contains_key("n_out") { None } else { n_z });
    if let (Some(nz), Some(no)) = (n_z, n_out) {
        if no == 0 || nz % no != 0 {
            c.err("lattice.n_out", format!("n_out ({no}) must be ≥ 1 and divide n_z ({nz})"));
        }
    }
    let tau_substeps = integer(c, path, t, "tau_substeps").unwrap_or(0) as usize;
    let scheme = match string(c, path, t, "scheme") {
        None | Some("euler_maruyama") => Some(SchemeVariant::EulerMaruyama),
        Some("drift_implicit_euler") => Some(SchemeVariant::DriftImplicitEuler),
        Some("predictor_corrector") => Some(SchemeVariant::PredictorCorrector),
        Some(other) => {
            c.err(
                "lattice.scheme",
                format!("unknown scheme \"{other}\" (expected euler_maruyama, drift_implicit_euler or predictor_corrector)"),
            );
            None
        }
    };
    let freq_classes = integer(c, path, t, "freq_classes").unwrap_or(1) as usize;
    if freq_classes == 0 {
        c.err("lattice.freq_classes", "freq_classes must be ≥ 1");
    }
    let cutoff_fwhm = positive(c, path, "cutoff_fwhm", number(c, path, t, "cutoff_fwhm"))
        .or(if t.contains_key("cutoff_fwhm") { None } else { Some(DEFAULT_CUTOFF_FWHM) });
    Some(LatticeSpec {
        n_tau: n_tau?,
        n_z: n_z?,
        n_out: n_out?,
        tau_substeps,
        scheme: scheme?,
        freq_classes,
        cutoff_fwhm: cutoff_fwhm?,
    })
}

fn parse_options(c: &Collector, t: &Table) -> Option<OptionsSpec> {
    let path = "options";
    check_keys(c, path, t, &["noise", "gauge", "divergence_bound", "local_oscillator", "n_theta"]);
    let d = OptionsSpec::default();
    let noise = boolean(c, path, t, "noise").unwrap_or(d.noise);
    let gauge = positive(c, path, "gauge", number(c, path, t, "gauge")).unwrap_or(d.gauge);
    let divergence_bound = number(c, path, t, "divergence_bound").unwrap_or(d.divergence_bound);
    if divergence_bound <= 1.0 {
        c.err("options.divergence_bound", "divergence_bound must be > 1");
    }
    let local_oscillator = match string(c, path, t, "local_oscillator") {
        None => d.local_oscillator,
        Some("propagated") => LoMode::Propagated,
        Some("input") => LoMode::Input,
        Some(other) => {
            c.err("options.local_oscillator", format!("unknown local oscillator \"{other}\" (expected propagated or input)"));
            d.local_oscillator
        }
    };
    let n_theta = integer(c, path, t, "n_theta").unwrap_or(d.n_theta as u64) as usize;
    if n_theta < 3 {
        c.err("options.n_theta", "n_theta must be ≥ 3");
    }
    Some(OptionsSpec { noise, gauge, divergence_bound, local_oscillator, n_theta })
}

fn parse_oracle(c: &Collector, t: &Table) -> Option<OracleSpec> {
    let path = "oracle";
    check_keys(
        c,
        path,
        t,
        &["g", "detuning", "gamma", "n_bar", "alpha0", "n_max", "t_max", "n_out", "dt", "z_max", "steps_per_output"],
    );
    let g = non_negative(c, path, "g", required(c, path, "g", quantity(c, path, t, "g", Dim::Rate), t, &Dim::Rate.expected()));
    let detuning = quantity(c, path, t, "detuning", Dim::Rate).or(if t.contains_key("detuning") { None } else { Some(0.0) });
    let gamma = non_negative(c, path, "gamma", quantity(c, path, t, "gamma", Dim::Rate))
        .or(if t.contains_key("gamma") { None } else { Some(0.0) });
    let n_bar = non_negative(c, path, "n_bar", number(c, path, t, "n_bar")).or(if t.contains_key("n_bar") { None } else { Some(0.0) });
    let alpha0 = match t.get("alpha0") {
        None => {
            c.err("oracle.alpha0", "missing required field ([re, im])");
            None
        }
        Some(v) => {
            let pair = v.as_array().and_then(|a| {
                if a.len() == 2 {
                    Some(C64::new(as_number(&a[0])?, as_number(&a[1])?))
                } else {
                    None
                }
            });
            if pair.is_none() {
                c.err("oracle.alpha0", "expected [re, im]");
            }
            pair
        }
    };
    let t_max = positive(c, path, "t_max", required(c, path, "t_max", quantity(c, path, t, "t_max", Dim::Time), t, &Dim::Time.expected()));
    let n_out = integer(c, path, t, "n_out").unwrap_or(8) as usize;
    if n_out == 0 {
        c.err("oracle.n_out", "n_out must be ≥ 1");
    }
    let dt = positive(c, path, "dt", quantity(c, path, t, "dt", Dim::Time));
    let z_max = positive(c, path, "z_max", number(c, path, t, "z_max")).unwrap_or(5.0);
    let steps_per_output = integer(c, path, t, "steps_per_output").unwrap_or(0) as usize;

    let (g, detuning, gamma, n_bar, alpha0, t_max) = (g?, detuning?, gamma?, n_bar?, alpha0?, t_max?);
    let mut config = OracleConfig::new(g, gamma, n_bar, alpha0, t_max).with_outputs(n_out);
    config.detuning = detuning;
    if let Some(n) = integer(c, path, t, "n_max") {
        config = config.with_n_max(n as usize);
    }
    config.dt = dt;
    if let Err(e) = config.validate() {
        c.err(path, e.to_string());
        return None;
    }
    Some(OracleSpec { config, z_max, steps_per_output })
}

fn parse_sweep(c: &Collector, t: &Table, provenance: &Provenance, density_factor: f64) -> Option<SweepSpec> {
    let path = "sweep";
    check_keys(c, path, t, &["axis", "values"]);
    let axis = match required(c, path, "axis", string(c, path, t, "axis"), t, "density, kappa or n_bar") {
        Some("density") => Some(SweepAxis::Density),
        Some("kappa") => Some(SweepAxis::Kappa),
        Some("n_bar") => Some(SweepAxis::NBar),
        Some(other) => {
            c.err("sweep.axis", format!("unknown sweep axis \"{other}\" (expected density, kappa or n_bar)"));
            None
        }
        None => None,
    }?;
    let Some(raw) = t.get("values") else {
        c.err("sweep.values", "missing required field (array of values)");
        return None;
    };
    let Some(arr) = raw.as_array() else {
        c.err("sweep.values", "expected an array");
        return None;
    };
    if arr.is_empty() {
        c.err("sweep.values", "sweep value list is empty");
        return None;
    }
    let mut values = Vec::with_capacity(arr.len());
    for (i, v) in arr.iter().enumerate() {
        let p = format!("sweep.values[{i}]");
        let r = match axis {
            SweepAxis::NBar => as_number(v).ok_or_else(|| "expected a number".to_string()),
            SweepAxis::Kappa => parse_quantity_value(v, Dim::InvLength),
            SweepAxis::Density => match parse_quantity_value(v, Dim::InvLength) {
                Ok(rho1) => Ok(rho1 * density_factor),
                Err(_) => match parse_quantity_value(v, Dim::Density3) {
                    Ok(rho3) => match provenance.mode_area {
                        Some(a) => Ok(rho3 * a * density_factor),
                        None => Err("a 3-D density needs physical.mode_area".to_string()),
                    },
                    Err(_) => Err(format!("expected {} or {}", Dim::InvLength.expected(), Dim::Density3.expected())),
                },
            },
        };
        match r {
            Ok(x) if x >= 0.0 => values.push(x),
            Ok(_) => c.err(p, format!("{} must be ≥ 0", axis.as_str())),
            Err(m) => c.err(p, m),
        }
    }
    Some(SweepSpec { axis, values })
}

fn parse_provenance(c: &Collector, t: &Table) -> Provenance {
    let path = "provenance";
    check_keys(
        c,
        path,
        t,
        &["preset", "mode_area", "density_3d", "g_phi_3d", "desk_photon_number", "desk_density_factor"],
    );
    Provenance {
        preset: string(c, path, t, "preset").map(str::to_string),
        mode_area: quantity(c, path, t, "mode_area", Dim::Area),
        density_3d: quantity(c, path, t, "density_3d", Dim::Density3),
        g_phi_3d: quantity(c, path, t, "g_phi_3d", Dim::Coupling3),
        desk_photon_number: number(c, path, t, "desk_photon_number"),
        desk_density_factor: number(c, path, t, "desk_density_factor"),
    }
}

// ---------------------------------------------------------------------------
// RunConfig → document

fn q(v: f64, dim: Dim) -> String {
    format!("\"{}\"", quantity_string(v, dim))
}

fn f(v: f64) -> String {
    // TOML needs a decimal point or exponent for floats
    format!("{v:e}")
}

/// Canonical document for `cfg`: SI units, 1-D couplings, presets expanded.
pub fn emit(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode = \"{}\"", cfg.mode.as_str());
    let _ = writeln!(s, "method = \"{}\"", cfg.method.as_str());
    let _ = writeln!(s, "trajectories = {}", cfg.trajectories);
    if let Some(n) = cfg.twa_trajectories {
        let _ = writeln!(s, "twa_trajectories = {n}");
    }
    if cfg.seed > i64::MAX as u64 {
        let _ = writeln!(s, "seed = \"{}\"", cfg.seed);
    } else {
        let _ = writeln!(s, "seed = {}", cfg.seed);
    }
    let _ = writeln!(s, "workers = {}", cfg.workers);
    let _ = writeln!(s, "output = {}", Value::String(cfg.output.clone()));

    let p = &cfg.physical;
    if cfg.mode == Mode::Propagate || p != &placeholder_physical() {
        let _ = writeln!(s, "\n[physical]");
        let _ = writeln!(s, "g_phi = {}", q(p.g_phi, Dim::Coupling1));
        let _ = writeln!(s, "rho_1d = {}", q(p.rho_1d, Dim::InvLength));
        let _ = writeln!(s, "kappa = {}", q(p.kappa, Dim::InvLength));
        let _ = writeln!(s, "n_bar = {}", f(p.n_bar));
        let _ = writeln!(s, "v_g = {}", q(p.v_g, Dim::Velocity));
        let _ = writeln!(s, "z_max = {}", q(p.z_max, Dim::Length));

        let l = &p.lineshape;
        let _ = writeln!(s, "\n[physical.lineshape]");
        let _ = writeln!(s, "center_wavelength = {}", q(l.center_wavelength, Dim::Length));
        if *l == LineshapeSpec::sharp(l.center_wavelength) {
            let _ = writeln!(s, "kind = \"sharp\"");
        } else {
            let _ = writeln!(s, "kind = \"voigt\"");
            let _ = writeln!(s, "fwhm = {}", q(l.fwhm_voigt, Dim::Rate));
            let _ = writeln!(s, "gaussian_sigma = {}", q(l.gaussian_sigma, Dim::Rate));
            let _ = writeln!(s, "lorentzian_hwhm = {}", q(l.lorentzian_hwhm, Dim::Rate));
        }

        let pu = &p.pulse;
        let _ = writeln!(s, "\n[physical.pulse]");
        let _ = writeln!(s, "inverse_width = {}", q(pu.inverse_width, Dim::Rate));
        let _ = writeln!(s, "offset = {}", q(pu.offset, Dim::Time));
        let _ = writeln!(s, "area = {}", q(pu.area, Dim::Angle));
        if let Some(pf) = pu.peak_flux {
            let _ = writeln!(s, "peak_flux = {}", q(pf, Dim::Flux));
        }
        let _ = writeln!(
            s,
            "window = {{ min = {}, max = {} }}",
            q(pu.tau_window.0, Dim::Time),
            q(pu.tau_window.1, Dim::Time)
        );

        let la = &cfg.lattice;
        let _ = writeln!(s, "\n[lattice]");
        let _ = writeln!(s, "n_tau = {}", la.n_tau);
        let _ = writeln!(s, "n_z = {}", la.n_z);
        let _ = writeln!(s, "n_out = {}", la.n_out);
        let _ = writeln!(s, "tau_substeps = {}", la.tau_substeps);
        let _ = writeln!(s, "scheme = \"{}\"", la.scheme.as_str());
        let _ = writeln!(s, "freq_classes = {}", la.freq_classes);
        let _ = writeln!(s, "cutoff_fwhm = {}", f(la.cutoff_fwhm));
    }

    let o = &cfg.options;
    let _ = writeln!(s, "\n[options]");
    let _ = writeln!(s, "noise = {}", o.noise);
    let _ = writeln!(s, "gauge = {}", f(o.gauge));
    let _ = writeln!(s, "divergence_bound = {}", f(o.divergence_bound));
    let _ = writeln!(s, "local_oscillator = \"{}\"", o.local_oscillator.as_str());
    let _ = writeln!(s, "n_theta = {}", o.n_theta);

    if let Some(or) = &cfg.oracle {
        let c = &or.config;
        let _ = writeln!(s, "\n[oracle]");
        let _ = writeln!(s, "g = {}", q(c.g, Dim::Rate));
        let _ = writeln!(s, "detuning = {}", q(c.detuning, Dim::Rate));
        let _ = writeln!(s, "gamma = {}", q(c.gamma, Dim::Rate));
        let _ = writeln!(s, "n_bar = {}", f(c.n_bar));
        let _ = writeln!(s, "alpha0 = [{}, {}]", f(c.alpha0.re), f(c.alpha0.im));
        let _ = writeln!(s, "n_max = {}", c.n_max);
        let _ = writeln!(s, "t_max = {}", q(c.t_max, Dim::Time));
        let _ = writeln!(s, "n_out = {}", c.n_out);
        if let Some(dt) = c.dt {
            let _ = writeln!(s, "dt = {}", q(dt, Dim::Time));
        }
        let _ = writeln!(s, "z_max = {}", f(or.z_max));
        let _ = writeln!(s, "steps_per_output = {}", or.steps_per_output);
    }

    if let Some(sw) = &cfg.sweep {
        let _ = writeln!(s, "\n[sweep]");
        let _ = writeln!(s, "axis = \"{}\"", sw.axis.as_str());
        let vals: Vec<String> = sw
            .values
            .iter()
            .map(|&v| match sw.axis {
                SweepAxis::NBar => f(v),
                _ => format!("\"{v:e} {}\"", sw.axis.si_unit()),
            })
            .collect();
        let _ = writeln!(s, "values = [{}]", vals.join(", "));
    }

    let pr = &cfg.provenance;
    if !pr.is_empty() {
        let _ = writeln!(s, "\n[provenance]");
        if let Some(p) = &pr.preset {
            let _ = writeln!(s, "preset = {}", Value::String(p.clone()));
        }
        if let Some(v) = pr.mode_area {
            let _ = writeln!(s, "mode_area = {}", q(v, Dim::Area));
        }
        if let Some(v) = pr.density_3d {
            let _ = writeln!(s, "density_3d = {}", q(v, Dim::Density3));
        }
        if let Some(v) = pr.g_phi_3d {
            let _ = writeln!(s, "g_phi_3d = {}", q(v, Dim::Coupling3));
        }
        if let Some(v) = pr.desk_photon_number {
            let _ = writeln!(s, "desk_photon_number = {}", f(v));
        }
        if let Some(v) = pr.desk_density_factor {
            let _ = writeln!(s, "desk_density_factor = {}", f(v));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [physical]
        g_phi = "100 s^-1/2"
        rho_1d = "1e6 m^-1"
        v_g = "3e8 m/s"
        z_max = "1 cm"
        [physical.lineshape]
        kind = "sharp"
        center_wavelength = "794 nm"
        [physical.pulse]
        duration = "1 ps"
        [lattice]
        n_tau = 64
        n_z = 20
        n_out = 4
    "#;

    fn paths(errs: &[ConfigError]) -> Vec<String> {
        errs.iter().map(|e| e.path.clone()).collect()
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Propagate);
        assert_eq!(c.method, MethodSelection::Both);
        assert_eq!(c.trajectories, 1000);
        assert_eq!(c.workers, 1);
        assert_eq!(c.physical.kappa, 0.0);
        assert_eq!(c.physical.z_max, 0.01);
        assert!((c.physical.lineshape.center_wavelength - 7.94e-7).abs() < 1e-20);
        assert_eq!(c.physical.pulse.inverse_width, 1e12);
        assert_eq!(c.physical.pulse.area, 2.0 * PI);
        assert_eq!(c.options, OptionsSpec::default());
        assert_eq!(c.lattice.cutoff_fwhm, DEFAULT_CUTOFF_FWHM);
        assert_eq!(c.step_scheme().z_substeps, 5);
        c.simulation().unwrap();
    }

    #[test]
    fn emit_round_trips() {
        let c = parse_config(MINIMAL).unwrap();
        let text = emit(&c);
        assert_eq!(parse_config(&text).unwrap(), c, "{text}");
    }

    #[test]
    fn negative_kappa_is_named() {
        let doc = MINIMAL.replace("[physical]\n", "[physical]\n        kappa = \"-1 m^-1\"\n");
        let errs = parse_config(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "physical.kappa" && e.message.contains("kappa must be ≥ 0")), "{errs:?}");
    }

    #[test]
    fn all_errors_are_reported() {
        let doc = MINIMAL
            .replace("\"3e8 m/s\"", "\"3e8 m\"")
            .replace("n_z = 20", "n_z = 20\n        bogus = 1")
            .replace("rho_1d = \"1e6 m^-1\"", "rho_1d = 5");
        let errs = parse_config(&doc).unwrap_err();
        let p = paths(&errs);
        assert!(p.contains(&"physical.v_g".to_string()), "{p:?}");
        assert!(p.contains(&"lattice.bogus".to_string()), "{p:?}");
        assert!(p.contains(&"physical.rho_1d".to_string()), "{p:?}");
        assert!(errs.len() >= 3);
        let unit_err = errs.iter().find(|e| e.path == "physical.v_g").unwrap();
        assert!(unit_err.message.contains("m/s"), "{}", unit_err.message);
    }

    #[test]
    fn bare_numbers_need_units() {
        let doc = MINIMAL.replace("\"1 cm\"", "0.01");
        let errs = parse_config(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "physical.z_max" && e.message.contains("unit")));
    }

    #[test]
    fn quantity_tables_and_strings_agree() {
        let doc = MINIMAL.replace("\"1 cm\"", "{ value = 1, unit = \"cm\" }");
        assert_eq!(parse_config(&doc).unwrap(), parse_config(MINIMAL).unwrap());
    }

    #[test]
    fn missing_sections_are_errors() {
        let errs = parse_config("seed = 3").unwrap_err();
        let p = paths(&errs);
        assert!(p.contains(&"physical".to_string()) && p.contains(&"lattice".to_string()), "{p:?}");
    }

    #[test]
    fn window_must_clear_the_pulse() {
        let doc = MINIMAL.replace("duration = \"1 ps\"", "duration = \"1 ps\"\n        window_widths = [-3, 8]");
        let errs = parse_config(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "physical.pulse"), "{errs:?}");
    }

    const PRESET_DOC: &str = r#"
        preset = "fig1_lowdensity"
        [physical]
        mode_area = "100 um^2"
        v_g = "1 c"
        z_max = "2.5 m"
        [physical.lineshape]
        gaussian_sigma = "2e8 s^-1"
        lorentzian_hwhm = "5e7 s^-1"
        [lattice]
        samples_per_width = 4
        n_z = 10
    "#;

    #[test]
    fn preset_expands_benchmark_values() {
        let c = parse_config(PRESET_DOC).unwrap();
        let a_eff = 1e-10;
        assert!((c.physical.rho_1d - 2.65e21 * a_eff).abs() < 1e-3);
        assert_eq!(c.physical.kappa, 0.0);
        assert_eq!(c.physical.n_bar, 0.0);
        assert_eq!(c.physical.lineshape.center_wavelength, 7.94e-7);
        assert_eq!(c.physical.lineshape.fwhm_voigt, 5.27e8);
        assert!((c.physical.g_phi - 9.16e-8 / a_eff).abs() < 1e-9);
        assert!((1.0 / c.physical.pulse.inverse_width - 3.66e-12).abs() < 1e-24);
        assert_eq!(c.provenance.preset.as_deref(), Some("fig1_lowdensity"));
        assert_eq!(c.provenance.density_3d, Some(2.65e21));
        assert_eq!(c.provenance.g_phi_3d, Some(9.16e-8));
        assert_eq!(c.lattice.n_tau, 64);

        let c2 = parse_config(&PRESET_DOC.replace("fig1_lowdensity", "fig2_highdensity")).unwrap();
        assert_eq!(c2.physical.kappa, 1e-6);
        assert_eq!(c2.physical.n_bar, 26.0);
        assert!((c2.physical.rho_1d - 3.7e22 * a_eff).abs() < 1e-2);
        let text = emit(&c2);
        assert_eq!(parse_config(&text).unwrap(), c2, "{text}");
    }

    #[test]
    fn preset_still_demands_unstated_quantities() {
        let doc = r#"
            preset = "fig1_middensity"
            [physical]
            [lattice]
            n_tau = 64
            n_z = 10
        "#;
        let errs = parse_config(doc).unwrap_err();
        let p = paths(&errs);
        for want in ["physical.g_phi", "physical.v_g", "physical.z_max", "physical.lineshape"] {
            assert!(p.iter().any(|x| x == want), "{want} missing from {p:?}");
        }
    }

    #[test]
    fn desk_scaling_keeps_classical_dynamics() {
        let base = parse_config(PRESET_DOC).unwrap();
        let doc = PRESET_DOC.replace("z_max = \"2.5 m\"", "z_max = \"2.5 m\"\n        desk_photon_number = 1e6");
        let c = parse_config(&doc).unwrap();
        let g2rho = |p: &PhysicalConfig| p.g_phi * p.g_phi * p.rho_1d;
        assert!((g2rho(&c.physical) / g2rho(&base.physical) - 1.0).abs() < 1e-12);
        let n = crate::model::sech_photon_number(&c.physical.pulse, c.physical.g_phi);
        assert!((n / 1e6 - 1.0).abs() < 1e-12, "{n}");
        assert_eq!(c.provenance.desk_photon_number, Some(1e6));
        assert_eq!(parse_config(&emit(&c)).unwrap(), c);
    }

    #[test]
    fn unknown_preset_and_keys() {
        let errs = parse_config(&PRESET_DOC.replace("fig1_lowdensity", "fig3_low")).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "preset"));
        let errs = parse_config(&format!("colour = 1\n{MINIMAL}")).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "colour" && e.message.contains("unknown key")));
    }

    #[test]
    fn sweep_over_benchmark_densities() {
        let doc = format!(
            "{PRESET_DOC}\n[sweep]\naxis = \"density\"\nvalues = [\"2.65e21 m^-3\", \"1.33e22 m^-3\", \"3.7e22 m^-3\"]\n"
        );
        let c = parse_config(&doc).unwrap();
        let kids = c.sweep_children().unwrap();
        assert_eq!(kids.len(), 3);
        for ((v, k), rho3) in kids.iter().zip(BENCHMARK_DENSITIES) {
            assert!((k.physical.rho_1d - rho3 * 1e-10).abs() < 1e-6 * rho3 * 1e-10);
            assert_eq!(*v, k.physical.rho_1d);
        }
        assert_ne!(kids[0].1.seed, kids[1].1.seed);
        assert_eq!(parse_config(&emit(&c)).unwrap(), c);

        let empty = format!("{PRESET_DOC}\n[sweep]\naxis = \"kappa\"\nvalues = []\n");
        let errs = parse_config(&empty).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "sweep.values"));
    }

    #[test]
    fn oracle_only_document() {
        let doc = r#"
            mode = "compare"
            trajectories = 1000
            [oracle]
            g = "1 s^-1"
            gamma = "0.1 s^-1"
            n_bar = 26
            alpha0 = [10, 0]
            n_max = 230
            t_max = "0.785 s"
            n_out = 4
        "#;
        let c = parse_config(doc).unwrap();
        let o = c.oracle.as_ref().unwrap();
        assert_eq!(o.config.n_max, 230);
        assert_eq!(o.config.alpha0, C64::new(10.0, 0.0));
        assert_eq!(o.z_max, 5.0);
        assert_eq!(parse_config(&emit(&c)).unwrap(), c);

        let errs = parse_config(&doc.replace("n_max = 230", "n_max = 20")).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "oracle"), "{errs:?}");
        let errs = parse_config("mode = \"oracle\"").unwrap_err();
        assert!(errs.iter().any(|e| e.path == "oracle"));
    }
}
