//! Run orchestration and output files.
//!
//! Every CSV number is written as `{:.16e}` (17 significant digits), and the
//! ensembles reduce in a worker-independent order, so the CSV bytes depend
//! only on the configuration and seed. `manifest.json` additionally records
//! wall-clock times and is therefore not byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{emit, Mode, RunConfig};
use crate::ensemble::{run_ensemble, EnsembleStats, MAX_DIVERGED_FRACTION};
use crate::error::{Error, Result};
use crate::model::{sech_photon_number, Method};
use crate::observables::{mean_flux, squeezing_table, FluxEstimate, SliceObservables};
use crate::oracle::{evolve_master, DensityMatrix, OracleTrajectory};
use crate::propagator::{absorption_lengths, Simulation};
use crate::single_cell::{compare_ensembles, run_single_cell, ComparisonReport};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: Method,
    pub stats: EnsembleStats,
    pub table: Vec<SliceObservables>,
    pub flux: Vec<FluxEstimate>,
}

/// TWA − PPR difference of S_min at one z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationRow {
    pub z: f64,
    pub s_ppr: f64,
    pub err_ppr: f64,
    pub s_twa: f64,
    pub err_twa: f64,
    pub deviation: f64,
    /// Combined standard error √(σ_ppr² + σ_twa²).
    pub sigma: f64,
}

impl DeviationRow {
    pub fn in_sigma(&self) -> f64 {
        if self.sigma > 0.0 {
            self.deviation.abs() / self.sigma
        } else if self.deviation == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn deviation_rows(ppr: &[SliceObservables], twa: &[SliceObservables]) -> Result<Vec<DeviationRow>> {
    if ppr.len() != twa.len() {
        return Err(Error::invalid(format!(
            "PPR and TWA tables have different lengths ({} vs {})",
            ppr.len(),
            twa.len()
        )));
    }
    ppr.iter()
        .zip(twa)
        .map(|(p, t)| {
            if (p.z - t.z).abs() > 1e-12 * p.z.abs().max(1.0) {
                return Err(Error::invalid(format!("z mismatch: {} vs {}", p.z, t.z)));
            }
            Ok(DeviationRow {
                z: p.z,
                s_ppr: p.s_min,
                err_ppr: p.s_min_error,
                s_twa: t.s_min,
                err_twa: t.s_min_error,
                deviation: t.s_min - p.s_min,
                sigma: p.s_min_error.hypot(t.s_min_error),
            })
        })
        .collect()
}

/// Inverse-variance weighted mean |TWA − PPR| over rows with z > 0.
pub fn pooled_deviation(rows: &[DeviationRow]) -> (f64, f64) {
    let (mut sw, mut swx) = (0.0, 0.0);
    for r in rows.iter().filter(|r| r.z > 0.0 && r.sigma > 0.0) {
        let w = 1.0 / (r.sigma * r.sigma);
        sw += w;
        swx += w * r.deviation.abs();
    }
    if sw == 0.0 {
        (0.0, f64::INFINITY)
    } else {
        (swx / sw, 1.0 / sw.sqrt())
    }
}

pub fn run_methods(cfg: &RunConfig, sim: &Simulation) -> Result<Vec<MethodResult>> {
    cfg.method
        .methods()
        .into_iter()
        .map(|method| {
            let n = cfg.trajectories_for(method);
            log::info!("{}: {} trajectories on {} workers", method.as_str(), n, cfg.workers);
            let stats = run_ensemble(sim, method, n, cfg.workers)?;
            log::info!(
                "{}: {:.1} s, diverged fraction {:.2e}",
                method.as_str(),
                stats.wall_clock_s,
                stats.diverged_fraction()
            );
            let table = squeezing_table(&stats, cfg.options.n_theta)?;
            let flux = mean_flux(&stats);
            Ok(MethodResult { method, stats, table, flux })
        })
        .collect()
}

pub fn squeezing_csv(results: &[MethodResult]) -> String {
    let mut s = String::from("z,theta_star,S_min,S_err,method\n");
    for r in results {
        for row in &r.table {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                num(row.z),
                num(row.theta_star),
                num(row.s_min),
                num(row.s_min_error),
                r.method.as_str()
            );
        }
    }
    s
}

pub fn quadratures_csv(results: &[MethodResult]) -> String {
    let mut s = String::from("z,theta,S,S_err,method\n");
    for r in results {
        for row in &r.table {
            for e in &row.per_theta {
                let _ = writeln!(s, "{},{},{},{},{}", num(row.z), num(e.theta), num(e.s), num(e.std_error), r.method.as_str());
            }
        }
    }
    s
}

pub fn flux_csv(results: &[MethodResult]) -> String {
    let mut s = String::from("z,photon_number,err,method\n");
    for r in results {
        for (z, f) in r.stats.z.iter().zip(&r.flux) {
            let _ = writeln!(s, "{},{},{},{}", num(*z), num(f.mean), num(f.std_error), r.method.as_str());
        }
    }
    s
}

pub fn comparison_csv(rows: &[DeviationRow]) -> String {
    let mut s = String::from("z,S_ppr,S_ppr_err,S_twa,S_twa_err,deviation,sigma,deviation_in_sigma\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            num(r.z),
            num(r.s_ppr),
            num(r.err_ppr),
            num(r.s_twa),
            num(r.err_twa),
            num(r.deviation),
            num(r.sigma),
            num(r.in_sigma())
        );
    }
    s
}

pub fn oracle_csv(traj: &OracleTrajectory) -> String {
    let mut s = String::from("t,photon_number,a_re,a_im,p_excited,normal_variance_0,normal_variance_pi2\n");
    for smp in &traj.samples {
        let e = &smp.expectations;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(smp.t),
            num(e.n),
            num(e.a.re),
            num(e.a.im),
            num(e.p_excited),
            num(e.normal_variance(0.0)),
            num(e.normal_variance(std::f64::consts::FRAC_PI_2))
        );
    }
    s
}

pub fn compare_report_csv(report: &ComparisonReport) -> String {
    let mut s = String::from("method,observable,t,exact,estimate,std_error,z_score,gated,pass\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.observable,
            num(r.t),
            num(r.exact),
            num(r.estimate),
            num(r.std_error),
            num(r.z),
            r.gated,
            r.pass
        );
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodManifest {
    pub method: Method,
    pub trajectories: u64,
    pub accepted: u64,
    pub diverged: u64,
    pub diverged_fraction: f64,
    pub diverged_examples: Vec<u64>,
    pub quality_ok: bool,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Derived {
    pub g_cell: f64,
    /// Atoms per cell, N_n, one entry per frequency class.
    pub atoms_per_cell: Vec<f64>,
    pub implied_photon_number: f64,
    pub absorption_lengths: f64,
    pub n_tau: usize,
    pub d_tau: f64,
    pub d_z: f64,
    pub tau_substeps: usize,
    pub lattice_warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub code_version: String,
    pub mode: Mode,
    /// The resolved configuration; feeding it back reproduces the run.
    pub config_toml: String,
    pub config: RunConfig,
    pub derived: Option<Derived>,
    pub methods: Vec<MethodManifest>,
    pub pass: bool,
    pub failures: Vec<String>,
}

impl RunManifest {
    fn new(cfg: &RunConfig) -> Self {
        RunManifest {
            code_version: CODE_VERSION.to_string(),
            mode: cfg.mode,
            config_toml: emit(cfg),
            config: cfg.clone(),
            derived: None,
            methods: vec![],
            pass: true,
            failures: vec![],
        }
    }

    fn fail(&mut self, why: String) {
        log::error!("{why}");
        self.pass = false;
        self.failures.push(why);
    }
}

pub fn derived(sim: &Simulation) -> Derived {
    Derived {
        g_cell: sim.lattice.g_cell,
        atoms_per_cell: sim.lattice.atoms_per_cell.clone(),
        implied_photon_number: sech_photon_number(&sim.physical.pulse, sim.physical.g_phi),
        absorption_lengths: absorption_lengths(&sim.physical),
        n_tau: sim.lattice.n_tau(),
        d_tau: sim.lattice.d_tau(),
        d_z: sim.lattice.d_z,
        tau_substeps: sim.scheme.tau_substeps,
        lattice_warnings: sim.lattice.warnings.clone(),
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub dir: PathBuf,
}

impl RunOutcome {
    pub fn pass(&self) -> bool {
        self.manifest.pass
    }
}

/// Run `cfg` in its own mode and write the outputs under `dir`.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(dir)?;
    let mut manifest = RunManifest::new(cfg);
    match cfg.mode {
        Mode::Propagate => propagate(cfg, dir, &mut manifest)?,
        Mode::Oracle => {
            oracle_only(cfg, dir)?;
        }
        Mode::Compare => compare(cfg, dir, &mut manifest)?,
    }
    write_atomic(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(RunOutcome { manifest, dir: dir.to_path_buf() })
}

fn propagate(cfg: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let sim = cfg.simulation()?;
    manifest.derived = Some(derived(&sim));
    let results = run_methods(cfg, &sim)?;
    for r in &results {
        let st = &r.stats;
        manifest.methods.push(MethodManifest {
            method: r.method,
            trajectories: st.n_requested,
            accepted: st.n_accepted(),
            diverged: st.n_diverged,
            diverged_fraction: st.diverged_fraction(),
            diverged_examples: st.diverged_examples.clone(),
            quality_ok: st.quality_ok(),
            wall_clock_s: st.wall_clock_s,
        });
        if !st.quality_ok() {
            manifest.fail(format!(
                "{}: diverged fraction {:.3e} exceeds {:.1e}",
                r.method.as_str(),
                st.diverged_fraction(),
                MAX_DIVERGED_FRACTION
            ));
        }
    }
    write_atomic(&dir.join("squeezing.csv"), &squeezing_csv(&results))?;
    write_atomic(&dir.join("quadratures.csv"), &quadratures_csv(&results))?;
    write_atomic(&dir.join("flux.csv"), &flux_csv(&results))?;
    if let (Some(p), Some(t)) = (
        results.iter().find(|r| r.method == Method::Ppr),
        results.iter().find(|r| r.method == Method::Twa),
    ) {
        write_atomic(&dir.join("comparison.csv"), &comparison_csv(&deviation_rows(&p.table, &t.table)?))?;
    }
    Ok(())
}

fn oracle_spec(cfg: &RunConfig) -> Result<&crate::config::OracleSpec> {
    cfg.oracle
        .as_ref()
        .ok_or_else(|| Error::invalid("oracle and compare modes need an [oracle] section"))
}

fn oracle_only(cfg: &RunConfig, dir: &Path) -> Result<OracleTrajectory> {
    let spec = oracle_spec(cfg)?;
    let c = &spec.config;
    let traj = evolve_master(c, &DensityMatrix::coherent(c.alpha0, c.n_max, false))?;
    write_atomic(&dir.join("oracle.csv"), &oracle_csv(&traj))?;
    Ok(traj)
}

fn compare(cfg: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let spec = oracle_spec(cfg)?;
    let exact = oracle_only(cfg, dir)?;
    let cell = spec.single_cell(&cfg.options);
    let mut ensembles = vec![];
    for method in cfg.method.methods() {
        let n = cfg.trajectories_for(method);
        let started = std::time::Instant::now();
        let e = run_single_cell(&cell, method, n, cfg.seed, cfg.workers)?;
        let frac = e.diverged_fraction();
        manifest.methods.push(MethodManifest {
            method,
            trajectories: e.n_requested,
            accepted: e.n_accepted(),
            diverged: e.n_diverged,
            diverged_fraction: frac,
            diverged_examples: vec![],
            quality_ok: frac <= MAX_DIVERGED_FRACTION,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
        if frac > MAX_DIVERGED_FRACTION {
            manifest.fail(format!("{}: diverged fraction {:.3e} exceeds {:.1e}", method.as_str(), frac, MAX_DIVERGED_FRACTION));
        }
        ensembles.push(e);
    }
    let refs: Vec<_> = ensembles.iter().collect();
    let report = compare_ensembles(&exact, &refs, &spec.tolerances())?;
    write_atomic(&dir.join("compare_report.csv"), &compare_report_csv(&report))?;
    if !report.pass {
        manifest.fail(format!("oracle comparison failed: {}", report.note));
    }
    Ok(())
}

/// Run every sweep child in `dir/sweep_NNN` and index them in
/// `sweep_index.csv`. A failing child does not stop the others.
pub fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<Vec<std::result::Result<RunOutcome, String>>> {
    let children = cfg.sweep_children()?;
    let axis = cfg.sweep.as_ref().map(|s| s.axis.as_str()).unwrap_or_default();
    fs::create_dir_all(dir)?;
    let mut index = String::from("index,axis,value,seed,directory,status\n");
    let mut outcomes = vec![];
    for (i, (value, child)) in children.iter().enumerate() {
        let name = format!("sweep_{i:03}");
        log::info!("sweep child {name}: {axis} = {value:e}");
        let res = run(child, &dir.join(&name)).map_err(|e| e.to_string());
        let status = match &res {
            Ok(o) if o.pass() => "ok".to_string(),
            Ok(o) => format!("failed: {}", o.manifest.failures.join("; ")),
            Err(e) => format!("error: {e}"),
        };
        let _ = writeln!(index, "{i},{axis},{},{},{name},\"{}\"", num(*value), child.seed, status.replace('"', "'"));
        outcomes.push(res);
    }
    write_atomic(&dir.join("sweep_index.csv"), &index)?;
    Ok(outcomes)
}
