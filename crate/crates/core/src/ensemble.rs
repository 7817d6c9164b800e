//! Trajectory ensembles with streaming, mergeable statistics.
//!
//! Trajectories are grouped into fixed blocks of [`BLOCK_SIZE`] indices.
//! Each block is reduced in index order by whichever worker picks it up, and
//! the reducer merges blocks strictly in block order. The floating-point
//! summation order therefore depends only on `n_traj`, never on the worker
//! count or scheduling.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::Method;
use crate::propagator::{run_trajectory, Simulation, TrajectoryRecord};
use crate::stats::PowerSums;

pub const BLOCK_SIZE: usize = 256;
/// Sub-batches for the cross-check on sampling errors (trajectory index mod 32).
pub const SUBBATCHES: usize = 32;
/// Largest excluded fraction a run may have and still pass quality control.
pub const MAX_DIVERGED_FRACTION: f64 = 1e-3;

/// Moments at one recorded z.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceStats {
    /// Degree-4 sums over (Re P, Im P, Re Q, Im Q) minus the classical reference.
    pub quad: PowerSums,
    /// Degree-2 sums over (Re F, Im F) minus the classical flux.
    pub flux: PowerSums,
    /// Degree-2 quadrature sums per sub-batch.
    pub batches: Vec<PowerSums>,
}

impl SliceStats {
    fn new() -> Self {
        SliceStats {
            quad: PowerSums::new(4, 4),
            flux: PowerSums::new(2, 2),
            batches: (0..SUBBATCHES).map(|_| PowerSums::new(4, 2)).collect(),
        }
    }

    fn empty_like(&self) -> Self {
        SliceStats {
            quad: self.quad.empty_like(),
            flux: self.flux.empty_like(),
            batches: self.batches.iter().map(|b| b.empty_like()).collect(),
        }
    }

    fn merge(&mut self, other: &SliceStats) {
        self.quad.merge(&other.quad);
        self.flux.merge(&other.flux);
        for (a, b) in self.batches.iter_mut().zip(&other.batches) {
            a.merge(b);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub method: Method,
    pub z: Vec<f64>,
    /// Classical reference values the samples were shifted by.
    pub reference_p: Vec<C64>,
    pub reference_flux: Vec<f64>,
    pub n_tau: usize,
    /// False when every stochastic term was disabled; the TWA estimator then
    /// adds back the vacuum its initial noise would have carried.
    pub noise: bool,
    pub slices: Vec<SliceStats>,
    pub n_requested: u64,
    pub n_diverged: u64,
    /// Indices of the first few diverged trajectories, for diagnostics.
    pub diverged_examples: Vec<u64>,
    pub wall_clock_s: f64,
}

impl EnsembleStats {
    pub fn new(sim: &Simulation, method: Method) -> Self {
        let proto = SliceStats::new();
        EnsembleStats {
            method,
            z: sim.output_z(),
            reference_p: sim.reference.p.clone(),
            reference_flux: sim.reference.flux.clone(),
            n_tau: sim.lattice.n_tau(),
            noise: sim.options.noise,
            slices: (0..sim.n_output()).map(|_| proto.empty_like()).collect(),
            n_requested: 0,
            n_diverged: 0,
            diverged_examples: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    fn empty_like(&self) -> Self {
        EnsembleStats {
            slices: self.slices.iter().map(|s| s.empty_like()).collect(),
            n_requested: 0,
            n_diverged: 0,
            diverged_examples: Vec::new(),
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }

    pub fn n_accepted(&self) -> u64 {
        self.n_requested - self.n_diverged
    }

    pub fn diverged_fraction(&self) -> f64 {
        if self.n_requested == 0 {
            0.0
        } else {
            self.n_diverged as f64 / self.n_requested as f64
        }
    }

    /// Diverged fraction within the quality limit.
    pub fn quality_ok(&self) -> bool {
        self.diverged_fraction() <= MAX_DIVERGED_FRACTION
    }

    /// Add one trajectory. Diverged trajectories are counted and excluded.
    pub fn push(&mut self, rec: &TrajectoryRecord) {
        self.n_requested += 1;
        if rec.diverged {
            self.n_diverged += 1;
            if self.diverged_examples.len() < 16 {
                self.diverged_examples.push(rec.index);
            }
            return;
        }
        let batch = (rec.index % SUBBATCHES as u64) as usize;
        for (k, (s, slice)) in rec.samples.iter().zip(self.slices.iter_mut()).enumerate() {
            let p = s.p - self.reference_p[k];
            let q = s.q - self.reference_p[k].conj();
            let x = [p.re, p.im, q.re, q.im];
            slice.quad.push(&x);
            slice.batches[batch].push(&x);
            slice.flux.push(&[s.flux.re - self.reference_flux[k], s.flux.im]);
        }
    }

    /// Plain addition of the sums; associative up to floating-point reassociation.
    pub fn merge(&mut self, other: &EnsembleStats) -> Result<()> {
        if self.method != other.method || self.slices.len() != other.slices.len() {
            return Err(Error::invalid("cannot merge statistics from different runs"));
        }
        for (a, b) in self.slices.iter_mut().zip(&other.slices) {
            a.merge(b);
        }
        self.n_requested += other.n_requested;
        self.n_diverged += other.n_diverged;
        for &i in &other.diverged_examples {
            if self.diverged_examples.len() < 16 {
                self.diverged_examples.push(i);
            }
        }
        self.wall_clock_s += other.wall_clock_s;
        Ok(())
    }
}

fn run_block(sim: &Simulation, method: Method, proto: &EnsembleStats, start: u64, end: u64) -> EnsembleStats {
    let mut stats = proto.empty_like();
    for i in start..end {
        stats.push(&run_trajectory(sim, method, i));
    }
    stats
}

/// Reduce trajectories `first..first + n` in fixed blocks on `workers`
/// threads. `merge` receives block results strictly in block order.
pub(crate) fn reduce_blocks<S, R, M>(first: usize, n: usize, workers: usize, run: R, mut merge: M) -> Result<()>
where
    S: Send,
    R: Fn(u64, u64) -> S + Sync,
    M: FnMut(S) -> Result<()>,
{
    if workers == 0 {
        return Err(Error::invalid("workers must be >= 1"));
    }
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    let bounds = |b: usize| {
        let s = first + b * BLOCK_SIZE;
        (s as u64, (s + BLOCK_SIZE).min(first + n) as u64)
    };
    if workers == 1 || n_blocks <= 1 {
        for b in 0..n_blocks {
            let (s, e) = bounds(b);
            merge(run(s, e))?;
        }
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, S)>();
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers.min(n_blocks) {
            let tx = tx.clone();
            let next = &next;
            let run = &run;
            let bounds = &bounds;
            scope.spawn(move || loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                if b >= n_blocks {
                    break;
                }
                let (s, e) = bounds(b);
                if tx.send((b, run(s, e))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut expected = 0;
        for (b, stats) in rx {
            pending.insert(b, stats);
            while let Some(stats) = pending.remove(&expected) {
                merge(stats)?;
                expected += 1;
            }
        }
        if expected != n_blocks {
            return Err(Error::invalid("a worker terminated before finishing its blocks"));
        }
        Ok(())
    })
}

/// Run `n_traj` trajectories on `workers` threads.
pub fn run_ensemble(sim: &Simulation, method: Method, n_traj: usize, workers: usize) -> Result<EnsembleStats> {
    run_ensemble_range(sim, method, 0, n_traj, workers)
}

/// Run trajectories `first..first + n_traj`. Batches with disjoint ranges can
/// be merged afterwards.
pub fn run_ensemble_range(
    sim: &Simulation,
    method: Method,
    first: usize,
    n_traj: usize,
    workers: usize,
) -> Result<EnsembleStats> {
    if n_traj < 2 {
        return Err(Error::invalid("n_traj must be >= 2"));
    }
    let started = Instant::now();
    let proto = EnsembleStats::new(sim, method);
    let mut total = proto.empty_like();
    reduce_blocks(
        first,
        n_traj,
        workers,
        |s, e| run_block(sim, method, &proto, s, e),
        |block| total.merge(&block),
    )?;
    total.wall_clock_s = started.elapsed().as_secs_f64();
    if total.n_accepted() == 0 {
        return Err(Error::AllDiverged(n_traj));
    }
    Ok(total)
}
