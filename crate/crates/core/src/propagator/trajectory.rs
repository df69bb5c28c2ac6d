use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{
    build_hamiltonian, cutoff_monitor, joint_state_from_amplitudes, propagate_from, reduced_density, Checkpoint,
    HilbertSpaceSpec, KrylovSettings, PropagatorError, SparseHamiltonian, StepStats, CUTOFF_THRESHOLD,
};
use crate::bloch::{DensityMatrix, Tolerances};
use crate::scalar::{cplx, czero, Real, C};
use crate::spectral::DiscretizedBath;

/// Uniform grid `t_k = k·dt`, recorded every `stride` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    pub dt: T,
    pub steps: usize,
    pub stride: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(dt: T, steps: usize, stride: usize) -> Result<Self, PropagatorError> {
        if !(dt > T::zero()) || stride == 0 {
            return Err(PropagatorError::InvalidSettings(format!(
                "time grid needs dt > 0 and stride >= 1 (got dt={dt:?}, stride={stride})"
            )));
        }
        Ok(Self { dt, steps, stride })
    }

    pub fn recorded_steps(&self) -> impl Iterator<Item = usize> {
        (0..=self.steps).step_by(self.stride)
    }

    pub fn times(&self) -> Vec<T> {
        self.recorded_steps().map(|k| self.dt * T::from_usize_lossy(k)).collect()
    }

    pub fn final_time(&self) -> T {
        self.dt * T::from_usize_lossy(self.steps)
    }
}

/// Labels of the four reference initial states, in [`basis_amplitudes`] order.
pub const BASIS_LABELS: [&str; 4] = ["up", "down", "plus_x", "plus_y"];

/// `|↑⟩, |↓⟩, |+x⟩, |+y⟩`.
pub fn basis_amplitudes<T: Real>() -> [[C<T>; 2]; 4] {
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let one = cplx(T::one(), T::zero());
    [
        [one, czero()],
        [czero(), one],
        [cplx(s, T::zero()), cplx(s, T::zero())],
        [cplx(s, T::zero()), cplx(T::zero(), s)],
    ]
}

fn trajectory_tolerances<T: Real>() -> Tolerances<T> {
    Tolerances {
        hermitian: T::lit(1e-12),
        trace: T::lit(1e-8),
        positivity: T::lit(1e-8),
    }
}

/// Reduced spin states on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    label: String,
    times: Vec<T>,
    states: Vec<DensityMatrix<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(label: impl Into<String>, times: Vec<T>, states: Vec<DensityMatrix<T>>) -> Result<Self, PropagatorError> {
        if times.len() != states.len() {
            return Err(PropagatorError::DimensionMismatch {
                expected: times.len(),
                found: states.len(),
            });
        }
        if let Some(s) = states.iter().find(|s| s.dim() != 2) {
            return Err(PropagatorError::DimensionMismatch {
                expected: 2,
                found: s.dim(),
            });
        }
        Ok(Self {
            label: label.into(),
            times,
            states,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[DensityMatrix<T>] {
        &self.states
    }

    /// `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` at sample `k`.
    pub fn bloch(&self, k: usize) -> [T; 3] {
        let m = self.states[k].matrix();
        let two = T::lit(2.0);
        [two * m[(0, 1)].re, -two * m[(0, 1)].im, m[(0, 0)].re - m[(1, 1)].re]
    }

    pub fn sigma_z(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.bloch(k)[2]).collect()
    }

    /// Keeps samples with `t < t_end`; used when resuming from a checkpoint.
    pub fn truncate_before(&mut self, t_end: T) {
        let keep = self.times.iter().take_while(|&&t| t < t_end).count();
        self.times.truncate(keep);
        self.states.truncate(keep);
    }

    /// Appends the samples of `other`, which must start after `self` ends.
    pub fn extend(&mut self, other: Trajectory<T>) {
        self.times.extend(other.times);
        self.states.extend(other.states);
    }

    /// `Σ wᵢ ρᵢ(t)` for trajectories on a common grid.
    pub fn combine(label: impl Into<String>, parts: &[(&Self, T)]) -> Result<Self, PropagatorError> {
        let first = parts
            .first()
            .ok_or_else(|| PropagatorError::InvalidSettings("nothing to combine".into()))?
            .0;
        if parts.iter().any(|(p, _)| p.times != first.times) {
            return Err(PropagatorError::InvalidSettings("trajectories have different time grids".into()));
        }
        let states = (0..first.len())
            .map(|k| {
                let at: Vec<(&DensityMatrix<T>, T)> = parts.iter().map(|(p, w)| (&p.states[k], *w)).collect();
                DensityMatrix::mix(&at)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(label, first.times.clone(), states)
    }

    /// Columns `t, rho00, rho01_re, rho01_im, rho11, sx, sy, sz`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PropagatorError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "rho00", "rho01_re", "rho01_im", "rho11", "sx", "sy", "sz"])?;
        for (k, (t, rho)) in self.times.iter().zip(&self.states).enumerate() {
            let m = rho.matrix();
            let [sx, sy, sz] = self.bloch(k);
            let row = [*t, m[(0, 0)].re, m[(0, 1)].re, m[(0, 1)].im, m[(1, 1)].re, sx, sy, sz];
            wtr.write_record(row.iter().map(|v| format!("{:e}", v.as_f64())))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(label: impl Into<String>, r: R) -> Result<Self, PropagatorError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize, PropagatorError> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| PropagatorError::InvalidSettings(format!("trajectory CSV lacks column {name}")))
        };
        let idx = [col("t")?, col("rho00")?, col("rho01_re")?, col("rho01_im")?, col("rho11")?];
        let tol = trajectory_tolerances();
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut v = [T::zero(); 5];
            for (slot, &i) in v.iter_mut().zip(&idx) {
                let x: f64 = rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
                    PropagatorError::InvalidSettings(format!("trajectory CSV row {}: bad number", line + 1))
                })?;
                *slot = T::lit(x);
            }
            let off = cplx(v[2], v[3]);
            let m = DMatrix::from_row_slice(2, 2, &[cplx(v[1], T::zero()), off, off.conj(), cplx(v[4], T::zero())]);
            times.push(v[0]);
            states.push(DensityMatrix::new(m, &tol)?);
        }
        Self::new(label, times, states)
    }
}

/// Self-checks collected while propagating one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDiagnostics<T> {
    pub stats: StepStats<T>,
    /// `max |‖ψ(t)‖ − 1|` over recorded samples.
    pub max_norm_drift: T,
    /// `max |E(t) − E(0)| / max(|E(0)|, 1)`.
    pub max_energy_drift: T,
    /// Largest top-level population per mode over the run.
    pub max_cutoff_population: Vec<T>,
}

impl<T: Real> TrajectoryDiagnostics<T> {
    pub fn cutoff_ok(&self) -> bool {
        self.max_cutoff_population.iter().all(|&p| p <= T::lit(CUTOFF_THRESHOLD))
    }
}

/// Optional checkpointing for [`run_trajectory`].
#[derive(Debug)]
pub struct RunHooks<'a, T> {
    /// Continue from this state instead of the bath vacuum.
    pub resume: Option<Checkpoint<T>>,
    /// Write a checkpoint to this path every `n` steps.
    pub checkpoint: Option<(&'a Path, usize)>,
}

impl<T> Default for RunHooks<'_, T> {
    fn default() -> Self {
        Self {
            resume: None,
            checkpoint: None,
        }
    }
}

/// Propagates `spin ⊗ vacuum` and records `ρ_S` on `grid`.
pub fn run_trajectory<T: Real>(
    h: &SparseHamiltonian<T>,
    spec: &HilbertSpaceSpec,
    spin: [C<T>; 2],
    grid: &TimeGrid<T>,
    settings: &KrylovSettings<T>,
    label: &str,
    hooks: RunHooks<'_, T>,
) -> Result<(Trajectory<T>, TrajectoryDiagnostics<T>), PropagatorError> {
    let (psi, start) = match hooks.resume {
        Some(c) => {
            if c.psi.dimension() != spec.dimension() {
                return Err(PropagatorError::DimensionMismatch {
                    expected: spec.dimension(),
                    found: c.psi.dimension(),
                });
            }
            if c.step > grid.steps {
                return Err(PropagatorError::Checkpoint(format!(
                    "checkpoint at step {} is past the end of the run ({} steps)",
                    c.step, grid.steps
                )));
            }
            (c.psi, c.step)
        }
        None => (joint_state_from_amplitudes(spin, spec)?, 0),
    };
    let e0 = h.expectation(psi.amplitudes());
    let e_scale = e0.magnitude().max_of(T::one());
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut norm_drift = T::zero();
    let mut energy_drift = T::zero();
    let mut cutoff = vec![T::zero(); spec.modes()];
    let mut observer = |k: usize, t: T, psi: &super::JointWaveFunction<T>| -> Result<(), PropagatorError> {
        if k.is_multiple_of(grid.stride) {
            times.push(t);
            states.push(reduced_density(psi));
            norm_drift = norm_drift.max_of((psi.norm() - T::one()).magnitude());
            energy_drift = energy_drift.max_of((h.expectation(psi.amplitudes()) - e0).magnitude() / e_scale);
            for (c, p) in cutoff.iter_mut().zip(cutoff_monitor(psi, spec).per_mode) {
                *c = c.max_of(p);
            }
        }
        if let Some((path, every)) = hooks.checkpoint {
            if every > 0 && k > start && k.is_multiple_of(every) {
                Checkpoint {
                    step: k,
                    t,
                    psi: psi.clone(),
                }
                .save(path)?;
            }
        }
        Ok(())
    };
    let (_, stats) = propagate_from(psi, h, start, grid.dt, grid.steps - start, settings, &mut observer)?;
    let diagnostics = TrajectoryDiagnostics {
        stats,
        max_norm_drift: norm_drift,
        max_energy_drift: energy_drift,
        max_cutoff_population: cutoff,
    };
    if !diagnostics.cutoff_ok() {
        log::warn!(
            "{label}: top Fock level population {:e} exceeds {CUTOFF_THRESHOLD:e}; cutoff may be too small",
            diagnostics.max_cutoff_population.iter().fold(T::zero(), |a, &b| a.max_of(b)).as_f64()
        );
    }
    Ok((Trajectory::new(label, times, states)?, diagnostics))
}

/// The four reference trajectories and their diagnostics.
#[derive(Debug, Clone)]
pub struct TrajectorySet<T: Real> {
    pub trajectories: Vec<Trajectory<T>>,
    pub diagnostics: Vec<TrajectoryDiagnostics<T>>,
}

impl<T: Real> TrajectorySet<T> {
    pub fn initial_states(&self) -> Vec<DensityMatrix<T>> {
        self.trajectories.iter().map(|t| t.states()[0].clone()).collect()
    }

    pub fn max_norm_drift(&self) -> T {
        self.diagnostics.iter().fold(T::zero(), |a, d| a.max_of(d.max_norm_drift))
    }

    pub fn max_energy_drift(&self) -> T {
        self.diagnostics.iter().fold(T::zero(), |a, d| a.max_of(d.max_energy_drift))
    }

    pub fn cutoff_ok(&self) -> bool {
        self.diagnostics.iter().all(TrajectoryDiagnostics::cutoff_ok)
    }
}

/// Propagates `|↑⟩, |↓⟩, |+x⟩, |+y⟩` from the bath vacuum, concurrently.
pub fn run_basis_trajectories<T: Real>(
    bath: &DiscretizedBath<T>,
    delta: T,
    spec: &HilbertSpaceSpec,
    grid: &TimeGrid<T>,
    settings: &KrylovSettings<T>,
) -> Result<TrajectorySet<T>, PropagatorError> {
    let h = build_hamiltonian(bath, delta, spec)?;
    let runs = basis_amplitudes::<T>()
        .into_par_iter()
        .zip(BASIS_LABELS)
        .map(|(spin, label)| run_trajectory(&h, spec, spin, grid, settings, label, RunHooks::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let (trajectories, diagnostics) = runs.into_iter().unzip();
    Ok(TrajectorySet {
        trajectories,
        diagnostics,
    })
}

/// Outcome of re-running with every cutoff doubled.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<T> {
    pub max_sigma_z_change: T,
    pub threshold: T,
    pub dimension: usize,
    pub doubled_dimension: usize,
}

impl<T: Real> ConvergenceReport<T> {
    pub fn converged(&self) -> bool {
        self.max_sigma_z_change < self.threshold
    }
}

/// Compares `⟨σz⟩(t)` against a run with all `dₙ` doubled.
pub fn convergence_study<T: Real>(
    bath: &DiscretizedBath<T>,
    delta: T,
    spec: &HilbertSpaceSpec,
    grid: &TimeGrid<T>,
    settings: &KrylovSettings<T>,
    spin: [C<T>; 2],
    threshold: T,
) -> Result<ConvergenceReport<T>, PropagatorError> {
    let doubled = spec.doubled()?;
    let run = |s: &HilbertSpaceSpec| -> Result<Vec<T>, PropagatorError> {
        let h = build_hamiltonian(bath, delta, s)?;
        let (traj, _) = run_trajectory(&h, s, spin, grid, settings, "convergence", RunHooks::default())?;
        Ok(traj.sigma_z())
    };
    let (a, b) = rayon::join(|| run(spec), || run(&doubled));
    let (a, b) = (a?, b?);
    let max_change = a
        .iter()
        .zip(&b)
        .fold(T::zero(), |m, (x, y)| m.max_of((*x - *y).magnitude()));
    Ok(ConvergenceReport {
        max_sigma_z_change: max_change,
        threshold,
        dimension: spec.dimension(),
        doubled_dimension: doubled.dimension(),
    })
}
