//! Exact propagation of the spin-boson wavefunction on a truncated Fock space
//! and partial trace to the spin.
//!
//! Units: frequencies in `Δ`, times in `1/Δ`, `ħ = 1`.

mod checkpoint;
mod hamiltonian;
mod krylov;
mod trajectory;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use hamiltonian::{build_hamiltonian, HilbertSpaceSpec, SparseHamiltonian};
pub use krylov::{krylov_step, propagate, propagate_from, JointWaveFunction, KrylovSettings, StepStats};
pub use trajectory::{
    basis_amplitudes, convergence_study, run_basis_trajectories, run_trajectory, ConvergenceReport, RunHooks, TimeGrid,
    Trajectory, TrajectoryDiagnostics, TrajectorySet, BASIS_LABELS,
};

use thiserror::Error;

use crate::bloch::DensityMatrix;
use crate::scalar::{cplx, czero, norm_sqr, Real, C};

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("Hilbert space dimension {required} exceeds the allowed maximum {allowed}")]
    BudgetExceeded { required: usize, allowed: usize },
    #[error("invalid Hilbert space: {0}")]
    InvalidSpec(String),
    #[error("invalid propagation settings: {0}")]
    InvalidSettings(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("wavefunction norm is {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("initial spin state is not pure (largest eigenvalue {largest_eigenvalue})")]
    NotPure { largest_eigenvalue: f64 },
    #[error("Krylov step did not converge: error estimate {residual:e} > {tol:e} at dt = {dt:e}")]
    NonConvergence { dt: f64, residual: f64, tol: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Bloch(#[from] crate::bloch::BlochError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(a|↑⟩ + b|↓⟩) ⊗ |0, …, 0⟩`, normalised.
pub fn joint_state_from_amplitudes<T: Real>(
    spin: [C<T>; 2],
    spec: &HilbertSpaceSpec,
) -> Result<JointWaveFunction<T>, PropagatorError> {
    let n = (norm_sqr(spin[0]) + norm_sqr(spin[1])).sqrt();
    if !(n > T::zero()) {
        return Err(PropagatorError::NotNormalized { norm: n.as_f64() });
    }
    let inv = cplx(T::one() / n, T::zero());
    let mut amps = vec![czero(); spec.dimension()];
    amps[0] = spin[0] * inv;
    amps[spec.bath_dimension()] = spin[1] * inv;
    Ok(JointWaveFunction::from_raw(amps))
}

/// Pure spin state ⊗ bath vacuum.
///
/// Mixed spin states are rejected; they are handled by combining pure-state
/// trajectories, see [`Trajectory::combine`].
pub fn initial_joint_state<T: Real>(
    rho: &DensityMatrix<T>,
    spec: &HilbertSpaceSpec,
) -> Result<JointWaveFunction<T>, PropagatorError> {
    if rho.dim() != 2 {
        return Err(PropagatorError::DimensionMismatch {
            expected: 2,
            found: rho.dim(),
        });
    }
    let largest = *rho.eigenvalues().last().expect("2x2");
    if (largest - T::one()).magnitude() > T::lit(1e-10) {
        return Err(PropagatorError::NotPure {
            largest_eigenvalue: largest.as_f64(),
        });
    }
    let m = rho.matrix();
    // For ρ = |ψ⟩⟨ψ|, column j equals ψ ψⱼ*; pick the better conditioned one.
    let j = if m[(0, 0)].re >= m[(1, 1)].re { 0 } else { 1 };
    let s = cplx(m[(j, j)].re.sqrt(), T::zero());
    joint_state_from_amplitudes([m[(0, j)] / s, m[(1, j)] / s], spec)
}

/// `ρ_S = tr_E |ψ⟩⟨ψ|`.
pub fn reduced_density<T: Real>(psi: &JointWaveFunction<T>) -> DensityMatrix<T> {
    let a = psi.amplitudes();
    let b = a.len() / 2;
    let (up, down) = a.split_at(b);
    let mut r00 = T::zero();
    let mut r11 = T::zero();
    let mut r01 = czero::<T>();
    for (u, d) in up.iter().zip(down) {
        r00 += norm_sqr(*u);
        r11 += norm_sqr(*d);
        r01 += *u * d.conj();
    }
    let m = nalgebra::DMatrix::from_row_slice(2, 2, &[cplx(r00, T::zero()), r01, r01.conj(), cplx(r11, T::zero())]);
    DensityMatrix::from_matrix_unchecked(m)
}

/// Population at the highest Fock level, per mode and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffPopulation<T> {
    pub per_mode: Vec<T>,
    /// Weight of basis states with any mode at its top level.
    pub any: T,
}

impl<T: Real> CutoffPopulation<T> {
    pub fn max_per_mode(&self) -> T {
        self.per_mode.iter().fold(T::zero(), |a, &b| a.max_of(b))
    }
}

/// Default threshold above which a truncation is flagged.
pub const CUTOFF_THRESHOLD: f64 = 1e-6;

pub fn cutoff_monitor<T: Real>(psi: &JointWaveFunction<T>, spec: &HilbertSpaceSpec) -> CutoffPopulation<T> {
    let b = spec.bath_dimension();
    let cut = spec.cutoffs();
    let mut per_mode = vec![T::zero(); cut.len()];
    let mut any = T::zero();
    let mut occ = vec![0usize; cut.len()];
    for f in 0..b {
        let p = norm_sqr(psi.amplitudes()[f]) + norm_sqr(psi.amplitudes()[b + f]);
        let mut top = false;
        for (n, &k) in occ.iter().enumerate() {
            if k + 1 == cut[n] {
                per_mode[n] += p;
                top = true;
            }
        }
        if top {
            any += p;
        }
        // Mixed-radix increment, last mode fastest.
        for n in (0..cut.len()).rev() {
            occ[n] += 1;
            if occ[n] < cut[n] {
                break;
            }
            occ[n] = 0;
        }
    }
    CutoffPopulation { per_mode, any }
}
