use nalgebra::{DMatrix, SymmetricEigen};

use super::{PropagatorError, SparseHamiltonian};
use crate::scalar::{cplx, czero, expi, norm_sqr, Real, C};

/// Joint spin ⊗ bath amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct JointWaveFunction<T> {
    amps: Vec<C<T>>,
}

impl<T: Real> JointWaveFunction<T> {
    /// Accepts amplitudes whose norm is within `tol` of one.
    pub fn new(amps: Vec<C<T>>, tol: T) -> Result<Self, PropagatorError> {
        let psi = Self { amps };
        let n = psi.norm();
        if (n - T::one()).magnitude() > tol {
            return Err(PropagatorError::NotNormalized { norm: n.as_f64() });
        }
        Ok(psi)
    }

    pub(crate) fn from_raw(amps: Vec<C<T>>) -> Self {
        Self { amps }
    }

    pub fn dimension(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amps
    }

    pub fn norm(&self) -> T {
        vec_norm(&self.amps)
    }
}

fn vec_norm<T: Real>(v: &[C<T>]) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + norm_sqr(*z)).sqrt()
}

fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovSettings<T> {
    /// Maximum Krylov subspace dimension `m ≥ 2`.
    pub krylov_dim: usize,
    /// Bound on the a-posteriori error estimate of each applied substep.
    pub tol: T,
    /// How often a step may be halved before giving up.
    pub max_halvings: u32,
}

impl<T: Real> Default for KrylovSettings<T> {
    fn default() -> Self {
        Self {
            krylov_dim: 30,
            tol: T::lit(1e-11),
            max_halvings: 20,
        }
    }
}

/// Accumulated diagnostics of a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats<T> {
    pub steps: usize,
    pub substeps: usize,
    pub max_error_estimate: T,
}

impl<T: Real> Default for StepStats<T> {
    fn default() -> Self {
        Self {
            steps: 0,
            substeps: 0,
            max_error_estimate: T::zero(),
        }
    }
}

struct Lanczos<T: Real> {
    basis: Vec<Vec<C<T>>>,
    eig: SymmetricEigen<T, nalgebra::Dyn>,
    /// Residual coupling `β_m`; zero after a lucky breakdown.
    beta_last: T,
    scale: T,
}

impl<T: Real> Lanczos<T> {
    fn build(h: &SparseHamiltonian<T>, psi: &[C<T>], m: usize) -> Self {
        let scale = vec_norm(psi);
        let inv = cplx(T::one() / scale, T::zero());
        let mut basis: Vec<Vec<C<T>>> = vec![psi.iter().map(|z| *z * inv).collect()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<T> = Vec::with_capacity(m);
        let mut w = vec![czero(); psi.len()];
        // Relative to ‖H‖ so that breakdown detection is scale-free.
        let breakdown = T::default_epsilon() * T::lit(64.0) * h.norm_bound().max_of(T::one());
        let mut beta_last = T::zero();
        for j in 0..m {
            h.apply(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // Full reorthogonalisation, two passes.
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= *vi * c);
                }
            }
            let b = vec_norm(&w);
            if b <= breakdown {
                break;
            }
            if j + 1 == m {
                beta_last = b;
                break;
            }
            beta.push(b);
            let inv = cplx(T::one() / b, T::zero());
            basis.push(w.iter().map(|z| *z * inv).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i == j + 1 {
                beta[j]
            } else if j == i + 1 {
                beta[i]
            } else {
                T::zero()
            }
        });
        basis.truncate(k);
        Self {
            basis,
            eig: SymmetricEigen::new(t),
            beta_last,
            scale,
        }
    }

    /// Coefficients of `e^{−iTτ} e₁`.
    fn coefficients(&self, tau: T) -> Vec<C<T>> {
        let q = &self.eig.eigenvectors;
        let k = q.nrows();
        let phase: Vec<C<T>> = (0..k)
            .map(|l| expi(-self.eig.eigenvalues[l] * tau) * q[(0, l)])
            .collect();
        (0..k)
            .map(|i| (0..k).fold(czero(), |acc, l| acc + phase[l] * q[(i, l)]))
            .collect()
    }

    fn error_estimate(&self, y: &[C<T>]) -> T {
        self.beta_last * norm_sqr(*y.last().expect("non-empty")).sqrt() * self.scale
    }

    fn combine(&self, y: &[C<T>], out: &mut [C<T>]) {
        out.iter_mut().for_each(|z| *z = czero());
        for (v, c) in self.basis.iter().zip(y) {
            let c = *c * self.scale;
            out.iter_mut().zip(v).for_each(|(o, vi)| *o += *vi * c);
        }
    }
}

/// Advances `psi` by `e^{−iHdt}`, splitting `dt` until every substep's error
/// estimate `β_m |y_m|` is below `settings.tol`.
pub fn krylov_step<T: Real>(
    h: &SparseHamiltonian<T>,
    psi: &mut [C<T>],
    dt: T,
    settings: &KrylovSettings<T>,
    stats: &mut StepStats<T>,
) -> Result<(), PropagatorError> {
    let mut remaining = dt;
    let eps = dt * T::lit(1e-12);
    while remaining > eps {
        let lz = Lanczos::build(h, psi, settings.krylov_dim);
        let mut tau = remaining;
        let mut y = lz.coefficients(tau);
        let mut err = lz.error_estimate(&y);
        let mut halvings = 0;
        while err > settings.tol {
            if halvings == settings.max_halvings {
                return Err(PropagatorError::NonConvergence {
                    dt: tau.as_f64(),
                    residual: err.as_f64(),
                    tol: settings.tol.as_f64(),
                });
            }
            tau *= T::lit(0.5);
            halvings += 1;
            y = lz.coefficients(tau);
            err = lz.error_estimate(&y);
        }
        lz.combine(&y, psi);
        stats.substeps += 1;
        stats.max_error_estimate = stats.max_error_estimate.max_of(err);
        remaining -= tau;
    }
    stats.steps += 1;
    Ok(())
}

/// Applies `steps` time steps of length `dt`, calling `observer(k, t_k, ψ)`
/// for `k = 0, …, steps`. The state is never renormalised.
pub fn propagate<T: Real, F>(
    psi: JointWaveFunction<T>,
    h: &SparseHamiltonian<T>,
    dt: T,
    steps: usize,
    settings: &KrylovSettings<T>,
    mut observer: F,
) -> Result<(JointWaveFunction<T>, StepStats<T>), PropagatorError>
where
    F: FnMut(usize, T, &JointWaveFunction<T>) -> Result<(), PropagatorError>,
{
    propagate_from(psi, h, 0, dt, steps, settings, &mut observer)
}

/// Like [`propagate`], starting from step index `start` (for checkpoint
/// restarts); the observer sees `k = start, …, start + steps`.
pub fn propagate_from<T: Real, F>(
    mut psi: JointWaveFunction<T>,
    h: &SparseHamiltonian<T>,
    start: usize,
    dt: T,
    steps: usize,
    settings: &KrylovSettings<T>,
    observer: &mut F,
) -> Result<(JointWaveFunction<T>, StepStats<T>), PropagatorError>
where
    F: FnMut(usize, T, &JointWaveFunction<T>) -> Result<(), PropagatorError>,
{
    if !(dt > T::zero()) {
        return Err(PropagatorError::InvalidSettings(format!("dt must be positive, got {dt:?}")));
    }
    if settings.krylov_dim < 2 {
        return Err(PropagatorError::InvalidSettings("krylov_dim must be at least 2".into()));
    }
    if psi.dimension() != h.dimension() {
        return Err(PropagatorError::DimensionMismatch {
            expected: h.dimension(),
            found: psi.dimension(),
        });
    }
    let mut stats = StepStats::default();
    observer(start, dt * T::from_usize_lossy(start), &psi)?;
    for k in start + 1..=start + steps {
        krylov_step(h, &mut psi.amps, dt, settings, &mut stats)?;
        observer(k, dt * T::from_usize_lossy(k), &psi)?;
    }
    Ok((psi, stats))
}
