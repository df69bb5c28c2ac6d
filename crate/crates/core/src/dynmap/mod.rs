//! Dynamical-map reconstruction, affine Bloch form, singular-value analysis,
//! the initial-state bound and long-time classification.
//!
//! Superoperators act on row-major vectorised matrices: `vec(X)[iN + j] =
//! X_ij`, so `Φ_{ij,kl}` is entry `(iN + j, kN + l)`.

mod asymptotic;
mod bound;
mod svd;

pub use asymptotic::{asymptotic_projection, classify_asymptotics, AsymptoticReport, Classification, RankOne};
pub use bound::{bound_check, bound_series, delta_observable, delta_observable_states, BoundReport, BOUND_SLACK};
pub use svd::{svd_series, SvdSeries, SvdTable};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::bloch::{su_generators, BlochError, BlochVector, DensityMatrix, GeneratorSet};
use crate::propagator::TrajectorySet;
use crate::scalar::{cabs, cplx, czero, Real, C};

#[derive(Debug, Error)]
pub enum DynMapError {
    #[error("need {expected} trajectories, got {found}")]
    WrongTrajectoryCount { expected: usize, found: usize },
    #[error("trajectories are not on a common time grid")]
    GridMismatch,
    #[error("initial states are degenerate: condition number {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("map is not trace preserving at t = {t}: defect {defect:e}")]
    NotTracePreserving { t: f64, defect: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("bound violated at t = {t}: delta = {delta:e} > {which} bound {bound:e}")]
    BoundViolation { t: f64, delta: f64, bound: f64, which: &'static str },
    #[error("analysis window {window} is longer than the run ({span})")]
    WindowTooLong { window: f64, span: f64 },
    #[error("asymptotic map is not rank one (rank {rank})")]
    NotRankOne { rank: usize },
    #[error("asymptotic map is undefined: dynamics are not stationary")]
    NotStationary,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reconstructions with a worse-conditioned input matrix are refused.
pub const MAX_CONDITION: f64 = 1e6;

fn vectorize<T: Real>(m: &DMatrix<C<T>>) -> DVector<C<T>> {
    let n = m.nrows();
    DVector::from_fn(n * n, |k, _| m[(k / n, k % n)])
}

fn unvectorize<T: Real>(v: &DVector<C<T>>, n: usize) -> DMatrix<C<T>> {
    DMatrix::from_fn(n, n, |i, j| v[i * n + j])
}

/// Time series of superoperators `Φ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTensor<T: Real> {
    n: usize,
    times: Vec<T>,
    maps: Vec<DMatrix<C<T>>>,
    condition: T,
}

impl<T: Real> MapTensor<T> {
    pub fn new(n: usize, times: Vec<T>, maps: Vec<DMatrix<C<T>>>) -> Result<Self, DynMapError> {
        if times.len() != maps.len() {
            return Err(DynMapError::GridMismatch);
        }
        if let Some(m) = maps.iter().find(|m| m.nrows() != n * n || m.ncols() != n * n) {
            return Err(DynMapError::DimensionMismatch {
                expected: n * n,
                found: m.nrows(),
            });
        }
        Ok(Self {
            n,
            times,
            maps,
            condition: T::one(),
        })
    }

    pub fn system_dim(&self) -> usize {
        self.n
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Condition number of the initial-state matrix used in reconstruction.
    pub fn condition_number(&self) -> T {
        self.condition
    }

    pub fn superoperator(&self, k: usize) -> &DMatrix<C<T>> {
        &self.maps[k]
    }

    /// `Φ_{ij,kl}` at sample `s`.
    pub fn entry(&self, s: usize, i: usize, j: usize, k: usize, l: usize) -> C<T> {
        self.maps[s][(i * self.n + j, k * self.n + l)]
    }

    /// `Φ_t[X]` for any `N × N` matrix.
    pub fn apply(&self, k: usize, x: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        unvectorize(&(&self.maps[k] * vectorize(x)), self.n)
    }

    /// `max |Σᵢ Φ_{ii,kl} − δ_kl|`.
    pub fn trace_defect(&self, s: usize) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for k in 0..n {
            for l in 0..n {
                let sum = (0..n).fold(czero::<T>(), |acc, i| acc + self.entry(s, i, i, k, l));
                let want = if k == l { T::one() } else { T::zero() };
                worst = worst.max_of(cabs(sum - cplx(want, T::zero())));
            }
        }
        worst
    }

    /// `max |Φ_{ij,kl} − conj Φ_{ji,lk}|`.
    pub fn hermiticity_defect(&self, s: usize) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let d = self.entry(s, i, j, k, l) - self.entry(s, j, i, l, k).conj();
                        worst = worst.max_of(cabs(d));
                    }
                }
            }
        }
        worst
    }
}

/// Solves `vec ρ⁽ᵐ⁾(t) = Φ_t vec ρ⁽ᵐ⁾(0)` for `N²` state series.
pub fn reconstruct_from_states<T: Real>(
    times: &[T],
    series: &[&[DensityMatrix<T>]],
) -> Result<MapTensor<T>, DynMapError> {
    let first = series.first().and_then(|s| s.first()).ok_or(DynMapError::GridMismatch)?;
    let n = first.dim();
    let nn = n * n;
    if series.len() != nn {
        return Err(DynMapError::WrongTrajectoryCount {
            expected: nn,
            found: series.len(),
        });
    }
    if series.iter().any(|s| s.len() != times.len()) {
        return Err(DynMapError::GridMismatch);
    }
    let columns = |k: usize| -> Result<DMatrix<C<T>>, DynMapError> {
        let mut r = DMatrix::from_element(nn, nn, czero());
        for (m, s) in series.iter().enumerate() {
            if s[k].dim() != n {
                return Err(DynMapError::DimensionMismatch {
                    expected: n,
                    found: s[k].dim(),
                });
            }
            r.set_column(m, &vectorize(s[k].matrix()));
        }
        Ok(r)
    };
    let r0 = columns(0)?;
    let sv = r0.clone().singular_values();
    let smin = sv.iter().fold(T::max_value().expect("bounded"), |a, &b| a.min_of(b));
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max_of(b));
    let condition = if smin > T::zero() { smax / smin } else { T::max_value().expect("bounded") };
    if !(condition <= T::lit(MAX_CONDITION)) {
        return Err(DynMapError::IllConditioned {
            condition: condition.as_f64(),
            limit: MAX_CONDITION,
        });
    }
    let r0_inv = r0.try_inverse().ok_or(DynMapError::IllConditioned {
        condition: f64::INFINITY,
        limit: MAX_CONDITION,
    })?;
    let maps = (0..times.len())
        .into_par_iter()
        .map(|k| Ok(columns(k)? * &r0_inv))
        .collect::<Result<Vec<_>, DynMapError>>()?;
    let mut tensor = MapTensor::new(n, times.to_vec(), maps)?;
    tensor.condition = condition;
    Ok(tensor)
}

/// Map reconstruction from the four reference spin trajectories.
pub fn reconstruct_map<T: Real>(set: &TrajectorySet<T>) -> Result<MapTensor<T>, DynMapError> {
    let first = set.trajectories.first().ok_or(DynMapError::WrongTrajectoryCount {
        expected: 4,
        found: 0,
    })?;
    if set.trajectories.iter().any(|t| t.times() != first.times()) {
        return Err(DynMapError::GridMismatch);
    }
    let series: Vec<&[DensityMatrix<T>]> = set.trajectories.iter().map(|t| t.states()).collect();
    reconstruct_from_states(first.times(), &series)
}

/// `a(t) = M(t) a(0) + b(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBlochMap<T: Real> {
    n: usize,
    times: Vec<T>,
    m: Vec<DMatrix<T>>,
    b: Vec<DVector<T>>,
}

impl<T: Real> AffineBlochMap<T> {
    /// `n` is the Hilbert-space dimension; `M` is `(n² − 1)`-square.
    pub fn new(n: usize, times: Vec<T>, m: Vec<DMatrix<T>>, b: Vec<DVector<T>>) -> Result<Self, DynMapError> {
        let d = n * n - 1;
        if times.len() != m.len() || times.len() != b.len() {
            return Err(DynMapError::GridMismatch);
        }
        if let Some(x) = m.iter().find(|x| x.nrows() != d || x.ncols() != d) {
            return Err(DynMapError::DimensionMismatch {
                expected: d,
                found: x.nrows(),
            });
        }
        if let Some(x) = b.iter().find(|x| x.len() != d) {
            return Err(DynMapError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        Ok(Self { n, times, m, b })
    }

    pub fn system_dim(&self) -> usize {
        self.n
    }

    pub fn bloch_len(&self) -> usize {
        self.n * self.n - 1
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn m(&self, k: usize) -> &DMatrix<T> {
        &self.m[k]
    }

    pub fn b(&self, k: usize) -> &DVector<T> {
        &self.b[k]
    }

    pub fn apply(&self, k: usize, a: &BlochVector<T>) -> Result<BlochVector<T>, DynMapError> {
        if a.len() != self.bloch_len() {
            return Err(DynMapError::DimensionMismatch {
                expected: self.bloch_len(),
                found: a.len(),
            });
        }
        Ok(BlochVector::new(&self.m[k] * a.components() + &self.b[k])?)
    }

    /// Largest `‖M a + b‖ − 1` over `samples` deterministic unit vectors.
    pub fn ball_excess(&self, k: usize, samples: usize) -> T {
        let d = self.bloch_len();
        let mut worst = T::lit(-1.0);
        for s in 0..samples {
            let a = DVector::from_fn(d, |i, _| {
                let x = T::from_usize_lossy(s * (d + 1) + i + 1) * T::lit(2.399_963_229_728_653);
                x.sin()
            });
            let norm = a.norm();
            if norm == T::zero() {
                continue;
            }
            let a = a / norm;
            worst = worst.max_of((&self.m[k] * a + &self.b[k]).norm() - T::one());
        }
        worst
    }

    /// Columns `t` then `M` entries row-major (`M11, M12, …`).
    pub fn write_map_csv<W: Write>(&self, w: W) -> Result<(), DynMapError> {
        let d = self.bloch_len();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_owned()];
        for i in 0..d {
            for j in 0..d {
                header.push(format!("M{}{}", i + 1, j + 1));
            }
        }
        wtr.write_record(&header)?;
        for (t, m) in self.times.iter().zip(&self.m) {
            let mut row = vec![format!("{:e}", t.as_f64())];
            for i in 0..d {
                for j in 0..d {
                    row.push(format!("{:e}", m[(i, j)].as_f64()));
                }
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Default trace-preservation tolerance for [`tensor_to_affine`].
pub const TRACE_TOL: f64 = 1e-8;

/// `M_mn = ½ tr(T_m Φ[T_n])`, `b_m = tr(T_m Φ[𝟙/N])`.
pub fn tensor_to_affine<T: Real>(phi: &MapTensor<T>, trace_tol: T) -> Result<AffineBlochMap<T>, DynMapError> {
    let n = phi.system_dim();
    let gens: GeneratorSet<T> = su_generators(n)?;
    let d = gens.len();
    let identity = DMatrix::from_diagonal_element(n, n, cplx(T::one() / T::from_usize_lossy(n), T::zero()));
    let half = T::lit(0.5);
    let per_time = (0..phi.len())
        .into_par_iter()
        .map(|k| {
            let defect = phi.trace_defect(k);
            if !(defect <= trace_tol) {
                return Err(DynMapError::NotTracePreserving {
                    t: phi.times[k].as_f64(),
                    defect: defect.as_f64(),
                });
            }
            let mut m = DMatrix::zeros(d, d);
            for col in 0..d {
                let image = phi.apply(k, gens.get(col));
                for (row, c) in gens.coefficients(&image)?.into_iter().enumerate() {
                    m[(row, col)] = half * c.re;
                }
            }
            let image = phi.apply(k, &identity);
            let b = DVector::from_iterator(d, gens.coefficients(&image)?.into_iter().map(|c| c.re));
            Ok((m, b))
        })
        .collect::<Result<Vec<_>, DynMapError>>()?;
    let (m, b) = per_time.into_iter().unzip();
    AffineBlochMap::new(n, phi.times.clone(), m, b)
}
