//! Density matrices, generalized Bloch vectors and SU(N) generators.
//!
//! A state of an `N`-level system is written as
//!
//! ```text
//! ρ = 𝟙/N + ½ Σₙ aₙ Tₙ,      aₙ = tr(ρ Tₙ)
//! ```
//!
//! with `N² − 1` Hermitian, traceless generators normalised to
//! `tr(Tₙ Tₘ) = 2 δₙₘ`. For `N = 2` the generators are the Pauli matrices in
//! the order `(σx, σy, σz)`, so the Bloch vector is `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::{cabs, cplx, czero, expi, Real, C};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlochError {
    #[error("invalid dimension {0}: need N >= 2")]
    InvalidDimension(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("trace is {trace:e}, expected 1")]
    TraceNotOne { trace: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("Bloch vector has {len} components, which is not N^2 - 1 for any N >= 2")]
    BadBlochLength { len: usize },
}

/// Validation thresholds for states and observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub hermitian: T,
    pub trace: T,
    pub positivity: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            hermitian: T::lit(1e-10),
            trace: T::lit(1e-10),
            positivity: T::lit(1e-10),
        }
    }
}

/// Largest entrywise deviation `max |A - A†|`.
pub fn hermiticity_defect<T: Real>(m: &DMatrix<C<T>>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            let d = m[(i, j)] - m[(j, i)].conj();
            worst = worst.max_of(d.re.magnitude().max_of(d.im.magnitude()));
        }
    }
    worst
}

fn trace<T: Real>(m: &DMatrix<C<T>>) -> C<T> {
    (0..m.nrows()).fold(czero(), |acc, i| acc + m[(i, i)])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues<T: Real>(m: &DMatrix<C<T>>) -> Vec<T> {
    let mut ev: Vec<T> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    ev
}

/// Physical state of an `N`-level system.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    m: DMatrix<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: DMatrix<C<T>>, tol: &Tolerances<T>) -> Result<Self, BlochError> {
        let rho = Self::hermitian_unit_trace(m, tol)?;
        let min = rho.min_eigenvalue();
        if min < -tol.positivity {
            return Err(BlochError::NotPositive {
                min_eigenvalue: min.as_f64(),
            });
        }
        Ok(rho)
    }

    /// Validates Hermiticity and unit trace only.
    ///
    /// Used for images of the affine Bloch map, which need not be positive.
    pub fn hermitian_unit_trace(m: DMatrix<C<T>>, tol: &Tolerances<T>) -> Result<Self, BlochError> {
        if m.nrows() != m.ncols() {
            return Err(BlochError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() < 2 {
            return Err(BlochError::InvalidDimension(m.nrows()));
        }
        let dev = hermiticity_defect(&m);
        if dev > tol.hermitian {
            return Err(BlochError::NotHermitian {
                deviation: dev.as_f64(),
            });
        }
        let tr = trace(&m);
        if (tr.re - T::one()).magnitude() > tol.trace || tr.im.magnitude() > tol.trace {
            return Err(BlochError::TraceNotOne { trace: tr.re.as_f64() });
        }
        Ok(Self { m })
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C<T>>) -> Self {
        Self { m }
    }

    /// Pure state `|ψ⟩⟨ψ|` from (not necessarily normalised) amplitudes.
    pub fn pure(amplitudes: &[C<T>]) -> Result<Self, BlochError> {
        let n = amplitudes.len();
        if n < 2 {
            return Err(BlochError::InvalidDimension(n));
        }
        let norm2 = amplitudes
            .iter()
            .fold(T::zero(), |acc, z| acc + z.re * z.re + z.im * z.im);
        let m = DMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj() / cplx(norm2, T::zero()));
        Ok(Self { m })
    }

    pub fn maximally_mixed(n: usize) -> Result<Self, BlochError> {
        if n < 2 {
            return Err(BlochError::InvalidDimension(n));
        }
        let w = cplx(T::one() / T::from_usize_lossy(n), T::zero());
        Ok(Self {
            m: DMatrix::from_diagonal_element(n, n, w),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.m
    }

    pub fn trace(&self) -> C<T> {
        trace(&self.m)
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> T {
        trace(&(&self.m * &self.m)).re
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(&self.m)
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    pub fn is_positive(&self, tol: T) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Convex combination `Σ wᵢ ρᵢ`; weights are not renormalised.
    pub fn mix(states: &[(&Self, T)]) -> Result<Self, BlochError> {
        let n = states.first().map(|(s, _)| s.dim()).ok_or(BlochError::InvalidDimension(0))?;
        let mut m = DMatrix::from_element(n, n, czero());
        for (s, w) in states {
            if s.dim() != n {
                return Err(BlochError::DimensionMismatch {
                    expected: n,
                    found: s.dim(),
                });
            }
            m += s.m.map(|z| z * *w);
        }
        Ok(Self { m })
    }

    /// Entry-wise maximum distance.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max_of(cabs(*a - *b)))
    }
}

/// Real `(N² − 1)`-vector of generator expectation values.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochVector<T: Real> {
    n: usize,
    a: DVector<T>,
}

/// Returns `N` with `N² − 1 = len`, if any.
fn system_dim_for(len: usize) -> Option<usize> {
    let n = ((len + 1) as f64).sqrt().round() as usize;
    (n >= 2 && n * n - 1 == len).then_some(n)
}

impl<T: Real> BlochVector<T> {
    pub fn new(components: DVector<T>) -> Result<Self, BlochError> {
        let len = components.len();
        let n = system_dim_for(len).ok_or(BlochError::BadBlochLength { len })?;
        Ok(Self { n, a: components })
    }

    pub fn from_slice(components: &[T]) -> Result<Self, BlochError> {
        Self::new(DVector::from_column_slice(components))
    }

    pub fn zeros(n: usize) -> Result<Self, BlochError> {
        if n < 2 {
            return Err(BlochError::InvalidDimension(n));
        }
        Ok(Self {
            n,
            a: DVector::zeros(n * n - 1),
        })
    }

    /// Dimension `N` of the underlying Hilbert space.
    pub fn system_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn components(&self) -> &DVector<T> {
        &self.a
    }

    pub fn into_components(self) -> DVector<T> {
        self.a
    }

    pub fn norm(&self) -> T {
        self.a.norm()
    }

    /// Radius of the ball guaranteed to contain only physical states,
    /// `√(2 / (N (N − 1)))`.
    pub fn inner_sphere_radius(n: usize) -> T {
        T::lit((2.0 / (n as f64 * (n as f64 - 1.0))).sqrt())
    }
}

impl<T: Real> std::ops::Index<usize> for BlochVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.a[i]
    }
}

/// The `N² − 1` generators of SU(N), `tr(Tₙ Tₘ) = 2 δₙₘ`.
#[derive(Debug, Clone)]
pub struct GeneratorSet<T: Real> {
    n: usize,
    mats: Vec<DMatrix<C<T>>>,
}

/// Builds the generalized Gell-Mann matrices.
///
/// Ordering: for each pair `j < k` (row-major) the symmetric then the
/// antisymmetric generator, followed by the `N − 1` diagonal ones. For `N = 2`
/// this is `(σx, σy, σz)`.
pub fn su_generators<T: Real>(n: usize) -> Result<GeneratorSet<T>, BlochError> {
    if n < 2 {
        return Err(BlochError::InvalidDimension(n));
    }
    let one = cplx(T::one(), T::zero());
    let i = cplx(T::zero(), T::one());
    let mut mats = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in (j + 1)..n {
            let mut sym = DMatrix::from_element(n, n, czero());
            sym[(j, k)] = one;
            sym[(k, j)] = one;
            mats.push(sym);
            let mut anti = DMatrix::from_element(n, n, czero());
            anti[(j, k)] = -i;
            anti[(k, j)] = i;
            mats.push(anti);
        }
    }
    for l in 1..n {
        let lf = l as f64;
        let scale = T::lit((2.0 / (lf * (lf + 1.0))).sqrt());
        let mut d = DMatrix::from_element(n, n, czero());
        for jj in 0..l {
            d[(jj, jj)] = cplx(scale, T::zero());
        }
        d[(l, l)] = cplx(-scale * T::lit(lf), T::zero());
        mats.push(d);
    }
    Ok(GeneratorSet { n, mats })
}

impl<T: Real> GeneratorSet<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<C<T>>] {
        &self.mats
    }

    pub fn get(&self, idx: usize) -> &DMatrix<C<T>> {
        &self.mats[idx]
    }

    /// `tr(A B)` without forming the product.
    fn trace_product(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> C<T> {
        let n = a.nrows();
        let mut acc = czero();
        for i in 0..n {
            for k in 0..n {
                acc += a[(i, k)] * b[(k, i)];
            }
        }
        acc
    }

    /// Complex coefficients `tr(X Tₙ)` of an arbitrary matrix.
    pub fn coefficients(&self, x: &DMatrix<C<T>>) -> Result<Vec<C<T>>, BlochError> {
        if x.nrows() != self.n || x.ncols() != self.n {
            return Err(BlochError::DimensionMismatch {
                expected: self.n,
                found: x.nrows(),
            });
        }
        Ok(self.mats.iter().map(|t| Self::trace_product(x, t)).collect())
    }

    /// `aₙ = Re tr(ρ Tₙ)`, rejecting an imaginary residue above `tol`.
    pub fn to_bloch(&self, rho: &DensityMatrix<T>, tol: T) -> Result<BlochVector<T>, BlochError> {
        let coeffs = self.coefficients(rho.matrix())?;
        let mut worst = T::zero();
        let a = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().map(|z| {
                worst = worst.max_of(z.im.magnitude());
                z.re
            }),
        );
        if worst > tol {
            return Err(BlochError::NotHermitian {
                deviation: worst.as_f64(),
            });
        }
        Ok(BlochVector { n: self.n, a })
    }

    /// `ρ = 𝟙/N + ½ Σ aₙ Tₙ`. Hermitian with unit trace; positivity is not
    /// guaranteed and must be checked by the caller where it matters.
    pub fn to_density(&self, a: &BlochVector<T>) -> Result<DensityMatrix<T>, BlochError> {
        if a.n != self.n {
            return Err(BlochError::DimensionMismatch {
                expected: self.n,
                found: a.n,
            });
        }
        let half = T::lit(0.5);
        let mut m = DMatrix::from_diagonal_element(
            self.n,
            self.n,
            cplx(T::one() / T::from_usize_lossy(self.n), T::zero()),
        );
        for (t, &an) in self.mats.iter().zip(a.a.iter()) {
            let w = cplx(half * an, T::zero());
            m += t.map(|z| z * w);
        }
        Ok(DensityMatrix::from_matrix_unchecked(m))
    }
}

/// Bloch vector with freshly built generators.
pub fn density_to_bloch<T: Real>(rho: &DensityMatrix<T>) -> Result<BlochVector<T>, BlochError> {
    su_generators(rho.dim())?.to_bloch(rho, Tolerances::default().hermitian)
}

pub fn bloch_to_density<T: Real>(a: &BlochVector<T>) -> Result<DensityMatrix<T>, BlochError> {
    su_generators(a.system_dim())?.to_density(a)
}

/// `cos(θ/2)|↑⟩ + e^{iφ} sin(θ/2)|↓⟩`, basis order `(↑, ↓)`.
pub fn spin_amplitudes<T: Real>(theta: T, phi: T) -> [C<T>; 2] {
    let half = theta * T::lit(0.5);
    [cplx(half.cos(), T::zero()), expi(phi) * half.sin()]
}

/// Rank-one spin state with Bloch vector
/// `(sin θ cos φ, sin θ sin φ, cos θ)`.
pub fn spin_initial_state<T: Real>(theta: T, phi: T) -> DensityMatrix<T> {
    DensityMatrix::pure(&spin_amplitudes(theta, phi)).expect("two amplitudes")
}

/// Hermitian observable with its extreme eigenvalue cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable<T: Real> {
    m: DMatrix<C<T>>,
    o_max: T,
}

impl<T: Real> Observable<T> {
    pub fn new(m: DMatrix<C<T>>, tol: T) -> Result<Self, BlochError> {
        if m.nrows() != m.ncols() {
            return Err(BlochError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let dev = hermiticity_defect(&m);
        if dev > tol {
            return Err(BlochError::NotHermitian {
                deviation: dev.as_f64(),
            });
        }
        let o_max = hermitian_eigenvalues(&m)
            .into_iter()
            .fold(T::zero(), |acc, e| if e.magnitude() > acc.magnitude() { e } else { acc });
        Ok(Self { m, o_max })
    }

    pub fn pauli_x() -> Self {
        Self::from_generator(0)
    }

    pub fn pauli_y() -> Self {
        Self::from_generator(1)
    }

    pub fn pauli_z() -> Self {
        Self::from_generator(2)
    }

    fn from_generator(idx: usize) -> Self {
        let g = su_generators::<T>(2).expect("N = 2");
        Self {
            m: g.get(idx).clone(),
            o_max: T::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.m
    }

    /// Eigenvalue with the largest absolute value.
    pub fn o_max(&self) -> T {
        self.o_max
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.dim() == other.dim()
            && self
                .m
                .iter()
                .zip(other.m.iter())
                .all(|(a, b)| cabs(*a - *b) <= tol)
    }
}

/// `Re tr(O ρ)`.
pub fn expectation<T: Real>(rho: &DensityMatrix<T>, obs: &Observable<T>) -> Result<T, BlochError> {
    if rho.dim() != obs.dim() {
        return Err(BlochError::DimensionMismatch {
            expected: obs.dim(),
            found: rho.dim(),
        });
    }
    Ok(GeneratorSet::trace_product(obs.matrix(), rho.matrix()).re)
}
