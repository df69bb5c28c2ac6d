use rayon::prelude::*;

use super::PropagatorError;
use crate::scalar::{czero, Real, C};
use crate::spectral::DiscretizedBath;

/// Fock-truncated joint spin ⊗ bath space.
///
/// Basis index: `s·B + f` with spin `s ∈ {0 = ↑, 1 = ↓}` and `f` the
/// mixed-radix bath index, mode 0 most significant, `B = Π dₙ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpaceSpec {
    cutoffs: Vec<usize>,
    max_dimension: usize,
    bath_dim: usize,
}

impl HilbertSpaceSpec {
    pub fn new(cutoffs: Vec<usize>, max_dimension: usize) -> Result<Self, PropagatorError> {
        if cutoffs.is_empty() {
            return Err(PropagatorError::InvalidSpec("no bath modes".into()));
        }
        if let Some(d) = cutoffs.iter().find(|&&d| d < 2) {
            return Err(PropagatorError::InvalidSpec(format!("Fock cutoff {d} < 2")));
        }
        let required = cutoffs.iter().try_fold(2usize, |acc, &d| acc.checked_mul(d));
        match required {
            Some(r) if r <= max_dimension => {}
            _ => {
                return Err(PropagatorError::BudgetExceeded {
                    required: required.unwrap_or(usize::MAX),
                    allowed: max_dimension,
                })
            }
        }
        let required = required.expect("checked above");
        Ok(Self {
            bath_dim: required / 2,
            cutoffs,
            max_dimension,
        })
    }

    pub fn uniform(modes: usize, cutoff: usize, max_dimension: usize) -> Result<Self, PropagatorError> {
        Self::new(vec![cutoff; modes], max_dimension)
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn max_dimension(&self) -> usize {
        self.max_dimension
    }

    /// `D = 2 Π dₙ`.
    pub fn dimension(&self) -> usize {
        2 * self.bath_dim
    }

    pub fn bath_dimension(&self) -> usize {
        self.bath_dim
    }

    /// Same space with every cutoff doubled, under the same budget.
    pub fn doubled(&self) -> Result<Self, PropagatorError> {
        Self::new(self.cutoffs.iter().map(|d| 2 * d).collect(), self.max_dimension)
    }

    /// Stride of mode `n` in the bath index.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.cutoffs.len()];
        for n in (0..self.cutoffs.len().saturating_sub(1)).rev() {
            s[n] = s[n + 1] * self.cutoffs[n + 1];
        }
        s
    }

    /// Occupation numbers of bath basis state `f`.
    pub fn occupations(&self, mut f: usize) -> Vec<usize> {
        let mut occ = vec![0; self.cutoffs.len()];
        for n in (0..self.cutoffs.len()).rev() {
            occ[n] = f % self.cutoffs[n];
            f /= self.cutoffs[n];
        }
        occ
    }
}

/// Real symmetric Hamiltonian in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

const PAR_THRESHOLD: usize = 1 << 13;

impl<T: Real> SparseHamiltonian<T> {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> T {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => T::zero(),
        }
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row = |i: usize| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).fold(czero::<T>(), |acc, k| acc + x[self.cols[k]] * self.vals[k])
        };
        if self.dim >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = row(i));
        }
    }

    /// `⟨x|H|x⟩`.
    pub fn expectation(&self, x: &[C<T>]) -> T {
        let mut y = vec![czero(); self.dim];
        self.apply(x, &mut y);
        x.iter().zip(&y).fold(T::zero(), |acc, (a, b)| acc + (a.conj() * b).re)
    }

    /// `max |H − Hᵀ|` over stored entries.
    pub fn symmetry_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                worst = worst.max_of((self.vals[k] - self.get(self.cols[k], i)).magnitude());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] = self.vals[k];
            }
        }
        m
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> T {
        (0..self.dim)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1]).fold(T::zero(), |acc, k| acc + self.vals[k].magnitude())
            })
            .fold(T::zero(), |a, b| a.max_of(b))
    }
}

/// `H = Δσx + Σ ωₙ(aₙ†aₙ + ½) + σz Σ cₙ (aₙ + aₙ†)/√(2ωₙ)`.
pub fn build_hamiltonian<T: Real>(
    bath: &DiscretizedBath<T>,
    delta: T,
    spec: &HilbertSpaceSpec,
) -> Result<SparseHamiltonian<T>, PropagatorError> {
    if bath.len() != spec.modes() {
        return Err(PropagatorError::InvalidSpec(format!(
            "bath has {} modes but the Hilbert space has {}",
            bath.len(),
            spec.modes()
        )));
    }
    let b = spec.bath_dimension();
    let dim = spec.dimension();
    let strides = spec.strides();
    let omegas = bath.omegas();
    let g: Vec<T> = omegas
        .iter()
        .zip(bath.couplings())
        .map(|(&w, &c)| c / (T::lit(2.0) * w).sqrt())
        .collect();
    let zero_point = omegas.iter().fold(T::zero(), |a, &w| a + w) * T::lit(0.5);
    let sqrt_n: Vec<T> = (0..=*spec.cutoffs().iter().max().expect("non-empty"))
        .map(|k| T::from_usize_lossy(k).sqrt())
        .collect();

    let per_row = 2 + 2 * spec.modes();
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::with_capacity(dim * per_row);
    let mut vals = Vec::with_capacity(dim * per_row);
    let mut entries: Vec<(usize, T)> = Vec::with_capacity(per_row);
    row_ptr.push(0);
    for s in 0..2 {
        let sz = if s == 0 { T::one() } else { -T::one() };
        for f in 0..b {
            let occ = spec.occupations(f);
            entries.clear();
            let diag = occ
                .iter()
                .zip(omegas)
                .fold(zero_point, |acc, (&k, &w)| acc + w * T::from_usize_lossy(k));
            entries.push((s * b + f, diag));
            entries.push(((1 - s) * b + f, delta));
            for (n, &k) in occ.iter().enumerate() {
                if g[n] == T::zero() {
                    continue;
                }
                if k > 0 {
                    entries.push((s * b + f - strides[n], sz * g[n] * sqrt_n[k]));
                }
                if k + 1 < spec.cutoffs()[n] {
                    entries.push((s * b + f + strides[n], sz * g[n] * sqrt_n[k + 1]));
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            for &(j, v) in &entries {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
    }
    Ok(SparseHamiltonian {
        dim,
        row_ptr,
        cols,
        vals,
    })
}
