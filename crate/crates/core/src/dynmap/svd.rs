use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{AffineBlochMap, DynMapError};
use crate::scalar::Real;

/// `M(t) = V(t) S(t) Wᵀ(t)` on the map's time grid, `S` descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdSeries<T: Real> {
    times: Vec<T>,
    s: Vec<DVector<T>>,
    v: Vec<DMatrix<T>>,
    w: Vec<DMatrix<T>>,
}

/// One-sided Jacobi SVD of a square matrix, `m = U diag(s) Vᵀ`, unsorted.
///
/// Used instead of nalgebra's bidiagonal SVD, which loses up to 1e-7 of
/// accuracy on some near-orthogonal dynamic matrices.
pub(crate) fn jacobi_svd<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
    let d = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<T>::identity(d, d);
    let eps = T::default_epsilon();
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == T::zero() || gamma.magnitude() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.magnitude() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..d {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s = DVector::from_iterator(d, (0..d).map(|j| a.column(j).norm()));
    let scale = s.iter().fold(T::zero(), |acc, &x| acc.max_of(x));
    let mut u = DMatrix::<T>::zeros(d, d);
    let mut missing = Vec::new();
    for j in 0..d {
        if s[j] > eps * scale * T::from_usize_lossy(d) && s[j] > T::zero() {
            u.set_column(j, &(a.column(j) / s[j]));
        } else {
            missing.push(j);
        }
    }
    // Complete U with Gram–Schmidt on unit vectors for null directions.
    let mut e = 0;
    for j in missing {
        loop {
            let mut cand = DVector::<T>::zeros(d);
            cand[e % d] = T::one();
            e += 1;
            for k in 0..d {
                if k != j {
                    let proj = u.column(k).dot(&cand);
                    cand -= u.column(k) * proj;
                }
            }
            let n = cand.norm();
            if n > T::lit(1e-6) {
                u.set_column(j, &(cand / n));
                break;
            }
        }
    }
    (s, u, v)
}

/// Singular values descending with matching left (`V`) and right (`W`)
/// singular vectors as columns.
pub(crate) fn sorted_svd<T: Real>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>, DMatrix<T>) {
    let d = m.nrows();
    let (sv, u, vr) = jacobi_svd(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).expect("finite singular values"));
    let s = DVector::from_iterator(d, order.iter().map(|&j| sv[j]));
    let v = DMatrix::from_fn(d, d, |i, j| u[(i, order[j])]);
    let w = DMatrix::from_fn(d, d, |i, j| vr[(i, order[j])]);
    (s, v, w)
}

fn largest_component_index<T: Real>(x: nalgebra::DVectorView<'_, T>) -> usize {
    x.iter()
        .enumerate()
        .fold((0, T::zero()), |(bi, bv), (i, &v)| {
            if v.magnitude() > bv {
                (i, v.magnitude())
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Per-sample SVD with singular-vector signs kept continuous in time.
///
/// At the first sample each `w_j` has its largest component positive; later
/// samples flip `(v_j, w_j)` jointly whenever `w_j` would point away from its
/// predecessor. Flipping both leaves `V S Wᵀ` unchanged.
pub fn svd_series<T: Real>(abm: &AffineBlochMap<T>) -> SvdSeries<T> {
    let parts: Vec<_> = (0..abm.len()).into_par_iter().map(|k| sorted_svd(abm.m(k))).collect();
    let mut s = Vec::with_capacity(parts.len());
    let mut v: Vec<DMatrix<T>> = Vec::with_capacity(parts.len());
    let mut w: Vec<DMatrix<T>> = Vec::with_capacity(parts.len());
    for (sk, mut vk, mut wk) in parts {
        for j in 0..sk.len() {
            let flip = match w.last() {
                None => wk[(largest_component_index(wk.column(j)), j)] < T::zero(),
                Some(prev) => prev.column(j).dot(&wk.column(j)) < T::zero(),
            };
            if flip {
                vk.column_mut(j).neg_mut();
                wk.column_mut(j).neg_mut();
            }
        }
        s.push(sk);
        v.push(vk);
        w.push(wk);
    }
    SvdSeries {
        times: abm.times().to_vec(),
        s,
        v,
        w,
    }
}

impl<T: Real> SvdSeries<T> {
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn singular_values(&self, k: usize) -> &DVector<T> {
        &self.s[k]
    }

    pub fn v(&self, k: usize) -> &DMatrix<T> {
        &self.v[k]
    }

    pub fn w(&self, k: usize) -> &DMatrix<T> {
        &self.w[k]
    }

    pub fn s_max(&self, k: usize) -> T {
        self.s[k][0]
    }

    /// `S_j(t)` for `j` counted from zero.
    pub fn branch(&self, j: usize) -> Vec<T> {
        self.s.iter().map(|s| s[j]).collect()
    }

    /// `max |V S Wᵀ − M|` at sample `k`.
    pub fn reconstruction_error(&self, k: usize, m: &DMatrix<T>) -> T {
        let r = &self.v[k] * DMatrix::from_diagonal(&self.s[k]) * self.w[k].transpose();
        (r - m).abs().max()
    }

    /// `max(|VᵀV − 1|, |WᵀW − 1|)` at sample `k`.
    pub fn orthogonality_defect(&self, k: usize) -> T {
        let d = self.s[k].len();
        let id = DMatrix::<T>::identity(d, d);
        let a = (self.v[k].transpose() * &self.v[k] - &id).abs().max();
        let b = (self.w[k].transpose() * &self.w[k] - &id).abs().max();
        a.max_of(b)
    }

    /// Singular values re-labelled so each branch follows the right singular
    /// vector of maximal overlap with its predecessor, instead of rank.
    ///
    /// Useful for plotting through crossings; the analysis itself uses the
    /// sorted values.
    pub fn tracked_branches(&self) -> Vec<Vec<T>> {
        let Some(first) = self.s.first() else {
            return Vec::new();
        };
        let d = first.len();
        let mut out: Vec<Vec<T>> = (0..d).map(|_| Vec::with_capacity(self.len())).collect();
        // perm[branch] = column index at the previous sample
        let mut perm: Vec<usize> = (0..d).collect();
        for k in 0..self.len() {
            if k > 0 {
                let prev = &self.w[k - 1];
                let cur = &self.w[k];
                let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(d * d);
                for (b, &pc) in perm.iter().enumerate() {
                    for c in 0..d {
                        pairs.push((prev.column(pc).dot(&cur.column(c)).magnitude(), b, c));
                    }
                }
                pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite overlaps"));
                let mut taken_b = vec![false; d];
                let mut taken_c = vec![false; d];
                let mut next = perm.clone();
                for (_, b, c) in pairs {
                    if !taken_b[b] && !taken_c[c] {
                        taken_b[b] = true;
                        taken_c[c] = true;
                        next[b] = c;
                    }
                }
                perm = next;
            }
            for (b, &c) in perm.iter().enumerate() {
                out[b].push(self.s[k][c]);
            }
        }
        out
    }

    /// Columns `t, S1..S_d, b1..b_d`.
    pub fn write_csv<W: Write>(&self, abm: &AffineBlochMap<T>, w: W) -> Result<(), DynMapError> {
        if abm.times() != self.times() {
            return Err(DynMapError::GridMismatch);
        }
        let d = abm.bloch_len();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_owned()];
        header.extend((1..=d).map(|j| format!("S{j}")));
        header.extend((1..=d).map(|j| format!("b{j}")));
        wtr.write_record(&header)?;
        for k in 0..self.len() {
            let row = std::iter::once(self.times[k])
                .chain(self.s[k].iter().copied())
                .chain(abm.b(k).iter().copied())
                .map(|x| format!("{:e}", x.as_f64()));
            wtr.write_record(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Parsed `t, S…, b…` table as written by [`SvdSeries::write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTable {
    pub times: Vec<f64>,
    pub s: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl SvdTable {
    pub fn read_csv<R: Read>(r: R) -> Result<Self, DynMapError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let s_cols: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with('S')).collect();
        let b_cols: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with('b')).collect();
        if headers.get(0) != Some("t") || s_cols.is_empty() {
            return Err(DynMapError::Invalid("SVD CSV needs columns t, S1, ...".into()));
        }
        let mut table = SvdTable {
            times: Vec::new(),
            s: Vec::new(),
            b: Vec::new(),
        };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, DynMapError> {
                rec.get(i)
                    .and_then(|x| x.trim().parse().ok())
                    .ok_or_else(|| DynMapError::Invalid(format!("SVD CSV row {}: bad number", line + 1)))
            };
            table.times.push(num(0)?);
            table.s.push(s_cols.iter().map(|&i| num(i)).collect::<Result<_, _>>()?);
            table.b.push(b_cols.iter().map(|&i| num(i)).collect::<Result<_, _>>()?);
        }
        Ok(table)
    }
}
