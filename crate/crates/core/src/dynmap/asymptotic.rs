use nalgebra::{DMatrix, DVector};

use super::{AffineBlochMap, DynMapError, SvdSeries};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    /// Stationary with `M_∞ ≈ 0`: every initial state relaxes to `b_∞`.
    UniqueAsymptotic,
    /// Stationary with `M_∞ ≠ 0`: the limit depends on the initial state.
    InitialStateDependent,
    /// `M(t)`, `S(t)` or `b(t)` still fluctuates in the trailing window.
    NonStationary,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::UniqueAsymptotic => "unique_asymptotic",
            Classification::InitialStateDependent => "initial_state_dependent",
            Classification::NonStationary => "non_stationary",
        })
    }
}

/// `M_∞ ≈ s v wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne<T: Real> {
    pub s: T,
    pub v: DVector<T>,
    pub w: DVector<T>,
    pub b: DVector<T>,
}

impl<T: Real> RankOne<T> {
    /// `a_∞ = s ⟨w, a(0)⟩ v + b_∞`.
    pub fn predict(&self, a0: &DVector<T>) -> DVector<T> {
        &self.v * (self.s * self.w.dot(a0)) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport<T: Real> {
    pub classification: Classification,
    /// First time inside the trailing window.
    pub window_start: T,
    /// Largest max − min spread over the window of any entry of `M`, `S`, `b`.
    pub fluctuation: T,
    pub m_inf: Option<DMatrix<T>>,
    pub b_inf: Option<DVector<T>>,
    /// Singular values of `M_∞`, descending.
    pub s_inf: Option<DVector<T>>,
    pub rank_one: Option<RankOne<T>>,
    /// Number of singular values of `M_∞` at or above `tol_zero`.
    pub rank: Option<usize>,
}

impl<T: Real> AsymptoticReport<T> {
    /// `a_∞` for a given initial Bloch vector.
    pub fn predict(&self, a0: &DVector<T>) -> Result<DVector<T>, DynMapError> {
        match (&self.m_inf, &self.b_inf) {
            (Some(m), Some(b)) => match self.classification {
                Classification::UniqueAsymptotic => Ok(b.clone()),
                _ => Ok(m * a0 + b),
            },
            _ => Err(DynMapError::NotStationary),
        }
    }
}

fn spread<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (lo, hi) = values.fold((T::max_value().expect("bounded"), T::min_value().expect("bounded")), |(lo, hi), v| {
        (lo.min_of(v), hi.max_of(v))
    });
    hi - lo
}

/// Classifies the trailing `window` (a time span) of the run.
pub fn classify_asymptotics<T: Real>(
    abm: &AffineBlochMap<T>,
    svd: &SvdSeries<T>,
    window: T,
    tol_stationary: T,
    tol_zero: T,
) -> Result<AsymptoticReport<T>, DynMapError> {
    if abm.times() != svd.times() {
        return Err(DynMapError::GridMismatch);
    }
    let times = abm.times();
    let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) else {
        return Err(DynMapError::WindowTooLong {
            window: window.as_f64(),
            span: 0.0,
        });
    };
    let span = t_end - t0;
    if !(window > T::zero()) || window > span {
        return Err(DynMapError::WindowTooLong {
            window: window.as_f64(),
            span: span.as_f64(),
        });
    }
    let start = times.iter().position(|&t| t >= t_end - window).expect("t_end is inside");
    let idx: Vec<usize> = (start..times.len()).collect();
    if idx.len() < 2 {
        return Err(DynMapError::Invalid(
            "analysis window holds fewer than two samples".into(),
        ));
    }
    let d = abm.bloch_len();
    let mut fluct = T::zero();
    for i in 0..d {
        for j in 0..d {
            fluct = fluct.max_of(spread(idx.iter().map(|&k| abm.m(k)[(i, j)])));
        }
        fluct = fluct.max_of(spread(idx.iter().map(|&k| abm.b(k)[i])));
        fluct = fluct.max_of(spread(idx.iter().map(|&k| svd.singular_values(k)[i])));
    }
    let mut report = AsymptoticReport {
        classification: Classification::NonStationary,
        window_start: times[start],
        fluctuation: fluct,
        m_inf: None,
        b_inf: None,
        s_inf: None,
        rank_one: None,
        rank: None,
    };
    if !(fluct < tol_stationary) {
        return Ok(report);
    }
    let count = T::from_usize_lossy(idx.len());
    let m_inf = idx.iter().fold(DMatrix::zeros(d, d), |acc, &k| acc + abm.m(k)) / count;
    let b_inf = idx.iter().fold(DVector::zeros(d), |acc, &k| acc + abm.b(k)) / count;
    let (s_inf, v_inf, w_inf) = super::svd::sorted_svd(&m_inf);
    let rank = s_inf.iter().filter(|&&s| s >= tol_zero).count();
    report.classification = if rank == 0 {
        Classification::UniqueAsymptotic
    } else {
        Classification::InitialStateDependent
    };
    if rank == 1 {
        let mut v: DVector<T> = v_inf.column(0).into_owned();
        let mut w: DVector<T> = w_inf.column(0).into_owned();
        let lead = w.iter().fold(T::zero(), |a, &x| if x.magnitude() > a.magnitude() { x } else { a });
        if lead < T::zero() {
            v.neg_mut();
            w.neg_mut();
        }
        report.rank_one = Some(RankOne {
            s: s_inf[0],
            v,
            w,
            b: b_inf.clone(),
        });
    }
    report.rank = Some(rank);
    report.m_inf = Some(m_inf);
    report.b_inf = Some(b_inf);
    report.s_inf = Some(s_inf);
    Ok(report)
}

/// Rank-one factors `(s_∞,1, v_∞,1, w_∞,1)` of a stationary `M_∞`.
pub fn asymptotic_projection<T: Real>(report: &AsymptoticReport<T>) -> Result<RankOne<T>, DynMapError> {
    match (report.rank, &report.rank_one) {
        (None, _) => Err(DynMapError::NotStationary),
        (_, Some(r)) => Ok(r.clone()),
        (Some(rank), None) => Err(DynMapError::NotRankOne { rank }),
    }
}
