use std::io::Write;

use nalgebra::DVector;

use super::{DynMapError, SvdSeries};
use crate::bloch::{expectation, su_generators, BlochVector, DensityMatrix, Observable};
use crate::propagator::Trajectory;
use crate::scalar::Real;

/// Absolute slack allowed on top of either bound.
pub const BOUND_SLACK: f64 = 1e-12;

/// `δ(t) = |tr(O(ρ¹(t) − ρ²(t)))|` for two state series on one grid.
pub fn delta_observable_states<T: Real>(
    rho1: &[DensityMatrix<T>],
    rho2: &[DensityMatrix<T>],
    obs: &Observable<T>,
) -> Result<Vec<T>, DynMapError> {
    if rho1.len() != rho2.len() {
        return Err(DynMapError::GridMismatch);
    }
    rho1.iter()
        .zip(rho2)
        .map(|(a, b)| Ok((expectation(a, obs)? - expectation(b, obs)?).magnitude()))
        .collect()
}

pub fn delta_observable<T: Real>(
    traj1: &Trajectory<T>,
    traj2: &Trajectory<T>,
    obs: &Observable<T>,
) -> Result<Vec<T>, DynMapError> {
    if traj1.times() != traj2.times() {
        return Err(DynMapError::GridMismatch);
    }
    delta_observable_states(traj1.states(), traj2.states(), obs)
}

/// Observed differences next to both upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub times: Vec<T>,
    pub delta: Vec<T>,
    /// `(N^{3/2}/√2) |o_max| S_max(t) ‖Δa(0)‖`.
    pub general: Vec<T>,
    /// `½ ‖o‖ S_max(t) ‖Δa(0)‖` with `oₙ = tr(O Tₙ)`; for `σz` this is
    /// `S_max(t) ‖Δa(0)‖`.
    pub tight: Vec<T>,
}

impl<T: Real> BoundReport<T> {
    /// Largest `δ/bound` and where it occurs, for the general bound.
    pub fn worst_general(&self) -> (T, T) {
        worst(&self.times, &self.delta, &self.general)
    }

    pub fn worst_tight(&self) -> (T, T) {
        worst(&self.times, &self.delta, &self.tight)
    }

    /// Fails at the sample with the largest excess over either bound.
    pub fn verify(&self) -> Result<(), DynMapError> {
        let slack = T::lit(BOUND_SLACK);
        let mut violation: Option<(T, usize, &'static str)> = None;
        for k in 0..self.times.len() {
            for (bound, which) in [(self.general[k], "general"), (self.tight[k], "projected")] {
                let excess = self.delta[k] - bound;
                if excess > slack && violation.is_none_or(|(e, _, _)| excess > e) {
                    violation = Some((excess, k, which));
                }
            }
        }
        match violation {
            None => Ok(()),
            Some((_, k, which)) => Err(DynMapError::BoundViolation {
                t: self.times[k].as_f64(),
                delta: self.delta[k].as_f64(),
                bound: if which == "general" { self.general[k] } else { self.tight[k] }.as_f64(),
                which,
            }),
        }
    }

    /// Columns `t, delta, bound_general, bound_sigma_z`; the last holds the
    /// projected bound, which for `O = σz` is the `σz`-specific one.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DynMapError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "delta", "bound_general", "bound_sigma_z"])?;
        for k in 0..self.times.len() {
            let row = [self.times[k], self.delta[k], self.general[k], self.tight[k]];
            wtr.write_record(row.iter().map(|x| format!("{:e}", x.as_f64())))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn worst<T: Real>(times: &[T], delta: &[T], bound: &[T]) -> (T, T) {
    let mut best = (T::zero(), times.first().copied().unwrap_or(T::zero()));
    for k in 0..times.len() {
        let r = if bound[k] > T::zero() {
            delta[k] / bound[k]
        } else if delta[k] > T::zero() {
            T::max_value().expect("bounded")
        } else {
            T::zero()
        };
        if r > best.0 {
            best = (r, times[k]);
        }
    }
    best
}

/// Evaluates both bounds for the pair with initial Bloch vectors `a1`, `a2`.
pub fn bound_series<T: Real>(
    svd: &SvdSeries<T>,
    a1: &BlochVector<T>,
    a2: &BlochVector<T>,
    obs: &Observable<T>,
    delta: &[T],
) -> Result<BoundReport<T>, DynMapError> {
    if delta.len() != svd.len() {
        return Err(DynMapError::GridMismatch);
    }
    let n = obs.dim();
    if a1.system_dim() != n || a2.system_dim() != n {
        return Err(DynMapError::DimensionMismatch {
            expected: n,
            found: a1.system_dim(),
        });
    }
    let gens = su_generators::<T>(n)?;
    let o: Vec<T> = gens.coefficients(obs.matrix())?.into_iter().map(|c| c.re).collect();
    let o_norm = DVector::from_vec(o).norm();
    let da = (a1.components() - a2.components()).norm();
    let nf = T::from_usize_lossy(n);
    let general_factor = nf * nf.sqrt() / T::lit(2.0).sqrt() * obs.o_max().magnitude() * da;
    let tight_factor = T::lit(0.5) * o_norm * da;
    let s_max: Vec<T> = (0..svd.len()).map(|k| svd.s_max(k)).collect();
    Ok(BoundReport {
        times: svd.times().to_vec(),
        delta: delta.to_vec(),
        general: s_max.iter().map(|&s| general_factor * s).collect(),
        tight: s_max.iter().map(|&s| tight_factor * s).collect(),
    })
}

/// [`bound_series`] followed by [`BoundReport::verify`]: a violation means a
/// numerical or reconstruction bug and is returned as an error.
pub fn bound_check<T: Real>(
    svd: &SvdSeries<T>,
    a1: &BlochVector<T>,
    a2: &BlochVector<T>,
    obs: &Observable<T>,
    delta: &[T],
) -> Result<BoundReport<T>, DynMapError> {
    let report = bound_series(svd, a1, a2, obs, delta)?;
    report.verify()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{density_to_bloch, spin_initial_state};
    use crate::dynmap::{svd_series, AffineBlochMap};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn contracting(n: usize) -> AffineBlochMap<f64> {
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let ms = times.iter().map(|t| DMatrix::identity(3, 3) * (-t).exp()).collect();
        AffineBlochMap::new(2, times, ms, vec![DVector::zeros(3); n]).unwrap()
    }

    #[test]
    fn sigma_z_pair_constants() {
        let svd = svd_series(&contracting(5));
        let a1 = density_to_bloch(&spin_initial_state(0.0, 0.0)).unwrap();
        let a2 = density_to_bloch(&spin_initial_state(PI, 0.0)).unwrap();
        let delta: Vec<f64> = (0..5).map(|k| 2.0 * (-(k as f64) * 0.1).exp()).collect();
        let r = bound_check(&svd, &a1, &a2, &Observable::pauli_z(), &delta).unwrap();
        for k in 0..5 {
            assert_abs_diff_eq!(r.general[k], 4.0 * svd.s_max(k), epsilon = 1e-14);
            assert_abs_diff_eq!(r.tight[k], 2.0 * svd.s_max(k), epsilon = 1e-14);
        }
        // δ saturates the projected bound here.
        assert_abs_diff_eq!(r.worst_tight().0, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(delta[0], 2.0);
    }

    #[test]
    fn identical_states_give_zero() {
        let svd = svd_series(&contracting(3));
        let a = density_to_bloch(&spin_initial_state(0.4, 1.0)).unwrap();
        let r = bound_check(&svd, &a, &a, &Observable::pauli_x(), &[0.0; 3]).unwrap();
        assert!(r.general.iter().chain(&r.tight).all(|&b| b == 0.0));
    }

    #[test]
    fn violation_reports_worst_time() {
        let svd = svd_series(&contracting(4));
        let a1 = density_to_bloch(&spin_initial_state(0.0, 0.0)).unwrap();
        let a2 = density_to_bloch(&spin_initial_state(PI, 0.0)).unwrap();
        let delta = [2.0, 2.0, 2.5, 2.0];
        match bound_check(&svd, &a1, &a2, &Observable::pauli_z(), &delta) {
            Err(DynMapError::BoundViolation { t, which, .. }) => {
                assert_abs_diff_eq!(t, 0.2, epsilon = 1e-15);
                assert_eq!(which, "projected");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delta_of_identical_series_vanishes() {
        let states: Vec<DensityMatrix<f64>> = (0..4).map(|k| spin_initial_state(k as f64 * 0.3, 0.1)).collect();
        let d = delta_observable_states(&states, &states, &Observable::pauli_y()).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
        assert!(delta_observable_states(&states, &states[..2], &Observable::pauli_y()).is_err());
    }

    #[test]
    fn csv_header() {
        let r = BoundReport {
            times: vec![0.0],
            delta: vec![1.0],
            general: vec![2.0],
            tight: vec![1.5],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,delta,bound_general,bound_sigma_z\n0e0,1e0,2e0,1.5e0\n"
        );
    }
}
