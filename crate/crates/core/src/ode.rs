//! Adaptive Dormand–Prince 5(4) integrator for small dense systems.

use nalgebra::DVector;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {0} steps")]
    TooManySteps(usize),
    #[error("output times must be non-decreasing and start at or after t0")]
    BadOutputTimes,
    #[error("right-hand side is not finite at t = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
    /// Steps shorter than `h_min · max(1, |t|)` are an underflow.
    pub h_min: T,
}

impl<T: Real> Default for OdeSettings<T> {
    fn default() -> Self {
        Self {
            rtol: T::lit(1e-10),
            atol: T::lit(1e-10),
            max_steps: 10_000_000,
            h_min: T::lit(1e-14),
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns `y` at each of
/// `t_out`. Output points are hit exactly by shortening the step.
pub fn dopri5<T: Real, F>(
    mut f: F,
    t0: T,
    y0: DVector<T>,
    t_out: &[T],
    settings: &OdeSettings<T>,
) -> Result<Vec<DVector<T>>, OdeError>
where
    F: FnMut(T, &DVector<T>) -> DVector<T>,
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(OdeError::BadOutputTimes);
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut y = y0;
    let mut k: Vec<DVector<T>> = vec![DVector::zeros(n); 7];
    k[0] = f(t, &y);
    let span = t_out.last().map(|&e| e - t0).unwrap_or(T::zero());
    let mut h = (span * T::lit(1e-3)).max_of(T::lit(1e-6));
    let mut steps = 0;
    let mut ytmp = DVector::zeros(n);
    for &target in t_out {
        while t < target {
            steps += 1;
            if steps > settings.max_steps {
                return Err(OdeError::TooManySteps(settings.max_steps));
            }
            let last = target - t <= h;
            let hs = if last { target - t } else { h };
            for s in 1..7 {
                ytmp.copy_from(&y);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = T::lit(A[s][j]);
                    if a != T::zero() {
                        ytmp.axpy(hs * a, kj, T::one());
                    }
                }
                k[s] = f(t + hs * T::lit(C[s]), &ytmp);
            }
            // ytmp now holds the fifth-order solution (stage 7 is FSAL).
            let mut err = T::zero();
            for i in 0..n {
                let e = (0..7).fold(T::zero(), |acc, s| acc + k[s][i] * T::lit(E[s])) * hs;
                let scale = settings.atol + settings.rtol * y[i].magnitude().max_of(ytmp[i].magnitude());
                let r = e / scale;
                err += r * r;
            }
            let err = (err / T::from_usize_lossy(n.max(1))).sqrt();
            if !err.is_finite() {
                return Err(OdeError::NonFinite(t.as_f64()));
            }
            let factor = if err == T::zero() {
                T::lit(5.0)
            } else {
                (T::lit(0.9) * err.powf(T::lit(-0.2))).min_of(T::lit(5.0)).max_of(T::lit(0.2))
            };
            if err <= T::one() {
                t = if last { target } else { t + hs };
                y.copy_from(&ytmp);
                k.swap(0, 6);
                if !last || hs * factor > h {
                    h = hs * factor;
                }
            } else {
                h = hs * factor;
                if h < settings.h_min * t.magnitude().max_of(T::one()) {
                    return Err(OdeError::StepSizeUnderflow {
                        t: t.as_f64(),
                        h: h.as_f64(),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
