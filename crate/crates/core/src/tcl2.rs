//! Weak-coupling (second-order time-convolutionless) description of the
//! unbiased spin-boson model with stationary rates.
//!
//! Equations of motion for the Bloch vector `(x, y, z)`:
//!
//! ```text
//! x' = −Γxx x − Γx
//! y' = −Γyy y − (2Δ − Γyz) z
//! z' = 2Δ y
//! ```
//!
//! Rate convention (zero temperature, `H_S = Δσx`, coupling `σz ⊗ B`, bath
//! correlation `C(τ) = (1/π) ∫ J(ω) e^{−iωτ} dω`):
//!
//! ```text
//! Γxx = Γyy = Γx = 2 J(2Δ)
//! Γyz = (2/π) [ P∫ J(ω)/(ω − 2Δ) dω − ∫ J(ω)/(ω + 2Δ) dω ]
//! ```

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bloch::{bloch_to_density, BlochVector};
use crate::dynmap::{AffineBlochMap, DynMapError};
use crate::ode::{dopri5, OdeError, OdeSettings};
use crate::propagator::{PropagatorError, Trajectory};
use crate::quad::{integrate_split, QuadError, QuadSettings};
use crate::scalar::Real;
use crate::spectral::{SpectralDensity, SpectralError};

#[derive(Debug, Error)]
pub enum Tcl2Error {
    #[error("overdamped regime: 8Δ(2Δ − Γyz) − Γyy² = {discriminant:e} <= 0; closed forms need oscillatory dynamics")]
    Overdamped { discriminant: f64 },
    #[error("A² − 4B = {value:e} is negative beyond rounding")]
    Inconsistent { value: f64 },
    #[error("principal value is undefined: J jumps at 2Δ = {omega}")]
    SingularPrincipalValue { omega: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    DynMap(#[from] DynMapError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Bloch(#[from] crate::bloch::BlochError),
}

/// Stationary TCL2 rates in units of `Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tcl2Rates<T> {
    pub gamma_xx: T,
    pub gamma_x: T,
    pub gamma_yy: T,
    pub gamma_yz: T,
}

impl<T: Real> Tcl2Rates<T> {
    pub fn zero() -> Self {
        Self {
            gamma_xx: T::zero(),
            gamma_x: T::zero(),
            gamma_yy: T::zero(),
            gamma_yz: T::zero(),
        }
    }

    pub fn scaled(&self, f: T) -> Self {
        Self {
            gamma_xx: self.gamma_xx * f,
            gamma_x: self.gamma_x * f,
            gamma_yy: self.gamma_yy * f,
            gamma_yz: self.gamma_yz * f,
        }
    }

    /// Physically suspicious values; not errors.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !(self.gamma_xx > T::zero()) {
            w.push(format!("Γxx = {:?} is not positive: no relaxation of ⟨σx⟩", self.gamma_xx));
        }
        if self.gamma_yy < T::zero() {
            w.push(format!("Γyy = {:?} is negative: ⟨σy⟩, ⟨σz⟩ grow", self.gamma_yy));
        }
        w
    }

    /// `(−Γx/Γxx, 0, 0)`, the stationary Bloch vector.
    pub fn fixed_point(&self) -> [T; 3] {
        [-self.gamma_x / self.gamma_xx, T::zero(), T::zero()]
    }
}

/// Rates as a function of time; the stationary approximation uses
/// [`Tcl2Rates`] itself, which is constant.
pub trait RateSchedule<T: Real>: Sync {
    fn rates_at(&self, t: T) -> Tcl2Rates<T>;
}

impl<T: Real> RateSchedule<T> for Tcl2Rates<T> {
    fn rates_at(&self, _t: T) -> Tcl2Rates<T> {
        *self
    }
}

/// `Δ̃ = ½ √(8Δ(2Δ − Γyz) − Γyy²)`.
pub fn renormalized_frequency<T: Real>(delta: T, rates: &Tcl2Rates<T>) -> Result<T, Tcl2Error> {
    let disc = T::lit(8.0) * delta * (T::lit(2.0) * delta - rates.gamma_yz) - rates.gamma_yy * rates.gamma_yy;
    if !(disc > T::zero()) {
        return Err(Tcl2Error::Overdamped {
            discriminant: disc.as_f64(),
        });
    }
    Ok(T::lit(0.5) * disc.sqrt())
}

/// `(S₊, S₋, S_x)`; `S₊ ≥ S₋` but `S_x` may sit anywhere in the ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSingularValues<T> {
    pub plus: T,
    pub minus: T,
    pub x: T,
}

impl<T: Real> AnalyticSingularValues<T> {
    pub fn sorted(&self) -> [T; 3] {
        let mut s = [self.plus, self.minus, self.x];
        s.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        s
    }
}

/// Closed-form solution in the oscillatory regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tcl2Model<T> {
    pub delta: T,
    pub rates: Tcl2Rates<T>,
    delta_tilde: T,
}

impl<T: Real> Tcl2Model<T> {
    pub fn new(delta: T, rates: Tcl2Rates<T>) -> Result<Self, Tcl2Error> {
        Ok(Self {
            delta,
            rates,
            delta_tilde: renormalized_frequency(delta, &rates)?,
        })
    }

    pub fn delta_tilde(&self) -> T {
        self.delta_tilde
    }

    /// Modulation period `π/Δ̃` of `S±`.
    pub fn period(&self) -> T {
        T::pi() / self.delta_tilde
    }

    /// `g = Γyy/(2Δ̃)`, `p = (2Δ − Γyz)/Δ̃`, `q = 2Δ/Δ̃`.
    fn gpq(&self) -> (T, T, T) {
        let two = T::lit(2.0);
        (
            self.rates.gamma_yy / (two * self.delta_tilde),
            (two * self.delta - self.rates.gamma_yz) / self.delta_tilde,
            two * self.delta / self.delta_tilde,
        )
    }

    /// `(M(t), b(t))`; `M` is block diagonal with `M₁₁ = e^{−Γxx t}`.
    pub fn affine(&self, t: T) -> (DMatrix<T>, DVector<T>) {
        let (g, p, q) = self.gpq();
        let (s, c) = (self.delta_tilde * t).sin_cos();
        let damp = (-self.rates.gamma_yy * t * T::lit(0.5)).exp();
        let ex = (-self.rates.gamma_xx * t).exp();
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = ex;
        m[(1, 1)] = damp * (c - g * s);
        m[(1, 2)] = -damp * p * s;
        m[(2, 1)] = damp * q * s;
        m[(2, 2)] = damp * (c + g * s);
        let b1 = if self.rates.gamma_xx == T::zero() {
            -self.rates.gamma_x * t
        } else {
            -self.rates.gamma_x / self.rates.gamma_xx * (T::one() - ex)
        };
        (m, DVector::from_vec(vec![b1, T::zero(), T::zero()]))
    }

    /// `A = ‖K̂‖_F²` and `B = (det K̂)²` of the undamped `(y, z)` block `K̂`.
    pub fn a_b(&self, t: T) -> (T, T) {
        let (g, p, q) = self.gpq();
        let (s, c) = (self.delta_tilde * t).sin_cos();
        let two = T::lit(2.0);
        let a = two * c * c + (two * g * g + p * p + q * q) * s * s;
        let det = c * c - g * g * s * s + p * q * s * s;
        (a, det * det)
    }

    /// `S± = e^{−Γyy t/2} √((A ± √(A² − 4B))/2)`, `S_x = e^{−Γxx t}`.
    pub fn singular_values(&self, t: T) -> Result<AnalyticSingularValues<T>, Tcl2Error> {
        let (a, b) = self.a_b(t);
        let mut disc = a * a - T::lit(4.0) * b;
        if disc < T::zero() {
            if disc < -T::lit(1e-10) * a * a {
                return Err(Tcl2Error::Inconsistent { value: disc.as_f64() });
            }
            disc = T::zero();
        }
        let root = disc.sqrt();
        let damp = (-self.rates.gamma_yy * t * T::lit(0.5)).exp();
        let half = T::lit(0.5);
        Ok(AnalyticSingularValues {
            plus: damp * ((a + root) * half).sqrt(),
            minus: damp * ((a - root) * half).max_of(T::zero()).sqrt(),
            x: (-self.rates.gamma_xx * t).exp(),
        })
    }

    pub fn affine_map(&self, times: &[T]) -> Result<AffineBlochMap<T>, Tcl2Error> {
        let (m, b) = times.iter().map(|&t| self.affine(t)).unzip();
        Ok(AffineBlochMap::new(2, times.to_vec(), m, b)?)
    }

    /// Same columns as the reconstructed SVD table: `t, S1, S2, S3, b1, b2, b3`
    /// with `S` sorted descending.
    pub fn write_svd_csv<W: Write>(&self, times: &[T], w: W) -> Result<(), Tcl2Error> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Tcl2Error::DynMap(DynMapError::Csv(e));
        wtr.write_record(["t", "S1", "S2", "S3", "b1", "b2", "b3"]).map_err(io)?;
        for &t in times {
            let s = self.singular_values(t)?.sorted();
            let (_, b) = self.affine(t);
            let row = [t, s[0], s[1], s[2], b[0], b[1], b[2]];
            wtr.write_record(row.iter().map(|x| format!("{:e}", x.as_f64()))).map_err(io)?;
        }
        wtr.flush().map_err(|e| Tcl2Error::DynMap(DynMapError::Io(e)))?;
        Ok(())
    }
}

pub fn analytic_affine<T: Real>(delta: T, rates: &Tcl2Rates<T>, t: T) -> Result<(DMatrix<T>, DVector<T>), Tcl2Error> {
    Ok(Tcl2Model::new(delta, *rates)?.affine(t))
}

pub fn analytic_singular_values<T: Real>(
    delta: T,
    rates: &Tcl2Rates<T>,
    t: T,
) -> Result<AnalyticSingularValues<T>, Tcl2Error> {
    Tcl2Model::new(delta, *rates)?.singular_values(t)
}

/// Integrates the TCL2 Bloch equations and returns the Bloch vectors at `times`
/// (starting from `a0` at `t = 0`). Valid in every regime.
pub fn solve_bloch_equations<T: Real, R: RateSchedule<T> + ?Sized>(
    delta: T,
    schedule: &R,
    a0: [T; 3],
    times: &[T],
    settings: &OdeSettings<T>,
) -> Result<Vec<[T; 3]>, Tcl2Error> {
    let two_delta = T::lit(2.0) * delta;
    let rhs = |t: T, a: &DVector<T>| {
        let r = schedule.rates_at(t);
        DVector::from_vec(vec![
            -r.gamma_xx * a[0] - r.gamma_x,
            -r.gamma_yy * a[1] - (two_delta - r.gamma_yz) * a[2],
            two_delta * a[1],
        ])
    };
    let ys = dopri5(rhs, T::zero(), DVector::from_vec(a0.to_vec()), times, settings)?;
    Ok(ys.into_iter().map(|y| [y[0], y[1], y[2]]).collect())
}

/// [`solve_bloch_equations`] packaged as a spin trajectory. States are not
/// checked for positivity: stationary-rate TCL2 need not preserve it.
pub fn solve_tcl2_ode<T: Real, R: RateSchedule<T> + ?Sized>(
    delta: T,
    schedule: &R,
    a0: &BlochVector<T>,
    times: &[T],
    settings: &OdeSettings<T>,
) -> Result<Trajectory<T>, Tcl2Error> {
    if a0.len() != 3 {
        return Err(Tcl2Error::DynMap(DynMapError::DimensionMismatch {
            expected: 3,
            found: a0.len(),
        }));
    }
    let sol = solve_bloch_equations(delta, schedule, [a0[0], a0[1], a0[2]], times, settings)?;
    let states = sol
        .iter()
        .map(|a| bloch_to_density(&BlochVector::from_slice(a)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory::new("tcl2", times.to_vec(), states)?)
}

/// Stationary zero-temperature rates for the density `J` (see module docs).
pub fn rates_from_spectral_density<T: Real, J: SpectralDensity<T> + ?Sized>(
    density: &J,
    delta: T,
) -> Result<Tcl2Rates<T>, Tcl2Error> {
    let two = T::lit(2.0);
    let w0 = two * delta;
    let j0 = density.eval(w0)?;
    let gamma = two * j0;
    let (lo, hi) = density.support();
    let settings = QuadSettings::default();
    let f = |w: T| density.eval(w).unwrap_or(T::zero());
    let mut cuts = density.breakpoints();

    let anti = integrate_split(|w: T| f(w) / (w + w0), lo, hi, &cuts, &settings)?;
    let pv = if w0 > lo && w0 < hi {
        if cuts.iter().any(|&c| (c - w0).magnitude() <= T::default_epsilon() * w0) && j0 != T::zero() {
            return Err(Tcl2Error::SingularPrincipalValue { omega: w0.as_f64() });
        }
        // P∫ J/(ω−ω₀) = ∫ (J − J(ω₀))/(ω − ω₀) + J(ω₀) ln((hi − ω₀)/(ω₀ − lo))
        cuts.push(w0);
        let regular = integrate_split(
            |w: T| if w == w0 { T::zero() } else { (f(w) - j0) / (w - w0) },
            lo,
            hi,
            &cuts,
            &settings,
        )?;
        regular + j0 * ((hi - w0) / (w0 - lo)).ln()
    } else {
        integrate_split(|w: T| f(w) / (w - w0), lo, hi, &cuts, &settings)?
    };
    Ok(Tcl2Rates {
        gamma_xx: gamma,
        gamma_x: gamma,
        gamma_yy: gamma,
        gamma_yz: two / T::pi() * (pv - anti),
    })
}
