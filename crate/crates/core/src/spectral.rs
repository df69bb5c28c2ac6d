//! Bath spectral densities and their equidistant discretisation.
//!
//! A finite bath of oscillators with frequencies `ωₙ` and mass-weighted
//! couplings `cₙ` realises `J(ω) = (π/2) Σ cₙ²/ωₙ δ(ω − ωₙ)`. The discretiser
//! uses `N_b` equal-width bins and assigns each midpoint the weight of its bin,
//! `cₙ² = (2/π) J(ωₙ) ωₙ Δω`.
//!
//! All frequencies are in units of the tunnelling splitting `Δ`.

use std::io::{Read, Write};

use log::warn;
use thiserror::Error;

use crate::quad::{integrate_split, QuadError, QuadSettings};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("negative frequency {0}")]
    NegativeFrequency(f64),
    #[error("invalid density parameters: {0}")]
    InvalidParameters(String),
    #[error("spectral density is negative ({value:e}) at omega = {omega}")]
    InvalidDensity { omega: f64, value: f64 },
    #[error("invalid discretisation range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("need at least one bath mode")]
    NoModes,
    #[error("invalid bath: {0}")]
    InvalidBath(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Frequency-resolved coupling weight of a harmonic bath.
pub trait SpectralDensity<T: Real>: Send + Sync {
    /// `J(ω)` for `ω ≥ 0`.
    fn eval(&self, omega: T) -> Result<T, SpectralError>;

    /// Interval outside which `J` vanishes, or is negligible for quadrature.
    fn support(&self) -> (T, T);

    /// Points where `J` or its derivative jumps.
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }

    /// Discretisation range used when none is configured.
    fn default_range(&self, modes: usize) -> (T, T);
}

/// `J(ω) = (π/2) α ω e^{−ω/ω_c}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhmicDensity<T> {
    pub alpha: T,
    pub omega_c: T,
}

impl<T: Real> OhmicDensity<T> {
    pub fn new(alpha: T, omega_c: T) -> Result<Self, SpectralError> {
        if !(alpha >= T::zero()) || !(omega_c > T::zero()) {
            return Err(SpectralError::InvalidParameters(format!(
                "ohmic density needs alpha >= 0 and omega_c > 0 (got {alpha:?}, {omega_c:?})"
            )));
        }
        Ok(Self { alpha, omega_c })
    }
}

pub fn ohmic_j<T: Real>(omega: T, d: &OhmicDensity<T>) -> Result<T, SpectralError> {
    if omega < T::zero() {
        return Err(SpectralError::NegativeFrequency(omega.as_f64()));
    }
    Ok(T::frac_pi_2() * d.alpha * omega * (-omega / d.omega_c).exp())
}

impl<T: Real> SpectralDensity<T> for OhmicDensity<T> {
    fn eval(&self, omega: T) -> Result<T, SpectralError> {
        ohmic_j(omega, self)
    }

    /// `e^{−60}` relative tail beyond the upper bound.
    fn support(&self) -> (T, T) {
        (T::zero(), T::lit(60.0) * self.omega_c)
    }

    /// `[ω_hi/N, ω_hi]` with `ω_hi = 6ω_c`; a single mode gets `[0, ω_hi]`
    /// since the rule would leave an empty interval.
    fn default_range(&self, modes: usize) -> (T, T) {
        let hi = T::lit(6.0) * self.omega_c;
        if modes <= 1 {
            return (T::zero(), hi);
        }
        (hi / T::from_usize_lossy(modes), hi)
    }
}

/// Fit parameters of the trapped-ion density, in trap units `ω₁`.
pub const TRAPPED_ION_FIT: (f64, f64, f64) = (0.677, 0.541, 1.280);

/// Gapped density `α (π/4) a (u − b) e^{−((u − b)/c)³}` on `[ω_min, ω_max]`,
/// zero elsewhere.
///
/// Parameters are in trap units `ω₁`; `scale` is `ω₁` expressed in units of
/// `Δ`, so `eval` takes and returns values in units of `Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GappedDensity<T> {
    pub alpha: T,
    pub a: T,
    pub b: T,
    pub c: T,
    pub omega_min: T,
    pub omega_max: T,
    pub scale: T,
}

impl<T: Real> GappedDensity<T> {
    pub fn new(alpha: T, a: T, b: T, c: T, omega_min: T, omega_max: T) -> Result<Self, SpectralError> {
        if !(alpha >= T::zero()) || !(c > T::zero()) || !(omega_min > T::zero()) || !(omega_max > omega_min) {
            return Err(SpectralError::InvalidParameters(format!(
                "gapped density needs alpha >= 0, c > 0 and 0 < omega_min < omega_max \
                 (got alpha={alpha:?}, c={c:?}, [{omega_min:?}, {omega_max:?}])"
            )));
        }
        Ok(Self {
            alpha,
            a,
            b,
            c,
            omega_min,
            omega_max,
            scale: T::one(),
        })
    }

    /// Fitted trapped-ion density with support `[b, b + 3c]`, in trap units.
    pub fn trapped_ion(alpha: T) -> Result<Self, SpectralError> {
        let (a, b, c) = TRAPPED_ION_FIT;
        Self::new(alpha, T::lit(a), T::lit(b), T::lit(c), T::lit(b), T::lit(b + 3.0 * c))
    }

    /// Chooses units so that the maximum sits at `ω = 2Δ`.
    pub fn with_delta_from_peak(mut self) -> Self {
        self.scale = T::one();
        self.scale = T::lit(2.0) / self.peak_frequency();
        self
    }

    /// Location of the maximum, `b + c·3^{−1/3}`, in units of `Δ`.
    pub fn peak_frequency(&self) -> T {
        (self.b + self.c * T::lit(3f64.powf(-1.0 / 3.0))) * self.scale
    }
}

pub fn gapped_j<T: Real>(omega: T, d: &GappedDensity<T>) -> T {
    let u = omega / d.scale;
    if u < d.omega_min || u > d.omega_max {
        return T::zero();
    }
    let x = (u - d.b) / d.c;
    d.alpha * T::lit(std::f64::consts::FRAC_PI_4) * d.a * (u - d.b) * (-(x * x * x)).exp() * d.scale
}

impl<T: Real> SpectralDensity<T> for GappedDensity<T> {
    fn eval(&self, omega: T) -> Result<T, SpectralError> {
        Ok(gapped_j(omega, self))
    }

    fn support(&self) -> (T, T) {
        (self.omega_min * self.scale, self.omega_max * self.scale)
    }

    fn breakpoints(&self) -> Vec<T> {
        vec![self.omega_min * self.scale, self.omega_max * self.scale]
    }

    fn default_range(&self, _modes: usize) -> (T, T) {
        self.support()
    }
}

/// Either supported density, as selected by configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density<T> {
    Ohmic(OhmicDensity<T>),
    Gapped(GappedDensity<T>),
}

impl<T: Real> SpectralDensity<T> for Density<T> {
    fn eval(&self, omega: T) -> Result<T, SpectralError> {
        match self {
            Density::Ohmic(d) => d.eval(omega),
            Density::Gapped(d) => d.eval(omega),
        }
    }

    fn support(&self) -> (T, T) {
        match self {
            Density::Ohmic(d) => d.support(),
            Density::Gapped(d) => d.support(),
        }
    }

    fn breakpoints(&self) -> Vec<T> {
        match self {
            Density::Ohmic(d) => d.breakpoints(),
            Density::Gapped(d) => d.breakpoints(),
        }
    }

    fn default_range(&self, modes: usize) -> (T, T) {
        match self {
            Density::Ohmic(d) => d.default_range(modes),
            Density::Gapped(d) => d.default_range(modes),
        }
    }
}

/// Finite set of bath oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBath<T> {
    omegas: Vec<T>,
    couplings: Vec<T>,
}

impl<T: Real> DiscretizedBath<T> {
    /// Requires strictly increasing positive frequencies and finite,
    /// non-negative couplings.
    pub fn new(omegas: Vec<T>, couplings: Vec<T>) -> Result<Self, SpectralError> {
        if omegas.is_empty() {
            return Err(SpectralError::NoModes);
        }
        if omegas.len() != couplings.len() {
            return Err(SpectralError::InvalidBath(format!(
                "{} frequencies but {} couplings",
                omegas.len(),
                couplings.len()
            )));
        }
        if !(omegas[0] > T::zero()) || omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpectralError::InvalidBath(
                "frequencies must be positive and strictly increasing".into(),
            ));
        }
        if couplings.iter().any(|c| !c.is_finite() || *c < T::zero()) {
            return Err(SpectralError::InvalidBath("couplings must be finite and >= 0".into()));
        }
        Ok(Self { omegas, couplings })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[T] {
        &self.omegas
    }

    pub fn couplings(&self) -> &[T] {
        &self.couplings
    }

    /// True when every coupling vanishes.
    pub fn is_decoupled(&self) -> bool {
        self.couplings.iter().all(|c| *c == T::zero())
    }

    /// `(π/2) Σ cₙ²/ωₙ`, the discrete counterpart of `∫ J dω`.
    pub fn density_integral(&self) -> T {
        self.moment(1)
    }

    /// `(π/2) Σ cₙ²/ωₙ²`, the discrete counterpart of `∫ J/ω dω`.
    pub fn inverse_moment(&self) -> T {
        self.moment(2)
    }

    fn moment(&self, power: i32) -> T {
        self.omegas
            .iter()
            .zip(&self.couplings)
            .fold(T::zero(), |acc, (&w, &c)| acc + c * c / w.powi(power))
            * T::frac_pi_2()
    }

    /// Writes `index,omega,coupling` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SpectralError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "omega", "coupling"])?;
        for (i, (om, c)) in self.omegas.iter().zip(&self.couplings).enumerate() {
            wtr.write_record([i.to_string(), format!("{om:e}"), format!("{c:e}")])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, SpectralError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut omegas = Vec::new();
        let mut couplings = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<T, SpectralError> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .map(T::lit)
                    .ok_or_else(|| SpectralError::InvalidBath(format!("bad field {i} in row {rec:?}")))
            };
            omegas.push(parse(1)?);
            couplings.push(parse(2)?);
        }
        Self::new(omegas, couplings)
    }
}

/// Equidistant midpoint discretisation of `J` on `[lo, hi]` into `modes` bins.
pub fn discretize<T: Real, J: SpectralDensity<T> + ?Sized>(
    density: &J,
    modes: usize,
    range: (T, T),
) -> Result<DiscretizedBath<T>, SpectralError> {
    if modes == 0 {
        return Err(SpectralError::NoModes);
    }
    let (lo, hi) = range;
    if !(lo >= T::zero()) || !(hi > lo) {
        return Err(SpectralError::InvalidRange {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let width = (hi - lo) / T::from_usize_lossy(modes);
    let mut omegas = Vec::with_capacity(modes);
    let mut couplings = Vec::with_capacity(modes);
    for n in 0..modes {
        let omega = lo + (T::from_usize_lossy(n) + T::lit(0.5)) * width;
        let j = density.eval(omega)?;
        if j < T::zero() {
            return Err(SpectralError::InvalidDensity {
                omega: omega.as_f64(),
                value: j.as_f64(),
            });
        }
        omegas.push(omega);
        couplings.push((T::lit(2.0) / T::pi() * j * omega * width).sqrt());
    }
    let bath = DiscretizedBath::new(omegas, couplings)?;
    if bath.is_decoupled() {
        warn!("spectral density vanishes on [{lo:?}, {hi:?}]; bath is decoupled");
    }
    Ok(bath)
}

/// Continuum integrals next to their discrete counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumRule<T> {
    pub integral: T,
    pub discrete: T,
    pub inverse_integral: T,
    pub inverse_discrete: T,
}

impl<T: Real> SumRule<T> {
    /// Relative error of `∫ J dω`.
    pub fn relative_error(&self) -> T {
        rel(self.discrete, self.integral)
    }

    /// Relative error of `∫ J/ω dω`.
    pub fn inverse_relative_error(&self) -> T {
        rel(self.inverse_discrete, self.inverse_integral)
    }
}

fn rel<T: Real>(approx: T, exact: T) -> T {
    if exact == T::zero() {
        approx.magnitude()
    } else {
        ((approx - exact) / exact).magnitude()
    }
}

/// Compares the discrete bath with adaptive quadrature over `range`.
pub fn sum_rule<T: Real, J: SpectralDensity<T> + ?Sized>(
    density: &J,
    bath: &DiscretizedBath<T>,
    range: (T, T),
) -> Result<SumRule<T>, SpectralError> {
    let settings = QuadSettings::default();
    let bps = density.breakpoints();
    let f = |w: T| density.eval(w).unwrap_or(T::zero());
    let integral = integrate_split(f, range.0, range.1, &bps, &settings)?;
    let g = |w: T| {
        if w > T::zero() {
            density.eval(w).unwrap_or(T::zero()) / w
        } else {
            T::zero()
        }
    };
    let inverse_integral = integrate_split(g, range.0, range.1, &bps, &settings)?;
    Ok(SumRule {
        integral,
        discrete: bath.density_integral(),
        inverse_integral,
        inverse_discrete: bath.inverse_moment(),
    })
}
