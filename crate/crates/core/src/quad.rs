//! Globally adaptive Gauss–Kronrod (7, 15) quadrature on finite intervals.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge after {subdivisions} subdivisions (estimated error {error:e})")]
    NotConverged { subdivisions: usize, error: f64 },
    #[error("integrand is not finite at {at}")]
    NonFinite { at: f64 },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadSettings<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_subdivisions: usize,
}

impl<T: Real> Default for QuadSettings<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-14),
            rel_tol: T::lit(1e-12),
            max_subdivisions: 4000,
        }
    }
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Result<Panel<T>, QuadError> {
    let half = T::lit(0.5);
    let centre = (a + b) * half;
    let h = (b - a) * half;
    let check = |x: T, y: T| -> Result<T, QuadError> {
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite { at: x.as_f64() })
        }
    };
    let fc = check(centre, f(centre))?;
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = h * T::lit(XGK[j]);
        let f1 = check(centre - dx, f(centre - dx))?;
        let f2 = check(centre + dx, f(centre + dx))?;
        k += (f1 + f2) * T::lit(WGK[j]);
        if j % 2 == 1 {
            g += (f1 + f2) * T::lit(WG[j / 2]);
        }
    }
    Ok(Panel {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).magnitude(),
    })
}

/// `∫_a^b f`, subdividing the worst panel until the summed error estimate
/// meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, settings: &QuadSettings<T>) -> Result<T, QuadError> {
    if a == b {
        return Ok(T::zero());
    }
    if b < a {
        return integrate(f, b, a, settings).map(|v| -v);
    }
    let mut panels = vec![kronrod(&f, a, b)?];
    for _ in 0..settings.max_subdivisions {
        let (total, err) = panels
            .iter()
            .fold((T::zero(), T::zero()), |(v, e), p| (v + p.value, e + p.error));
        if err <= settings.abs_tol.max_of(settings.rel_tol * total.magnitude()) {
            return Ok(total);
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).expect("finite error"))
            .map(|(i, _)| i)
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let mid = (p.a + p.b) * T::lit(0.5);
        panels.push(kronrod(&f, p.a, mid)?);
        panels.push(kronrod(&f, mid, p.b)?);
    }
    let err = panels.iter().fold(T::zero(), |e, p| e + p.error);
    Err(QuadError::NotConverged {
        subdivisions: settings.max_subdivisions,
        error: err.as_f64(),
    })
}

/// Integrates piecewise over sorted, deduplicated `breakpoints` within `[a, b]`.
pub fn integrate_split<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    breakpoints: &[T],
    settings: &QuadSettings<T>,
) -> Result<T, QuadError> {
    let mut cuts: Vec<T> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);
    edges
        .windows(2)
        .try_fold(T::zero(), |acc, w| Ok(acc + integrate(&f, w[0], w[1], settings)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomials_and_exponentials() {
        let s = QuadSettings::default();
        assert_relative_eq!(integrate(|x: f64| x * x, 0.0, 3.0, &s).unwrap(), 9.0, max_relative = 1e-14);
        let v = integrate(|x: f64| (-x).exp(), 0.0, 50.0, &s).unwrap();
        assert_relative_eq!(v, 1.0 - (-50.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(integrate(|x: f64| x, 2.0, 0.0, &s).unwrap(), -2.0, max_relative = 1e-14);
    }

    #[test]
    fn kink_needs_subdivision() {
        let s = QuadSettings::default();
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &s).unwrap();
        assert_relative_eq!(v, 0.5 * (0.09 + 0.49), max_relative = 1e-12);
        let v = integrate_split(|x: f64| if x < 0.3 { 0.0 } else { 1.0 }, 0.0, 1.0, &[0.3], &s).unwrap();
        assert_relative_eq!(v, 0.7, max_relative = 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let s = QuadSettings {
            max_subdivisions: 3,
            ..QuadSettings::default()
        };
        let r = integrate(|x: f64| (100.0 * x).sin().abs(), 0.0, 10.0, &s);
        assert!(matches!(r, Err(QuadError::NotConverged { .. })));
        let r = integrate(|x: f64| 1.0 / (x - 0.5), 0.0, 1.0, &QuadSettings::default());
        assert!(r.is_err());
    }
}
