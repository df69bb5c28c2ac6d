//! Experiment configuration: TOML schema, defaults and validation.
//!
//! Every frequency and rate is in units of `Δ`, every time in `1/Δ`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qinfluence::propagator::{HilbertSpaceSpec, KrylovSettings, TimeGrid};
use qinfluence::spectral::{Density, GappedDensity, OhmicDensity, SpectralDensity, TRAPPED_ION_FIT};
use qinfluence::tcl2::Tcl2Rates;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds every random draw (extra initial states, bound-check samples).
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub delta: f64,
    pub model: ModelConfig,
    pub bath: BathConfig,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub states: StatesConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub tcl2: Tcl2Config,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Ohmic,
    Gapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub density: DensityKind,
    pub alpha: f64,
    /// Ohmic cutoff frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    /// Gapped fit parameters and support, in trap units; default to the
    /// trapped-ion fit with support `[b, b + 3c]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub modes: usize,
    /// Discretisation interval; the density's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HilbertConfig {
    /// Uniform Fock cutoff `d` (levels `0..d`) unless `cutoffs` is given.
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<usize>>,
    /// Largest allowed joint dimension `D = 2 Π dₙ`.
    #[serde(default = "default_max_dimension")]
    pub max_dimension: usize,
    /// Re-run `|↑⟩` with doubled cutoffs and compare `⟨σz⟩`.
    #[serde(default)]
    pub convergence_check: bool,
    #[serde(default = "default_convergence_threshold")]
    pub convergence_threshold: f64,
}

fn default_cutoff() -> usize {
    4
}

fn default_max_dimension() -> usize {
    1 << 22
}

fn default_convergence_threshold() -> f64 {
    1e-4
}

impl Default for HilbertConfig {
    fn default() -> Self {
        Self {
            cutoff: default_cutoff(),
            cutoffs: None,
            max_dimension: default_max_dimension(),
            convergence_check: false,
            convergence_threshold: default_convergence_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub steps: usize,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            steps: 200,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    pub krylov_dim: usize,
    pub tol: f64,
    pub max_halvings: u32,
    /// Checkpoint every this many steps; 0 disables checkpointing.
    pub checkpoint_every: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        let k = KrylovSettings::<f64>::default();
        Self {
            krylov_dim: k.krylov_dim,
            tol: k.tol,
            max_halvings: k.max_halvings,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesConfig {
    /// Extra pure initial states `[θ, φ]` propagated next to the basis.
    #[serde(default)]
    pub extra: Vec<[f64; 2]>,
    /// Number of further states drawn uniformly on the sphere from `seed`.
    #[serde(default)]
    pub random: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Trailing window in units of `1/Δ`; 0 means 20% of the run.
    pub window: f64,
    pub tol_stationary: f64,
    pub tol_zero: f64,
    /// Random (pair, observable) draws for `bound-check`.
    pub bound_draws: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: 0.0,
            tol_stationary: 1e-3,
            tol_zero: 1e-2,
            bound_draws: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tcl2Config {
    /// Explicit rates; all four or none. Otherwise computed from the density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_xx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_yy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_yz: Option<f64>,
    /// An `svd.csv` from `analyze` to compare the analytic singular values with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<PathBuf>,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tcl2Config {
    fn default() -> Self {
        Self {
            gamma_xx: None,
            gamma_x: None,
            gamma_yy: None,
            gamma_yz: None,
            compare: None,
            rtol: 1e-10,
            atol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn default_config() -> Self {
        Self {
            seed: 0,
            delta: 1.0,
            model: ModelConfig {
                density: DensityKind::Ohmic,
                alpha: 0.2,
                omega_c: Some(5.0),
                a: None,
                b: None,
                c: None,
                omega_min: None,
                omega_max: None,
            },
            bath: BathConfig { modes: 4, range: None },
            hilbert: HilbertConfig {
                cutoff: 6,
                ..HilbertConfig::default()
            },
            time: TimeConfig::default(),
            propagator: PropagatorConfig::default(),
            states: StatesConfig::default(),
            analysis: AnalysisConfig::default(),
            tcl2: Tcl2Config::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serialisable")
    }

    /// Schema checks that need more than types; run before any compute.
    pub fn validate(&self) -> Result<(), CliError> {
        positive("delta", self.delta)?;
        let m = &self.model;
        if !(m.alpha.is_finite() && m.alpha >= 0.0) {
            return Err(bad(format!("model.alpha must be >= 0, got {}", m.alpha)));
        }
        match m.density {
            DensityKind::Ohmic => {
                positive("model.omega_c", m.omega_c.ok_or_else(|| bad("ohmic model needs omega_c"))?)?;
                if m.a.or(m.b).or(m.c).or(m.omega_min).or(m.omega_max).is_some() {
                    return Err(bad("a, b, c, omega_min, omega_max only apply to the gapped model"));
                }
            }
            DensityKind::Gapped => {
                if m.omega_c.is_some() {
                    return Err(bad("omega_c only applies to the ohmic model"));
                }
            }
        }
        self.density()?;
        if self.bath.modes == 0 {
            return Err(bad("bath.modes must be at least 1"));
        }
        if let Some([lo, hi]) = self.bath.range {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(bad(format!("bath.range must satisfy 0 <= lo < hi, got [{lo}, {hi}]")));
            }
        }
        let h = &self.hilbert;
        let cut = h.cutoffs.clone().unwrap_or_else(|| vec![h.cutoff; self.bath.modes]);
        if cut.len() != self.bath.modes {
            return Err(bad(format!(
                "hilbert.cutoffs has {} entries for {} modes",
                cut.len(),
                self.bath.modes
            )));
        }
        if cut.contains(&0) {
            return Err(bad("every Fock cutoff must be at least 1"));
        }
        positive("hilbert.convergence_threshold", h.convergence_threshold)?;
        positive("time.dt", self.time.dt)?;
        if self.time.steps == 0 || self.time.stride == 0 {
            return Err(bad("time.steps and time.stride must be at least 1"));
        }
        let p = &self.propagator;
        if p.krylov_dim < 2 {
            return Err(bad("propagator.krylov_dim must be at least 2"));
        }
        positive("propagator.tol", p.tol)?;
        for (i, [theta, phi]) in self.states.extra.iter().enumerate() {
            if !(theta.is_finite() && phi.is_finite()) {
                return Err(bad(format!("states.extra[{i}] is not finite")));
            }
        }
        let a = &self.analysis;
        if !(a.window >= 0.0) {
            return Err(bad("analysis.window must be >= 0"));
        }
        positive("analysis.tol_stationary", a.tol_stationary)?;
        positive("analysis.tol_zero", a.tol_zero)?;
        let t = &self.tcl2;
        let given = [t.gamma_xx, t.gamma_x, t.gamma_yy, t.gamma_yz].iter().filter(|g| g.is_some()).count();
        if given != 0 && given != 4 {
            return Err(bad("tcl2 rates must be given all together (gamma_xx, gamma_x, gamma_yy, gamma_yz) or not at all"));
        }
        positive("tcl2.rtol", t.rtol)?;
        positive("tcl2.atol", t.atol)?;
        Ok(())
    }

    pub fn density(&self) -> Result<Density<f64>, CliError> {
        let m = &self.model;
        let d = match m.density {
            DensityKind::Ohmic => Density::Ohmic(OhmicDensity::new(m.alpha, m.omega_c.unwrap_or(f64::NAN))?),
            DensityKind::Gapped => {
                let (fa, fb, fc) = TRAPPED_ION_FIT;
                let (a, b, c) = (m.a.unwrap_or(fa), m.b.unwrap_or(fb), m.c.unwrap_or(fc));
                let lo = m.omega_min.unwrap_or(b);
                let hi = m.omega_max.unwrap_or(b + 3.0 * c);
                let g = GappedDensity::new(m.alpha, a, b, c, lo, hi)?;
                if lo < b {
                    return Err(bad(format!("gapped density is negative below b = {b}; omega_min = {lo} must be >= b")));
                }
                Density::Gapped(g.with_delta_from_peak())
            }
        };
        Ok(d)
    }

    pub fn range(&self) -> Result<(f64, f64), CliError> {
        Ok(match self.bath.range {
            Some([lo, hi]) => (lo, hi),
            None => self.density()?.default_range(self.bath.modes),
        })
    }

    pub fn hilbert_spec(&self) -> Result<HilbertSpaceSpec, CliError> {
        let h = &self.hilbert;
        let cut = h.cutoffs.clone().unwrap_or_else(|| vec![h.cutoff; self.bath.modes]);
        Ok(HilbertSpaceSpec::new(cut, h.max_dimension)?)
    }

    pub fn grid(&self) -> Result<TimeGrid<f64>, CliError> {
        Ok(TimeGrid::new(self.time.dt, self.time.steps, self.time.stride)?)
    }

    pub fn krylov(&self) -> KrylovSettings<f64> {
        KrylovSettings {
            krylov_dim: self.propagator.krylov_dim,
            tol: self.propagator.tol,
            max_halvings: self.propagator.max_halvings,
        }
    }

    pub fn explicit_rates(&self) -> Option<Tcl2Rates<f64>> {
        let t = &self.tcl2;
        Some(Tcl2Rates {
            gamma_xx: t.gamma_xx?,
            gamma_x: t.gamma_x?,
            gamma_yy: t.gamma_yy?,
            gamma_yz: t.gamma_yz?,
        })
    }

    /// Analysis window for data spanning `span`; a fifth of it when unset.
    pub fn window(&self, span: f64) -> f64 {
        if self.analysis.window > 0.0 {
            self.analysis.window
        } else {
            0.2 * span
        }
    }
}
