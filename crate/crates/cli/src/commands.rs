//! The five subcommands. Each writes its CSVs under the output directory and
//! fills in the run manifest; `main` turns errors into exit codes.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qinfluence::bloch::{bloch_to_density, density_to_bloch, spin_amplitudes, BlochVector, DensityMatrix, Observable};
use qinfluence::dynmap::{
    bound_series, classify_asymptotics, delta_observable, delta_observable_states, reconstruct_map, svd_series,
    tensor_to_affine, AffineBlochMap, BoundReport, Classification, SvdSeries, SvdTable, BOUND_SLACK, TRACE_TOL,
};
use qinfluence::ode::OdeSettings;
use qinfluence::propagator::{
    build_hamiltonian, convergence_study, run_trajectory, Checkpoint, HilbertSpaceSpec, KrylovSettings,
    PropagatorError, RunHooks, SparseHamiltonian, StepStats, TimeGrid, Trajectory, TrajectoryDiagnostics,
    TrajectorySet, BASIS_LABELS,
};
use qinfluence::spectral::{discretize as discretize_density, sum_rule, DiscretizedBath};
use qinfluence::tcl2::{rates_from_spectral_density, solve_bloch_equations, Tcl2Model, Tcl2Rates};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{config_hash, RunManifest};

/// Relative sum-rule error above which the discretisation is flagged.
const SUM_RULE_WARN: f64 = 1e-3;
const NORM_DRIFT_WARN: f64 = 1e-9;
const ENERGY_DRIFT_WARN: f64 = 1e-8;
/// Analytic and integrated TCL2 solutions must agree to this.
const ODE_AGREEMENT: f64 = 1e-8;
const TRAJECTORY_DIR: &str = "trajectories";

/// `[θ, φ]` of `|↑⟩, |↓⟩, |+x⟩, |+y⟩`, in the order of `BASIS_LABELS`.
const BASIS_ANGLES: [[f64; 2]; 4] = [[0.0, 0.0], [PI, 0.0], [PI / 2.0, 0.0], [PI / 2.0, PI / 2.0]];

fn create(out: &Path, name: &str, m: &mut RunManifest) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    m.output(Path::new(name));
    Ok(BufWriter::new(File::create(&path)?))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn bath(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<DiscretizedBath<f64>, CliError> {
    let density = cfg.density()?;
    let range = cfg.range()?;
    let bath = discretize_density(&density, cfg.bath.modes, range)?;
    bath.write_csv(create(out, "bath.csv", m)?)?;
    let rule = sum_rule(&density, &bath, range)?;
    m.convergence.sum_rule_error = Some(rule.relative_error());
    m.convergence.inverse_sum_rule_error = Some(rule.inverse_relative_error());
    m.detail("range", vec![range.0, range.1]);
    m.detail("sum_rule_integral", rule.integral);
    m.detail("sum_rule_discrete", rule.discrete);
    if rule.relative_error() > SUM_RULE_WARN {
        m.warn(format!(
            "sum rule: discrete ∫J differs from quadrature by {:.3e} (relative); the discretisation is coarse",
            rule.relative_error()
        ));
    }
    if bath.is_decoupled() && cfg.model.alpha > 0.0 {
        m.warn("the spectral density vanishes on the discretisation range; the bath is decoupled");
    }
    Ok(bath)
}

pub fn discretize(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let bath = bath(cfg, out, m)?;
    println!(
        "discretized {} modes; sum rule relative error {:.3e}, inverse moment {:.3e}",
        bath.len(),
        m.convergence.sum_rule_error.unwrap_or(f64::NAN),
        m.convergence.inverse_sum_rule_error.unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Basis states, then `states.extra`, then `states.random` draws uniform on
/// the sphere.
fn initial_states(cfg: &ExperimentConfig) -> Vec<(String, [f64; 2])> {
    let mut jobs: Vec<(String, [f64; 2])> =
        BASIS_LABELS.iter().zip(BASIS_ANGLES).map(|(l, a)| (l.to_string(), a)).collect();
    jobs.extend(cfg.states.extra.iter().enumerate().map(|(i, a)| (format!("extra_{i}"), *a)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.states.random {
        let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
        let phi = 2.0 * PI * rng.random::<f64>();
        jobs.push((format!("random_{i}"), [theta, phi]));
    }
    jobs
}

fn merge(a: Option<TrajectoryDiagnostics<f64>>, b: TrajectoryDiagnostics<f64>) -> TrajectoryDiagnostics<f64> {
    let Some(a) = a else { return b };
    TrajectoryDiagnostics {
        stats: StepStats {
            steps: a.stats.steps + b.stats.steps,
            substeps: a.stats.substeps + b.stats.substeps,
            max_error_estimate: a.stats.max_error_estimate.max(b.stats.max_error_estimate),
        },
        max_norm_drift: a.max_norm_drift.max(b.max_norm_drift),
        max_energy_drift: a.max_energy_drift.max(b.max_energy_drift),
        max_cutoff_population: a
            .max_cutoff_population
            .iter()
            .zip(&b.max_cutoff_population)
            .map(|(x, y)| x.max(*y))
            .collect(),
    }
}

struct Job<'a> {
    h: &'a SparseHamiltonian<f64>,
    spec: &'a HilbertSpaceSpec,
    grid: &'a TimeGrid<f64>,
    settings: &'a KrylovSettings<f64>,
    dir: &'a Path,
    every: usize,
}

impl Job<'_> {
    /// Runs one trajectory, in checkpointed segments when enabled. After each
    /// segment the samples so far go to `<label>.partial.csv` and the state to
    /// `<label>.ckpt`; a rerun resumes from there.
    fn run(&self, label: &str, spin: [Complex64; 2]) -> Result<(Trajectory<f64>, TrajectoryDiagnostics<f64>), CliError> {
        let (every, grid) = (self.every, self.grid);
        if every == 0 || every >= grid.steps {
            return Ok(run_trajectory(self.h, self.spec, spin, grid, self.settings, label, RunHooks::default())?);
        }
        let ckpt = self.dir.join(format!("{label}.ckpt"));
        let next = self.dir.join(format!("{label}.ckpt.next"));
        let partial = self.dir.join(format!("{label}.partial.csv"));
        let (mut done, mut resume) = if ckpt.exists() && partial.exists() {
            let c = Checkpoint::<f64>::load(&ckpt)?;
            let mut t = Trajectory::read_csv(label, File::open(&partial)?)?;
            t.truncate_before(c.t);
            log::info!("{label}: resuming from step {}", c.step);
            (Some(t), Some(c))
        } else {
            (None, None)
        };
        let mut diag = None;
        loop {
            let start = resume.as_ref().map_or(0, |c| c.step);
            let end = ((start / every + 1) * every).min(grid.steps);
            let segment = TimeGrid {
                steps: end,
                ..*grid
            };
            let hooks = RunHooks {
                resume: resume.take(),
                checkpoint: (end < grid.steps).then_some((next.as_path(), every)),
            };
            let (mut seg, d) = run_trajectory(self.h, self.spec, spin, &segment, self.settings, label, hooks)?;
            diag = Some(merge(diag, d));
            if end == grid.steps {
                let traj = match done {
                    Some(mut t) => {
                        t.extend(seg);
                        t
                    }
                    None => seg,
                };
                for p in [&ckpt, &partial] {
                    let _ = fs::remove_file(p);
                }
                return Ok((traj, diag.expect("at least one segment ran")));
            }
            let c = Checkpoint::<f64>::load(&next)?;
            seg.truncate_before(c.t);
            let acc = match done {
                Some(mut t) => {
                    t.extend(seg);
                    t
                }
                None => seg,
            };
            // Samples first, then the state: a crash in between leaves an
            // older checkpoint, and resuming truncates the surplus samples.
            let mut w = BufWriter::new(File::create(&partial)?);
            acc.write_csv(&mut w)?;
            w.flush()?;
            fs::rename(&next, &ckpt)?;
            done = Some(acc);
            resume = Some(c);
        }
    }
}

/// Drops checkpoints written under a different configuration.
fn prepare_checkpoints(dir: &Path, hash: &str, m: &mut RunManifest) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let stamp = dir.join("checkpoint.hash");
    let stale = fs::read_to_string(&stamp).map(|s| s.trim() != hash).unwrap_or(true);
    if stale {
        let mut dropped = 0;
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if [".ckpt", ".ckpt.next", ".ckpt.tmp", ".partial.csv"].iter().any(|s| name.ends_with(s)) {
                fs::remove_file(&path)?;
                dropped += 1;
            }
        }
        if dropped > 0 {
            m.warn(format!("discarded {dropped} checkpoint files written under a different configuration"));
        }
        fs::write(&stamp, format!("{hash}\n"))?;
    }
    Ok(())
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let bath = bath(cfg, out, m)?;
    let spec = cfg.hilbert_spec()?;
    let grid = cfg.grid()?;
    let settings = cfg.krylov();
    let h = build_hamiltonian(&bath, cfg.delta, &spec)?;
    m.detail("dimension", spec.dimension());
    m.detail("nnz", h.nnz());
    let jobs = initial_states(cfg);
    {
        let mut w = csv::Writer::from_writer(create(out, "states.csv", m)?);
        w.write_record(["label", "theta", "phi"])?;
        for (label, [theta, phi]) in &jobs {
            w.write_record([label.clone(), num(*theta), num(*phi)])?;
        }
        w.flush()?;
    }
    let dir = out.join(TRAJECTORY_DIR);
    let every = cfg.propagator.checkpoint_every;
    if every > 0 {
        prepare_checkpoints(&dir, &config_hash(cfg), m)?;
    }
    let job = Job {
        h: &h,
        spec: &spec,
        grid: &grid,
        settings: &settings,
        dir: &dir,
        every,
    };
    log::info!("propagating {} trajectories in a space of dimension {}", jobs.len(), spec.dimension());
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(label, [theta, phi])| job.run(label, spin_amplitudes(*theta, *phi)))
        .collect();

    let mut worst: Option<TrajectoryDiagnostics<f64>> = None;
    let mut cutoff_ok = true;
    for ((label, _), r) in jobs.iter().zip(results) {
        let (traj, diag) = r?;
        traj.write_csv(create(out, &format!("{TRAJECTORY_DIR}/traj_{label}.csv"), m)?)?;
        if !diag.cutoff_ok() {
            cutoff_ok = false;
            m.warn(format!(
                "{label}: top Fock level population {:.3e} exceeds {:e}; raise the cutoff",
                diag.max_cutoff_population.iter().fold(0.0f64, |a, &b| a.max(b)),
                qinfluence::propagator::CUTOFF_THRESHOLD
            ));
        }
        worst = Some(merge(worst, diag));
    }
    let worst = worst.expect("the basis is always propagated");
    let c = &mut m.convergence;
    c.cutoff_ok = Some(cutoff_ok);
    c.max_cutoff_population = Some(worst.max_cutoff_population.iter().fold(0.0, |a, &b| a.max(b)));
    c.max_norm_drift = Some(worst.max_norm_drift);
    c.max_energy_drift = Some(worst.max_energy_drift);
    if worst.max_norm_drift > NORM_DRIFT_WARN {
        m.warn(format!("norm drift {:.3e} exceeds {NORM_DRIFT_WARN:e}", worst.max_norm_drift));
    }
    if worst.max_energy_drift > ENERGY_DRIFT_WARN {
        m.warn(format!("relative energy drift {:.3e} exceeds {ENERGY_DRIFT_WARN:e}", worst.max_energy_drift));
    }
    m.detail("krylov_substeps", worst.stats.substeps);

    if cfg.hilbert.convergence_check {
        let up = spin_amplitudes(0.0, 0.0);
        match convergence_study(&bath, cfg.delta, &spec, &grid, &settings, up, cfg.hilbert.convergence_threshold) {
            Ok(r) => {
                m.convergence.doubled_cutoff_change = Some(r.max_sigma_z_change);
                m.convergence.doubled_cutoff_converged = Some(r.converged());
                if !r.converged() {
                    m.warn(format!(
                        "doubling the cutoffs changes ⟨σz⟩ by {:.3e} (threshold {:e})",
                        r.max_sigma_z_change, r.threshold
                    ));
                }
            }
            Err(PropagatorError::BudgetExceeded { required, allowed }) => m.warn(format!(
                "convergence check skipped: doubled cutoffs need dimension {required} > {allowed}"
            )),
            Err(e) => return Err(e.into()),
        }
    }
    println!(
        "simulated {} trajectories (D = {}); norm drift {:.2e}, energy drift {:.2e}, cutoff {}",
        jobs.len(),
        spec.dimension(),
        worst.max_norm_drift,
        worst.max_energy_drift,
        if cutoff_ok { "ok" } else { "FLAGGED" }
    );
    Ok(())
}

fn analysis_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(format!("{}: {e}", path.display()))
}

fn read_trajectory(path: &Path, label: &str) -> Result<Trajectory<f64>, CliError> {
    let file = File::open(path).map_err(|e| analysis_err(path, e))?;
    Trajectory::read_csv(label, file).map_err(|e| analysis_err(path, e))
}

type Stored = (Vec<Trajectory<f64>>, Vec<Trajectory<f64>>);

/// The four basis trajectories and any other `traj_*.csv`, sorted by label.
fn load_trajectories(out: &Path) -> Result<Stored, CliError> {
    let dir = out.join(TRAJECTORY_DIR);
    let basis = BASIS_LABELS
        .iter()
        .map(|l| read_trajectory(&dir.join(format!("traj_{l}.csv")), l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut others: Vec<(String, PathBuf)> = fs::read_dir(&dir)
        .map_err(|e| analysis_err(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let label = p.file_name()?.to_str()?.strip_prefix("traj_")?.strip_suffix(".csv")?.to_owned();
            (!BASIS_LABELS.contains(&label.as_str())).then_some((label, p))
        })
        .collect();
    others.sort();
    let others = others
        .iter()
        .map(|(l, p)| read_trajectory(p, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((basis, others))
}

fn initial_bloch(t: &Trajectory<f64>) -> Result<BlochVector<f64>, CliError> {
    let first = t
        .states()
        .first()
        .ok_or_else(|| CliError::Analysis(format!("trajectory {} is empty", t.label())))?;
    density_to_bloch(first).map_err(|e| CliError::Analysis(e.to_string()))
}

fn affine_from(basis: Vec<Trajectory<f64>>) -> Result<(AffineBlochMap<f64>, SvdSeries<f64>, f64), CliError> {
    let set = TrajectorySet {
        trajectories: basis,
        diagnostics: Vec::new(),
    };
    let phi = reconstruct_map(&set)?;
    let abm = tensor_to_affine(&phi, TRACE_TOL)?;
    let svd = svd_series(&abm);
    Ok((abm, svd, phi.condition_number()))
}

fn write_tracked(svd: &SvdSeries<f64>, w: impl Write) -> Result<(), CliError> {
    let branches = svd.tracked_branches();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_owned()];
    header.extend((1..=branches.len()).map(|j| format!("S{j}")));
    wtr.write_record(&header)?;
    for (k, t) in svd.times().iter().enumerate() {
        wtr.write_record(std::iter::once(*t).chain(branches.iter().map(|b| b[k])).map(num))?;
    }
    wtr.flush()?;
    Ok(())
}

fn vec_json(v: &DVector<f64>) -> serde_json::Value {
    v.iter().copied().collect::<Vec<_>>().into()
}

fn mat_json(m: &DMatrix<f64>) -> serde_json::Value {
    m.row_iter()
        .map(|r| r.iter().copied().collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .into()
}

pub fn analyze(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let (basis, others) = load_trajectories(out)?;
    let (up, down) = (basis[0].clone(), basis[1].clone());
    let (abm, svd, condition) = affine_from(basis)?;
    m.detail("condition_number", condition);
    abm.write_map_csv(create(out, "map.csv", m)?)?;
    svd.write_csv(&abm, create(out, "svd.csv", m)?)?;
    write_tracked(&svd, create(out, "svd_tracked.csv", m)?)?;

    let s_max = (0..svd.len()).map(|k| svd.s_max(k)).fold(0.0f64, f64::max);
    m.detail("max_s_max", s_max);
    if s_max > 1.0 + TRACE_TOL {
        m.warn(format!("largest singular value {s_max:.6} exceeds 1: the reconstructed map is not contractive"));
    }

    // |↑⟩ versus |↓⟩ under σz: the bound is 2 S_max(t).
    let sz = Observable::pauli_z();
    let delta = delta_observable(&up, &down, &sz)?;
    let report = bound_series(&svd, &initial_bloch(&up)?, &initial_bloch(&down)?, &sz, &delta)?;
    report.write_csv(create(out, "bound_sigma_z.csv", m)?)?;
    let (ratio, at) = report.worst_tight();
    m.detail("bound_sigma_z_worst_ratio", ratio);
    println!("bound: max δ/(2 S_max) = {ratio:.6} at t = {at}");
    report.verify()?;

    if !others.is_empty() {
        let mut wtr = csv::Writer::from_writer(create(out, "prediction.csv", m)?);
        wtr.write_record(["label", "t", "sx_pred", "sy_pred", "sz_pred", "sx", "sy", "sz", "error"])?;
        let mut max_err = 0.0f64;
        for traj in &others {
            if traj.times() != abm.times() {
                return Err(CliError::Analysis(format!("trajectory {} is on a different time grid", traj.label())));
            }
            let a0 = initial_bloch(traj)?;
            for k in 0..traj.len() {
                let pred = abm.apply(k, &a0)?;
                let got = traj.bloch(k);
                let err = (0..3).map(|i| (pred[i] - got[i]).abs()).fold(0.0, f64::max);
                max_err = max_err.max(err);
                let row = [traj.times()[k], pred[0], pred[1], pred[2], got[0], got[1], got[2], err];
                wtr.write_record(std::iter::once(traj.label().to_owned()).chain(row.into_iter().map(num)))?;
            }
        }
        wtr.flush()?;
        m.detail("prediction_max_error", max_err);
        println!("prediction: max Bloch error {max_err:.3e} over {} held-out trajectories", others.len());
    }

    let span = abm.times().last().copied().unwrap_or(0.0) - abm.times().first().copied().unwrap_or(0.0);
    let window = cfg.window(span);
    let a = classify_asymptotics(&abm, &svd, window, cfg.analysis.tol_stationary, cfg.analysis.tol_zero)?;
    m.classification = Some(format!("{:?}", a.classification));
    m.detail("window_start", a.window_start);
    m.detail("fluctuation", a.fluctuation);
    let mut line = format!(
        "classification: {:?} (window from t = {}, fluctuation {:.3e})",
        a.classification, a.window_start, a.fluctuation
    );
    if let (Some(mi), Some(bi), Some(si)) = (&a.m_inf, &a.b_inf, &a.s_inf) {
        m.detail("m_inf", mat_json(mi));
        m.detail("b_inf", vec_json(bi));
        m.detail("s_inf", vec_json(si));
        line += &format!(", S_inf = {:?}", si.as_slice());
    }
    if let Some(r) = &a.rank_one {
        m.detail("w_inf", vec_json(&r.w));
        m.detail("v_inf", vec_json(&r.v));
        line += &format!(", w_inf = {:?}", r.w.as_slice());
    }
    if a.classification == Classification::InitialStateDependent {
        m.detail("rank", a.rank.unwrap_or(0));
    }
    println!("{line}");
    Ok(())
}

pub fn tcl2(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let rates = match cfg.explicit_rates() {
        Some(r) => r,
        None => rates_from_spectral_density(&cfg.density()?, cfg.delta)?,
    };
    let Tcl2Rates {
        gamma_xx,
        gamma_x,
        gamma_yy,
        gamma_yz,
    } = rates;
    for w in rates.warnings() {
        m.warn(w);
    }
    for (k, v) in [("gamma_xx", gamma_xx), ("gamma_x", gamma_x), ("gamma_yy", gamma_yy), ("gamma_yz", gamma_yz)] {
        m.detail(k, v);
    }
    let model = Tcl2Model::new(cfg.delta, rates)?;
    let (dt, period) = (model.delta_tilde(), model.period());
    m.detail("delta_tilde", dt);
    m.detail("period", period);
    {
        let mut wtr = csv::Writer::from_writer(create(out, "tcl2_rates.csv", m)?);
        wtr.write_record(["gamma_xx", "gamma_x", "gamma_yy", "gamma_yz", "delta_tilde", "period"])?;
        wtr.write_record([gamma_xx, gamma_x, gamma_yy, gamma_yz, dt, period].map(num))?;
        wtr.flush()?;
    }

    let times = cfg.grid()?.times();
    model.write_svd_csv(&times, create(out, "tcl2_svd.csv", m)?)?;
    {
        let mut wtr = csv::Writer::from_writer(create(out, "tcl2_singular_values.csv", m)?);
        wtr.write_record(["t", "S_plus", "S_minus", "S_x"])?;
        for &t in &times {
            let s = model.singular_values(t)?;
            wtr.write_record([t, s.plus, s.minus, s.x].map(num))?;
        }
        wtr.flush()?;
    }

    let settings = OdeSettings {
        rtol: cfg.tcl2.rtol,
        atol: cfg.tcl2.atol,
        ..OdeSettings::default()
    };
    let starts: [[f64; 3]; 4] = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let solutions = starts
        .par_iter()
        .map(|a0| solve_bloch_equations(cfg.delta, &rates, *a0, &times, &settings))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ode_dev = 0.0f64;
    {
        let mut wtr = csv::Writer::from_writer(create(out, "tcl2_ode.csv", m)?);
        wtr.write_record(["label", "t", "sx", "sy", "sz", "sx_closed", "sy_closed", "sz_closed"])?;
        for ((label, a0), sol) in BASIS_LABELS.iter().zip(&starts).zip(&solutions) {
            let a0 = DVector::from_column_slice(a0);
            for (&t, y) in times.iter().zip(sol) {
                let (mt, bt) = model.affine(t);
                let want = mt * &a0 + bt;
                for i in 0..3 {
                    ode_dev = ode_dev.max((y[i] - want[i]).abs());
                }
                let row = [t, y[0], y[1], y[2], want[0], want[1], want[2]];
                wtr.write_record(std::iter::once(label.to_string()).chain(row.into_iter().map(num)))?;
            }
        }
        wtr.flush()?;
    }
    m.detail("ode_max_deviation", ode_dev);
    if ode_dev > ODE_AGREEMENT {
        m.warn(format!("integrated and closed-form TCL2 solutions differ by {ode_dev:.3e}"));
    }
    println!(
        "tcl2: Γxx = {gamma_xx:.6e}, Γx = {gamma_x:.6e}, Γyy = {gamma_yy:.6e}, Γyz = {gamma_yz:.6e}; Δ̃ = {dt:.6}, period {period:.6}; ODE vs closed form {ode_dev:.3e}"
    );

    if let Some(path) = &cfg.tcl2.compare {
        let file = File::open(path).map_err(|e| analysis_err(path, e))?;
        let table = SvdTable::read_csv(file).map_err(|e| analysis_err(path, e))?;
        if table.s.first().is_some_and(|s| s.len() != 3) {
            return Err(analysis_err(path, "expected a two-level SVD table with columns S1, S2, S3"));
        }
        let mut wtr = csv::Writer::from_writer(create(out, "tcl2_compare.csv", m)?);
        wtr.write_record(["t", "dS1", "dS2", "dS3", "db1", "db2", "db3"])?;
        let (mut max_s, mut max_b) = (0.0f64, 0.0f64);
        for (k, &t) in table.times.iter().enumerate() {
            let s = model.singular_values(t)?.sorted();
            let (_, b) = model.affine(t);
            let ds: Vec<f64> = (0..3).map(|i| table.s[k][i] - s[i]).collect();
            let db: Vec<f64> = (0..3).map(|i| table.b[k].get(i).copied().unwrap_or(f64::NAN) - b[i]).collect();
            max_s = ds.iter().fold(max_s, |a, d| a.max(d.abs()));
            max_b = db.iter().fold(max_b, |a, d| a.max(d.abs()));
            wtr.write_record(std::iter::once(t).chain(ds).chain(db).map(num))?;
        }
        wtr.flush()?;
        m.detail("compare_max_singular_value_deviation", max_s);
        m.detail("compare_max_offset_deviation", max_b);
        println!("compare: max |ΔS| = {max_s:.3e}, max |Δb| = {max_b:.3e} against {}", path.display());
    }
    Ok(())
}

fn random_ball(rng: &mut ChaCha8Rng) -> BlochVector<f64> {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return BlochVector::from_slice(&v).expect("three components");
        }
    }
}

/// `o₀ 𝟙 + o·σ` with every coefficient uniform in `[−1, 1]`.
fn random_observable(rng: &mut ChaCha8Rng) -> Observable<f64> {
    let o: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
    let c = Complex64::new;
    let m = DMatrix::from_row_slice(2, 2, &[c(o[0] + o[3], 0.0), c(o[1], -o[2]), c(o[1], o[2]), c(o[0] - o[3], 0.0)]);
    Observable::new(m, 1e-12).expect("hermitian by construction")
}

fn violations(r: &BoundReport<f64>) -> usize {
    (0..r.times.len())
        .filter(|&k| r.delta[k] - r.general[k] > BOUND_SLACK || r.delta[k] - r.tight[k] > BOUND_SLACK)
        .count()
}

pub fn bound_check(cfg: &ExperimentConfig, out: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    let (basis, others) = load_trajectories(out)?;
    let stored: Vec<Trajectory<f64>> = basis.iter().chain(&others).cloned().collect();
    let (abm, svd, _) = affine_from(basis)?;
    let paulis = [
        ("sigma_x", Observable::pauli_x()),
        ("sigma_y", Observable::pauli_y()),
        ("sigma_z", Observable::pauli_z()),
    ];
    let mut rows: Vec<(String, String, BoundReport<f64>)> = Vec::new();
    for i in 0..stored.len() {
        for j in i + 1..stored.len() {
            let (a, b) = (&stored[i], &stored[j]);
            let (a0, b0) = (initial_bloch(a)?, initial_bloch(b)?);
            for (name, obs) in &paulis {
                let delta = delta_observable(a, b, obs)?;
                let r = bound_series(&svd, &a0, &b0, obs, &delta)?;
                rows.push((format!("{}|{}", a.label(), b.label()), name.to_string(), r));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let evolve = |a: &BlochVector<f64>| -> Result<Vec<DensityMatrix<f64>>, CliError> {
        (0..abm.len())
            .map(|k| bloch_to_density(&abm.apply(k, a)?).map_err(|e| CliError::Analysis(e.to_string())))
            .collect()
    };
    for d in 0..cfg.analysis.bound_draws {
        let (a1, a2) = (random_ball(&mut rng), random_ball(&mut rng));
        let obs = random_observable(&mut rng);
        let delta = delta_observable_states(&evolve(&a1)?, &evolve(&a2)?, &obs)?;
        let r = bound_series(&svd, &a1, &a2, &obs, &delta)?;
        rows.push((format!("draw_{d}"), "random".into(), r));
    }

    let mut total = 0;
    let mut worst = 0.0f64;
    let mut wtr = csv::Writer::from_writer(create(out, "bound_check.csv", m)?);
    wtr.write_record([
        "pair",
        "observable",
        "max_delta",
        "worst_ratio_general",
        "t_general",
        "worst_ratio_projected",
        "t_projected",
        "violations",
    ])?;
    for (pair, obs, r) in &rows {
        let (rg, tg) = r.worst_general();
        let (rp, tp) = r.worst_tight();
        let v = violations(r);
        total += v;
        worst = worst.max(rg).max(rp);
        let max_delta = r.delta.iter().fold(0.0f64, |a, &b| a.max(b));
        let nums = [max_delta, rg, tg, rp, tp].map(num);
        wtr.write_record([pair.clone(), obs.clone()].into_iter().chain(nums).chain([v.to_string()]))?;
    }
    wtr.flush()?;
    m.detail("bound_cases", rows.len());
    m.detail("bound_violations", total);
    m.detail("bound_worst_ratio", worst);
    println!("bound-check: {} cases, {total} violations, worst δ/bound = {worst:.6}", rows.len());
    if total > 0 {
        return Err(CliError::Analysis(format!(
            "{total} samples violate the distinguishability bound; see bound_check.csv"
        )));
    }
    Ok(())
}
