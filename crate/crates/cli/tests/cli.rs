//! End-to-end runs of the `qinfluence` binary on small instances.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qinfluence::propagator::{build_hamiltonian, run_trajectory, HilbertSpaceSpec, KrylovSettings, RunHooks, TimeGrid};
use qinfluence::spectral::{discretize, GappedDensity, OhmicDensity, SpectralDensity};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qinfluence"))
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("experiment.toml");
    fs::write(&path, config).unwrap();
    bin()
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--workers")
        .arg("1")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path, command: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("out").join(format!("manifest-{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Header and numeric rows of a CSV file.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = table(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const SMALL: &str = r#"
seed = 11

[model]
density = "ohmic"
alpha = 0.3
omega_c = 4.0

[bath]
modes = 2

[hilbert]
cutoff = 4

[time]
dt = 0.05
steps = 80
stride = 2

[states]
extra = [[1.0, 0.7]]
random = 2
"#;

fn with_alpha(alpha: f64) -> String {
    SMALL.replace("alpha = 0.3", &format!("alpha = {alpha}"))
}

#[test]
fn emits_a_loadable_default_config() {
    let out = bin().arg("--emit-default-config").output().unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[model]") && text.contains("omega_c = 5.0"));
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &text, &["discretize"]));
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = run(d, &SMALL.replace("modes = 2", "modes = 2\nmodez = 3"), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(d, "simulate")["status"], "config");
    assert_eq!(run(d, &with_alpha(-0.1), &["discretize"]).status.code(), Some(2));
    assert_eq!(bin().output().unwrap().status.code(), Some(2));

    let huge = SMALL.replace("cutoff = 4", "cutoff = 4\nmax_dimension = 16");
    let out = run(d, &huge, &["simulate"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(manifest(d, "simulate")["status"], "resources");

    let out = run(d, SMALL, &["analyze"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(manifest(d, "analyze")["status"], "analysis");

    let overdamped = format!("{SMALL}\n[tcl2]\ngamma_xx = 0.1\ngamma_x = 0.1\ngamma_yy = 5.0\ngamma_yz = 0.0\n");
    let out = run(d, &overdamped, &["tcl2"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overdamped"));
    assert_eq!(manifest(d, "tcl2")["status"], "regime");
}

#[test]
fn discretize_single_mode_and_sum_rule() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &SMALL.replace("modes = 2", "modes = 1"), &["discretize"]));
    let (header, rows) = table(&dir.path().join("out/bath.csv"));
    assert_eq!(header, ["index", "omega", "coupling"]);
    assert_eq!(rows.len(), 1);

    let fine = SMALL
        .replace("alpha = 0.3", "alpha = 0.1")
        .replace("omega_c = 4.0", "omega_c = 20.0")
        .replace("modes = 2", "modes = 400");
    ok(&run(dir.path(), &fine, &["discretize"]));
    let m = manifest(dir.path(), "discretize");
    assert!(m["convergence"]["sum_rule_error"].as_f64().unwrap() < 1e-3, "{m}");
}

#[test]
fn gapped_bath_has_no_coupling_outside_its_support() {
    let cfg = r#"
[model]
density = "gapped"
alpha = 0.4

[bath]
modes = 40
range = [0.0, 8.0]
"#;
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), cfg, &["discretize"]));
    let path = dir.path().join("out/bath.csv");
    let (lo, hi) = GappedDensity::trapped_ion(0.4).unwrap().with_delta_from_peak().support();
    let (omega, coupling) = (column(&path, "omega"), column(&path, "coupling"));
    let mut inside = 0;
    for (w, c) in omega.iter().zip(&coupling) {
        if *w < lo || *w > hi {
            assert_eq!(*c, 0.0, "ω = {w}");
        } else {
            inside += 1;
            assert!(*c > 0.0);
        }
    }
    assert!(inside > 0 && inside < 40);
}

#[test]
fn uncoupled_simulation_is_a_rabi_oscillation() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &with_alpha(0.0), &["simulate"]));
    let traj = dir.path().join("out/trajectories");
    let t = column(&traj.join("traj_up.csv"), "t");
    let sz = column(&traj.join("traj_up.csv"), "sz");
    assert_eq!(t.len(), 41);
    for (t, sz) in t.iter().zip(sz) {
        assert!((sz - (2.0 * t).cos()).abs() < 1e-8, "t = {t}");
    }
    let m = manifest(dir.path(), "simulate");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["convergence"]["cutoff_ok"], true);
}

#[test]
fn first_rows_are_the_initial_states() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), SMALL, &["simulate"]));
    let traj = dir.path().join("out/trajectories");
    let (_, states) = table(&dir.path().join("out/states.csv"));
    assert_eq!(states.len(), 7);
    for row in &states {
        let (theta, phi): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        let want = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let path = traj.join(format!("traj_{}.csv", row[0]));
        for (name, w) in ["sx", "sy", "sz"].iter().zip(want) {
            assert!((column(&path, name)[0] - w).abs() < 1e-12, "{} {name}", row[0]);
        }
    }
    let up = traj.join("traj_up.csv");
    assert_eq!(column(&up, "rho00")[0], 1.0);
    assert!((column(&traj.join("traj_plus_x.csv"), "rho01_re")[0] - 0.5).abs() < 1e-15);
    assert!(states.iter().any(|r| r[0] == "extra_0") && states.iter().any(|r| r[0] == "random_1"));
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else if p.extension().is_some_and(|x| x == "csv") {
            out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        for cmd in ["simulate", "analyze", "bound-check", "tcl2"] {
            ok(&run(d, SMALL, &[cmd]));
        }
    }
    let (fa, fb) = (files(&a.path().join("out")), files(&b.path().join("out")));
    assert!(fa.len() > 15);
    assert_eq!(fa, fb);
    // A different seed changes the random initial states.
    ok(&run(b.path(), SMALL, &["simulate", "--seed", "12"]));
    let rand_a = fs::read(a.path().join("out/trajectories/traj_random_0.csv")).unwrap();
    let rand_b = fs::read(b.path().join("out/trajectories/traj_random_0.csv")).unwrap();
    assert_ne!(rand_a, rand_b);
}

#[test]
fn analysis_of_a_coupled_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), SMALL, &["simulate"]));
    let out = run(dir.path(), SMALL, &["analyze"]);
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("classification:"), "{stdout}");
    let o = dir.path().join("out");
    for j in 1..=3 {
        assert!((column(&o.join("svd.csv"), &format!("S{j}"))[0] - 1.0).abs() < 1e-10);
        assert!(column(&o.join("svd.csv"), &format!("b{j}"))[0].abs() < 1e-10);
    }
    let (header, _) = table(&o.join("map.csv"));
    assert_eq!(header.len(), 10);
    let m = manifest(dir.path(), "analyze");
    assert!(m["details"]["prediction_max_error"].as_f64().unwrap() < 1e-7, "{m}");
    let pred = column(&o.join("prediction.csv"), "error");
    assert_eq!(pred.len(), 3 * 41);
    // |↑⟩ against |↓⟩ under σz never exceeds 2 S_max.
    let p = o.join("bound_sigma_z.csv");
    for (d, b) in column(&p, "delta").iter().zip(column(&p, "bound_sigma_z")) {
        assert!(*d <= b + 1e-12);
    }

    let out = run(dir.path(), SMALL, &["bound-check"]);
    ok(&out);
    let (_, rows) = table(&o.join("bound_check.csv"));
    // 7 stored trajectories give 21 pairs, times 3 Pauli observables, plus 100 draws.
    assert_eq!(rows.len(), 21 * 3 + 100);
    assert!(rows.iter().all(|r| r[7] == "0"));
}

/// Writes the four basis trajectories of `a(t) = M(t) a(0) + b(t)`.
fn write_synthetic(dir: &Path, map: impl Fn(f64, [f64; 3]) -> [f64; 3]) {
    let traj = dir.join("out/trajectories");
    fs::create_dir_all(&traj).unwrap();
    let basis = [("up", [0.0, 0.0, 1.0]), ("down", [0.0, 0.0, -1.0]), ("plus_x", [1.0, 0.0, 0.0]), ("plus_y", [0.0, 1.0, 0.0])];
    for (label, a0) in basis {
        let mut text = String::from("t,rho00,rho01_re,rho01_im,rho11\n");
        for k in 0..=400 {
            let t = 0.1 * k as f64;
            let [x, y, z] = map(t, a0);
            text += &format!("{t:e},{:e},{:e},{:e},{:e}\n", (1.0 + z) / 2.0, x / 2.0, -y / 2.0, (1.0 - z) / 2.0);
        }
        fs::write(traj.join(format!("traj_{label}.csv")), text).unwrap();
    }
}

#[test]
fn synthetic_maps_are_classified() {
    // Undamped rotation of (y, z): never stationary.
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), |t, [x, y, z]| {
        let (s, c) = (2.0 * t).sin_cos();
        [x, c * y - s * z, s * y + c * z]
    });
    let out = run(dir.path(), SMALL, &["analyze"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("classification: NonStationary"));
    assert_eq!(manifest(dir.path(), "analyze")["classification"], "NonStationary");

    // Relaxation towards |↓⟩ from every state.
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), |t, [x, y, z]| {
        let g = (-t).exp();
        [g * x, g * y, g * z - (1.0 - g)]
    });
    ok(&run(dir.path(), SMALL, &["analyze"]));
    assert_eq!(manifest(dir.path(), "analyze")["classification"], "UniqueAsymptotic");

    // σx survives: the limit remembers the initial state through one direction.
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), |t, [x, y, z]| {
        let g = (-t).exp();
        [x, g * y, g * z]
    });
    ok(&run(dir.path(), SMALL, &["analyze"]));
    let m = manifest(dir.path(), "analyze");
    assert_eq!(m["classification"], "InitialStateDependent");
    let w: Vec<f64> = m["details"]["w_inf"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((w[0].abs() - 1.0).abs() < 1e-10 && w[1].abs() < 1e-10 && w[2].abs() < 1e-10);
}

#[test]
fn tcl2_outputs() {
    let cfg = format!("{SMALL}\n[tcl2]\ngamma_xx = 0.1\ngamma_x = 0.05\ngamma_yy = 0.1\ngamma_yz = 0.02\n");
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &cfg, &["tcl2"]));
    let o = dir.path().join("out");
    let sv = o.join("tcl2_singular_values.csv");
    for (t, sx) in column(&sv, "t").iter().zip(column(&sv, "S_x")) {
        assert_eq!(sx, (-0.1 * t).exp());
    }
    for j in 1..=3 {
        assert_eq!(column(&o.join("tcl2_svd.csv"), &format!("S{j}"))[0], 1.0);
    }
    let m = manifest(dir.path(), "tcl2");
    assert!(m["details"]["ode_max_deviation"].as_f64().unwrap() < 1e-8, "{m}");

    // Comparing the analytic table with itself gives zero deviation.
    let cmp = format!("{cfg}compare = {:?}\n", o.join("tcl2_svd.csv").to_str().unwrap());
    ok(&run(dir.path(), &cmp, &["tcl2"]));
    let c = o.join("tcl2_compare.csv");
    for name in ["dS1", "dS2", "dS3", "db1", "db2", "db3"] {
        let dev = column(&c, name);
        assert_eq!(dev.len(), 41);
        assert!(dev.iter().all(|d| *d == 0.0), "{name}");
    }

    // Rates computed from the density.
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), SMALL, &["tcl2"]));
    let m = manifest(dir.path(), "tcl2");
    let (gxx, gyy) = (m["details"]["gamma_xx"].as_f64().unwrap(), m["details"]["gamma_yy"].as_f64().unwrap());
    // Γ = 2J(2Δ) with J(ω) = (π/2) α ω e^{−ω/ω_c}.
    let want = 2.0 * std::f64::consts::FRAC_PI_2 * 0.3 * 2.0 * (-0.5f64).exp();
    assert!((gxx - want).abs() < 1e-12 && (gyy - want).abs() < 1e-12);
}

#[test]
fn interrupted_simulation_resumes_from_its_checkpoint() {
    let cfg = format!("{SMALL}\n[propagator]\ncheckpoint_every = 20\n");
    let full = tempfile::tempdir().unwrap();
    ok(&run(full.path(), &cfg, &["simulate"]));
    let traj = full.path().join("out/trajectories");
    assert!(!traj.join("up.ckpt").exists() && !traj.join("up.partial.csv").exists());
    let reference = fs::read(traj.join("traj_up.csv")).unwrap();
    let plain = tempfile::tempdir().unwrap();
    ok(&run(plain.path(), SMALL, &["simulate"]));
    assert_eq!(reference, fs::read(plain.path().join("out/trajectories/traj_up.csv")).unwrap());

    // Leave behind what a run killed after step 40 would have written.
    let resumed = tempfile::tempdir().unwrap();
    let dir = resumed.path().join("out/trajectories");
    fs::create_dir_all(&dir).unwrap();
    let hash = manifest(full.path(), "simulate")["config_hash"].as_str().unwrap().to_owned();
    fs::write(dir.join("checkpoint.hash"), format!("{hash}\n")).unwrap();
    let d = OhmicDensity::new(0.3, 4.0).unwrap();
    let bath = discretize(&d, 2, d.default_range(2)).unwrap();
    let spec = HilbertSpaceSpec::uniform(2, 4, 1 << 22).unwrap();
    let h = build_hamiltonian(&bath, 1.0, &spec).unwrap();
    let grid = TimeGrid::new(0.05, 40, 2).unwrap();
    let ckpt = dir.join("up.ckpt");
    let (partial, _) = run_trajectory(
        &h,
        &spec,
        qinfluence::bloch::spin_amplitudes(0.0, 0.0),
        &grid,
        &KrylovSettings::default(),
        "up",
        RunHooks {
            resume: None,
            checkpoint: Some((&ckpt, 40)),
        },
    )
    .unwrap();
    let mut w = fs::File::create(dir.join("up.partial.csv")).unwrap();
    partial.write_csv(&mut w).unwrap();

    let path = resumed.path().join("experiment.toml");
    fs::write(&path, &cfg).unwrap();
    let out = bin()
        .env("RUST_LOG", "info")
        .args(["simulate", "--workers", "1", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(resumed.path().join("out"))
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("up: resuming from step 40"));
    assert_eq!(reference, fs::read(dir.join("traj_up.csv")).unwrap());
    assert!(!ckpt.exists());
}
