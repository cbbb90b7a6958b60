use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use qheom_cli::output::{GP_HEADER, HEATMAP_HEADER, TRAJECTORY_HEADER};
use qheom_cli::Config;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qheom-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn qheom(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qheom"));
    cmd.args(args).current_dir(dir);
    if let Some(text) = config {
        let path = dir.join("input.cfg");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SHORT_RUN: &str = "\
drive1.omega = 10
drive2.omega = 10
drive1.delta = 0
drive2.delta = 0
bath.R = 1
initial.bell = phi_minus
clock.tau_s = 0.5
integrator.depth = 6
integrator.sample_every = 50
integrator.cycles = 2
";

#[test]
fn run_writes_trajectory_of_dark_state() {
    let dir = scratch("dark");
    let out = qheom(&["run", "--out", "traj.csv"], Some(SHORT_RUN), &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("traj.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
    let rows = rows(&dir.join("traj.csv"));
    assert_eq!(rows.len(), 21);
    for r in &rows {
        assert_eq!(r.len(), 12);
        let purity: f64 = r[10].parse().unwrap();
        let conc: f64 = r[11].parse().unwrap();
        assert!((purity - 1.0).abs() < 1e-9 && (conc - 1.0).abs() < 1e-9);
    }
    let last_cycle: f64 = rows[20][1].parse().unwrap();
    assert!((last_cycle - 2.0).abs() < 1e-12);
}

#[test]
fn closed_system_keeps_purity() {
    let dir = scratch("closed");
    let cfg = SHORT_RUN.replace("bath.R = 1", "bath.R = 0").replace("phi_minus", "phi_plus");
    let out = qheom(&["run", "--out", "traj.csv"], Some(&cfg), &dir);
    assert!(out.status.success());
    for r in rows(&dir.join("traj.csv")) {
        assert!((r[10].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn gp_writes_one_row_per_cycle() {
    let dir = scratch("gp");
    let cfg = "\
drive1.omega = 10
drive2.omega = 10
bath.R = 0
initial.bell = psi_plus
clock.mode = two_excitation
integrator.depth = 2
integrator.sample_every = 1
integrator.cycles = 3
";
    let out = qheom(&["gp", "--out", "gp.csv"], Some(cfg), &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("gp.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), GP_HEADER);
    let rows = rows(&dir.join("gp.csv"));
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        let per_cycle: f64 = r[1].parse().unwrap();
        let cumulative: f64 = r[2].parse().unwrap();
        assert!((per_cycle.abs() - std::f64::consts::PI).abs() < 1e-4);
        assert!((cumulative.abs() - (i + 1) as f64 * std::f64::consts::PI).abs() < 1e-3);
    }
}

const SMALL_SWEEP: &str = "\
drive1.omega = 15
drive2.omega = 15
drive1.delta = 1
drive2.delta = 1
clock.tau_s = 0.3
integrator.depth = 3
sweep.axisA.parameter = omegaD1
sweep.axisA.min = 0
sweep.axisA.max = 4
sweep.axisA.points = 3
sweep.axisB.parameter = J
sweep.axisB.min = 0
sweep.axisB.max = 1
sweep.axisB.points = 2
sweep.cycles = 1,2
sweep.lock = omegaD2=omegaD1
";

#[test]
fn sweep_files_do_not_depend_on_threads() {
    let dir = scratch("sweep");
    let one = qheom(&["sweep", "--out", "one/map.csv", "--threads", "1"], Some(SMALL_SWEEP), &dir);
    let two = qheom(&["sweep", "--out", "two/map.csv", "--threads", "2"], Some(SMALL_SWEEP), &dir);
    assert!(one.status.success() && two.status.success());
    for n in [1, 2] {
        let name = format!("map_N{n}.csv");
        let a = std::fs::read(dir.join("one").join(&name)).unwrap();
        let b = std::fs::read(dir.join("two").join(&name)).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.lines().any(|l| l == HEATMAP_HEADER));
        assert!(text.starts_with(&format!("#cycle={n}\n")));
        let rows = rows(&dir.join("one").join(&name));
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r[4] == "ok"));
    }
}

#[test]
fn failing_cells_are_reported_in_place() {
    let dir = scratch("sweep-fail");
    let cfg = SMALL_SWEEP
        .replace("sweep.axisB.parameter = J", "sweep.axisB.parameter = R")
        .replace("sweep.axisB.min = 0", "sweep.axisB.min = -1");
    let out = qheom(&["sweep", "--out", "map.csv"], Some(&cfg), &dir);
    assert!(out.status.success());
    let rows = rows(&dir.join("map_N1.csv"));
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r[2] == "nan" && r[4].starts_with("failed")).count(), 3);
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let code = |args: &[&str], cfg: &str| qheom(args, Some(cfg), &dir).status.code().unwrap();
    assert_eq!(code(&["config"], SHORT_RUN), 0);
    assert_eq!(code(&["config"], "bath.radius = 1\n"), 2);
    assert_eq!(code(&["config"], "bath.R = 1\nbath.R = 2\n"), 2);
    assert_eq!(code(&["config"], "bath.R = -1\n"), 2);
    assert_eq!(code(&["run"], "integrator.depth = 4\nintegrator.dt = 0.5\n"), 3);
    let shallow = "bath.R = 5\nintegrator.depth = 2\nvalidate.tau_end = 1\nvalidate.short_tau_end = 1\n";
    assert_eq!(code(&["validate", "--out", "v.csv"], shallow), 4);
    let report = std::fs::read_to_string(dir.join("v.csv")).unwrap();
    assert!(report.starts_with("check,value,bound,pass\n"));
    assert!(report.lines().any(|l| l.starts_with("truncation,") && l.ends_with(",false")));
}

#[test]
fn config_errors_name_line_and_key() {
    let err = Config::parse("bath.R = 1\nsweep.axisA.points = many\n").unwrap_err();
    assert_eq!(err.line, Some(2));
    assert_eq!(err.key.as_deref(), Some("sweep.axisA.points"));
    assert!(Config::parse("# comment\n\nJ = 0.5\n").is_ok());
}

fn arb_config() -> impl Strategy<Value = Config> {
    (
        (1.0..20.0f64, 1.0..20.0f64, 0.0..5.0f64, 0.0..8.0f64, -3.0..3.0f64),
        (0.0..5.0f64, 0.0..3.0f64, 0.0..1.0f64, 1e-4..1e-2f64, 1usize..30),
        (0usize..4, prop::collection::vec(1u32..20, 1..5), 2usize..50, any::<bool>()),
    )
        .prop_map(|(a, b, c)| {
            let mut cfg = Config::default();
            cfg.model.drive1.omega = a.0;
            cfg.model.drive2.omega = a.1;
            cfg.model.drive1.delta = a.2;
            cfg.model.drive2.omega_d = a.3;
            cfg.model.drive1.phi = a.4;
            cfg.model.j = b.0;
            cfg.model.bath.r = b.1;
            cfg.model.bath.omega0 = if c.3 { Some(b.2 * 10.0) } else { None };
            cfg.initial.p = b.2;
            cfg.integrator.dt = b.3;
            cfg.integrator.depth = b.4;
            cfg.initial.bell = [
                qheom::BellKind::PhiPlus,
                qheom::BellKind::PhiMinus,
                qheom::BellKind::PsiPlus,
                qheom::BellKind::PsiMinus,
            ][c.0];
            cfg.sweep.cycles = c.1;
            cfg.sweep.axis_a.points = c.2;
            cfg.sweep.axis_b.max = a.3 + 1.0;
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn config_round_trips(cfg in arb_config()) {
        let text = cfg.serialize();
        let back = Config::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), text);
    }
}
