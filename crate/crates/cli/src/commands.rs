use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use qheom::heom::{evolve, init_hierarchy, HierarchySpace};
use qheom::observables::{geometric_phase, ClockMode, CycleClock, GpSeries};
use qheom::sweep::{run_sweep, SweepResult};
use qheom::Trajectory;

use crate::config::{Config, ConfigError};
use crate::output;
use crate::validate::{self, Check};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Integration(String),
    Validation(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Integration(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Integration(e) => write!(f, "integration failed: {e}"),
            CliError::Validation(e) => write!(f, "validation failed: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(ConfigError {
            line: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })
    })?;
    Ok(Config::parse(&text)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Physical trajectory from `τ = 0` to `cycles · τ_s`.
pub fn trajectory(cfg: &Config) -> Result<(Trajectory, CycleClock), CliError> {
    cfg.validate()?;
    let clock = cfg.clock()?;
    let rho0 = cfg
        .initial
        .state()
        .build()
        .map_err(|e| ConfigError::invalid("initial", e.to_string()))?;
    let it = &cfg.integrator;
    let space = HierarchySpace::new(&cfg.model, it.depth);
    let mut state = init_hierarchy(&rho0, &space);
    let tau_end = clock.time_of(it.cycles as f64);
    let traj = evolve(&mut state, &cfg.model, &space, it.dt, tau_end, it.sample_every).map_err(|e| {
        CliError::Integration(match e.tau() {
            Some(tau) => format!("{e} (tau = {tau})"),
            None => e.to_string(),
        })
    })?;
    Ok((traj, clock))
}

pub fn cmd_run(cfg: &Config, out: &Path) -> Result<Trajectory, CliError> {
    let (traj, clock) = trajectory(cfg)?;
    let mut w = create(out)?;
    if let Err((tau, msg)) = output::write_trajectory(&mut w, &traj, &clock)? {
        return Err(CliError::Integration(format!("concurrence at tau = {tau}: {msg}")));
    }
    w.flush()?;
    Ok(traj)
}

pub fn cmd_gp(cfg: &Config, out: &Path) -> Result<GpSeries, CliError> {
    if cfg.clock.mode == ClockMode::OneExcitation {
        return Err(ConfigError::invalid(
            "clock.mode",
            "the geometric phase needs a two_excitation or explicit clock",
        )
        .into());
    }
    let (traj, clock) = trajectory(cfg)?;
    let series = geometric_phase(&traj, &clock, cfg.gp_eigen_stride)
        .map_err(|e| CliError::Integration(e.to_string()))?;
    let mut w = create(out)?;
    output::write_gp(&mut w, &series)?;
    w.flush()?;
    Ok(series)
}

/// Runs the sweep and writes one heatmap per requested cycle.
pub fn cmd_sweep(cfg: &Config, out: &Path, threads: Option<usize>) -> Result<(SweepResult, Vec<PathBuf>), CliError> {
    let problem = cfg.sweep_problem()?;
    let result = run_sweep(&problem, threads).map_err(|e| CliError::Config(ConfigError::invalid("sweep", e.to_string())))?;
    let metadata: Vec<(String, String)> = cfg
        .entries()
        .into_iter()
        .filter(|(k, _)| k != "output.path")
        .collect();
    let mut paths = Vec::new();
    for &n in &problem.cycles {
        let path = output::cycle_path(out, n);
        let mut w = create(&path)?;
        output::write_heatmap(&mut w, &result, n, &metadata)?;
        w.flush()?;
        paths.push(path);
    }
    Ok((result, paths))
}

/// Runs the oracle checks, writes `check,value,bound,pass` rows to `out` and
/// fails if any check fails.
pub fn cmd_validate(cfg: &Config, out: &Path) -> Result<Vec<Check>, CliError> {
    cfg.validate()?;
    let checks = validate::run_all(cfg);
    let mut w = create(out)?;
    writeln!(w, "check,value,bound,pass")?;
    for c in &checks {
        writeln!(w, "{},{},{},{}", c.name, output::real(c.value), c.bound, c.pass)?;
    }
    w.flush()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(checks)
    } else {
        for c in &checks {
            eprintln!("{}", report_line(c));
        }
        Err(CliError::Validation(failed.join(", ")))
    }
}

pub fn report_line(c: &Check) -> String {
    format!(
        "{} {:<17} value={:e} bound {} ({})",
        if c.pass { "PASS" } else { "FAIL" },
        c.name,
        c.value,
        c.bound,
        c.detail
    )
}
