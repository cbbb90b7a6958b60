//! Flat `key = value` run configuration.
//!
//! Lines hold one `key = value` pair; `#` starts a comment. Keys use dotted
//! prefixes (`drive1.omega`, `bath.R`). Every key has a default, unknown and
//! repeated keys are rejected, and [`Config::serialize`] writes every key so
//! that parsing its output reproduces the same configuration.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use qheom::model::{BellKind, Coupling, DrivingProtocol, InitialState, ModelSpec, XStateEntries};
use qheom::observables::{ClockMode, CycleClock};
use qheom::sweep::{Integrator, Lock, LockSource, Parameter, SweepAxis, SweepProblem};
use qheom::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn new(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            line,
            key: key.map(str::to_string),
            message: message.into(),
        }
    }

    pub fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self::new(None, Some(key), message)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Conversion between a config value and its text form.
pub trait FieldValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v = match s {
        "pi" => PI,
        "-pi" => -PI,
        _ => s.parse::<f64>().map_err(|_| format!("expected a number, got '{s}'"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value '{s}'"))
    }
}

impl FieldValue for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        parse_real(s)
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

/// `auto` stands for `None`.
impl FieldValue for Option<f64> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            parse_real(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.render())
    }
}

impl FieldValue for usize {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl FieldValue for u32 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse()
            .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl FieldValue for String {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            Err("empty value".into())
        } else {
            Ok(s.to_string())
        }
    }
    fn render(&self) -> String {
        self.clone()
    }
}

macro_rules! named_enum {
    ($ty:ty, $($variant:path => $name:literal),+ $(,)?) => {
        impl FieldValue for $ty {
            fn parse_value(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!(
                        "expected one of {}, got '{s}'",
                        [$($name),+].join(", ")
                    )),
                }
            }
            fn render(&self) -> String {
                match self {
                    $($variant => $name.to_string(),)+
                }
            }
        }
    };
}

named_enum!(BellKind,
    BellKind::PhiPlus => "phi_plus",
    BellKind::PhiMinus => "phi_minus",
    BellKind::PsiPlus => "psi_plus",
    BellKind::PsiMinus => "psi_minus",
);
named_enum!(Coupling, Coupling::Dipolar => "dipolar", Coupling::Dephasing => "dephasing");
named_enum!(ClockMode,
    ClockMode::OneExcitation => "one_excitation",
    ClockMode::TwoExcitation => "two_excitation",
    ClockMode::Explicit => "explicit",
);
named_enum!(InitialKind,
    InitialKind::Bell => "bell",
    InitialKind::Werner => "werner",
    InitialKind::XState => "xstate",
);

impl FieldValue for Parameter {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e: qheom::sweep::SweepError| e.to_string())
    }
    fn render(&self) -> String {
        self.name().to_string()
    }
}

/// Comma-separated list, e.g. `1,3,5,7`.
impl FieldValue for Vec<u32> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',').map(|p| u32::parse_value(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
    }
}

/// `none`, or comma-separated `target=source` bindings where the source is a
/// parameter name or a number, e.g. `omegaD2=omegaD1` or `omegaD2=1`.
impl FieldValue for Vec<Lock> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|item| {
                let (t, src) = item
                    .split_once('=')
                    .ok_or_else(|| format!("lock '{item}' must look like target=source"))?;
                let target = Parameter::parse_value(t.trim())?;
                let src = src.trim();
                let source = match Parameter::parse_value(src) {
                    Ok(p) => LockSource::Follow(p),
                    Err(_) => LockSource::Constant(parse_real(src).map_err(|_| {
                        format!("lock source '{src}' is neither a parameter nor a number")
                    })?),
                };
                Ok(Lock { target, source })
            })
            .collect()
    }
    fn render(&self) -> String {
        if self.is_empty() {
            return "none".into();
        }
        self.iter()
            .map(|l| match l.source {
                LockSource::Follow(p) => format!("{}={}", l.target.name(), p.name()),
                LockSource::Constant(c) => format!("{}={}", l.target.name(), c.render()),
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Walks every config key; used both to parse and to serialize.
pub trait Visitor {
    fn section(&mut self, title: &str);
    fn field<T: FieldValue>(&mut self, key: &str, value: &mut T);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Bell,
    Werner,
    XState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConfig {
    pub kind: InitialKind,
    /// Bell-like state, also the core of the Werner-like state.
    pub bell: BellKind,
    pub p: f64,
    /// Werner mixing weight.
    pub r: f64,
    pub xstate: XStateEntries,
}

impl InitialConfig {
    pub fn state(&self) -> InitialState {
        match self.kind {
            InitialKind::Bell => InitialState::Bell {
                kind: self.bell,
                p: self.p,
            },
            InitialKind::Werner => InitialState::Werner {
                core: self.bell,
                p: self.p,
                r: self.r,
            },
            InitialKind::XState => InitialState::XState(self.xstate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockConfig {
    pub mode: ClockMode,
    pub tau_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub depth: usize,
    pub sample_every: usize,
    /// Natural cycles to simulate.
    pub cycles: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axis_a: SweepAxis,
    pub axis_b: SweepAxis,
    pub cycles: Vec<u32>,
    pub locks: Vec<Lock>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateConfig {
    /// Horizon of the dark-state and unitary-limit checks.
    pub tau_end: f64,
    /// Horizon of the truncation and pseudomode checks.
    pub short_tau_end: f64,
    pub dark_tol: f64,
    pub unitary_r: f64,
    pub unitary_tol: f64,
    pub truncation_extra: usize,
    pub truncation_tol: f64,
    pub dt_base: f64,
    pub dt_tau_end: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub pseudomode_tol: f64,
    /// Fock cutoff; `0` picks 16 for one-excitation states and 24 otherwise.
    pub fock_cutoff: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: ModelSpec,
    pub initial: InitialConfig,
    pub clock: ClockConfig,
    pub integrator: IntegratorConfig,
    pub output: String,
    pub gp_eigen_stride: usize,
    pub sweep: SweepConfig,
    pub validate: ValidateConfig,
}

impl Default for Config {
    fn default() -> Self {
        let drive = |omega, delta, phi| DrivingProtocol {
            omega,
            delta,
            omega_d: 0.0,
            phi,
        };
        let mut model = ModelSpec::undriven(15.0, 10.0, 1.0);
        model.drive1 = drive(15.0, 4.0, PI);
        model.drive2 = drive(10.0, 7.0, 0.0);
        Self {
            model,
            initial: InitialConfig {
                kind: InitialKind::Bell,
                bell: BellKind::PhiPlus,
                p: 0.5,
                r: 1.0,
                xstate: XStateEntries {
                    rho11: 0.0,
                    rho22: 0.5,
                    rho33: 0.5,
                    rho44: 0.0,
                    rho23: Complex64::new(0.5, 0.0),
                    rho14: Complex64::new(0.0, 0.0),
                },
            },
            clock: ClockConfig {
                mode: ClockMode::Explicit,
                tau_s: Some(1.04),
            },
            integrator: IntegratorConfig {
                dt: 1e-3,
                depth: 20,
                sample_every: 10,
                cycles: 5,
            },
            output: "out.csv".into(),
            gp_eigen_stride: 1,
            sweep: SweepConfig {
                axis_a: SweepAxis {
                    parameter: Parameter::OmegaD1,
                    min: 0.0,
                    max: 8.0,
                    points: 41,
                },
                axis_b: SweepAxis {
                    parameter: Parameter::OmegaD2,
                    min: 0.0,
                    max: 8.0,
                    points: 41,
                },
                cycles: vec![1, 3, 5, 7],
                locks: Vec::new(),
            },
            validate: ValidateConfig {
                tau_end: 10.0,
                short_tau_end: 5.0,
                dark_tol: 1e-6,
                unitary_r: 1e-12,
                unitary_tol: 1e-8,
                truncation_extra: 4,
                truncation_tol: 1e-6,
                dt_base: 4e-3,
                dt_tau_end: 1.0,
                ratio_min: 8.0,
                ratio_max: 32.0,
                pseudomode_tol: 1e-3,
                fock_cutoff: 0,
            },
        }
    }
}

fn visit_drive<V: Visitor>(v: &mut V, prefix: &str, d: &mut DrivingProtocol) {
    v.field(&format!("{prefix}.omega"), &mut d.omega);
    v.field(&format!("{prefix}.delta"), &mut d.delta);
    v.field(&format!("{prefix}.omega_d"), &mut d.omega_d);
    v.field(&format!("{prefix}.phi"), &mut d.phi);
}

fn visit_axis<V: Visitor>(v: &mut V, prefix: &str, a: &mut SweepAxis) {
    v.field(&format!("{prefix}.parameter"), &mut a.parameter);
    v.field(&format!("{prefix}.min"), &mut a.min);
    v.field(&format!("{prefix}.max"), &mut a.max);
    v.field(&format!("{prefix}.points"), &mut a.points);
}

fn visit_complex<V: Visitor>(v: &mut V, name: &str, z: &mut Complex64) {
    v.field(&format!("initial.re_{name}"), &mut z.re);
    v.field(&format!("initial.im_{name}"), &mut z.im);
}

impl Config {
    pub fn visit<V: Visitor>(&mut self, v: &mut V) {
        v.section("model");
        visit_drive(v, "drive1", &mut self.model.drive1);
        visit_drive(v, "drive2", &mut self.model.drive2);
        v.field("J", &mut self.model.j);
        v.field("bath.R", &mut self.model.bath.r);
        v.field("bath.omega0", &mut self.model.bath.omega0);
        v.field("coupling", &mut self.model.coupling);

        v.section("initial state");
        let init = &mut self.initial;
        v.field("initial.kind", &mut init.kind);
        v.field("initial.bell", &mut init.bell);
        v.field("initial.p", &mut init.p);
        v.field("initial.r", &mut init.r);
        v.field("initial.rho11", &mut init.xstate.rho11);
        v.field("initial.rho22", &mut init.xstate.rho22);
        v.field("initial.rho33", &mut init.xstate.rho33);
        v.field("initial.rho44", &mut init.xstate.rho44);
        visit_complex(v, "rho23", &mut init.xstate.rho23);
        visit_complex(v, "rho14", &mut init.xstate.rho14);

        v.section("cycle clock");
        v.field("clock.mode", &mut self.clock.mode);
        v.field("clock.tau_s", &mut self.clock.tau_s);

        v.section("integrator");
        v.field("integrator.dt", &mut self.integrator.dt);
        v.field("integrator.depth", &mut self.integrator.depth);
        v.field("integrator.sample_every", &mut self.integrator.sample_every);
        v.field("integrator.cycles", &mut self.integrator.cycles);

        v.section("output");
        v.field("output.path", &mut self.output);

        v.section("geometric phase");
        v.field("gp.eigen_stride", &mut self.gp_eigen_stride);

        v.section("sweep");
        visit_axis(v, "sweep.axisA", &mut self.sweep.axis_a);
        visit_axis(v, "sweep.axisB", &mut self.sweep.axis_b);
        v.field("sweep.cycles", &mut self.sweep.cycles);
        v.field("sweep.lock", &mut self.sweep.locks);

        v.section("validate");
        let c = &mut self.validate;
        v.field("validate.tau_end", &mut c.tau_end);
        v.field("validate.short_tau_end", &mut c.short_tau_end);
        v.field("validate.dark_tol", &mut c.dark_tol);
        v.field("validate.unitary_R", &mut c.unitary_r);
        v.field("validate.unitary_tol", &mut c.unitary_tol);
        v.field("validate.truncation_extra", &mut c.truncation_extra);
        v.field("validate.truncation_tol", &mut c.truncation_tol);
        v.field("validate.dt_base", &mut c.dt_base);
        v.field("validate.dt_tau_end", &mut c.dt_tau_end);
        v.field("validate.ratio_min", &mut c.ratio_min);
        v.field("validate.ratio_max", &mut c.ratio_max);
        v.field("validate.pseudomode_tol", &mut c.pseudomode_tol);
        v.field("validate.fock_cutoff", &mut c.fock_cutoff);
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: HashMap<String, (usize, String)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::new(Some(line), None, format!("expected key = value, got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::new(Some(line), None, "empty key"));
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(ConfigError::new(
                    Some(line),
                    Some(key),
                    format!("duplicate key (first set on line {first})"),
                ));
            }
            entries.insert(key.to_string(), (line, value.to_string()));
        }
        let mut parser = Parser {
            entries,
            error: None,
        };
        let mut config = Config::default();
        config.visit(&mut parser);
        if let Some(e) = parser.error {
            return Err(e);
        }
        if let Some((key, (line, _))) = parser.entries.into_iter().min_by_key(|(_, (l, _))| *l) {
            return Err(ConfigError::new(Some(line), Some(&key), "unknown key"));
        }
        Ok(config)
    }

    pub fn serialize(&self) -> String {
        let mut w = Writer::default();
        self.clone().visit(&mut w);
        w.out
    }

    /// `(key, value)` pairs in serialization order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut w = Writer::default();
        self.clone().visit(&mut w);
        w.pairs
    }

    pub fn clock(&self) -> Result<CycleClock, ConfigError> {
        CycleClock::resolve(self.clock.mode, &self.model, self.clock.tau_s)
            .map_err(|e| ConfigError::invalid("clock", e.to_string()))
    }

    /// Checks everything a command needs beyond syntax.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError::invalid("model", e.to_string()))?;
        self.initial
            .state()
            .build()
            .map_err(|e| ConfigError::invalid("initial", e.to_string()))?;
        self.clock()?;
        let it = &self.integrator;
        if !(it.dt.is_finite() && it.dt > 0.0) {
            return Err(ConfigError::invalid("integrator.dt", "must be > 0"));
        }
        if it.sample_every == 0 {
            return Err(ConfigError::invalid("integrator.sample_every", "must be >= 1"));
        }
        if it.cycles == 0 {
            return Err(ConfigError::invalid("integrator.cycles", "must be >= 1"));
        }
        if self.gp_eigen_stride == 0 {
            return Err(ConfigError::invalid("gp.eigen_stride", "must be >= 1"));
        }
        Ok(())
    }

    pub fn sweep_problem(&self) -> Result<SweepProblem, ConfigError> {
        self.validate()?;
        for (key, axis) in [("sweep.axisA", &self.sweep.axis_a), ("sweep.axisB", &self.sweep.axis_b)] {
            axis.validate()
                .map_err(|e| ConfigError::invalid(key, e.to_string()))?;
        }
        if self.sweep.cycles.is_empty() || self.sweep.cycles.contains(&0) {
            return Err(ConfigError::invalid("sweep.cycles", "cycle counts must be >= 1"));
        }
        qheom::sweep::locked_axes(
            &self.model,
            self.sweep.axis_a.parameter,
            self.sweep.axis_b.parameter,
            &self.sweep.locks,
        )
        .map_err(|e| ConfigError::invalid("sweep.lock", e.to_string()))?;
        Ok(SweepProblem {
            base: self.model,
            initial: self.initial.state(),
            clock: self.clock()?,
            axis_a: self.sweep.axis_a,
            axis_b: self.sweep.axis_b,
            locks: self.sweep.locks.clone(),
            cycles: self.sweep.cycles.clone(),
            integrator: Integrator {
                dt: self.integrator.dt,
                depth: self.integrator.depth,
            },
        })
    }
}

struct Parser {
    entries: HashMap<String, (usize, String)>,
    error: Option<ConfigError>,
}

impl Visitor for Parser {
    fn section(&mut self, _: &str) {}

    fn field<T: FieldValue>(&mut self, key: &str, value: &mut T) {
        let Some((line, text)) = self.entries.remove(key) else {
            return;
        };
        match T::parse_value(&text) {
            Ok(v) => *value = v,
            Err(msg) => {
                if self.error.is_none() {
                    self.error = Some(ConfigError::new(Some(line), Some(key), msg));
                }
            }
        }
    }
}

#[derive(Default)]
struct Writer {
    out: String,
    pairs: Vec<(String, String)>,
}

impl Visitor for Writer {
    fn section(&mut self, title: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push_str(&format!("# {title}\n"));
    }

    fn field<T: FieldValue>(&mut self, key: &str, value: &mut T) {
        let text = value.render();
        self.out.push_str(&format!("{key} = {text}\n"));
        self.pairs.push((key.to_string(), text));
    }
}
