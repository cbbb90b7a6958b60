//! Rectangular parameter sweeps with per-cycle observable snapshots.
//!
//! Every grid cell runs its own hierarchy from `τ = 0`. Rows of the grid are
//! split into contiguous blocks, one per worker, and results are assembled
//! by grid index, so the output does not depend on the worker count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::heom::{evolve_with, init_hierarchy, HierarchySpace, StepPlan};
use crate::model::{DensityMatrix4, InitialState, ModelError, ModelSpec};
use crate::observables::{concurrence, purity, CycleClock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("axis {0}: needs at least 2 points, got {1}")]
    TooFewPoints(Parameter, usize),
    #[error("axis {0}: bounds must be finite with min < max, got [{1}, {2}]")]
    InvalidBounds(Parameter, f64, f64),
    #[error("both axes sweep {0}")]
    SameParameter(Parameter),
    #[error("conflicting lock on {0}: {1}")]
    LockConflict(Parameter, String),
    #[error("unknown sweep parameter '{0}'")]
    UnknownParameter(String),
    #[error("no cycles requested")]
    NoCycles,
    #[error("invalid cycle count {0}")]
    InvalidCycle(u32),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot start: {0}")]
    Setup(String),
}

/// Scalar model parameters that can be swept or locked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parameter {
    OmegaD1,
    OmegaD2,
    J,
    Delta1,
    Delta2,
    R,
}

impl Parameter {
    pub const ALL: [Parameter; 6] = [
        Parameter::OmegaD1,
        Parameter::OmegaD2,
        Parameter::J,
        Parameter::Delta1,
        Parameter::Delta2,
        Parameter::R,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Parameter::OmegaD1 => "omegaD1",
            Parameter::OmegaD2 => "omegaD2",
            Parameter::J => "J",
            Parameter::Delta1 => "Delta1",
            Parameter::Delta2 => "Delta2",
            Parameter::R => "R",
        }
    }

    pub fn get(&self, spec: &ModelSpec) -> f64 {
        match self {
            Parameter::OmegaD1 => spec.drive1.omega_d,
            Parameter::OmegaD2 => spec.drive2.omega_d,
            Parameter::J => spec.j,
            Parameter::Delta1 => spec.drive1.delta,
            Parameter::Delta2 => spec.drive2.delta,
            Parameter::R => spec.bath.r,
        }
    }

    pub fn set(&self, spec: &mut ModelSpec, value: f64) {
        match self {
            Parameter::OmegaD1 => spec.drive1.omega_d = value,
            Parameter::OmegaD2 => spec.drive2.omega_d = value,
            Parameter::J => spec.j = value,
            Parameter::Delta1 => spec.drive1.delta = value,
            Parameter::Delta2 => spec.drive2.delta = value,
            Parameter::R => spec.bath.r = value,
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameter {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SweepError::UnknownParameter(s.to_string()))
    }
}

/// Uniform grid `min, …, max` with `points` entries, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepAxis {
    pub parameter: Parameter,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl SweepAxis {
    pub fn new(parameter: Parameter, min: f64, max: f64, points: usize) -> Result<Self, SweepError> {
        let axis = Self {
            parameter,
            min,
            max,
            points,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.points < 2 {
            return Err(SweepError::TooFewPoints(self.parameter, self.points));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(SweepError::InvalidBounds(self.parameter, self.min, self.max));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// Where a locked parameter takes its value from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LockSource {
    /// Follows a swept parameter.
    Follow(Parameter),
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lock {
    pub target: Parameter,
    pub source: LockSource,
}

/// Builds the model at each grid coordinate, applying the locks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFactory {
    base: ModelSpec,
    a: Parameter,
    b: Parameter,
    locks: Vec<Lock>,
}

impl SpecFactory {
    pub fn at(&self, a: f64, b: f64) -> ModelSpec {
        let mut spec = self.base;
        self.a.set(&mut spec, a);
        self.b.set(&mut spec, b);
        for lock in &self.locks {
            let v = match lock.source {
                LockSource::Follow(p) if p == self.a => a,
                LockSource::Follow(_) => b,
                LockSource::Constant(c) => c,
            };
            lock.target.set(&mut spec, v);
        }
        spec
    }

    pub fn locks(&self) -> &[Lock] {
        &self.locks
    }
}

/// Validates `locks` against the swept parameters `a` and `b`.
pub fn locked_axes(
    base: &ModelSpec,
    a: Parameter,
    b: Parameter,
    locks: &[Lock],
) -> Result<SpecFactory, SweepError> {
    if a == b {
        return Err(SweepError::SameParameter(a));
    }
    for (i, lock) in locks.iter().enumerate() {
        let t = lock.target;
        if t == a || t == b {
            return Err(SweepError::LockConflict(t, "parameter is swept".into()));
        }
        if locks[..i].iter().any(|l| l.target == t) {
            return Err(SweepError::LockConflict(t, "bound more than once".into()));
        }
        match lock.source {
            LockSource::Follow(p) if p == t => {
                return Err(SweepError::LockConflict(t, "bound to itself".into()))
            }
            LockSource::Follow(p) if p != a && p != b => {
                return Err(SweepError::LockConflict(t, format!("{p} is not a swept axis")))
            }
            LockSource::Constant(c) if !c.is_finite() => {
                return Err(SweepError::LockConflict(t, "non-finite constant".into()))
            }
            _ => {}
        }
    }
    Ok(SpecFactory {
        base: *base,
        a,
        b,
        locks: locks.to_vec(),
    })
}

/// Fixed-step integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub dt: f64,
    pub depth: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            dt: crate::heom::DEFAULT_DT,
            depth: crate::heom::DEFAULT_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub cycle: u32,
    /// Time of the sample actually used.
    pub tau: f64,
    pub concurrence: f64,
    pub purity: f64,
}

/// Runs one trajectory to `max(cycles) · τ_s` and records the observables at
/// the step nearest to each `N · τ_s`.
pub fn snapshots(
    spec: &ModelSpec,
    rho0: &DensityMatrix4,
    clock: &CycleClock,
    cycles: &[u32],
    integrator: &Integrator,
) -> Result<Vec<Snapshot>, String> {
    let max = *cycles.iter().max().ok_or("no cycles requested")?;
    let tau_end = clock.time_of(max as f64);
    let dt = integrator.dt;
    let plan = StepPlan::new(0.0, tau_end, dt).map_err(|e| e.to_string())?;
    let total = plan.total_steps();
    let time = |k: usize| if k == total { tau_end } else { plan.time_after(k) };
    let nearest = |target: f64| -> usize {
        let k = ((target / dt).floor() as usize).min(total);
        [k, (k + 1).min(total)]
            .into_iter()
            .min_by(|&x, &y| (time(x) - target).abs().total_cmp(&(time(y) - target).abs()))
            .unwrap()
    };
    let wanted: Vec<usize> = cycles.iter().map(|&n| nearest(clock.time_of(n as f64))).collect();
    let space = HierarchySpace::new(spec, integrator.depth);
    let mut state = init_hierarchy(rho0, &space);
    let mut out: Vec<Option<Snapshot>> = vec![None; cycles.len()];
    let mut failure = None;
    evolve_with(&mut state, spec, &space, dt, tau_end, |step, st| {
        for (i, &k) in wanted.iter().enumerate() {
            if k != step {
                continue;
            }
            let rho = st.physical_state();
            match concurrence(&rho) {
                Ok(c) => {
                    out[i] = Some(Snapshot {
                        cycle: cycles[i],
                        tau: st.tau,
                        concurrence: c,
                        purity: purity(&rho),
                    })
                }
                Err(e) if failure.is_none() => {
                    failure = Some(format!("concurrence at tau={}: {e}", st.tau))
                }
                Err(_) => {}
            }
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(f) = failure {
        return Err(f);
    }
    Ok(out.into_iter().map(|s| s.expect("every snapshot step is visited")).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

impl CellStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CellStatus::Ok)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub a: f64,
    pub b: f64,
    /// One entry per requested cycle, in request order; empty if failed.
    pub snapshots: Vec<Snapshot>,
    pub status: CellStatus,
}

/// Everything that defines a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepProblem {
    pub base: ModelSpec,
    pub initial: InitialState,
    pub clock: CycleClock,
    pub axis_a: SweepAxis,
    pub axis_b: SweepAxis,
    pub locks: Vec<Lock>,
    pub cycles: Vec<u32>,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub problem: SweepProblem,
    /// Row-major: `cells[i * axis_b.points + j]` is `(a_i, b_j)`.
    pub cells: Vec<Cell>,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.problem.axis_b.points + j]
    }

    /// Index of `cycle` in the requested list.
    pub fn cycle_index(&self, cycle: u32) -> Option<usize> {
        self.problem.cycles.iter().position(|&n| n == cycle)
    }

    /// `(i, j) → value` grid of concurrence at `cycle`; failed cells are `None`.
    pub fn concurrence_grid(&self, cycle: u32) -> Option<Vec<Vec<Option<f64>>>> {
        let k = self.cycle_index(cycle)?;
        let nb = self.problem.axis_b.points;
        Some(
            self.cells
                .chunks(nb)
                .map(|row| {
                    row.iter()
                        .map(|c| c.snapshots.get(k).map(|s| s.concurrence))
                        .collect()
                })
                .collect(),
        )
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| !c.status.is_ok()).count()
    }
}

/// Runs every grid cell on `threads` workers (all available if `None`).
pub fn run_sweep(problem: &SweepProblem, threads: Option<usize>) -> Result<SweepResult, SweepError> {
    problem.axis_a.validate()?;
    problem.axis_b.validate()?;
    if problem.cycles.is_empty() {
        return Err(SweepError::NoCycles);
    }
    if let Some(&n) = problem.cycles.iter().find(|&&n| n == 0) {
        return Err(SweepError::InvalidCycle(n));
    }
    let factory = locked_axes(
        &problem.base,
        problem.axis_a.parameter,
        problem.axis_b.parameter,
        &problem.locks,
    )?;
    let rho0 = problem.initial.build()?;
    let (na, nb) = (problem.axis_a.points, problem.axis_b.points);
    let workers = threads
        .unwrap_or_else(rayon::current_num_threads)
        .clamp(1, na);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Setup(e.to_string()))?;
    let rows_per = na.div_ceil(workers);
    let blocks: Vec<(usize, usize)> = (0..na)
        .step_by(rows_per)
        .map(|s| (s, (s + rows_per).min(na)))
        .collect();
    let run_cell = |i: usize, j: usize| -> Cell {
        let (a, b) = (problem.axis_a.value(i), problem.axis_b.value(j));
        let spec = factory.at(a, b);
        let result = spec
            .validate()
            .map_err(|e| e.to_string())
            .and_then(|_| snapshots(&spec, &rho0, &problem.clock, &problem.cycles, &problem.integrator));
        match result {
            Ok(snapshots) => Cell {
                a,
                b,
                snapshots,
                status: CellStatus::Ok,
            },
            Err(reason) => Cell {
                a,
                b,
                snapshots: Vec::new(),
                status: CellStatus::Failed(reason),
            },
        }
    };
    let per_block: Vec<Vec<Cell>> = pool.install(|| {
        blocks
            .par_iter()
            .map(|&(lo, hi)| {
                (lo..hi)
                    .flat_map(|i| (0..nb).map(move |j| (i, j)))
                    .map(|(i, j)| run_cell(i, j))
                    .collect()
            })
            .collect()
    });
    Ok(SweepResult {
        problem: problem.clone(),
        cells: per_block.into_iter().flatten().collect(),
    })
}
