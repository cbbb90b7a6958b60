//! Oracle checks run by `qheom validate`.

use qheom::algebra::trace_distance;
use qheom::heom::{evolve, init_hierarchy, truncation_check, HierarchySpace};
use qheom::model::{BellKind, Coupling, DensityMatrix4, InitialState, ModelSpec};
use qheom::observables::{concurrence, purity};
use qheom::oracle::{
    compare, pseudomode_propagate, unitary_propagate, PseudomodeSpec,
    DEFAULT_CUTOFF_ONE_EXCITATION, DEFAULT_CUTOFF_TWO_EXCITATION,
};
use qheom::Trajectory;

use crate::config::Config;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Measured quantity; `NaN` when the check could not run.
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-6` or `in [8, 32]`.
    pub bound: String,
    pub pass: bool,
    pub detail: String,
}

fn at_most(name: &'static str, value: f64, tol: f64, detail: String) -> Check {
    Check {
        name,
        value,
        bound: format!("<= {tol:e}"),
        pass: value <= tol,
        detail,
    }
}

fn failed(name: &'static str, bound: String, detail: String) -> Check {
    Check {
        name,
        value: f64::NAN,
        bound,
        pass: false,
        detail,
    }
}

fn heom(spec: &ModelSpec, rho0: &DensityMatrix4, depth: usize, dt: f64, tau_end: f64, every: usize) -> Result<Trajectory, String> {
    let space = HierarchySpace::new(spec, depth);
    let mut st = init_hierarchy(rho0, &space);
    evolve(&mut st, spec, &space, dt, tau_end, every).map_err(|e| e.to_string())
}

/// Resonant undriven `|Φ−⟩` with `J = 0` is stationary: concurrence stays 1.
pub fn dark_state(cfg: &Config) -> Check {
    let v = &cfg.validate;
    let bound = format!("<= {:e}", v.dark_tol);
    let w = cfg.model.drive1.omega;
    let mut spec = ModelSpec::undriven(w, w, cfg.model.bath.r);
    spec.coupling = Coupling::Dipolar;
    let rho0 = match InitialState::bell(BellKind::PhiMinus).build() {
        Ok(r) => r,
        Err(e) => return failed("dark_state", bound, e.to_string()),
    };
    let it = &cfg.integrator;
    let traj = match heom(&spec, &rho0, it.depth, it.dt, v.tau_end, it.sample_every) {
        Ok(t) => t,
        Err(e) => return failed("dark_state", bound, e),
    };
    let mut worst: f64 = 0.0;
    for s in &traj.samples {
        match concurrence(&s.rho) {
            Ok(c) => worst = worst.max((c - 1.0).abs()),
            Err(e) => return failed("dark_state", bound, format!("tau={}: {e}", s.tau)),
        }
    }
    at_most(
        "dark_state",
        worst,
        v.dark_tol,
        format!("max |C - 1| over {} samples, tau <= {}", traj.len(), v.tau_end),
    )
}

/// Vanishing coupling reproduces closed-system propagation.
pub fn unitary_limit(cfg: &Config) -> Check {
    let v = &cfg.validate;
    let bound = format!("<= {:e}", v.unitary_tol);
    let mut spec = cfg.model;
    spec.bath.r = v.unitary_r;
    let it = &cfg.integrator;
    let run = || -> Result<(f64, f64), String> {
        let rho0 = cfg.initial.state().build().map_err(|e| e.to_string())?;
        let h = heom(&spec, &rho0, it.depth, it.dt, v.tau_end, it.sample_every)?;
        let u = unitary_propagate(&spec, &rho0, it.dt, v.tau_end, it.sample_every)
            .map_err(|e| e.to_string())?;
        let cmp = compare(&h, &u).map_err(|e| e.to_string())?;
        let p0 = purity(&rho0);
        let drift = h
            .samples
            .iter()
            .map(|s| (purity(&s.rho) - p0).abs())
            .fold(0.0, f64::max);
        Ok((cmp.max_trace_distance, drift))
    };
    match run() {
        Ok((d, drift)) => at_most(
            "unitary_limit",
            d.max(drift),
            v.unitary_tol,
            format!("R={:e}: max trace distance {d:e}, purity drift {drift:e}", v.unitary_r),
        ),
        Err(e) => failed("unitary_limit", bound, e),
    }
}

/// Physical trajectory at depth vs depth + extra.
pub fn truncation(cfg: &Config) -> Check {
    let v = &cfg.validate;
    let bound = format!("<= {:e}", v.truncation_tol);
    let it = &cfg.integrator;
    let (shallow, deep) = (it.depth, it.depth + v.truncation_extra);
    let rho0 = match cfg.initial.state().build() {
        Ok(r) => r,
        Err(e) => return failed("truncation", bound, e.to_string()),
    };
    match truncation_check(&cfg.model, &rho0, it.dt, v.short_tau_end, shallow, deep) {
        Ok(d) => at_most(
            "truncation",
            d,
            v.truncation_tol,
            format!("depth {shallow} vs {deep}, tau <= {}", v.short_tau_end),
        ),
        Err(e) => failed("truncation", bound, e.to_string()),
    }
}

/// Errors at `dt`, `dt/2`, `dt/4` on a short interval; RK4 gives a ratio
/// near 16.
pub fn step_convergence(cfg: &Config) -> Check {
    let v = &cfg.validate;
    let bound = format!("in [{}, {}]", v.ratio_min, v.ratio_max);
    let run = || -> Result<(f64, f64), String> {
        let rho0 = cfg.initial.state().build().map_err(|e| e.to_string())?;
        let finals: Vec<DensityMatrix4> = [1.0, 0.5, 0.25]
            .iter()
            .map(|f| {
                let dt = v.dt_base * f;
                let every = usize::MAX;
                heom(&cfg.model, &rho0, cfg.integrator.depth, dt, v.dt_tau_end, every)
                    .map(|t| t.last().expect("trajectory has samples").rho.clone())
            })
            .collect::<Result<_, _>>()?;
        let e1 = trace_distance(finals[0].matrix(), finals[1].matrix()).map_err(|e| e.to_string())?;
        let e2 = trace_distance(finals[1].matrix(), finals[2].matrix()).map_err(|e| e.to_string())?;
        Ok((e1, e2))
    };
    match run() {
        Ok((e1, e2)) => {
            let ratio = e1 / e2;
            Check {
                name: "step_convergence",
                value: ratio,
                bound,
                pass: ratio >= v.ratio_min && ratio <= v.ratio_max,
                detail: format!(
                    "dt={}: error {e1:e}, dt/2: error {e2:e}, tau = {}",
                    v.dt_base, v.dt_tau_end
                ),
            }
        }
        Err(e) => failed("step_convergence", bound, e),
    }
}

/// Hierarchy vs single damped mode with the same bath correlation.
pub fn pseudomode(cfg: &Config) -> Check {
    let v = &cfg.validate;
    let bound = format!("<= {:e}", v.pseudomode_tol);
    let it = &cfg.integrator;
    let init = cfg.initial.state();
    let cutoff = match v.fock_cutoff {
        0 if init.is_one_excitation() => DEFAULT_CUTOFF_ONE_EXCITATION,
        0 => DEFAULT_CUTOFF_TWO_EXCITATION,
        n => n,
    };
    let run = || -> Result<f64, String> {
        let rho0 = init.build().map_err(|e| e.to_string())?;
        let h = heom(&cfg.model, &rho0, it.depth, it.dt, v.short_tau_end, it.sample_every)?;
        let pm = PseudomodeSpec::matching(&cfg.model, cutoff);
        let p = pseudomode_propagate(&cfg.model, &pm, &rho0, it.dt, v.short_tau_end, it.sample_every)
            .map_err(|e| e.to_string())?;
        Ok(compare(&h, &p).map_err(|e| e.to_string())?.max_trace_distance)
    };
    match run() {
        Ok(d) => at_most(
            "pseudomode",
            d,
            v.pseudomode_tol,
            format!("depth {} vs Fock cutoff {cutoff}, tau <= {}", it.depth, v.short_tau_end),
        ),
        Err(e) => failed("pseudomode", bound, e),
    }
}

pub fn run_all(cfg: &Config) -> Vec<Check> {
    vec![
        dark_state(cfg),
        unitary_limit(cfg),
        truncation(cfg),
        step_convergence(cfg),
        pseudomode(cfg),
    ]
}
