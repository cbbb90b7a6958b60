//! Independent propagators used to cross-check the hierarchy.
//!
//! * [`unitary_propagate`] integrates the closed-system von Neumann equation.
//! * [`pseudomode_propagate`] replaces the Lorentzian bath by a single damped
//!   bosonic mode. A mode of frequency `Ω₀`, energy decay rate 2 and coupling
//!   `g V ⊗ (a + a†)` with `g² = R/2` has the free correlation function
//!   `g² e^{−(1 + iΩ₀)τ}`, identical to the bath's, so the reduced qubit
//!   dynamics are exact up to the Fock cutoff.

use num_complex::Complex64;
use thiserror::Error;

use crate::algebra::{trace_distance, AlgebraError, ComplexMatrix, I, ZERO};
use crate::heom::{HeomError, Sample, StepPlan, Trajectory};
use crate::model::{DensityMatrix4, ModelSpec};
use crate::observables::{concurrence, purity};

/// Mode occupation above which the Fock cutoff is considered too small.
pub const TOP_FOCK_LIMIT: f64 = 1e-6;
/// Default Fock cutoff for one-excitation initial states.
pub const DEFAULT_CUTOFF_ONE_EXCITATION: usize = 16;
/// Default Fock cutoff for states with two excitations.
pub const DEFAULT_CUTOFF_TWO_EXCITATION: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("non-finite state at tau = {tau}")]
    NonFinite { tau: f64 },
    #[error(
        "Fock cutoff {cutoff} too small: top level population {population:e} at tau = {tau}"
    )]
    CutoffInadequate {
        cutoff: usize,
        population: f64,
        tau: f64,
    },
    #[error("trajectories are on different grids ({0} vs {1} samples, or times differ)")]
    GridMismatch(usize, usize),
    #[error(transparent)]
    Schedule(#[from] HeomError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Closed-system RK4 propagation of `dρ/dτ = −i[H_S(τ), ρ]` on the same
/// sampling grid as [`crate::heom::evolve`].
pub fn unitary_propagate(
    spec: &ModelSpec,
    rho0: &DensityMatrix4,
    dt: f64,
    tau_end: f64,
    sample_every: usize,
) -> Result<Trajectory, OracleError> {
    let deriv = |tau: f64, rho: &ComplexMatrix| -> ComplexMatrix {
        let h = spec.hamiltonian_at(tau);
        (&h.matmul(rho) - &rho.matmul(&h)).scale(-I)
    };
    let mut rho = rho0.matrix().clone();
    drive(0.0, tau_end, dt, sample_every, &mut rho, |tau, h, rho| {
        rk4(tau, h, rho, &deriv);
        if rho.is_finite() {
            Ok(())
        } else {
            Err(OracleError::NonFinite { tau })
        }
    }, |_| Ok(()), |rho| rho.clone())
}

fn rk4<F>(tau: f64, h: f64, y: &mut ComplexMatrix, f: &F)
where
    F: Fn(f64, &ComplexMatrix) -> ComplexMatrix,
{
    let k1 = f(tau, y);
    let k2 = f(tau + 0.5 * h, &(&*y + &k1.scale_real(0.5 * h)));
    let k3 = f(tau + 0.5 * h, &(&*y + &k2.scale_real(0.5 * h)));
    let k4 = f(tau + h, &(&*y + &k3.scale_real(h)));
    let w = h / 6.0;
    let data = y.as_mut_slice();
    for (i, d) in data.iter_mut().enumerate() {
        let (a, b, c, e) = (
            k1.as_slice()[i],
            k2.as_slice()[i],
            k3.as_slice()[i],
            k4.as_slice()[i],
        );
        *d += (a + (b + c) * 2.0 + e) * w;
    }
}

/// Shared fixed-step driver: advances `state` along the [`StepPlan`] grid and
/// records `reduce(state)` at step 0, every `sample_every` steps and at the end.
#[allow(clippy::too_many_arguments)]
fn drive<S, Step, Check, Reduce>(
    tau0: f64,
    tau_end: f64,
    dt: f64,
    sample_every: usize,
    state: &mut S,
    mut step: Step,
    mut check: Check,
    reduce: Reduce,
) -> Result<Trajectory, OracleError>
where
    Step: FnMut(f64, f64, &mut S) -> Result<(), OracleError>,
    Check: FnMut(&S) -> Result<(), OracleError>,
    Reduce: Fn(&S) -> ComplexMatrix,
{
    let plan = StepPlan::new(tau0, tau_end, dt)?;
    let every = sample_every.max(1);
    let total = plan.total_steps();
    let mut traj = Trajectory::default();
    let record = |tau: f64, s: &S, traj: &mut Trajectory| {
        traj.samples.push(Sample {
            tau,
            rho: DensityMatrix4::from_matrix_unchecked(reduce(s)),
        })
    };
    record(tau0, state, &mut traj);
    for k in 0..total {
        let tau = plan.time_after(k);
        let h = if k < plan.full { dt } else { plan.last.unwrap() };
        step(tau, h, state)?;
        let now = if k + 1 == total { tau_end } else { plan.time_after(k + 1) };
        if (k + 1) % every == 0 || k + 1 == total {
            check(state)?;
            record(now, state, &mut traj);
        }
    }
    Ok(traj)
}

/// Parameters of the single damped mode replacing the bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudomodeSpec {
    pub fock_cutoff: usize,
    /// System–mode coupling `g`.
    pub g: f64,
    pub mode_freq: f64,
    /// Energy decay rate of the mode (Lindblad rate on `a`).
    pub mode_decay: f64,
}

impl PseudomodeSpec {
    /// Mode reproducing the bath correlation of `spec`: `g = √(R/2)`,
    /// frequency `Ω₀`, decay 2.
    pub fn matching(spec: &ModelSpec, fock_cutoff: usize) -> Self {
        let bath = spec.bath();
        Self {
            fock_cutoff,
            g: bath.amplitude().sqrt(),
            mode_freq: bath.omega0,
            mode_decay: 2.0,
        }
    }

    /// `g² exp(−(κ/2 + iΩ₀) τ)`, the free vacuum autocorrelation of `g(a + a†)`.
    pub fn correlation(&self, tau: f64) -> Complex64 {
        let rate = Complex64::new(0.5 * self.mode_decay, self.mode_freq);
        (-rate * tau).exp() * (self.g * self.g)
    }

    pub fn dim(&self) -> usize {
        4 * self.fock_cutoff
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone)]
struct Sparse {
    dim: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl Sparse {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    fn add(&mut self, r: usize, c: usize, v: Complex64) {
        if v == ZERO {
            return;
        }
        if let Some(e) = self.rows[r].iter_mut().find(|e| e.0 == c) {
            e.1 += v;
        } else {
            self.rows[r].push((c, v));
        }
    }

    /// `out = self · m` (dense `m`).
    fn mul_dense(&self, m: &ComplexMatrix, out: &mut ComplexMatrix) {
        let n = self.dim;
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        dst.fill(ZERO);
        for (r, row) in self.rows.iter().enumerate() {
            let d = &mut dst[r * n..(r + 1) * n];
            for &(c, v) in row {
                let s = &src[c * n..(c + 1) * n];
                for (x, y) in d.iter_mut().zip(s) {
                    *x += v * y;
                }
            }
        }
    }
}

/// Qubits plus one damped mode, as a dense density matrix on `4 · cutoff`
/// levels ordered `(qubit, fock)` with the qubit index slow.
pub struct PseudomodePropagator<'a> {
    spec: &'a ModelSpec,
    pm: PseudomodeSpec,
    /// Time-independent part of `H_eff = H − i(κ/2) a†a`.
    static_part: Sparse,
    rho: ComplexMatrix,
    tau: f64,
}

impl<'a> PseudomodePropagator<'a> {
    pub fn new(spec: &'a ModelSpec, pm: PseudomodeSpec, rho0: &DensityMatrix4) -> Self {
        let m = pm.fock_cutoff;
        let dim = pm.dim();
        let v = spec.coupling_operator();
        let mut h = Sparse::new(dim);
        for s in 0..4 {
            for n in 0..m {
                let i = s * m + n;
                h.add(
                    i,
                    i,
                    Complex64::new(pm.mode_freq * n as f64, -0.5 * pm.mode_decay * n as f64),
                );
            }
        }
        for s in 0..4 {
            for t in 0..4 {
                let vst = v[(s, t)];
                if vst == ZERO {
                    continue;
                }
                for n in 0..m.saturating_sub(1) {
                    let amp = vst * (pm.g * ((n + 1) as f64).sqrt());
                    // a† : |n⟩ → √(n+1)|n+1⟩, and a back
                    h.add(s * m + n + 1, t * m + n, amp);
                    h.add(s * m + n, t * m + n + 1, amp);
                }
            }
        }
        let mut rho = ComplexMatrix::zeros(dim);
        for s in 0..4 {
            for t in 0..4 {
                rho[(s * m, t * m)] = rho0.get(s, t);
            }
        }
        Self {
            spec,
            pm,
            static_part: h,
            rho,
            tau: 0.0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Full qubit–mode density matrix.
    pub fn state(&self) -> &ComplexMatrix {
        &self.rho
    }

    /// Partial trace over the mode.
    pub fn reduced(&self) -> ComplexMatrix {
        reduce(&self.rho, self.pm.fock_cutoff)
    }

    /// Population of the highest Fock level kept.
    pub fn top_fock_population(&self) -> f64 {
        let m = self.pm.fock_cutoff;
        (0..4).map(|s| self.rho[(s * m + m - 1, s * m + m - 1)].re).sum()
    }

    fn derivative(&self, tau: f64, rho: &ComplexMatrix, y: &mut ComplexMatrix) -> ComplexMatrix {
        let m = self.pm.fock_cutoff;
        let dim = self.pm.dim();
        // Y = H_eff ρ
        self.static_part.mul_dense(rho, y);
        let h = self.spec.hamiltonian_at(tau);
        {
            let src = rho.as_slice();
            let dst = y.as_mut_slice();
            for s in 0..4 {
                for t in 0..4 {
                    let hst = h[(s, t)];
                    if hst == ZERO {
                        continue;
                    }
                    for n in 0..m {
                        let (r, c) = (s * m + n, t * m + n);
                        let (d, sr) = (r * dim, c * dim);
                        for k in 0..dim {
                            dst[d + k] += hst * src[sr + k];
                        }
                    }
                }
            }
        }
        // −i(Y − Y†) + κ a ρ a†
        let kappa = self.pm.mode_decay;
        ComplexMatrix::from_fn(dim, |r, c| {
            let mut z = -I * (y[(r, c)] - y[(c, r)].conj());
            let (nr, nc) = (r % m, c % m);
            if nr + 1 < m && nc + 1 < m {
                let w = kappa * (((nr + 1) * (nc + 1)) as f64).sqrt();
                z += rho[(r + 1, c + 1)] * w;
            }
            z
        })
    }

    pub fn step(&mut self, dt: f64) -> Result<(), OracleError> {
        let dim = self.pm.dim();
        let mut y = ComplexMatrix::zeros(dim);
        let tau = self.tau;
        let k1 = self.derivative(tau, &self.rho, &mut y);
        let s = &self.rho + &k1.scale_real(0.5 * dt);
        let k2 = self.derivative(tau + 0.5 * dt, &s, &mut y);
        let s = &self.rho + &k2.scale_real(0.5 * dt);
        let k3 = self.derivative(tau + 0.5 * dt, &s, &mut y);
        let s = &self.rho + &k3.scale_real(dt);
        let k4 = self.derivative(tau + dt, &s, &mut y);
        let w = dt / 6.0;
        for (i, d) in self.rho.as_mut_slice().iter_mut().enumerate() {
            *d += (k1.as_slice()[i] + (k2.as_slice()[i] + k3.as_slice()[i]) * 2.0 + k4.as_slice()[i]) * w;
        }
        self.tau = tau + dt;
        if !self.rho.is_finite() {
            return Err(OracleError::NonFinite { tau: self.tau });
        }
        Ok(())
    }
}

fn reduce(full: &ComplexMatrix, m: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(4, |s, t| (0..m).map(|n| full[(s * m + n, t * m + n)]).sum())
}

/// Propagates the dilated qubit–mode system (mode initially in vacuum) and
/// returns the reduced two-qubit trajectory on the [`crate::heom::evolve`]
/// sampling grid. Fails if the top Fock level ever exceeds
/// [`TOP_FOCK_LIMIT`] at a sample.
pub fn pseudomode_propagate(
    spec: &ModelSpec,
    pm: &PseudomodeSpec,
    rho0: &DensityMatrix4,
    dt: f64,
    tau_end: f64,
    sample_every: usize,
) -> Result<Trajectory, OracleError> {
    let mut prop = PseudomodePropagator::new(spec, *pm, rho0);
    let cutoff = pm.fock_cutoff;
    drive(
        0.0,
        tau_end,
        dt,
        sample_every,
        &mut prop,
        |_, h, p| p.step(h),
        |p| {
            let population = p.top_fock_population();
            if population > TOP_FOCK_LIMIT {
                Err(OracleError::CutoffInadequate {
                    cutoff,
                    population,
                    tau: p.tau(),
                })
            } else {
                Ok(())
            }
        },
        |p| p.reduced(),
    )
}

/// Trajectory agreement summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub samples: usize,
    pub max_trace_distance: f64,
    pub mean_trace_distance: f64,
    /// Time of the largest trace distance.
    pub worst_tau: f64,
    pub max_purity_delta: f64,
    pub max_concurrence_delta: f64,
}

/// Compares two trajectories sample by sample. Both must share the grid.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<Comparison, OracleError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(OracleError::GridMismatch(a.len(), b.len()));
    }
    let mut out = Comparison {
        samples: a.len(),
        max_trace_distance: 0.0,
        mean_trace_distance: 0.0,
        worst_tau: a.samples[0].tau,
        max_purity_delta: 0.0,
        max_concurrence_delta: 0.0,
    };
    let mut sum = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        if (x.tau - y.tau).abs() > 1e-9 {
            return Err(OracleError::GridMismatch(a.len(), b.len()));
        }
        let d = trace_distance(x.rho.matrix(), y.rho.matrix())?;
        sum += d;
        if d > out.max_trace_distance {
            out.max_trace_distance = d;
            out.worst_tau = x.tau;
        }
        out.max_purity_delta = out
            .max_purity_delta
            .max((purity(&x.rho) - purity(&y.rho)).abs());
        out.max_concurrence_delta = out
            .max_concurrence_delta
            .max((concurrence(&x.rho)? - concurrence(&y.rho)?).abs());
    }
    out.mean_trace_distance = sum / a.len() as f64;
    Ok(out)
}
