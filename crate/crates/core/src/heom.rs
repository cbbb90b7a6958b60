//! Hierarchical equations of motion for a single Lorentzian bath exponential.
//!
//! The hierarchy carries one auxiliary 4×4 matrix per index `n = (n1, n2)`
//! with `0 ≤ n1, n2 ≤ depth` (square cutoff). Each element obeys
//!
//! ```text
//! dρ_n/dτ = −(i H_S(τ)^× + n·ν) ρ_n
//!           − i Σ_k V^× ρ_{n+e_k}
//!           − i (γ₀/2) Σ_k n_k [V^× + (−1)^k V^∘] ρ_{n−e_k}
//! ```
//!
//! with `ν = (1 − iΩ₀, 1 + iΩ₀)`, `A^× B = [A, B]` and `A^∘ B = {A, B}`.
//! Couplings to indices outside the cutoff are dropped. Only `ρ_(0,0)` is a
//! physical state.
//!
//! `γ₀` here is the amplitude of the bath correlation function, `C(0) = R/2`,
//! which makes the hierarchy reproduce `C(τ) = (R/2) e^{−(1+iΩ₀)τ}` exactly
//! (checked against the pseudomode dilation in [`crate::oracle`]).

use num_complex::Complex64;
use thiserror::Error;

use crate::algebra::{trace_distance, AlgebraError, ComplexMatrix, ZERO};
use crate::model::{Coupling, DensityMatrix4, ModelSpec};

/// Default fixed step in scaled time units.
pub const DEFAULT_DT: f64 = 1e-3;
/// Default truncation depth per hierarchy index.
pub const DEFAULT_DEPTH: usize = 20;
/// `dt · max|generator eigenvalue|` must stay below this for RK4 stability.
pub const STABILITY_LIMIT: f64 = 2.5;

/// One auxiliary matrix, row-major.
pub type Block = [Complex64; 16];

const ZERO_BLOCK: Block = [ZERO; 16];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeomError {
    #[error("non-finite derivative at tau = {tau} in hierarchy element ({n1}, {n2})")]
    NonFinite { tau: f64, n1: usize, n2: usize },
    #[error("integration failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<HeomError>,
    },
    #[error(
        "step size {dt} violates the RK4 stability guard: dt * {rate:.3} = {product:.3} >= {limit}"
    )]
    Unstable {
        dt: f64,
        rate: f64,
        product: f64,
        limit: f64,
    },
    #[error("invalid step size {0}")]
    InvalidStep(f64),
    #[error("end time {tau_end} is not after current time {tau}")]
    InvalidSpan { tau: f64, tau_end: f64 },
    #[error("truncation depths must satisfy shallow < deep, got {0} and {1}")]
    InvalidDepths(usize, usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

impl HeomError {
    /// Time of failure for integration errors.
    pub fn tau(&self) -> Option<f64> {
        match self {
            HeomError::NonFinite { tau, .. } => Some(*tau),
            HeomError::StepFailed { source, .. } => source.tau(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HierarchyIndex {
    pub n1: usize,
    pub n2: usize,
}

impl HierarchyIndex {
    pub const PHYSICAL: HierarchyIndex = HierarchyIndex { n1: 0, n2: 0 };

    pub fn new(n1: usize, n2: usize) -> Self {
        Self { n1, n2 }
    }

    #[inline]
    fn flat(&self, depth: usize) -> usize {
        self.n1 * (depth + 1) + self.n2
    }
}

/// How the coupling operator acts, specialised for speed.
#[derive(Debug, Clone, Copy, PartialEq)]
enum CouplingAction {
    /// `σ_x ⊗ 1 + 1 ⊗ σ_x`: flips bit 0 and bit 1 of the basis index.
    Dipolar,
    /// `σ_z ⊗ 1 + 1 ⊗ σ_z = diag(2, 0, 0, −2)`.
    Dephasing,
}

/// Static data of the hierarchy: cutoff, decay constants and coupling.
#[derive(Debug, Clone)]
pub struct HierarchySpace {
    pub depth: usize,
    /// `(1 − iΩ₀, 1 + iΩ₀)`.
    pub nu: [Complex64; 2],
    /// Bath correlation amplitude entering the down-coupling terms.
    pub gamma0: f64,
    pub v: ComplexMatrix,
    action: CouplingAction,
}

impl HierarchySpace {
    pub fn new(spec: &ModelSpec, depth: usize) -> Self {
        let bath = spec.bath();
        Self {
            depth,
            nu: [
                Complex64::new(1.0, -bath.omega0),
                Complex64::new(1.0, bath.omega0),
            ],
            gamma0: bath.amplitude(),
            v: spec.coupling_operator(),
            action: match spec.coupling {
                Coupling::Dipolar => CouplingAction::Dipolar,
                Coupling::Dephasing => CouplingAction::Dephasing,
            },
        }
    }

    /// Number of hierarchy elements, `(depth + 1)²`.
    pub fn len(&self) -> usize {
        (self.depth + 1) * (self.depth + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest modulus of `n·ν` over the index set.
    pub fn max_decay_rate(&self) -> f64 {
        let n = self.depth as f64;
        let mut worst: f64 = 0.0;
        for (a, b) in [(n, 0.0), (0.0, n), (n, n)] {
            worst = worst.max((self.nu[0] * a + self.nu[1] * b).norm());
        }
        worst
    }

    /// Checks the fixed step against the RK4 stability region, using the
    /// largest auxiliary decay modulus plus the spread of `H_S`.
    pub fn check_step(&self, spec: &ModelSpec, dt: f64) -> Result<(), HeomError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(HeomError::InvalidStep(dt));
        }
        let rate = self.max_decay_rate() + spec.max_energy_spread();
        let product = dt * rate;
        if product >= STABILITY_LIMIT {
            return Err(HeomError::Unstable {
                dt,
                rate,
                product,
                limit: STABILITY_LIMIT,
            });
        }
        Ok(())
    }
}

/// The integration state: all hierarchy elements at time `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    pub tau: f64,
    depth: usize,
    blocks: Vec<Block>,
}

impl HierarchyState {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, idx: HierarchyIndex) -> &Block {
        &self.blocks[idx.flat(self.depth)]
    }

    pub fn block_mut(&mut self, idx: HierarchyIndex) -> &mut Block {
        let d = self.depth;
        &mut self.blocks[idx.flat(d)]
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn element(&self, idx: HierarchyIndex) -> ComplexMatrix {
        ComplexMatrix::from_row_major(self.block(idx).to_vec())
    }

    /// `ρ_(0,0)`.
    pub fn physical(&self) -> ComplexMatrix {
        self.element(HierarchyIndex::PHYSICAL)
    }

    pub fn physical_state(&self) -> DensityMatrix4 {
        DensityMatrix4::from_matrix_unchecked(self.physical())
    }

    /// Number of elements that are not identically zero.
    pub fn nonzero_count(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.iter().any(|z| *z != ZERO))
            .count()
    }
}

/// `ρ_(0,0) = rho0`, every auxiliary element zero, `tau = 0`.
pub fn init_hierarchy(rho0: &DensityMatrix4, space: &HierarchySpace) -> HierarchyState {
    let mut blocks = vec![ZERO_BLOCK; space.len()];
    blocks[0].copy_from_slice(rho0.matrix().as_slice());
    HierarchyState {
        tau: 0.0,
        depth: space.depth,
        blocks,
    }
}

/// Time derivative of every hierarchy element.
#[derive(Debug, Clone)]
pub struct HierarchyDerivative {
    depth: usize,
    blocks: Vec<Block>,
}

impl HierarchyDerivative {
    pub fn element(&self, idx: HierarchyIndex) -> ComplexMatrix {
        ComplexMatrix::from_row_major(self.blocks[idx.flat(self.depth)].to_vec())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Evaluates the hierarchy generator at time `tau` for the given state.
///
/// The state must satisfy `ρ_(n2,n1) = ρ_(n1,n2)†`, as produced by
/// [`init_hierarchy`] and preserved by the propagation.
pub fn rhs(
    state: &HierarchyState,
    spec: &ModelSpec,
    space: &HierarchySpace,
    tau: f64,
) -> Result<HierarchyDerivative, HeomError> {
    let mut ws = Workspace::new(space.len());
    let mut out = vec![ZERO_BLOCK; space.len()];
    generator(&state.blocks, &mut out, &mut ws, spec, space, tau)?;
    Ok(HierarchyDerivative {
        depth: space.depth,
        blocks: out,
    })
}

#[inline(always)]
fn mul_neg_i(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}

#[inline(always)]
fn mul_i(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

/// `V ρ` for the specialised coupling.
#[inline]
fn left_apply(action: CouplingAction, rho: &Block, out: &mut Block) {
    match action {
        CouplingAction::Dipolar => {
            for r in 0..4 {
                let a = r ^ 1;
                let b = r ^ 2;
                for c in 0..4 {
                    out[r * 4 + c] = rho[a * 4 + c] + rho[b * 4 + c];
                }
            }
        }
        CouplingAction::Dephasing => {
            for c in 0..4 {
                out[c] = rho[c] * 2.0;
                out[4 + c] = ZERO;
                out[8 + c] = ZERO;
                out[12 + c] = rho[12 + c] * -2.0;
            }
        }
    }
}

/// `ρ V` for the specialised coupling.
#[inline]
fn right_apply(action: CouplingAction, rho: &Block, out: &mut Block) {
    match action {
        CouplingAction::Dipolar => {
            for r in 0..4 {
                for c in 0..4 {
                    out[r * 4 + c] = rho[r * 4 + (c ^ 1)] + rho[r * 4 + (c ^ 2)];
                }
            }
        }
        CouplingAction::Dephasing => {
            for r in 0..4 {
                out[r * 4] = rho[r * 4] * 2.0;
                out[r * 4 + 1] = ZERO;
                out[r * 4 + 2] = ZERO;
                out[r * 4 + 3] = rho[r * 4 + 3] * -2.0;
            }
        }
    }
}

struct Workspace {
    left: Vec<Block>,
    right: Vec<Block>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Self {
            left: vec![ZERO_BLOCK; len],
            right: vec![ZERO_BLOCK; len],
        }
    }
}

fn generator(
    input: &[Block],
    out: &mut [Block],
    ws: &mut Workspace,
    spec: &ModelSpec,
    space: &HierarchySpace,
    tau: f64,
) -> Result<(), HeomError> {
    let depth = space.depth;
    let side = depth + 1;
    let action = space.action;

    for ((rho, l), r) in input.iter().zip(ws.left.iter_mut()).zip(ws.right.iter_mut()) {
        left_apply(action, rho, l);
        right_apply(action, rho, r);
    }

    let (w1, w2) = spec.frequencies(tau);
    let diag = [w1 + w2, w1, w2, 0.0];
    let hx = 0.5 * spec.j;
    let g = space.gamma0;
    let [nu1, nu2] = space.nu;

    // ρ_(n2,n1) = ρ_(n1,n2)† is preserved by the dynamics, so only the
    // blocks with n1 ≤ n2 are computed and the rest are mirrored.
    for n1 in 0..side {
        for n2 in n1..side {
            let idx = n1 * side + n2;
            let rho = &input[idx];
            let mut d = ZERO_BLOCK;
            let decay = nu1 * n1 as f64 + nu2 * n2 as f64;

            // −i [H, ρ] − (n·ν) ρ
            for r in 0..4 {
                for c in 0..4 {
                    let z = rho[r * 4 + c];
                    d[r * 4 + c] = mul_neg_i(z * (diag[r] - diag[c])) - decay * z;
                }
            }
            if hx != 0.0 {
                // exchange part of H couples rows/columns 1 and 2
                for k in 0..4 {
                    let hr1 = rho[2 * 4 + k] * hx; // (Hρ)[1][k]
                    let hr2 = rho[4 + k] * hx; // (Hρ)[2][k]
                    d[4 + k] += mul_neg_i(hr1);
                    d[2 * 4 + k] += mul_neg_i(hr2);
                    let rh1 = rho[k * 4 + 2] * hx; // (ρH)[k][1]
                    let rh2 = rho[k * 4 + 1] * hx; // (ρH)[k][2]
                    d[k * 4 + 1] += mul_i(rh1);
                    d[k * 4 + 2] += mul_i(rh2);
                }
            }

            // − i V^× ρ_{n+e_k}
            if n1 < depth {
                let up = idx + side;
                let (l, r) = (&ws.left[up], &ws.right[up]);
                for e in 0..16 {
                    d[e] += mul_neg_i(l[e] - r[e]);
                }
            }
            if n2 < depth {
                let up = idx + 1;
                let (l, r) = (&ws.left[up], &ws.right[up]);
                for e in 0..16 {
                    d[e] += mul_neg_i(l[e] - r[e]);
                }
            }

            // k = 1: −i (γ₀/2) n₁ (V^× − V^∘) ρ = i γ₀ n₁ ρ V
            if n1 > 0 {
                let s = g * n1 as f64;
                let r = &ws.right[idx - side];
                for e in 0..16 {
                    d[e] += mul_i(r[e] * s);
                }
            }
            // k = 2: −i (γ₀/2) n₂ (V^× + V^∘) ρ = −i γ₀ n₂ V ρ
            if n2 > 0 {
                let s = g * n2 as f64;
                let l = &ws.left[idx - 1];
                for e in 0..16 {
                    d[e] += mul_neg_i(l[e] * s);
                }
            }

            if !d.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(HeomError::NonFinite { tau, n1, n2 });
            }
            if n1 != n2 {
                let m = &mut out[n2 * side + n1];
                for r in 0..4 {
                    for c in 0..4 {
                        m[r * 4 + c] = d[c * 4 + r].conj();
                    }
                }
            }
            out[idx] = d;
        }
    }
    Ok(())
}

/// Fixed-step classical RK4 propagator with preallocated buffers.
pub struct Propagator<'a> {
    spec: &'a ModelSpec,
    space: &'a HierarchySpace,
    ws: Workspace,
    k: [Vec<Block>; 4],
    stage: Vec<Block>,
}

impl<'a> Propagator<'a> {
    pub fn new(spec: &'a ModelSpec, space: &'a HierarchySpace) -> Self {
        let n = space.len();
        Self {
            spec,
            space,
            ws: Workspace::new(n),
            k: std::array::from_fn(|_| vec![ZERO_BLOCK; n]),
            stage: vec![ZERO_BLOCK; n],
        }
    }

    /// Advances `state` by one RK4 step of size `dt`.
    pub fn step(&mut self, state: &mut HierarchyState, dt: f64) -> Result<(), HeomError> {
        debug_assert_eq!(state.blocks.len(), self.stage.len());
        let tau = state.tau;
        let half = 0.5 * dt;
        let [k1, k2, k3, k4] = &mut self.k;

        generator(&state.blocks, k1, &mut self.ws, self.spec, self.space, tau)?;
        axpy_into(&mut self.stage, &state.blocks, half, k1);
        generator(&self.stage, k2, &mut self.ws, self.spec, self.space, tau + half)?;
        axpy_into(&mut self.stage, &state.blocks, half, k2);
        generator(&self.stage, k3, &mut self.ws, self.spec, self.space, tau + half)?;
        axpy_into(&mut self.stage, &state.blocks, dt, k3);
        generator(&self.stage, k4, &mut self.ws, self.spec, self.space, tau + dt)?;

        let w = dt / 6.0;
        for (i, y) in state.blocks.iter_mut().enumerate() {
            let (a, b, c, d) = (&k1[i], &k2[i], &k3[i], &k4[i]);
            for e in 0..16 {
                y[e] += (a[e] + (b[e] + c[e]) * 2.0 + d[e]) * w;
            }
        }
        state.tau = tau + dt;
        Ok(())
    }
}

fn axpy_into(dst: &mut [Block], y: &[Block], h: f64, k: &[Block]) {
    for ((d, y), k) in dst.iter_mut().zip(y).zip(k) {
        for e in 0..16 {
            d[e] = y[e] + k[e] * h;
        }
    }
}

/// One RK4 step; `H_S` is evaluated at `τ`, `τ + dt/2` and `τ + dt`.
pub fn step_rk4(
    state: &HierarchyState,
    spec: &ModelSpec,
    space: &HierarchySpace,
    dt: f64,
) -> Result<HierarchyState, HeomError> {
    space.check_step(spec, dt)?;
    let mut next = state.clone();
    Propagator::new(spec, space).step(&mut next, dt)?;
    Ok(next)
}

/// A sampled reduced density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tau: f64,
    pub rho: DensityMatrix4,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.tau)
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Sample whose time is closest to `tau` (earliest on ties).
    pub fn nearest(&self, tau: f64) -> Option<&Sample> {
        self.samples.iter().min_by(|a, b| {
            (a.tau - tau)
                .abs()
                .total_cmp(&(b.tau - tau).abs())
        })
    }
}

/// Step schedule shared by every fixed-step driver: `full` steps of `dt`
/// followed by one shortened step if `tau_end` is not on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub tau0: f64,
    pub dt: f64,
    pub full: usize,
    pub last: Option<f64>,
}

impl StepPlan {
    pub fn new(tau0: f64, tau_end: f64, dt: f64) -> Result<Self, HeomError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(HeomError::InvalidStep(dt));
        }
        if tau_end.is_nan() || tau_end <= tau0 {
            return Err(HeomError::InvalidSpan {
                tau: tau0,
                tau_end,
            });
        }
        let span = tau_end - tau0;
        let mut full = (span / dt).floor() as usize;
        // absorb round-off so that an integer number of steps hits tau_end exactly
        if ((full + 1) as f64 * dt - span).abs() <= 1e-9 * dt {
            full += 1;
        }
        let rest = span - full as f64 * dt;
        let last = if rest > 1e-9 * dt { Some(rest) } else { None };
        Ok(Self {
            tau0,
            dt,
            full,
            last,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.full + usize::from(self.last.is_some())
    }

    /// Time after `k` completed full steps.
    #[inline]
    pub fn time_after(&self, k: usize) -> f64 {
        self.tau0 + k as f64 * self.dt
    }
}

/// Propagates `state` to `tau_end`, calling `observe(step, state)` at step 0
/// and after every completed step. The last step is shortened so that the
/// final state sits exactly at `tau_end`.
pub fn evolve_with<F>(
    state: &mut HierarchyState,
    spec: &ModelSpec,
    space: &HierarchySpace,
    dt: f64,
    tau_end: f64,
    mut observe: F,
) -> Result<(), HeomError>
where
    F: FnMut(usize, &HierarchyState),
{
    space.check_step(spec, dt)?;
    let plan = StepPlan::new(state.tau, tau_end, dt)?;
    let mut prop = Propagator::new(spec, space);
    observe(0, state);
    for k in 0..plan.full {
        prop.step(state, dt).map_err(|e| HeomError::StepFailed {
            step: k + 1,
            source: Box::new(e),
        })?;
        // keep the clock on the grid instead of accumulating round-off
        state.tau = plan.time_after(k + 1);
        observe(k + 1, state);
    }
    if let Some(rest) = plan.last {
        prop.step(state, rest).map_err(|e| HeomError::StepFailed {
            step: plan.full + 1,
            source: Box::new(e),
        })?;
        state.tau = tau_end;
        observe(plan.full + 1, state);
    }
    Ok(())
}

/// Samples `ρ_(0,0)` every `sample_every` steps (including step 0) and at
/// `tau_end`.
pub fn evolve(
    state: &mut HierarchyState,
    spec: &ModelSpec,
    space: &HierarchySpace,
    dt: f64,
    tau_end: f64,
    sample_every: usize,
) -> Result<Trajectory, HeomError> {
    let every = sample_every.max(1);
    let plan = StepPlan::new(state.tau, tau_end, dt)?;
    let total = plan.total_steps();
    let mut traj = Trajectory::default();
    evolve_with(state, spec, space, dt, tau_end, |step, st| {
        if step % every == 0 || step == total {
            traj.samples.push(Sample {
                tau: st.tau,
                rho: st.physical_state(),
            });
        }
    })?;
    Ok(traj)
}

/// Runs the same problem from `t = 0` at two truncation depths and returns
/// the largest trace distance between the physical trajectories.
pub fn truncation_check(
    spec: &ModelSpec,
    rho0: &DensityMatrix4,
    dt: f64,
    tau_end: f64,
    shallow: usize,
    deep: usize,
) -> Result<f64, HeomError> {
    if shallow >= deep {
        return Err(HeomError::InvalidDepths(shallow, deep));
    }
    let run = |depth| -> Result<Trajectory, HeomError> {
        let space = HierarchySpace::new(spec, depth);
        let mut st = init_hierarchy(rho0, &space);
        evolve(&mut st, spec, &space, dt, tau_end, 10)
    };
    let a = run(shallow)?;
    let b = run(deep)?;
    let mut worst: f64 = 0.0;
    for (x, y) in a.samples.iter().zip(&b.samples) {
        worst = worst.max(trace_distance(x.rho.matrix(), y.rho.matrix())?);
    }
    Ok(worst)
}
