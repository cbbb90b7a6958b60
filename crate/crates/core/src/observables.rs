//! Purity, concurrence, matrix elements and the kinematic mixed-state
//! geometric phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::algebra::{hermitian_eig, kron, pauli, AlgebraError, ComplexMatrix, HermitianEig};
use crate::heom::Trajectory;
use crate::model::{DensityMatrix4, ModelSpec};

/// `tr ρ²`.
pub fn purity(rho: &DensityMatrix4) -> f64 {
    rho.matrix().as_slice().iter().map(|z| z.norm_sqr()).sum()
}

fn spin_flip() -> ComplexMatrix {
    kron(&pauli::sigma_y(), &pauli::sigma_y())
}

/// Most negative eigenvalue of `ρ` tolerated by [`concurrence`]; truncated
/// hierarchies are only approximately positive.
pub const NEGATIVITY_TOL: f64 = 1e-6;

/// Wootters concurrence.
///
/// The `λ_i` of `ρ ρ̃`, with `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`, are obtained as the
/// eigenvalues of the Hermitian matrix `√ρ ρ̃ √ρ`, so only the Hermitian
/// eigensolver is involved.
pub fn concurrence(rho: &DensityMatrix4) -> Result<f64, AlgebraError> {
    let m = rho.matrix();
    let eig = hermitian_eig(m)?;
    if eig.eigenvalues[0] < -NEGATIVITY_TOL {
        return Err(AlgebraError::NotPositive(eig.eigenvalues[0]));
    }
    let sqrt_rho = eig.reconstruct_with(|e| e.max(0.0).sqrt());
    let yy = spin_flip();
    let tilde = yy.matmul(&m.conj()).matmul(&yy);
    let r = sqrt_rho.matmul(&tilde).matmul(&sqrt_rho).hermitian_part();
    let lam = hermitian_eig(&r)?.eigenvalues;
    let s: Vec<f64> = lam.iter().rev().map(|l| l.max(0.0).sqrt()).collect();
    Ok((s[0] - s[1] - s[2] - s[3]).clamp(0.0, 1.0))
}

/// Populations and the two X-state coherences in the `|11⟩,|10⟩,|01⟩,|00⟩`
/// basis (1-based names).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixElements {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho44: f64,
    /// `1 − ρ11 − ρ22 − ρ33`; differs from `rho44` only by trace drift.
    pub rho44_from_trace: f64,
    pub rho23: Complex64,
    pub rho14: Complex64,
}

pub fn matrix_elements(rho: &DensityMatrix4) -> MatrixElements {
    let p = |i: usize| rho.get(i, i).re;
    let (rho11, rho22, rho33, rho44) = (p(0), p(1), p(2), p(3));
    MatrixElements {
        rho11,
        rho22,
        rho33,
        rho44,
        rho44_from_trace: 1.0 - rho11 - rho22 - rho33,
        rho23: rho.get(1, 2),
        rho14: rho.get(0, 3),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    #[error("one-excitation clock needs distinct carrier frequencies, got {0} and {0}")]
    Resonant(f64),
    #[error("cycle period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClockMode {
    OneExcitation,
    TwoExcitation,
    Explicit,
}

impl ClockMode {
    pub fn name(&self) -> &'static str {
        match self {
            ClockMode::OneExcitation => "one_excitation",
            ClockMode::TwoExcitation => "two_excitation",
            ClockMode::Explicit => "explicit",
        }
    }
}

/// Converts scaled time into natural cycles `N = τ / τ_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleClock {
    pub tau_s: f64,
    pub mode: ClockMode,
}

impl CycleClock {
    /// `τ_s = 2π / |Ω₂ − Ω₁|`.
    pub fn one_excitation(spec: &ModelSpec) -> Result<Self, ClockError> {
        let (a, b) = (spec.drive1.omega, spec.drive2.omega);
        if a == b {
            return Err(ClockError::Resonant(a));
        }
        Ok(Self {
            tau_s: 2.0 * PI / (b - a).abs(),
            mode: ClockMode::OneExcitation,
        })
    }

    /// `τ_s = 2π / (Ω₁ + Ω₂)`.
    pub fn two_excitation(spec: &ModelSpec) -> Self {
        Self {
            tau_s: 2.0 * PI / (spec.drive1.omega + spec.drive2.omega),
            mode: ClockMode::TwoExcitation,
        }
    }

    pub fn explicit(tau_s: f64) -> Result<Self, ClockError> {
        if !(tau_s.is_finite() && tau_s > 0.0) {
            return Err(ClockError::InvalidPeriod(tau_s));
        }
        Ok(Self {
            tau_s,
            mode: ClockMode::Explicit,
        })
    }

    pub fn resolve(
        mode: ClockMode,
        spec: &ModelSpec,
        explicit_tau_s: Option<f64>,
    ) -> Result<Self, ClockError> {
        match mode {
            ClockMode::OneExcitation => Self::one_excitation(spec),
            ClockMode::TwoExcitation => Ok(Self::two_excitation(spec)),
            ClockMode::Explicit => Self::explicit(explicit_tau_s.unwrap_or(f64::NAN)),
        }
    }

    #[inline]
    pub fn cycles(&self, tau: f64) -> f64 {
        tau / self.tau_s
    }

    #[inline]
    pub fn time_of(&self, cycle: f64) -> f64 {
        cycle * self.tau_s
    }
}

/// Wraps an angle into `(−π, π]`. Values within `1e-9` above `−π` are sent
/// to `π`, so a half-turn never flips sign on round-off.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x.rem_euclid(two_pi);
    if y > PI {
        y -= two_pi;
    }
    if y <= -PI + 1e-9 {
        y = PI;
    }
    y
}

/// Absolute angular distance on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(
        "eigenvector overlap {overlap:.4} below {threshold} on branch {branch} at tau = {tau} \
         (sample {sample}); unresolved eigenvalue crossing, sample more densely"
    )]
    LowOverlap {
        tau: f64,
        sample: usize,
        branch: usize,
        overlap: f64,
        threshold: f64,
    },
    #[error("trajectory is empty or shorter than one cycle")]
    TooShort,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Branches whose initial weights `ε_k(0) ε_k(τ)` fall below this are skipped.
pub const BRANCH_WEIGHT_FLOOR: f64 = 1e-12;
/// Minimum overlap magnitude between successive samples of a tracked branch.
pub const OVERLAP_THRESHOLD: f64 = 0.9;
/// Branches with eigenvalues below this are too noisy to check for continuity.
const TRACKED_EIGENVALUE_FLOOR: f64 = 1e-6;
/// Eigenvalues closer than this count as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

fn inner(a: &ComplexMatrix, ka: usize, b: &ComplexMatrix, kb: usize) -> Complex64 {
    (0..a.dim()).map(|r| a[(r, ka)].conj() * b[(r, kb)]).sum()
}

/// Running evaluation of the kinematic geometric phase
///
/// ```text
/// Φ(τ) = arg Σ_k √(ε_k(0) ε_k(τ)) ⟨Ψ_k(0)|Ψ_k(τ)⟩ exp(−i Σ_j arg⟨Ψ_k(t_j)|Ψ_k(t_{j+1})⟩)
/// ```
///
/// with eigenbranches followed by maximal-overlap matching. The per-step
/// overlap phases discretise the parallel-transport integral; together with
/// the endpoint overlap the result does not depend on eigenvector phases.
#[derive(Debug, Clone)]
pub struct GeometricPhaseAccumulator {
    initial: HermitianEig,
    current: HermitianEig,
    /// `branch_of[k]`: column of `current` that continues initial branch `k`.
    branch_of: Vec<usize>,
    transport: Vec<f64>,
    degenerate_at_start: Vec<usize>,
    samples: usize,
    min_overlap: f64,
}

impl GeometricPhaseAccumulator {
    pub fn new(initial: HermitianEig) -> Self {
        let n = initial.dim();
        let ev = &initial.eigenvalues;
        let degenerate_at_start = (0..n)
            .filter(|&k| (0..n).any(|j| j != k && (ev[j] - ev[k]).abs() < DEGENERACY_TOL))
            .collect();
        Self {
            current: initial.clone(),
            initial,
            branch_of: (0..n).collect(),
            transport: vec![0.0; n],
            degenerate_at_start,
            samples: 1,
            min_overlap: 1.0,
        }
    }

    /// Branches that were degenerate at the reference time. Their eigenvectors
    /// are an arbitrary basis of the degenerate subspace.
    pub fn degenerate_at_start(&self) -> &[usize] {
        &self.degenerate_at_start
    }

    /// Smallest overlap magnitude seen on a checked branch so far.
    pub fn min_overlap(&self) -> f64 {
        self.min_overlap
    }

    /// Matches the eigenbasis of the next sample to the tracked branches and
    /// accumulates the per-step overlap phases.
    pub fn push(&mut self, tau: f64, next: HermitianEig) -> Result<(), GpError> {
        let n = self.initial.dim();
        let mut pairs = Vec::with_capacity(n * n);
        let mut overlaps = vec![Complex64::new(0.0, 0.0); n * n];
        for k in 0..n {
            let col = self.branch_of[k];
            let prev_eval = self.current.eigenvalues[col];
            for j in 0..n {
                let o = inner(&self.current.eigenvectors, col, &next.eigenvectors, j);
                overlaps[k * n + j] = o;
                pairs.push((o.norm(), (prev_eval - next.eigenvalues[j]).abs(), k, j));
            }
        }
        // largest overlap first; near-ties resolved by eigenvalue proximity
        pairs.sort_by(|a, b| {
            if (a.0 - b.0).abs() > 1e-12 {
                b.0.total_cmp(&a.0)
            } else {
                a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3))
            }
        });
        let mut taken_branch = vec![false; n];
        let mut taken_col = vec![false; n];
        let mut assignment = vec![0usize; n];
        for &(_, _, k, j) in &pairs {
            if !taken_branch[k] && !taken_col[j] {
                taken_branch[k] = true;
                taken_col[j] = true;
                assignment[k] = j;
            }
        }

        for k in 0..n {
            let j = assignment[k];
            let o = overlaps[k * n + j];
            let prev_eval = self.current.eigenvalues[self.branch_of[k]];
            let checked = !self.degenerate_at_start.contains(&k)
                && self.initial.eigenvalues[k] > TRACKED_EIGENVALUE_FLOOR
                && prev_eval > TRACKED_EIGENVALUE_FLOOR
                && next.eigenvalues[j] > TRACKED_EIGENVALUE_FLOOR;
            if checked {
                self.min_overlap = self.min_overlap.min(o.norm());
                if o.norm() < OVERLAP_THRESHOLD {
                    return Err(GpError::LowOverlap {
                        tau,
                        sample: self.samples,
                        branch: k,
                        overlap: o.norm(),
                        threshold: OVERLAP_THRESHOLD,
                    });
                }
            }
            self.transport[k] += o.arg();
        }
        self.branch_of = assignment;
        self.current = next;
        self.samples += 1;
        Ok(())
    }

    /// Phase accumulated between the reference sample and the latest one,
    /// in `(−π, π]`.
    pub fn phase(&self) -> f64 {
        let n = self.initial.dim();
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..n {
            let col = self.branch_of[k];
            let weight = self.initial.eigenvalues[k] * self.current.eigenvalues[col];
            if weight < BRANCH_WEIGHT_FLOOR {
                continue;
            }
            let o = inner(&self.initial.eigenvectors, k, &self.current.eigenvectors, col);
            total += o * weight.sqrt() * Complex64::from_polar(1.0, -self.transport[k]);
        }
        wrap_angle(total.arg())
    }
}

/// Geometric phase at one cycle boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpPoint {
    pub cycle: usize,
    pub tau: f64,
    /// Phase accumulated from `τ = 0`, in `(−π, π]`.
    pub phase: f64,
    /// Increment over the last cycle, `wrap(Φ(N) − Φ(N−1))`.
    pub per_cycle: f64,
    /// Unwrapped running sum of the per-cycle increments.
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpSeries {
    pub points: Vec<GpPoint>,
    /// Branches degenerate at `τ = 0` (resolved arbitrarily).
    pub degenerate_branches: Vec<usize>,
    pub min_overlap: f64,
}

/// Evaluates the geometric phase at every complete cycle boundary `N τ_s`
/// covered by the trajectory. Every `eigen_stride`-th sample is diagonalised,
/// together with the sample nearest to each boundary.
pub fn geometric_phase(
    traj: &Trajectory,
    clock: &CycleClock,
    eigen_stride: usize,
) -> Result<GpSeries, GpError> {
    geometric_phase_with(traj, clock, eigen_stride, |_, eig| eig)
}

/// Same as [`geometric_phase`], with a hook applied to every eigendecomposition
/// before it enters the accumulator (used to probe gauge invariance).
pub fn geometric_phase_with<F>(
    traj: &Trajectory,
    clock: &CycleClock,
    eigen_stride: usize,
    mut hook: F,
) -> Result<GpSeries, GpError>
where
    F: FnMut(usize, HermitianEig) -> HermitianEig,
{
    let samples = &traj.samples;
    let first = samples.first().ok_or(GpError::TooShort)?;
    let last_tau = samples.last().map(|s| s.tau).unwrap_or(first.tau);
    let cycles = ((last_tau - first.tau) / clock.tau_s + 1e-9).floor() as usize;
    if cycles == 0 {
        return Err(GpError::TooShort);
    }

    let boundaries: Vec<usize> = (1..=cycles)
        .map(|c| nearest_index(traj, first.tau + clock.time_of(c as f64)))
        .collect();
    let stride = eigen_stride.max(1);
    let mut visit: Vec<usize> = (0..samples.len()).step_by(stride).collect();
    visit.extend(&boundaries);
    visit.sort_unstable();
    visit.dedup();
    let stop = *boundaries.last().unwrap();

    let eig0 = hook(0, hermitian_eig(first.rho.matrix())?);
    let mut acc = GeometricPhaseAccumulator::new(eig0);
    let mut points = Vec::with_capacity(cycles);
    let mut next_boundary = 0;
    let mut prev_phase = 0.0;
    let mut cumulative = 0.0;
    for &i in visit.iter().skip_while(|&&i| i == 0) {
        if i > stop {
            break;
        }
        let eig = hook(i, hermitian_eig(samples[i].rho.matrix())?);
        acc.push(samples[i].tau, eig)?;
        while next_boundary < boundaries.len() && boundaries[next_boundary] == i {
            let phase = acc.phase();
            let per_cycle = wrap_angle(phase - prev_phase);
            cumulative += per_cycle;
            prev_phase = phase;
            next_boundary += 1;
            points.push(GpPoint {
                cycle: next_boundary,
                tau: samples[i].tau,
                phase,
                per_cycle,
                cumulative,
            });
        }
    }
    Ok(GpSeries {
        points,
        degenerate_branches: acc.degenerate_at_start().to_vec(),
        min_overlap: acc.min_overlap(),
    })
}

fn nearest_index(traj: &Trajectory, tau: f64) -> usize {
    let s = &traj.samples;
    let pos = s.partition_point(|x| x.tau < tau);
    if pos == 0 {
        return 0;
    }
    if pos >= s.len() {
        return s.len() - 1;
    }
    if (s[pos].tau - tau).abs() < (tau - s[pos - 1].tau).abs() {
        pos
    } else {
        pos - 1
    }
}
