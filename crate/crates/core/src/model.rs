//! System and bath description: driven two-qubit Hamiltonian, coupling
//! operator, Lorentzian bath and initial states.
//!
//! All quantities are dimensionless, measured in units of the Lorentzian
//! width λ (times are `τ = λ t`, frequencies `x = x̄ / λ`), so the bath
//! correlation time is 1.
//!
//! The two-qubit basis is `|11⟩, |10⟩, |01⟩, |00⟩` (indices 0..4), qubit 1 is
//! the slow tensor index and `σ_z = diag(+1, -1)` in `(|1⟩, |0⟩)` order.
//!
//! Note on the singlet-like state `|Φ−⟩ = (|01⟩ − |10⟩)/√2`: with the
//! Hamiltonian below it is an eigenstate of `H_S` with eigenvalue `ω − J/2`
//! at resonance (`ω₁ = ω₂ = ω`). Some write-ups quote `(ω − J)/√2`; the
//! Hamiltonian is implemented as written and not adjusted to that value.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::algebra::{hermitian_eig, kron, pauli, ComplexMatrix, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("initial state is not a density matrix: trace {trace:e}, eigenvalues {eigenvalues:?}")]
    NotDensityMatrix { trace: f64, eigenvalues: Vec<f64> },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Periodic modulation of a qubit frequency,
/// `ω(τ) = Ω + Δ cos(ω_D τ + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingProtocol {
    pub omega: f64,
    pub delta: f64,
    pub omega_d: f64,
    pub phi: f64,
}

impl DrivingProtocol {
    pub fn undriven(omega: f64) -> Self {
        Self {
            omega,
            delta: 0.0,
            omega_d: 0.0,
            phi: 0.0,
        }
    }

    #[inline]
    pub fn frequency(&self, tau: f64) -> f64 {
        self.omega + self.delta * (self.omega_d * tau + self.phi).cos()
    }

    /// Upper bound of `|ω(τ)|` over all times.
    pub fn max_frequency(&self) -> f64 {
        self.omega.abs() + self.delta.abs()
    }

    fn validate(&self, which: &'static str) -> Result<(), ModelError> {
        let finite = [self.omega, self.delta, self.omega_d, self.phi]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(invalid(which, "non-finite driving parameter"));
        }
        if self.omega <= 0.0 {
            return Err(invalid(which, format!("Omega must be > 0, got {}", self.omega)));
        }
        if self.delta < 0.0 {
            return Err(invalid(which, format!("Delta must be >= 0, got {}", self.delta)));
        }
        if self.omega_d < 0.0 {
            return Err(invalid(which, format!("omegaD must be >= 0, got {}", self.omega_d)));
        }
        Ok(())
    }
}

/// Lorentzian bath as configured: coupling ratio `R = γ₀/λ` and an optional
/// peak position (defaults to the mean of the two qubit frequencies at τ = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub r: f64,
    pub omega0: Option<f64>,
}

/// Bath with its peak position resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bath {
    pub r: f64,
    pub omega0: f64,
}

impl Bath {
    /// `J(ω) = (R / 2π) / ((ω − Ω₀)² + 1)`.
    pub fn spectral_density(&self, w: f64) -> f64 {
        let d = w - self.omega0;
        self.r / (2.0 * PI) / (d * d + 1.0)
    }

    /// Zero-temperature correlation `C(τ) = (R/2) exp(−(1 + iΩ₀) τ)`.
    pub fn correlation(&self, dt: f64) -> Complex64 {
        debug_assert!(dt >= 0.0);
        let decay = Complex64::new(1.0, self.omega0);
        (-decay * dt).exp() * (0.5 * self.r)
    }

    /// `C(0)`.
    pub fn amplitude(&self) -> f64 {
        0.5 * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    /// `V = σ_x ⊗ 1 + 1 ⊗ σ_x`
    Dipolar,
    /// `V_z = σ_z ⊗ 1 + 1 ⊗ σ_z`
    Dephasing,
}

impl Coupling {
    pub fn name(&self) -> &'static str {
        match self {
            Coupling::Dipolar => "dipolar",
            Coupling::Dephasing => "dephasing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub drive1: DrivingProtocol,
    pub drive2: DrivingProtocol,
    /// Transverse (flip-flop) coupling between the qubits.
    pub j: f64,
    pub bath: BathSpec,
    pub coupling: Coupling,
}

impl ModelSpec {
    /// Undriven qubits at frequencies `omega1`, `omega2` with dipolar coupling.
    pub fn undriven(omega1: f64, omega2: f64, r: f64) -> Self {
        Self {
            drive1: DrivingProtocol::undriven(omega1),
            drive2: DrivingProtocol::undriven(omega2),
            j: 0.0,
            bath: BathSpec { r, omega0: None },
            coupling: Coupling::Dipolar,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.drive1.validate("drive1")?;
        self.drive2.validate("drive2")?;
        if !self.j.is_finite() {
            return Err(invalid("J", "non-finite"));
        }
        if !(self.bath.r.is_finite() && self.bath.r >= 0.0) {
            return Err(invalid("bath.R", format!("must be >= 0, got {}", self.bath.r)));
        }
        if let Some(w0) = self.bath.omega0 {
            if !w0.is_finite() {
                return Err(invalid("bath.omega0", "non-finite"));
            }
        }
        Ok(())
    }

    pub fn bath(&self) -> Bath {
        Bath {
            r: self.bath.r,
            omega0: self.bath.omega0.unwrap_or_else(|| {
                0.5 * (self.drive1.frequency(0.0) + self.drive2.frequency(0.0))
            }),
        }
    }

    /// `(ω₁(τ), ω₂(τ))`.
    #[inline]
    pub fn frequencies(&self, tau: f64) -> (f64, f64) {
        (self.drive1.frequency(tau), self.drive2.frequency(tau))
    }

    /// System Hamiltonian at scaled time `tau`.
    pub fn hamiltonian_at(&self, tau: f64) -> ComplexMatrix {
        let (w1, w2) = self.frequencies(tau);
        let mut h = ComplexMatrix::from_diag(&[w1 + w2, w1, w2, 0.0]);
        h[(1, 2)] = Complex64::new(0.5 * self.j, 0.0);
        h[(2, 1)] = Complex64::new(0.5 * self.j, 0.0);
        h
    }

    /// Bound on the spread of `H_S` eigenvalues over all times.
    pub fn max_energy_spread(&self) -> f64 {
        self.drive1.max_frequency() + self.drive2.max_frequency() + self.j.abs()
    }

    pub fn coupling_operator(&self) -> ComplexMatrix {
        coupling_operator(self.coupling)
    }
}

pub fn coupling_operator(kind: Coupling) -> ComplexMatrix {
    let single = match kind {
        Coupling::Dipolar => pauli::sigma_x(),
        Coupling::Dephasing => pauli::sigma_z(),
    };
    let id = pauli::identity2();
    &kron(&single, &id) + &kron(&id, &single)
}

/// Bell-like states with entanglement weight `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellKind {
    /// `√(1−p)|01⟩ + √p|10⟩`
    PhiPlus,
    /// `√(1−p)|01⟩ − √p|10⟩`
    PhiMinus,
    /// `√(1−p)|00⟩ + √p|11⟩`
    PsiPlus,
    /// `√(1−p)|00⟩ − √p|11⟩`
    PsiMinus,
}

impl BellKind {
    pub fn name(&self) -> &'static str {
        match self {
            BellKind::PhiPlus => "phi_plus",
            BellKind::PhiMinus => "phi_minus",
            BellKind::PsiPlus => "psi_plus",
            BellKind::PsiMinus => "psi_minus",
        }
    }

    pub fn ket(&self, p: f64) -> [Complex64; 4] {
        let a = Complex64::new((1.0 - p).sqrt(), 0.0);
        let b = Complex64::new(p.sqrt(), 0.0);
        match self {
            BellKind::PhiPlus => [ZERO, b, a, ZERO],
            BellKind::PhiMinus => [ZERO, -b, a, ZERO],
            BellKind::PsiPlus => [b, ZERO, ZERO, a],
            BellKind::PsiMinus => [-b, ZERO, ZERO, a],
        }
    }

    /// Number of excitations carried by the state (1 for Φ±, 0/2 for Ψ±).
    pub fn is_one_excitation(&self) -> bool {
        matches!(self, BellKind::PhiPlus | BellKind::PhiMinus)
    }
}

/// Free entries of an X-shaped density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XStateEntries {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho44: f64,
    pub rho23: Complex64,
    pub rho14: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Bell { kind: BellKind, p: f64 },
    /// `(1−r)/4 · 1 + r |φ⟩⟨φ|` with `|φ⟩` a Bell-like state.
    Werner { core: BellKind, p: f64, r: f64 },
    XState(XStateEntries),
}

/// Tolerance for density-matrix validity checks.
pub const DENSITY_TOL: f64 = 1e-12;

/// Two-qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix4(ComplexMatrix);

impl DensityMatrix4 {
    /// Validates trace, Hermiticity and positivity within `tol`.
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self, ModelError> {
        let trace = m.trace().re;
        let herm = m.hermiticity_error();
        let eig = hermitian_eig(&m.hermitian_part()).map_err(|_| ModelError::NotDensityMatrix {
            trace,
            eigenvalues: vec![],
        })?;
        if m.dim() != 4
            || herm > tol
            || (trace - 1.0).abs() > tol
            || eig.eigenvalues[0] < -tol
        {
            return Err(ModelError::NotDensityMatrix {
                trace,
                eigenvalues: eig.eigenvalues,
            });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix produced by a propagator without checking it.
    pub fn from_matrix_unchecked(m: ComplexMatrix) -> Self {
        debug_assert_eq!(m.dim(), 4);
        Self(m)
    }

    pub fn pure(ket: &[Complex64; 4]) -> Self {
        Self(ComplexMatrix::outer(ket, ket))
    }

    pub fn maximally_mixed() -> Self {
        Self(ComplexMatrix::identity(4).scale_real(0.25))
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.0[(r, c)]
    }
}

impl InitialState {
    pub fn bell(kind: BellKind) -> Self {
        InitialState::Bell { kind, p: 0.5 }
    }

    /// True when the state lives in the one-excitation sector.
    pub fn is_one_excitation(&self) -> bool {
        match self {
            InitialState::Bell { kind, .. } => kind.is_one_excitation(),
            InitialState::Werner { .. } => false,
            InitialState::XState(x) => x.rho11 == 0.0 && x.rho44 == 0.0 && x.rho14 == ZERO,
        }
    }

    pub fn build(&self) -> Result<DensityMatrix4, ModelError> {
        let unit = |name: &'static str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(invalid(name, format!("must lie in [0, 1], got {x}")))
            }
        };
        match *self {
            InitialState::Bell { kind, p } => {
                unit("p", p)?;
                Ok(DensityMatrix4::pure(&kind.ket(p)))
            }
            InitialState::Werner { core, p, r } => {
                unit("p", p)?;
                unit("r", r)?;
                let ket = core.ket(p);
                let proj = ComplexMatrix::outer(&ket, &ket);
                let mixed = ComplexMatrix::identity(4).scale_real(0.25 * (1.0 - r));
                Ok(DensityMatrix4(&mixed + &proj.scale_real(r)))
            }
            InitialState::XState(x) => {
                let mut m = ComplexMatrix::from_diag(&[x.rho11, x.rho22, x.rho33, x.rho44]);
                m[(1, 2)] = x.rho23;
                m[(2, 1)] = x.rho23.conj();
                m[(0, 3)] = x.rho14;
                m[(3, 0)] = x.rho14.conj();
                DensityMatrix4::new(m, DENSITY_TOL)
            }
        }
    }
}

/// Convenience wrapper matching [`InitialState::build`].
pub fn initial_state(init: &InitialState) -> Result<DensityMatrix4, ModelError> {
    init.build()
}
