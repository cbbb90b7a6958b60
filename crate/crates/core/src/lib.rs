//! Two driven qubits in a common zero-temperature Lorentzian bath, propagated
//! with the hierarchical equations of motion.
//!
//! Modules, bottom up:
//!
//! * [`algebra`]: dense complex matrices, Hermitian eigensolver, PSD square root.
//! * [`model`]: Hamiltonian, coupling operators, bath and initial states.
//! * [`heom`]: the hierarchy and its fixed-step RK4 integrator.
//! * [`observables`]: purity, concurrence, matrix elements, geometric phase.
//! * [`oracle`]: closed-system and pseudomode propagators used as cross-checks.
//! * [`sweep`]: parallel parameter grids.

pub mod algebra;
pub mod heom;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod sweep;

pub use algebra::{ComplexMatrix, HermitianEig};
pub use num_complex::Complex64;
pub use heom::{HierarchySpace, HierarchyState, Sample, Trajectory};
pub use model::{BellKind, Coupling, DensityMatrix4, DrivingProtocol, InitialState, ModelSpec};
