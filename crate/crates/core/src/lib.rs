//! Lindblad models of light depolarization.
//!
//! The crate builds truncated two-polarization Fock spaces, the Schwinger
//! (Stokes) operators on them, and four field-level master equations
//! (damping, pure dephasing, depolarizing, multimode depolarizing). States
//! are propagated with fixed-step RK4 or by exponentiating the Liouvillian,
//! and checked against closed-form solutions in [`oracles`]. The [`bath`]
//! module simulates the microscopic picture behind the depolarizing
//! equation: a field mode dispersively coupled to hot two-level atoms with
//! random coupling phases.

pub mod bath;
pub mod density;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod lindblad;
pub mod observables;
pub mod oracles;
pub mod polarization;
pub mod propagator;
pub mod scenario;

pub use density::DensityMatrix;
pub use error::{Error, Result};
pub use fock::{FockBasis, OperatorMatrix, Polarization};
pub use lindblad::{ModelKind, ModelSpec};
pub use polarization::{build_polarization_ops, PolarizationOperators};
pub use propagator::{evolve_exact, evolve_rk4, TimeGrid, Trajectory};
