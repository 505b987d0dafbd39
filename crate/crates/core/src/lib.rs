//! Bore design for axisymmetric horns as an optimal-control problem.
//!
//! The Webster horn equation is treated as a controlled system in the axial
//! coordinate: the diameter derivative `D'` is the control and each harmonic
//! component of the velocity potential contributes a pair of states. The
//! crate maximizes the modal energy of a prescribed harmonic regime under
//! bounds on `D'`, using an adjoint gradient and a projected BFGS ascent, and
//! checks the resulting bores with an independent Sturm-Liouville solver.
//!
//! * [`model`]: domain types and pointwise functions (state and costate
//!   right-hand sides, Hamiltonian, switching function, energy density).
//! * [`integrate`]: grids, predictor-corrector sweeps, quadrature.
//! * [`optimize`]: objective, gradient, projection and the solver loop.
//! * [`spectral`]: eigenmodes of a given bore and analytic fixtures.
//! * [`cli`]: configuration files, run orchestration and artifact output.

pub mod cli;
pub mod error;
pub mod integrate;
pub mod model;
pub mod optimize;
pub mod spectral;

pub use error::{Error, Result};
pub use integrate::{Grid, Trajectory};
pub use model::{
    Coefficients, ControlBounds, CostateVector, HarmonicSpec, PhysicalParams, StateVector,
};
pub use optimize::{DecisionVector, DesignResult, ObjectiveReport, OptConfig, Problem};
pub use spectral::{BoreProfile, EigenPair};
