//! Semiclassical wavepacket propagation on `L²(ℝ)` with a small semiclassical
//! parameter `ε`.
//!
//! The library assembles three propagators from classical trajectory data
//! (the Herman-Kluk phase-space integral operator, its frozen-Gaussian
//! simplification and the single-trajectory thawed-Gaussian approximation)
//! together with a split-step spectral solver that serves as the reference
//! for every error measurement.
//!
//! Module layout follows the data flow:
//!
//! * [`complex_matrix`]: complex symmetric matrices with positive definite
//!   real part, their square roots, and branch-continuous scalar roots.
//! * [`hamiltonian`]: built-in potentials with analytic derivatives.
//! * [`flow`]: Hamiltonian trajectories with co-integrated Jacobian and action.
//! * [`hk_symbol`]: the `𝒵` matrix and the Herman-Kluk prefactor.
//! * [`fio_apply`]: coherent-state analysis/synthesis and the propagators.
//! * [`reference_solver`]: split-step Fourier reference propagation.
//! * [`driver`]: experiment configs, error tables and CSV output.

pub mod complex_matrix;
pub mod driver;
pub mod error;
pub mod fft;
pub mod fio_apply;
pub mod flow;
pub mod hamiltonian;
pub mod hk_symbol;
pub mod reference_solver;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

// Public API types (DVector, DMatrix) come from nalgebra; re-export it so
// downstream crates don't need a version-matched direct dependency.
pub use nalgebra;

pub use error::{HkError, Result};
