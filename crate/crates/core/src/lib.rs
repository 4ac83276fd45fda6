//! Fully discrete solvers for semi-linear parabolic SPDEs on the unit
//! interval/square.
//!
//! Space is discretized with a symmetric interior penalty dG method on
//! piecewise-linear elements, time with a Douglas–Rachford splitting whose
//! two operators come from an overlapping partition of unity (a
//! non-iterative domain decomposition). Noise is a truncated Q-Wiener
//! process entering multiplicatively.
//!
//! All numerical types are generic over a [`Scalar`]; the `*64` aliases
//! below fix the common `f64` instantiation.

pub mod analysis;
pub mod dg_space;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod operators;
pub mod presets;
pub mod quadrature;
pub mod scalar;
pub mod schemes;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh64 = mesh::CartesianMesh<f64>;
pub type DgSpace64 = dg_space::DgSpace<f64>;
pub type DgFunction64 = dg_space::DgFunction<f64>;
pub type SparseOperator64 = operators::SparseOperator<f64>;
pub type ShiftedSolver64 = linalg::ShiftedSolver<f64>;
pub type QWienerSpec64 = noise::QWienerSpec<f64>;
pub type QWienerPath64 = noise::QWienerPath<f64>;
pub type ProblemInstance64 = schemes::ProblemInstance<f64>;
pub type ExperimentPreset64 = presets::ExperimentPreset<f64>;
