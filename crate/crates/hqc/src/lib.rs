//! Lattice statics and discrete homogenization for periodic atomistic chains
//! and 2D lattices.
//!
//! The crate computes equilibria of periodic atomistic models with pair
//! interactions, solves the associated discrete unit-cell (corrector)
//! problems, and implements a homogenized quasicontinuum (HQC) coarse-graining
//! method whose internal forces are sampled from local periodic
//! microproblems. An experiment harness reproduces the convergence behaviour
//! of the method on linear and nonlinear chains and on 2D lattices.
//!
//! # Layout
//!
//! * [`grid`]: periodic lattice functions, discrete calculus, norms.
//! * [`solver`]: direct cyclic banded and iterative solvers for the singular
//!   periodic systems.
//! * [`model`]: pair potentials, atomistic energies, Newton equilibrium
//!   solves, linearization.
//! * [`cell`]: unit-cell corrector problems, homogenized coefficients and
//!   fluxes, two-scale correctors.
//! * [`hqc`]: macroscopic meshes, sampling domains, the HQC solver and its
//!   reconstruction, and reference coarse-grained solvers.
//! * [`lattice2d`]: the 2D vector-valued counterpart of the above.
//! * [`experiments`]: configuration, experiment drivers, error reports and
//!   CSV output used by the `hqc` binary.
//!
//! The numerical core is generic over the scalar type through
//! [`scalar::Scalar`]; the aliases below fix `f64`, which is what the
//! experiment drivers and the CLI use.

pub mod cell;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod hqc;
pub mod lattice2d;
pub mod model;
pub mod scalar;
pub mod solver;

pub use error::{HqcError, Result};
pub use scalar::Scalar;

/// `f64` periodic 1D grid.
pub type Grid1 = grid::PeriodicGrid1D<f64>;
/// `f64` periodic lattice function.
pub type Fn1 = grid::LatticeFn1D<f64>;
/// `f64` zero-mean periodic lattice function.
pub type ZeroMeanFn1 = grid::ZeroMeanFn1D<f64>;
/// `f64` two-scale table.
pub type TwoScale = grid::TwoScaleFn<f64>;
/// `f64` atomistic chain model.
pub type Model1 = model::AtomisticModel<f64>;
/// `f64` macroscopic mesh.
pub type Mesh1 = hqc::MacroMesh<f64>;
/// `f64` 2D grid.
pub type Grid2 = lattice2d::Grid2D<f64>;
/// `f64` 2D vector field.
pub type VectorFn2 = lattice2d::VectorFn2D<f64>;
