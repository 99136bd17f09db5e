//! Galerkin finite-element solver and verifier for quasilinear Dirichlet
//! systems driven by competing (p,q)-Laplacians with convection terms.

pub mod cli;
pub mod config;
pub mod eigen;
pub mod error;
pub mod expr;
pub mod femspace;
pub mod galerkin;
pub mod hypotheses;
pub mod linalg;
pub mod mesh;
pub mod newton;
pub mod operators;
pub mod quadrature;
pub mod reactions;

pub use error::{Error, Result};
pub use femspace::{FemFunction, P1Space};
pub use galerkin::{LevelSolution, SolveOptions, SolveReport};
pub use mesh::{generate_unit_square, refine_uniform, Mesh, RefinementHierarchy};
pub use operators::{PairState, ProblemSpec, ResidualPair};
pub use quadrature::QuadratureRule;
pub use reactions::{Reaction, ReactionHandle};
