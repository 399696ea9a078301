//! Radial P1 finite elements on the ball `B_R(0) ⊂ ℝⁿ`.
//!
//! Radial functions reduce every integral over the ball to `ω_{n−1}∫₀^R (·) r^{n−1} dr`.
//! The mesh carries nodes `0 = r₀ < … < r_M = R`; the unknowns are the nodal values on
//! `r₀ … r_{M−1}` (the boundary node is eliminated by the Dirichlet condition, the
//! origin is free). The sphere-area factor is kept so all norms are the literal
//! n-dimensional integrals.

mod assembly;
mod mesh;
mod quadrature;

pub use assembly::{
    assemble_nonlinear_load, assemble_stiffness, assemble_weighted_mass, discrete_norms,
    DiscreteNorms, DiscreteOperators, StateVector,
};
pub use mesh::{build_mesh, MeshError, MeshSummary, RadialMesh, DEFAULT_GRADING, DEFAULT_QUAD_ORDER};
pub use quadrature::{unit_sphere_area, GaussLegendre};
pub(crate) use assembly::load_and_pnorm;
