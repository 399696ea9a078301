//! Numerical laboratory for finite-time blowup of the pseudo-parabolic equation
//! with singular potential
//!
//! ```text
//! u_t/|x|^s − Δu − Δu_t = |u|^{p−2}u   in B_R(0) ⊂ ℝⁿ,   u = 0 on ∂B_R,
//! ```
//!
//! discretized with radial P1 finite elements. The crate estimates the embedding
//! constants and every derived constant of the blowup estimates, integrates
//! trajectories to blowup, and checks them against the energy identities,
//! blowup-time bounds, rate envelopes and the exponential growth floor.

pub mod bounds;
pub mod constants;
pub mod dynamics;
pub mod fem;
pub mod harness;
pub mod linsolve;
pub mod model;
pub mod verify;
