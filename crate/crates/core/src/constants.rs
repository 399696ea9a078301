//! Embedding constants, the mountain-pass level, and every derived constant of
//! the blowup estimates.
//!
//! The two embedding constants are computed on the discrete space, where they
//! are best constants of Rayleigh-type quotients restricted to a subspace:
//!
//! * `C*_h = max ‖u‖_p / ‖∇u‖₂`, by the normalized fixed-point iteration
//!   `u ← K⁻¹F(u)` whose fixed point is the discrete ground state of
//!   `−Δφ = λ|φ|^{p−2}φ`;
//! * `C**_h = max ∫u²/|x|^s / ‖∇u‖₂² = 1/λ_min(K, M_s)`, by inverse power iteration.
//!
//! Both under-approximate the continuous constants and increase under nested
//! refinement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{discrete_norms, load_and_pnorm, DiscreteNorms, DiscreteOperators, MeshSummary, RadialMesh, StateVector};
use crate::linsolve::{LinsolveError, SpdSolver, SymTridiagonal};
use crate::model::{eval_h, eval_i, eval_j, eval_weighted_energy, h_maximizer, GapKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstantsError {
    #[error("{estimator} did not converge in {iterations} iterations (last relative change {change:e}); mesh too coarse or tolerance too tight")]
    NoConvergence {
        estimator: &'static str,
        iterations: usize,
        change: f64,
    },
    #[error("{quantity} requires {requirement}; got J(u0) = {j0}, d = {d}")]
    OutOfRegime {
        quantity: &'static str,
        requirement: &'static str,
        j0: f64,
        d: f64,
        /// Limiting value at the regime boundary, when one exists.
        boundary_value: Option<f64>,
    },
    #[error("exponent p = {0} outside the estimator range [2, 2n/(n-2))")]
    Exponent(f64),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
}

/// Iteration controls shared by both estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    pub tol_cstar: f64,
    pub tol_cstarstar: f64,
    pub max_iterations: usize,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            tol_cstar: 1e-12,
            tol_cstarstar: 1e-12,
            max_iterations: 100_000,
        }
    }
}

/// Smallest eigenpair of `K x = λ B x`.
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub lambda: f64,
    /// Normalized so that `xᵀBx = 1`, with a positive first entry.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Inverse power iteration for the smallest generalized eigenvalue of the pencil `(a, b)`.
pub fn smallest_generalized_eigen(
    a: &SymTridiagonal,
    b: &SymTridiagonal,
    tol: f64,
    max_iterations: usize,
) -> Result<EigenEstimate, ConstantsError> {
    let solver = SpdSolver::factorize_tridiagonal(a)?;
    let n = a.dim();
    let mut x = vec![1.0; n];
    normalize_in(b, &mut x);
    let mut lambda = a.quad_form(&x);
    let mut change = f64::INFINITY;
    for iteration in 1..=max_iterations {
        let mut y = solver.solve(&b.mul_vec(&x))?;
        normalize_in(b, &mut y);
        let next = a.quad_form(&y);
        change = (next - lambda).abs() / next.abs();
        x = y;
        lambda = next;
        if change < tol {
            if x[0] < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            return Ok(EigenEstimate {
                lambda,
                vector: x,
                iterations: iteration,
            });
        }
    }
    Err(ConstantsError::NoConvergence {
        estimator: "inverse power iteration",
        iterations: max_iterations,
        change,
    })
}

fn normalize_in(b: &SymTridiagonal, x: &mut [f64]) {
    let scale = b.quad_form(x).sqrt();
    x.iter_mut().for_each(|v| *v /= scale);
}

/// Discrete Hardy-type constant with its eigen-solve record.
#[derive(Debug, Clone)]
pub struct CstarstarEstimate {
    pub value: f64,
    pub eigen: EigenEstimate,
}

/// `C**_h = 1/λ_min(K, M_s)`.
pub fn estimate_cstarstar(
    ops: &DiscreteOperators,
    tol: f64,
    max_iterations: usize,
) -> Result<CstarstarEstimate, ConstantsError> {
    let eigen = smallest_generalized_eigen(&ops.stiffness, &ops.weighted_mass, tol, max_iterations)?;
    Ok(CstarstarEstimate {
        value: 1.0 / eigen.lambda,
        eigen,
    })
}

/// Discrete Sobolev constant together with the ground state that attains it.
#[derive(Debug, Clone)]
pub struct CstarEstimate {
    pub value: f64,
    /// Discrete ground state normalized to `‖u_h‖_p = 1`, nonnegative.
    pub extremal: StateVector,
    pub norms: DiscreteNorms,
    pub iterations: usize,
}

/// `C*_h = max ‖u‖_p/‖∇u‖₂` over the discrete space.
///
/// `p` may equal 2, where the iteration reduces to inverse power iteration for
/// `(K, M₀)` and the ratio tends to `λ₁^{−1/2}`.
pub fn estimate_cstar(
    mesh: &RadialMesh,
    ops: &DiscreteOperators,
    p: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<CstarEstimate, ConstantsError> {
    if !(p >= 2.0 && p < mesh.params().critical_exponent()) {
        return Err(ConstantsError::Exponent(p));
    }
    let start = smallest_generalized_eigen(&ops.stiffness, &ops.mass, 1e-10, max_iterations)?;
    let solver = SpdSolver::factorize_tridiagonal(&ops.stiffness)?;

    let mut u = StateVector(start.vector);
    let normalize = |v: &mut StateVector| {
        let (_, pnorm) = load_and_pnorm(mesh, v, p);
        let scale = pnorm.powf(1.0 / p);
        v.iter_mut().for_each(|x| *x /= scale);
    };
    normalize(&mut u);
    let mut ratio = ratio_of(mesh, ops, &u, p);
    let mut change = f64::INFINITY;
    for iteration in 1..=max_iterations {
        let (load, _) = load_and_pnorm(mesh, &u, p);
        let mut next = StateVector(solver.solve(&load)?);
        normalize(&mut next);
        let next_ratio = ratio_of(mesh, ops, &next, p);
        change = (next_ratio - ratio).abs() / next_ratio;
        u = next;
        ratio = next_ratio;
        if change < tol {
            let norms = discrete_norms(mesh, ops, &u, p);
            return Ok(CstarEstimate {
                value: norms.norm_p / norms.norm_grad,
                extremal: u,
                norms,
                iterations: iteration,
            });
        }
    }
    Err(ConstantsError::NoConvergence {
        estimator: "ground-state fixed-point iteration",
        iterations: max_iterations,
        change,
    })
}

fn ratio_of(mesh: &RadialMesh, ops: &DiscreteOperators, u: &StateVector, p: f64) -> f64 {
    let norms = discrete_norms(mesh, ops, u, p);
    norms.norm_p / norms.norm_grad
}

/// `d = ((p−2)/2p)·C*^{−2p/(p−2)}`.
pub fn mountain_pass_d(cstar: f64, p: f64) -> f64 {
    (p - 2.0) / (2.0 * p) * cstar.powf(-2.0 * p / (p - 2.0))
}

/// Root of `h(θ) = J₀` on the decreasing branch `θ > θ₁`.
///
/// At `J₀ = d` the bracket degenerates; the error then carries `θ₁` as its
/// boundary value.
pub fn solve_theta2(j0: f64, cstar: f64, p: f64) -> Result<f64, ConstantsError> {
    let d = mountain_pass_d(cstar, p);
    let theta1 = h_maximizer(cstar, p);
    if !(j0 >= 0.0 && j0 < d) {
        return Err(ConstantsError::OutOfRegime {
            quantity: "theta2",
            requirement: "0 <= J(u0) < d",
            j0,
            d,
            boundary_value: (j0 == d).then_some(theta1),
        });
    }
    let mut lo = theta1;
    let mut hi = 2.0 * theta1;
    while eval_h(hi, cstar, p) >= j0 {
        lo = hi;
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval_h(mid, cstar, p) >= j0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `θ₀ = (p/2 − p·C*^{2p/(p−2)}·J₀)^{1/(p−2)}`.
pub fn compute_theta0(j0: f64, cstar: f64, p: f64) -> Result<f64, ConstantsError> {
    let d = mountain_pass_d(cstar, p);
    let value = (p / 2.0 - p * cstar.powf(2.0 * p / (p - 2.0)) * j0).powf(1.0 / (p - 2.0));
    if !(j0 >= 0.0 && j0 < d) {
        return Err(ConstantsError::OutOfRegime {
            quantity: "theta0",
            requirement: "0 <= J(u0) < d",
            j0,
            d,
            boundary_value: (j0 == d).then_some(value),
        });
    }
    Ok(value)
}

/// Which branch of the piecewise constants applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyBranch {
    /// `J(u₀) < 0`.
    Negative,
    /// `0 ≤ J(u₀) < d`.
    BelowMountainPass,
}

fn branch_for(quantity: &'static str, j0: f64, d: f64) -> Result<EnergyBranch, ConstantsError> {
    if j0 < 0.0 {
        Ok(EnergyBranch::Negative)
    } else if j0 < d {
        Ok(EnergyBranch::BelowMountainPass)
    } else {
        Err(ConstantsError::OutOfRegime {
            quantity,
            requirement: "J(u0) < d",
            j0,
            d,
            boundary_value: None,
        })
    }
}

fn require_theta0(quantity: &'static str, theta0: Option<f64>, j0: f64, d: f64) -> Result<f64, ConstantsError> {
    theta0.ok_or(ConstantsError::OutOfRegime {
        quantity,
        requirement: "theta0 when 0 <= J(u0) < d",
        j0,
        d,
        boundary_value: None,
    })
}

/// `C₁ = p` if `J₀ < 0`, else `(θ₀^p − 1)(p − 2)/θ₀^p + 2`.
pub fn compute_c1(j0: f64, d: f64, theta0: Option<f64>, p: f64) -> Result<(f64, EnergyBranch), ConstantsError> {
    let branch = branch_for("C1", j0, d)?;
    let value = match branch {
        EnergyBranch::Negative => p,
        EnergyBranch::BelowMountainPass => {
            let t = require_theta0("C1", theta0, j0, d)?.powf(p);
            (t - 1.0) * (p - 2.0) / t + 2.0
        }
    };
    Ok((value, branch))
}

/// `C₂ = (p−2)/(C** + 1)` if `J₀ < 0`, else `(p−2)(θ₀² − 1)/(θ₀²(C** + 1))`.
pub fn compute_c2(
    j0: f64,
    d: f64,
    theta0: Option<f64>,
    cstarstar: f64,
    p: f64,
) -> Result<(f64, EnergyBranch), ConstantsError> {
    let branch = branch_for("C2", j0, d)?;
    let value = match branch {
        EnergyBranch::Negative => (p - 2.0) / (cstarstar + 1.0),
        EnergyBranch::BelowMountainPass => {
            let t2 = require_theta0("C2", theta0, j0, d)?.powi(2);
            (p - 2.0) * (t2 - 1.0) / (t2 * (cstarstar + 1.0))
        }
    };
    Ok((value, branch))
}

/// Initial-data classification against the blowup hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `J(u₀) < 0`.
    NegativeEnergy,
    /// `0 ≤ J(u₀) < d` and `I(u₀) < 0`.
    Subcritical,
    NotBlowupCertified,
}

impl Regime {
    pub fn is_certified(self) -> bool {
        !matches!(self, Regime::NotBlowupCertified)
    }
}

/// Both discrete embedding constants for one discretization.
#[derive(Debug, Clone)]
pub struct DiscreteConstants {
    pub cstar: CstarEstimate,
    pub cstarstar: CstarstarEstimate,
    pub settings: EstimatorSettings,
    pub mesh: MeshSummary,
}

impl DiscreteConstants {
    pub fn estimate(
        mesh: &RadialMesh,
        ops: &DiscreteOperators,
        settings: EstimatorSettings,
    ) -> Result<Self, ConstantsError> {
        let p = mesh.params().p;
        Ok(Self {
            cstar: estimate_cstar(mesh, ops, p, settings.tol_cstar, settings.max_iterations)?,
            cstarstar: estimate_cstarstar(ops, settings.tol_cstarstar, settings.max_iterations)?,
            settings,
            mesh: mesh.describe(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorProvenance {
    pub estimator: String,
    pub mesh: MeshSummary,
    pub tolerance: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(rename = "Cstar")]
    pub cstar: EstimatorProvenance,
    #[serde(rename = "Cstarstar")]
    pub cstarstar: EstimatorProvenance,
    pub nehari_margin: f64,
    pub note: String,
}

pub const DISCRETE_CONSTANT_NOTE: &str = "Cstar and Cstarstar are best constants over the finite-element subspace and under-approximate the continuous constants; d, theta1 and the lower blowup-time bound computed from them are therefore slightly larger than their continuous counterparts.";

/// Every constant of the blowup estimates for one initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub n: u32,
    pub s: f64,
    pub p: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "Cstar")]
    pub cstar: f64,
    #[serde(rename = "Cstarstar")]
    pub cstarstar: f64,
    pub d: f64,
    pub theta1: f64,
    pub theta2: Option<f64>,
    pub theta0: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    pub branch: Option<EnergyBranch>,
    #[serde(rename = "G0")]
    pub g0: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    pub initial_norms: DiscreteNorms,
    pub regime: Regime,
    pub provenance: Provenance,
}

impl ConstantsReport {
    pub fn gap_kind(&self) -> GapKind {
        GapKind::for_initial_energy(self.j0)
    }

    /// Fills every constant for `u0` from precomputed discrete constants.
    ///
    /// `nehari_margin` demands `I(u₀) < −margin` for certification.
    pub fn from_estimates(
        mesh: &RadialMesh,
        ops: &DiscreteOperators,
        u0: &StateVector,
        constants: &DiscreteConstants,
        nehari_margin: f64,
    ) -> Result<Self, ConstantsError> {
        let params = *mesh.params();
        let p = params.p;
        let cstar = constants.cstar.value;
        let cstarstar = constants.cstarstar.value;
        let d = mountain_pass_d(cstar, p);
        let theta1 = h_maximizer(cstar, p);

        let norms = discrete_norms(mesh, ops, u0, p);
        let j0 = eval_j(norms.norm_grad, norms.norm_p, p);
        let i0 = eval_i(norms.norm_grad, norms.norm_p, p);
        let h0 = eval_weighted_energy(norms.weighted_l2, norms.norm_grad);
        let g0 = GapKind::for_initial_energy(j0).eval(j0, d);

        let regime = if i0 < -nehari_margin && j0 < 0.0 {
            Regime::NegativeEnergy
        } else if i0 < -nehari_margin && j0 >= 0.0 && j0 < d {
            Regime::Subcritical
        } else {
            Regime::NotBlowupCertified
        };

        let (theta2, theta0) = if regime == Regime::Subcritical {
            (Some(solve_theta2(j0, cstar, p)?), Some(compute_theta0(j0, cstar, p)?))
        } else {
            (None, None)
        };
        let (c1, c2, branch) = if regime.is_certified() {
            let (c1, branch) = compute_c1(j0, d, theta0, p)?;
            let (c2, _) = compute_c2(j0, d, theta0, cstarstar, p)?;
            (Some(c1), Some(c2), Some(branch))
        } else {
            (None, None, None)
        };

        let settings = constants.settings;
        Ok(Self {
            n: params.n,
            s: params.s,
            p,
            radius: params.radius,
            cstar,
            cstarstar,
            d,
            theta1,
            theta2,
            theta0,
            c1,
            c2,
            branch,
            g0,
            h0,
            j0,
            i0,
            initial_norms: norms,
            regime,
            provenance: Provenance {
                cstar: EstimatorProvenance {
                    estimator: "normalized ground-state fixed-point iteration u <- K^-1 F(u)".into(),
                    mesh: constants.mesh,
                    tolerance: settings.tol_cstar,
                    iterations: constants.cstar.iterations,
                },
                cstarstar: EstimatorProvenance {
                    estimator: "inverse power iteration on (K, M_s)".into(),
                    mesh: constants.mesh,
                    tolerance: settings.tol_cstarstar,
                    iterations: constants.cstarstar.eigen.iterations,
                },
                nehari_margin,
                note: DISCRETE_CONSTANT_NOTE.into(),
            },
        })
    }
}

/// Estimates both embedding constants and builds the report for `u0`.
pub fn build_constants_report(
    mesh: &RadialMesh,
    ops: &DiscreteOperators,
    u0: &StateVector,
    settings: EstimatorSettings,
) -> Result<ConstantsReport, ConstantsError> {
    let constants = DiscreteConstants::estimate(mesh, ops, settings)?;
    ConstantsReport::from_estimates(mesh, ops, u0, &constants, 0.0)
}
