//! Closed-form blowup-time bounds, rate envelopes and the growth floor.
//!
//! All envelopes bound the quantity `2H(t) = ∫u²/|x|^s + ‖∇u‖₂²`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::ConstantsReport;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("{0} requires C1 > 2 and G(0) > 0")]
    Degenerate(&'static str),
    #[error("{0} is only defined for t < T")]
    PastBlowup(&'static str),
}

/// `T ≤ 2H(0)/(C₁(C₁−2)G(0))`.
pub fn upper_time_bound(h0: f64, g0: f64, c1: f64) -> Result<f64, BoundsError> {
    if !(c1 > 2.0 && g0 > 0.0) {
        return Err(BoundsError::Degenerate("upper blowup-time bound"));
    }
    Ok(2.0 * h0 / (c1 * (c1 - 2.0) * g0))
}

/// `T ≥ (2H(0))^{(2−p)/2}/(C*^p(p−2))`.
pub fn lower_time_bound(h0: f64, cstar: f64, p: f64) -> f64 {
    (2.0 * h0).powf((2.0 - p) / 2.0) / (cstar.powf(p) * (p - 2.0))
}

/// Coefficient `A` of the upper rate envelope `2H(t) ≤ A·(T−t)^{−2/(C₁−2)}`,
/// `A = [C₁(C₁−2)G(0)/(2H(0))^{C₁/2}]^{2/(2−C₁)}`.
///
/// At `t = 0` with `T` equal to [`upper_time_bound`] the envelope equals `2H(0)`.
pub fn upper_rate_coefficient(h0: f64, g0: f64, c1: f64) -> Result<f64, BoundsError> {
    if !(c1 > 2.0 && g0 > 0.0) {
        return Err(BoundsError::Degenerate("upper rate envelope"));
    }
    Ok((c1 * (c1 - 2.0) * g0 / (2.0 * h0).powf(c1 / 2.0)).powf(2.0 / (2.0 - c1)))
}

pub fn upper_rate_envelope(t: f64, blowup_time: f64, h0: f64, g0: f64, c1: f64) -> Result<f64, BoundsError> {
    if t >= blowup_time {
        return Err(BoundsError::PastBlowup("upper rate envelope"));
    }
    Ok(upper_rate_coefficient(h0, g0, c1)? * (blowup_time - t).powf(-2.0 / (c1 - 2.0)))
}

/// Coefficient `B = C*^{−2p/(p−2)}(p−2)^{−2/(p−2)}` of `2H(t) ≥ B·(T−t)^{−2/(p−2)}`.
pub fn lower_rate_coefficient(cstar: f64, p: f64) -> f64 {
    cstar.powf(-2.0 * p / (p - 2.0)) * (p - 2.0).powf(-2.0 / (p - 2.0))
}

pub fn lower_rate_envelope(t: f64, blowup_time: f64, cstar: f64, p: f64) -> Result<f64, BoundsError> {
    if t >= blowup_time {
        return Err(BoundsError::PastBlowup("lower rate envelope"));
    }
    Ok(lower_rate_coefficient(cstar, p) * (blowup_time - t).powf(-2.0 / (p - 2.0)))
}

/// `2H(0)·e^{C₂t}`.
pub fn growth_floor(t: f64, h0: f64, c2: f64) -> f64 {
    2.0 * h0 * (c2 * t).exp()
}

/// Both sides of the sufficient condition under which the upper time bound
/// improves the one from the concavity method when `0 < J(u₀) < d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBoundComparison {
    pub eps: f64,
    pub left: f64,
    pub right: f64,
    pub holds: bool,
}

/// `[((1−ε)p + 2ε)/2]^{−p/(p−2)} < (p−1)/(p−2) − [1/(p−2)² + p/(4(p−1))]^{1/2}`.
pub fn time_bound_comparison(p: f64, eps: f64) -> TimeBoundComparison {
    let left = (((1.0 - eps) * p + 2.0 * eps) / 2.0).powf(-p / (p - 2.0));
    let right = (p - 1.0) / (p - 2.0)
        - (1.0 / ((p - 2.0) * (p - 2.0)) + p / (4.0 * (p - 1.0))).sqrt();
    TimeBoundComparison {
        eps,
        left,
        right,
        holds: left < right,
    }
}

pub fn remark_comparison_holds(p: f64, eps: f64) -> bool {
    time_bound_comparison(p, eps).holds
}

/// Every bound evaluated for one constants report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub t_upper: Option<f64>,
    pub t_lower: f64,
    pub rate_upper_coeff: Option<f64>,
    pub rate_upper_exp: Option<f64>,
    pub rate_lower_coeff: f64,
    pub rate_lower_exp: f64,
    pub growth_coeff: f64,
    pub growth_rate: Option<f64>,
    pub comparison_predicate: Option<TimeBoundComparison>,
    /// `T_lower ≤ T_upper`, when both exist.
    pub consistent: Option<bool>,
}

impl BoundsReport {
    pub fn from_constants(report: &ConstantsReport) -> Self {
        let p = report.p;
        let h0 = report.h0;
        let t_lower = lower_time_bound(h0, report.cstar, p);
        let (t_upper, rate_upper_coeff) = match report.c1 {
            Some(c1) if report.regime.is_certified() => (
                upper_time_bound(h0, report.g0, c1).ok(),
                upper_rate_coefficient(h0, report.g0, c1).ok(),
            ),
            _ => (None, None),
        };
        let comparison_predicate = (report.regime.is_certified() && report.j0 > 0.0)
            .then(|| time_bound_comparison(p, report.j0 / report.d));
        Self {
            t_upper,
            t_lower,
            rate_upper_coeff,
            rate_upper_exp: report.c1.map(|c1| -2.0 / (c1 - 2.0)),
            rate_lower_coeff: lower_rate_coefficient(report.cstar, p),
            rate_lower_exp: -2.0 / (p - 2.0),
            growth_coeff: 2.0 * h0,
            growth_rate: report.c2,
            comparison_predicate,
            consistent: t_upper.map(|upper| t_lower <= upper),
        }
    }
}
