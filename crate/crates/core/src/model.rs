//! Problem parameters and the scalar functionals built from precomputed norms.
//!
//! Every functional here is a closed-form expression in `‖∇u‖₂`, `‖u‖_p` and
//! the weighted norm `∫ u²/|x|^s`. Discretization error lives in the norm
//! computations of [`crate::fem`], never in this module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("spatial dimension n = {0} must be at least 3")]
    Dimension(u32),
    #[error("singular exponent s = {0} must lie in [0, 2]")]
    SingularExponent(f64),
    #[error("nonlinearity exponent p = {p} must lie in (2, {critical}) for n = {n}")]
    Nonlinearity { p: f64, n: u32, critical: f64 },
    #[error("ball radius R = {0} must be positive")]
    Radius(f64),
}

/// Parameters of the continuous problem on the ball `B_R(0) ⊂ ℝⁿ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u32,
    pub s: f64,
    pub p: f64,
    #[serde(rename = "R")]
    pub radius: f64,
}

impl ModelParams {
    pub fn new(n: u32, s: f64, p: f64, radius: f64) -> Result<Self, ParamsError> {
        let params = Self { n, s, p, radius };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.n < 3 {
            return Err(ParamsError::Dimension(self.n));
        }
        if !(0.0..=2.0).contains(&self.s) {
            return Err(ParamsError::SingularExponent(self.s));
        }
        let critical = self.critical_exponent();
        if !(self.p > 2.0 && self.p < critical) {
            return Err(ParamsError::Nonlinearity {
                p: self.p,
                n: self.n,
                critical,
            });
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ParamsError::Radius(self.radius));
        }
        Ok(())
    }

    /// Critical Sobolev exponent `2n/(n−2)`.
    pub fn critical_exponent(&self) -> f64 {
        let n = self.n as f64;
        2.0 * n / (n - 2.0)
    }
}

/// Values of the functionals at one instant of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSnapshot {
    pub t: f64,
    #[serde(rename = "J")]
    pub energy: f64,
    #[serde(rename = "I")]
    pub nehari: f64,
    #[serde(rename = "H")]
    pub weighted_energy: f64,
    #[serde(rename = "G")]
    pub gap: f64,
    pub norm_p: f64,
    pub norm_grad: f64,
    pub weighted_l2: f64,
}

/// Which definition of the gap functional applies, fixed by the sign of `J(u₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapKind {
    /// `G = −J(u)`, used when `J(u₀) < 0`.
    NegativeEnergy,
    /// `G = d − J(u)`, used when `J(u₀) ≥ 0`.
    BelowMountainPass,
}

impl GapKind {
    pub fn for_initial_energy(j0: f64) -> Self {
        if j0 < 0.0 {
            GapKind::NegativeEnergy
        } else {
            GapKind::BelowMountainPass
        }
    }

    pub fn eval(self, energy: f64, mountain_pass: f64) -> f64 {
        match self {
            GapKind::NegativeEnergy => -energy,
            GapKind::BelowMountainPass => mountain_pass - energy,
        }
    }
}

impl FunctionalSnapshot {
    /// Builds a snapshot from the three discrete norms.
    ///
    /// `weighted_l2` is the value of `∫ u²/|x|^s` itself, not its square root.
    pub fn from_norms(
        t: f64,
        norm_grad: f64,
        norm_p: f64,
        weighted_l2: f64,
        p: f64,
        gap: GapKind,
        mountain_pass: f64,
    ) -> Self {
        let energy = eval_j(norm_grad, norm_p, p);
        Self {
            t,
            energy,
            nehari: eval_i(norm_grad, norm_p, p),
            weighted_energy: eval_weighted_energy(weighted_l2, norm_grad),
            gap: gap.eval(energy, mountain_pass),
            norm_p,
            norm_grad,
            weighted_l2,
        }
    }
}

/// `J = ½‖∇u‖₂² − (1/p)‖u‖_p^p`.
pub fn eval_j(norm_grad: f64, norm_p: f64, p: f64) -> f64 {
    0.5 * norm_grad * norm_grad - norm_p.powf(p) / p
}

/// `I = ‖∇u‖₂² − ‖u‖_p^p`.
pub fn eval_i(norm_grad: f64, norm_p: f64, p: f64) -> f64 {
    norm_grad * norm_grad - norm_p.powf(p)
}

/// `H = ½(∫u²/|x|^s + ‖∇u‖₂²)`.
pub fn eval_weighted_energy(weighted_l2: f64, norm_grad: f64) -> f64 {
    0.5 * (weighted_l2 + norm_grad * norm_grad)
}

/// `h(θ) = θ²/(2C*²) − θ^p/p`, the lower bound of `J` in terms of `‖u‖_p`.
pub fn eval_h(theta: f64, cstar: f64, p: f64) -> f64 {
    theta * theta / (2.0 * cstar * cstar) - theta.powf(p) / p
}

/// Maximizer of [`eval_h`]: `θ₁ = C*^{−2/(p−2)}`.
pub fn h_maximizer(cstar: f64, p: f64) -> f64 {
    cstar.powf(-2.0 / (p - 2.0))
}

/// `J(λφ)` and `I(λφ)` in closed form from the norms of `φ`.
pub fn ray_scaling(lambda: f64, norm_grad: f64, norm_p: f64, p: f64) -> (f64, f64) {
    let quad = lambda * lambda * norm_grad * norm_grad;
    let pow = lambda.powf(p) * norm_p.powf(p);
    (0.5 * quad - pow / p, quad - pow)
}

/// Scaling `λ` where `I(λφ)` changes sign (the Nehari point on the ray).
///
/// Returns `None` when `‖φ‖_p = 0`, in which case `I(λφ) ≥ 0` for all `λ`.
pub fn ray_nehari_threshold(norm_grad: f64, norm_p: f64, p: f64) -> Option<f64> {
    if norm_p <= 0.0 {
        return None;
    }
    Some((norm_grad * norm_grad / norm_p.powf(p)).powf(1.0 / (p - 2.0)))
}

/// Scaling `λ` beyond which `J(λφ) < 0`.
pub fn ray_energy_threshold(norm_grad: f64, norm_p: f64, p: f64) -> Option<f64> {
    if norm_p <= 0.0 {
        return None;
    }
    Some((p * norm_grad * norm_grad / (2.0 * norm_p.powf(p))).powf(1.0 / (p - 2.0)))
}

/// `sup_{λ≥0} J(λφ) = ((p−2)/2p)·(‖∇φ‖^p/‖φ‖_p^p)^{2/(p−2)}`.
pub fn ray_energy_max(norm_grad: f64, norm_p: f64, p: f64) -> f64 {
    (p - 2.0) / (2.0 * p) * (norm_grad.powf(p) / norm_p.powf(p)).powf(2.0 / (p - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_examples() {
        assert_eq!(eval_j(0.0, 0.0, 4.0), 0.0);
        assert_eq!(eval_j(1.0, 0.0, 4.0), 0.5);
        assert_eq!(eval_j(1.0, 1.0, 4.0), 0.25);
    }

    #[test]
    fn nehari_examples() {
        assert_eq!(eval_i(0.0, 0.0, 4.0), 0.0);
        assert_eq!(eval_i(1.0, 1.0, 4.0), 0.0);
        assert_eq!(eval_i(1.0, 2.0, 4.0), -15.0);
    }

    #[test]
    fn h_examples() {
        assert_eq!(eval_h(0.0, 1.0, 4.0), 0.0);
        assert_eq!(eval_h(1.0, 1.0, 4.0), 0.25);
        assert_eq!(h_maximizer(1.0, 4.0), 1.0);

        let (cstar, p) = (0.7, 3.5);
        let theta1 = h_maximizer(cstar, p);
        let step = 1e-5;
        let derivative =
            (eval_h(theta1 + step, cstar, p) - eval_h(theta1 - step, cstar, p)) / (2.0 * step);
        assert!(derivative.abs() < 1e-8, "h'(θ₁) = {derivative}");
    }

    #[test]
    fn h_is_unimodal() {
        let (cstar, p) = (0.4, 3.0);
        let theta1 = h_maximizer(cstar, p);
        let samples: Vec<f64> = (0..=400).map(|k| 3.0 * theta1 * k as f64 / 400.0).collect();
        for pair in samples.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (ha, hb) = (eval_h(a, cstar, p), eval_h(b, cstar, p));
            if b <= theta1 {
                assert!(hb > ha, "not increasing at {a}");
            } else if a >= theta1 {
                assert!(hb < ha, "not decreasing at {a}");
            }
        }
    }

    #[test]
    fn ray_examples() {
        assert_eq!(ray_scaling(0.0, 2.0, 3.0, 4.0), (0.0, 0.0));
        let (j, i) = ray_scaling(1.0, 2.0, 3.0, 4.0);
        assert_eq!(j, eval_j(2.0, 3.0, 4.0));
        assert_eq!(i, eval_i(2.0, 3.0, 4.0));
        assert!(ray_scaling(1.01, 1.0, 1.0, 4.0).1 < 0.0);
        assert!(ray_scaling(0.99, 1.0, 1.0, 4.0).1 > 0.0);
    }

    #[test]
    fn params_admissibility() {
        assert!(ModelParams::new(3, 1.0, 4.0, 1.0).is_ok());
        assert_eq!(ModelParams::new(2, 1.0, 4.0, 1.0), Err(ParamsError::Dimension(2)));
        assert!(matches!(
            ModelParams::new(3, 2.5, 4.0, 1.0),
            Err(ParamsError::SingularExponent(_))
        ));
        assert!(matches!(
            ModelParams::new(3, 1.0, 6.0, 1.0),
            Err(ParamsError::Nonlinearity { .. })
        ));
        assert!(matches!(
            ModelParams::new(3, 1.0, 2.0, 1.0),
            Err(ParamsError::Nonlinearity { .. })
        ));
        assert!(matches!(
            ModelParams::new(3, 1.0, 4.0, 0.0),
            Err(ParamsError::Radius(_))
        ));
    }

    #[test]
    fn snapshot_identities() {
        let snap = FunctionalSnapshot::from_norms(
            0.5,
            2.0,
            1.5,
            0.7,
            4.0,
            GapKind::BelowMountainPass,
            3.0,
        );
        assert_eq!(snap.weighted_energy, (0.7 + 4.0) / 2.0);
        assert_eq!(snap.energy, 2.0 - 1.5f64.powf(4.0) / 4.0);
        assert_eq!(snap.nehari, 4.0 - 1.5f64.powf(4.0));
        assert_eq!(snap.gap, 3.0 - snap.energy);
    }
}
