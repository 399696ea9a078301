//! Checks a trajectory against the energy identities, the blowup-time bounds,
//! the rate envelopes and the exponential growth floor.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::{growth_floor, lower_rate_envelope, upper_rate_envelope, BoundsReport};
use crate::constants::{ConstantsReport, Regime, DISCRETE_CONSTANT_NOTE};
use crate::dynamics::{RunStatus, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyTolerances {
    /// Identity residuals must stay below `identity_coeff·dt0`.
    pub identity_coeff: f64,
    /// Relative slack of the blowup-time containment.
    pub tol_t: f64,
    /// Multiplicative slack of both rate envelopes.
    pub rate_factor: f64,
    /// Relative slack of the measured terminal slope.
    pub slope_tol: f64,
    pub growth_tol: f64,
    /// Relative slack of the `‖u‖_p ≥ θ₂` floor.
    pub norm_floor_tol: f64,
    /// Relative tolerance for rounding-level decreases of `G`.
    pub gap_tol: f64,
    /// Terminal window starts where `H ≥ window_ratio·H(0)`.
    pub window_ratio: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            identity_coeff: 50.0,
            tol_t: 0.10,
            rate_factor: 2.0,
            slope_tol: 0.15,
            growth_tol: 1e-6,
            norm_floor_tol: 1e-2,
            gap_tol: 1e-12,
            window_ratio: 1e3,
        }
    }
}

/// Outcome of one check; `pass` is `None` when the check does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub paper_location: String,
    pub pass: Option<bool>,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CheckRecord {
    fn new(check: &str, location: &str) -> Self {
        Self {
            check: check.into(),
            paper_location: location.into(),
            pass: None,
            measured: None,
            tolerance: None,
            note: None,
        }
    }

    fn evaluated(mut self, pass: bool, measured: f64, tolerance: f64) -> Self {
        self.pass = Some(pass);
        self.measured = Some(measured);
        self.tolerance = Some(tolerance);
        self
    }

    fn skipped(mut self, reason: impl Into<String>) -> Self {
        self.note = Some(reason.into());
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

pub const ENERGY_IDENTITY: &str = "energy identity";
pub const RATE_IDENTITY: &str = "weighted-energy rate identity";
pub const H_MONOTONE: &str = "H strictly increasing";
pub const G_MONOTONE: &str = "G nondecreasing";
pub const NORM_FLOOR: &str = "norm floor theta2";
pub const T_LOWER: &str = "T_lower <= T_num";
pub const T_UPPER: &str = "T_num <= T_upper";
pub const BOUNDS_CONSISTENT: &str = "T_lower <= T_upper";
pub const GROWTH_FLOOR: &str = "exponential growth floor";
pub const UPPER_ENVELOPE: &str = "upper rate envelope";
pub const LOWER_ENVELOPE: &str = "lower rate envelope";
pub const RATE_SLOPE: &str = "rate-slope fit";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn get(&self, check: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.check == check)
    }

    pub fn failed(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| c.pass == Some(false)).collect()
    }

    /// True when no applicable check failed.
    pub fn all_pass(&self) -> bool {
        self.failed().is_empty()
    }

    pub fn summary(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let verdict = match c.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "SKIP",
            };
            write!(f, "{verdict} {:<30}", c.check)?;
            if let (Some(m), Some(t)) = (c.measured, c.tolerance) {
                write!(f, " measured {m:.6e} tolerance {t:.6e}")?;
            }
            if let Some(note) = &c.note {
                write!(f, " ({note})")?;
            }
            writeln!(f)?;
        }
        let failed = self.failed().len();
        let applicable = self.checks.iter().filter(|c| c.pass.is_some()).count();
        writeln!(f, "{} of {applicable} applicable checks passed", applicable - failed)
    }
}

/// Runs every applicable check. `dt0` sets the scale of the identity tolerances.
pub fn verify_trajectory(
    traj: &Trajectory,
    constants: &ConstantsReport,
    dt0: f64,
    tol: &VerifyTolerances,
) -> VerificationReport {
    let bounds = BoundsReport::from_constants(constants);
    let certified = constants.regime.is_certified();
    let identity_tol = tol.identity_coeff * dt0;
    let snaps = &traj.snapshots;
    let diag = traj.diagnostics.as_ref();
    let (h0, j0) = (traj.h0(), traj.j0());
    let mut checks = Vec::new();

    // Energy identity, normalized by the size of the terms it balances.
    let record = CheckRecord::new(
        ENERGY_IDENTITY,
        "energy identity: J(u) + dissipation of u_t in the weighted norm = J(u0)",
    );
    let residuals: Option<Vec<(f64, f64)>> = snaps
        .iter()
        .map(|s| {
            let d = s.dissipation?;
            let r = s.energy_residual(j0)?.abs();
            let scale = (j0.abs() + s.functionals.energy.abs() + d).max(f64::MIN_POSITIVE);
            Some((r / scale, r))
        })
        .collect();
    checks.push(match residuals {
        Some(res) => {
            let scaled = res
                .iter()
                .map(|r| r.0)
                .chain(diag.map(|d| d.max_energy_residual_scaled))
                .fold(0.0, f64::max);
            let absolute = res.iter().map(|r| r.1).fold(0.0, f64::max);
            record
                .evaluated(scaled <= identity_tol, scaled, identity_tol)
                .with_note(format!(
                    "residual relative to |J(0)| + |J(t)| + dissipation; max |residual|/|J(0)| = {:.3e}",
                    absolute / j0.abs()
                ))
        }
        None => record.skipped("dissipation integral not recorded"),
    });

    // Integrated form of dH/dt = −I.
    let record = CheckRecord::new(RATE_IDENTITY, "rate identity: dH/dt = -I(u)");
    let residuals: Option<Vec<f64>> = snaps
        .iter()
        .map(|s| {
            let n = s.nehari_integral?;
            Some(s.rate_residual(h0)?.abs() / (h0 + s.h() + n.abs()).max(f64::MIN_POSITIVE))
        })
        .collect();
    checks.push(match residuals {
        Some(res) => {
            let max = res.into_iter().fold(0.0, f64::max);
            let note = diag.map_or(String::from("integrated form"), |d| {
                format!("integrated form; max per-step relative residual {:.3e}", d.max_rate_residual_rel)
            });
            record.evaluated(max <= identity_tol, max, identity_tol).with_note(note)
        }
        None => record.skipped("Nehari integral not recorded"),
    });

    let record = CheckRecord::new(H_MONOTONE, "H'(t) >= C1 G(t) > 0 in the blowup regimes");
    checks.push(if certified {
        let recorded = snaps.windows(2).filter(|w| w[1].h() <= w[0].h()).count();
        let stepwise = diag.map_or(0, |d| d.h_nonincreasing_steps);
        let count = recorded.max(stepwise) as f64;
        record.evaluated(count == 0.0, count, 0.0).with_note("number of non-increasing steps")
    } else {
        record.skipped("regime not certified for blowup")
    });

    let record = CheckRecord::new(G_MONOTONE, "G'(t) = weighted norm of u_t >= 0");
    let worst = snaps
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].functionals.gap, w[1].functionals.gap);
            (a - b) / a.abs().max(w[1].functionals.energy.abs()).max(f64::MIN_POSITIVE)
        })
        .chain(diag.map(|d| d.max_gap_decrease_rel))
        .fold(0.0, f64::max);
    checks.push(
        record
            .evaluated(worst <= tol.gap_tol, worst, tol.gap_tol)
            .with_note("largest relative decrease"),
    );

    let record = CheckRecord::new(NORM_FLOOR, "norm floor ||u||_p >= theta2 when 0 <= J(u0) < d");
    checks.push(match constants.theta2 {
        Some(theta2) if constants.regime == Regime::Subcritical => {
            let min = snaps.iter().map(|s| s.functionals.norm_p).fold(f64::INFINITY, f64::min);
            let floor = theta2 * (1.0 - tol.norm_floor_tol);
            record
                .evaluated(min >= floor, min, floor)
                .with_note(format!("theta2 = {theta2:.6e}"))
        }
        _ => record.skipped("applies to 0 <= J(u0) < d only"),
    });

    let t_num = match (traj.status, traj.blowup_time()) {
        (RunStatus::BlowupDetected, Some(t)) if certified => Some(t),
        _ => None,
    };
    let skip_reason = if !certified {
        "regime not certified for blowup".to_string()
    } else if traj.status != RunStatus::BlowupDetected {
        format!("run ended with status {:?}", traj.status)
    } else {
        traj.extrapolation_error
            .clone()
            .unwrap_or_else(|| "no blowup-time estimate".into())
    };
    let fit_note = traj.t_num.map(|e| {
        format!(
            "T_num from exponent {:.4} ({:?}), fit quality {:.6}",
            e.exponent_value, e.exponent, e.fit_quality
        )
    });

    let record = CheckRecord::new(T_LOWER, "lower blowup-time bound");
    checks.push(match t_num {
        Some(t) => {
            let limit = t * (1.0 + tol.tol_t);
            record
                .evaluated(bounds.t_lower <= limit, bounds.t_lower, limit)
                .with_note(format!("T_lower vs T_num(1 + tol_T); {DISCRETE_CONSTANT_NOTE}"))
        }
        None => record.skipped(skip_reason.clone()),
    });

    let record = CheckRecord::new(T_UPPER, "upper blowup-time bound");
    checks.push(match (t_num, bounds.t_upper) {
        (Some(t), Some(upper)) => {
            let limit = upper * (1.0 + tol.tol_t);
            let rec = record.evaluated(t <= limit, t, limit);
            match &fit_note {
                Some(n) => rec.with_note(n.clone()),
                None => rec,
            }
        }
        _ => record.skipped(skip_reason.clone()),
    });

    let record = CheckRecord::new(BOUNDS_CONSISTENT, "upper and lower blowup-time bounds");
    checks.push(match bounds.t_upper {
        Some(upper) => record.evaluated(bounds.t_lower <= upper, bounds.t_lower, upper),
        None => record.skipped("upper bound not available"),
    });

    let record = CheckRecord::new(GROWTH_FLOOR, "exponential growth 2H(t) >= 2H(0) exp(C2 t)");
    checks.push(match constants.c2 {
        Some(c2) if certified => {
            let min = snaps
                .iter()
                .map(|s| 2.0 * s.h() / growth_floor(s.t(), constants.h0, c2))
                .fold(f64::INFINITY, f64::min);
            let limit = 1.0 - tol.growth_tol;
            record
                .evaluated(min >= limit, min, limit)
                .with_note("smallest ratio 2H(t)/floor(t)")
        }
        _ => record.skipped("regime not certified for blowup"),
    });

    let window: Vec<(f64, f64)> = match t_num {
        Some(t) => {
            let start = traj.window_start(tol.window_ratio);
            snaps[start..]
                .iter()
                .filter(|s| s.t() < t)
                .map(|s| (s.t(), 2.0 * s.h()))
                .collect()
        }
        None => Vec::new(),
    };
    let window_skip = if t_num.is_some() {
        "terminal window is empty".to_string()
    } else {
        skip_reason.clone()
    };

    let record = CheckRecord::new(UPPER_ENVELOPE, "upper blowup-rate envelope");
    checks.push(match (t_num, constants.c1) {
        (Some(t), Some(c1)) if !window.is_empty() => {
            let envelope = |time: f64, big_t: f64| upper_rate_envelope(time, big_t, constants.h0, constants.g0, c1);
            let worst = window
                .iter()
                .filter_map(|&(time, two_h)| envelope(time, t).ok().map(|e| two_h / e))
                .fold(0.0, f64::max);
            let sensitivity = envelope_sensitivity(&window, t, envelope);
            record
                .evaluated(worst <= tol.rate_factor, worst, tol.rate_factor)
                .with_note(format!(
                    "largest ratio 2H/envelope with T = T_num; {sensitivity}"
                ))
        }
        _ => record.skipped(window_skip.clone()),
    });

    let record = CheckRecord::new(LOWER_ENVELOPE, "lower blowup-rate envelope");
    checks.push(match t_num {
        Some(t) if !window.is_empty() => {
            let envelope = |time: f64, big_t: f64| lower_rate_envelope(time, big_t, constants.cstar, constants.p);
            let worst = window
                .iter()
                .filter_map(|&(time, two_h)| envelope(time, t).ok().map(|e| two_h / e))
                .fold(f64::INFINITY, f64::min);
            let limit = 1.0 / tol.rate_factor;
            let sensitivity = envelope_sensitivity(&window, t, envelope);
            record
                .evaluated(worst >= limit, worst, limit)
                .with_note(format!("smallest ratio 2H/envelope with T = T_num; {sensitivity}"))
        }
        _ => record.skipped(window_skip.clone()),
    });

    let record = CheckRecord::new(RATE_SLOPE, "blowup-rate exponent -2/(p-2) when J(u0) < 0");
    checks.push(match t_num {
        Some(t) if constants.regime == Regime::NegativeEnergy => match terminal_slope(&window, t) {
            Some(slope) => {
                let expected = -2.0 / (constants.p - 2.0);
                let deviation = (slope / expected - 1.0).abs();
                record
                    .evaluated(deviation <= tol.slope_tol, slope, tol.slope_tol)
                    .with_note(format!("slope of log 2H against log(T_num - t); expected {expected:.6}"))
            }
            None => record.skipped("terminal window too short for a slope"),
        },
        Some(_) => record.skipped("applies to J(u0) < 0 only"),
        None => record.skipped(skip_reason),
    });

    VerificationReport { checks }
}

/// `∂ ln(envelope)/∂T` at the first and last window samples, by finite differences.
fn envelope_sensitivity<F, E>(window: &[(f64, f64)], big_t: f64, envelope: F) -> String
where
    F: Fn(f64, f64) -> Result<f64, E>,
{
    let at = |t: f64| {
        let h = 1e-3 * (big_t - t);
        match (envelope(t, big_t), envelope(t, big_t + h)) {
            (Ok(a), Ok(b)) => Some((b.ln() - a.ln()) / h),
            _ => None,
        }
    };
    match (at(window[0].0), at(window[window.len() - 1].0)) {
        (Some(first), Some(last)) => format!(
            "d ln(envelope)/dT_num = {first:.3e} at the window start, {last:.3e} at its end"
        ),
        _ => "envelope sensitivity unavailable".into(),
    }
}

/// Least-squares slope of `log y` against `log(T − t)`.
pub fn terminal_slope(window: &[(f64, f64)], big_t: f64) -> Option<f64> {
    let points: Vec<(f64, f64)> = window
        .iter()
        .filter(|(t, y)| *t < big_t && *y > 0.0)
        .map(|&(t, y)| ((big_t - t).ln(), y.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
