use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fewest terminal-window samples accepted by the fit.
pub const MIN_WINDOW_SAMPLES: usize = 10;
/// Log-space coefficient of determination required to keep the first exponent.
pub const MIN_FIT_QUALITY: f64 = 0.99;
/// Terminal window starts where `H ≥ DEFAULT_WINDOW_RATIO·H(0)`.
pub const DEFAULT_WINDOW_RATIO: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtrapolationError {
    #[error("terminal window H >= {ratio:e} H(0) holds only {found} samples, need {MIN_WINDOW_SAMPLES}")]
    InsufficientWindow { ratio: f64, found: usize },
    #[error("power-law fit is degenerate (slope {0:e})")]
    DegenerateFit(f64),
}

/// Which growth exponent produced the extrapolated time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateExponent {
    /// `H ≍ (T−t)^{−2/(C₁−2)}`.
    UpperEnvelope,
    /// `H ≍ (T−t)^{−2/(p−2)}`.
    LowerEnvelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    pub t_num: f64,
    pub exponent: RateExponent,
    /// Value `c` in `y = H^{−(c−2)/2}`.
    pub exponent_value: f64,
    /// Log-space coefficient of determination of the accepted fit.
    pub fit_quality: f64,
    /// Fit quality of the first exponent tried, `C₁`.
    pub upper_fit_quality: f64,
    pub window_samples: usize,
    pub window_start: f64,
}

/// Extrapolates the blowup time from `(t, H)` samples.
///
/// On the terminal window `H ≥ window_ratio·H(0)` the series `y = H^{−(c−2)/2}`
/// is fitted by a straight line in `t`; its zero is the blowup time. The fit
/// minimizes relative residuals `Σ((a + b·t − y)/y)²`, so the intercept is
/// pinned by the latest samples. `c = C₁` is tried first and kept when the
/// log-space coefficient of determination reaches [`MIN_FIT_QUALITY`];
/// otherwise `c = p` is used.
pub fn extrapolate_blowup_time(
    samples: &[(f64, f64)],
    c1: f64,
    p: f64,
    window_ratio: f64,
) -> Result<BlowupEstimate, ExtrapolationError> {
    let h0 = samples.first().map(|s| s.1).unwrap_or(0.0);
    let threshold = window_ratio * h0;
    let start = samples
        .iter()
        .rposition(|&(_, h)| h < threshold)
        .map_or(0, |k| k + 1);
    let window = &samples[start..];
    if window.len() < MIN_WINDOW_SAMPLES {
        return Err(ExtrapolationError::InsufficientWindow {
            ratio: window_ratio,
            found: window.len(),
        });
    }

    let upper = fit_power_law(window, c1)?;
    let (fit, exponent, exponent_value) = if upper.quality >= MIN_FIT_QUALITY || (c1 - p).abs() < 1e-12 {
        (upper, RateExponent::UpperEnvelope, c1)
    } else {
        (fit_power_law(window, p)?, RateExponent::LowerEnvelope, p)
    };
    Ok(BlowupEstimate {
        t_num: fit.t_num,
        exponent,
        exponent_value,
        fit_quality: fit.quality,
        upper_fit_quality: upper.quality,
        window_samples: window.len(),
        window_start: window[0].0,
    })
}

#[derive(Clone, Copy)]
struct LineFit {
    t_num: f64,
    quality: f64,
}

fn fit_power_law(window: &[(f64, f64)], c: f64) -> Result<LineFit, ExtrapolationError> {
    let exponent = -(c - 2.0) / 2.0;
    let t_ref = window[window.len() - 1].0;
    let points: Vec<(f64, f64)> = window.iter().map(|&(t, h)| (t - t_ref, h.powf(exponent))).collect();

    let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
    for &(x, y) in &points {
        let w = 1.0 / (y * y);
        sw += w;
        swx += w * x;
        swy += w * y;
    }
    let (mx, my) = (swx / sw, swy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in &points {
        let w = 1.0 / (y * y);
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(ExtrapolationError::DegenerateFit(slope));
    }
    let intercept = my - slope * mx;
    let t_num = t_ref - intercept / slope;

    // Coefficient of determination of log y against the log of the fitted line.
    let logs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let total: f64 = logs.iter().map(|l| (l - mean).powi(2)).sum();
    let mut residual = 0.0;
    for (&(x, _), l) in points.iter().zip(&logs) {
        let fitted = intercept + slope * x;
        if fitted <= 0.0 {
            residual = f64::INFINITY;
            break;
        }
        residual += (fitted.ln() - l).powi(2);
    }
    let quality = if total > 0.0 { 1.0 - residual / total } else { 0.0 };
    Ok(LineFit { t_num, quality })
}
