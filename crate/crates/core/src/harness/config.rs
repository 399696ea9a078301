use serde::{Deserialize, Serialize};

use crate::constants::EstimatorSettings;
use crate::dynamics::TimeStepConfig;
use crate::fem::{DEFAULT_GRADING, DEFAULT_QUAD_ORDER};
use crate::model::ModelParams;
use crate::verify::VerifyTolerances;

use super::HarnessError;

/// One experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub mesh: MeshConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub stepping: TimeStepConfig,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default)]
    pub verification: VerifyTolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(rename = "M")]
    pub elements: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
}

fn default_grading() -> f64 {
    DEFAULT_GRADING
}

fn default_quad_order() -> usize {
    DEFAULT_QUAD_ORDER
}

/// Initial profile.
///
/// `polynomial_bump` is `A·(1 − (r/R)²)^q`. `ground_state_ray` is `λ·φ` with `φ`
/// the discrete ground state (`‖φ‖_p = 1`); either `lambda` is given, or
/// `target_level` asks for `J(u₀) = target_level·d` on the branch where
/// `I(λφ) < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    PolynomialBump {
        amplitude: f64,
        exponent: f64,
    },
    GroundStateRay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_level: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(rename = "tol_Cstar")]
    pub tol_cstar: f64,
    #[serde(rename = "tol_Cstarstar")]
    pub tol_cstarstar: f64,
    pub max_iterations: usize,
    /// Certification requires `I(u₀) < −nehari_margin`.
    pub nehari_margin: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let settings = EstimatorSettings::default();
        Self {
            tol_cstar: settings.tol_cstar,
            tol_cstarstar: settings.tol_cstarstar,
            max_iterations: settings.max_iterations,
            nehari_margin: 0.0,
        }
    }
}

impl EstimatorConfig {
    pub fn settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            tol_cstar: self.tol_cstar,
            tol_cstarstar: self.tol_cstarstar,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            csv: true,
            json: true,
        }
    }
}

/// Parameter lists swept as a Cartesian product; absent lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub target_level: Vec<f64>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.s.is_empty() && self.p.is_empty() && self.lambda.is_empty() && self.target_level.is_empty()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.stepping.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match self.initial {
            InitialConfig::PolynomialBump { amplitude, exponent } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(HarnessError::Config(format!("amplitude must be nonnegative, got {amplitude}")));
                }
                if !(exponent > 0.0 && exponent.is_finite()) {
                    return Err(HarnessError::Config(format!("exponent must be positive, got {exponent}")));
                }
            }
            InitialConfig::GroundStateRay { lambda, target_level } => match (lambda, target_level) {
                (Some(l), None) if l >= 0.0 && l.is_finite() => {}
                (None, Some(level)) if level.is_finite() => {}
                _ => {
                    return Err(HarnessError::Config(
                        "ground_state_ray needs exactly one of a nonnegative lambda or a finite target_level".into(),
                    ))
                }
            },
        }
        let est = &self.estimators;
        if !(est.tol_cstar > 0.0 && est.tol_cstarstar > 0.0 && est.max_iterations > 0 && est.nehari_margin >= 0.0) {
            return Err(HarnessError::Config("estimator tolerances and iteration cap must be positive".into()));
        }
        let tol = &self.verification;
        if !(tol.tol_t >= 0.0 && tol.rate_factor >= 1.0 && tol.identity_coeff > 0.0 && tol.window_ratio > 1.0) {
            return Err(HarnessError::Config("verification tolerances out of range".into()));
        }
        Ok(())
    }
}
