//! Experiment configuration, initial data, and the `constants`, `simulate`,
//! `sweep` and `verify` commands.

mod config;
mod io;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EstimatorConfig, ExperimentConfig, InitialConfig, MeshConfig, OutputConfig, SweepSpec};
pub use io::{read_json, read_trajectory_csv, write_json, write_trajectory_csv, TRAJECTORY_COLUMNS, TRAJECTORY_SCHEMA};

use crate::bounds::BoundsReport;
use crate::constants::{ConstantsError, ConstantsReport, DiscreteConstants, Regime};
use crate::dynamics::{run, DynamicsError, RunStatus, Trajectory};
use crate::fem::{discrete_norms, DiscreteOperators, MeshError, RadialMesh, StateVector};
use crate::model::{ray_nehari_threshold, ray_scaling, ModelParams};
use crate::verify::{terminal_slope, verify_trajectory, VerificationReport};

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "BLOWUP_LAB_OUT";

pub const CONSTANTS_FILE: &str = "constants.json";
pub const BOUNDS_FILE: &str = "bounds.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const VERIFICATION_FILE: &str = "verification.json";
pub const SUMMARY_FILE: &str = "verification.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("requested regime unreachable: {0}")]
    RegimeUnreachable(String),
    #[error("{failed} verification check(s) failed")]
    VerificationFailed { failed: usize },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(source) => Self::io(path, source),
                other => Self::Input(format!("{}: {other:?}", path.display())),
            }
        } else {
            Self::Input(format!("{}: {err}", path.display()))
        }
    }

    /// Process exit code: 1 I/O, 2 invalid configuration or input, 3 numerical
    /// failure, 4 failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 1,
            Self::Config(_) | Self::Input(_) | Self::Mesh(_) | Self::RegimeUnreachable(_) => 2,
            Self::Constants(ConstantsError::OutOfRegime { .. }) => 2,
            Self::Constants(_) | Self::Dynamics(DynamicsError::Linsolve(_)) => 3,
            Self::Dynamics(DynamicsError::Config(_)) => 2,
            Self::VerificationFailed { .. } => 4,
        }
    }
}

/// Output directory: explicit override, then the environment, then the config.
pub fn resolve_output_dir(config: &ExperimentConfig, cli: Option<&Path>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.dir))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ExperimentConfig::from_toml(&text)
}

/// Mesh, operators and discrete constants of one configuration.
pub struct Setup {
    pub mesh: RadialMesh,
    pub ops: DiscreteOperators,
    pub constants: DiscreteConstants,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let mesh = RadialMesh::new(config.model, config.mesh.elements, config.mesh.grading, config.mesh.quad_order)?;
        let ops = DiscreteOperators::assemble(&mesh);
        let constants = DiscreteConstants::estimate(&mesh, &ops, config.estimators.settings())?;
        Ok(Self { mesh, ops, constants })
    }
}

/// A synthesized initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDatum {
    pub u0: StateVector,
    /// Scaling of the base profile.
    pub lambda: f64,
    pub j0: f64,
    pub i0: f64,
}

/// Builds the initial state. For a ray target, `λ` is found by bisection on
/// the branch beyond the Nehari point, where `J(λφ)` decreases to `−∞`.
pub fn synthesize_initial(
    mesh: &RadialMesh,
    ops: &DiscreteOperators,
    constants: &DiscreteConstants,
    initial: &InitialConfig,
) -> Result<InitialDatum, HarnessError> {
    let params = mesh.params();
    let p = params.p;
    let (base, lambda) = match *initial {
        InitialConfig::PolynomialBump { amplitude, exponent } => {
            let radius = params.radius;
            let base = StateVector::interpolate(mesh, |r| (1.0 - (r / radius).powi(2)).max(0.0).powf(exponent));
            (base, amplitude)
        }
        InitialConfig::GroundStateRay { lambda, target_level } => {
            let base = constants.cstar.extremal.clone();
            let lambda = match (lambda, target_level) {
                (Some(l), _) => l,
                (None, Some(level)) => {
                    let norms = discrete_norms(mesh, ops, &base, p);
                    let target = level * crate::constants::mountain_pass_d(constants.cstar.value, p);
                    ray_level_scaling(norms.norm_grad, norms.norm_p, p, target, level)?
                }
                (None, None) => return Err(HarnessError::Config("ground_state_ray needs lambda or target_level".into())),
            };
            (base, lambda)
        }
    };
    let u0 = base.scaled(lambda);
    let norms = discrete_norms(mesh, ops, &u0, p);
    let (j0, i0) = (
        crate::model::eval_j(norms.norm_grad, norms.norm_p, p),
        crate::model::eval_i(norms.norm_grad, norms.norm_p, p),
    );
    Ok(InitialDatum { u0, lambda, j0, i0 })
}

/// `λ > λ_I` with `J(λφ) = target`, where `λ_I` is the Nehari point of the ray.
fn ray_level_scaling(norm_grad: f64, norm_p: f64, p: f64, target: f64, level: f64) -> Result<f64, HarnessError> {
    if level >= 1.0 {
        return Err(HarnessError::RegimeUnreachable(format!(
            "target_level {level} is not below the mountain-pass level"
        )));
    }
    let lambda_i = ray_nehari_threshold(norm_grad, norm_p, p)
        .ok_or_else(|| HarnessError::RegimeUnreachable("profile has zero p-norm".into()))?;
    let energy = |lambda: f64| ray_scaling(lambda, norm_grad, norm_p, p).0;
    if energy(lambda_i) <= target {
        return Err(HarnessError::RegimeUnreachable(format!(
            "energy along the ray never exceeds the target {target:e} beyond the Nehari point"
        )));
    }
    let mut lo = lambda_i;
    let mut hi = 2.0 * lambda_i;
    while energy(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if energy(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Constants report for the configured initial datum.
pub fn constants_for(config: &ExperimentConfig, setup: &Setup) -> Result<(InitialDatum, ConstantsReport), HarnessError> {
    let datum = synthesize_initial(&setup.mesh, &setup.ops, &setup.constants, &config.initial)?;
    let report = ConstantsReport::from_estimates(
        &setup.mesh,
        &setup.ops,
        &datum.u0,
        &setup.constants,
        config.estimators.nehari_margin,
    )?;
    if let InitialConfig::GroundStateRay {
        target_level: Some(level), ..
    } = config.initial
    {
        let wanted = if level < 0.0 { Regime::NegativeEnergy } else { Regime::Subcritical };
        if report.regime != wanted {
            return Err(HarnessError::RegimeUnreachable(format!(
                "target_level {level} produced regime {:?}",
                report.regime
            )));
        }
    }
    Ok((datum, report))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Estimates every constant and writes `constants.json` and `bounds.json`.
pub fn cmd_constants(config: &ExperimentConfig, out_dir: &Path) -> Result<ConstantsReport, HarnessError> {
    let setup = Setup::new(config)?;
    let (_, report) = constants_for(config, &setup)?;
    if config.output.json {
        ensure_dir(out_dir)?;
        write_json(&out_dir.join(CONSTANTS_FILE), &report)?;
        write_json(&out_dir.join(BOUNDS_FILE), &BoundsReport::from_constants(&report))?;
    }
    Ok(report)
}

pub struct SimulationOutcome {
    pub datum: InitialDatum,
    pub constants: ConstantsReport,
    pub bounds: BoundsReport,
    pub trajectory: Trajectory,
    pub verification: VerificationReport,
}

/// Runs one configuration in memory, without writing files.
pub fn simulate(config: &ExperimentConfig) -> Result<SimulationOutcome, HarnessError> {
    let setup = Setup::new(config)?;
    let (datum, constants) = constants_for(config, &setup)?;
    let trajectory = run(&setup.mesh, &setup.ops, &datum.u0, &config.stepping, &constants)?;
    let verification = verify_trajectory(&trajectory, &constants, config.stepping.dt0, &config.verification);
    Ok(SimulationOutcome {
        datum,
        bounds: BoundsReport::from_constants(&constants),
        constants,
        trajectory,
        verification,
    })
}

/// Constants, run and verification; writes every artifact and fails with
/// [`HarnessError::VerificationFailed`] when an applicable check fails.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<SimulationOutcome, HarnessError> {
    let outcome = simulate(config)?;
    ensure_dir(out_dir)?;
    if config.output.csv {
        write_trajectory_csv(&out_dir.join(TRAJECTORY_FILE), &outcome.trajectory)?;
    }
    if config.output.json {
        write_json(&out_dir.join(CONSTANTS_FILE), &outcome.constants)?;
        write_json(&out_dir.join(BOUNDS_FILE), &outcome.bounds)?;
        write_json(&out_dir.join(VERIFICATION_FILE), &outcome.verification)?;
    }
    let summary = outcome.verification.summary();
    fs::write(out_dir.join(SUMMARY_FILE), &summary).map_err(|e| HarnessError::io(&out_dir.join(SUMMARY_FILE), e))?;
    let failed = outcome.verification.failed().len();
    if failed > 0 {
        return Err(HarnessError::VerificationFailed { failed });
    }
    Ok(outcome)
}

/// Re-verifies a trajectory CSV against a constants JSON. Checks that need the
/// accumulated dissipation are skipped because the CSV does not carry it.
pub fn cmd_verify(
    trajectory_csv: &Path,
    constants_json: &Path,
    config: Option<&ExperimentConfig>,
    out_dir: &Path,
) -> Result<VerificationReport, HarnessError> {
    let constants: ConstantsReport = read_json(constants_json)?;
    let snapshots = read_trajectory_csv(trajectory_csv)?;
    let params = ModelParams::new(constants.n, constants.s, constants.p, constants.radius)
        .map_err(|e| HarnessError::Input(e.to_string()))?;
    let stepping = config.map(|c| c.stepping).unwrap_or_default();
    let tolerances = config.map(|c| c.verification).unwrap_or_default();
    let traj = Trajectory::from_snapshots(params, snapshots, &stepping, constants.c1);
    let report = verify_trajectory(&traj, &constants, stepping.dt0, &tolerances);
    ensure_dir(out_dir)?;
    write_json(&out_dir.join(VERIFICATION_FILE), &report)?;
    let failed = report.failed().len();
    if failed > 0 {
        return Err(HarnessError::VerificationFailed { failed });
    }
    Ok(report)
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub p: f64,
    pub lambda: Option<f64>,
    pub target_level: Option<f64>,
    #[serde(rename = "J0")]
    pub j0: Option<f64>,
    #[serde(rename = "I0")]
    pub i0: Option<f64>,
    pub regime: Option<Regime>,
    pub status: Option<RunStatus>,
    #[serde(rename = "T_lower")]
    pub t_lower: Option<f64>,
    #[serde(rename = "T_num")]
    pub t_num: Option<f64>,
    #[serde(rename = "T_upper")]
    pub t_upper: Option<f64>,
    pub slope: Option<f64>,
    pub checks_passed: Option<usize>,
    pub checks_applicable: Option<usize>,
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 15] = [
    "s",
    "p",
    "lambda",
    "target_level",
    "J0",
    "I0",
    "regime",
    "status",
    "T_lower",
    "T_num",
    "T_upper",
    "slope",
    "checks_passed",
    "checks_applicable",
    "error",
];

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.checks_passed == self.checks_applicable
    }
}

/// Configurations of the Cartesian product of the sweep lists.
pub fn expand_sweep(config: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let spec = match &config.sweep {
        Some(spec) if !spec.is_empty() => spec.clone(),
        _ => return Vec::new(),
    };
    let or_base = |list: &[f64], base: f64| if list.is_empty() { vec![base] } else { list.to_vec() };
    let mut out = Vec::new();
    for s in or_base(&spec.s, config.model.s) {
        for p in or_base(&spec.p, config.model.p) {
            let scalings: Vec<InitialConfig> = if !spec.lambda.is_empty() {
                spec.lambda.iter().map(|&l| with_scaling(config.initial, Some(l), None)).collect()
            } else if !spec.target_level.is_empty() {
                spec.target_level.iter().map(|&t| with_scaling(config.initial, None, Some(t))).collect()
            } else {
                vec![config.initial]
            };
            for initial in scalings {
                let mut run = config.clone();
                run.model.s = s;
                run.model.p = p;
                run.initial = initial;
                run.sweep = None;
                out.push(run);
            }
        }
    }
    out
}

fn with_scaling(initial: InitialConfig, lambda: Option<f64>, target_level: Option<f64>) -> InitialConfig {
    match initial {
        InitialConfig::PolynomialBump { exponent, amplitude } => InitialConfig::PolynomialBump {
            amplitude: lambda.unwrap_or(amplitude),
            exponent,
        },
        InitialConfig::GroundStateRay { .. } => InitialConfig::GroundStateRay { lambda, target_level },
    }
}

fn sweep_row(config: &ExperimentConfig) -> SweepRow {
    let (lambda, target_level) = match config.initial {
        InitialConfig::PolynomialBump { amplitude, .. } => (Some(amplitude), None),
        InitialConfig::GroundStateRay { lambda, target_level } => (lambda, target_level),
    };
    let mut row = SweepRow {
        s: config.model.s,
        p: config.model.p,
        lambda,
        target_level,
        j0: None,
        i0: None,
        regime: None,
        status: None,
        t_lower: None,
        t_num: None,
        t_upper: None,
        slope: None,
        checks_passed: None,
        checks_applicable: None,
        error: None,
    };
    match config.validate().and_then(|_| simulate(config)) {
        Ok(out) => {
            row.lambda = Some(out.datum.lambda);
            row.j0 = Some(out.constants.j0);
            row.i0 = Some(out.constants.i0);
            row.regime = Some(out.constants.regime);
            row.status = Some(out.trajectory.status);
            row.t_lower = Some(out.bounds.t_lower);
            row.t_upper = out.bounds.t_upper;
            row.t_num = out.trajectory.blowup_time();
            row.slope = row.t_num.and_then(|t| {
                let start = out.trajectory.window_start(config.verification.window_ratio);
                let window: Vec<(f64, f64)> = out.trajectory.snapshots[start..]
                    .iter()
                    .map(|s| (s.t(), 2.0 * s.h()))
                    .collect();
                terminal_slope(&window, t)
            });
            let applicable = out.verification.checks.iter().filter(|c| c.pass.is_some()).count();
            row.checks_applicable = Some(applicable);
            row.checks_passed = Some(applicable - out.verification.failed().len());
        }
        Err(err) => row.error = Some(err.to_string()),
    }
    row
}

/// Runs every sweep configuration in parallel; failures become marked rows.
pub fn run_sweep(config: &ExperimentConfig) -> Vec<SweepRow> {
    expand_sweep(config).par_iter().map(sweep_row).collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer.write_record(SWEEP_COLUMNS).map_err(|e| HarnessError::csv(path, e))?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for row in rows {
        let record = [
            format!("{:e}", row.s),
            format!("{:e}", row.p),
            opt(row.lambda),
            opt(row.target_level),
            opt(row.j0),
            opt(row.i0),
            row.regime.map(|r| format!("{r:?}")).unwrap_or_default(),
            row.status.map(|s| format!("{s:?}")).unwrap_or_default(),
            opt(row.t_lower),
            opt(row.t_num),
            opt(row.t_upper),
            opt(row.slope),
            row.checks_passed.map(|c| c.to_string()).unwrap_or_default(),
            row.checks_applicable.map(|c| c.to_string()).unwrap_or_default(),
            row.error.clone().unwrap_or_default(),
        ];
        writer.write_record(&record).map_err(|e| HarnessError::csv(path, e))?;
    }
    writer.flush().map_err(|e| HarnessError::io(path, e))
}

/// Runs the sweep and writes `sweep.csv`; fails with
/// [`HarnessError::VerificationFailed`] when any row failed.
pub fn cmd_sweep(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    let rows = run_sweep(config);
    ensure_dir(out_dir)?;
    write_sweep_csv(&out_dir.join(SWEEP_FILE), &rows)?;
    let failed = rows.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        return Err(HarnessError::VerificationFailed { failed });
    }
    Ok(rows)
}
