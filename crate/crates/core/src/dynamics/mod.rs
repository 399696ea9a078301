//! Time integration of the semi-discrete system
//!
//! ```text
//! (M_s + K)·u′ + K·u = F(u)
//! ```
//!
//! with a θ-scheme for the linear part and the nonlinearity taken explicitly:
//!
//! ```text
//! (M_s + K)(u⁺ − u)/dt + K(θu⁺ + (1−θ)u) = F(u).
//! ```
//!
//! Every step solves one SPD tridiagonal system with matrix `M_s + K + θ·dt·K`,
//! refactorized only when `dt` changes. Blowup is declared once `H` crosses a
//! threshold, after which the blowup time is extrapolated from the terminal
//! power law.

mod extrapolate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extrapolate::{
    extrapolate_blowup_time, BlowupEstimate, ExtrapolationError, RateExponent, DEFAULT_WINDOW_RATIO,
    MIN_FIT_QUALITY, MIN_WINDOW_SAMPLES,
};

use crate::bounds::upper_time_bound;
use crate::constants::ConstantsReport;
use crate::fem::{load_and_pnorm, DiscreteOperators, RadialMesh, StateVector};
use crate::linsolve::{LinsolveError, SpdSolver, SymTridiagonal};
use crate::model::{FunctionalSnapshot, GapKind, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid time-step configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeStepConfig {
    pub dt0: f64,
    pub dt_min: f64,
    /// Blowup is declared once `H(t) ≥ blowup_factor·H(0)`.
    pub blowup_factor: f64,
    /// Exponent `a` in `dt = dt0/(1 + ‖u‖_∞^a)`; `p − 2` when unset.
    pub adapt_exponent: Option<f64>,
    pub max_steps: usize,
    pub theta_scheme: f64,
    /// Horizon for runs without a certified upper time bound.
    pub t_max: f64,
    /// Start of the terminal window, as a multiple of `H(0)`.
    pub window_ratio: f64,
    /// Approximate number of stored state checkpoints.
    pub checkpoints: usize,
    /// A snapshot is recorded once `H` has changed by this relative amount, or
    /// `t` has advanced by this fraction of the horizon; zero records every step.
    pub snapshot_spacing: f64,
}

impl Default for TimeStepConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-4,
            dt_min: 1e-30,
            blowup_factor: 1e8,
            adapt_exponent: None,
            max_steps: 50_000_000,
            theta_scheme: 1.0,
            t_max: 10.0,
            window_ratio: DEFAULT_WINDOW_RATIO,
            checkpoints: 100,
            snapshot_spacing: 1e-3,
        }
    }
}

impl TimeStepConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fail = |msg: &str| Err(DynamicsError::Config(msg.to_string()));
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return fail("dt0 must be positive");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt0) {
            return fail("dt_min must be positive and at most dt0");
        }
        if !(self.blowup_factor > 1.0) {
            return fail("blowup_factor must exceed 1");
        }
        if !(0.5..=1.0).contains(&self.theta_scheme) {
            return fail("theta_scheme must lie in [1/2, 1]");
        }
        if !(self.t_max > 0.0) {
            return fail("t_max must be positive");
        }
        if !(self.window_ratio > 1.0 && self.window_ratio < self.blowup_factor) {
            return fail("window_ratio must lie in (1, blowup_factor)");
        }
        if !(self.snapshot_spacing >= 0.0 && self.snapshot_spacing < 1.0) {
            return fail("snapshot_spacing must lie in [0, 1)");
        }
        if matches!(self.adapt_exponent, Some(a) if !(a >= 0.0)) {
            return fail("adapt_exponent must be nonnegative");
        }
        Ok(())
    }

    pub fn adapt_exponent_for(&self, p: f64) -> f64 {
        self.adapt_exponent.unwrap_or(p - 2.0)
    }
}

/// `dt = dt0/(1 + ‖u‖_∞^a)` clamped to `[dt_min, dt0]`.
pub fn adapt_dt(u: &StateVector, cfg: &TimeStepConfig, p: f64) -> f64 {
    unclamped_dt(u.max_abs(), cfg, p).clamp(cfg.dt_min, cfg.dt0)
}

fn unclamped_dt(u_max: f64, cfg: &TimeStepConfig, p: f64) -> f64 {
    cfg.dt0 / (1.0 + u_max.powf(cfg.adapt_exponent_for(p)))
}

/// One-step integrator holding the factorization for the current `dt`.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    mesh: &'a RadialMesh,
    ops: &'a DiscreteOperators,
    /// `M_s + K`.
    metric: SymTridiagonal,
    /// Scratch for `M_s + K + θ·dt·K`.
    system: SymTridiagonal,
    theta: f64,
    cached: Option<(f64, SpdSolver)>,
    rhs: Vec<f64>,
    factorizations: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(mesh: &'a RadialMesh, ops: &'a DiscreteOperators, theta: f64) -> Self {
        let metric = ops.weighted_mass.add_scaled(&ops.stiffness, 1.0);
        Self {
            mesh,
            ops,
            system: metric.clone(),
            metric,
            theta,
            cached: None,
            rhs: Vec::with_capacity(ops.dofs()),
            factorizations: 0,
        }
    }

    /// The dissipation metric `M_s + K`.
    pub fn metric(&self) -> &SymTridiagonal {
        &self.metric
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    fn refresh(&mut self, dt: f64) -> Result<(), LinsolveError> {
        if matches!(&self.cached, Some((cached_dt, _)) if *cached_dt == dt) {
            return Ok(());
        }
        self.system.assign_scaled_sum(&self.metric, &self.ops.stiffness, self.theta * dt);
        match &mut self.cached {
            Some((cached_dt, solver)) => {
                solver.refactorize_tridiagonal(&self.system)?;
                *cached_dt = dt;
            }
            None => self.cached = Some((dt, SpdSolver::factorize_tridiagonal(&self.system)?)),
        }
        self.factorizations += 1;
        Ok(())
    }

    /// Advances `u` by `dt`.
    pub fn step(&mut self, u: &StateVector, dt: f64) -> Result<StateVector, LinsolveError> {
        let (load, _) = load_and_pnorm(self.mesh, u, self.mesh.params().p);
        self.step_with_load(u, dt, &load)
    }

    /// Advances `u` by `dt` with a prescribed right-hand side in place of `F(u)`.
    pub fn step_with_load(&mut self, u: &StateVector, dt: f64, load: &[f64]) -> Result<StateVector, LinsolveError> {
        let mut next = StateVector(Vec::with_capacity(u.len()));
        self.advance(u, dt, load, &mut next)?;
        Ok(next)
    }

    /// Writes the step from `u` with load `load` into `next`.
    pub fn advance(&mut self, u: &[f64], dt: f64, load: &[f64], next: &mut StateVector) -> Result<(), LinsolveError> {
        self.refresh(dt)?;
        self.rhs.resize(u.len(), 0.0);
        self.metric.mul_vec_into(u, &mut self.rhs);
        if self.theta < 1.0 {
            let explicit = (1.0 - self.theta) * dt;
            self.ops.stiffness.axpy_mul_into(-explicit, u, &mut self.rhs);
        }
        self.rhs.iter_mut().zip(load).for_each(|(r, f)| *r += dt * f);
        let solver = &self.cached.as_ref().expect("solver cached").1;
        solver.solve_into(&self.rhs, &mut next.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    BlowupDetected,
    GlobalWindowReached,
    StepUnderflow,
    StepLimitReached,
}

/// One recorded instant of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Step that led to this snapshot; zero for the initial one.
    pub dt: f64,
    pub functionals: FunctionalSnapshot,
    /// `Σ dt_k·vₖᵀ(M_s+K)vₖ` with `vₖ = δu/dt`, up to this snapshot.
    pub dissipation: Option<f64>,
    /// `Σ dt_k·I(u_k)` up to this snapshot.
    pub nehari_integral: Option<f64>,
}

impl Snapshot {
    pub fn t(&self) -> f64 {
        self.functionals.t
    }

    pub fn h(&self) -> f64 {
        self.functionals.weighted_energy
    }

    /// `J(t) + D(t) − J(0)`, zero for the exact semi-discrete flow.
    pub fn energy_residual(&self, j0: f64) -> Option<f64> {
        self.dissipation.map(|d| self.functionals.energy + d - j0)
    }

    /// `H(t) − H(0) + ∫₀ᵗ I`, zero for the exact semi-discrete flow.
    pub fn rate_residual(&self, h0: f64) -> Option<f64> {
        self.nehari_integral.map(|n| self.h() - h0 + n)
    }
}

/// Quantities accumulated over every step, including unrecorded ones.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub steps: usize,
    /// Steps with `H(t_{k+1}) ≤ H(t_k)`.
    pub h_nonincreasing_steps: usize,
    /// Largest decrease of `G` over one step, relative to `max(|G|, |J|)`.
    pub max_gap_decrease_rel: f64,
    /// `max |J + D − J(0)|` over all steps.
    pub max_energy_residual: f64,
    /// `max |J + D − J(0)|/(|J(0)| + |J| + D)` over all steps.
    pub max_energy_residual_scaled: f64,
    /// `max |(H_{k+1} − H_k)/dt_k + I(u_k)|/|I(u_k)|` over all steps.
    pub max_rate_residual_rel: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub factorizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub snapshots: Vec<Snapshot>,
    /// Stored states `(t, u)`.
    #[serde(skip)]
    pub states: Vec<(f64, StateVector)>,
    pub status: RunStatus,
    pub t_num: Option<BlowupEstimate>,
    pub t_threshold: Option<f64>,
    /// Failure of the blowup-time fit, if any.
    pub extrapolation_error: Option<String>,
    pub horizon: f64,
    /// Present for trajectories produced by [`run`].
    pub diagnostics: Option<StepDiagnostics>,
}

impl Trajectory {
    pub fn h0(&self) -> f64 {
        self.snapshots[0].h()
    }

    pub fn j0(&self) -> f64 {
        self.snapshots[0].functionals.energy
    }

    pub fn blowup_time(&self) -> Option<f64> {
        self.t_num.map(|e| e.t_num)
    }

    /// `(t, H)` pairs.
    pub fn h_series(&self) -> Vec<(f64, f64)> {
        self.snapshots.iter().map(|s| (s.t(), s.h())).collect()
    }

    /// Index of the first snapshot of the terminal window `H ≥ ratio·H(0)`.
    pub fn window_start(&self, ratio: f64) -> usize {
        let threshold = ratio * self.h0();
        self.snapshots
            .iter()
            .rposition(|s| s.h() < threshold)
            .map_or(0, |k| k + 1)
    }

    /// Builds a trajectory from recorded snapshots, re-deriving the status and
    /// the blowup estimate.
    pub fn from_snapshots(params: ModelParams, snapshots: Vec<Snapshot>, cfg: &TimeStepConfig, c1: Option<f64>) -> Self {
        let h0 = snapshots.first().map_or(0.0, |s| s.h());
        let crossing = snapshots.iter().find(|s| s.h() >= cfg.blowup_factor * h0).map(|s| s.t());
        let status = if crossing.is_some() {
            RunStatus::BlowupDetected
        } else {
            RunStatus::GlobalWindowReached
        };
        let horizon = snapshots.last().map_or(0.0, |s| s.t());
        let mut traj = Self {
            params,
            snapshots,
            states: Vec::new(),
            status,
            t_num: None,
            t_threshold: crossing,
            extrapolation_error: None,
            horizon,
            diagnostics: None,
        };
        if status == RunStatus::BlowupDetected {
            traj.extrapolate(c1.unwrap_or(params.p), cfg.window_ratio);
        }
        traj
    }

    fn extrapolate(&mut self, c1: f64, window_ratio: f64) {
        match extrapolate_blowup_time(&self.h_series(), c1, self.params.p, window_ratio) {
            Ok(estimate) => self.t_num = Some(estimate),
            Err(err) => self.extrapolation_error = Some(err.to_string()),
        }
    }
}

/// Horizon of a run: three times the certified upper time bound, else `cfg.t_max`.
pub fn run_horizon(cfg: &TimeStepConfig, constants: &ConstantsReport) -> f64 {
    constants
        .c1
        .filter(|_| constants.regime.is_certified())
        .and_then(|c1| upper_time_bound(constants.h0, constants.g0, c1).ok())
        .map_or(cfg.t_max, |upper| 3.0 * upper)
}

/// Integrates from `u0` until blowup detection, the horizon, or step exhaustion.
pub fn run(
    mesh: &RadialMesh,
    ops: &DiscreteOperators,
    u0: &StateVector,
    cfg: &TimeStepConfig,
    constants: &ConstantsReport,
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    let params = *mesh.params();
    let p = params.p;
    let gap = GapKind::for_initial_energy(constants.j0);
    let d = constants.d;
    let horizon = run_horizon(cfg, constants);
    let mut stepper = Stepper::new(mesh, ops, cfg.theta_scheme);

    let evaluate = |u: &StateVector, pnorm_pow: f64, t: f64| {
        let norm_grad = ops.stiffness.quad_form(u).max(0.0).sqrt();
        let weighted = ops.weighted_mass.quad_form(u).max(0.0);
        FunctionalSnapshot::from_norms(t, norm_grad, pnorm_pow.max(0.0).powf(1.0 / p), weighted, p, gap, d)
    };

    let mut u = u0.clone();
    let (mut load, pnorm_pow) = load_and_pnorm(mesh, &u, p);
    let mut current = evaluate(&u, pnorm_pow, 0.0);
    let (h0, j0) = (current.weighted_energy, current.energy);
    let mut snapshots = vec![Snapshot {
        dt: 0.0,
        functionals: current,
        dissipation: Some(0.0),
        nehari_integral: Some(0.0),
    }];
    let mut states = vec![(0.0, u.clone())];
    let checkpoints = cfg.checkpoints.max(1) as f64;
    let checkpoint_ratio = cfg.blowup_factor.powf(1.0 / checkpoints);
    let mut next_h_checkpoint = h0 * checkpoint_ratio;
    let time_checkpoint = horizon / checkpoints;
    let mut next_t_checkpoint = time_checkpoint;

    let mut diag = StepDiagnostics {
        min_dt: f64::INFINITY,
        ..StepDiagnostics::default()
    };
    // Compensated running sums keep t and the accumulated integrals accurate
    // over millions of steps.
    let mut t = Kahan::default();
    let mut dissipation = Kahan::default();
    let mut nehari_integral = Kahan::default();
    let mut u_max = u.max_abs();
    let mut delta = vec![0.0; u.len()];
    let mut next = u.clone();
    let mut last_dt = 0.0;

    let status = loop {
        if h0 > 0.0 && current.weighted_energy >= cfg.blowup_factor * h0 {
            break RunStatus::BlowupDetected;
        }
        if t.sum >= horizon {
            break RunStatus::GlobalWindowReached;
        }
        if diag.steps >= cfg.max_steps {
            break RunStatus::StepLimitReached;
        }
        let raw_dt = unclamped_dt(u_max, cfg, p);
        if raw_dt < cfg.dt_min {
            break RunStatus::StepUnderflow;
        }
        let dt = raw_dt.min(cfg.dt0);
        stepper.advance(&u, dt, &load, &mut next)?;
        if !next.is_finite() {
            break RunStatus::StepUnderflow;
        }
        let t_next = t.peek(dt);
        if t_next <= t.sum {
            break RunStatus::StepUnderflow;
        }
        t.add(dt);
        last_dt = dt;

        delta.iter_mut().zip(next.iter().zip(u.iter())).for_each(|(d, (a, b))| *d = a - b);
        dissipation.add(stepper.metric().quad_form(&delta) / dt);
        nehari_integral.add(dt * current.nehari);
        let previous = current;
        std::mem::swap(&mut u, &mut next);
        u_max = u.max_abs();
        let pnorm_pow;
        (load, pnorm_pow) = load_and_pnorm(mesh, &u, p);
        current = evaluate(&u, pnorm_pow, t.sum);

        diag.steps += 1;
        diag.min_dt = diag.min_dt.min(dt);
        diag.max_dt = diag.max_dt.max(dt);
        if current.weighted_energy <= previous.weighted_energy {
            diag.h_nonincreasing_steps += 1;
        }
        let gap_scale = previous.gap.abs().max(current.energy.abs()).max(f64::MIN_POSITIVE);
        diag.max_gap_decrease_rel = diag.max_gap_decrease_rel.max((previous.gap - current.gap) / gap_scale);
        let residual = (current.energy + dissipation.sum - j0).abs();
        diag.max_energy_residual = diag.max_energy_residual.max(residual);
        let scale = j0.abs() + current.energy.abs() + dissipation.sum;
        if scale > 0.0 {
            diag.max_energy_residual_scaled = diag.max_energy_residual_scaled.max(residual / scale);
        }
        if previous.nehari != 0.0 {
            let rate = (current.weighted_energy - previous.weighted_energy) / dt;
            diag.max_rate_residual_rel = diag
                .max_rate_residual_rel
                .max((rate + previous.nehari).abs() / previous.nehari.abs());
        }

        if current.weighted_energy >= next_h_checkpoint || t.sum >= next_t_checkpoint {
            states.push((t.sum, u.clone()));
            while next_h_checkpoint <= current.weighted_energy {
                next_h_checkpoint *= checkpoint_ratio;
            }
            while next_t_checkpoint <= t.sum {
                next_t_checkpoint += time_checkpoint;
            }
        }
        let last = snapshots.last().expect("initial snapshot");
        let crossed = current.weighted_energy >= cfg.blowup_factor * h0;
        let relative_change = (current.weighted_energy / last.h() - 1.0).abs();
        if crossed || relative_change >= cfg.snapshot_spacing || t.sum - last.t() >= cfg.snapshot_spacing * horizon {
            snapshots.push(Snapshot {
                dt,
                functionals: current,
                dissipation: Some(dissipation.sum),
                nehari_integral: Some(nehari_integral.sum),
            });
        }
    };

    if snapshots.last().map(|s| s.t()) != Some(t.sum) {
        snapshots.push(Snapshot {
            dt: last_dt,
            functionals: current,
            dissipation: Some(dissipation.sum),
            nehari_integral: Some(nehari_integral.sum),
        });
    }
    if diag.steps == 0 {
        diag.min_dt = 0.0;
    }
    diag.factorizations = stepper.factorizations();

    let t_threshold = (status == RunStatus::BlowupDetected).then_some(t.sum);
    let mut traj = Trajectory {
        params,
        snapshots,
        states,
        status,
        t_num: None,
        t_threshold,
        extrapolation_error: None,
        horizon,
        diagnostics: Some(diag),
    };
    if status == RunStatus::BlowupDetected {
        traj.extrapolate(constants.c1.unwrap_or(p), cfg.window_ratio);
    }
    Ok(traj)
}

/// Kahan–Babuška compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let next = self.sum + y;
        self.carry = (next - self.sum) - y;
        self.sum = next;
    }

    fn peek(&self, x: f64) -> f64 {
        self.sum + (x - self.carry)
    }
}
