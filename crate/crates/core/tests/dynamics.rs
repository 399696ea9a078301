mod common;

use blowup_lab::constants::{build_constants_report, EstimatorSettings};
use blowup_lab::dynamics::{run, RunStatus, Stepper, TimeStepConfig};
use blowup_lab::fem::StateVector;

use common::unit_ball;

fn bump(mesh: &blowup_lab::fem::RadialMesh, amplitude: f64) -> StateVector {
    StateVector::interpolate(mesh, |r| amplitude * (1.0 - r * r).powi(2))
}

fn integrate(stepper: &mut Stepper, u0: &StateVector, dt: f64, t_end: f64) -> StateVector {
    let steps = (t_end / dt).round() as usize;
    let mut u = u0.clone();
    for _ in 0..steps {
        u = stepper.step(&u, dt).unwrap();
    }
    u
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn backward_euler_is_first_order() {
    let (mesh, ops) = unit_ball(3, 1.0, 4.0, 40);
    let u0 = bump(&mesh, 3.0);
    let mut stepper = Stepper::new(&mesh, &ops, 1.0);
    let dts = [4e-3, 2e-3, 1e-3, 5e-4];
    let sols: Vec<StateVector> = dts.iter().map(|&dt| integrate(&mut stepper, &u0, dt, 0.2)).collect();
    let diffs: Vec<f64> = sols.windows(2).map(|w| max_diff(&w[0], &w[1])).collect();
    for pair in diffs.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((1.8..=2.2).contains(&ratio), "Richardson ratio {ratio} from {diffs:?}");
    }
}

#[test]
fn crank_nicolson_is_second_order_on_the_linear_flow() {
    let (mesh, ops) = unit_ball(3, 1.0, 4.0, 40);
    let u0 = bump(&mesh, 1.0);
    let zero = vec![0.0; mesh.dofs()];
    let mut stepper = Stepper::new(&mesh, &ops, 0.5);
    let mut run_to = |dt: f64| {
        let mut u = u0.clone();
        for _ in 0..(0.2 / dt).round() as usize {
            u = stepper.step_with_load(&u, dt, &zero).unwrap();
        }
        u
    };
    let sols: Vec<StateVector> = [4e-3, 2e-3, 1e-3].iter().map(|&dt| run_to(dt)).collect();
    let ratio = max_diff(&sols[0], &sols[1]) / max_diff(&sols[1], &sols[2]);
    assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linear_flow_dissipates_exactly() {
    // Without the source, J = ½uᵀKu and each implicit step satisfies
    // ΔJ + dt·vᵀ(M_s+K)v = −½δᵀKδ.
    let (mesh, ops) = unit_ball(3, 1.5, 4.0, 60);
    let mut u = bump(&mesh, 2.0);
    let zero = vec![0.0; mesh.dofs()];
    let mut stepper = Stepper::new(&mesh, &ops, 1.0);
    let dt = 5e-3;
    let metric = ops.weighted_mass.add_scaled(&ops.stiffness, 1.0);
    let mut h_prev = 0.5 * metric.quad_form(&u);
    for _ in 0..100 {
        let next = stepper.step_with_load(&u, dt, &zero).unwrap();
        let delta: Vec<f64> = next.iter().zip(u.iter()).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = delta.iter().map(|x| x / dt).collect();
        let dj = 0.5 * ops.stiffness.quad_form(&next) - 0.5 * ops.stiffness.quad_form(&u);
        let lhs = dj + dt * metric.quad_form(&v);
        let rhs = -0.5 * ops.stiffness.quad_form(&delta);
        assert!((lhs - rhs).abs() <= 1e-10 * ops.stiffness.quad_form(&u), "{lhs} vs {rhs}");
        let h = 0.5 * metric.quad_form(&next);
        assert!(h < h_prev);
        h_prev = h;
        u = next;
    }
    assert_eq!(stepper.factorizations(), 1);
}

fn blowup_run(snapshot_spacing: f64) -> blowup_lab::dynamics::Trajectory {
    let (mesh, ops) = unit_ball(3, 1.0, 4.0, 50);
    let u0 = bump(&mesh, 12.0);
    let constants = build_constants_report(&mesh, &ops, &u0, EstimatorSettings::default()).unwrap();
    assert!(constants.regime.is_certified(), "{:?}", constants.regime);
    let cfg = TimeStepConfig {
        dt0: 1e-2,
        blowup_factor: 1e6,
        window_ratio: 1e2,
        snapshot_spacing,
        ..Default::default()
    };
    run(&mesh, &ops, &u0, &cfg, &constants).unwrap()
}

#[test]
fn steps_shrink_once_growth_sets_in() {
    let traj = blowup_run(0.0);
    assert_eq!(traj.status, RunStatus::BlowupDetected);
    let diag = traj.diagnostics.unwrap();
    assert_eq!(traj.snapshots.len(), diag.steps + 1);
    let h0 = traj.h0();
    let late: Vec<f64> = traj.snapshots[1..].iter().filter(|s| s.h() > 10.0 * h0).map(|s| s.dt).collect();
    assert!(late.len() > 10);
    assert!(late.windows(2).all(|w| w[1] <= w[0]), "dt must not increase after H > 10·H0");
    assert_eq!(diag.h_nonincreasing_steps, 0);
}

#[test]
fn thinned_snapshots_keep_exact_diagnostics() {
    let full = blowup_run(0.0);
    let thin = blowup_run(1e-2);
    assert!(thin.snapshots.len() < full.snapshots.len() / 2);
    assert_eq!(thin.diagnostics, full.diagnostics);
    assert_eq!(thin.t_threshold, full.t_threshold);
    let last = |t: &blowup_lab::dynamics::Trajectory| *t.snapshots.last().unwrap();
    assert_eq!(last(&thin), last(&full));
}

#[test]
fn small_data_decays_to_the_horizon() {
    let (mesh, ops) = unit_ball(3, 1.0, 4.0, 50);
    let u0 = bump(&mesh, 0.01);
    let constants = build_constants_report(&mesh, &ops, &u0, EstimatorSettings::default()).unwrap();
    assert!(!constants.regime.is_certified());
    let cfg = TimeStepConfig {
        dt0: 1e-2,
        t_max: 2.0,
        ..Default::default()
    };
    let traj = run(&mesh, &ops, &u0, &cfg, &constants).unwrap();
    assert_eq!(traj.status, RunStatus::GlobalWindowReached);
    assert!(traj.t_num.is_none());
    let last = traj.snapshots.last().unwrap();
    assert!(last.t() >= 2.0 && last.t() < 2.0 + cfg.dt0);
    assert!(last.h() < traj.h0());
}

#[test]
fn step_cap_stops_the_run() {
    let (mesh, ops) = unit_ball(3, 1.0, 4.0, 30);
    let u0 = bump(&mesh, 12.0);
    let constants = build_constants_report(&mesh, &ops, &u0, EstimatorSettings::default()).unwrap();
    let cfg = TimeStepConfig {
        dt0: 1e-3,
        max_steps: 25,
        ..Default::default()
    };
    let traj = run(&mesh, &ops, &u0, &cfg, &constants).unwrap();
    assert_eq!(traj.status, RunStatus::StepLimitReached);
    assert_eq!(traj.diagnostics.unwrap().steps, 25);
}
