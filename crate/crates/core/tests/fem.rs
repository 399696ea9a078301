mod common;

use std::f64::consts::PI;

use blowup_lab::fem::{assemble_nonlinear_load, discrete_norms, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{adaptive_simpson, p1_eval, smallest_pencil_eigenvalue, sphere_area, unit_ball};

#[test]
fn sphere_area_matches_recurrence() {
    for n in 1..=6 {
        assert!((blowup_lab::fem::unit_sphere_area(n) - sphere_area(n)).abs() < 1e-12 * sphere_area(n));
    }
}

#[test]
fn first_dirichlet_eigenvalue_of_unit_ball() {
    let (_, ops) = unit_ball(3, 0.0, 4.0, 400);
    let lambda = smallest_pencil_eigenvalue(&ops.stiffness, &ops.weighted_mass);
    let err = (lambda - PI * PI).abs() / (PI * PI);
    assert!(err < 0.01, "lambda_1 = {lambda}, rel err {err:e}");
}

#[test]
fn eigenvalue_error_is_second_order() {
    let errors: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&m| {
            let (_, ops) = unit_ball(3, 0.0, 4.0, m);
            smallest_pencil_eigenvalue(&ops.stiffness, &ops.weighted_mass) - PI * PI
        })
        .collect();
    assert!(errors.iter().all(|e| *e > 0.0), "P1 eigenvalues approximate from above: {errors:?}");
    for pair in errors.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((3.5..=4.5).contains(&ratio), "refinement ratio {ratio} from {errors:?}");
    }
}

#[test]
fn dirichlet_energy_of_quadratic_bump() {
    let (mesh, ops) = unit_ball(3, 1.0, 4.0, 200);
    let u = StateVector::interpolate(&mesh, |r| 1.0 - r * r);
    let exact = 16.0 * PI / 5.0;
    let got = ops.stiffness.quad_form(&u);
    assert!((got - exact).abs() / exact < 5e-3, "{got} vs {exact}");
}

#[test]
fn weighted_mass_matches_adaptive_quadrature() {
    for s in [0.0, 1.0, 1.5, 2.0] {
        let (mesh, ops) = unit_ball(3, s, 4.0, 100);
        let u = StateVector::interpolate(&mesh, |r| (PI * r / 2.0).cos());
        let nodes = mesh.nodes();
        let mut exact = 0.0;
        for k in 0..mesh.elements() {
            let f = |r: f64| {
                let v = p1_eval(nodes, &u, r);
                v * v * r.powf(2.0 - s)
            };
            exact += adaptive_simpson(&f, nodes[k], nodes[k + 1], 1e-14);
        }
        exact *= 4.0 * PI;
        let got = ops.weighted_mass.quad_form(&u);
        assert!((got - exact).abs() <= 1e-8 * exact, "s={s}: {got} vs {exact}");
    }
}

#[test]
fn load_pairing_matches_adaptive_quadrature() {
    for p in [2.5, 3.0, 4.0, 5.0] {
        let (mesh, _) = unit_ball(3, 1.0, p, 200);
        let u = StateVector::interpolate(&mesh, |r| (1.0 - r * r) * (3.0 * r).cos() + 0.2);
        let load = assemble_nonlinear_load(&mesh, &u, p);
        let pairing: f64 = u.iter().zip(&load).map(|(a, b)| a * b).sum();
        let nodes = mesh.nodes();
        let mut exact = 0.0;
        for k in 0..mesh.elements() {
            let f = |r: f64| p1_eval(nodes, &u, r).abs().powf(p) * r * r;
            exact += adaptive_simpson(&f, nodes[k], nodes[k + 1], 1e-13);
        }
        exact *= 4.0 * PI;
        assert!((pairing - exact).abs() <= 1e-6 * exact, "p={p}: {pairing} vs {exact}");
    }
}

#[test]
fn hardy_and_weight_chains_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let meshes: Vec<_> = [0.0, 0.5, 1.0, 1.5, 2.0].iter().map(|&s| unit_ball(3, s, 4.0, 120)).collect();
    for _ in 0..50 {
        let dofs = meshes[0].1.dofs();
        let u: Vec<f64> = (0..dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = meshes[0].1.stiffness.quad_form(&u);
        let weighted: Vec<f64> = meshes.iter().map(|(_, ops)| ops.weighted_mass.quad_form(&u)).collect();
        for pair in weighted.windows(2) {
            assert!(pair[0] <= pair[1] * (1.0 + 1e-12), "weights on the unit ball grow with s: {weighted:?}");
        }
        assert!(weighted[4] <= 4.0 * grad * (1.0 + 1e-9), "Hardy: {} > 4·{}", weighted[4], grad);
    }
}

#[test]
fn sobolev_quotient_bounded_by_estimated_constant() {
    use blowup_lab::constants::{DiscreteConstants, EstimatorSettings};
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [3.0, 4.0] {
        let (mesh, ops) = unit_ball(3, 1.0, p, 100);
        let c = DiscreteConstants::estimate(&mesh, &ops, EstimatorSettings::default()).unwrap();
        for _ in 0..50 {
            let u = StateVector((0..mesh.dofs()).map(|_| rng.random_range(-1.0..1.0)).collect());
            let norms = discrete_norms(&mesh, &ops, &u, p);
            assert!(norms.norm_p <= c.cstar.value * norms.norm_grad * (1.0 + 1e-9));
        }
    }
}
