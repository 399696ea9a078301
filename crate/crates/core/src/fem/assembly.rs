use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use super::mesh::RadialMesh;
use crate::linsolve::SymTridiagonal;

/// Nodal values of `u_h` on the unconstrained nodes `r₀ … r_{M−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(dofs: usize) -> Self {
        Self(vec![0.0; dofs])
    }

    /// Nodal interpolant of `f` on the mesh's unconstrained nodes.
    pub fn interpolate(mesh: &RadialMesh, f: impl Fn(f64) -> f64) -> Self {
        Self(mesh.nodes()[..mesh.dofs()].iter().map(|&r| f(r)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Stiffness over all `M + 1` nodes, `K_ij = ω_{n−1}∫ φ_i′φ_j′ r^{n−1} dr`.
pub fn assemble_stiffness(mesh: &RadialMesh) -> SymTridiagonal {
    let nodes = mesh.nodes();
    let volume_exponent = mesh.params().n as i32 - 1;
    let mut k = SymTridiagonal::zeros(nodes.len());
    for e in 0..mesh.elements() {
        let (a, b) = (nodes[e], nodes[e + 1]);
        let h = b - a;
        let integral = mesh.rule().integrate(a, b, |r| r.powi(volume_exponent));
        let c = mesh.sphere_area() * integral / (h * h);
        k.add_to_diag(e, c);
        k.add_to_diag(e + 1, c);
        k.add_to_off(e, -c);
    }
    k
}

/// Weighted mass over all `M + 1` nodes, `(M_s)_ij = ω_{n−1}∫ φ_iφ_j r^{n−1−s} dr`.
pub fn assemble_weighted_mass(mesh: &RadialMesh, s: f64) -> SymTridiagonal {
    let nodes = mesh.nodes();
    let exponent = mesh.params().n as f64 - 1.0 - s;
    let rule = mesh.rule();
    let mut m = SymTridiagonal::zeros(nodes.len());
    for e in 0..mesh.elements() {
        let (a, b) = (nodes[e], nodes[e + 1]);
        let half = 0.5 * (b - a);
        let (mut ll, mut lr, mut rr) = (0.0, 0.0, 0.0);
        for (q, (xi, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let r = a + half * (1.0 + xi);
            let weight = w * half * radial_weight(r, exponent);
            let (pl, pr) = mesh.shape()[q];
            ll += weight * pl * pl;
            lr += weight * pl * pr;
            rr += weight * pr * pr;
        }
        let area = mesh.sphere_area();
        m.add_to_diag(e, area * ll);
        m.add_to_diag(e + 1, area * rr);
        m.add_to_off(e, area * lr);
    }
    m
}

fn radial_weight(r: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else if exponent.fract() == 0.0 {
        r.powi(exponent as i32)
    } else {
        r.powf(exponent)
    }
}

/// `F(u)_i = ω_{n−1}∫ |u_h|^{p−2}u_h φ_i r^{n−1} dr` on the unconstrained nodes.
pub fn assemble_nonlinear_load(mesh: &RadialMesh, u: &StateVector, p: f64) -> Vec<f64> {
    load_and_pnorm(mesh, u, p).0
}

/// Nonlinear load together with `‖u_h‖_p^p`, both from the same quadrature so that
/// `F` is exactly the gradient of `‖u_h‖_p^p/p`.
pub(crate) fn load_and_pnorm(mesh: &RadialMesh, u: &[f64], p: f64) -> (Vec<f64>, f64) {
    assert_eq!(u.len(), mesh.dofs(), "state dimension");
    let a = p - 2.0;
    if a.fract() == 0.0 && (0.0..=8.0).contains(&a) {
        match a as u32 {
            0 => load_kernel(mesh, u, |_| 1.0),
            1 => load_kernel(mesh, u, |x| x),
            2 => load_kernel(mesh, u, |x| x * x),
            3 => load_kernel(mesh, u, |x| x * x * x),
            k => load_kernel(mesh, u, |x| int_pow(x, k)),
        }
    } else {
        load_kernel(mesh, u, |x| if x == 0.0 { 0.0 } else { x.powf(a) })
    }
}

#[inline(always)]
fn load_kernel(mesh: &RadialMesh, u: &[f64], power: impl Fn(f64) -> f64) -> (Vec<f64>, f64) {
    let dofs = mesh.dofs();
    let q = mesh.quad_order();
    let weights = mesh.qp_volume_weight();
    let shape = mesh.shape();
    let mut load = vec![0.0; dofs];
    let mut pnorm = 0.0;
    for (e, w_e) in weights.chunks_exact(q).enumerate() {
        let left = u[e];
        let right = if e + 1 < dofs { u[e + 1] } else { 0.0 };
        let (mut fl, mut fr) = (0.0, 0.0);
        for (&(pl, pr), &w) in shape.iter().zip(w_e) {
            let uh = left * pl + right * pr;
            let g = w * power(uh.abs()) * uh;
            fl += g * pl;
            fr += g * pr;
            pnorm += g * uh;
        }
        load[e] += fl;
        if e + 1 < dofs {
            load[e + 1] += fr;
        }
    }
    (load, pnorm)
}

/// `‖u_h‖_p^p` by per-element quadrature.
pub(crate) fn pnorm_pow(mesh: &RadialMesh, u: &[f64], p: f64) -> f64 {
    let dofs = mesh.dofs();
    let q = mesh.quad_order();
    let weights = mesh.qp_volume_weight();
    let integer = p.fract() == 0.0 && (0.0..=64.0).contains(&p);
    let mut acc = 0.0;
    for (e, w_e) in weights.chunks_exact(q).enumerate() {
        let left = u[e];
        let right = if e + 1 < dofs { u[e + 1] } else { 0.0 };
        for (&(pl, pr), &w) in mesh.shape().iter().zip(w_e) {
            let x = (left * pl + right * pr).abs();
            acc += w * if integer { int_pow(x, p as u32) } else { x.powf(p) };
        }
    }
    acc
}

#[inline(always)]
fn int_pow(mut x: f64, mut k: u32) -> f64 {
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= x;
        }
        x *= x;
        k >>= 1;
    }
    acc
}

/// Dirichlet-eliminated operators on the unconstrained nodes.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub stiffness: SymTridiagonal,
    pub weighted_mass: SymTridiagonal,
    pub mass: SymTridiagonal,
    pub s: f64,
}

impl DiscreteOperators {
    pub fn assemble(mesh: &RadialMesh) -> Self {
        let dofs = mesh.dofs();
        let s = mesh.params().s;
        let mass_full = assemble_weighted_mass(mesh, 0.0);
        let weighted_full = if s == 0.0 {
            mass_full.clone()
        } else {
            assemble_weighted_mass(mesh, s)
        };
        Self {
            stiffness: assemble_stiffness(mesh).leading_block(dofs),
            weighted_mass: weighted_full.leading_block(dofs),
            mass: mass_full.leading_block(dofs),
            s,
        }
    }

    pub fn dofs(&self) -> usize {
        self.stiffness.dim()
    }
}

/// `(‖∇u_h‖₂, ‖u_h‖_p, ∫u_h²/|x|^s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteNorms {
    pub norm_grad: f64,
    pub norm_p: f64,
    pub weighted_l2: f64,
}

pub fn discrete_norms(
    mesh: &RadialMesh,
    ops: &DiscreteOperators,
    u: &StateVector,
    p: f64,
) -> DiscreteNorms {
    DiscreteNorms {
        norm_grad: ops.stiffness.quad_form(u).max(0.0).sqrt(),
        norm_p: pnorm_pow(mesh, u, p).powf(1.0 / p),
        weighted_l2: ops.weighted_mass.quad_form(u).max(0.0),
    }
}
