#![allow(dead_code)]

use blowup_lab::fem::{build_mesh, DiscreteOperators, RadialMesh};
use blowup_lab::linsolve::SymTridiagonal;
use blowup_lab::model::ModelParams;

pub fn unit_ball(n: u32, s: f64, p: f64, elements: usize) -> (RadialMesh, DiscreteOperators) {
    let params = ModelParams::new(n, s, p, 1.0).unwrap();
    let mesh = build_mesh(params, elements, 2.0).unwrap();
    let ops = DiscreteOperators::assemble(&mesh);
    (mesh, ops)
}

/// Maximizer and maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (a.abs() + b.abs()).max(1e-300) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Number of eigenvalues of the pencil `(a, b)` below `lambda`, by the
/// inertia of `a − λb` (Sylvester).
pub fn sturm_count(a: &SymTridiagonal, b: &SymTridiagonal, lambda: f64) -> usize {
    let n = a.dim();
    let mut count = 0;
    let mut pivot = 0.0;
    for i in 0..n {
        let diag = a.diag()[i] - lambda * b.diag()[i];
        pivot = if i == 0 {
            diag
        } else {
            let off = a.off()[i - 1] - lambda * b.off()[i - 1];
            let prev = if pivot == 0.0 { f64::EPSILON * off.abs().max(1e-300) } else { pivot };
            diag - off * off / prev
        };
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of the pencil by bisection on the Sturm count.
pub fn smallest_pencil_eigenvalue(a: &SymTridiagonal, b: &SymTridiagonal) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while sturm_count(a, b, hi) == 0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

/// Piecewise-linear interpolant of nodal values (zero at the outer boundary).
pub fn p1_eval(nodes: &[f64], values: &[f64], r: f64) -> f64 {
    let k = nodes.partition_point(|&x| x <= r).clamp(1, nodes.len() - 1) - 1;
    let (a, b) = (nodes[k], nodes[k + 1]);
    let va = values.get(k).copied().unwrap_or(0.0);
    let vb = values.get(k + 1).copied().unwrap_or(0.0);
    va + (vb - va) * (r - a) / (b - a)
}

/// Surface area of the unit sphere in `R^n`, from `|S^{n+1}| = 2π|S^{n−1}|/n`.
pub fn sphere_area(n: u32) -> f64 {
    let mut area = if n.is_multiple_of(2) { 2.0 * std::f64::consts::PI } else { 2.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 1 };
    while k < n {
        area *= 2.0 * std::f64::consts::PI / (k as f64);
        k += 2;
    }
    area
}
