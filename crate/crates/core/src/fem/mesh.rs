use serde::Serialize;
use thiserror::Error;

use super::quadrature::{unit_sphere_area, GaussLegendre};
use crate::model::{ModelParams, ParamsError};

pub const DEFAULT_QUAD_ORDER: usize = 6;
pub const DEFAULT_GRADING: f64 = 2.0;
const MIN_ELEMENTS: usize = 4;
const MIN_QUAD_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("mesh needs at least {MIN_ELEMENTS} elements, got {0}")]
    TooFewElements(usize),
    #[error("mesh grading must be positive and finite, got {0}")]
    Grading(f64),
    #[error("quadrature order must be at least {MIN_QUAD_ORDER}, got {0}")]
    QuadOrder(usize),
}

/// Graded 1-D mesh of `[0, R]` with a Gauss–Legendre rule per element.
#[derive(Debug, Clone)]
pub struct RadialMesh {
    params: ModelParams,
    nodes: Vec<f64>,
    grading: f64,
    rule: GaussLegendre,
    sphere_area: f64,
    /// `ω_{n−1}·w_q·h_e/2·r^{n−1}` at every quadrature point.
    qp_volume_weight: Vec<f64>,
    /// Left and right hat-function values at the reference quadrature points.
    shape: Vec<(f64, f64)>,
}

/// Nodes `r_k = R·(k/M)^grading`, `k = 0..=M`, with the default quadrature order.
pub fn build_mesh(params: ModelParams, elements: usize, grading: f64) -> Result<RadialMesh, MeshError> {
    RadialMesh::new(params, elements, grading, DEFAULT_QUAD_ORDER)
}

impl RadialMesh {
    pub fn new(
        params: ModelParams,
        elements: usize,
        grading: f64,
        quad_order: usize,
    ) -> Result<Self, MeshError> {
        params.validate()?;
        if elements < MIN_ELEMENTS {
            return Err(MeshError::TooFewElements(elements));
        }
        if !(grading > 0.0 && grading.is_finite()) {
            return Err(MeshError::Grading(grading));
        }
        if quad_order < MIN_QUAD_ORDER {
            return Err(MeshError::QuadOrder(quad_order));
        }
        let m = elements as f64;
        let mut nodes: Vec<f64> = (0..=elements)
            .map(|k| params.radius * (k as f64 / m).powf(grading))
            .collect();
        nodes[0] = 0.0;
        nodes[elements] = params.radius;

        let rule = GaussLegendre::new(quad_order);
        let sphere_area = unit_sphere_area(params.n);
        let shape: Vec<(f64, f64)> = rule
            .points
            .iter()
            .map(|xi| (0.5 * (1.0 - xi), 0.5 * (1.0 + xi)))
            .collect();
        let mut qp_volume_weight = Vec::with_capacity(elements * quad_order);
        let volume_exponent = params.n as i32 - 1;
        for e in 0..elements {
            let (a, b) = (nodes[e], nodes[e + 1]);
            let half = 0.5 * (b - a);
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let r = a + half * (1.0 + xi);
                qp_volume_weight.push(sphere_area * w * half * r.powi(volume_exponent));
            }
        }
        Ok(Self {
            params,
            nodes,
            grading,
            rule,
            sphere_area,
            qp_volume_weight,
            shape,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of unconstrained nodes (all but the boundary node).
    pub fn dofs(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn quad_order(&self) -> usize {
        self.rule.order()
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    pub(crate) fn qp_volume_weight(&self) -> &[f64] {
        &self.qp_volume_weight
    }

    pub(crate) fn shape(&self) -> &[(f64, f64)] {
        &self.shape
    }

    /// Summary used in report provenance.
    pub fn describe(&self) -> MeshSummary {
        MeshSummary {
            elements: self.elements(),
            grading: self.grading,
            quad_order: self.quad_order(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct MeshSummary {
    pub elements: usize,
    pub grading: f64,
    pub quad_order: usize,
}
