//! Product quadrature over spherical caps: Gauss-Legendre in cos θ times a
//! uniform azimuthal rule, with an optional dedicated panel around the axis
//! for the narrow forward lobe.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::vector::Direction;

/// Largest Gauss-Legendre rule used on a single sub-panel.
const MAX_PANEL_NODES: usize = 64;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Node layout for direction integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes in cos θ per panel.
    pub polar_nodes: usize,
    /// Uniform azimuthal nodes; 1 suffices for integrands symmetric about the axis.
    pub azimuth_nodes: usize,
    /// Split off [0, boundary_angle] as its own panel.
    pub refine_forward: bool,
    /// radians
    pub boundary_angle: f64,
}

impl QuadratureSpec {
    /// 512 × 1, for integrands with rotational symmetry about the axis.
    pub fn axisymmetric() -> Self {
        QuadratureSpec {
            polar_nodes: 512,
            azimuth_nodes: 1,
            refine_forward: true,
            boundary_angle: 0.5,
        }
    }

    /// 256 × 64.
    pub fn general() -> Self {
        QuadratureSpec {
            polar_nodes: 256,
            azimuth_nodes: 64,
            refine_forward: true,
            boundary_angle: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.polar_nodes < 2 {
            return Err(Error::validation("polar_nodes", "must be at least 2"));
        }
        if self.azimuth_nodes < 1 {
            return Err(Error::validation("azimuth_nodes", "must be at least 1"));
        }
        if !(self.boundary_angle > 0.0 && self.boundary_angle < PI) {
            return Err(Error::validation("boundary_angle", "must lie in (0, π)"));
        }
        Ok(())
    }

    /// Same layout with both node counts doubled.
    pub fn doubled(self) -> Self {
        QuadratureSpec {
            polar_nodes: self.polar_nodes * 2,
            azimuth_nodes: if self.azimuth_nodes == 1 {
                1
            } else {
                self.azimuth_nodes * 2
            },
            ..self
        }
    }
}

/// Integration domain about the axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cap {
    FullSphere,
    /// half-angle in radians, clamped to [0, π]
    HalfAngle(f64),
}

impl Cap {
    /// 1 − cos α, computed without cancellation.
    fn axis_offset_limit(self) -> f64 {
        match self {
            Cap::FullSphere => 2.0,
            Cap::HalfAngle(a) => {
                let a = a.clamp(0.0, PI);
                let s = (a / 2.0).sin();
                2.0 * s * s
            }
        }
    }
}

/// Precomputed quadrature nodes: directions with their solid-angle weights.
#[derive(Debug, Clone)]
pub struct DirectionGrid {
    nodes: Vec<(Direction, f64)>,
}

impl DirectionGrid {
    pub fn new(axis: Direction, quad: &QuadratureSpec, cap: Cap) -> Self {
        let t_end = cap.axis_offset_limit();
        let mut polar: Vec<(f64, f64)> = Vec::new();
        if t_end > 0.0 {
            let t_boundary = Cap::HalfAngle(quad.boundary_angle).axis_offset_limit();
            if quad.refine_forward && t_boundary < t_end {
                push_panel(&mut polar, 0.0, t_boundary, quad.polar_nodes);
                push_panel(&mut polar, t_boundary, t_end, quad.polar_nodes);
            } else {
                push_panel(&mut polar, 0.0, t_end, quad.polar_nodes);
            }
        }
        let m = quad.azimuth_nodes.max(1);
        let dphi = 2.0 * PI / m as f64;
        let mut nodes = Vec::with_capacity(polar.len() * m);
        for &(t, wt) in &polar {
            for j in 0..m {
                let phi = dphi * (j as f64 + 0.5);
                nodes.push((Direction::from_axis_offset(axis, t, phi), wt * dphi));
            }
        }
        DirectionGrid { nodes }
    }

    pub fn nodes(&self) -> &[(Direction, f64)] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_i f(k_i), node values evaluated under `exec`, summed in node order.
    pub fn integrate<F>(&self, exec: Execution, f: F) -> f64
    where
        F: Fn(Direction) -> f64 + Sync + Send,
    {
        exec.map_slice(&self.nodes, |&(d, w)| w * f(d))
            .into_iter()
            .sum()
    }

    /// Several integrands sharing one evaluation per node.
    pub fn integrate_many<const K: usize, F>(&self, exec: Execution, f: F) -> [f64; K]
    where
        F: Fn(Direction) -> [f64; K] + Sync + Send,
    {
        let vals = exec.map_slice(&self.nodes, |&(d, w)| f(d).map(|v| v * w));
        let mut acc = [0.0; K];
        for v in vals {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        acc
    }
}

/// Composite Gauss-Legendre on [a, b] in the variable t = 1 − cos θ.
fn push_panel(out: &mut Vec<(f64, f64)>, a: f64, b: f64, nodes: usize) {
    let panels = nodes.div_ceil(MAX_PANEL_NODES).max(1);
    let per = nodes.div_ceil(panels).max(2);
    let (x, w) = gauss_legendre(per);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let half = h / 2.0;
        let mid = lo + half;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((mid + half * xi, half * wi));
        }
    }
}

/// ∫ f dΩ over a cap about `axis` (or the whole sphere).
pub fn integrate_direction_function<F>(f: F, axis: Direction, quad: &QuadratureSpec, cap: Cap) -> f64
where
    F: Fn(Direction) -> f64 + Sync + Send,
{
    DirectionGrid::new(axis, quad, cap).integrate(Execution::default(), f)
}
