//! Gauss–Legendre rules on the reference element (0, 1) and composite
//! integration over a mesh.

use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 64;

/// Nodes in (0, 1), weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto (a, b).
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (a + h * x, h * w))
    }
}

/// n-point Gauss–Legendre rule, by Newton iteration on P_n.
pub fn gauss_rule(n_points: usize) -> Result<QuadratureRule> {
    if n_points == 0 || n_points > MAX_POINTS {
        return Err(Error::UnsupportedRule(n_points));
    }
    let n = n_points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // reference interval (-1, 1) -> (0, 1)
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Ok(QuadratureRule { nodes, weights })
}

/// A Gauss rule replicated on every element of a mesh.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    /// (element, node, weight)
    pub points: Vec<(usize, f64, f64)>,
    pub per_element: usize,
}

impl CompositeRule {
    pub fn new(breakpoints: &[f64], n_points: usize) -> Result<Self> {
        let rule = gauss_rule(n_points)?;
        let mut points = Vec::with_capacity((breakpoints.len() - 1) * n_points);
        for (e, w) in breakpoints.windows(2).enumerate() {
            points.extend(rule.mapped(w[0], w[1]).map(|(x, wt)| (e, x, wt)));
        }
        Ok(Self {
            points,
            per_element: n_points,
        })
    }

    pub fn element_points(&self, e: usize) -> &[(usize, f64, f64)] {
        &self.points[e * self.per_element..(e + 1) * self.per_element]
    }
}

/// Composite Gauss value of ∫ f over the mesh, summed element by element.
pub fn integrate(f: impl Fn(f64) -> f64, breakpoints: &[f64], n_points: usize) -> Result<f64> {
    let rule = gauss_rule(n_points)?;
    let mut total = 0.0;
    for w in breakpoints.windows(2) {
        let mut elem = 0.0;
        for (x, wt) in rule.mapped(w[0], w[1]) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Integration { node: x });
            }
            elem += wt * v;
        }
        total += elem;
    }
    Ok(total)
}
