use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state_box::StateBox;
use crate::error::{Error, Result};
use crate::seed;

/// How L2 integrals over a box are approximated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadratureSpec {
    /// Tensor Gauss-Legendre with the given node count per axis.
    GaussLegendre { nodes: usize },
    /// Uniform Monte Carlo with a fixed seed.
    MonteCarlo { points: usize, seed: u64 },
}

pub const DEFAULT_GL_NODES: usize = 12;
pub const DEFAULT_MC_POINTS: usize = 20_000;
/// Above this dimension the tensor grid is replaced by Monte Carlo.
pub const MAX_TENSOR_DIM: usize = 4;

impl QuadratureSpec {
    pub fn auto(n: usize) -> Self {
        if n <= MAX_TENSOR_DIM {
            QuadratureSpec::GaussLegendre { nodes: DEFAULT_GL_NODES }
        } else {
            QuadratureSpec::MonteCarlo { points: DEFAULT_MC_POINTS, seed: 0 }
        }
    }
}

/// Nodes and weights on `[-1, 1]`, by Newton iteration on the Legendre
/// three-term recurrence.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let nf = count as f64;
    for i in 0..count.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=count {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[count - 1 - i] = z;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    (nodes, weights)
}

/// A concrete set of weighted points in a box.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(spec: QuadratureSpec, state_box: &StateBox) -> Result<Self> {
        let dim = state_box.dim();
        if dim > 0 && state_box.volume() <= 0.0 {
            return Err(Error::invalid("cannot integrate over a box with empty interior"));
        }
        match spec {
            QuadratureSpec::GaussLegendre { nodes } => {
                if nodes < 2 {
                    return Err(Error::invalid("quadrature needs at least 2 nodes per axis"));
                }
                let total = nodes
                    .checked_pow(dim as u32)
                    .filter(|t| *t <= 50_000_000)
                    .ok_or_else(|| Error::invalid("tensor grid too large; use monte_carlo"))?;
                let (x1, w1) = gauss_legendre(nodes);
                let (lo, hw): (Vec<f64>, Vec<f64>) =
                    state_box.lower().iter().zip(state_box.upper()).map(|(l, u)| (*l, 0.5 * (u - l))).unzip();
                let mut points = Vec::with_capacity(total * dim);
                let mut weights = Vec::with_capacity(total);
                let mut idx = vec![0usize; dim];
                for _ in 0..total {
                    let mut w = 1.0;
                    for d in 0..dim {
                        points.push(lo[d] + hw[d] * (x1[idx[d]] + 1.0));
                        w *= w1[idx[d]] * hw[d];
                    }
                    weights.push(w);
                    for d in 0..dim {
                        idx[d] += 1;
                        if idx[d] < nodes {
                            break;
                        }
                        idx[d] = 0;
                    }
                }
                Ok(QuadratureRule { dim, points, weights })
            }
            QuadratureSpec::MonteCarlo { points: count, seed } => {
                if count == 0 {
                    return Err(Error::invalid("monte carlo quadrature needs points"));
                }
                let mut rng = seed::stream(seed, seed::labels::QUADRATURE, 0);
                let vol = state_box.volume();
                let mut points = Vec::with_capacity(count * dim);
                for _ in 0..count {
                    for d in 0..dim {
                        let (l, u) = (state_box.lower()[d], state_box.upper()[d]);
                        points.push(l + (u - l) * rng.random::<f64>());
                    }
                }
                Ok(QuadratureRule { dim, points, weights: vec![vol / count as f64; count] })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted sum of per-node values, in node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Approximates `integral over the box of f * g`.
pub fn l2_inner<F, G>(f: F, g: G, state_box: &StateBox, quad: QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    let rule = QuadratureRule::new(quad, state_box)?;
    let values: Vec<f64> = (0..rule.len()).map(|k| f(rule.point(k)) * g(rule.point(k))).collect();
    let v = rule.integrate(&values);
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite L2 inner product".into()));
    }
    Ok(v)
}

pub fn l2_norm<F: Fn(&[f64]) -> f64>(f: F, state_box: &StateBox, quad: QuadratureSpec) -> Result<f64> {
    let rule = QuadratureRule::new(quad, state_box)?;
    let values: Vec<f64> = (0..rule.len()).map(|k| f(rule.point(k)).powi(2)).collect();
    Ok(rule.integrate(&values).max(0.0).sqrt())
}
