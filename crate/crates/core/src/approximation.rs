//! L2 projection onto a convex hull of scaled basis functions, and the
//! approximation-error bounds it is checked against.
//!
//! The projection minimizes `|sum_w alpha(w) gamma g_w - target|^2` over the
//! `2^n`-simplex with away-step Frank-Wolfe and exact line search. Plain
//! Frank-Wolfe only converges sublinearly when the optimum sits on a face of
//! the simplex; away steps restore linear convergence on polytopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::function_space::{BasisSet, ControllerWeights, QuadratureRule, QuadratureSpec};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Relative slack below which a slightly negative radicand is read as zero.
const RADICAND_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    /// Single-row weights for the projected channel.
    pub weights: ControllerWeights,
    pub residual: f64,
    pub iterations: usize,
    pub duality_gap: f64,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// Precomputed Gram system for one channel of a basis under a quadrature rule.
#[derive(Clone, Debug)]
pub struct HullProjector {
    rule: QuadratureRule,
    /// `nodes x count`, scaled by gamma.
    node_values: Vec<Vec<f64>>,
    gram: Vec<f64>,
    count: usize,
}

impl HullProjector {
    pub fn new(basis: &BasisSet, channel: usize, quad: QuadratureSpec, exec: Execution) -> Result<Self> {
        if channel >= basis.input_dim() {
            return Err(Error::invalid(format!("channel {channel} out of range")));
        }
        let rule = QuadratureRule::new(quad, basis.state_box())?;
        let gamma = basis.gamma();
        let node_values: Vec<Vec<f64>> = exec.map_range(rule.len(), |k| {
            let v = basis.values_unchecked(rule.point(k));
            v.channel(channel).iter().map(|g| gamma * g).collect()
        });
        if node_values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("basis is not finite at a quadrature node".into()));
        }
        let count = basis.basis_count();
        let weights = rule.weights();
        let upper: Vec<f64> = exec.map_range(count * count, |idx| {
            let (a, b) = (idx / count, idx % count);
            if b < a {
                return 0.0;
            }
            node_values.iter().zip(weights).map(|(row, w)| w * row[a] * row[b]).sum()
        });
        let mut gram = upper;
        for a in 0..count {
            for b in 0..a {
                gram[a * count + b] = gram[b * count + a];
            }
        }
        Ok(HullProjector { rule, node_values, gram, count })
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// L2 norm of each scaled basis function.
    pub fn vertex_norms(&self) -> Vec<f64> {
        (0..self.count).map(|w| self.gram[w * self.count + w].max(0.0).sqrt()).collect()
    }

    pub fn project<F>(&self, target: F, max_iters: usize, tol: f64) -> Result<ProjectionResult>
    where
        F: Fn(&[f64]) -> f64,
    {
        if max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        let n = self.count;
        let t: Vec<f64> = (0..self.rule.len()).map(|k| target(self.rule.point(k))).collect();
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("target is not finite at a quadrature node".into()));
        }
        let wts = self.rule.weights();
        let lin: Vec<f64> = (0..n)
            .map(|w| self.node_values.iter().zip(&t).zip(wts).map(|((row, tk), wk)| wk * row[w] * tk).sum())
            .collect();
        let constant: f64 = t.iter().zip(wts).map(|(tk, wk)| wk * tk * tk).sum();
        let g = |a: usize, b: usize| self.gram[a * n + b];
        let objective = |alpha: &[f64], g_alpha: &[f64]| {
            let quad: f64 = alpha.iter().zip(g_alpha).map(|(a, ga)| a * ga).sum();
            let cross: f64 = alpha.iter().zip(&lin).map(|(a, l)| a * l).sum();
            quad - 2.0 * cross + constant
        };

        // Start from the best single vertex.
        let start = (0..n)
            .map(|w| (w, g(w, w) - 2.0 * lin[w]))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0;
        let mut alpha = vec![0.0; n];
        alpha[start] = 1.0;

        let mut trace = Vec::new();
        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        let mut g_alpha = vec![0.0; n];
        while iterations < max_iters {
            for (a, ga) in g_alpha.iter_mut().enumerate() {
                *ga = (0..n).map(|b| g(a, b) * alpha[b]).sum();
            }
            trace.push(objective(&alpha, &g_alpha));
            let grad: Vec<f64> = g_alpha.iter().zip(&lin).map(|(ga, l)| 2.0 * (ga - l)).collect();
            let grad_alpha: f64 = grad.iter().zip(&alpha).map(|(d, a)| d * a).sum();
            let s = argmin(&grad);
            gap = grad_alpha - grad[s];
            if gap <= tol {
                converged = true;
                break;
            }
            iterations += 1;
            let away = (0..n)
                .filter(|&w| alpha[w] > 0.0)
                .fold(None, |best: Option<usize>, w| match best {
                    Some(b) if grad[b] >= grad[w] => Some(b),
                    _ => Some(w),
                })
                .expect("iterate has support");
            let away_gap = grad[away] - grad_alpha;
            let alpha_ga: f64 = alpha.iter().zip(&g_alpha).map(|(a, ga)| a * ga).sum();

            if gap >= away_gap || alpha[away] >= 1.0 {
                // toward vertex s: d = e_s - alpha
                let curvature = g(s, s) - 2.0 * g_alpha[s] + alpha_ga;
                let step = line_step(gap, curvature, 1.0);
                for a in alpha.iter_mut() {
                    *a *= 1.0 - step;
                }
                alpha[s] += step;
            } else {
                // away from vertex v: d = alpha - e_v
                let max_step = alpha[away] / (1.0 - alpha[away]);
                let curvature = alpha_ga - 2.0 * g_alpha[away] + g(away, away);
                let step = line_step(away_gap, curvature, max_step);
                for a in alpha.iter_mut() {
                    *a *= 1.0 + step;
                }
                alpha[away] -= step;
                if step >= max_step {
                    alpha[away] = 0.0;
                }
            }
            for a in alpha.iter_mut() {
                if *a < 0.0 {
                    *a = 0.0;
                }
            }
        }
        if !converged {
            for (a, ga) in g_alpha.iter_mut().enumerate() {
                *ga = (0..n).map(|b| g(a, b) * alpha[b]).sum();
            }
            trace.push(objective(&alpha, &g_alpha));
        }
        let total: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= total);
        let last = *trace.last().expect("trace has at least one entry");
        if !last.is_finite() {
            return Err(Error::Numeric("projection objective is not finite".into()));
        }
        Ok(ProjectionResult {
            weights: ControllerWeights::new(vec![alpha])?,
            residual: last.max(0.0).sqrt(),
            iterations,
            duality_gap: gap,
            converged,
            objective_trace: trace,
        })
    }
}

/// Exact minimizer of `f(x + step d)` for a quadratic with directional
/// derivative `-decrease` and second derivative `2 curvature`.
fn line_step(decrease: f64, curvature: f64, max_step: f64) -> f64 {
    if curvature <= 0.0 {
        return max_step;
    }
    (decrease / (2.0 * curvature)).clamp(0.0, max_step)
}

fn argmin(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &x)| if x < best.1 { (i, x) } else { best }).0
}

/// Projects `target` onto the hull of channel `channel`.
pub fn project_to_hull<F>(
    target: F,
    basis: &BasisSet,
    channel: usize,
    quad: QuadratureSpec,
    max_iters: usize,
    tol: f64,
) -> Result<ProjectionResult>
where
    F: Fn(&[f64]) -> f64,
{
    HullProjector::new(basis, channel, quad, Execution::default())?.project(target, max_iters, tol)
}

fn checked_sqrt(radicand: f64, scale: f64) -> Result<f64> {
    if radicand.is_nan() {
        return Err(Error::invalid("bound radicand is NaN"));
    }
    if radicand < 0.0 {
        if radicand >= -RADICAND_SLACK * scale.max(1.0) {
            return Ok(0.0);
        }
        return Err(Error::invalid(format!("negative radicand {radicand}: a target norm exceeds M_g")));
    }
    Ok(radicand.sqrt())
}

/// Per-channel hull approximation bound `sqrt((M_g^2 - |g*|^2) / 2^n)`.
pub fn channel_bound(m_g: f64, target_norm: f64, n: usize) -> Result<f64> {
    if !(m_g >= 0.0) || !(target_norm >= 0.0) {
        return Err(Error::invalid("norms must be nonnegative"));
    }
    let scale = m_g * m_g;
    checked_sqrt((scale - target_norm * target_norm) / (1u64 << n) as f64, scale)
}

/// Vector bound `sqrt((m M_g^2 - sum_i |g*_i|^2) / 2^n)`.
pub fn controller_bound(m: usize, m_g: f64, channel_norms: &[f64], n: usize) -> Result<f64> {
    if channel_norms.len() != m {
        return Err(Error::invalid(format!("expected {m} channel norms, got {}", channel_norms.len())));
    }
    if !(m_g >= 0.0) || channel_norms.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("norms must be nonnegative"));
    }
    let scale = m as f64 * m_g * m_g;
    let sum: f64 = channel_norms.iter().map(|v| v * v).sum();
    checked_sqrt((scale - sum) / (1u64 << n) as f64, scale)
}

/// Largest L2 norm of any scaled basis function, over all channels. Every
/// hull member has norm at most this value.
pub fn compute_m_g(basis: &BasisSet, quad: QuadratureSpec, exec: Execution) -> Result<f64> {
    let rule = QuadratureRule::new(quad, basis.state_box())?;
    let gamma = basis.gamma();
    let per_node = exec.map_range(rule.len(), |k| basis.values_unchecked(rule.point(k)));
    let (m, count) = (basis.input_dim(), basis.basis_count());
    let mut best = 0.0f64;
    for i in 0..m {
        for w in 0..count {
            let sq: f64 =
                per_node.iter().zip(rule.weights()).map(|(v, wt)| wt * (gamma * v.channel(i)[w]).powi(2)).sum();
            if !sq.is_finite() {
                return Err(Error::Numeric("basis norm is not finite".into()));
            }
            best = best.max(sq.max(0.0).sqrt());
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub m_g: f64,
    pub target_norms: Vec<f64>,
    pub channel_errors: Vec<f64>,
    pub channel_bounds: Vec<f64>,
    /// Vector L2 error, `sqrt(sum_i error_i^2)`.
    pub achieved_error: f64,
    /// Worst per-channel bound.
    pub channel_bound: f64,
    pub controller_bound: f64,
    pub tolerance: f64,
    /// Whether the target was built from known hull weights. The bounds
    /// presume a target in the closure of the hull.
    pub certified_in_hull: bool,
    pub satisfied: bool,
    pub iterations: Vec<usize>,
}

impl BoundReport {
    pub fn assemble(
        basis: &BasisSet,
        m_g: f64,
        target_norms: Vec<f64>,
        projections: &[ProjectionResult],
        tolerance: f64,
        certified_in_hull: bool,
    ) -> Result<Self> {
        let (n, m) = (basis.state_dim(), basis.input_dim());
        if projections.len() != m || target_norms.len() != m {
            return Err(Error::invalid("one projection and one norm per channel required"));
        }
        let channel_errors: Vec<f64> = projections.iter().map(|p| p.residual).collect();
        let channel_bounds = target_norms.iter().map(|t| channel_bound(m_g, *t, n)).collect::<Result<Vec<_>>>()?;
        let achieved_error = channel_errors.iter().map(|e| e * e).sum::<f64>().sqrt();
        let joint = controller_bound(m, m_g, &target_norms, n)?;
        let satisfied = channel_errors.iter().zip(&channel_bounds).all(|(e, b)| *e <= b + tolerance)
            && achieved_error <= joint + tolerance;
        Ok(BoundReport {
            n,
            m,
            m_g,
            target_norms,
            channel_bound: channel_bounds.iter().cloned().fold(0.0, f64::max),
            channel_errors,
            channel_bounds,
            achieved_error,
            controller_bound: joint,
            tolerance,
            certified_in_hull,
            satisfied,
            iterations: projections.iter().map(|p| p.iterations).collect(),
        })
    }
}
