use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximation::{compute_m_g, BoundReport, HullProjector, ProjectionResult};
use crate::error::Result;
use crate::exec::Execution;
use crate::function_space::{controller_eval, BasisSet, ControllerWeights, QuadratureSpec, SubsetIndex};
use crate::seed;

pub const RECURSION_TOL: f64 = 1e-9;
pub const ANCHOR_TOL: f64 = 1e-12;

/// Worst-case errors of the basis identities over random states in the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisCheck {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    /// Recursive versus closed-form evaluation, relative to `max(1, |value|)`.
    pub recursion_vs_closed: f64,
    /// Möbius-transform evaluation versus the closed form, same scale.
    pub fast_vs_closed: f64,
    /// Largest `|g_w(anchor)|` over nonempty `w`.
    pub anchor_annihilation: f64,
    /// `|sum_w g_w(x) - law(x)|`.
    pub reconstruction: f64,
    /// `|controller(x) - law(x)|` with uniform weights and gamma `2^n`.
    pub uniform_reproduction: f64,
    pub passed: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Checks the basis identities on `samples` uniform states drawn from the
/// basis' state box.
pub fn verify_basis(basis: &BasisSet, samples: usize, seed: u64) -> Result<BasisCheck> {
    let (n, m, count) = (basis.state_dim(), basis.input_dim(), basis.basis_count());
    let mut rng = seed::stream(seed, "verify", 0);
    let b = basis.state_box();
    let uniform_basis = basis.with_gamma(count as f64)?;
    let uniform = ControllerWeights::uniform(m, count);
    let mut check = BasisCheck {
        n,
        m,
        samples,
        recursion_vs_closed: 0.0,
        fast_vs_closed: 0.0,
        anchor_annihilation: 0.0,
        reconstruction: 0.0,
        uniform_reproduction: 0.0,
        passed: false,
    };
    let anchor_vals = basis.values(basis.anchor())?;
    for i in 0..m {
        for w in 1..count {
            check.anchor_annihilation = check.anchor_annihilation.max(anchor_vals.channel(i)[w].abs());
        }
    }
    for _ in 0..samples {
        let x: Vec<f64> =
            b.lower().iter().zip(b.upper()).map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
        let law = basis.law().eval(&x);
        let fast = basis.values(&x)?;
        let recursive = basis.values_recursive(&x)?;
        for i in 0..m {
            for w in 0..count {
                let s = SubsetIndex::from_bits_unchecked(w as u32);
                let closed = basis.eval_closed(i, s, &x)?;
                check.recursion_vs_closed = check.recursion_vs_closed.max(rel(recursive.channel(i)[w], closed));
                check.fast_vs_closed = check.fast_vs_closed.max(rel(fast.channel(i)[w], closed));
            }
            let total: f64 = fast.channel(i).iter().sum();
            check.reconstruction = check.reconstruction.max((total - law[i]).abs());
        }
        let u = controller_eval(&uniform_basis, &uniform, &x)?;
        for (ui, li) in u.iter().zip(&law) {
            check.uniform_reproduction = check.uniform_reproduction.max((ui - li).abs());
        }
    }
    check.passed = check.recursion_vs_closed <= RECURSION_TOL
        && check.fast_vs_closed <= RECURSION_TOL
        && check.anchor_annihilation <= ANCHOR_TOL
        && check.reconstruction <= RECURSION_TOL
        && check.uniform_reproduction <= RECURSION_TOL;
    Ok(check)
}

/// Outcome of projecting one known hull member back onto the hull.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxTrial {
    pub target_weights: ControllerWeights,
    pub report: BoundReport,
    /// Objective trace per channel.
    pub traces: Vec<Vec<f64>>,
}

/// Draws `targets` random hull members, projects each channel back onto
/// its hull and compares the residual with the hull bounds.
pub fn approx_bound_trials(
    basis: &BasisSet,
    quad: QuadratureSpec,
    targets: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    exec: Execution,
) -> Result<Vec<ApproxTrial>> {
    let (m, count) = (basis.input_dim(), basis.basis_count());
    let projectors = (0..m).map(|i| HullProjector::new(basis, i, quad, exec)).collect::<Result<Vec<_>>>()?;
    let m_g = compute_m_g(basis, quad, exec)?;
    let mut rng = seed::stream(seed, "approx", 0);
    let weights: Vec<ControllerWeights> = (0..targets)
        .map(|_| {
            let rows = (0..m).map(|_| crate::posterior::dirichlet_row(count, &mut rng)).collect();
            ControllerWeights::new(rows)
        })
        .collect::<Result<_>>()?;
    exec.map_slice(&weights, |target| {
        let mut norms = Vec::with_capacity(m);
        let mut projections: Vec<ProjectionResult> = Vec::with_capacity(m);
        for (i, p) in projectors.iter().enumerate() {
            let f = |x: &[f64]| controller_eval(basis, target, x).map(|u| u[i]).unwrap_or(f64::NAN);
            let rule = p.rule();
            let values: Vec<f64> = (0..rule.len()).map(|k| f(rule.point(k)).powi(2)).collect();
            norms.push(rule.integrate(&values).max(0.0).sqrt());
            projections.push(p.project(f, max_iters, tol)?);
        }
        let traces = projections.iter().map(|p| p.objective_trace.clone()).collect();
        let report = BoundReport::assemble(basis, m_g, norms, &projections, 1e-6, true)?;
        Ok(ApproxTrial { target_weights: target.clone(), report, traces })
    })
    .into_iter()
    .collect()
}
