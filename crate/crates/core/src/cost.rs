//! Segment costs computed from recorded trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::Segment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostKind {
    Quadratic,
    /// Exponentially discounted stage costs, `e^{-alpha k}` at step `k`.
    RiskSensitive {
        alpha: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub kind: CostKind,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub horizon: usize,
    /// Lower clamp `J_m`; defaults to `1e-6 * trace(Q)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_floor: Option<f64>,
    /// Lipschitz constant of the cost in the controller, used only by the
    /// regret bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub warnings: Vec<String>,
}

/// Cholesky factorization succeeds iff the symmetric matrix is positive
/// definite.
fn is_positive_definite(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) {
                    return false;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

fn check_spd(name: &str, a: &[Vec<f64>]) -> Result<()> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("{name} must be a non-empty square matrix")));
    }
    for i in 0..n {
        for j in 0..i {
            let scale = a[i][j].abs().max(a[j][i].abs()).max(1.0);
            if (a[i][j] - a[j][i]).abs() > 1e-12 * scale {
                return Err(Error::invalid(format!("{name} is not symmetric")));
            }
        }
    }
    if !is_positive_definite(a) {
        return Err(Error::invalid(format!("{name} is not positive definite")));
    }
    Ok(())
}

fn quad_form(a: &[Vec<f64>], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(row, xi)| xi * row.iter().zip(x).map(|(c, xj)| c * xj).sum::<f64>()).sum()
}

impl CostSpec {
    pub fn quadratic(q: Vec<Vec<f64>>, r: Vec<Vec<f64>>, horizon: usize) -> Self {
        CostSpec { kind: CostKind::Quadratic, q, r, horizon, j_floor: None, lipschitz: None }
    }

    pub fn floor(&self) -> f64 {
        self.j_floor.unwrap_or_else(|| 1e-6 * (0..self.q.len()).map(|i| self.q[i][i]).sum::<f64>())
    }

    pub fn state_dim(&self) -> usize {
        self.q.len()
    }

    pub fn input_dim(&self) -> usize {
        self.r.len()
    }

    pub fn validate(&self) -> Result<Diagnostics> {
        check_spd("Q", &self.q)?;
        check_spd("R", &self.r)?;
        let floor = self.floor();
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::invalid(format!("cost floor must be positive, got {floor}")));
        }
        if let CostKind::RiskSensitive { alpha } = self.kind {
            if !(alpha > 0.0) {
                return Err(Error::invalid("risk-sensitive alpha must be positive"));
            }
        }
        let mut diag = Diagnostics::default();
        match self.lipschitz {
            None => diag.warnings.push("lipschitz estimate unset; regret bound term 2 unavailable".into()),
            Some(l) if !(l > 0.0) => return Err(Error::invalid("lipschitz estimate must be positive")),
            Some(_) => {}
        }
        let trace: f64 = (0..self.q.len()).map(|i| self.q[i][i]).sum();
        if floor > trace {
            diag.warnings.push(format!("cost floor {floor} exceeds trace(Q) = {trace}; most costs will clamp"));
        }
        Ok(diag)
    }

    /// Sum of stage costs over `k = 0..=K`; the terminal input is zero
    /// because the plant loop applies inputs only for `k < K`. The result is
    /// clamped below at the floor.
    pub fn segment_cost(&self, seg: &Segment) -> Result<f64> {
        let k = self.horizon;
        if seg.states.len() != k + 1 || seg.inputs.len() != k {
            return Err(Error::invalid(format!(
                "segment has {} states and {} inputs; horizon {k} expects {} and {k}",
                seg.states.len(),
                seg.inputs.len(),
                k + 1
            )));
        }
        let (n, m) = (self.state_dim(), self.input_dim());
        if seg.states.iter().any(|x| x.len() != n) || seg.inputs.iter().any(|u| u.len() != m) {
            return Err(Error::invalid("segment dimensions do not match Q and R"));
        }
        let total: f64 = (0..=k)
            .map(|step| {
                let mut stage = quad_form(&self.q, &seg.states[step]);
                if step < k {
                    stage += quad_form(&self.r, &seg.inputs[step]);
                }
                match self.kind {
                    CostKind::Quadratic => stage,
                    CostKind::RiskSensitive { alpha } => (-alpha * step as f64).exp() * stage,
                }
            })
            .sum();
        if total.is_nan() {
            return Err(Error::Numeric("segment cost is NaN".into()));
        }
        Ok(total.max(self.floor()))
    }
}
