use serde::{Deserialize, Serialize};

use super::subset::{mask_unchecked, SubsetIndex};
use crate::error::{Error, Result};

/// Axis-aligned box of states. Boxes are closed under coordinate mixing:
/// for any two members, every vertex of the box they span is a member too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct StateBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for StateBox {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        StateBox::new(raw.lower, raw.upper)
    }
}

impl From<StateBox> for RawBox {
    fn from(b: StateBox) -> Self {
        RawBox { lower: b.lower, upper: b.upper }
    }
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("box bounds have different lengths"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid(format!("bad bounds [{lo}, {hi}] on coordinate {i}")));
            }
        }
        Ok(StateBox { lower, upper })
    }

    /// The cube `[-r, r]^n`.
    pub fn symmetric(n: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; n], vec![radius; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }
}

/// Smallest box containing every sample. With `symmetric` set, returns the
/// cube `{x : |x|_inf <= max |sample|_inf}` instead.
pub fn box_hull(samples: &[Vec<f64>], symmetric: bool) -> Result<StateBox> {
    let first = samples.first().ok_or_else(|| Error::invalid("box_hull needs at least one sample"))?;
    let n = first.len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("samples have inconsistent lengths"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples contain non-finite values"));
    }
    if symmetric {
        let r = samples.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
        return StateBox::symmetric(n, r);
    }
    let mut lower = first.clone();
    let mut upper = first.clone();
    for s in &samples[1..] {
        for i in 0..n {
            lower[i] = lower[i].min(s[i]);
            upper[i] = upper[i].max(s[i]);
        }
    }
    StateBox::new(lower, upper)
}

/// Membership of `(x, anchor)_w` in the box.
pub fn masked_stays_in_box(b: &StateBox, x: &[f64], anchor: &[f64], w: SubsetIndex) -> bool {
    if x.len() != b.dim() || anchor.len() != b.dim() || (w.bits() as u64) >> b.dim() != 0 {
        return false;
    }
    b.contains(&mask_unchecked(x, anchor, w))
}
