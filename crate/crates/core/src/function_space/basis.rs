use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::law::InitialLaw;
use super::state_box::StateBox;
use super::subset::{check_dim, mask_unchecked, SubsetIndex};
use crate::error::{Error, Result};

/// The `2^n` basis functions per output channel carved out of an initial law
/// around an anchor point, scaled by `gamma`.
#[derive(Clone)]
pub struct BasisSet {
    law: Arc<dyn InitialLaw>,
    anchor: Vec<f64>,
    gamma: f64,
    state_box: StateBox,
}

impl fmt::Debug for BasisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSet")
            .field("law", &self.law)
            .field("anchor", &self.anchor)
            .field("gamma", &self.gamma)
            .field("state_box", &self.state_box)
            .finish()
    }
}

impl BasisSet {
    /// `gamma = None` selects `2^n`, for which uniform weights reproduce the
    /// initial law exactly.
    pub fn new(law: Arc<dyn InitialLaw>, anchor: Vec<f64>, gamma: Option<f64>, state_box: StateBox) -> Result<Self> {
        let n = law.state_dim();
        check_dim(n)?;
        if law.input_dim() == 0 {
            return Err(Error::invalid("initial law has no output channels"));
        }
        if anchor.len() != n || state_box.dim() != n {
            return Err(Error::invalid(format!(
                "anchor ({}) and box ({}) must match the law's state dimension {n}",
                anchor.len(),
                state_box.dim()
            )));
        }
        if !state_box.contains(&anchor) {
            return Err(Error::invalid("anchor lies outside the state box"));
        }
        let gamma = gamma.unwrap_or((1u64 << n) as f64);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(BasisSet { law, anchor, gamma, state_box })
    }

    pub fn state_dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn input_dim(&self) -> usize {
        self.law.input_dim()
    }

    pub fn basis_count(&self) -> usize {
        1 << self.state_dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn state_box(&self) -> &StateBox {
        &self.state_box
    }

    pub fn law(&self) -> &Arc<dyn InitialLaw> {
        &self.law
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.law.clone(), self.anchor.clone(), Some(gamma), self.state_box.clone())
    }

    fn check_args(&self, channel: usize, w: SubsetIndex, x: &[f64]) -> Result<()> {
        if channel >= self.input_dim() {
            return Err(Error::invalid(format!("channel {channel} out of range")));
        }
        if x.len() != self.state_dim() {
            return Err(Error::invalid("state has the wrong dimension"));
        }
        if w.index() >= self.basis_count() {
            return Err(Error::invalid("subset out of range"));
        }
        Ok(())
    }

    fn law_at(&self, x: &[f64], w: SubsetIndex) -> Vec<f64> {
        self.law.eval(&mask_unchecked(x, &self.anchor, w))
    }

    /// Unscaled basis value by the defining recursion: the empty set yields
    /// the law at the anchor, any other `w` yields the law at `(x, anchor)_w`
    /// minus the values over all proper subsets. Values are memoized over the
    /// subsets of `w`.
    pub fn eval_recursive(&self, channel: usize, w: SubsetIndex, x: &[f64]) -> Result<f64> {
        self.check_args(channel, w, x)?;
        let mut memo = vec![None; w.index() + 1];
        Ok(self.recurse(channel, w, x, &mut memo))
    }

    fn recurse(&self, channel: usize, w: SubsetIndex, x: &[f64], memo: &mut [Option<f64>]) -> f64 {
        if let Some(v) = memo[w.index()] {
            return v;
        }
        let v = if w.is_empty() {
            self.law.eval(&self.anchor)[channel]
        } else {
            let lower: f64 = w.proper_subsets().map(|s| self.recurse(channel, s, x, memo)).sum();
            self.law_at(x, w)[channel] - lower
        };
        memo[w.index()] = Some(v);
        v
    }

    /// Unscaled basis value by the alternating inclusion-exclusion sum over
    /// the subsets of `w`.
    pub fn eval_closed(&self, channel: usize, w: SubsetIndex, x: &[f64]) -> Result<f64> {
        self.check_args(channel, w, x)?;
        let total = w.len();
        Ok(w.subsets()
            .map(|s| {
                let v = self.law_at(x, s)[channel];
                if (total - s.len()).is_multiple_of(2) {
                    v
                } else {
                    -v
                }
            })
            .sum())
    }

    /// All unscaled basis values at `x` via the recursion, memoized over the
    /// full subset lattice (`2^n` law evaluations). Row-major, one row of
    /// `2^n` entries per channel.
    pub fn values_recursive(&self, x: &[f64]) -> Result<BasisValues> {
        self.check_args(0, SubsetIndex::EMPTY, x)?;
        let (m, count) = (self.input_dim(), self.basis_count());
        let at_masks = self.masked_law_values(x);
        let mut values = vec![0.0; m * count];
        // Every proper subset of w has a smaller bitmask, so increasing order
        // visits dependencies first.
        for bits in 0..count as u32 {
            let w = SubsetIndex::from_bits_unchecked(bits);
            for i in 0..m {
                let lower: f64 = w.proper_subsets().map(|s| values[i * count + s.index()]).sum();
                values[i * count + w.index()] = at_masks[w.index()][i] - lower;
            }
        }
        Ok(BasisValues { m, count, values })
    }

    /// All unscaled basis values at `x` via an in-place subset Moebius
    /// transform (`n * 2^n` additions). This is the fast path used by
    /// controller evaluation and quadrature.
    pub fn values(&self, x: &[f64]) -> Result<BasisValues> {
        self.check_args(0, SubsetIndex::EMPTY, x)?;
        Ok(self.values_unchecked(x))
    }

    pub(crate) fn values_unchecked(&self, x: &[f64]) -> BasisValues {
        let (m, count, n) = (self.input_dim(), self.basis_count(), self.state_dim());
        let at_masks = self.masked_law_values(x);
        let mut values = vec![0.0; m * count];
        for (bits, row) in at_masks.iter().enumerate() {
            for i in 0..m {
                values[i * count + bits] = row[i];
            }
        }
        for i in 0..m {
            let chan = &mut values[i * count..(i + 1) * count];
            for bit in 0..n {
                let step = 1 << bit;
                for w in 0..count {
                    if w & step != 0 {
                        chan[w] -= chan[w ^ step];
                    }
                }
            }
        }
        BasisValues { m, count, values }
    }

    fn masked_law_values(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.basis_count() as u32).map(|bits| self.law_at(x, SubsetIndex::from_bits_unchecked(bits))).collect()
    }
}

/// Basis values at one state, `m` rows of `2^n` unscaled values.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    m: usize,
    count: usize,
    values: Vec<f64>,
}

impl BasisValues {
    pub fn channel(&self, i: usize) -> &[f64] {
        &self.values[i * self.count..(i + 1) * self.count]
    }

    pub fn get(&self, i: usize, w: SubsetIndex) -> f64 {
        self.values[i * self.count + w.index()]
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }
}

/// Simplex weights `alpha_i(w)`, one row per output channel. A full set of
/// weights determines a controller in the product of convex hulls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct ControllerWeights {
    alpha: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    alpha: Vec<Vec<f64>>,
}

impl TryFrom<RawWeights> for ControllerWeights {
    type Error = Error;
    fn try_from(raw: RawWeights) -> Result<Self> {
        ControllerWeights::new(raw.alpha)
    }
}

impl From<ControllerWeights> for RawWeights {
    fn from(w: ControllerWeights) -> Self {
        RawWeights { alpha: w.alpha }
    }
}

pub const SIMPLEX_TOL: f64 = 1e-12;

impl ControllerWeights {
    pub fn new(alpha: Vec<Vec<f64>>) -> Result<Self> {
        let count = alpha.first().map_or(0, Vec::len);
        if alpha.is_empty() || count == 0 || !count.is_power_of_two() {
            return Err(Error::invalid("weights need at least one row of 2^n entries"));
        }
        for (i, row) in alpha.iter().enumerate() {
            if row.len() != count {
                return Err(Error::invalid("weight rows have different lengths"));
            }
            if row.iter().any(|a| !a.is_finite() || *a < 0.0) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite weight")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(ControllerWeights { alpha })
    }

    pub fn uniform(m: usize, count: usize) -> Self {
        ControllerWeights { alpha: vec![vec![1.0 / count as f64; count]; m] }
    }

    /// Unit mass on one subset per channel.
    pub fn vertex(subsets: &[SubsetIndex], count: usize) -> Result<Self> {
        let alpha = subsets
            .iter()
            .map(|w| {
                let mut row = vec![0.0; count];
                *row.get_mut(w.index()).ok_or_else(|| Error::invalid("subset out of range"))? = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alpha)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn input_dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn basis_count(&self) -> usize {
        self.alpha[0].len()
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &ControllerWeights, lambda: f64) -> Result<Self> {
        if self.alpha.len() != other.alpha.len() || self.basis_count() != other.basis_count() {
            return Err(Error::invalid("weights have different shapes"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid("mixing coefficient outside [0, 1]"));
        }
        let alpha = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect())
            .collect();
        Ok(ControllerWeights { alpha })
    }
}

/// `u_i = sum_w alpha_i(w) * gamma * g_w^(i)(x)`.
pub fn controller_eval(basis: &BasisSet, weights: &ControllerWeights, x: &[f64]) -> Result<Vec<f64>> {
    if weights.input_dim() != basis.input_dim() || weights.basis_count() != basis.basis_count() {
        return Err(Error::invalid(format!(
            "weights are {}x{} but the basis is {}x{}",
            weights.input_dim(),
            weights.basis_count(),
            basis.input_dim(),
            basis.basis_count()
        )));
    }
    let values = basis.values(x)?;
    Ok(apply_weights(basis.gamma(), weights, &values))
}

pub(crate) fn apply_weights(gamma: f64, weights: &ControllerWeights, values: &BasisValues) -> Vec<f64> {
    weights
        .rows()
        .iter()
        .enumerate()
        .map(|(i, row)| gamma * row.iter().zip(values.channel(i)).map(|(a, g)| a * g).sum::<f64>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::law::FnLaw;

    fn basis_1d_square() -> BasisSet {
        let law = Arc::new(FnLaw::new(1, 1, |x: &[f64]| vec![x[0] * x[0]]));
        BasisSet::new(law, vec![0.0], Some(1.0), StateBox::symmetric(1, 3.0).unwrap()).unwrap()
    }

    fn basis_2d_product() -> BasisSet {
        let law = Arc::new(FnLaw::new(2, 1, |x: &[f64]| vec![x[0] * x[1]]));
        BasisSet::new(law, vec![1.0, 1.0], None, StateBox::symmetric(2, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn recursion_examples() {
        let b = basis_1d_square();
        assert_eq!(b.eval_recursive(0, SubsetIndex::EMPTY, &[2.0]).unwrap(), 0.0);
        assert_eq!(b.eval_recursive(0, SubsetIndex::full(1).unwrap(), &[2.0]).unwrap(), 4.0);

        // x1 x2 at [2,3] around [1,1]: 6 - 2 - 3 + 1
        let b = basis_2d_product();
        let full = SubsetIndex::full(2).unwrap();
        assert_eq!(b.eval_recursive(0, full, &[2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(b.eval_closed(0, full, &[2.0, 3.0]).unwrap(), 2.0);
    }

    #[test]
    fn empty_subset_is_law_at_anchor() {
        let b = basis_2d_product();
        for x in [[0.3, -2.0], [4.0, 4.0]] {
            assert_eq!(b.eval_recursive(0, SubsetIndex::EMPTY, &x).unwrap(), 1.0);
            assert_eq!(b.eval_closed(0, SubsetIndex::EMPTY, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn all_value_routes_agree() {
        let b = basis_2d_product();
        let x = [0.7, -1.3];
        let fast = b.values(&x).unwrap();
        let rec = b.values_recursive(&x).unwrap();
        for bits in 0..4 {
            let w = SubsetIndex::new(bits, 2).unwrap();
            let closed = b.eval_closed(0, w, &x).unwrap();
            assert!((fast.get(0, w) - closed).abs() < 1e-12);
            assert!((rec.get(0, w) - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn controller_eval_examples() {
        let b = basis_2d_product();
        let x = [2.5, -0.5];
        // Mass on the empty set: constant gamma * law(anchor).
        let w = ControllerWeights::vertex(&[SubsetIndex::EMPTY], 4).unwrap();
        assert_eq!(controller_eval(&b, &w, &x).unwrap(), vec![4.0]);
        // gamma = 2^n and uniform weights reproduce the law.
        let u = controller_eval(&b, &ControllerWeights::uniform(1, 4), &x).unwrap();
        assert!((u[0] - x[0] * x[1]).abs() < 1e-12);
        // At the anchor only the empty-set term survives.
        let alpha = ControllerWeights::new(vec![vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let u = controller_eval(&b, &alpha, &[1.0, 1.0]).unwrap();
        assert!((u[0] - 0.1 * 4.0 * 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(ControllerWeights::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(ControllerWeights::new(vec![vec![-0.5, 1.5]]).is_err());
        assert!(ControllerWeights::new(vec![vec![0.5, 0.25, 0.25]]).is_err());
        assert!(ControllerWeights::new(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(serde_json::from_str::<ControllerWeights>(r#"{"alpha":[[0.2,0.2]]}"#).is_err());
        let ok: ControllerWeights = serde_json::from_str(r#"{"alpha":[[0.25,0.75]]}"#).unwrap();
        assert_eq!(ok.basis_count(), 2);
        let b = basis_2d_product();
        assert!(controller_eval(&b, &ok, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn basis_construction_checks() {
        let law: Arc<dyn InitialLaw> = Arc::new(FnLaw::new(1, 1, |x: &[f64]| vec![x[0]]));
        let bx = StateBox::symmetric(1, 1.0).unwrap();
        assert!(BasisSet::new(law.clone(), vec![2.0], None, bx.clone()).is_err());
        assert!(BasisSet::new(law.clone(), vec![0.0], Some(0.0), bx.clone()).is_err());
        assert_eq!(BasisSet::new(law, vec![0.0], None, bx).unwrap().gamma(), 2.0);
        let big: Arc<dyn InitialLaw> = Arc::new(FnLaw::new(13, 1, |_: &[f64]| vec![0.0]));
        assert!(BasisSet::new(big, vec![0.0; 13], None, StateBox::symmetric(13, 1.0).unwrap()).is_err());
    }
}
