use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hypothesis::HypothesisSet;
use crate::error::{Error, Result};

/// Log-sum-exp over the selected terms, `-inf` for an empty selection.
pub(crate) fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Inverse-CDF draw from a probability vector. Falls back to the last
/// positive entry when rounding leaves the cumulative sum short of `u`.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub g_index: usize,
    pub observed_cost: f64,
}

/// Prior over a finite hypothesis set plus the accumulated log likelihood
/// ratios.
///
/// `log R_t(h)` is stored as `log_ratio[h] + log_scale`. Only `log_ratio`
/// depends on the hypothesis, so the observed costs (which enter every
/// hypothesis identically) touch nothing but `log_scale` and the weights
/// never see them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    prior: Vec<f64>,
    log_prior: Vec<f64>,
    log_ratio: Vec<f64>,
    log_scale: f64,
    t: usize,
    history: Vec<Observation>,
}

impl PosteriorState {
    pub fn new(prior: Vec<f64>) -> Result<Self> {
        if prior.is_empty() {
            return Err(Error::invalid("prior is empty"));
        }
        if prior.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("prior entries must be nonnegative and finite"));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("prior sums to {total}, not 1")));
        }
        let log_prior = prior.iter().map(|p| p.ln()).collect();
        let log_ratio = vec![0.0; prior.len()];
        Ok(PosteriorState { prior, log_prior, log_ratio, log_scale: 0.0, t: 0, history: Vec::new() })
    }

    pub fn uniform(count: usize) -> Result<Self> {
        Self::new(vec![1.0 / count as f64; count])
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    /// `log R_t(h)` up to the unknown constant `-t ln eps_J`.
    pub fn log_r(&self, h: usize) -> f64 {
        self.log_ratio[h] + self.log_scale
    }

    fn log_joint(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_prior.iter().zip(&self.log_ratio).map(|(a, b)| a + b)
    }

    /// Posterior weights `F^t(h)`.
    pub fn weights(&self) -> Vec<f64> {
        let joint: Vec<f64> = self.log_joint().collect();
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = joint.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    /// Folds one segment observation into the posterior.
    pub fn observe_and_update(&mut self, set: &HypothesisSet, g_index: usize, observed_cost: f64) -> Result<()> {
        if set.len() != self.len() {
            return Err(Error::invalid("hypothesis set and posterior differ in size"));
        }
        if g_index >= set.grid_size() {
            return Err(Error::invalid(format!("grid index {g_index} out of range")));
        }
        if !(observed_cost > 0.0) || !observed_cost.is_finite() {
            return Err(Error::invalid(format!("observed cost must be positive, got {observed_cost}")));
        }
        for (lr, h) in self.log_ratio.iter_mut().zip(set.iter()) {
            *lr += h.density()[g_index].ln();
        }
        let shift = self.log_ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for lr in &mut self.log_ratio {
            *lr -= shift;
        }
        self.log_scale += shift + observed_cost.ln();
        self.t += 1;
        self.history.push(Observation { g_index, observed_cost });
        Ok(())
    }

    /// `ln L_t(Omega) = ln sum_{h in Omega} F^0(h) R_t(h)`, where each
    /// `R_t` factor carries `-ln eps_j` for the normalizer of the true cost
    /// density.
    pub fn log_l(&self, omega: &[usize], eps_j: f64) -> f64 {
        let joint: Vec<f64> = self.log_joint().collect();
        log_sum_exp(omega.iter().map(|&h| joint[h])) + self.log_scale - self.t as f64 * eps_j.ln()
    }

    /// Natural log of [`Self::prob_in_set`]; stays finite long after the
    /// probability itself underflows. `-inf` for an empty or null subset.
    pub fn log_prob_in_set(&self, omega: &[usize]) -> f64 {
        let joint: Vec<f64> = self.log_joint().collect();
        let num = log_sum_exp(omega.iter().map(|&h| joint[h]));
        if num == f64::NEG_INFINITY {
            return num;
        }
        (num - log_sum_exp(joint.iter().copied())).min(0.0)
    }

    /// Posterior probability of a hypothesis subset.
    pub fn prob_in_set(&self, omega: &[usize]) -> f64 {
        self.log_prob_in_set(omega).exp()
    }

    /// Thompson draw of a hypothesis index.
    pub fn ts_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.weights(), rng)
    }

    /// Shannon entropy of the posterior weights, in nats.
    pub fn entropy(&self) -> f64 {
        -self.weights().iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

/// Mixture density `sum_h F(h) p_h(g)` over the grid.
pub fn predictive_density(weights: &[f64], set: &HypothesisSet) -> Result<Vec<f64>> {
    if weights.len() != set.len() {
        return Err(Error::invalid("weights and hypothesis set differ in size"));
    }
    let mut out = vec![0.0; set.grid_size()];
    for (w, h) in weights.iter().zip(set.iter()) {
        for (o, p) in out.iter_mut().zip(h.density()) {
            *o += w * p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::Hypothesis;
    use crate::seed;

    fn two() -> HypothesisSet {
        HypothesisSet::new(vec![
            Hypothesis::from_costs(vec![1.0, 3.0]).unwrap(),
            Hypothesis::from_costs(vec![3.0, 1.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn hand_bayes() {
        let set = two();
        for j in [0.01, 1.0, 250.0] {
            let mut post = PosteriorState::uniform(2).unwrap();
            post.observe_and_update(&set, 0, j).unwrap();
            let w = post.weights();
            assert!((w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_density_leaves_posterior_alone() {
        let set = HypothesisSet::new(vec![
            Hypothesis::from_costs(vec![1.0, 3.0]).unwrap(),
            Hypothesis::from_costs(vec![1.0, 3.0]).unwrap(),
        ])
        .unwrap();
        let mut post = PosteriorState::new(vec![0.3, 0.7]).unwrap();
        let before = post.weights();
        post.observe_and_update(&set, 1, 2.0).unwrap();
        for (a, b) in before.iter().zip(post.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_invariance_is_exact() {
        let set = two();
        let mut a = PosteriorState::uniform(2).unwrap();
        let mut b = PosteriorState::uniform(2).unwrap();
        for (k, j) in [0.7, 1.9, 0.3, 5.5].iter().enumerate() {
            a.observe_and_update(&set, k % 2, *j).unwrap();
            b.observe_and_update(&set, k % 2, 3.0 * j).unwrap();
            assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn sampling_examples() {
        let mut rng = seed::stream(9, "ts", 0);
        assert!((0..200).all(|_| sample_index(&[1.0, 0.0], &mut rng) == 0));
        assert_eq!(PosteriorState::uniform(1).unwrap().ts_sample(&mut rng), 0);
        let hits = (0..10000).filter(|_| sample_index(&[0.5, 0.5], &mut rng) == 0).count();
        assert!((hits as f64 / 10000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn set_probabilities() {
        let set = two();
        let mut post = PosteriorState::uniform(2).unwrap();
        post.observe_and_update(&set, 0, 1.0).unwrap();
        assert!((post.prob_in_set(&[0, 1]) - 1.0).abs() < 1e-15);
        assert_eq!(post.prob_in_set(&[]), 0.0);
        assert!((post.prob_in_set(&[0]) + post.prob_in_set(&[1]) - 1.0).abs() < 1e-15);
        // L_t(Omega) / L_t(all) agrees with the weights
        let ratio = (post.log_l(&[1], 0.4) - post.log_l(&[0, 1], 0.4)).exp();
        assert!((ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn predictive_examples() {
        let set = two();
        assert_eq!(predictive_density(&[1.0, 0.0], &set).unwrap(), set.get(0).density());
        let avg = predictive_density(&[0.5, 0.5], &set).unwrap();
        assert!((avg[0] - 0.5).abs() < 1e-15 && (avg.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_observations() {
        let set = two();
        let mut post = PosteriorState::uniform(2).unwrap();
        assert!(post.observe_and_update(&set, 2, 1.0).is_err());
        assert!(post.observe_and_update(&set, 0, 0.0).is_err());
        assert!(PosteriorState::new(vec![0.2, 0.2]).is_err());
    }
}
