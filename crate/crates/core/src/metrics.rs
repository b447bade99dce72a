//! Density distances, convergence diagnostics and regret accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::HypothesisSet;

const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Hellinger,
    Kl,
}

impl Metric {
    /// The neighborhood functional paired with this metric: half the
    /// squared Hellinger distance, or the KL divergence.
    pub fn divergence(self, p: &[f64], q: &[f64]) -> Result<f64> {
        match self {
            Metric::Hellinger => Ok(0.5 * hellinger(p, q)?.powi(2)),
            Metric::Kl => kl(p, q),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub metric: Metric,
    pub delta: f64,
}

impl MetricConfig {
    pub fn new(metric: Metric, delta: f64) -> Result<Self> {
        let cfg = MetricConfig { metric, delta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

fn check_masses(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::invalid("distributions must be nonempty and of equal length"));
    }
    for v in [p, q] {
        if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("probability masses must be nonnegative and finite"));
        }
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
    }
    Ok(())
}

pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    check_masses(p, q)?;
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((s.sqrt() / std::f64::consts::SQRT_2).min(1.0))
}

/// `sum p ln(p / q)`, `+inf` when `p` is not absolutely continuous
/// with respect to `q`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_masses(p, q)?;
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += a * (a / b).ln();
    }
    Ok(total.max(0.0))
}

/// Hypotheses at divergence `>= delta` from `center`.
pub fn outside_set(set: &HypothesisSet, center: &[f64], cfg: &MetricConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (h, hyp) in set.iter().enumerate() {
        if cfg.metric.divergence(hyp.density(), center)? >= cfg.delta {
            out.push(h);
        }
    }
    Ok(out)
}

/// Posterior mass outside the neighborhood of `center`.
pub fn neighborhood_mass(weights: &[f64], set: &HypothesisSet, center: &[f64], cfg: &MetricConfig) -> Result<f64> {
    if weights.len() != set.len() {
        return Err(Error::invalid("weights and hypothesis set differ in size"));
    }
    Ok(outside_set(set, center, cfg)?.iter().map(|&h| weights[h]).sum::<f64>().min(1.0))
}

pub fn t_d(x: f64, metric: Metric) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::invalid(format!("t_d needs a positive argument, got {x}")));
    }
    Ok(match metric {
        Metric::Kl => x.ln(),
        Metric::Hellinger => x.sqrt() - 1.0,
    })
}

/// Same as [`t_d`] but takes `ln x`, so ratios that over- or underflow in
/// linear space stay usable.
pub fn t_d_log(log_x: f64, metric: Metric) -> f64 {
    match metric {
        Metric::Kl => log_x,
        Metric::Hellinger => (0.5 * log_x).exp_m1(),
    }
}

/// Least-squares fit of `ln y_t ~ ln p0 - rate * t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub p0: f64,
    pub r_squared: f64,
}

impl DecayFit {
    /// Fits `(t, ln y)` pairs. Needs at least three points and two distinct
    /// times.
    pub fn fit(points: &[(f64, f64)]) -> Option<DecayFit> {
        if points.len() < 3 || points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
            return None;
        }
        let n = points.len() as f64;
        let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
        if stt == 0.0 {
            return None;
        }
        let sty: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let slope = sty / stt;
        let intercept = my - slope * mt;
        let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
        let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
        Some(DecayFit { rate: -slope, p0: intercept.exp(), r_squared })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.p0 * (-self.rate * t).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSeries {
    /// `T_d^t` for `t = 1..=T`.
    pub t_d: Vec<f64>,
    /// Running `M_t` for `t = 1..=T`.
    pub m_t: Vec<f64>,
    /// Decay fit of `ln L_t(Omega)` over `t = 0..=T`.
    pub fit: Option<DecayFit>,
}

/// Builds `T_d^t = t_d(L_t / L_{t-1})` and `M_T = sum_t (T_d^t + d_t)` from
/// `ln L_t(Omega)` for `t = 0..=T` and the per-segment distances
/// `d(J^t, J*)` for `t = 1..=T`.
pub fn martingale_series(log_l: &[f64], distances: &[f64], metric: Metric) -> Result<MartingaleSeries> {
    if log_l.is_empty() {
        return Err(Error::invalid("empty L series"));
    }
    if distances.len() + 1 != log_l.len() {
        return Err(Error::invalid("need one distance per segment after the first L value"));
    }
    if log_l.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::invalid("L series must be positive and finite"));
    }
    let mut t_d = Vec::with_capacity(distances.len());
    let mut m_t = Vec::with_capacity(distances.len());
    let mut acc = 0.0;
    for (w, d) in log_l.windows(2).zip(distances) {
        let v = t_d_log(w[1] - w[0], metric);
        acc += v + d;
        t_d.push(v);
        m_t.push(acc);
    }
    let points: Vec<(f64, f64)> = log_l.iter().enumerate().map(|(t, v)| (t as f64, *v)).collect();
    Ok(MartingaleSeries { t_d, m_t, fit: DecayFit::fit(&points) })
}

/// `|J*(g*) - sum_h F(h) J_h(g_t)|`.
pub fn regret_estimate(
    weights: &[f64],
    set: &HypothesisSet,
    g_t: usize,
    true_density: &[f64],
    g_star: usize,
) -> Result<f64> {
    if weights.len() != set.len() || true_density.len() != set.grid_size() {
        return Err(Error::invalid("inconsistent sizes for regret estimate"));
    }
    if g_t >= set.grid_size() || g_star >= set.grid_size() {
        return Err(Error::invalid("grid index out of range"));
    }
    let expected: f64 = weights.iter().zip(set.iter()).map(|(w, h)| w * h.density()[g_t]).sum();
    Ok((true_density[g_star] - expected).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretInputs {
    /// Upper bound on density values.
    pub j_b: f64,
    /// Measure of the neighborhood (hypothesis count).
    pub v_b: f64,
    /// Measure of the whole hypothesis set.
    pub m_bar: f64,
    pub p0: f64,
    pub eps_l: f64,
    pub eps_j: f64,
    pub l_j: f64,
    pub m_g: f64,
    pub channel_norms: Vec<f64>,
    /// Smallest true cost over the grid.
    pub j_m: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub total: f64,
}

pub fn regret_bound(inputs: &RegretInputs, t: f64) -> Result<RegretBound> {
    let i = inputs;
    let named = [
        ("j_b", i.j_b),
        ("v_b", i.v_b),
        ("m_bar", i.m_bar),
        ("p0", i.p0),
        ("eps_j", i.eps_j),
        ("l_j", i.l_j),
        ("m_g", i.m_g),
        ("t", t),
    ];
    if let Some((name, v)) = named.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be nonnegative and finite, got {v}")));
    }
    if !(i.j_m > 0.0) || !i.eps_l.is_finite() {
        return Err(Error::invalid("j_m must be positive and eps_l finite"));
    }
    let m = i.channel_norms.len() as f64;
    let full = m * i.m_g * i.m_g;
    let mut radicand = full - i.channel_norms.iter().map(|v| v * v).sum::<f64>();
    if radicand < 0.0 {
        if radicand >= -1e-12 * full.max(f64::MIN_POSITIVE) {
            radicand = 0.0;
        } else {
            return Err(Error::invalid(format!("negative radicand {radicand} in the parameterization term")));
        }
    }
    let term1 = i.j_b * i.v_b;
    let term2 = i.eps_j * i.l_j * radicand.sqrt() / (2f64.powi(i.n as i32).sqrt() * i.j_m * i.j_m);
    let term3 = ((2.0 * i.m_bar - term1) * i.p0 * (-t * i.eps_l).exp()).max(0.0);
    Ok(RegretBound { term1, term2, term3, total: term1 + term2 + term3 })
}

/// `|sum R_t| / T`.
pub fn average_regret(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::invalid("empty regret series"));
    }
    Ok(series.iter().sum::<f64>().abs() / series.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceProbe {
    /// Across-replicate sample variance of `T_d^t`, `t = 1..=T`.
    pub variances: Vec<f64>,
    /// Partial sums of `V(T_d^t) / t^2`.
    pub partial_sums: Vec<f64>,
    pub total: f64,
    /// Share of the total contributed by the last quarter of the series.
    pub tail_share: f64,
    pub plateau: bool,
}

pub fn variance_summability_probe(replicates: &[Vec<f64>]) -> Result<VarianceProbe> {
    if replicates.len() < 5 {
        return Err(Error::invalid(format!("need at least 5 replicates, got {}", replicates.len())));
    }
    let len = replicates[0].len();
    if len == 0 || replicates.iter().any(|r| r.len() != len) {
        return Err(Error::invalid("replicate series must be nonempty and of equal length"));
    }
    let r = replicates.len() as f64;
    let variances: Vec<f64> = (0..len)
        .map(|t| {
            let mean = replicates.iter().map(|s| s[t]).sum::<f64>() / r;
            replicates.iter().map(|s| (s[t] - mean).powi(2)).sum::<f64>() / (r - 1.0)
        })
        .collect();
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = variances
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let t = (k + 1) as f64;
            acc += v / (t * t);
            acc
        })
        .collect();
    let total = acc;
    let start = len - len.div_ceil(4);
    let before = if start == 0 { 0.0 } else { partial_sums[start - 1] };
    let tail_share = if total > 0.0 { (total - before) / total } else { 0.0 };
    Ok(VarianceProbe { variances, partial_sums, total, tail_share, plateau: tail_share < 0.05 })
}
