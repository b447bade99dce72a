use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::approximation::{compute_m_g, HullProjector};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::function_space::BasisSet;
use crate::metrics::{
    average_regret, martingale_series, outside_set, regret_bound, regret_estimate, DecayFit, Metric, MetricConfig,
    RegretBound, RegretInputs,
};
use crate::plant::{rollout_segment, PlantModel};
use crate::posterior::{
    build_realizable_hypothesis, make_grid, predictive_density, select_controller, CandidateGrid, Hypothesis,
    HypothesisSet, PosteriorState,
};
use crate::seed::{self, labels};

/// A replicate counts as converged when its final outside mass is below this.
pub const CONVERGED_MASS: f64 = 0.05;
/// ... and its log outside mass fits a decaying line at least this well.
pub const CONVERGED_R_SQUARED: f64 = 0.7;

/// Constants feeding the regret bound, measured from the true cost table
/// and the basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Normalizer of the true cost density, `J* = eps_j / J`.
    pub eps_j: f64,
    /// Smallest true cost on the grid.
    pub j_m: f64,
    pub l_j: f64,
    /// `config` or `grid_estimate`.
    pub l_j_source: String,
    pub m_g: f64,
    /// Per-channel L2 norms of the best grid controller.
    pub channel_norms: Vec<f64>,
    pub g_star: usize,
    pub n: usize,
    pub m: usize,
}

/// Everything fixed before the first segment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub plant: PlantModel,
    pub basis: BasisSet,
    pub grid: CandidateGrid,
    pub hypotheses: HypothesisSet,
    /// Tabulated true costs, the `J*` every diagnostic measures against.
    pub truth: Hypothesis,
    pub true_index: Option<usize>,
    pub constants: Constants,
}

fn gram_distance(projectors: &[HullProjector], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for ((p, ra), rb) in projectors.iter().zip(a).zip(b) {
        let d: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| x - y).collect();
        let k = d.len();
        let g = p.gram();
        for i in 0..k {
            for j in 0..k {
                total += d[i] * g[i * k + j] * d[j];
            }
        }
    }
    total.max(0.0).sqrt()
}

fn quad_norm(projector: &HullProjector, alpha: &[f64]) -> f64 {
    let k = alpha.len();
    let g = projector.gram();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            s += alpha[i] * g[i * k + j] * alpha[j];
        }
    }
    s.max(0.0).sqrt()
}

impl Setup {
    /// Builds the grid, hypothesis set and true cost table for one seed.
    pub fn prepare(cfg: &ExperimentConfig, master: u64, exec: Execution) -> Result<Self> {
        let plant = PlantModel::from_spec(&cfg.plant)?;
        let basis = cfg.build_basis()?;
        let grid =
            make_grid(&basis, cfg.grid.n_vertices, cfg.grid.n_samples, &mut seed::stream(master, labels::GRID, 0))?;
        let truth = build_realizable_hypothesis(
            &plant,
            &basis,
            &grid,
            &cfg.cost,
            cfg.hypotheses.rollouts_per_g,
            seed::derive_seed(master, labels::REALIZABLE, 0),
            exec,
        )?;
        let mut rng = seed::stream(master, labels::HYPOTHESES, 0);
        let spec = &cfg.hypotheses;
        let inject = spec.inject_realizable;
        let mut members = spec.generator.generate(&grid, spec.count - usize::from(inject), &mut rng)?;
        let true_index = if inject {
            let idx = rng.random_range(0..=members.len());
            members.insert(idx, truth.clone());
            Some(idx)
        } else {
            None
        };
        let hypotheses = HypothesisSet::new(members)?;

        let quad = cfg.quadrature_spec();
        let projectors =
            (0..basis.input_dim()).map(|i| HullProjector::new(&basis, i, quad, exec)).collect::<Result<Vec<_>>>()?;
        let m_g = compute_m_g(&basis, quad, exec)?;
        let costs = truth.costs();
        let eps_j = 1.0 / costs.iter().map(|c| 1.0 / c).sum::<f64>();
        let j_m = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let g_star = select_controller(&truth);
        let channel_norms = projectors.iter().zip(grid.get(g_star).rows()).map(|(p, row)| quad_norm(p, row)).collect();
        let (l_j, l_j_source) = match cfg.cost.lipschitz {
            Some(l) => (l, "config"),
            None => {
                let mut best = 0.0f64;
                for a in 0..grid.len() {
                    for b in 0..a {
                        let d = gram_distance(&projectors, grid.get(a).rows(), grid.get(b).rows());
                        if d > 1e-12 {
                            best = best.max((costs[a] - costs[b]).abs() / d);
                        }
                    }
                }
                (best, "grid_estimate")
            }
        };
        let constants = Constants {
            eps_j,
            j_m,
            l_j,
            l_j_source: l_j_source.to_string(),
            m_g,
            channel_norms,
            g_star,
            n: basis.state_dim(),
            m: basis.input_dim(),
        };
        Ok(Setup { plant, basis, grid, hypotheses, truth, true_index, constants })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    PlantBlowup { segment: usize, step: usize },
}

/// One posterior update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: usize,
    /// Grid index of the segment that was just observed.
    pub observed_g: usize,
    pub observed_cost: f64,
    pub sampled_h: usize,
    pub selected_g: usize,
    pub entropy: f64,
    pub weights: Vec<f64>,
}

/// Diagnostics after `t` updates (`t = 0` is the prior).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: usize,
    pub mass_outside_h: f64,
    pub mass_outside_kl: f64,
    /// Log of the outside mass under the configured metric.
    pub log_mass_outside: Option<f64>,
    pub mass_true: Option<f64>,
    pub log_l: Option<f64>,
    pub distance: f64,
    pub t_d: Option<f64>,
    pub m_t: Option<f64>,
    pub regret_est: f64,
    pub bound_term3: Option<f64>,
    pub bound_total: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub inputs: RegretInputs,
    pub final_bound: RegretBound,
    pub holds_all_t: bool,
    pub violations: usize,
    pub term3_decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: RunStatus,
    pub segments_completed: usize,
    pub n_hypotheses: usize,
    pub grid_size: usize,
    pub true_hypothesis: Option<usize>,
    pub constants: Constants,
    pub final_mass_outside_h: Option<f64>,
    pub final_mass_outside_kl: Option<f64>,
    pub final_mass_true: Option<f64>,
    /// Decay fit of the log outside mass: `eps_l_hat`, `p0_hat`, `r_squared`.
    pub eps_l_hat: Option<f64>,
    pub p0_hat: Option<f64>,
    pub r_squared: Option<f64>,
    /// Decay fit of `ln L_t(Omega)`.
    pub l_fit: Option<DecayFit>,
    pub converged: bool,
    pub average_regret: Option<f64>,
    pub bound: Option<BoundSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub seed: u64,
    pub metric: MetricConfig,
    pub initial_h: usize,
    pub initial_g: usize,
    pub rows: Vec<RunRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub summary: Summary,
    pub grid: CandidateGrid,
    pub hypotheses: HypothesisSet,
    pub truth: Hypothesis,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.summary.status == RunStatus::Completed
    }
}

struct Tracker<'a> {
    setup: &'a Setup,
    metric: MetricConfig,
    omega: Vec<usize>,
    omega_h: Vec<usize>,
    omega_kl: Vec<usize>,
}

impl Tracker<'_> {
    fn row(&self, post: &PosteriorState, t: usize, g_t: usize) -> Result<DiagnosticsRow> {
        let s = self.setup;
        let weights = post.weights();
        let mass = |omega: &[usize]| omega.iter().map(|&h| weights[h]).sum::<f64>().min(1.0);
        let log_mass = post.log_prob_in_set(&self.omega);
        let log_l = post.log_l(&self.omega, s.constants.eps_j);
        let predictive = predictive_density(&weights, &s.hypotheses)?;
        Ok(DiagnosticsRow {
            t,
            mass_outside_h: mass(&self.omega_h),
            mass_outside_kl: mass(&self.omega_kl),
            log_mass_outside: log_mass.is_finite().then_some(log_mass),
            mass_true: s.true_index.map(|h| weights[h]),
            log_l: log_l.is_finite().then_some(log_l),
            distance: self.metric.metric.divergence(&predictive, s.truth.density())?,
            t_d: None,
            m_t: None,
            regret_est: regret_estimate(&weights, &s.hypotheses, g_t, s.truth.density(), s.constants.g_star)?,
            bound_term3: None,
            bound_total: None,
        })
    }
}

/// Runs the learning loop on a prepared setup: sample a hypothesis, act greedily
/// (or by the configured selection rule), observe the segment cost, update.
pub fn run_with_setup(cfg: &ExperimentConfig, setup: &Setup, master: u64) -> Result<RunRecord> {
    let set = &setup.hypotheses;
    let center = setup.truth.density();
    let metric = cfg.metric;
    let other = MetricConfig {
        metric: match metric.metric {
            Metric::Hellinger => Metric::Kl,
            Metric::Kl => Metric::Hellinger,
        },
        ..metric
    };
    let omega = outside_set(set, center, &metric)?;
    let omega_other = outside_set(set, center, &other)?;
    let (omega_h, omega_kl) = match metric.metric {
        Metric::Hellinger => (omega.clone(), omega_other),
        Metric::Kl => (omega_other, omega.clone()),
    };
    let tracker = Tracker { setup, metric, omega, omega_h, omega_kl };

    let noise_seed = seed::derive_seed(master, labels::NOISE, 0);
    let mut ts_rng = seed::stream(master, labels::THOMPSON, 0);
    let mut post = PosteriorState::uniform(set.len())?;

    let initial_h = post.ts_sample(&mut ts_rng);
    let initial_g = cfg.selection.choose(set.get(initial_h), center, &mut ts_rng);
    let mut diagnostics = vec![tracker.row(&post, 0, initial_g)?];
    let mut rows = Vec::with_capacity(cfg.segments);
    let mut status = RunStatus::Completed;
    let mut current_g = initial_g;

    for t in 1..=cfg.segments {
        let seg = match rollout_segment(
            &setup.plant,
            &setup.basis,
            setup.grid.get(current_g),
            cfg.cost.horizon,
            t - 1,
            noise_seed,
        ) {
            Ok(seg) => seg,
            Err(Error::PlantBlowup { segment, step }) => {
                status = RunStatus::PlantBlowup { segment, step };
                break;
            }
            Err(e) => return Err(e),
        };
        let cost = cfg.cost.segment_cost(&seg)?;
        post.observe_and_update(set, current_g, cost)?;
        let sampled_h = post.ts_sample(&mut ts_rng);
        let selected_g = cfg.selection.choose(set.get(sampled_h), center, &mut ts_rng);
        rows.push(RunRow {
            t,
            observed_g: current_g,
            observed_cost: cost,
            sampled_h,
            selected_g,
            entropy: post.entropy(),
            weights: post.weights(),
        });
        diagnostics.push(tracker.row(&post, t, selected_g)?);
        current_g = selected_g;
    }

    let summary = finish(cfg, setup, &tracker, &mut diagnostics, &rows, status)?;
    Ok(RunRecord {
        name: cfg.name.clone().unwrap_or_else(|| "experiment".into()),
        seed: master,
        metric,
        initial_h,
        initial_g,
        rows,
        diagnostics,
        summary,
        grid: setup.grid.clone(),
        hypotheses: setup.hypotheses.clone(),
        truth: setup.truth.clone(),
    })
}

fn finish(
    cfg: &ExperimentConfig,
    setup: &Setup,
    tracker: &Tracker<'_>,
    diagnostics: &mut [DiagnosticsRow],
    rows: &[RunRow],
    status: RunStatus,
) -> Result<Summary> {
    let c = &setup.constants;
    let set = &setup.hypotheses;
    let log_l: Option<Vec<f64>> = diagnostics.iter().map(|d| d.log_l).collect();
    let mut l_fit = None;
    if let Some(log_l) = log_l {
        let distances: Vec<f64> = diagnostics[1..].iter().map(|d| d.distance).collect();
        let series = martingale_series(&log_l, &distances, cfg.metric.metric)?;
        for (d, (td, mt)) in diagnostics[1..].iter_mut().zip(series.t_d.iter().zip(&series.m_t)) {
            d.t_d = Some(*td);
            d.m_t = Some(*mt);
        }
        diagnostics[0].m_t = Some(0.0);
        l_fit = series.fit;
    }

    let points: Option<Vec<(f64, f64)>> =
        diagnostics.iter().map(|d| d.log_mass_outside.map(|v| (d.t as f64, v))).collect();
    let mass_fit = points.as_deref().and_then(DecayFit::fit);
    let (p0, eps_l) =
        if tracker.omega.is_empty() { (0.0, 0.0) } else { mass_fit.map_or((1.0, 0.0), |f| (f.p0, f.rate)) };
    let inputs = RegretInputs {
        j_b: set.density_upper(),
        v_b: (set.len() - tracker.omega.len()) as f64,
        m_bar: set.measure(),
        p0,
        eps_l,
        eps_j: c.eps_j,
        l_j: c.l_j,
        m_g: c.m_g,
        channel_norms: c.channel_norms.clone(),
        j_m: c.j_m,
        n: c.n,
    };
    let mut violations = 0;
    let mut bounds = Vec::with_capacity(diagnostics.len());
    for d in diagnostics.iter_mut() {
        let b = regret_bound(&inputs, d.t as f64)?;
        d.bound_term3 = Some(b.term3);
        d.bound_total = Some(b.total);
        if d.regret_est > b.total {
            violations += 1;
        }
        bounds.push(b);
    }
    let term3_decreasing = bounds.windows(2).all(|w| w[1].term3 < w[0].term3);
    let last = diagnostics.last().expect("prior row is always present");
    let regrets: Vec<f64> = diagnostics[1..].iter().map(|d| d.regret_est).collect();
    let converged = status == RunStatus::Completed
        && rows.len() == cfg.segments
        && match mass_fit {
            Some(f) => f.rate > 0.0 && f.r_squared >= CONVERGED_R_SQUARED,
            None => false,
        }
        && mass_of(last, cfg.metric.metric) < CONVERGED_MASS;
    Ok(Summary {
        status,
        segments_completed: rows.len(),
        n_hypotheses: set.len(),
        grid_size: setup.grid.len(),
        true_hypothesis: setup.true_index,
        constants: c.clone(),
        final_mass_outside_h: Some(last.mass_outside_h),
        final_mass_outside_kl: Some(last.mass_outside_kl),
        final_mass_true: last.mass_true,
        eps_l_hat: mass_fit.map(|f| f.rate),
        p0_hat: mass_fit.map(|f| f.p0),
        r_squared: mass_fit.map(|f| f.r_squared),
        l_fit,
        converged,
        average_regret: average_regret(&regrets).ok(),
        bound: Some(BoundSummary {
            inputs,
            final_bound: *bounds.last().expect("nonempty"),
            holds_all_t: violations == 0,
            violations,
            term3_decreasing,
        }),
    })
}

fn mass_of(d: &DiagnosticsRow, metric: Metric) -> f64 {
    match metric {
        Metric::Hellinger => d.mass_outside_h,
        Metric::Kl => d.mass_outside_kl,
    }
}

/// Prepares and runs one experiment with the config's own seed.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RunRecord> {
    let setup = Setup::prepare(cfg, cfg.seed, exec)?;
    run_with_setup(cfg, &setup, cfg.seed)
}

/// Seed of replicate `r`; replicate 0 reuses the master seed.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        seed::derive_seed(master, labels::REPLICATE, r as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub error: Option<String>,
    pub status: Option<RunStatus>,
    pub final_mass_outside: Option<f64>,
    pub eps_l_hat: Option<f64>,
    pub r_squared: Option<f64>,
    pub converged: bool,
    pub bound_holds: Option<bool>,
    pub final_term3: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub name: String,
    pub master_seed: u64,
    pub replicates: Vec<ReplicateOutcome>,
    pub converged_count: usize,
    pub negative_slope_count: usize,
    pub failures: usize,
    /// Mean and sample deviation of the regret estimate at each `t`, over
    /// replicates that completed.
    pub regret_mean: Vec<f64>,
    pub regret_std: Vec<f64>,
    pub mass_outside_mean: Vec<f64>,
    pub variance_probe: Option<crate::metrics::VarianceProbe>,
}

fn mean_std(columns: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = columns.first() else {
        return (Vec::new(), Vec::new());
    };
    let r = columns.len() as f64;
    (0..first.len())
        .map(|t| {
            let mean = columns.iter().map(|c| c[t]).sum::<f64>() / r;
            let var = if columns.len() > 1 {
                columns.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / (r - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        })
        .unzip()
}

/// Runs every replicate (in parallel under the parallel policy) and
/// aggregates. A failing replicate is recorded without aborting the others.
pub fn run_replicates(cfg: &ExperimentConfig, exec: Execution) -> Result<(AggregateReport, Vec<Option<RunRecord>>)> {
    cfg.validate()?;
    let results = exec.map_range(cfg.replicates, |r| {
        let s = replicate_seed(cfg.seed, r);
        let setup = Setup::prepare(cfg, s, Execution::Sequential)?;
        run_with_setup(cfg, &setup, s)
    });
    let mut outcomes = Vec::new();
    let mut records = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let seed = replicate_seed(cfg.seed, r);
        match res {
            Ok(rec) => {
                let s = &rec.summary;
                outcomes.push(ReplicateOutcome {
                    index: r,
                    seed,
                    error: None,
                    status: Some(s.status.clone()),
                    final_mass_outside: rec.diagnostics.last().map(|d| mass_of(d, cfg.metric.metric)),
                    eps_l_hat: s.eps_l_hat,
                    r_squared: s.r_squared,
                    converged: s.converged,
                    bound_holds: s.bound.as_ref().map(|b| b.holds_all_t),
                    final_term3: s.bound.as_ref().map(|b| b.final_bound.term3),
                });
                records.push(Some(rec));
            }
            Err(e) => {
                outcomes.push(ReplicateOutcome {
                    index: r,
                    seed,
                    error: Some(e.to_string()),
                    status: None,
                    final_mass_outside: None,
                    eps_l_hat: None,
                    r_squared: None,
                    converged: false,
                    bound_holds: None,
                    final_term3: None,
                });
                records.push(None);
            }
        }
    }
    let complete: Vec<&RunRecord> = records.iter().flatten().filter(|r| r.completed()).collect();
    let regrets: Vec<Vec<f64>> =
        complete.iter().map(|r| r.diagnostics.iter().map(|d| d.regret_est).collect()).collect();
    let masses: Vec<Vec<f64>> =
        complete.iter().map(|r| r.diagnostics.iter().map(|d| mass_of(d, cfg.metric.metric)).collect()).collect();
    let (regret_mean, regret_std) = mean_std(&regrets);
    let (mass_outside_mean, _) = mean_std(&masses);
    let t_d: Option<Vec<Vec<f64>>> =
        complete.iter().map(|r| r.diagnostics[1..].iter().map(|d| d.t_d).collect::<Option<Vec<f64>>>()).collect();
    let variance_probe = t_d.and_then(|m| crate::metrics::variance_summability_probe(&m).ok());
    let report = AggregateReport {
        name: cfg.name.clone().unwrap_or_else(|| "experiment".into()),
        master_seed: cfg.seed,
        converged_count: outcomes.iter().filter(|o| o.converged).count(),
        negative_slope_count: outcomes.iter().filter(|o| o.eps_l_hat.is_some_and(|e| e > 0.0)).count(),
        failures: outcomes.iter().filter(|o| o.error.is_some() || o.status != Some(RunStatus::Completed)).count(),
        replicates: outcomes,
        regret_mean,
        regret_std,
        mass_outside_mean,
        variance_probe,
    };
    Ok((report, records))
}
