use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::grid::{dirichlet_row, CandidateGrid};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::function_space::BasisSet;
use crate::plant::{rollout_segment, PlantModel};

/// Normalized inverse costs: `p(g) = (1 / c(g)) / sum_g' (1 / c(g'))`.
pub fn density_from_costs(costs: &[f64]) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::invalid("no costs given"));
    }
    if let Some(c) = costs.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
        return Err(Error::invalid(format!("costs must be positive and finite, got {c}")));
    }
    let inv: Vec<f64> = costs.iter().map(|c| 1.0 / c).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// A surrogate cost table over the candidate grid and its induced density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    costs: Vec<f64>,
    density: Vec<f64>,
}

impl Hypothesis {
    pub fn from_costs(costs: Vec<f64>) -> Result<Self> {
        let density = density_from_costs(&costs)?;
        Ok(Hypothesis { costs, density })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }
}

/// The grid index maximizing the hypothesis density (equivalently,
/// minimizing its surrogate cost). Ties go to the lowest index.
pub fn select_controller(h: &Hypothesis) -> usize {
    h.density.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best }).0
}

/// Draws a grid index with probability equal to the hypothesis density.
pub fn sample_controller<R: Rng + ?Sized>(h: &Hypothesis, rng: &mut R) -> usize {
    super::state::sample_index(&h.density, rng)
}

/// A finite family of hypotheses under counting measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    hypotheses: Vec<Hypothesis>,
}

impl HypothesisSet {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.len() < 2 {
            return Err(Error::invalid("a hypothesis set needs at least two members"));
        }
        let size = hypotheses[0].len();
        if hypotheses.iter().any(|h| h.len() != size) {
            return Err(Error::invalid("hypotheses cover grids of different sizes"));
        }
        Ok(HypothesisSet { hypotheses })
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.hypotheses[0].len()
    }

    pub fn get(&self, h: usize) -> &Hypothesis {
        &self.hypotheses[h]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Hypothesis> {
        self.hypotheses.iter()
    }

    /// Total counting measure of the set.
    pub fn measure(&self) -> f64 {
        self.hypotheses.len() as f64
    }

    /// Smallest density value over all members and grid points.
    pub fn density_lower(&self) -> f64 {
        self.hypotheses.iter().flat_map(|h| h.density.iter().copied()).fold(f64::INFINITY, f64::min)
    }

    /// Largest density value over all members and grid points.
    pub fn density_upper(&self) -> f64 {
        self.hypotheses.iter().flat_map(|h| h.density.iter().copied()).fold(0.0, f64::max)
    }
}

/// Random surrogate-cost generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HypothesisGenerator {
    /// `1 + sum_k a_k exp(-|alpha - c_k|^2 / (2 l_k^2))` over the stacked
    /// weight vector, with `a_k ~ U(0, amplitude)`, uniform-simplex centers
    /// and `l_k ~ U(length_min, length_max)`.
    Rbf { bumps: usize, amplitude: f64, length_min: f64, length_max: f64 },
    /// `1 + scale |L (alpha - alpha_0)|^2` with Gaussian `L` and a
    /// uniform-simplex `alpha_0`.
    Quadratic { scale: f64 },
    /// Explicit cost tables, one per hypothesis.
    Table { tables: Vec<Vec<f64>> },
}

fn stacked(grid: &CandidateGrid, i: usize) -> Vec<f64> {
    grid.get(i).rows().iter().flatten().copied().collect()
}

impl HypothesisGenerator {
    /// Generates `count` hypotheses. Table generators ignore `count` and
    /// return their tables.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        grid: &CandidateGrid,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Hypothesis>> {
        let (m, k) = (grid.get(0).input_dim(), grid.get(0).basis_count());
        let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| stacked(grid, i)).collect();
        let centre = |rng: &mut R| -> Vec<f64> { (0..m).flat_map(|_| dirichlet_row(k, rng)).collect() };
        match self {
            HypothesisGenerator::Rbf { bumps, amplitude, length_min, length_max } => {
                if !(*amplitude > 0.0) || !(*length_min > 0.0) || length_max < length_min || *bumps == 0 {
                    return Err(Error::invalid(
                        "rbf generator needs bumps >= 1, amplitude > 0, 0 < length_min <= length_max",
                    ));
                }
                (0..count)
                    .map(|_| {
                        let bumps: Vec<(f64, Vec<f64>, f64)> = (0..*bumps)
                            .map(|_| {
                                let a = amplitude * rng.random::<f64>();
                                let c = centre(rng);
                                let l = length_min + (length_max - length_min) * rng.random::<f64>();
                                (a, c, l)
                            })
                            .collect();
                        let costs = points
                            .iter()
                            .map(|p| {
                                1.0 + bumps
                                    .iter()
                                    .map(|(a, c, l)| {
                                        let d2: f64 = p.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum();
                                        a * (-d2 / (2.0 * l * l)).exp()
                                    })
                                    .sum::<f64>()
                            })
                            .collect();
                        Hypothesis::from_costs(costs)
                    })
                    .collect()
            }
            HypothesisGenerator::Quadratic { scale } => {
                if !(*scale > 0.0) {
                    return Err(Error::invalid("quadratic generator needs scale > 0"));
                }
                let d = m * k;
                (0..count)
                    .map(|_| {
                        let l: Vec<f64> =
                            (0..d * d).map(|_| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
                        let a0 = centre(rng);
                        let costs = points
                            .iter()
                            .map(|p| {
                                let diff: Vec<f64> = p.iter().zip(&a0).map(|(x, y)| x - y).collect();
                                let sq: f64 =
                                    (0..d).map(|r| (0..d).map(|c| l[r * d + c] * diff[c]).sum::<f64>().powi(2)).sum();
                                1.0 + scale * sq
                            })
                            .collect();
                        Hypothesis::from_costs(costs)
                    })
                    .collect()
            }
            HypothesisGenerator::Table { tables } => tables
                .iter()
                .map(|t| {
                    if t.len() != grid.len() {
                        return Err(Error::invalid(format!(
                            "cost table has {} entries but the grid has {}",
                            t.len(),
                            grid.len()
                        )));
                    }
                    Hypothesis::from_costs(t.clone())
                })
                .collect(),
        }
    }
}

/// The hypothesis induced by the plant itself: mean observed cost over
/// `rollouts_per_g` segments at each grid point. Exact for noiseless plants.
pub fn build_realizable_hypothesis(
    plant: &PlantModel,
    basis: &BasisSet,
    grid: &CandidateGrid,
    cost: &CostSpec,
    rollouts_per_g: usize,
    noise_seed: u64,
    exec: Execution,
) -> Result<Hypothesis> {
    if rollouts_per_g == 0 {
        return Err(Error::invalid("rollouts_per_g must be at least 1"));
    }
    let costs = exec.map_slice(grid.entries(), |weights| {
        let mut total = 0.0;
        for r in 0..rollouts_per_g {
            let seg = rollout_segment(plant, basis, weights, cost.horizon, r, noise_seed)?;
            total += cost.segment_cost(&seg)?;
        }
        Ok(total / rollouts_per_g as f64)
    });
    Hypothesis::from_costs(costs.into_iter().collect::<Result<Vec<f64>>>()?)
}
