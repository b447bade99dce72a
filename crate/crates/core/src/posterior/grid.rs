use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function_space::{BasisSet, ControllerWeights, SubsetIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Vertex,
    Uniform,
    DirichletSample,
    User,
}

/// A finite set of candidate controllers standing in for the continuous
/// controller space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    entries: Vec<ControllerWeights>,
    provenance: Vec<Provenance>,
}

impl CandidateGrid {
    pub fn from_entries(entries: Vec<ControllerWeights>) -> Result<Self> {
        let provenance = vec![Provenance::User; entries.len()];
        Self::new(entries, provenance)
    }

    fn new(entries: Vec<ControllerWeights>, provenance: Vec<Provenance>) -> Result<Self> {
        let first = entries.first().ok_or_else(|| Error::invalid("candidate grid is empty"))?;
        let shape = (first.input_dim(), first.basis_count());
        for (i, e) in entries.iter().enumerate() {
            if (e.input_dim(), e.basis_count()) != shape {
                return Err(Error::invalid(format!("grid entry {i} has a different shape")));
            }
            if entries[..i].contains(e) {
                return Err(Error::invalid(format!("grid entry {i} duplicates an earlier entry")));
            }
        }
        Ok(CandidateGrid { entries, provenance })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ControllerWeights] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &ControllerWeights {
        &self.entries[i]
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }
}

/// Uniform draw from the probability simplex of dimension `k`.
pub(crate) fn dirichlet_row<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Builds a grid of up to `n_vertices` per-channel vertex combinations (in
/// mixed-radix order, channel 0 fastest), the uniform-weight controller and
/// `n_samples` uniform-Dirichlet draws. Duplicates are skipped.
pub fn make_grid<R: Rng + ?Sized>(
    basis: &BasisSet,
    n_vertices: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<CandidateGrid> {
    if n_vertices + n_samples < 2 {
        return Err(Error::invalid("grid needs n_vertices + n_samples >= 2"));
    }
    let (m, count) = (basis.input_dim(), basis.basis_count());
    let total_vertices = (count as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    let mut entries: Vec<ControllerWeights> = Vec::new();
    let mut provenance = Vec::new();
    let mut push = |w: ControllerWeights, p: Provenance, entries: &mut Vec<ControllerWeights>| {
        if !entries.contains(&w) {
            entries.push(w);
            provenance.push(p);
        }
    };
    for idx in 0..(n_vertices as u128).min(total_vertices) {
        let mut rest = idx;
        let subsets: Vec<SubsetIndex> = (0..m)
            .map(|_| {
                let bits = (rest % count as u128) as u32;
                rest /= count as u128;
                SubsetIndex::new(bits, basis.state_dim())
            })
            .collect::<Result<_>>()?;
        push(ControllerWeights::vertex(&subsets, count)?, Provenance::Vertex, &mut entries);
    }
    push(ControllerWeights::uniform(m, count), Provenance::Uniform, &mut entries);
    for _ in 0..n_samples {
        let rows = (0..m).map(|_| dirichlet_row(count, rng)).collect();
        push(ControllerWeights::new(rows)?, Provenance::DirichletSample, &mut entries);
    }
    CandidateGrid::new(entries, provenance)
}
