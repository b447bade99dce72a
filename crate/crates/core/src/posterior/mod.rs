//! Finite hypothesis sets over cost densities and the Thompson-sampling
//! posterior.

mod grid;
mod hypothesis;
mod state;

pub(crate) use grid::dirichlet_row;
pub use grid::{make_grid, CandidateGrid, Provenance};
pub use hypothesis::{
    build_realizable_hypothesis, density_from_costs, sample_controller, select_controller, Hypothesis,
    HypothesisGenerator, HypothesisSet,
};
pub use state::{predictive_density, Observation, PosteriorState};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// How a controller is chosen once a hypothesis has been drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Greedy: the grid argmax of the sampled density.
    #[default]
    Argmax,
    /// Draw the controller from the sampled hypothesis' density.
    HypothesisSampled,
    /// Draw the controller from the true cost density, the sampling
    /// assumption under which the convergence argument's expectation holds.
    /// Needs the simulator's true cost table, so it is a diagnostic mode.
    DensitySampled,
}

impl Selection {
    pub fn choose<R: Rng + ?Sized>(self, h: &Hypothesis, true_density: &[f64], rng: &mut R) -> usize {
        match self {
            Selection::Argmax => select_controller(h),
            Selection::HypothesisSampled => sample_controller(h, rng),
            Selection::DensitySampled => state::sample_index(true_density, rng),
        }
    }
}
