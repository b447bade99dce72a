//! The parameterized controller space: masking, state boxes, initial laws,
//! the subset basis and its convex-hull weights, and L2 quadrature.

mod basis;
mod law;
mod quadrature;
mod state_box;
mod subset;

pub(crate) use basis::apply_weights;
pub use basis::{controller_eval, BasisSet, BasisValues, ControllerWeights, SIMPLEX_TOL};
pub use law::{FnLaw, InitialLaw, LawSpec, LinearFeedback, PolynomialLaw, SaturatedFeedback};
pub use quadrature::{
    gauss_legendre, l2_inner, l2_norm, QuadratureRule, QuadratureSpec, DEFAULT_GL_NODES, DEFAULT_MC_POINTS,
    MAX_TENSOR_DIM,
};
pub use state_box::{box_hull, masked_stays_in_box, StateBox};
pub use subset::{mask_vector, SubsetIndex, MAX_STATE_DIM};
