//! Fixed points of the offspring generating functions: extinction
//! probabilities, the survival-conditioned law and its moments, and the
//! characteristic-function recursion for the limit `W`.

mod conditioned;
mod extinction;
mod transform;

pub use conditioned::{conditioned_moments, conditioned_offspring_law, ConditionedLaw, MAX_CONDITIONED_ORDER};
pub use extinction::{
    extinction_curve, extinction_probability, solve_extinction, ExtinctionCurve, ExtinctionPoint, ExtinctionSolution,
    MAX_ITERATIONS, NEAR_CRITICAL,
};
pub use transform::{iterate_transform, Lattice, LatticeSpec, TransformConfig, TransformGrid, MAX_TRANSFORM_DIM};
