//! Saddle-node bifurcation of large-amplitude periodic orbits of the delay
//! equation `x'(t) = -x(t) + f_K(x(t - 1))` with a piecewise-linear positive
//! feedback `f_K`.
//!
//! The crate evaluates a closed-form scalar reduction map `F(L2, K, eps)` whose
//! fixed points encode periodic orbits, locates the fold of its fixed points,
//! rebuilds the orbit segment by segment, and checks it with an exact
//! method-of-steps integrator.

pub mod asymptotics;
pub mod bifurcation;
pub mod dde;
pub mod derivatives;
pub mod error;
pub mod kernels;
pub mod orbit;
pub mod params;
pub mod reduced_map;
pub mod roots;
pub mod segment;

pub use error::{Error, Result};
pub use params::{eval_feedback, fixed_points, FeedbackParams, FixedPointsOfF};
