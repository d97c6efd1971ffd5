//! Probability measures: discrete clouds, parametric targets, Gaussian
//! smoothing, maximal covariance and one-dimensional order checks.

mod discrete;
mod lp;
mod marginal;
mod mcov;
mod order;
mod smoothed;

pub use discrete::{fmt_f64, DiscreteMeasure, Moments, WEIGHT_RENORM_TOL};
pub use lp::{max_covariance_plan, TransportPlan, LP_ATOM_LIMIT};
pub use marginal::{clamp_level, EmpiricalLaw, MarginalSpec, GAUSSIAN_SPAN};
pub use mcov::{mcov, mcov_discrete, wasserstein2_1d, wasserstein2_discrete};
pub use order::{
    convex_order_check_1d, convex_order_check_with_slack, irreducibility_check_1d,
    irreducibility_check_with_slack, ConvexOrder,
};
pub use smoothed::{gaussian_smooth, SmoothedLaw};
