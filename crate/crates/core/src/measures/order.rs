use crate::error::{Error, Result};

use super::discrete::DiscreteMeasure;
use super::marginal::MarginalSpec;

const GRID_POINTS: usize = 1024;
const STRICT_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-9;

/// Outcome of a convex-order comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexOrder {
    Ordered,
    /// `witness` is the grid point of largest potential violation, or the
    /// mean of `mu` when the barycenters differ.
    Violated { witness: f64 },
    /// No verdict is attempted in dimension two and above.
    Unknown,
}

impl ConvexOrder {
    pub fn is_ordered(self) -> bool {
        matches!(self, ConvexOrder::Ordered)
    }
}

/// `u_mu <= u_nu` on the merged grid with zero slack.
pub fn convex_order_check_1d(mu: &DiscreteMeasure, nu: &MarginalSpec) -> ConvexOrder {
    convex_order_check_with_slack(mu, nu, 0.0)
}

/// As [`convex_order_check_1d`] but tolerating `u_mu - u_nu <= slack`.
///
/// Means must agree within `max(1e-9, slack)`.
pub fn convex_order_check_with_slack(mu: &DiscreteMeasure, nu: &MarginalSpec, slack: f64) -> ConvexOrder {
    if mu.dim() != 1 || nu.dim() != 1 {
        return ConvexOrder::Unknown;
    }
    let mean_mu = mu.moments().barycenter[0];
    let mean_nu = nu.mean()[0];
    if (mean_mu - mean_nu).abs() > MEAN_TOL.max(slack) {
        return ConvexOrder::Violated { witness: mean_mu };
    }
    let mu_spec = MarginalSpec::empirical(mu.clone());
    let mut worst = (0.0, f64::NAN);
    for x in merged_grid(mu, nu) {
        let excess = mu_spec.potential(x) - nu.potential(x);
        if excess > slack && excess > worst.0 {
            worst = (excess, x);
        }
    }
    if worst.1.is_nan() {
        ConvexOrder::Ordered
    } else {
        ConvexOrder::Violated { witness: worst.1 }
    }
}

/// Strict potential-gap criterion for irreducibility in one dimension.
///
/// The pair is declared irreducible when `supp mu` sits in the open hull of
/// `supp nu` and `u_mu < u_nu` strictly on every grid point of that open hull
/// lying within `0.1 * stdev(nu)` of the hull of `mu`.
pub fn irreducibility_check_1d(mu: &DiscreteMeasure, nu: &MarginalSpec) -> Result<bool> {
    irreducibility_check_with_slack(mu, nu, 0.0)
}

/// Irreducibility after a convex-order check with the given slack.
pub fn irreducibility_check_with_slack(mu: &DiscreteMeasure, nu: &MarginalSpec, slack: f64) -> Result<bool> {
    match convex_order_check_with_slack(mu, nu, slack) {
        ConvexOrder::Ordered => {}
        ConvexOrder::Violated { witness } => return Err(Error::NotInConvexOrder { witness }),
        ConvexOrder::Unknown => {
            return Err(Error::UnsupportedDimension { dim: mu.dim().max(nu.dim()), what: "irreducibility" })
        }
    }
    let (a, b) = mu.hull_1d();
    let (lo, hi) = nu.support();
    if !(a > lo && b < hi) {
        return Ok(false);
    }
    let eps = 0.1 * nu.variance().max(0.0).sqrt();
    let mu_spec = MarginalSpec::empirical(mu.clone());
    for x in merged_grid(mu, nu) {
        if x <= lo || x >= hi || x < a - eps || x > b + eps {
            continue;
        }
        if mu_spec.potential(x) >= nu.potential(x) - STRICT_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

fn merged_grid(mu: &DiscreteMeasure, nu: &MarginalSpec) -> Vec<f64> {
    let (a, b) = mu.hull_1d();
    let (lo, hi) = nu.effective_support();
    let (lo, hi) = (lo.min(a), hi.max(b));
    let mut grid: Vec<f64> = mu.points().to_vec();
    grid.extend(nu.knots());
    if hi > lo {
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        grid.extend((0..GRID_POINTS).map(|k| lo + step * k as f64));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}
