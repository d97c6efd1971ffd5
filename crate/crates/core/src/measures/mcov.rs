use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, integrate_piecewise};

use super::discrete::DiscreteMeasure;
use super::lp::{max_covariance_plan, TransportPlan};
use super::marginal::{EmpiricalLaw, MarginalSpec};

const SPAN: f64 = 12.0;

/// Maximal covariance `sup_π ∫<x, y> dπ` over couplings of `p` and `q`.
///
/// In one dimension the comonotone pairing is summed exactly when both laws
/// are discrete and integrated adaptively otherwise. Higher dimensions need
/// two discrete clouds and go through the transport LP.
pub fn mcov(p: &MarginalSpec, q: &MarginalSpec) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!("mcov of dimensions {} and {}", p.dim(), q.dim())));
    }
    if p.dim() >= 2 {
        return match (p, q) {
            (MarginalSpec::Empirical(a), MarginalSpec::Empirical(b)) => {
                Ok(max_covariance_plan(a.measure(), b.measure())?.value)
            }
            _ => Err(Error::UnsupportedDimension { dim: p.dim(), what: "mcov with a parametric law" }),
        };
    }
    match (p, q) {
        (MarginalSpec::Empirical(a), MarginalSpec::Empirical(b)) => Ok(merged_walk(a, b)),
        (MarginalSpec::Empirical(a), other) | (other, MarginalSpec::Empirical(a)) => {
            Ok(discrete_against(a, other))
        }
        _ if p.has_density() => Ok(x_space_integral(p, q)),
        _ if q.has_density() => Ok(x_space_integral(q, p)),
        _ => Ok(integrate_adaptive(|u| p.quantile_at(u) * q.quantile_at(u), 0.0, 1.0, 1e-12, 1e-12)),
    }
}

/// Convenience wrapper for two discrete measures.
pub fn mcov_discrete(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    mcov(&MarginalSpec::empirical(p.clone()), &MarginalSpec::empirical(q.clone()))
}

/// `W_2` in one dimension, via `m2(p) + m2(q) - 2 mcov(p, q)`.
pub fn wasserstein2_1d(p: &MarginalSpec, q: &MarginalSpec) -> Result<f64> {
    for s in [p, q] {
        if s.dim() != 1 {
            return Err(Error::UnsupportedDimension { dim: s.dim(), what: "wasserstein2_1d" });
        }
    }
    let c = mcov(p, q)?;
    Ok((p.second_moment() + q.second_moment() - 2.0 * c).max(0.0).sqrt())
}

/// `W_2` between discrete clouds of any dimension (LP for `d >= 2`).
pub fn wasserstein2_discrete(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let c = if p.dim() == 1 {
        mcov_discrete(p, q)?
    } else {
        let TransportPlan { value, .. } = max_covariance_plan(p, q)?;
        value
    };
    let (mp, mq) = (p.moments().second_moment, q.moments().second_moment);
    Ok((mp + mq - 2.0 * c).max(0.0).sqrt())
}

fn merged_walk(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    let xs: Vec<(f64, f64)> = a.sorted_atoms().collect();
    let ys: Vec<(f64, f64)> = b.sorted_atoms().collect();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (xs[0].1, ys[0].1);
    let mut acc = 0.0;
    while i < xs.len() && j < ys.len() {
        let mass = ra.min(rb);
        acc += mass * xs[i].0 * ys[j].0;
        ra -= mass;
        rb -= mass;
        if ra <= 0.0 {
            i += 1;
            ra = xs.get(i).map_or(0.0, |a| a.1);
        }
        if rb <= 0.0 {
            j += 1;
            rb = ys.get(j).map_or(0.0, |b| b.1);
        }
    }
    acc
}

fn discrete_against(a: &EmpiricalLaw, q: &MarginalSpec) -> f64 {
    let mut acc = 0.0;
    let mut c = 0.0;
    let atoms: Vec<(f64, f64)> = a.sorted_atoms().collect();
    let last = atoms.len() - 1;
    for (k, (x, w)) in atoms.into_iter().enumerate() {
        let next = if k == last { 1.0 } else { c + w };
        acc += x * q.quantile_integral(c, next);
        c = next;
    }
    acc
}

// ∫ x Q_q(F_p(x)) f_p(x) dx for p with a density.
fn x_space_integral(p: &MarginalSpec, q: &MarginalSpec) -> f64 {
    let (lo, hi) = integration_range(p);
    let mut breaks: Vec<f64> = p.knots().into_iter().filter(|k| *k > lo && *k < hi).collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    integrate_piecewise(
        |x| {
            let f = p.density(x).unwrap_or(0.0);
            if f == 0.0 {
                0.0
            } else {
                x * q.quantile(p.cdf(x)) * f
            }
        },
        &breaks,
        1e-13,
        1e-13,
    )
}

fn integration_range(p: &MarginalSpec) -> (f64, f64) {
    match p {
        MarginalSpec::Gaussian { mean, stdev } => (mean - SPAN * stdev, mean + SPAN * stdev),
        MarginalSpec::Mixture(cs) => cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, (_, c)| {
            let (a, b) = integration_range(c);
            (acc.0.min(a), acc.1.max(b))
        }),
        _ => p.support(),
    }
}
