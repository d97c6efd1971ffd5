//! One-dimensional Brenier maps `ζ ↦ Q_ν(F(ζ))` from a Gaussian mixture to a
//! target law, their Gaussian smoothing, and the derivative of the map.

use crate::error::{Error, Result};
use crate::measures::{MarginalSpec, SmoothedLaw};
use crate::normal::{norm_pdf, Prob, LN_SQRT_2PI};
use crate::quadrature::QuadratureRule;

/// `F(ζ)` for a smoothed law.
pub fn cdf_eval(law: &SmoothedLaw, zeta: f64) -> Prob {
    law.cdf(zeta)
}

/// The monotone map pushing `source` onto `target`.
#[derive(Debug, Clone)]
pub struct BrenierMap1D<'a> {
    source: SmoothedLaw,
    target: &'a MarginalSpec,
}

impl<'a> BrenierMap1D<'a> {
    pub fn new(source: SmoothedLaw, target: &'a MarginalSpec) -> Result<Self> {
        for dim in [source.dim(), target.dim()] {
            if dim != 1 {
                return Err(Error::UnsupportedDimension { dim, what: "one-dimensional Brenier map" });
            }
        }
        Ok(BrenierMap1D { source, target })
    }

    pub fn source(&self) -> &SmoothedLaw {
        &self.source
    }

    pub fn target(&self) -> &MarginalSpec {
        self.target
    }

    /// `Q_ν(F(ζ))`, both tails clamped at `1e-16`.
    pub fn eval(&self, zeta: f64) -> f64 {
        self.target.quantile(self.source.cdf(zeta))
    }

    /// `Σ_k ω_k Q_ν(F(z + g_k))`.
    pub fn smoothed_eval(&self, rule: &QuadratureRule, z: f64) -> f64 {
        rule.iter().map(|(g, w)| w * self.eval(z + g)).sum()
    }

    /// `ln f_β(x)` by log-sum-exp over the mixture atoms.
    pub fn ln_source_density(&self, x: f64) -> f64 {
        ln_mixture_density(self.source.centers(), self.source.weights(), x)
    }

    /// Derivative of the map at `x`: `f_β(x) / f_ν(Q_ν(F(x)))`.
    ///
    /// At kinks of the target density the left density is used.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let q = self.eval(x);
        let ln_f = self.target.ln_density(q).ok_or(Error::DensityRequired)?;
        Ok((self.ln_source_density(x) - ln_f).exp())
    }
}

/// Free-function form of [`BrenierMap1D::eval`].
pub fn brenier_eval(map: &BrenierMap1D<'_>, zeta: f64) -> f64 {
    map.eval(zeta)
}

/// Free-function form of [`BrenierMap1D::smoothed_eval`].
pub fn smoothed_brenier_eval(map: &BrenierMap1D<'_>, rule: &QuadratureRule, z: f64) -> f64 {
    map.smoothed_eval(rule, z)
}

/// Free-function form of [`BrenierMap1D::derivative`].
pub fn hessian_eval(map: &BrenierMap1D<'_>, x: f64) -> Result<f64> {
    map.derivative(x)
}

/// `φ(|x| + R) / sup f_ν`, a floor for the map derivative whenever all
/// centers lie in `[-R, R]`.
pub fn hessian_lower_bound(r: f64, nu: &MarginalSpec, x: f64) -> Result<f64> {
    let sup = nu.density_sup().ok_or(Error::DensityRequired)?;
    Ok(norm_pdf(x.abs() + r.max(0.0)) / sup)
}

pub(crate) fn ln_mixture_density(centers: &[f64], weights: &[f64], x: f64) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (&z, &w) in centers.iter().zip(weights) {
        let d = x - z;
        m = m.max(w.ln() - 0.5 * d * d);
    }
    let mut s = 0.0;
    for (&z, &w) in centers.iter().zip(weights) {
        let d = x - z;
        s += (w.ln() - 0.5 * d * d - m).exp();
    }
    m + s.ln() - LN_SQRT_2PI
}
