use crate::error::Result;
use crate::normal::{ln_norm_pdf, norm_cdf, Prob};

use super::discrete::DiscreteMeasure;
use super::marginal::MarginalSpec;

/// The law of `Z + G`, `G` a standard Gaussian independent of `Z`.
///
/// In one dimension the centers are kept sorted with running weight sums so
/// that atoms more than `CDF_WINDOW` away from the query are summed without
/// evaluating `erfc`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLaw {
    dim: usize,
    centers: Vec<f64>,
    weights: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

/// Beyond this distance `Φ` is within `1e-19` of 0 or 1.
const CDF_WINDOW: f64 = 9.0;

/// Convolve a discrete measure with the unit Gaussian kernel.
pub fn gaussian_smooth(m: &DiscreteMeasure) -> SmoothedLaw {
    SmoothedLaw::from_parts(m.dim(), m.points().to_vec(), m.weights().to_vec())
}

impl SmoothedLaw {
    /// Builds from centers and weights already known to be valid.
    pub(crate) fn from_parts(dim: usize, centers: Vec<f64>, weights: Vec<f64>) -> Self {
        if dim != 1 {
            return SmoothedLaw { dim, centers, weights, prefix: vec![], suffix: vec![] };
        }
        let mut atoms: Vec<(f64, f64)> = centers.into_iter().zip(weights).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (centers, weights): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
        let n = centers.len();
        let mut prefix = vec![0.0; n + 1];
        let mut suffix = vec![0.0; n + 1];
        for j in 0..n {
            prefix[j + 1] = prefix[j] + weights[j];
        }
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1] + weights[j];
        }
        SmoothedLaw { dim, centers, weights, prefix, suffix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `F(ζ) = Σ w_i Φ(ζ - z_i)` with both tails (1-D).
    pub fn cdf(&self, zeta: f64) -> Prob {
        debug_assert_eq!(self.dim, 1);
        let n = self.centers.len();
        let (zmin, zmax) = (self.centers[0], self.centers[n - 1]);
        // Atoms left of `lo` contribute their full weight to the lower tail and a
        // negligible share of the upper tail (relative to its dominant term).
        let lo = zeta.min(zmax) - CDF_WINDOW;
        let hi = zeta.max(zmin) + CDF_WINDOW;
        let a = self.centers.partition_point(|&z| z < lo);
        let b = self.centers.partition_point(|&z| z <= hi);
        let (mut lower, mut upper) = (self.prefix[a], self.suffix[b]);
        for j in a..b {
            let p = norm_cdf(zeta - self.centers[j]);
            lower += self.weights[j] * p.lower;
            upper += self.weights[j] * p.upper;
        }
        Prob::new(lower, upper)
    }

    /// Density of the mixture at `ζ` (any dimension).
    pub fn density(&self, zeta: &[f64]) -> f64 {
        self.ln_density(zeta).exp()
    }

    /// Log-density evaluated by log-sum-exp.
    pub fn ln_density(&self, zeta: &[f64]) -> f64 {
        let d = self.dim;
        let terms: Vec<f64> = self
            .centers
            .chunks_exact(d)
            .zip(&self.weights)
            .map(|(c, &w)| w.ln() + c.iter().zip(zeta).map(|(a, b)| ln_norm_pdf(b - a)).sum::<f64>())
            .collect();
        log_sum_exp(&terms)
    }

    /// The same law as a Gaussian mixture specification (1-D).
    pub fn to_spec(&self) -> Result<MarginalSpec> {
        if self.weights.len() == 1 {
            return MarginalSpec::gaussian(self.centers[0], 1.0);
        }
        let comps = self
            .centers
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| Ok((w, MarginalSpec::gaussian(z, 1.0)?)))
            .collect::<Result<Vec<_>>>()?;
        MarginalSpec::mixture(comps)
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}
