use crate::error::{Error, Result};
use crate::normal::{norm_cdf, norm_pdf, norm_quantile, Prob, INV_SQRT_2PI, U_MIN};
use crate::quadrature::integrate_adaptive;

use super::discrete::{neumaier_sum, DiscreteMeasure, WEIGHT_RENORM_TOL};

/// Number of standard deviations treated as the effective support of a Gaussian.
pub const GAUSSIAN_SPAN: f64 = 8.0;

/// A 1-D (or, for empirical clouds, d-dimensional) target law.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalSpec {
    Gaussian { mean: f64, stdev: f64 },
    Uniform { lo: f64, hi: f64 },
    Empirical(EmpiricalLaw),
    Mixture(Vec<(f64, MarginalSpec)>),
}

/// A discrete measure with cached sorted cumulative sums for 1-D queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    measure: DiscreteMeasure,
    sorted: Vec<f64>,
    // prefix[j] = mass of sorted atoms 0..j, suffix[j] = mass of atoms j..
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(measure: DiscreteMeasure) -> Self {
        if measure.dim() != 1 {
            return EmpiricalLaw { measure, sorted: vec![], prefix: vec![], suffix: vec![] };
        }
        let atoms = measure.sorted_1d();
        let n = atoms.len();
        let sorted = atoms.iter().map(|a| a.0).collect();
        let mut prefix = vec![0.0; n + 1];
        for j in 0..n {
            prefix[j + 1] = prefix[j] + atoms[j].1;
        }
        let mut suffix = vec![0.0; n + 1];
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1] + atoms[j].1;
        }
        EmpiricalLaw { measure, sorted, prefix, suffix }
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    /// Sorted atom positions and their masses.
    pub fn sorted_atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.sorted.iter().copied().zip(self.prefix.windows(2).map(|w| w[1] - w[0]))
    }

    fn cdf(&self, x: f64) -> Prob {
        let k = self.sorted.partition_point(|&a| a <= x);
        Prob::new(self.prefix[k], self.suffix[k])
    }

    fn cdf_left(&self, x: f64) -> Prob {
        let k = self.sorted.partition_point(|&a| a < x);
        Prob::new(self.prefix[k], self.suffix[k])
    }

    // Left-continuous inverse: min{x_j : F(x_j) >= u}.
    fn quantile(&self, p: Prob) -> f64 {
        let n = self.sorted.len();
        let j = if p.in_lower_half() {
            // smallest j with prefix[j + 1] >= u
            self.prefix[1..].partition_point(|&c| c < p.lower)
        } else {
            // smallest j with suffix[j + 1] <= 1 - u
            self.suffix[1..].partition_point(|&c| c > p.upper)
        };
        self.sorted[j.min(n - 1)]
    }
}

impl MarginalSpec {
    pub fn gaussian(mean: f64, stdev: f64) -> Result<Self> {
        if !mean.is_finite() || !stdev.is_finite() {
            return Err(Error::NonFinite("gaussian parameters".into()));
        }
        if stdev <= 0.0 {
            return Err(Error::InvalidConfig(format!("gaussian stdev must be positive, got {stdev}")));
        }
        Ok(MarginalSpec::Gaussian { mean, stdev })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("uniform bounds".into()));
        }
        if lo >= hi {
            return Err(Error::InvalidConfig(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(MarginalSpec::Uniform { lo, hi })
    }

    pub fn empirical(measure: DiscreteMeasure) -> Self {
        MarginalSpec::Empirical(EmpiricalLaw::new(measure))
    }

    pub fn dirac(x: f64) -> Result<Self> {
        Ok(Self::empirical(DiscreteMeasure::dirac(&[x])?))
    }

    /// Equal-weight atoms at the quantile midpoints `Q((i - 1/2) / n)`.
    pub fn discretize(&self, n: usize) -> Result<DiscreteMeasure> {
        if self.dim() != 1 {
            return Err(Error::UnsupportedDimension { dim: self.dim(), what: "quantile discretization" });
        }
        if n == 0 {
            return Err(Error::InvalidConfig("discretization needs at least one atom".into()));
        }
        let pts = (0..n).map(|i| self.quantile_at((i as f64 + 0.5) / n as f64)).collect();
        DiscreteMeasure::uniform(pts, 1)
    }

    pub fn mixture(components: Vec<(f64, MarginalSpec)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        for (index, (w, c)) in components.iter().enumerate() {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { index, value: *w });
            }
            if c.dim() != 1 {
                return Err(Error::UnsupportedDimension { dim: c.dim(), what: "mixture component" });
            }
        }
        let sum = neumaier_sum(components.iter().map(|c| c.0));
        if (sum - 1.0).abs() >= WEIGHT_RENORM_TOL {
            return Err(Error::WeightSumMismatch { sum });
        }
        Ok(MarginalSpec::Mixture(components.into_iter().map(|(w, c)| (w / sum, c)).collect()))
    }

    pub fn dim(&self) -> usize {
        match self {
            MarginalSpec::Empirical(e) => e.measure.dim(),
            _ => 1,
        }
    }

    /// The underlying cloud when the law is empirical.
    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            MarginalSpec::Empirical(e) => Some(&e.measure),
            _ => None,
        }
    }

    /// Barycenter (first coordinate in 1-D).
    pub fn mean(&self) -> Vec<f64> {
        match self {
            MarginalSpec::Gaussian { mean, .. } => vec![*mean],
            MarginalSpec::Uniform { lo, hi } => vec![0.5 * (lo + hi)],
            MarginalSpec::Empirical(e) => e.measure.moments().barycenter,
            MarginalSpec::Mixture(cs) => vec![cs.iter().map(|(w, c)| w * c.mean()[0]).sum()],
        }
    }

    /// `E|Y|^2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            MarginalSpec::Gaussian { mean, stdev } => mean * mean + stdev * stdev,
            MarginalSpec::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            MarginalSpec::Empirical(e) => e.measure.moments().second_moment,
            MarginalSpec::Mixture(cs) => cs.iter().map(|(w, c)| w * c.second_moment()).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m.iter().map(|x| x * x).sum::<f64>()
    }

    /// `true` if the law has a density (no atoms anywhere).
    pub fn has_density(&self) -> bool {
        match self {
            MarginalSpec::Gaussian { .. } | MarginalSpec::Uniform { .. } => true,
            MarginalSpec::Empirical(_) => false,
            MarginalSpec::Mixture(cs) => cs.iter().all(|(_, c)| c.has_density()),
        }
    }

    /// `(P(Y <= x), P(Y > x))`.
    pub fn cdf(&self, x: f64) -> Prob {
        match self {
            MarginalSpec::Gaussian { mean, stdev } => norm_cdf((x - mean) / stdev),
            MarginalSpec::Uniform { lo, hi } => {
                let width = hi - lo;
                if x <= *lo {
                    Prob::new(0.0, 1.0)
                } else if x >= *hi {
                    Prob::new(1.0, 0.0)
                } else {
                    Prob::new((x - lo) / width, (hi - x) / width)
                }
            }
            MarginalSpec::Empirical(e) => e.cdf(x),
            MarginalSpec::Mixture(cs) => {
                let (mut lower, mut upper) = (0.0, 0.0);
                for (w, c) in cs {
                    let p = c.cdf(x);
                    lower += w * p.lower;
                    upper += w * p.upper;
                }
                Prob::new(lower, upper)
            }
        }
    }

    /// `(P(Y < x), P(Y >= x))`.
    pub fn cdf_left(&self, x: f64) -> Prob {
        match self {
            MarginalSpec::Empirical(e) => e.cdf_left(x),
            MarginalSpec::Mixture(cs) => {
                let (mut lower, mut upper) = (0.0, 0.0);
                for (w, c) in cs {
                    let p = c.cdf_left(x);
                    lower += w * p.lower;
                    upper += w * p.upper;
                }
                Prob::new(lower, upper)
            }
            _ => self.cdf(x),
        }
    }

    /// Left-continuous density, `None` when the law has atoms.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            MarginalSpec::Gaussian { mean, stdev } => Some(norm_pdf((x - mean) / stdev) / stdev),
            MarginalSpec::Uniform { lo, hi } => {
                Some(if x > *lo && x <= *hi { 1.0 / (hi - lo) } else { 0.0 })
            }
            MarginalSpec::Empirical(_) => None,
            MarginalSpec::Mixture(cs) => {
                let mut total = 0.0;
                for (w, c) in cs {
                    total += w * c.density(x)?;
                }
                Some(total)
            }
        }
    }

    /// Logarithm of the left density; `None` when the law has atoms.
    pub fn ln_density(&self, x: f64) -> Option<f64> {
        match self {
            MarginalSpec::Gaussian { mean, stdev } => {
                Some(crate::normal::ln_norm_pdf((x - mean) / stdev) - stdev.ln())
            }
            _ => self.density(x).map(f64::ln),
        }
    }

    /// An upper bound on the density (exact for a single component).
    pub fn density_sup(&self) -> Option<f64> {
        match self {
            MarginalSpec::Gaussian { stdev, .. } => Some(INV_SQRT_2PI / stdev),
            MarginalSpec::Uniform { lo, hi } => Some(1.0 / (hi - lo)),
            MarginalSpec::Empirical(_) => None,
            MarginalSpec::Mixture(cs) => {
                let mut total = 0.0;
                for (w, c) in cs {
                    total += w * c.density_sup()?;
                }
                Some(total)
            }
        }
    }

    /// Quantile at `p`, with both tails clamped to `U_MIN`.
    pub fn quantile(&self, p: Prob) -> f64 {
        let p = p.clamped();
        match self {
            MarginalSpec::Gaussian { mean, stdev } => mean + stdev * norm_quantile(p),
            MarginalSpec::Uniform { lo, hi } => {
                if p.in_lower_half() {
                    lo + (hi - lo) * p.lower
                } else {
                    hi - (hi - lo) * p.upper
                }
            }
            MarginalSpec::Empirical(e) => e.quantile(p),
            MarginalSpec::Mixture(cs) => mixture_quantile(cs, p),
        }
    }

    /// `Q(u)` for a plain lower-tail level.
    pub fn quantile_at(&self, u: f64) -> f64 {
        self.quantile(Prob::from_lower(u))
    }

    /// `dQ/du` at `p`, i.e. `1 / density(Q(p))` using the left density.
    pub fn quantile_derivative(&self, p: Prob) -> Result<f64> {
        let x = self.quantile(p);
        let f = self.density(x).ok_or(Error::DensityRequired)?;
        Ok(1.0 / f)
    }

    /// Closed hull of the support, infinite for Gaussian components.
    pub fn support(&self) -> (f64, f64) {
        match self {
            MarginalSpec::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            MarginalSpec::Uniform { lo, hi } => (*lo, *hi),
            MarginalSpec::Empirical(e) => e.measure.hull_1d(),
            MarginalSpec::Mixture(cs) => cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, (_, c)| {
                let (a, b) = c.support();
                (acc.0.min(a), acc.1.max(b))
            }),
        }
    }

    /// Finite interval carrying all but a negligible amount of mass.
    pub fn effective_support(&self) -> (f64, f64) {
        match self {
            MarginalSpec::Gaussian { mean, stdev } => {
                (mean - GAUSSIAN_SPAN * stdev, mean + GAUSSIAN_SPAN * stdev)
            }
            MarginalSpec::Mixture(cs) => cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, (_, c)| {
                let (a, b) = c.effective_support();
                (acc.0.min(a), acc.1.max(b))
            }),
            _ => self.support(),
        }
    }

    /// Points where the cdf or its derivative may be non-smooth.
    pub fn knots(&self) -> Vec<f64> {
        match self {
            MarginalSpec::Gaussian { mean, .. } => vec![*mean],
            MarginalSpec::Uniform { lo, hi } => vec![*lo, *hi],
            MarginalSpec::Empirical(e) => e.sorted.clone(),
            MarginalSpec::Mixture(cs) => cs.iter().flat_map(|(_, c)| c.knots()).collect(),
        }
    }

    /// Potential `u(x) = E|x - Y|`.
    pub fn potential(&self, x: f64) -> f64 {
        match self {
            MarginalSpec::Gaussian { mean, stdev } => {
                let t = (x - mean) / stdev;
                let p = norm_cdf(t);
                (x - mean) * (p.lower - p.upper) + 2.0 * stdev * norm_pdf(t)
            }
            MarginalSpec::Uniform { lo, hi } => {
                if x <= *lo || x >= *hi {
                    (x - 0.5 * (lo + hi)).abs()
                } else {
                    ((x - lo).powi(2) + (hi - x).powi(2)) / (2.0 * (hi - lo))
                }
            }
            MarginalSpec::Empirical(e) => {
                e.measure.iter().map(|(p, w)| w * (x - p[0]).abs()).sum()
            }
            MarginalSpec::Mixture(cs) => cs.iter().map(|(w, c)| w * c.potential(x)).sum(),
        }
    }

    /// `E[Y; a < Y <= b]`.
    pub fn partial_expectation(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        match self {
            MarginalSpec::Gaussian { mean, stdev } => {
                let (alpha, beta) = ((a - mean) / stdev, (b - mean) / stdev);
                let (pa, pb) = (norm_cdf(alpha), norm_cdf(beta));
                let mass = if alpha >= 0.0 { pa.upper - pb.upper } else { pb.lower - pa.lower };
                let da = if alpha.is_finite() { norm_pdf(alpha) } else { 0.0 };
                let db = if beta.is_finite() { norm_pdf(beta) } else { 0.0 };
                mean * mass + stdev * (da - db)
            }
            MarginalSpec::Uniform { lo, hi } => {
                let (l, h) = (a.max(*lo), b.min(*hi));
                if l >= h {
                    0.0
                } else {
                    (h - l) / (hi - lo) * 0.5 * (l + h)
                }
            }
            MarginalSpec::Empirical(e) => e
                .measure
                .iter()
                .filter(|(p, _)| p[0] > a && p[0] <= b)
                .map(|(p, w)| w * p[0])
                .sum(),
            MarginalSpec::Mixture(cs) => cs.iter().map(|(w, c)| w * c.partial_expectation(a, b)).sum(),
        }
    }

    /// `∫_{ua}^{ub} Q(u) du` for `0 <= ua <= ub <= 1`.
    pub fn quantile_integral(&self, ua: f64, ub: f64) -> f64 {
        if !(ua < ub) {
            return 0.0;
        }
        match self {
            MarginalSpec::Gaussian { mean, stdev } => {
                let pdf_at = |u: f64| {
                    if u <= 0.0 || u >= 1.0 {
                        0.0
                    } else {
                        norm_pdf(norm_quantile(Prob::from_lower(u)))
                    }
                };
                mean * (ub - ua) + stdev * (pdf_at(ua) - pdf_at(ub))
            }
            MarginalSpec::Uniform { lo, hi } => {
                (ub - ua) * (lo + (hi - lo) * 0.5 * (ua + ub))
            }
            MarginalSpec::Empirical(e) => {
                let mut total = 0.0;
                for (k, &x) in e.sorted.iter().enumerate() {
                    let l = e.prefix[k].max(ua);
                    let h = e.prefix[k + 1].min(ub);
                    if h > l {
                        total += (h - l) * x;
                    }
                }
                total
            }
            MarginalSpec::Mixture(_) if self.has_density() => {
                let xa = if ua <= 0.0 { f64::NEG_INFINITY } else { self.quantile_at(ua) };
                let xb = if ub >= 1.0 { f64::INFINITY } else { self.quantile_at(ub) };
                self.partial_expectation(xa, xb)
            }
            MarginalSpec::Mixture(_) => {
                integrate_adaptive(|u| self.quantile_at(u), ua, ub, 1e-13, 1e-12)
            }
        }
    }
}

fn mixture_quantile(cs: &[(f64, MarginalSpec)], p: Prob) -> f64 {
    let spec_cdf = |x: f64| {
        let (mut lower, mut upper) = (0.0, 0.0);
        for (w, c) in cs {
            let q = c.cdf(x);
            lower += w * q.lower;
            upper += w * q.upper;
        }
        Prob::new(lower, upper)
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, c) in cs {
        let q = c.quantile(p);
        lo = lo.min(q);
        hi = hi.max(q);
    }
    if lo == hi {
        return lo;
    }
    // F(lo) <= u <= F(hi); shrink to the left-continuous inverse.
    let below = |x: f64| {
        let f = spec_cdf(x);
        if p.in_lower_half() {
            f.lower < p.lower
        } else {
            f.upper > p.upper
        }
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Clamp a lower-tail level into `[U_MIN, 1 - U_MIN]`.
pub fn clamp_level(u: f64) -> f64 {
    u.clamp(U_MIN, 1.0 - U_MIN)
}
