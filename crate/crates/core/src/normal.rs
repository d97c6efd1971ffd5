//! Standard normal primitives with two-sided tail bookkeeping.
//!
//! A [`Prob`] carries both `P(X <= x)` and `P(X > x)`. Each side is computed
//! directly from `erfc`, so probabilities extremely close to one keep full
//! relative precision in their complement. Quantile functions pick whichever
//! side is smaller.

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Smallest probability fed to any quantile function.
pub const U_MIN: f64 = 1e-16;

/// A probability together with its complement, each held to full relative precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prob {
    pub lower: f64,
    pub upper: f64,
}

impl Prob {
    pub fn new(lower: f64, upper: f64) -> Self {
        Prob { lower, upper }
    }

    /// Builds from a lower-tail value; the complement is `1 - p`.
    pub fn from_lower(p: f64) -> Self {
        Prob { lower: p, upper: 1.0 - p }
    }

    pub fn from_upper(q: f64) -> Self {
        Prob { lower: 1.0 - q, upper: q }
    }

    /// Clamps both tails to `[U_MIN, 1 - U_MIN]`.
    pub fn clamped(self) -> Self {
        Prob {
            lower: self.lower.clamp(U_MIN, 1.0),
            upper: self.upper.clamp(U_MIN, 1.0),
        }
    }

    /// The lower-tail value as a plain number.
    pub fn value(self) -> f64 {
        if self.lower <= 0.5 {
            self.lower
        } else {
            1.0 - self.upper
        }
    }

    /// `true` when the lower tail is the smaller (more accurate) side.
    pub fn in_lower_half(self) -> bool {
        self.lower <= self.upper
    }
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `Phi(x)` and `1 - Phi(x)` with one `erfc` call.
#[inline]
pub fn norm_cdf(x: f64) -> Prob {
    let small = 0.5 * erfc(x.abs() / SQRT_2);
    if x < 0.0 {
        Prob { lower: small, upper: 1.0 - small }
    } else {
        Prob { lower: 1.0 - small, upper: small }
    }
}

/// Standard normal quantile. Tails must already be positive.
///
/// The rational approximation is refined by Halley steps on the smaller tail.
pub fn norm_quantile(p: Prob) -> f64 {
    let (target, sign) = if p.in_lower_half() { (p.lower, -1.0) } else { (p.upper, 1.0) };
    // Work with t >= 0 and the upper tail Q(t) = target.
    let mut t = SQRT_2 * erfc_inv(2.0 * target);
    if !t.is_finite() || t <= 0.0 {
        return sign * t.max(0.0);
    }
    for _ in 0..2 {
        let tail = 0.5 * erfc(t / SQRT_2);
        let dens = norm_pdf(t);
        if dens == 0.0 {
            break;
        }
        let r = (tail - target) / dens;
        t += r / (1.0 - 0.5 * t * r);
    }
    sign * t
}

/// `P(|G| > r)` for a standard normal vector in dimension 1 or 2.
pub fn radial_tail(r: f64, dim: usize) -> f64 {
    match dim {
        1 => 2.0 * norm_cdf(r).upper,
        2 => (-0.5 * r * r).exp(),
        _ => {
            // Chi tail through the regularized incomplete gamma function.
            statrs::function::gamma::gamma_ur(dim as f64 / 2.0, r * r / 2.0)
        }
    }
}

/// Smallest `r` with `P(|G| > r) <= tail` (bisection on the monotone tail).
pub fn radial_quantile(tail: f64, dim: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while radial_tail(hi, dim) > tail {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if radial_tail(mid, dim) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    hi
}
