//! Gauss–Hermite rules against the standard normal weight and an adaptive
//! Gauss–Kronrod integrator for one-dimensional integrals.

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 64;

/// Nodes and weights with `sum_k w_k f(g_k) ≈ E[f(G)]`, `G ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Probabilists' Gauss–Hermite rule of the given order.
    ///
    /// Roots of the orthonormal Hermite polynomials are located by Newton
    /// iteration from the classical asymptotic starting guesses, then mapped
    /// from the `exp(-x^2)` weight to the standard normal density.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 || order > 400 {
            return Err(Error::InvalidConfig(format!(
                "quadrature order must be in 1..=400, got {order}"
            )));
        }
        let n = order;
        let half = n.div_ceil(2);
        let mut roots = vec![0.0f64; half];
        let mut wts = vec![0.0f64; half];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut z = 0.0f64;
        for i in 0..half {
            z = match i {
                0 => {
                    let m = (2 * n + 1) as f64;
                    m.sqrt() - 1.85575 * m.powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * roots[0],
                3 => 1.91 * z - 0.91 * roots[1],
                _ => 2.0 * z - roots[i - 2],
            };
            for _ in 0..100 {
                let (p1, p2) = hermite_orthonormal(n, z, pim4);
                let dz = p1 / ((2.0 * n as f64).sqrt() * p2);
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, p2) = hermite_orthonormal(n, z, pim4);
            let pp = (2.0 * n as f64).sqrt() * p2;
            roots[i] = z;
            wts[i] = 2.0 / (pp * pp);
        }

        // Assemble ascending, mapping x -> sqrt(2) x and w -> w / sqrt(pi).
        let scale = 1.0 / std::f64::consts::PI.sqrt();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..half {
            if n % 2 == 1 && i == half - 1 {
                continue;
            }
            nodes.push(-std::f64::consts::SQRT_2 * roots[i]);
            weights.push(wts[i] * scale);
        }
        if n % 2 == 1 {
            nodes.push(0.0);
            weights.push(wts[half - 1] * scale);
        }
        for i in (0..half).rev() {
            if n % 2 == 1 && i == half - 1 {
                continue;
            }
            nodes.push(std::f64::consts::SQRT_2 * roots[i]);
            weights.push(wts[i] * scale);
        }
        let total: f64 = pairwise_sum(&weights);
        for w in &mut weights {
            *w /= total;
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// The same rule for `N(0, s^2)`.
    pub fn scaled(&self, s: f64) -> QuadratureRule {
        QuadratureRule {
            nodes: self.nodes.iter().map(|g| g * s).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Drops nodes whose weight is below `rel * max weight`; the rest are kept as is.
    pub fn pruned(&self, rel: f64) -> QuadratureRule {
        let cut = rel * self.weights.iter().copied().fold(0.0, f64::max);
        let (nodes, weights) = self.iter().filter(|&(_, w)| w >= cut).unzip();
        QuadratureRule { nodes, weights }
    }

    /// `E[f(G)]` for `G ~ N(0, 1)`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(g, w)| w * f(g)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::gauss_hermite(DEFAULT_ORDER).expect("default order is valid")
    }
}

// Returns (p_n(z), p_{n-1}(z)) for the orthonormal Hermite recursion.
fn hermite_orthonormal(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK constants).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Nodes and weights of the 15-point Kronrod rule repeated on equal panels
/// of width at most `panel` covering `[a, b]`.
pub fn kronrod_panels(a: f64, b: f64, panel: f64) -> Vec<(f64, f64)> {
    let count = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = 0.5 * (b - a) / count as f64;
    let mut out = Vec::with_capacity(15 * count);
    for p in 0..count {
        let c = a + (2 * p + 1) as f64 * h;
        for j in 0..7 {
            out.push((c - h * XGK[j], h * WGK[j]));
            out.push((c + h * XGK[j], h * WGK[j]));
        }
        out.push((c, h * WGK[7]));
    }
    out
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Subintervals are bisected until the Kronrod/Gauss discrepancy on each is
/// below its share of `abs_tol`, or a relative `rel_tol` of the running total.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let width = b - a;
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (est, err) = gk15(&mut f, lo, hi);
        let share = (hi - lo) / width;
        let budget = (abs_tol * share).max(rel_tol * est.abs());
        if err <= budget || depth >= 48 {
            total += est;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Adaptive integration over consecutive breakpoints.
pub fn integrate_piecewise(
    mut f: impl FnMut(f64) -> f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let n = breaks.len().saturating_sub(1).max(1) as f64;
    breaks
        .windows(2)
        .map(|w| integrate_adaptive(&mut f, w[0], w[1], abs_tol / n, rel_tol))
        .sum()
}
