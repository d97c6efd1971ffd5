//! The lifted functional on coupled particle states `(x_i, z_i, w_i)`:
//!
//! `V(Z) = E[<Z + G, T(Z + G)>] - E[<Z, X>]`, where `T` is the monotone map
//! from the law of `Z + G` onto `ν` and `G` is an independent standard
//! Gaussian integrated by Gauss–Hermite quadrature.

use crate::error::{Error, Result};
use crate::measures::{gaussian_smooth, DiscreteMeasure, MarginalSpec, SmoothedLaw};
use crate::normal::{Prob, LN_SQRT_2PI};
use crate::quadrature::{kronrod_panels, QuadratureRule};

/// Hermite nodes lighter than this (relative to the heaviest) are skipped.
pub const NODE_PRUNE: f64 = 1e-18;

/// Atoms of `μ` paired with the current values of `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    dim: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
}

/// A perturbation of `Z`, one vector per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    dim: usize,
    dz: Vec<f64>,
}

/// Value and gradient at a state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Direction,
}

/// Anything that can price a state; the flow integrator is generic over it.
pub trait Objective {
    fn evaluate(&mut self, state: &LiftedState) -> Result<Evaluation>;
}

impl LiftedState {
    pub fn new(x: Vec<f64>, z: Vec<f64>, w: Vec<f64>, dim: usize) -> Result<Self> {
        let base = DiscreteMeasure::validate(x, w, dim)?;
        Self::from_measure(&base, z)
    }

    pub fn from_measure(mu: &DiscreteMeasure, z: Vec<f64>) -> Result<Self> {
        if z.len() != mu.points().len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values of Z for {} coordinates of X",
                z.len(),
                mu.points().len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Z".into()));
        }
        Ok(LiftedState { dim: mu.dim(), x: mu.points().to_vec(), z, w: mu.weights().to_vec() })
    }

    /// `Z = X`.
    pub fn identity(mu: &DiscreteMeasure) -> Self {
        LiftedState { dim: mu.dim(), x: mu.points().to_vec(), z: mu.points().to_vec(), w: mu.weights().to_vec() }
    }

    /// `Z` equal to the same point `c` on every atom.
    pub fn constant(mu: &DiscreteMeasure, c: &[f64]) -> Result<Self> {
        let z = c.iter().copied().cycle().take(mu.points().len()).collect();
        Self::from_measure(mu, z)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn x_law(&self) -> DiscreteMeasure {
        DiscreteMeasure::validate(self.x.clone(), self.w.clone(), self.dim).expect("validated at construction")
    }

    pub fn z_law(&self) -> DiscreteMeasure {
        DiscreteMeasure::validate(self.z.clone(), self.w.clone(), self.dim).expect("validated at construction")
    }

    /// Same base, new values of `Z`.
    pub fn with_z(&self, z: Vec<f64>) -> Result<Self> {
        if z.len() != self.z.len() {
            return Err(Error::DimensionMismatch(format!("{} values for {}", z.len(), self.z.len())));
        }
        Ok(LiftedState { z, ..self.clone() })
    }

    /// `Z + t * d`.
    pub fn shifted(&self, d: &Direction, t: f64) -> LiftedState {
        let z = self.z.iter().zip(&d.dz).map(|(z, v)| z + t * v).collect();
        LiftedState { z, ..self.clone() }
    }

    /// `Z' - Z` as a direction.
    pub fn difference(&self, other: &LiftedState) -> Direction {
        Direction { dim: self.dim, dz: other.z.iter().zip(&self.z).map(|(a, b)| a - b).collect() }
    }

    pub fn z_barycenter(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for (p, &w) in self.z.chunks_exact(self.dim).zip(&self.w) {
            for (bk, v) in b.iter_mut().zip(p) {
                *bk += w * v;
            }
        }
        b
    }

    /// Largest Euclidean norm of any `z_i`.
    pub fn max_abs_z(&self) -> f64 {
        self.z.chunks_exact(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// `E|Z|^2`.
    pub fn z_second_moment(&self) -> f64 {
        self.z.chunks_exact(self.dim).zip(&self.w).map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// `||Z - Z'||` in `L^2`.
    pub fn distance(&self, other: &LiftedState) -> f64 {
        self.difference(other).norm(&self.w)
    }
}

impl Direction {
    pub fn new(dz: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || dz.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!("{} entries in dimension {dim}", dz.len())));
        }
        if dz.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("direction".into()));
        }
        Ok(Direction { dim, dz })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Direction { dim, dz: vec![0.0; n * dim] }
    }

    pub fn values(&self) -> &[f64] {
        &self.dz
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dz.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dz.is_empty()
    }

    /// `E<D, D'>` under the atom weights.
    pub fn dot(&self, other: &Direction, w: &[f64]) -> f64 {
        self.dz
            .chunks_exact(self.dim)
            .zip(other.dz.chunks_exact(self.dim))
            .zip(w)
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn norm(&self, w: &[f64]) -> f64 {
        self.dot(self, w).sqrt()
    }

    pub fn mean(&self, w: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, &wi) in self.dz.chunks_exact(self.dim).zip(w) {
            for (mk, v) in m.iter_mut().zip(p) {
                *mk += wi * v;
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Direction {
        Direction { dim: self.dim, dz: self.dz.iter().map(|v| s * v).collect() }
    }

    /// Adds a constant vector to every atom.
    pub fn offset(&self, c: &[f64]) -> Direction {
        let mut dz = self.dz.clone();
        for p in dz.chunks_exact_mut(self.dim) {
            for (v, ck) in p.iter_mut().zip(c) {
                *v += ck;
            }
        }
        Direction { dim: self.dim, dz }
    }
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn require_1d(s: &LiftedState, nu: &MarginalSpec) -> Result<()> {
    for dim in [s.dim, nu.dim()] {
        if dim != 1 {
            return Err(Error::UnsupportedDimension { dim, what: "one-dimensional lifted functional" });
        }
    }
    Ok(())
}

fn smoothed(s: &LiftedState) -> SmoothedLaw {
    gaussian_smooth(&s.z_law())
}

/// The one-dimensional objective with a pruned quadrature rule.
#[derive(Debug, Clone)]
pub struct Lifted1D<'a> {
    nu: &'a MarginalSpec,
    rule: QuadratureRule,
}

impl<'a> Lifted1D<'a> {
    pub fn new(nu: &'a MarginalSpec, rule: &QuadratureRule) -> Result<Self> {
        if nu.dim() != 1 {
            return Err(Error::UnsupportedDimension { dim: nu.dim(), what: "one-dimensional lifted functional" });
        }
        Ok(Lifted1D { nu, rule: rule.pruned(NODE_PRUNE) })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }
}

impl Objective for Lifted1D<'_> {
    fn evaluate(&mut self, state: &LiftedState) -> Result<Evaluation> {
        require_1d(state, self.nu)?;
        let law = smoothed(state);
        let n = state.len();
        let mut grad = Vec::with_capacity(n);
        let mut value = 0.0;
        for i in 0..n {
            let (zi, xi) = (state.z[i], state.x[i]);
            let (mut mean_map, mut cross) = (0.0, 0.0);
            for (g, om) in self.rule.iter() {
                let q = self.nu.quantile(law.cdf(zi + g));
                mean_map += om * q;
                cross += om * g * q;
            }
            let gi = mean_map - xi;
            // (z + g) q summed over nodes, minus z x, regrouped as z (E q - x) + E[g q].
            value += state.w[i] * (zi * gi + cross);
            grad.push(gi);
        }
        Ok(Evaluation { value, gradient: Direction { dim: 1, dz: grad } })
    }
}

/// Value and gradient in one pass (1-D).
pub fn evaluate(s: &LiftedState, nu: &MarginalSpec, rule: &QuadratureRule) -> Result<Evaluation> {
    Lifted1D::new(nu, rule)?.evaluate(s)
}

/// `V(Z)`.
pub fn bass_value(s: &LiftedState, nu: &MarginalSpec, rule: &QuadratureRule) -> Result<f64> {
    Ok(evaluate(s, nu, rule)?.value)
}

/// `g_i = Σ_k ω_k T(z_i + g_k) - x_i`.
pub fn gradient(s: &LiftedState, nu: &MarginalSpec, rule: &QuadratureRule) -> Result<Direction> {
    Ok(evaluate(s, nu, rule)?.gradient)
}

// Log-space weights `ln(w_j φ(ζ - z_j))` at ζ, with their log-sum and the
// conditional mean of `dz`.
struct Kernel {
    ln_density: f64,
    cond_mean: f64,
}

fn kernel(s: &LiftedState, dz: &[f64], zeta: f64, logs: &mut Vec<f64>) -> Result<Kernel> {
    if !zeta.is_finite() {
        return Err(Error::DegenerateKernel { zeta });
    }
    logs.clear();
    let mut m = f64::NEG_INFINITY;
    for (&z, &w) in s.z.iter().zip(&s.w) {
        let d = zeta - z;
        let l = w.ln() - 0.5 * d * d - LN_SQRT_2PI;
        m = m.max(l);
        logs.push(l);
    }
    let (mut den, mut num) = (0.0, 0.0);
    for (l, &v) in logs.iter().zip(dz) {
        let e = (l - m).exp();
        den += e;
        num += e * v;
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateKernel { zeta });
    }
    Ok(Kernel { ln_density: m + den.ln(), cond_mean: num / den })
}

/// `E[ΔZ | Z + G = ζ]`, computed in log space (1-D).
pub fn conditional_expectation(s: &LiftedState, d: &Direction, zeta: f64) -> Result<f64> {
    if s.dim != 1 || d.dz.len() != s.z.len() {
        return Err(Error::DimensionMismatch("conditional expectation needs a 1-D state and matching direction".into()));
    }
    Ok(kernel(s, &d.dz, zeta, &mut Vec::with_capacity(s.len()))?.cond_mean)
}

/// Half-width beyond the outermost atoms of the ζ-grid used for second-order
/// quantities; `φ(12)` is below `1e-31`.
const ZETA_MARGIN: f64 = 12.0;
const ZETA_PANEL: f64 = 0.5;

// Integrates over ζ on a fixed composite grid common to all atoms, so that
// conditional-expectation identities hold to rounding. `visit` receives the
// node weight, the kernel, and per-atom log weights `ln(w_i φ(ζ - z_i))`.
fn zeta_pass(s: &LiftedState, dz: &[f64], mut visit: impl FnMut(f64, f64, &Kernel, &[f64]) -> Result<()>) -> Result<()> {
    let (lo, hi) = s.z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    let mut logs = Vec::with_capacity(s.len());
    for (zeta, weight) in kronrod_panels(lo - ZETA_MARGIN, hi + ZETA_MARGIN, ZETA_PANEL) {
        let k = kernel(s, dz, zeta, &mut logs)?;
        visit(zeta, weight, &k, &logs)?;
    }
    Ok(())
}

fn check_second_order(s: &LiftedState, d: &Direction, nu: &MarginalSpec) -> Result<()> {
    require_1d(s, nu)?;
    if !nu.has_density() {
        return Err(Error::DensityRequired);
    }
    if d.dz.len() != s.z.len() {
        return Err(Error::DimensionMismatch("direction length".into()));
    }
    Ok(())
}

fn map_derivative(law: &SmoothedLaw, nu: &MarginalSpec, zeta: f64, ln_f: f64) -> Result<f64> {
    let q = nu.quantile(law.cdf(zeta));
    let ln_target = nu.ln_density(q).ok_or(Error::DensityRequired)?;
    Ok((ln_f - ln_target).exp())
}

/// `E[Hv(Z+G) (ΔZ - E[ΔZ | Z+G])^2]`.
pub fn hessian_quadratic_form(s: &LiftedState, d: &Direction, nu: &MarginalSpec) -> Result<f64> {
    check_second_order(s, d, nu)?;
    let law = smoothed(s);
    let mut total = 0.0;
    zeta_pass(s, &d.dz, |zeta, weight, k, logs| {
        let hv = map_derivative(&law, nu, zeta, k.ln_density)?;
        let inner: f64 = logs.iter().zip(&d.dz).map(|(l, v)| l.exp() * (v - k.cond_mean).powi(2)).sum();
        total += weight * hv * inner;
        Ok(())
    })?;
    Ok(total)
}

/// Time derivative of the gradient along `Z + tΔZ` at `t = 0`.
pub fn grad_time_derivative(s: &LiftedState, d: &Direction, nu: &MarginalSpec) -> Result<Direction> {
    check_second_order(s, d, nu)?;
    let law = smoothed(s);
    let mut out = vec![0.0; s.len()];
    zeta_pass(s, &d.dz, |zeta, weight, k, logs| {
        let hv = map_derivative(&law, nu, zeta, k.ln_density)?;
        for ((o, l), (v, w)) in out.iter_mut().zip(logs).zip(d.dz.iter().zip(&s.w)) {
            *o += weight * hv * (l.exp() / w) * (v - k.cond_mean);
        }
        Ok(())
    })?;
    Ok(Direction { dim: 1, dz: out })
}

/// `||E[ΔZ | Z+G]||^2 / ||ΔZ||^2` for a mean-zero direction (1-D).
pub fn contraction_factor(s: &LiftedState, d: &Direction) -> Result<f64> {
    if s.dim != 1 || d.dz.len() != s.z.len() {
        return Err(Error::DimensionMismatch("contraction factor needs a 1-D state".into()));
    }
    let mean = d.mean(&s.w)[0];
    if mean.abs() > 1e-10 {
        return Err(Error::MeanNotZero { mean });
    }
    let denom = d.dot(d, &s.w);
    if denom == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let mut num = 0.0;
    zeta_pass(s, &d.dz, |_, weight, k, _| {
        num += weight * k.ln_density.exp() * k.cond_mean * k.cond_mean;
        Ok(())
    })?;
    Ok(num / denom)
}

/// Grid estimate of `min_{|z|<=R} E[g(z + G)]`, where `g(ζ)` is the smallest
/// ratio `φ(ζ - y) / φ(ζ - y')` over `|y|, |y'| <= R`.
pub fn contraction_epsilon(r: f64, rule: &QuadratureRule) -> f64 {
    let r = r.max(0.0);
    let ratio = |zeta: f64| {
        let a = zeta.abs();
        let worst = (a + r) * (a + r);
        let best = (a - r).max(0.0).powi(2);
        (-0.5 * (worst - best)).exp()
    };
    const GRID: usize = 256;
    (0..GRID)
        .map(|k| -r + 2.0 * r * k as f64 / (GRID - 1) as f64)
        .map(|z| rule.expect(|g| ratio(z + g)))
        .fold(f64::INFINITY, f64::min)
}

/// Comonotone rearrangement of `Z` against `X` (1-D).
///
/// Values of `Z` are reassigned along the quantile coupling of the two
/// laws. When weights differ an atom may be split; if no split is needed the
/// atom order and weights of the input are kept.
pub fn monotone_rearrange(s: &LiftedState) -> LiftedState {
    if s.dim != 1 {
        log::warn!("monotone rearrangement is only defined in one dimension; state returned unchanged");
        return s.clone();
    }
    let n = s.len();
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| s.x[a].total_cmp(&s.x[b]).then(s.z[a].total_cmp(&s.z[b])));
    let mut by_z: Vec<usize> = (0..n).collect();
    by_z.sort_by(|&a, &b| s.z[a].total_cmp(&s.z[b]).then(s.x[a].total_cmp(&s.x[b])));

    let mut pieces: Vec<(usize, f64, f64)> = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (s.w[by_x[0]], s.w[by_z[0]]);
    while i < n && j < n {
        let m = ra.min(rb);
        pieces.push((by_x[i], s.z[by_z[j]], m));
        ra -= m;
        rb -= m;
        if ra <= 1e-13 * s.w[by_x[i]] {
            i += 1;
            ra = if i < n { s.w[by_x[i]] } else { 0.0 };
        }
        if rb <= 1e-13 * s.w[by_z[j]] {
            j += 1;
            rb = if j < n { s.w[by_z[j]] } else { 0.0 };
        }
    }
    if pieces.len() == n {
        let mut z = vec![0.0; n];
        for &(k, v, _) in &pieces {
            z[k] = v;
        }
        return LiftedState { z, ..s.clone() };
    }
    let x = pieces.iter().map(|p| s.x[p.0]).collect();
    let z = pieces.iter().map(|p| p.1).collect();
    let w = pieces.iter().map(|p| p.2).collect();
    let base = DiscreteMeasure::normalized(x, w, 1).expect("pieces carry positive mass");
    LiftedState::from_measure(&base, z).expect("lengths match")
}

/// `true` if sorting by `x` leaves `z` nondecreasing up to `tol`.
pub fn is_comonotone(s: &LiftedState, tol: f64) -> bool {
    if s.dim != 1 {
        return false;
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.x[a].total_cmp(&s.x[b]).then(s.z[a].total_cmp(&s.z[b])));
    idx.windows(2).all(|p| s.z[p[1]] >= s.z[p[0]] - tol)
}

/// `(V(Z1) - V(Z0) - <DV(Z0), Z1 - Z0>) / ||Z1 - Z0||^2`.
pub fn strong_convexity_gap(s0: &LiftedState, s1: &LiftedState, nu: &MarginalSpec, rule: &QuadratureRule) -> Result<f64> {
    if s0.x != s1.x || s0.w != s1.w {
        return Err(Error::DimensionMismatch("states must share the same base (x, w)".into()));
    }
    let d = s0.difference(s1);
    let dist2 = d.dot(&d, &s0.w);
    if dist2 == 0.0 {
        return Err(Error::IdenticalStates);
    }
    let e0 = evaluate(s0, nu, rule)?;
    let v1 = bass_value(s1, nu, rule)?;
    Ok((v1 - e0.value - e0.gradient.dot(&d, &s0.w)) / dist2)
}

/// The two-sided tail of `F` at `ζ`, exposed for diagnostics.
pub fn smoothed_cdf(s: &LiftedState, zeta: f64) -> Prob {
    smoothed(s).cdf(zeta)
}
