//! Brenier maps onto a discrete target in dimension two and higher.
//!
//! The map is `z -> argmax_j <z, y_j> - psi_j`, a Laguerre-cell assignment.
//! The weights `psi` balance cell masses on a seeded sample cloud of the
//! smoothed source `β = α * γ`. They are found by Newton's method on a
//! softened dual, where the max over atoms becomes `τ log Σ exp(·/τ)`.
//! The same softened assignment drives the multidimensional flow, so its
//! value and gradient stay exactly consistent.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lifted::{Direction, Evaluation, LiftedState, Objective};
use crate::measures::{DiscreteMeasure, SmoothedLaw};

/// Atom limit on the target.
pub const MAX_TARGET_ATOMS: usize = 1024;
pub const DEFAULT_MC_SAMPLES: usize = 512;
pub const DEFAULT_TOL_MASS: f64 = 5e-3;
/// Softening temperature relative to the squared typical atom spacing.
pub const DEFAULT_SOFTNESS: f64 = 0.25;
const SOFT_TOL: f64 = 1e-11;
const MAX_NEWTON: usize = 200;
/// Terms below `exp(-CUTOFF)` of the largest are dropped from soft sums.
const CUTOFF: f64 = 40.0;

/// Laguerre weights with the target they refer to; `psi[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualWeights {
    psi: Vec<f64>,
    target: DiscreteMeasure,
}

impl DualWeights {
    pub fn zeros(target: &DiscreteMeasure) -> Self {
        DualWeights { psi: vec![0.0; target.len()], target: target.clone() }
    }

    /// Weights shifted so that the first is zero.
    pub fn new(psi: Vec<f64>, target: &DiscreteMeasure) -> Result<Self> {
        if psi.len() != target.len() {
            return Err(Error::DimensionMismatch(format!("{} weights for {} atoms", psi.len(), target.len())));
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual weights".into()));
        }
        let p0 = psi.first().copied().unwrap_or(0.0);
        Ok(DualWeights { psi: psi.iter().map(|v| v - p0).collect(), target: target.clone() })
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    /// Index of the cell containing `z`, lowest index on ties.
    pub fn cell(&self, z: &[f64]) -> usize {
        let d = self.target.dim();
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, (y, psi)) in self.target.points().chunks_exact(d).zip(&self.psi).enumerate() {
            let score = dot(y, z) - psi;
            if score > best.0 {
                best = (score, j);
            }
        }
        best.1
    }

    /// `max_j <z, y_j> - psi_j`, the convex potential whose gradient is the map.
    pub fn potential(&self, z: &[f64]) -> f64 {
        let j = self.cell(z);
        dot(self.target.point(j), z) - self.psi[j]
    }

    /// Hard cell masses of a cloud.
    pub fn masses(&self, cloud: &SampleCloud) -> Vec<f64> {
        let mut m = vec![0.0; self.psi.len()];
        for (z, w) in cloud.iter() {
            m[self.cell(z)] += w;
        }
        m
    }

    /// `Σ_j |mass_j - b_j|` over hard cells.
    pub fn mass_residual(&self, cloud: &SampleCloud) -> f64 {
        self.masses(cloud).iter().zip(self.target.weights()).map(|(m, b)| (m - b).abs()).sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `argmax_j <z, y_j> - psi_j` as a point of the target.
pub fn map_eval(psi: &DualWeights, z: &[f64]) -> Vec<f64> {
    psi.target.point(psi.cell(z)).to_vec()
}

/// Seeded antithetic standard Gaussian draws, `count` rounded up to even,
/// whitened so their empirical covariance is exactly the identity whenever
/// it is nonsingular.
pub fn gaussian_draws(count: usize, dim: usize, seed: u64) -> Vec<f64> {
    let pairs = count.div_ceil(2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * pairs * dim);
    for _ in 0..pairs {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        out.extend(&g);
        out.extend(g.iter().map(|v| -v));
    }
    let n = (2 * pairs) as f64;
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for g in out.chunks_exact(dim) {
        let v = DVector::from_column_slice(g);
        cov += &v * v.transpose();
    }
    cov /= n;
    let Some(chol) = cov.cholesky() else { return out };
    for g in out.chunks_exact_mut(dim) {
        let v = chol.l().solve_lower_triangular(&DVector::from_column_slice(g)).expect("cholesky factor is nonsingular");
        g.copy_from_slice(v.as_slice());
    }
    out
}

/// Monte-Carlo average of the map over `z + G`.
pub fn smoothed_map_eval(psi: &DualWeights, z: &[f64], mc_samples: usize, seed: u64) -> Vec<f64> {
    let d = z.len();
    let draws = gaussian_draws(mc_samples, d, seed);
    let n = (draws.len() / d) as f64;
    let mut acc = vec![0.0; d];
    let mut zeta = vec![0.0; d];
    for g in draws.chunks_exact(d) {
        for k in 0..d {
            zeta[k] = z[k] + g[k];
        }
        for (a, y) in acc.iter_mut().zip(psi.target.point(psi.cell(&zeta))) {
            *a += y;
        }
    }
    acc.iter().map(|a| a / n).collect()
}

/// Points `z_i + g_s` with weights `w_i / S`; every atom shares the draws.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    dim: usize,
    per_atom: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SampleCloud {
    pub fn new(centers: &[f64], weights: &[f64], dim: usize, draws: &[f64]) -> Self {
        let s = draws.len() / dim;
        let mut points = Vec::with_capacity(centers.len() * s);
        let mut ws = Vec::with_capacity(weights.len() * s);
        for (c, &w) in centers.chunks_exact(dim).zip(weights) {
            for g in draws.chunks_exact(dim) {
                points.extend(c.iter().zip(g).map(|(a, b)| a + b));
                ws.push(w / s as f64);
            }
        }
        SampleCloud { dim, per_atom: s, points, weights: ws }
    }

    pub fn from_law(beta: &SmoothedLaw, mc_samples: usize, seed: u64) -> Self {
        let draws = gaussian_draws(mc_samples, beta.dim(), seed);
        Self::new(beta.centers(), beta.weights(), beta.dim(), &draws)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn per_atom(&self) -> usize {
        self.per_atom
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn check_target(nu: &DiscreteMeasure, dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::UnsupportedDimension { dim, what: "semi-discrete maps need dimension 2 or more" });
    }
    if nu.dim() != dim {
        return Err(Error::DimensionMismatch(format!("source in dimension {dim}, target in {}", nu.dim())));
    }
    if nu.len() > MAX_TARGET_ATOMS {
        return Err(Error::InvalidConfig(format!("target has {} atoms, limit {MAX_TARGET_ATOMS}", nu.len())));
    }
    Ok(())
}

/// Median distance from a target atom to its nearest neighbour.
pub fn typical_spacing(nu: &DiscreteMeasure) -> f64 {
    let n = nu.len();
    if n < 2 {
        return 1.0;
    }
    let mut nn: Vec<f64> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&k| k != j)
                .map(|k| nu.point(j).iter().zip(nu.point(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    match nn[n / 2] {
        h if h > 0.0 => h,
        _ => 1.0,
    }
}

struct SoftPass {
    value: f64,
    masses: Vec<f64>,
    hessian: Option<DMatrix<f64>>,
}

/// `F(psi) = Σ_p w_p τ log Σ_j exp((<ζ_p, y_j> - psi_j)/τ) + Σ_j b_j psi_j`,
/// its gradient masses and optionally its Hessian. `per_point` sees the
/// active soft assignment of every cloud point.
fn soft_pass(
    cloud: &SampleCloud,
    nu: &DiscreteMeasure,
    psi: &[f64],
    tau: f64,
    hessian: bool,
    mut per_point: impl FnMut(usize, &[(usize, f64)]),
) -> SoftPass {
    let d = nu.dim();
    let m = nu.len();
    let ys = nu.points();
    let mut masses = vec![0.0; m];
    let mut value: f64 = dot(psi, nu.weights());
    let mut h = hessian.then(|| DMatrix::zeros(m, m));
    let mut scores = vec![0.0; m];
    let mut active: Vec<(usize, f64)> = Vec::with_capacity(m);
    for (p, (z, w)) in cloud.iter().enumerate() {
        let mut top = f64::NEG_INFINITY;
        for (j, s) in scores.iter_mut().enumerate() {
            *s = dot(&ys[j * d..(j + 1) * d], z) - psi[j];
            top = top.max(*s);
        }
        active.clear();
        let mut total = 0.0;
        for (j, &s) in scores.iter().enumerate() {
            let u = (s - top) / tau;
            if u > -CUTOFF {
                let e = u.exp();
                total += e;
                active.push((j, e));
            }
        }
        value += w * (top + tau * total.ln());
        for a in active.iter_mut() {
            a.1 /= total;
            masses[a.0] += w * a.1;
        }
        if let Some(h) = h.as_mut() {
            let c = w / tau;
            for &(j, pj) in &active {
                h[(j, j)] += c * pj;
                for &(k, pk) in &active {
                    h[(j, k)] -= c * pj * pk;
                }
            }
        }
        per_point(p, &active);
    }
    SoftPass { value, masses, hessian: h }
}

fn residual(masses: &[f64], b: &[f64]) -> f64 {
    masses.iter().zip(b).map(|(m, c)| (m - c).abs()).sum()
}

/// Minimizes the softened dual over `psi` with `psi_0` held fixed, by damped
/// Newton from `start`. A step is kept once it shrinks the mass residual by
/// the factor `1 - t/2` and leaves every soft mass above half its smallest
/// starting value. Returns the weights and the final residual.
pub fn solve_soft(cloud: &SampleCloud, nu: &DiscreteMeasure, tau: f64, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = nu.len();
    let b = nu.weights();
    if m == 1 {
        return Ok((vec![0.0], 0.0));
    }
    let mut psi = start.to_vec();
    let mut pass = soft_pass(cloud, nu, &psi, tau, true, |_, _| {});
    let floor = 0.5 * pass.masses.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let mut res = residual(&pass.masses, b);
    'newton: for it in 0..MAX_NEWTON {
        log::trace!("newton {it}: residual {res:e}");
        if res <= SOFT_TOL {
            return Ok((psi, res));
        }
        let h = pass.hessian.take().expect("hessian requested");
        let grad = DVector::from_iterator(m - 1, (1..m).map(|j| b[j] - pass.masses[j]));
        let mut reduced = h.view((1, 1), (m - 1, m - 1)).into_owned();
        let ridge = 1e-12 * (0..m - 1).map(|j| reduced[(j, j)]).fold(f64::MIN_POSITIVE, f64::max);
        for j in 0..m - 1 {
            reduced[(j, j)] += ridge;
        }
        let Some(ch) = reduced.cholesky() else {
            break;
        };
        let step = -ch.solve(&grad);
        let mut t = 1.0;
        loop {
            let mut trial = psi.clone();
            for j in 1..m {
                trial[j] += t * step[j - 1];
            }
            let next = soft_pass(cloud, nu, &trial, tau, true, |_, _| {});
            let next_res = residual(&next.masses, b);
            let positive = next.masses.iter().all(|&v| v >= floor);
            if positive && next_res <= (1.0 - 0.5 * t) * res {
                psi = trial;
                pass = next;
                res = next_res;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                break 'newton;
            }
        }
    }
    if res <= 1e3 * SOFT_TOL {
        Ok((psi, res))
    } else {
        Err(Error::NoConvergence { residual: res, tol: SOFT_TOL })
    }
}

/// Solves from scratch at a wide softening, then narrows down to `tau`.
/// The start sends `z` to the atom nearest `ȳ + c (z - z̄)`, the affine map
/// matching means and total variances.
pub fn solve_soft_cold(cloud: &SampleCloud, nu: &DiscreteMeasure, tau: f64) -> Result<Vec<f64>> {
    let d = nu.dim();
    let (z_bar, z_var) = weighted_moments(cloud.iter(), d);
    let (y_bar, y_var) = weighted_moments(nu.iter(), d);
    let c = if z_var > 0.0 && y_var > 0.0 { (y_var / z_var).sqrt() } else { 1.0 };
    let shift: Vec<f64> = y_bar.iter().zip(&z_bar).map(|(y, z)| y - c * z).collect();
    let mut psi: Vec<f64> = (0..nu.len())
        .map(|j| {
            let y = nu.point(j);
            (0.5 * dot(y, y) - dot(y, &shift)) / c
        })
        .collect();
    let p0 = psi[0];
    psi.iter_mut().for_each(|p| *p -= p0);
    let spacing = typical_spacing(nu);
    let mut level = spacing * spacing;
    while level > tau {
        psi = solve_soft(cloud, nu, level, &psi)?.0;
        level *= 0.25;
    }
    Ok(solve_soft(cloud, nu, tau, &psi)?.0)
}

fn weighted_moments<'a>(points: impl Iterator<Item = (&'a [f64], f64)>, d: usize) -> (Vec<f64>, f64) {
    let mut mean = vec![0.0; d];
    let mut second = 0.0;
    let mut total = 0.0;
    for (p, w) in points {
        for k in 0..d {
            mean[k] += w * p[k];
        }
        second += w * dot(p, p);
        total += w;
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let var = second / total - dot(&mean, &mean);
    (mean, var.max(0.0))
}

/// Laguerre weights pushing `β` onto `ν`. The softening is tightened until
/// the hard cells balance within `tol_mass` in L¹.
pub fn solve_potentials(beta: &SmoothedLaw, nu: &DiscreteMeasure, mc_samples: usize, seed: u64, tol_mass: f64) -> Result<DualWeights> {
    check_target(nu, beta.dim())?;
    let cloud = SampleCloud::from_law(beta, mc_samples, seed);
    let spacing = typical_spacing(nu);
    let mut tau = DEFAULT_SOFTNESS * spacing * spacing;
    let mut psi = solve_soft_cold(&cloud, nu, tau)?;
    let mut res = f64::INFINITY;
    for _ in 0..12 {
        match solve_soft(&cloud, nu, tau, &psi) {
            Ok((next, _)) => psi = next,
            Err(Error::NoConvergence { .. }) if res.is_finite() => break,
            Err(e) => return Err(e),
        }
        let weights = DualWeights::new(psi.clone(), nu)?;
        res = weights.mass_residual(&cloud);
        log::debug!("tau {tau:e}: hard mass residual {res:e}");
        if res <= tol_mass {
            return Ok(weights);
        }
        tau *= 0.25;
    }
    Err(Error::NoConvergence { residual: res, tol: tol_mass })
}

/// Upper bound on `W_2` from a cloud to a discrete target.
///
/// Prices the softened plan at temperature `tau`, which couples the cloud
/// exactly and the target up to an L¹ mass residual `r`. Moving the
/// misplaced mass costs at most `diam * sqrt(r / 2)`, which is added.
pub fn wasserstein2_upper(cloud: &SampleCloud, nu: &DiscreteMeasure, tau: f64) -> Result<f64> {
    if cloud.dim != nu.dim() {
        return Err(Error::DimensionMismatch(format!("cloud in dimension {}, target in {}", cloud.dim, nu.dim())));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("softening must be positive, got {tau}")));
    }
    let psi = solve_soft_cold(cloud, nu, tau)?;
    let d = nu.dim();
    let points = cloud.points();
    let mut cost = 0.0;
    let pass = soft_pass(cloud, nu, &psi, tau, false, |p, active| {
        let z = &points[p * d..(p + 1) * d];
        for &(j, pj) in active {
            let gap: f64 = z.iter().zip(nu.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            cost += cloud.weights[p] * pj * gap;
        }
    });
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for q in points.chunks_exact(d).chain(nu.points().chunks_exact(d)) {
        for k in 0..d {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    let diameter2: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(cost.sqrt() + (0.5 * residual(&pass.masses, nu.weights()) * diameter2).sqrt())
}

/// The lifted functional against a discrete target in dimension two or more.
///
/// `V(Z) = F(psi*) - E<Z, X>` with `F` the softened dual on the cloud
/// `z_i + g_s` and `psi*` its minimizer. The gradient at atom `i` is the
/// softened map averaged over its draws, minus `x_i`.
#[derive(Debug, Clone)]
pub struct SemiDiscrete {
    nu: DiscreteMeasure,
    draws: Vec<f64>,
    tau: f64,
    psi: Option<Vec<f64>>,
}

impl SemiDiscrete {
    pub fn new(nu: &DiscreteMeasure, mc_samples: usize, seed: u64) -> Result<Self> {
        Self::with_softness(nu, mc_samples, seed, DEFAULT_SOFTNESS)
    }

    pub fn with_softness(nu: &DiscreteMeasure, mc_samples: usize, seed: u64, softness: f64) -> Result<Self> {
        check_target(nu, nu.dim())?;
        if !(softness > 0.0 && softness.is_finite()) {
            return Err(Error::InvalidConfig(format!("softness must be positive, got {softness}")));
        }
        let spacing = typical_spacing(nu);
        Ok(SemiDiscrete {
            nu: nu.clone(),
            draws: gaussian_draws(mc_samples, nu.dim(), seed),
            tau: softness * spacing * spacing,
            psi: None,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Weights from the last evaluation.
    pub fn weights(&self) -> Result<DualWeights> {
        match &self.psi {
            Some(psi) => DualWeights::new(psi.clone(), &self.nu),
            None => Ok(DualWeights::zeros(&self.nu)),
        }
    }
}

impl Objective for SemiDiscrete {
    fn evaluate(&mut self, s: &LiftedState) -> Result<Evaluation> {
        let d = s.dim();
        if d != self.nu.dim() {
            return Err(Error::DimensionMismatch(format!("state in dimension {d}, target in {}", self.nu.dim())));
        }
        let cloud = SampleCloud::new(s.z(), s.w(), d, &self.draws);
        let psi = match self.psi.take() {
            Some(warm) => match solve_soft(&cloud, &self.nu, self.tau, &warm) {
                Ok((psi, _)) => psi,
                Err(_) => solve_soft_cold(&cloud, &self.nu, self.tau)?,
            },
            None => solve_soft_cold(&cloud, &self.nu, self.tau)?,
        };
        let per = cloud.per_atom;
        let ys = self.nu.points();
        let mut map = vec![0.0; s.z().len()];
        let pass = soft_pass(&cloud, &self.nu, &psi, self.tau, false, |p, active| {
            let i = p / per;
            for &(j, pj) in active {
                for k in 0..d {
                    map[i * d + k] += pj * ys[j * d + k];
                }
            }
        });
        self.psi = Some(psi);
        let cross: f64 = s.z().chunks_exact(d).zip(s.x().chunks_exact(d)).zip(s.w()).map(|((z, x), w)| w * dot(z, x)).sum();
        let grad = map.iter().zip(s.x()).map(|(m, x)| m / per as f64 - x).collect();
        Ok(Evaluation { value: pass.value - cross, gradient: Direction::new(grad, d)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::gaussian_smooth;
    use approx::assert_abs_diff_eq;

    fn ring(n: usize, r: f64) -> DiscreteMeasure {
        let pts = (0..n)
            .flat_map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        DiscreteMeasure::uniform(pts, 2).unwrap()
    }

    fn origin_beta() -> SmoothedLaw {
        gaussian_smooth(&DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap())
    }

    #[test]
    fn antithetic_draws_are_centered_and_seeded() {
        let g = gaussian_draws(101, 2, 3);
        assert_eq!(g.len(), 204);
        let sum: f64 = g.iter().step_by(2).sum();
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
        assert_eq!(g, gaussian_draws(101, 2, 3));
    }

    #[test]
    fn single_atom_target() {
        let nu = DiscreteMeasure::dirac(&[0.3, -0.2]).unwrap();
        let psi = solve_potentials(&origin_beta(), &nu, 64, 1, 1e-12).unwrap();
        assert_eq!(map_eval(&psi, &[5.0, 5.0]), vec![0.3, -0.2]);
        let m = smoothed_map_eval(&psi, &[1.0, 2.0], 64, 9);
        assert_abs_diff_eq!(m[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], -0.2, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_pair_has_equal_weights() {
        let nu = DiscreteMeasure::uniform(vec![1.0, 0.5, -1.0, -0.5], 2).unwrap();
        let psi = solve_potentials(&origin_beta(), &nu, 2000, 5, 1e-2).unwrap();
        assert!(psi.psi()[1].abs() < 1e-9, "{:?}", psi.psi());
        assert_eq!(map_eval(&psi, &[0.2, 0.1]), vec![1.0, 0.5]);
        assert_eq!(map_eval(&psi, &[-0.2, -0.1]), vec![-1.0, -0.5]);
        let mid = smoothed_map_eval(&psi, &[0.0, 0.0], 4000, 11);
        assert!(mid[0].abs() < 0.05 && mid[1].abs() < 0.05, "{mid:?}");
    }

    #[test]
    fn ring_masses_balance() {
        let nu = ring(12, 2.0);
        let beta = origin_beta();
        let psi = solve_potentials(&beta, &nu, 4096, 2, 5e-3).unwrap();
        let cloud = SampleCloud::from_law(&beta, 4096, 2);
        assert!(psi.mass_residual(&cloud) <= 5e-3);
    }

    #[test]
    fn map_is_monotone() {
        let nu = ring(9, 1.5);
        let psi = DualWeights::new((0..9).map(|j| 0.1 * j as f64).collect(), &nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (ta, tb) = (map_eval(&psi, &a), map_eval(&psi, &b));
            let inner: f64 = (0..2).map(|k| (ta[k] - tb[k]) * (a[k] - b[k])).sum();
            assert!(inner >= -1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nu = ring(16, 1.0);
        let mu = DiscreteMeasure::uniform(vec![0.2, 0.0, -0.2, 0.0, 0.0, 0.1, 0.0, -0.1], 2).unwrap();
        let s = LiftedState::from_measure(&mu, vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.4, 0.1, -0.6]).unwrap();
        let mut obj = SemiDiscrete::new(&nu, 64, 8).unwrap();
        let e = obj.evaluate(&s).unwrap();
        let h = 1e-5;
        for i in [0usize, 5] {
            let mut zp = s.z().to_vec();
            zp[i] += h;
            let mut zm = s.z().to_vec();
            zm[i] -= h;
            let vp = obj.evaluate(&s.with_z(zp).unwrap()).unwrap().value;
            let vm = obj.evaluate(&s.with_z(zm).unwrap()).unwrap().value;
            let fd = (vp - vm) / (2.0 * h) / s.w()[i / 2];
            assert_abs_diff_eq!(fd, e.gradient.values()[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_one_dimension() {
        let nu = DiscreteMeasure::from_1d(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!(matches!(SemiDiscrete::new(&nu, 16, 0), Err(Error::UnsupportedDimension { .. })));
    }
}
