//! Monte-Carlo simulation of the Bass martingale `M_t = (∇v * γ_{1-t})(B_t)`
//! from a converged one-dimensional state, with marginal, martingale and
//! value checks.

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lifted::{evaluate, LiftedState, NODE_PRUNE};
use crate::measures::{fmt_f64, gaussian_smooth, wasserstein2_1d, DiscreteMeasure, MarginalSpec};
use crate::ot1d::BrenierMap1D;
use crate::quadrature::QuadratureRule;

/// Paths simulated per independently seeded block.
const BLOCK: usize = 4096;
pub const MIN_CHECK_PATHS: usize = 10_000;
pub const CHECK_BINS: usize = 20;
const GRID_TOL: f64 = 1e-12;

/// Values of `M` and `B` on a time grid, stored path by path.
#[derive(Debug, Clone)]
pub struct MartingalePaths {
    times: Vec<f64>,
    m: Vec<f64>,
    b: Vec<f64>,
    n_paths: usize,
    seed: u64,
}

impl MartingalePaths {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn column(&self, data: &[f64], k: usize) -> Vec<f64> {
        data.chunks_exact(self.times.len()).map(|row| row[k]).collect()
    }

    /// `M_{t_k}` across paths.
    pub fn m_at(&self, k: usize) -> Vec<f64> {
        self.column(&self.m, k)
    }

    /// `B_{t_k}` across paths.
    pub fn b_at(&self, k: usize) -> Vec<f64> {
        self.column(&self.b, k)
    }

    /// Grid index of `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times.iter().position(|s| (s - t).abs() <= GRID_TOL).ok_or(Error::TimeNotOnGrid(t))
    }

    /// Paths built from explicit arrays, each `n_paths × times.len()` row-major.
    pub fn from_values(times: Vec<f64>, m: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_grid(&times)?;
        let k = times.len();
        if m.len() != b.len() || m.len() % k != 0 {
            return Err(Error::DimensionMismatch(format!("{} M values and {} B values on {k} times", m.len(), b.len())));
        }
        if m.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path values".into()));
        }
        Ok(MartingalePaths { n_paths: m.len() / k, times, m, b, seed: 0 })
    }

    /// CSV with header `path_id,t,M,B`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "path_id,t,M,B")?;
        let k = self.times.len();
        for p in 0..self.n_paths {
            for (j, t) in self.times.iter().enumerate() {
                writeln!(out, "{p},{},{},{}", fmt_f64(*t), fmt_f64(self.m[p * k + j]), fmt_f64(self.b[p * k + j]))?;
            }
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    let ok = times.len() >= 2
        && times[0] == 0.0
        && *times.last().unwrap() == 1.0
        && times.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig("time grid must increase strictly from 0 to 1".into()))
    }
}

/// Evenly spaced grid `0, 1/n, ..., 1`.
pub fn uniform_grid(steps: usize) -> Vec<f64> {
    let n = steps.max(1);
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Simulates `n_paths` paths of the Bass martingale of a converged state.
///
/// `B_0` is drawn from the atoms of `𝓛(Z*)`, `B` then moves as a Brownian
/// motion, and `M_t = Σ_m ω_m T(B_t + √(1-t) g_m)` with `T = Q_ν ∘ F`. At
/// `t = 1` the map is applied without smoothing. The state's gradient norm
/// must be at most `10 · grad_tol`.
pub fn simulate(
    s_star: &LiftedState,
    nu: &MarginalSpec,
    rule: &QuadratureRule,
    n_paths: usize,
    grid: &[f64],
    seed: u64,
    grad_tol: f64,
) -> Result<MartingalePaths> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    simulate_with_workers(s_star, nu, rule, n_paths, grid, seed, grad_tol, workers)
}

/// [`simulate`] on a fixed number of threads. Paths are generated in
/// seeded blocks of 4096, so the output does not depend on `workers`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_workers(
    s_star: &LiftedState,
    nu: &MarginalSpec,
    rule: &QuadratureRule,
    n_paths: usize,
    grid: &[f64],
    seed: u64,
    grad_tol: f64,
    workers: usize,
) -> Result<MartingalePaths> {
    check_grid(grid)?;
    let grad_norm = evaluate(s_star, nu, rule)?.gradient.norm(s_star.w());
    if grad_norm > 10.0 * grad_tol {
        return Err(Error::NotStationary { grad_norm, limit: 10.0 * grad_tol });
    }
    let law = s_star.z_law();
    let map = BrenierMap1D::new(gaussian_smooth(&law), nu)?;
    let base = rule.pruned(NODE_PRUNE);
    let rules: Vec<QuadratureRule> = grid.iter().map(|t| base.scaled((1.0 - t).max(0.0).sqrt())).collect();
    let picker = WeightedIndex::new(law.weights()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let k = grid.len();
    let blocks = n_paths.div_ceil(BLOCK);
    let mut m = vec![0.0; n_paths * k];
    let mut b = vec![0.0; n_paths * k];
    let workers = workers.clamp(1, blocks.max(1));
    std::thread::scope(|scope| {
        let mut jobs: Vec<Vec<(usize, &mut [f64], &mut [f64])>> = (0..workers).map(|_| Vec::new()).collect();
        for (i, (mc, bc)) in m.chunks_mut(BLOCK * k).zip(b.chunks_mut(BLOCK * k)).enumerate() {
            jobs[i % workers].push((i, mc, bc));
        }
        for job in jobs {
            let (map, rules, picker, law) = (&map, &rules, &picker, &law);
            scope.spawn(move || {
                for (block, mc, bc) in job {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(block as u64);
                    for (mrow, brow) in mc.chunks_exact_mut(k).zip(bc.chunks_exact_mut(k)) {
                        let mut x = law.point(picker.sample(&mut rng))[0];
                        for j in 0..k {
                            if j > 0 {
                                let g: f64 = StandardNormal.sample(&mut rng);
                                x += (grid[j] - grid[j - 1]).sqrt() * g;
                            }
                            brow[j] = x;
                            mrow[j] = if grid[j] == 1.0 { map.eval(x) } else { map.smoothed_eval(&rules[j], x) };
                        }
                    }
                }
            });
        }
    });
    Ok(MartingalePaths { times: grid.to_vec(), m, b, n_paths, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalReport {
    pub ks: f64,
    pub w2: f64,
    /// 95% Kolmogorov bound `1.358 / √n`.
    pub ks_bound: f64,
}

/// Kolmogorov–Smirnov and `W_2` distances between the `M_t` sample and `target`.
pub fn marginal_check(paths: &MartingalePaths, t: f64, target: &MarginalSpec) -> Result<MarginalReport> {
    let k = paths.time_index(t)?;
    let mut xs = paths.m_at(k);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let hi = target.cdf(*x).value();
        let lo = target.cdf_left(*x).value();
        ks = ks.max((i + 1) as f64 / n - hi).max(lo - i as f64 / n);
    }
    let sample = MarginalSpec::empirical(DiscreteMeasure::uniform(xs, 1)?);
    let w2 = wasserstein2_1d(&sample, target)?;
    Ok(MarginalReport { ks, w2, ks_bound: 1.358 / n.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairResidual {
    pub s: f64,
    pub t: f64,
    /// Largest `|E[M_t - M_s | bin]|` over quantile bins of `M_s`.
    pub residual: f64,
    /// Largest standard error of those bin means.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub pairs: Vec<PairResidual>,
    pub max_residual: f64,
}

impl MartingaleReport {
    /// Every pair has residual within `k` standard errors.
    pub fn within(&self, k: f64) -> bool {
        self.pairs.iter().all(|p| p.residual <= k * p.se)
    }
}

/// Binned conditional-mean test of the martingale property on each `(s, t)`.
pub fn martingale_check(paths: &MartingalePaths, t_pairs: &[(f64, f64)]) -> Result<MartingaleReport> {
    if paths.n_paths < MIN_CHECK_PATHS {
        return Err(Error::TooFewPaths { got: paths.n_paths, required: MIN_CHECK_PATHS });
    }
    let mut pairs = Vec::with_capacity(t_pairs.len());
    for &(s, t) in t_pairs {
        if s >= t {
            return Err(Error::InvalidConfig(format!("pair ({s}, {t}) must have s < t")));
        }
        let (ms, mt) = (paths.m_at(paths.time_index(s)?), paths.m_at(paths.time_index(t)?));
        let mut order: Vec<usize> = (0..ms.len()).collect();
        order.sort_by(|&a, &b| ms[a].total_cmp(&ms[b]));
        let (mut residual, mut se) = (0.0f64, 0.0f64);
        for bin in 0..CHECK_BINS {
            let idx = &order[bin * order.len() / CHECK_BINS..(bin + 1) * order.len() / CHECK_BINS];
            let n = idx.len() as f64;
            let diffs = idx.iter().map(|&p| mt[p] - ms[p]);
            let mean = diffs.clone().sum::<f64>() / n;
            let var = diffs.map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            residual = residual.max(mean.abs());
            se = se.max((var / n).sqrt());
        }
        pairs.push(PairResidual { s, t, residual, se });
    }
    let max_residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok(MartingaleReport { pairs, max_residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityReport {
    /// Sample mean of `M_1 B_1 - M_0 B_0`.
    pub p_hat: f64,
    pub gap: f64,
    pub se: f64,
    /// `-2 p_hat + ∫|x|² d(ν - μ) + d`, the transport cost of the martingale.
    pub mt_hat: f64,
}

/// Compares `E[M_1 B_1 - M_0 B_0]` with the value of the lifted functional.
pub fn duality_gap(paths: &MartingalePaths, v_value: f64, mu: &MarginalSpec, nu: &MarginalSpec) -> Result<DualityReport> {
    let last = paths.times.len() - 1;
    let (m0, b0, m1, b1) = (paths.m_at(0), paths.b_at(0), paths.m_at(last), paths.b_at(last));
    let n = paths.n_paths as f64;
    let terms: Vec<f64> = (0..paths.n_paths).map(|p| m1[p] * b1[p] - m0[p] * b0[p]).collect();
    let p_hat = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|v| (v - p_hat) * (v - p_hat)).sum::<f64>() / (n - 1.0).max(1.0);
    let mt_hat = -2.0 * p_hat + nu.second_moment() - mu.second_moment() + mu.dim() as f64;
    Ok(DualityReport { p_hat, gap: (p_hat - v_value).abs(), se: (var / n).sqrt(), mt_hat })
}
