//! Reference computations kept independent of the flow: finite differences
//! of the lifted value and a derivative-free search for the Bass measure
//! that only touches `mcov`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lifted::{bass_value, Direction, LiftedState};
use crate::measures::{mcov, DiscreteMeasure, MarginalSpec};
use crate::quadrature::QuadratureRule;

pub const MAX_ORACLE_ATOMS: usize = 16;

fn check_step(h: f64) -> Result<()> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidConfig(format!("finite-difference step must lie in [1e-6, 1e-3], got {h}")));
    }
    Ok(())
}

/// Central differences of `V` per coordinate, divided by the atom weight so
/// the result is comparable with the analytic gradient.
pub fn fd_gradient(s: &LiftedState, nu: &MarginalSpec, rule: &QuadratureRule, h: f64) -> Result<Direction> {
    check_step(h)?;
    let d = s.dim();
    let mut out = Vec::with_capacity(s.z().len());
    for k in 0..s.z().len() {
        let mut zp = s.z().to_vec();
        zp[k] += h;
        let mut zm = s.z().to_vec();
        zm[k] -= h;
        let vp = bass_value(&s.with_z(zp)?, nu, rule)?;
        let vm = bass_value(&s.with_z(zm)?, nu, rule)?;
        out.push((vp - vm) / (2.0 * h) / s.w()[k / d]);
    }
    Direction::new(out, d)
}

/// `(V(Z + hΔ) - 2V(Z) + V(Z - hΔ)) / h²`.
pub fn fd_second(s: &LiftedState, dir: &Direction, nu: &MarginalSpec, rule: &QuadratureRule, h: f64) -> Result<f64> {
    check_step(h)?;
    let v0 = bass_value(s, nu, rule)?;
    let vp = bass_value(&s.shifted(dir, h), nu, rule)?;
    let vm = bass_value(&s.shifted(dir, -h), nu, rule)?;
    Ok((vp - 2.0 * v0 + vm) / (h * h))
}

/// `mcov(α * γ₁, ν) - mcov(α, μ)` for a 1-D cloud `α`.
pub fn bass_functional(alpha: &DiscreteMeasure, mu: &MarginalSpec, nu: &MarginalSpec) -> Result<f64> {
    if alpha.dim() != 1 {
        return Err(Error::UnsupportedDimension { dim: alpha.dim(), what: "bass_functional" });
    }
    let components = alpha
        .iter()
        .map(|(a, w)| Ok((w, MarginalSpec::gaussian(a[0], 1.0)?)))
        .collect::<Result<Vec<_>>>()?;
    let smoothed = MarginalSpec::mixture(components)?;
    Ok(mcov(&smoothed, nu)? - mcov(&MarginalSpec::empirical(alpha.clone()), mu)?)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub measure: DiscreteMeasure,
    pub value: f64,
    pub evaluations: usize,
    /// The evaluation budget ran out before the step size shrank to its floor.
    pub budget_exhausted: bool,
}

const STARTS: usize = 4;
const FIRST_STEP: f64 = 0.25;
const MIN_STEP: f64 = 1e-6;
const JITTER: f64 = 0.1;

/// Coordinate descent with shrinking steps over the positions of an
/// equal-weight `n_atoms` cloud, started from seeded jitters of the
/// quantile midpoints of `μ`. `budget` caps evaluations of the functional.
pub fn brute_force_bass_measure(mu: &MarginalSpec, nu: &MarginalSpec, n_atoms: usize, budget: usize, seed: u64) -> Result<OracleResult> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::UnsupportedDimension { dim: mu.dim().max(nu.dim()), what: "brute-force oracle" });
    }
    if n_atoms == 0 || n_atoms > MAX_ORACLE_ATOMS {
        return Err(Error::InvalidConfig(format!("oracle takes 1 to {MAX_ORACLE_ATOMS} atoms, got {n_atoms}")));
    }
    let weights = vec![1.0 / n_atoms as f64; n_atoms];
    let value_at = |pts: &[f64]| bass_functional(&DiscreteMeasure::from_1d(pts, &weights)?, mu, nu);
    let base: Vec<f64> = (0..n_atoms).map(|i| mu.quantile_at((i as f64 + 0.5) / n_atoms as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, JITTER).expect("valid normal");
    let per_start = (budget / STARTS).max(1);
    let mut evaluations = 0;
    let mut exhausted = false;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in 0..STARTS {
        let mut x: Vec<f64> = base.iter().map(|b| if start == 0 { *b } else { b + jitter.sample(&mut rng) }).collect();
        let mut v = value_at(&x)?;
        let mut used = 1;
        let mut step = FIRST_STEP;
        'descent: while step >= MIN_STEP {
            let mut improved = false;
            for k in 0..n_atoms {
                for sign in [1.0, -1.0] {
                    if used >= per_start {
                        exhausted = true;
                        break 'descent;
                    }
                    let mut trial = x.clone();
                    trial[k] += sign * step;
                    let tv = value_at(&trial)?;
                    used += 1;
                    if tv < v {
                        x = trial;
                        v = tv;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        evaluations += used;
        log::debug!("oracle start {start}: value {v:e} after {used} evaluations");
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }
    let (x, value) = best.expect("at least one start");
    Ok(OracleResult { measure: DiscreteMeasure::from_1d(&x, &weights)?, value, evaluations, budget_exhausted: exhausted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifted::gradient;
    use approx::assert_abs_diff_eq;

    fn rule() -> QuadratureRule {
        QuadratureRule::gauss_hermite(64).unwrap()
    }

    #[test]
    fn step_range_is_enforced() {
        let mu = DiscreteMeasure::from_1d(&[-0.5, 0.5], &[0.5, 0.5]).unwrap();
        let s = LiftedState::identity(&mu);
        let nu = MarginalSpec::uniform(-1.0, 1.0).unwrap();
        assert!(fd_gradient(&s, &nu, &rule(), 1e-2).is_err());
        assert!(fd_gradient(&s, &nu, &rule(), 1e-7).is_err());
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let mu = DiscreteMeasure::from_1d(&[-0.6, 0.1, 0.5], &[0.2, 0.5, 0.3]).unwrap();
        let s = LiftedState::from_measure(&mu, vec![-0.4, 0.3, 0.2]).unwrap();
        let nu = MarginalSpec::gaussian(0.0, 2f64.sqrt()).unwrap();
        let fd = fd_gradient(&s, &nu, &rule(), 1e-4).unwrap();
        let g = gradient(&s, &nu, &rule()).unwrap();
        for (a, b) in fd.values().iter().zip(g.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }
    }

    #[test]
    fn constant_direction_has_zero_second_difference() {
        let mu = DiscreteMeasure::from_1d(&[-0.6, 0.1, 0.5], &[0.2, 0.5, 0.3]).unwrap();
        let s = LiftedState::from_measure(&mu, vec![-0.4, 0.3, 0.2]).unwrap();
        let nu = MarginalSpec::uniform(-1.0, 1.0).unwrap();
        let c = Direction::new(vec![1.0; 3], 1).unwrap();
        assert!(fd_second(&s, &c, &nu, &rule(), 1e-3).unwrap().abs() < 1e-6);
    }

    #[test]
    fn dirac_source_against_standard_normal() {
        let mu = MarginalSpec::dirac(0.0).unwrap();
        let nu = MarginalSpec::gaussian(0.0, 1.0).unwrap();
        let r = brute_force_bass_measure(&mu, &nu, 1, 200, 1).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_pair_value() {
        let mu = MarginalSpec::gaussian(0.0, 1.0).unwrap();
        let nu = MarginalSpec::gaussian(0.0, 2f64.sqrt()).unwrap();
        let r = brute_force_bass_measure(&mu, &nu, 8, 4000, 3).unwrap();
        assert!(r.value >= 0.0);
        assert!((r.value - 1.0).abs() < 5e-2, "{}", r.value);
    }

    #[test]
    fn tiny_budget_is_flagged() {
        let mu = MarginalSpec::gaussian(0.0, 1.0).unwrap();
        let nu = MarginalSpec::gaussian(0.0, 2f64.sqrt()).unwrap();
        let r = brute_force_bass_measure(&mu, &nu, 4, 12, 3).unwrap();
        assert!(r.budget_exhausted);
        assert!(r.evaluations <= 12);
    }
}
