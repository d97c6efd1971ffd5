//! Explicit Euler integration of the gradient flow `dZ/dt = -DV(Z)` with a
//! backtracking step, plus diagnostics on the recorded trace.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{Lifted1D, LiftedState, Objective};
use crate::measures::{fmt_f64, DiscreteMeasure, MarginalSpec};
use crate::normal::radial_quantile;
use crate::quadrature::{QuadratureRule, DEFAULT_ORDER};

/// Smallest step before the integrator gives up.
pub const MIN_STEP: f64 = 1e-12;

/// Relative slack on the descent test, covering quadrature rounding.
const DESCENT_SLACK: f64 = 1e-12;

/// Accepted steps in a row before the step grows again.
const GROW_AFTER: usize = 10;
const GROWTH: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub h0: f64,
    pub tol_grad: f64,
    pub t_max: f64,
    pub backtrack: f64,
    pub quadrature_order: usize,
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { h0: 0.1, tol_grad: 1e-7, t_max: 200.0, backtrack: 0.5, quadrature_order: DEFAULT_ORDER, record_every: 1 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("h0", self.h0), ("tol_grad", self.tol_grad), ("t_max", self.t_max)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidConfig(format!("backtrack must lie in (0, 1), got {}", self.backtrack)));
        }
        if self.quadrature_order == 0 || self.record_every == 0 {
            return Err(Error::InvalidConfig("quadrature_order and record_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        QuadratureRule::gauss_hermite(self.quadrature_order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradToleranceMet,
    TMaxReached,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub barycenter: Vec<f64>,
    pub max_abs_z: f64,
    pub h: f64,
}

/// Recorded rows with a copy of `Z` at each row.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<Vec<f64>>,
    pub final_state: LiftedState,
    pub termination: Termination,
}

impl FlowTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("a trace always holds the initial row")
    }

    /// State at row `k`.
    pub fn state_at(&self, k: usize) -> LiftedState {
        self.final_state.with_z(self.snapshots[k].clone()).expect("snapshot length matches")
    }

    /// `sup_t E|Z_t|^2` over recorded rows.
    pub fn max_z_second_moment(&self) -> f64 {
        let w = self.final_state.w();
        let d = self.final_state.dim();
        self.snapshots
            .iter()
            .map(|z| z.chunks_exact(d).zip(w).map(|(p, w)| w * p.iter().map(|v| v * v).sum::<f64>()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Writes `t,V,grad_norm,bary_1..bary_d,max_abs_z,h`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let d = self.final_state.dim();
        let bary: Vec<String> = (1..=d).map(|k| format!("bary_{k}")).collect();
        writeln!(out, "t,V,grad_norm,{},max_abs_z,h", bary.join(","))?;
        for r in &self.rows {
            let mut fields = vec![fmt_f64(r.t), fmt_f64(r.value), fmt_f64(r.grad_norm)];
            fields.extend(r.barycenter.iter().map(|&b| fmt_f64(b)));
            fields.push(fmt_f64(r.max_abs_z));
            fields.push(fmt_f64(r.h));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }
}

/// `z <- z - h * DV(z)`.
pub fn euler_step(s: &LiftedState, h: f64, nu: &MarginalSpec, rule: &QuadratureRule) -> Result<LiftedState> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("step must be positive, got {h}")));
    }
    let g = crate::lifted::gradient(s, nu, rule)?;
    Ok(s.shifted(&g, -h))
}

/// Runs the one-dimensional flow from `s0`.
pub fn integrate(s0: &LiftedState, cfg: &FlowConfig, nu: &MarginalSpec) -> Result<FlowTrace> {
    cfg.validate()?;
    let mut obj = Lifted1D::new(nu, &cfg.rule()?)?;
    integrate_with(s0, cfg, &mut obj)
}

fn row(s: &LiftedState, t: f64, value: f64, grad_norm: f64, h: f64) -> TraceRow {
    TraceRow { t, value, grad_norm, barycenter: s.z_barycenter(), max_abs_z: s.max_abs_z(), h }
}

/// Runs the flow for any objective.
pub fn integrate_with<O: Objective>(s0: &LiftedState, cfg: &FlowConfig, obj: &mut O) -> Result<FlowTrace> {
    cfg.validate()?;
    let mut s = s0.clone();
    let mut eval = obj.evaluate(&s)?;
    let mut grad_norm = eval.gradient.norm(s.w());
    let mut rows = vec![row(&s, 0.0, eval.value, grad_norm, cfg.h0)];
    let mut snapshots = vec![s.z().to_vec()];
    let (mut t, mut h) = (0.0, cfg.h0);
    let (mut streak, mut steps) = (0usize, 0usize);
    let mut last_step = cfg.h0;

    let termination = loop {
        if grad_norm <= cfg.tol_grad {
            break Termination::GradToleranceMet;
        }
        if t >= cfg.t_max {
            break Termination::TMaxReached;
        }
        let accepted = loop {
            let step = h.min(cfg.t_max - t);
            let cand = s.shifted(&eval.gradient, -step);
            let ce = obj.evaluate(&cand)?;
            if ce.value <= eval.value + DESCENT_SLACK * eval.value.abs().max(1.0) {
                break Some((cand, ce, step));
            }
            h *= cfg.backtrack;
            streak = 0;
            if h < MIN_STEP {
                break None;
            }
        };
        let Some((cand, ce, step)) = accepted else {
            log::warn!("step fell below {MIN_STEP:e} at t = {t}; the objective is not decreasing along -DV");
            break Termination::StepUnderflow;
        };
        s = cand;
        eval = ce;
        grad_norm = eval.gradient.norm(s.w());
        // The final clamped step lands exactly on t_max.
        t = if step == cfg.t_max - t { cfg.t_max } else { t + step };
        last_step = step;
        steps += 1;
        streak += 1;
        if streak >= GROW_AFTER {
            h = (h * GROWTH).min(cfg.h0);
            streak = 0;
        }
        if steps % cfg.record_every == 0 {
            rows.push(row(&s, t, eval.value, grad_norm, step));
            snapshots.push(s.z().to_vec());
        }
    };
    if rows.last().map(|r| r.t) != Some(t) {
        rows.push(row(&s, t, eval.value, grad_norm, last_step));
        snapshots.push(s.z().to_vec());
    }
    log::info!("flow stopped ({termination:?}) at t = {t} after {steps} steps, V = {}, |DV| = {grad_norm:e}", eval.value);
    Ok(FlowTrace { rows, snapshots, final_state: s, termination })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub kappa_v: f64,
    pub kappa_z: f64,
    pub r2: f64,
}

/// Slope, intercept and r² of the least-squares line through `(x, y)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Rows needed by [`rate_estimate`].
pub const MIN_RATE_ROWS: usize = 20;

/// Exponential decay rates of `V_t - v*` and `||Z_t - Z*||` over the last 80%
/// of the trace.
pub fn rate_estimate(trace: &FlowTrace, v_star: f64, z_star: &LiftedState) -> Result<RateEstimate> {
    let t_final = trace.last().t;
    let w = z_star.w();
    let (mut ts, mut lv, mut lz) = (vec![], vec![], vec![]);
    for (r, z) in trace.rows.iter().zip(&trace.snapshots) {
        let excess = r.value - v_star;
        if r.t < 0.2 * t_final || excess <= 1e-12 {
            continue;
        }
        let dist2: f64 = z.iter().zip(z_star.z()).zip(w.iter().flat_map(|&wi| std::iter::repeat(wi).take(z_star.dim())))
            .map(|((a, b), wi)| wi * (a - b) * (a - b))
            .sum();
        if dist2 <= 0.0 {
            continue;
        }
        ts.push(r.t);
        lv.push(excess.ln());
        lz.push(0.5 * dist2.ln());
    }
    if ts.len() < MIN_RATE_ROWS {
        return Err(Error::InsufficientTrace { rows: ts.len(), required: MIN_RATE_ROWS });
    }
    let (sv, _, rv) = linear_fit(&ts, &lv);
    let (sz, _, rz) = linear_fit(&ts, &lz);
    Ok(RateEstimate { kappa_v: -sv, kappa_z: -sz, r2: rv.min(rz) })
}

/// `max_t |bary(Z_t) - bary(Z_0)|` in the max norm.
pub fn barycenter_drift(trace: &FlowTrace) -> f64 {
    let b0 = &trace.rows[0].barycenter;
    trace
        .rows
        .iter()
        .flat_map(|r| r.barycenter.iter().zip(b0).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// A priori bound on the flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCertificate {
    /// Largest `|y|` on the support of `ν`.
    pub l: f64,
    /// Smallest distance from the hull of `μ` to a supporting hyperplane of `ν`.
    pub gap: f64,
    pub delta: f64,
    /// Smallest slice mass `ν(S_{a,δ})` over the direction grid.
    pub eta_delta: f64,
    /// Radius with `β(B(r)) > 1 - η(δ/2)`.
    pub r: f64,
    /// `2 (r + L)^2 / δ`, the bound on the unsmoothed map.
    pub m_brenier: f64,
    /// Bound accounting for Gaussian smoothing.
    pub m_smoothed: f64,
    /// Bound used by the monitor: the larger of the two, and at least `L`.
    pub m: f64,
}

/// Number of directions on the unit circle used in dimension 2.
pub const DIRECTIONS_2D: usize = 720;

struct Geometry {
    l: f64,
    gap: f64,
    // (support value ℓ(a), slice function) per direction.
    slices: Vec<Box<dyn Fn(f64) -> f64>>,
}

fn geometry(mu: &DiscreteMeasure, nu: &MarginalSpec) -> Result<Geometry> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch(format!("mu in dimension {}, nu in {}", mu.dim(), nu.dim())));
    }
    match nu.dim() {
        1 => {
            let (lo, hi) = nu.support();
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::UnboundedSupport);
            }
            let (mlo, mhi) = mu.hull_1d();
            let gap = (hi - mhi).min(mlo - lo);
            let (up, down) = (nu.clone(), nu.clone());
            let slices: Vec<Box<dyn Fn(f64) -> f64>> = vec![
                Box::new(move |d| up.cdf_left(hi - d).upper),
                Box::new(move |d| down.cdf(lo + d).lower),
            ];
            Ok(Geometry { l: hi.abs().max(lo.abs()), gap, slices })
        }
        2 => {
            let cloud = nu.as_discrete().ok_or(Error::UnsupportedDimension {
                dim: 2,
                what: "bound certificates need an empirical target in dimension 2",
            })?;
            let l = cloud.iter().map(|(p, _)| p[0].hypot(p[1])).fold(0.0, f64::max);
            let mut gap = f64::INFINITY;
            let mut slices: Vec<Box<dyn Fn(f64) -> f64>> = Vec::with_capacity(DIRECTIONS_2D);
            for k in 0..DIRECTIONS_2D {
                let th = 2.0 * PI * k as f64 / DIRECTIONS_2D as f64;
                let a = [th.cos(), th.sin()];
                let proj: Vec<(f64, f64)> = cloud.iter().map(|(p, w)| (p[0] * a[0] + p[1] * a[1], w)).collect();
                let ell = proj.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
                let top = mu.iter().map(|(p, _)| p[0] * a[0] + p[1] * a[1]).fold(f64::NEG_INFINITY, f64::max);
                gap = gap.min(ell - top);
                slices.push(Box::new(move |d| proj.iter().filter(|p| p.0 >= ell - d).map(|p| p.1).sum()));
            }
            Ok(Geometry { l, gap, slices })
        }
        dim => Err(Error::UnsupportedDimension { dim, what: "bound certificates" }),
    }
}

impl Geometry {
    fn eta(&self, delta: f64) -> f64 {
        self.slices.iter().map(|s| s(delta)).fold(f64::INFINITY, f64::min)
    }
}

/// Radius `r` with `P(|Z + G| > r) < eta` for every law with `E|Z|^2 <= m2`,
/// by Chebyshev.
fn chebyshev_radius(m2: f64, dim: usize, eta: f64) -> f64 {
    ((m2 + dim as f64) / eta).sqrt() * (1.0 + 1e-9)
}

/// Distance from the hull of `μ` to the nearest supporting hyperplane of `ν`.
pub fn support_gap(mu: &DiscreteMeasure, nu: &MarginalSpec) -> Result<f64> {
    Ok(geometry(mu, nu)?.gap)
}

/// Certificate for a flow whose states satisfy `E|Z_t|^2 <= z_second_moment`.
pub fn bound_certificate(mu: &DiscreteMeasure, nu: &MarginalSpec, delta: f64, z_second_moment: f64) -> Result<BoundCertificate> {
    let geo = geometry(mu, nu)?;
    if !(geo.gap > 0.0) {
        return Err(Error::SupportNotInterior { gap: geo.gap });
    }
    if !(delta > 0.0 && delta < geo.gap) {
        return Err(Error::DeltaTooLarge { delta, gap: geo.gap });
    }
    let dim = mu.dim();
    let (l, m2) = (geo.l, z_second_moment.max(0.0));
    let r = chebyshev_radius(m2, dim, geo.eta(delta / 2.0));
    let m_brenier = 2.0 * (r + l) * (r + l) / delta;

    // The smoothed map needs the Brenier bound at depth δ/4, and a Gaussian
    // radius so that the kernel keeps slices of depth δ/2 at distance ε.
    let r_tilde = chebyshev_radius(m2, dim, geo.eta(delta / 8.0));
    let m_tilde = 2.0 * (r_tilde + l) * (r_tilde + l) / (delta / 4.0);
    let eps = delta / (8.0 * l);
    let r_prime = radial_quantile(delta / (4.0 * l), dim);
    let m_smoothed = m_tilde.max(2.0 * r_prime / eps + r_prime);

    Ok(BoundCertificate {
        l,
        gap: geo.gap,
        delta,
        eta_delta: geo.eta(delta),
        r,
        m_brenier,
        m_smoothed,
        m: m_brenier.max(m_smoothed).max(l),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonitorReport {
    pub violations: usize,
}

/// Counts per-atom steps where `|z| > M` but `|z|` did not decrease, and
/// steps that leave the ball of radius `M`.
pub fn boundedness_monitor(trace: &FlowTrace, cert: &BoundCertificate) -> MonitorReport {
    let d = trace.final_state.dim();
    let norms: Vec<Vec<f64>> = trace
        .snapshots
        .iter()
        .map(|z| z.chunks_exact(d).map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect())
        .collect();
    let mut violations = 0;
    for pair in norms.windows(2) {
        for (&a, &b) in pair[0].iter().zip(&pair[1]) {
            if (a > cert.m && b >= a) || (a <= cert.m && b > cert.m) {
                violations += 1;
            }
        }
    }
    MonitorReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifted::{gradient, is_comonotone, Direction, Evaluation};
    use approx::assert_abs_diff_eq;

    fn unif() -> MarginalSpec {
        MarginalSpec::uniform(-1.0, 1.0).unwrap()
    }

    fn pair() -> DiscreteMeasure {
        DiscreteMeasure::from_1d(&[-0.3, 0.3], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig::default().validate().is_ok());
        let bad = FlowConfig { backtrack: 1.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = FlowConfig { h0: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn euler_step_at_dirac_is_still() {
        let mu = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let s = LiftedState::constant(&mu, &[0.4]).unwrap();
        let next = euler_step(&s, 3.0, &unif(), &QuadratureRule::default()).unwrap();
        assert_abs_diff_eq!(next.z()[0], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn euler_step_decreases_value() {
        let g1 = MarginalSpec::gaussian(0.0, 1.0).unwrap();
        let nu = MarginalSpec::gaussian(0.0, 2f64.sqrt()).unwrap();
        let pts = (0..50).map(|i| g1.quantile_at((i as f64 + 0.5) / 50.0)).collect();
        let mu = DiscreteMeasure::uniform(pts, 1).unwrap();
        let s = LiftedState::constant(&mu, &[0.0]).unwrap();
        let rule = QuadratureRule::default();
        let next = euler_step(&s, 0.1, &nu, &rule).unwrap();
        let v = |s: &LiftedState| crate::lifted::bass_value(s, &nu, &rule).unwrap();
        assert!(v(&next) < v(&s));
    }

    #[test]
    fn pair_flow_converges_and_stays_monotone() {
        let s0 = LiftedState::constant(&pair(), &[0.0]).unwrap();
        let cfg = FlowConfig { tol_grad: 1e-9, t_max: 400.0, ..Default::default() };
        let trace = integrate(&s0, &cfg, &unif()).unwrap();
        assert_eq!(trace.termination, Termination::GradToleranceMet);
        assert!(trace.rows.windows(2).all(|r| r[1].t > r[0].t));
        assert!(trace.rows.windows(2).all(|r| r[1].value <= r[0].value + 1e-12));
        for k in 0..trace.rows.len() {
            assert!(is_comonotone(&trace.state_at(k), 0.0));
        }
        assert!(barycenter_drift(&trace) < 1e-12);
        // Restarting from the limit stops immediately.
        let again = integrate(&trace.final_state, &cfg, &unif()).unwrap();
        assert_eq!(again.termination, Termination::GradToleranceMet);
        assert_eq!(again.rows.len(), 1);
    }

    #[test]
    fn t_max_is_hit_exactly() {
        let s0 = LiftedState::constant(&pair(), &[0.0]).unwrap();
        let cfg = FlowConfig { t_max: 0.25, h0: 0.1, ..Default::default() };
        let trace = integrate(&s0, &cfg, &unif()).unwrap();
        assert_eq!(trace.termination, Termination::TMaxReached);
        assert_eq!(trace.last().t, 0.25);
        assert_abs_diff_eq!(trace.last().h, 0.05, epsilon = 1e-15);
    }

    struct Ascent;
    impl Objective for Ascent {
        fn evaluate(&mut self, s: &LiftedState) -> Result<Evaluation> {
            // Gradient points downhill, so every step goes up.
            let value = s.z_second_moment();
            let g = Direction::new(s.z().iter().map(|z| -2.0 * z).collect(), 1)?;
            Ok(Evaluation { value, gradient: g })
        }
    }

    #[test]
    fn non_descent_underflows() {
        let s0 = LiftedState::from_measure(&pair(), vec![-1.0, 1.0]).unwrap();
        let trace = integrate_with(&s0, &FlowConfig::default(), &mut Ascent).unwrap();
        assert_eq!(trace.termination, Termination::StepUnderflow);
    }

    struct Drifting<'a>(Lifted1D<'a>);
    impl Objective for Drifting<'_> {
        fn evaluate(&mut self, s: &LiftedState) -> Result<Evaluation> {
            let e = self.0.evaluate(s)?;
            Ok(Evaluation { value: e.value, gradient: e.gradient.offset(&[0.1]) })
        }
    }

    #[test]
    fn broken_gradient_drift_detected() {
        let nu = unif();
        let mut obj = Drifting(Lifted1D::new(&nu, &QuadratureRule::default()).unwrap());
        let s0 = LiftedState::constant(&pair(), &[0.0]).unwrap();
        let cfg = FlowConfig { t_max: 5.0, ..Default::default() };
        let trace = integrate_with(&s0, &cfg, &mut obj).unwrap();
        assert_abs_diff_eq!(barycenter_drift(&trace), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn rate_needs_rows() {
        let s0 = LiftedState::constant(&pair(), &[0.0]).unwrap();
        let cfg = FlowConfig { t_max: 0.3, ..Default::default() };
        let trace = integrate(&s0, &cfg, &unif()).unwrap();
        assert!(matches!(
            rate_estimate(&trace, trace.last().value, &trace.final_state),
            Err(Error::InsufficientTrace { .. })
        ));
    }

    #[test]
    fn rate_on_pair_flow() {
        let s0 = LiftedState::constant(&pair(), &[0.0]).unwrap();
        let nu = unif();
        let cfg = FlowConfig { tol_grad: 1e-6, ..Default::default() };
        let trace = integrate(&s0, &cfg, &nu).unwrap();
        let tight = integrate(&trace.final_state, &FlowConfig { tol_grad: 1e-11, ..cfg.clone() }, &nu).unwrap();
        let rate = rate_estimate(&trace, tight.last().value, &tight.final_state).unwrap();
        assert!(rate.kappa_v > 0.0 && rate.kappa_z > 0.0, "{rate:?}");
        assert!(rate.r2 >= 0.98, "{rate:?}");
        assert!((rate.kappa_v / (2.0 * rate.kappa_z) - 1.0).abs() < 0.25, "{rate:?}");
    }

    #[test]
    fn certificate_for_uniform_target() {
        let c = bound_certificate(&pair(), &unif(), 0.35, 0.0).unwrap();
        assert_eq!(c.l, 1.0);
        assert_abs_diff_eq!(c.gap, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(c.eta_delta, 0.175, epsilon = 1e-15);
        assert!(c.m >= c.l && c.m >= c.m_brenier && c.m >= c.m_smoothed);
        // η(δ/2) = 0.0875 with E|Z|^2 = 0.
        let r = (1.0f64 / 0.0875).sqrt();
        assert_abs_diff_eq!(c.r, r, epsilon = 1e-8);
        assert_abs_diff_eq!(c.m_brenier, 2.0 * (r + 1.0).powi(2) / 0.35, epsilon = 1e-6);
    }

    #[test]
    fn certificate_errors() {
        let gauss = MarginalSpec::gaussian(0.0, 1.0).unwrap();
        assert!(matches!(bound_certificate(&pair(), &gauss, 0.1, 0.0), Err(Error::UnboundedSupport)));
        assert!(matches!(bound_certificate(&pair(), &unif(), 0.7, 0.0), Err(Error::DeltaTooLarge { .. })));
        assert!(matches!(bound_certificate(&pair(), &unif(), 0.0, 0.0), Err(Error::DeltaTooLarge { .. })));
        let wide = DiscreteMeasure::from_1d(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!(matches!(bound_certificate(&wide, &unif(), 0.1, 0.0), Err(Error::SupportNotInterior { .. })));
    }

    #[test]
    fn certificate_in_two_dimensions() {
        let mut pts = vec![];
        for k in 0..64 {
            let th = 2.0 * PI * k as f64 / 64.0;
            pts.extend([th.cos(), th.sin()]);
        }
        let nu = MarginalSpec::empirical(DiscreteMeasure::uniform(pts, 2).unwrap());
        let mu = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
        let c = bound_certificate(&mu, &nu, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(c.l, 1.0, epsilon = 1e-12);
        assert!(c.gap > 0.99 && c.gap <= 1.0);
        assert!(c.eta_delta > 0.0);
    }

    fn fake_trace(zs: Vec<Vec<f64>>) -> FlowTrace {
        let final_state = LiftedState::from_measure(&pair(), zs.last().unwrap().clone()).unwrap();
        let rows = zs
            .iter()
            .enumerate()
            .map(|(k, z)| {
                let s = final_state.with_z(z.clone()).unwrap();
                row(&s, k as f64, 0.0, 1.0, 0.1)
            })
            .collect();
        FlowTrace { rows, snapshots: zs, final_state, termination: Termination::TMaxReached }
    }

    #[test]
    fn monitor_counts_violations() {
        let cert = bound_certificate(&pair(), &unif(), 0.35, 0.0).unwrap();
        let m = cert.m;
        let inside = fake_trace(vec![vec![-0.5, 0.5], vec![-0.4, 0.4]]);
        assert_eq!(boundedness_monitor(&inside, &cert).violations, 0);
        let shrinking = fake_trace(vec![vec![-2.0 * m, 2.0 * m], vec![-1.5 * m, 1.5 * m], vec![-0.5, 0.5]]);
        assert_eq!(boundedness_monitor(&shrinking, &cert).violations, 0);
        let ascent = fake_trace(vec![vec![-2.0 * m, 2.0 * m], vec![-2.0 * m, 2.5 * m]]);
        assert_eq!(boundedness_monitor(&ascent, &cert).violations, 2);
        let escape = fake_trace(vec![vec![-0.5, 0.5], vec![-0.5, 1.5 * m]]);
        assert_eq!(boundedness_monitor(&escape, &cert).violations, 1);
    }

    #[test]
    fn trace_csv_layout() {
        let s0 = LiftedState::constant(&pair(), &[0.0]).unwrap();
        let trace = integrate(&s0, &FlowConfig { t_max: 0.2, ..Default::default() }, &unif()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,V,grad_norm,bary_1,max_abs_z,h"));
        assert_eq!(lines.count(), trace.rows.len());
        let g = gradient(&trace.final_state, &unif(), &QuadratureRule::default()).unwrap();
        assert_abs_diff_eq!(g.norm(trace.final_state.w()), trace.last().grad_norm, epsilon = 1e-10);
    }
}
