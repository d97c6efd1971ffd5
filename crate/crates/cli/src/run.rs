//! The four subcommands. Each returns its exit code and writes a
//! `summary.json` whenever an output directory is known.

use std::fs;
use std::path::{Path, PathBuf};

use bassflow::flow::{
    barycenter_drift, bound_certificate, boundedness_monitor, integrate, integrate_with, rate_estimate, support_gap,
    BoundCertificate, FlowConfig, FlowTrace, RateEstimate, Termination,
};
use bassflow::lifted::{bass_value, LiftedState};
use bassflow::martingale::{
    duality_gap, marginal_check, martingale_check, simulate_with_workers, uniform_grid, DualityReport, MarginalReport,
    MartingaleReport,
};
use bassflow::measures::{convex_order_check_with_slack, irreducibility_check_with_slack, ConvexOrder, DiscreteMeasure, MarginalSpec};
use bassflow::oracle::brute_force_bass_measure;
use bassflow::semidiscrete::SemiDiscrete;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::spec::{CommonArgs, SolveSpec};
use crate::{json, CliError};

pub const SCHEMA_VERSION: u32 = 1;
/// Slack on the potentials when checking the discretized source.
const ORDER_SLACK: f64 = 1e-6;
const DEFAULT_OUT: &str = "bassflow-out";
const ORACLE_ATOMS: usize = 8;

/// Exit codes.
const OK: u8 = 0;
const T_MAX: u8 = 2;
const PRECONDITION: u8 = 3;
const NUMERICAL: u8 = 4;

#[derive(Debug, Serialize)]
struct ErrorInfo {
    kind: String,
    message: String,
}

impl From<&CliError> for ErrorInfo {
    fn from(e: &CliError) -> Self {
        let kind = match e {
            CliError::Core(inner) => {
                let debug = format!("{inner:?}");
                debug.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
            }
            CliError::Input(_) => "InvalidInput".into(),
            CliError::Io(_) => "Io".into(),
            CliError::Json(_) => "Json".into(),
        };
        ErrorInfo { kind, message: e.to_string() }
    }
}

/// An error tagged with the exit code it maps to.
struct Failure(u8, CliError);

trait Stage<T> {
    fn at(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<CliError>> Stage<T> for Result<T, E> {
    fn at(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure(code, e.into()))
    }
}

fn out_dir(args: &CommonArgs, spec: Option<&SolveSpec>) -> PathBuf {
    spec.and_then(|s| s.out.clone()).or_else(|| args.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_summary<T: Serialize>(dir: &Path, summary: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), json::to_string(summary)?)?;
    Ok(())
}

/// Common tail: record the error, write the summary, report the code.
fn finish<T: Serialize>(dir: &Path, summary: &mut T, result: Result<u8, Failure>, set: impl FnOnce(&mut T, u8, Option<ErrorInfo>)) -> u8 {
    let code = match result {
        Ok(code) => {
            set(summary, code, None);
            code
        }
        Err(Failure(code, e)) => {
            eprintln!("error: {e}");
            set(summary, code, Some(ErrorInfo::from(&e)));
            code
        }
    };
    if let Err(e) = write_summary(dir, summary) {
        eprintln!("error: cannot write summary to {}: {e}", dir.display());
        return code.max(PRECONDITION);
    }
    code
}

/// Quantile midpoints in 1-D. In higher dimension the cloud itself when it
/// has at most `n_atoms` atoms, else seeded i.i.d. draws from it moved onto
/// its barycenter.
fn discretize_source(spec: &SolveSpec) -> Result<DiscreteMeasure, CliError> {
    if spec.dim() == 1 {
        return Ok(spec.mu.discretize(spec.n_atoms)?);
    }
    let cloud = spec.mu.as_discrete().expect("multidimensional marginals are clouds");
    if cloud.len() <= spec.n_atoms {
        return Ok(cloud.clone());
    }
    let picker = WeightedIndex::new(cloud.weights()).map_err(|e| CliError::Input(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pts = (0..spec.n_atoms).flat_map(|_| cloud.point(picker.sample(&mut rng)).to_vec()).collect();
    let sample = DiscreteMeasure::uniform(pts, spec.dim())?;
    let shift: Vec<f64> = cloud.moments().barycenter.iter().zip(sample.moments().barycenter).map(|(a, b)| a - b).collect();
    Ok(sample.map_points(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect())?)
}

fn order_label(order: ConvexOrder) -> &'static str {
    match order {
        ConvexOrder::Ordered => "ordered",
        ConvexOrder::Violated { .. } => "violated",
        ConvexOrder::Unknown => "unknown",
    }
}

#[derive(Debug, Default, Serialize)]
struct Preconditions {
    convex_order: Option<&'static str>,
    irreducible: Option<bool>,
    /// "checked" in 1-D; irreducibility cannot be verified in higher dimension.
    hypotheses: Option<&'static str>,
}

fn preconditions(mu: &DiscreteMeasure, nu: &MarginalSpec) -> Result<Preconditions, CliError> {
    if mu.dim() != nu.dim() {
        return Err(CliError::Input(format!("source in dimension {}, target in {}", mu.dim(), nu.dim())));
    }
    if mu.dim() >= 2 {
        let (a, b) = (mu.moments().barycenter, nu.mean());
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if gap > ORDER_SLACK * (1.0 + nu.second_moment().sqrt()) {
            return Err(CliError::Input(format!("barycenters differ by {gap:e}, so the marginals are not in convex order")));
        }
        return Ok(Preconditions { convex_order: Some("unknown"), irreducible: None, hypotheses: Some("unverified") });
    }
    let order = convex_order_check_with_slack(mu, nu, ORDER_SLACK);
    if let ConvexOrder::Violated { witness } = order {
        return Err(bassflow::Error::NotInConvexOrder { witness }.into());
    }
    Ok(Preconditions {
        convex_order: Some(order_label(order)),
        irreducible: Some(irreducibility_check_with_slack(mu, nu, ORDER_SLACK)?),
        hypotheses: Some("checked"),
    })
}

#[derive(Debug, Default, Serialize)]
struct CertificateReport {
    certificate: Option<BoundCertificate>,
    certificate_error: Option<String>,
}

fn certify(mu: &DiscreteMeasure, nu: &MarginalSpec, delta: Option<f64>, m2: f64) -> CertificateReport {
    let made = support_gap(mu, nu).and_then(|gap| bound_certificate(mu, nu, delta.unwrap_or(0.5 * gap), m2));
    match made {
        Ok(c) => CertificateReport { certificate: Some(c), certificate_error: None },
        Err(e) => CertificateReport { certificate: None, certificate_error: Some(e.to_string()) },
    }
}

#[derive(Debug, Default, Serialize)]
struct SolveSummary {
    schema_version: u32,
    command: &'static str,
    exit_code: u8,
    error: Option<ErrorInfo>,
    mu: Option<String>,
    nu: Option<String>,
    dim: Option<usize>,
    n_atoms: Option<usize>,
    seed: Option<u64>,
    flow: Option<FlowConfig>,
    #[serde(flatten)]
    preconditions: Preconditions,
    termination: Option<Termination>,
    t_final: Option<f64>,
    v_final: Option<f64>,
    grad_norm: Option<f64>,
    rows: Option<usize>,
    barycenter_drift: Option<f64>,
    rate: Option<RateEstimate>,
    rate_error: Option<String>,
    #[serde(flatten)]
    certificate: CertificateReport,
    monitor_violations: Option<usize>,
}

pub fn solve(args: &CommonArgs, delta: Option<f64>, mc_samples: usize) -> u8 {
    let mut summary = SolveSummary { schema_version: SCHEMA_VERSION, command: "solve", ..Default::default() };
    let spec = SolveSpec::resolve(args);
    let dir = out_dir(args, spec.as_ref().ok());
    let result = spec.at(PRECONDITION).and_then(|spec| solve_inner(&spec, &dir, delta, mc_samples, &mut summary));
    finish(&dir, &mut summary, result, |s, code, err| {
        s.exit_code = code;
        s.error = err;
    })
}

fn solve_inner(spec: &SolveSpec, dir: &Path, delta: Option<f64>, mc_samples: usize, summary: &mut SolveSummary) -> Result<u8, Failure> {
    summary.mu = Some(spec.mu_text.clone());
    summary.nu = Some(spec.nu_text.clone());
    summary.dim = Some(spec.dim());
    summary.n_atoms = Some(spec.n_atoms);
    summary.seed = Some(spec.seed);
    summary.flow = Some(spec.flow.clone());
    let mu = discretize_source(spec).at(PRECONDITION)?;
    summary.preconditions = preconditions(&mu, &spec.nu).at(PRECONDITION)?;
    let s0 = initial_state(spec, &mu).at(PRECONDITION)?;
    log::info!("{} atoms in dimension {}, integrating to t = {}", mu.len(), mu.dim(), spec.flow.t_max);

    let trace = if spec.dim() == 1 {
        integrate(&s0, &spec.flow, &spec.nu).at(NUMERICAL)?
    } else {
        let cloud = spec.nu.as_discrete().ok_or_else(|| CliError::Input("targets in dimension 2 and above must be csv clouds".into())).at(PRECONDITION)?;
        let mut objective = SemiDiscrete::new(cloud, mc_samples, spec.seed).at(PRECONDITION)?;
        integrate_with(&s0, &spec.flow, &mut objective).at(NUMERICAL)?
    };
    write_outputs(dir, &trace).at(PRECONDITION)?;

    let last = trace.last();
    log::info!("{:?} at t = {} with V = {} and |grad| = {:e}", trace.termination, last.t, last.value, last.grad_norm);
    summary.termination = Some(trace.termination);
    summary.t_final = Some(last.t);
    summary.v_final = Some(last.value);
    summary.grad_norm = Some(last.grad_norm);
    summary.rows = Some(trace.rows.len());
    summary.barycenter_drift = Some(barycenter_drift(&trace));
    match rate_estimate(&trace, last.value, &trace.final_state) {
        Ok(r) => summary.rate = Some(r),
        Err(e) => summary.rate_error = Some(e.to_string()),
    }
    summary.certificate = certify(&mu, &spec.nu, delta, trace.max_z_second_moment());
    summary.monitor_violations = summary.certificate.certificate.as_ref().map(|c| boundedness_monitor(&trace, c).violations);
    Ok(match trace.termination {
        Termination::GradToleranceMet => OK,
        Termination::TMaxReached => T_MAX,
        Termination::StepUnderflow => NUMERICAL,
    })
}

fn initial_state(spec: &SolveSpec, mu: &DiscreteMeasure) -> Result<LiftedState, CliError> {
    let Some(path) = &spec.init else {
        return Ok(LiftedState::identity(mu));
    };
    let init = DiscreteMeasure::read_csv(path)?;
    if init.len() != mu.len() || init.dim() != mu.dim() {
        return Err(CliError::Input(format!(
            "--init has {} atoms in dimension {}, the source has {} in dimension {}",
            init.len(),
            init.dim(),
            mu.len(),
            mu.dim()
        )));
    }
    Ok(LiftedState::from_measure(mu, init.points().to_vec())?)
}

fn write_outputs(dir: &Path, trace: &FlowTrace) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    trace.write_csv_file(&dir.join("trace.csv"))?;
    trace.final_state.z_law().write_csv(dir.join("bass_measure.csv"))?;
    Ok(())
}

#[derive(Debug, Default, Serialize)]
struct SimulateSummary {
    schema_version: u32,
    command: &'static str,
    exit_code: u8,
    error: Option<ErrorInfo>,
    seed: Option<u64>,
    n_paths: Option<usize>,
    times: Option<Vec<f64>>,
    v_value: Option<f64>,
    marginal_t0: Option<MarginalReport>,
    marginal_t1: Option<MarginalReport>,
    martingale: Option<MartingaleReport>,
    duality: Option<DualityReport>,
    passed: Option<bool>,
}

pub fn simulate(args: &CommonArgs, bass_measure: Option<&Path>, n_paths: usize, steps: usize, write_paths: bool) -> u8 {
    let mut summary = SimulateSummary { schema_version: SCHEMA_VERSION, command: "simulate", ..Default::default() };
    let spec = SolveSpec::resolve(args);
    let dir = out_dir(args, spec.as_ref().ok());
    let result = spec.at(PRECONDITION).and_then(|spec| {
        let alpha_path = bass_measure.map(Path::to_path_buf).unwrap_or_else(|| dir.join("bass_measure.csv"));
        simulate_inner(&spec, &dir, &alpha_path, n_paths, steps, write_paths, &mut summary)
    });
    finish(&dir, &mut summary, result, |s, code, err| {
        s.exit_code = code;
        s.error = err;
    })
}

/// Pairs the sorted Bass atoms with the sorted quantile midpoints of `μ`.
fn comonotone_state(mu: &MarginalSpec, alpha: &DiscreteMeasure) -> Result<LiftedState, CliError> {
    let n = alpha.len();
    if alpha.weights().iter().any(|w| (w * n as f64 - 1.0).abs() > 1e-9) {
        return Err(CliError::Input("the Bass measure must have equal weights".into()));
    }
    let x = mu.discretize(n)?;
    let mut z = alpha.points().to_vec();
    z.sort_by(f64::total_cmp);
    Ok(LiftedState::from_measure(&x, z)?)
}

#[allow(clippy::too_many_arguments)]
fn simulate_inner(
    spec: &SolveSpec,
    dir: &Path,
    alpha_path: &Path,
    n_paths: usize,
    steps: usize,
    write_paths: bool,
    summary: &mut SimulateSummary,
) -> Result<u8, Failure> {
    if spec.dim() != 1 {
        return Err(Failure(PRECONDITION, CliError::Input("simulation is one-dimensional".into())));
    }
    let alpha = DiscreteMeasure::read_csv(alpha_path).at(PRECONDITION)?;
    let s_star = comonotone_state(&spec.mu, &alpha).at(PRECONDITION)?;
    let rule = spec.flow.rule().at(PRECONDITION)?;
    let grid = uniform_grid(steps);
    let paths = simulate_with_workers(&s_star, &spec.nu, &rule, n_paths, &grid, spec.seed, spec.flow.tol_grad, spec.workers)
        .at(PRECONDITION)?;
    if write_paths {
        fs::create_dir_all(dir).at(PRECONDITION)?;
        paths.write_csv_file(dir.join("paths.csv")).at(PRECONDITION)?;
    }
    let v_value = bass_value(&s_star, &spec.nu, &rule).at(NUMERICAL)?;
    let pairs: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
    let t0 = marginal_check(&paths, 0.0, &spec.mu).at(NUMERICAL)?;
    let t1 = marginal_check(&paths, 1.0, &spec.nu).at(NUMERICAL)?;
    let mart = martingale_check(&paths, &pairs).at(PRECONDITION)?;
    let dual = duality_gap(&paths, v_value, &spec.mu, &spec.nu).at(NUMERICAL)?;
    let passed = t1.ks < t1.ks_bound && mart.within(3.0) && dual.gap.abs() <= 3.0 * dual.se;
    log::info!("KS {:.4} (bound {:.4}), duality gap {:.3e} (se {:.3e})", t1.ks, t1.ks_bound, dual.gap, dual.se);
    summary.seed = Some(spec.seed);
    summary.n_paths = Some(n_paths);
    summary.times = Some(grid);
    summary.v_value = Some(v_value);
    summary.marginal_t0 = Some(t0);
    summary.marginal_t1 = Some(t1);
    summary.martingale = Some(mart);
    summary.duality = Some(dual);
    summary.passed = Some(passed);
    Ok(if passed { OK } else { NUMERICAL })
}

#[derive(Debug, Default, Serialize)]
struct CheckSummary {
    schema_version: u32,
    command: &'static str,
    exit_code: u8,
    error: Option<ErrorInfo>,
    n_atoms: Option<usize>,
    #[serde(flatten)]
    preconditions: Preconditions,
    #[serde(flatten)]
    certificate: CertificateReport,
}

pub fn check(args: &CommonArgs, delta: Option<f64>) -> u8 {
    let mut summary = CheckSummary { schema_version: SCHEMA_VERSION, command: "check", ..Default::default() };
    let spec = SolveSpec::resolve(args);
    let dir = out_dir(args, spec.as_ref().ok());
    let result = spec.at(PRECONDITION).and_then(|spec| {
        summary.n_atoms = Some(spec.n_atoms);
        let mu = discretize_source(&spec).at(PRECONDITION)?;
        summary.preconditions = preconditions(&mu, &spec.nu).at(PRECONDITION)?;
        summary.certificate = certify(&mu, &spec.nu, delta, mu.moments().second_moment);
        Ok(OK)
    });
    let code = finish(&dir, &mut summary, result, |s, code, err| {
        s.exit_code = code;
        s.error = err;
    });
    if let Ok(text) = json::to_string(&summary) {
        print!("{text}");
    }
    code
}

#[derive(Debug, Default, Serialize)]
struct OracleSummary {
    schema_version: u32,
    command: &'static str,
    exit_code: u8,
    error: Option<ErrorInfo>,
    n_atoms: Option<usize>,
    value: Option<f64>,
    evaluations: Option<usize>,
    budget_exhausted: Option<bool>,
    atoms: Option<Vec<f64>>,
}

pub fn oracle(args: &CommonArgs, budget: usize) -> u8 {
    let mut summary = OracleSummary { schema_version: SCHEMA_VERSION, command: "oracle", ..Default::default() };
    let n = args.n_atoms.unwrap_or(ORACLE_ATOMS);
    let args = CommonArgs { n_atoms: Some(n.max(2)), ..args.clone() };
    let spec = SolveSpec::resolve(&args);
    let dir = out_dir(&args, spec.as_ref().ok());
    let result = spec.at(PRECONDITION).and_then(|spec| {
        let r = brute_force_bass_measure(&spec.mu, &spec.nu, n, budget, spec.seed).at(PRECONDITION)?;
        fs::create_dir_all(&dir).at(PRECONDITION)?;
        r.measure.write_csv(dir.join("oracle_measure.csv")).at(PRECONDITION)?;
        summary.n_atoms = Some(n);
        summary.value = Some(r.value);
        summary.evaluations = Some(r.evaluations);
        summary.budget_exhausted = Some(r.budget_exhausted);
        summary.atoms = Some(r.measure.points().to_vec());
        Ok(if r.budget_exhausted { T_MAX } else { OK })
    });
    finish(&dir, &mut summary, result, |s, code, err| {
        s.exit_code = code;
        s.error = err;
    })
}
