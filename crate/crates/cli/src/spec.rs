//! Marginal grammar and the solve specification, merged from flags and an
//! optional TOML file.

use std::path::{Path, PathBuf};

use bassflow::flow::FlowConfig;
use bassflow::measures::{DiscreteMeasure, MarginalSpec};
use clap::Args;
use serde::Deserialize;

use crate::CliError;

/// Parses `gaussian:m,s | uniform:a,b | dirac:x | mix:w1*spec1+w2*spec2 | csv:<path>`.
pub fn parse_marginal(text: &str) -> Result<MarginalSpec, CliError> {
    let text = text.trim();
    let (kind, body) = text.split_once(':').ok_or_else(|| bad(text, "expected <kind>:<parameters>"))?;
    let spec = match kind {
        "gaussian" => {
            let [m, s] = numbers::<2>(text, body)?;
            MarginalSpec::gaussian(m, s)?
        }
        "uniform" => {
            let [a, b] = numbers::<2>(text, body)?;
            MarginalSpec::uniform(a, b)?
        }
        "dirac" => {
            let [x] = numbers::<1>(text, body)?;
            MarginalSpec::dirac(x)?
        }
        "csv" => MarginalSpec::empirical(DiscreteMeasure::read_csv(body)?),
        "mix" => {
            let mut components = Vec::new();
            for term in mixture_terms(body) {
                let (w, inner) = term.split_once('*').ok_or_else(|| bad(text, "mixture terms look like w*spec"))?;
                let w: f64 = w.trim().parse().map_err(|_| bad(text, "mixture weight is not a number"))?;
                components.push((w, parse_marginal(inner)?));
            }
            MarginalSpec::mixture(components)?
        }
        _ => return Err(bad(text, "unknown kind")),
    };
    Ok(spec)
}

// Splits on the `+` that start a new `w*spec` term, leaving signs inside
// numbers alone.
fn mixture_terms(body: &str) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    for piece in body.split('+') {
        match terms.last_mut() {
            Some(last) if !piece.contains('*') || last.ends_with(['e', 'E']) => {
                last.push('+');
                last.push_str(piece);
            }
            _ => terms.push(piece.to_string()),
        }
    }
    terms
}

fn numbers<const N: usize>(text: &str, body: &str) -> Result<[f64; N], CliError> {
    let parsed = body
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad(text, "parameters must be numbers"))?;
    parsed.try_into().map_err(|_| bad(text, &format!("expected {N} parameter(s)")))
}

fn bad(text: &str, why: &str) -> CliError {
    CliError::Input(format!("cannot parse marginal '{text}': {why}"))
}

/// Flags shared by every subcommand. Values given here win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Source marginal.
    #[arg(long)]
    pub mu: Option<String>,
    /// Target marginal.
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub n_atoms: Option<usize>,
    /// Initial Euler step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Gradient-norm tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Gauss–Hermite order.
    #[arg(long)]
    pub quad_order: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for path simulation; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Initial positions, a CSV with one row per atom of the discretized source.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// TOML file with any of the above plus a `[flow]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileSpec {
    mu: Option<String>,
    nu: Option<String>,
    n_atoms: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    init: Option<PathBuf>,
    flow: Option<FlowConfig>,
}

pub const DEFAULT_ATOMS: usize = 200;

/// Everything needed to run a subcommand.
#[derive(Debug, Clone)]
pub struct SolveSpec {
    pub mu_text: String,
    pub nu_text: String,
    pub mu: MarginalSpec,
    pub nu: MarginalSpec,
    pub n_atoms: usize,
    pub flow: FlowConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub init: Option<PathBuf>,
}

impl SolveSpec {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => read_file(path)?,
            None => FileSpec::default(),
        };
        let mu_text = args.mu.clone().or(file.mu).ok_or_else(|| CliError::Input("--mu is required".into()))?;
        let nu_text = args.nu.clone().or(file.nu).ok_or_else(|| CliError::Input("--nu is required".into()))?;
        let mut flow = file.flow.unwrap_or_default();
        if let Some(v) = args.step {
            flow.h0 = v;
        }
        if let Some(v) = args.tol {
            flow.tol_grad = v;
        }
        if let Some(v) = args.t_max {
            flow.t_max = v;
        }
        if let Some(v) = args.quad_order {
            flow.quadrature_order = v;
        }
        flow.validate()?;
        let n_atoms = args.n_atoms.or(file.n_atoms).unwrap_or(DEFAULT_ATOMS);
        if n_atoms < 2 {
            return Err(CliError::Input(format!("--n-atoms must be at least 2, got {n_atoms}")));
        }
        let workers = args.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(CliError::Input("--workers must be positive".into()));
        }
        Ok(SolveSpec {
            mu: parse_marginal(&mu_text)?,
            nu: parse_marginal(&nu_text)?,
            mu_text,
            nu_text,
            n_atoms,
            flow,
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out),
            workers,
            init: args.init.clone().or(file.init),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }
}

fn read_file(path: &Path) -> Result<FileSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
