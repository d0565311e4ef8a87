//! Command-line grammar and the `key=value` configuration file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "pdwg", version, about = "Primal-dual weak Galerkin Poisson solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one manufactured case with the monolithic saddle-point solver.
    #[command(args_override_self = true)]
    Solve(Options),
    /// Solve with the Robin-exchange domain-decomposition iteration.
    #[command(args_override_self = true)]
    DdSolve(Options),
    /// Convergence study over `levels` uniform refinements starting at `n`.
    #[command(args_override_self = true)]
    Study(Options),
    /// Run the invariant suite; exits nonzero if any invariant fails.
    #[command(args_override_self = true)]
    Check(Options),
    /// Print mesh and partition statistics.
    #[command(args_override_self = true)]
    MeshInfo(Options),
}

impl Command {
    pub fn options(&self) -> &Options {
        match self {
            Command::Solve(o) | Command::DdSolve(o) | Command::Study(o) | Command::Check(o) | Command::MeshInfo(o) => o,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::DdSolve(_) => "dd-solve",
            Command::Study(_) => "study",
            Command::Check(_) => "check",
            Command::MeshInfo(_) => "mesh-info",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionKind {
    PerElement,
    Blocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
    Json,
}

/// A Robin weight given explicitly or scaled with the mesh size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Auto,
    Value(f64),
}

impl FromStr for Weight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Weight::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Weight::Value(v)),
            _ => Err(format!("expected 'auto' or a positive number, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Flat `key=value` file; every key names a flag, flags given on the
    /// command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cells per side of the uniform unit-square mesh.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Polynomial degree (1, 2 or 3).
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Manufactured solution: sine, harmonic, zero, constant, linear, quadratic, cubic.
    #[arg(long, default_value = "sine")]
    pub case: String,
    #[arg(long, value_enum)]
    pub partition: Option<PartitionKind>,
    /// Blocks per side for `--partition blocks`.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value = "auto")]
    pub beta: Weight,
    #[arg(long, default_value = "auto")]
    pub sigma: Weight,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Result file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Iteration trace CSV (dd-solve).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub mesh_in: Option<PathBuf>,
    #[arg(long)]
    pub mesh_out: Option<PathBuf>,
    /// Matrix Market file of the saddle-point matrix; the right-hand side
    /// goes to the same path with `.rhs` appended.
    #[arg(long)]
    pub dump_system: Option<PathBuf>,
    /// Seed of the randomized utilities (check suite, random initial data).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall-clock time per sweep in the trace.
    #[arg(long)]
    pub timing: bool,
    /// Number of meshes in a study.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Run the study with the domain-decomposition solver.
    #[arg(long)]
    pub dd: bool,
    /// Start dd-solve from random transmission data drawn with `--seed`.
    #[arg(long)]
    pub random_initial: bool,
}

impl Options {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(1..=3).contains(&self.k) {
            return bad(format!("k must be 1, 2 or 3, got {}", self.k));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        Ok(())
    }
}

const SWITCHES: [&str; 3] = ["timing", "dd", "random-initial"];

/// Converts the lines of a configuration file into flags.
pub fn config_flags(text: &str, path: &Path) -> Result<Vec<String>, CliError> {
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected key=value, got '{line}'",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(CliError::Config(format!("{}:{}: nested config files are not supported", path.display(), i + 1)));
        }
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" => flags.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(CliError::Config(format!(
                        "{}:{}: '{key}' takes true or false",
                        path.display(),
                        i + 1
                    )))
                }
            }
        } else {
            flags.push(format!("--{key}={value}"));
        }
    }
    Ok(flags)
}

/// Parses `argv`, splicing the flags of a `--config` file in front of the
/// command-line flags so that the latter win.
pub fn parse(argv: Vec<String>) -> Result<Cli, CliError> {
    let mut config = None;
    let mut iter = argv.iter().enumerate().skip(1);
    while let Some((i, a)) = iter.next() {
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if a == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            iter.next();
        }
    }
    let argv = match config {
        Some(path) if argv.len() > 1 => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut spliced = vec![argv[0].clone(), argv[1].clone()];
            spliced.extend(config_flags(&text, &path)?);
            spliced.extend_from_slice(&argv[2..]);
            spliced
        }
        _ => argv,
    };
    Ok(Cli::try_parse_from(argv)?)
}
