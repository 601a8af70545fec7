mod exact;
mod simulate;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dyngram::engine::{read_jsonl, trajectory_loglik, EngineError, InitialTerm};
use dyngram::{parse_grammar, validate, Model};

#[derive(Parser)]
#[command(name = "dyngram", version, about = "Simulate and analyse dynamical grammars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a grammar file.
    Validate {
        #[arg(long)]
        grammar: PathBuf,
    },
    /// Run replicas and write one JSONL trajectory per replica.
    Simulate(SimulateArgs),
    /// Solve the master equation on a truncated state space.
    Exact(ExactArgs),
    /// Total variation distance between an exact distribution and samples.
    Compare(CompareArgs),
    /// Log-likelihood of a recorded trajectory.
    Loglik {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Print the parts as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ct,
    Dt,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    grammar: PathBuf,
    /// JSON list of `{species, params, count}`; empty state if omitted.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ct")]
    mode: Mode,
    #[arg(long)]
    tmax: Option<f64>,
    /// Step budget in dt mode.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    #[arg(long)]
    snapshot_dt: Option<f64>,
    #[arg(long)]
    max_events: Option<u64>,
    /// Extra CSV column summing a scalar slot, as `species.slot` (slot name
    /// or 0-based index). Repeatable.
    #[arg(long = "aggregate")]
    aggregates: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long)]
    init: Option<PathBuf>,
    /// `N` for every species, `A=N,B=M` per species, or both (`N,A=M`).
    #[arg(long)]
    caps: String,
    #[arg(long)]
    tmax: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = dyngram::operator::DEFAULT_MAX_STATES)]
    max_states: usize,
    /// Distribution file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generator as `PREFIX.triplets` and `PREFIX.legend.json`.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Distribution written by `exact`.
    #[arg(long)]
    exact: PathBuf,
    /// Trajectory files or glob patterns, or one other distribution file.
    #[arg(required = true)]
    inputs: Vec<String>,
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    /// Compare per-species count marginals (largest distance) instead of
    /// joint states.
    #[arg(long)]
    marginal: bool,
}

/// A failed command: message and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn semantic(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    /// Already reported on stderr.
    fn silent(code: u8) -> Self {
        Self { code, message: String::new() }
    }
}

pub type Outcome = Result<(), Failure>;

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

/// Parses, validates and compiles a grammar file, printing diagnostics as
/// `file:line:col: message`.
pub fn load_model(path: &Path) -> Result<Arc<Model>, Failure> {
    let text = read_text(path)?;
    let g = parse_grammar(&text).map_err(|e| Failure::usage(format!("{}:{e}", path.display())))?;
    let diags = validate(&g);
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("{}:{d}", path.display());
        }
        return Err(Failure::silent(1));
    }
    Ok(Arc::new(Model::compile(&g).expect("validated")))
}

pub fn load_init(path: Option<&Path>) -> Result<Vec<InitialTerm>, Failure> {
    let Some(path) = path else { return Ok(Vec::new()) };
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn engine_failure(e: &EngineError) -> Failure {
    match e {
        EngineError::NotAnSpg(_) | EngineError::InitialState(_) | EngineError::ReplayMismatch { .. } => {
            Failure::semantic(e.to_string())
        }
        EngineError::InvalidOptions(_) => Failure::usage(e.to_string()),
        _ => Failure::runtime(e.to_string()),
    }
}

fn cmd_validate(path: &Path) -> Outcome {
    let model = load_model(path)?;
    println!("{}: ok ({} rules, hash {})", path.display(), model.rules.len(), &model.hash[..12]);
    Ok(())
}

fn cmd_loglik(grammar: &Path, trajectory: &Path, json: bool) -> Outcome {
    let model = load_model(grammar)?;
    let file = fs::File::open(trajectory).map_err(|e| Failure::usage(format!("{}: {e}", trajectory.display())))?;
    let traj = read_jsonl(std::io::BufReader::new(file))
        .map_err(|e| Failure::usage(format!("{}: {e}", trajectory.display())))?;
    let ll = trajectory_loglik(&model, &traj).map_err(|e| engine_failure(&e))?;
    if json {
        println!("{}", serde_json::to_string(&ll).expect("serializable"));
    } else {
        println!("{:.9}", ll.total);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Validate { grammar } => cmd_validate(&grammar),
        Command::Simulate(a) => simulate::run(&a),
        Command::Exact(a) => exact::run_exact(&a),
        Command::Compare(a) => exact::run_compare(&a),
        Command::Loglik { grammar, trajectory, json } => cmd_loglik(&grammar, &trajectory, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
