//! `infereco` command-line front end.
//!
//! Exit codes: 0 success, 1 output failure, 2 input error, 3 nothing
//! feasible.

mod analyze;
mod frontier;
mod manifest;
mod output;
mod specdec;
mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infereco::catalog::{self, Spec};
use infereco::{AcceleratorSpec, ModelArchitecture};

use crate::manifest::InputRecord;

#[derive(Parser, Debug)]
#[command(name = "infereco", version, about = "Speed and cost model for LLM token generation")]
struct Cli {
    /// Directory searched for `<name>.json` before the built-in presets.
    #[arg(long, global = true, env = "INFERECO_PRESET_DIR", value_name = "DIR")]
    preset_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Latency breakdown for one configuration, or the idealized toy model.
    Analyze(analyze::AnalyzeArgs),
    /// Speed-cost Pareto frontier over a configuration grid.
    Frontier(frontier::FrontierArgs),
    /// Frontiers for several accelerators on one plot.
    CompareGpus(frontier::CompareArgs),
    /// Speculative decoding: acceptance rate, draft length and frontier gain.
    Specdec(specdec::SpecdecArgs),
}

/// Flags shared by every command that evaluates a model.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model preset name or spec file.
    #[arg(long)]
    pub model: String,
    /// Weight precision override in bits.
    #[arg(long)]
    pub weight_bits: Option<u32>,
    /// Activation precision override in bits.
    #[arg(long)]
    pub act_bits: Option<u32>,
    /// Tokens already in context per sequence.
    #[arg(long, default_value_t = 0.0)]
    pub context: f64,
    /// Hourly price per GPU in USD, replacing the spec's price.
    #[arg(long)]
    pub price: Option<f64>,
}

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Infeasible(String),
    Output(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Output(m) => f.write_str(m),
        }
    }
}

impl From<infereco::Error> for Failure {
    fn from(e: infereco::Error) -> Self {
        match e {
            infereco::Error::EmptyFeasibleSet => Failure::Infeasible(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Output(_) => 1,
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Context shared by the command implementations.
pub struct Env {
    pub preset_dir: Option<PathBuf>,
}

impl Env {
    pub fn model(&self, arg: &str, role: &str) -> CliResult<(ModelArchitecture, InputRecord)> {
        let model = catalog::resolve_model(arg, self.preset_dir.as_deref())?;
        let record = InputRecord::for_spec(role, arg, self.origin(arg), &Spec::Model(model.clone()));
        Ok((model, record))
    }

    /// Loads the target model and applies precision overrides.
    pub fn target(&self, args: &ModelArgs) -> CliResult<(ModelArchitecture, InputRecord)> {
        let (model, mut record) = self.model(&args.model, "model")?;
        let model = model.with_precisions(args.weight_bits, args.act_bits);
        model.validate()?;
        record.weight_bits = args.weight_bits;
        record.activation_bits = args.act_bits;
        Ok((model, record))
    }

    pub fn accelerator(&self, arg: &str, price: Option<f64>) -> CliResult<(AcceleratorSpec, InputRecord)> {
        let mut acc = catalog::resolve_accelerator(arg, self.preset_dir.as_deref())?;
        let mut record = InputRecord::for_spec("gpu", arg, self.origin(arg), &Spec::Accelerator(acc.clone()));
        if let Some(p) = price {
            acc.hourly_price = p;
            acc.validate()?;
            record.hourly_price_usd = Some(p);
        }
        Ok((acc, record))
    }

    fn origin(&self, arg: &str) -> String {
        if Path::new(arg).is_file() {
            return arg.to_string();
        }
        if let Some(dir) = &self.preset_dir {
            let candidate = dir.join(format!("{arg}.json"));
            if candidate.is_file() {
                return candidate.display().to_string();
            }
        }
        "preset".to_string()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = Env {
        preset_dir: cli.preset_dir,
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze::run(&env, &a),
        Command::Frontier(a) => frontier::run_frontier(&env, &a),
        Command::CompareGpus(a) => frontier::run_compare(&env, &a),
        Command::Specdec(a) => specdec::run(&env, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
