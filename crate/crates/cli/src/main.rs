use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use unlearn_cli::commands;
use unlearn_cli::report::error_envelope;
use unlearn_cli::{CliError, CliResult, RunConfig};

/// Certified unlearning workbench for graph models.
///
/// Configuration is a flat `key = value` file, overridden by `UNLEARN_<KEY>`
/// environment variables, overridden by `--set key=value` and the named
/// flags below.
#[derive(Parser)]
#[command(name = "unlearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory (nodes.tsv, edges.tsv).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Model checkpoint to start from.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Request JSON file.
    #[arg(long)]
    request: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> CliResult<RunConfig> {
        let mut sets = self.set.clone();
        let mut flag = |k: &str, v: String| sets.push(format!("{k}={}", toml_string(&v)));
        if let Some(p) = &self.out {
            flag("out", p.display().to_string());
        }
        if let Some(p) = &self.dataset {
            flag("dataset", p.display().to_string());
        }
        if let Some(p) = &self.model {
            flag("model_path", p.display().to_string());
        }
        if let Some(p) = &self.request {
            flag("request", p.display().to_string());
        }
        if let Some(s) = self.seed {
            for k in ["data_seed", "train_seed", "noise_seed", "sample_seed"] {
                sets.push(format!("{k}={s}"));
            }
        }
        Ok(RunConfig::load(self.config.as_deref(), &sets)?)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save its checkpoint.
    Train(Common),
    /// Apply the influence update for a request.
    Unlearn(Common),
    /// Re-train from scratch on the graph with the request removed.
    Retrain(Common),
    /// Unlearn and add calibrated Gaussian noise.
    Certify(Common),
    /// Full pipeline with the re-training oracle and all metrics.
    Evaluate(Common),
    /// Bound-versus-actual distance sweep over unlearn ratios.
    BenchBounds(Common),
    /// Unlearn versus re-train running time over unlearn ratios.
    BenchTime(Common),
    /// Write a synthetic graph in the native dataset format.
    GenSynthetic(Common),
    /// Convert a Planetoid-style `.content` / `.cites` pair.
    Convert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        cites: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
    },
}

fn run(cmd: &Command) -> CliResult<serde_json::Value> {
    match cmd {
        Command::Train(c) => commands::cmd_train(&c.load()?),
        Command::Unlearn(c) => commands::cmd_unlearn(&c.load()?),
        Command::Retrain(c) => commands::cmd_retrain(&c.load()?),
        Command::Certify(c) => commands::cmd_certify(&c.load()?),
        Command::Evaluate(c) => commands::cmd_evaluate(&c.load()?),
        Command::BenchBounds(c) => commands::cmd_bench_bounds(&c.load()?),
        Command::BenchTime(c) => commands::cmd_bench_time(&c.load()?),
        Command::GenSynthetic(c) => commands::cmd_gen_synthetic(&c.load()?),
        Command::Convert {
            common,
            content,
            cites,
            train_fraction,
        } => commands::cmd_convert(&common.load()?, content, cites, *train_fraction),
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Train(_) => "train",
        Command::Unlearn(_) => "unlearn",
        Command::Retrain(_) => "retrain",
        Command::Certify(_) => "certify",
        Command::Evaluate(_) => "evaluate",
        Command::BenchBounds(_) => "bench-bounds",
        Command::BenchTime(_) => "bench-time",
        Command::GenSynthetic(_) => "gen-synthetic",
        Command::Convert { .. } => "convert",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let e: CliError = e;
            let v = error_envelope(name(&cli.command), e.kind(), &e.to_string(), &e.details());
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
