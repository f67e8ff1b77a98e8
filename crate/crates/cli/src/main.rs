//! Instruction-conditioned video evaluation from the command line: frame
//! sampling, nine-aspect report scoring, alignment evaluation, iterative
//! refinement runs, and loss-mask export.
//!
//! Every subcommand takes `--out` (or `--run-dir`), writes a `manifest.json`
//! recording the resolved configuration and input digests before any
//! endpoint is contacted, and finalizes it on completion. Configuration
//! layers, weakest first: defaults, TOML file, `AIGVE_*` environment
//! variables, flags.
//!
//! Exit codes: 0 success, 2 unusable input or configuration, 3 endpoint
//! failure, 4 unparseable model output, 5 partial batch failure.

mod config;
mod error;
mod eval;
mod manifest;
mod refine_cmd;
mod sample;
mod score;
mod weigh;

use clap::{Parser, Subcommand};
use config::{GlobalArgs, Settings};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "aigve", version, about = "Structured evaluation of instruction-conditioned video")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pick the frames worth scoring from a decoded stream.
    Sample(sample::SampleArgs),
    /// Score one video's frames against its instruction.
    Score(score::ScoreArgs),
    /// Compare predicted reports against ground truth.
    Eval(eval::EvalArgs),
    /// Iteratively regenerate and rescore low-scoring records.
    Refine(refine_cmd::RefineArgs),
    /// Export token-level loss-weight masks for report training text.
    Weigh(weigh::WeighArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Sample(args) => sample::run(&args, settings),
        Command::Weigh(args) => weigh::run(&args, settings),
        Command::Score(args) => block_on(score::run(&args, settings)),
        Command::Eval(args) => block_on(eval::run(&args, settings)),
        Command::Refine(args) => block_on(refine_cmd::run(&args, settings)),
    }
}

fn block_on<F: std::future::Future>(future: F) -> F::Output {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("default runtime settings cannot fail to build")
        .block_on(future)
}
