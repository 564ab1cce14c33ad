mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use adaptune_core::env::{Framework, Strategy};
use adaptune_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "adaptune",
    version,
    about = "Adaptive tuning of freeway route-guidance and ramp-metering controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate single episodes and write their per-step traces
    Simulate(Common),
    /// Train agents for every seed and save them with their learning curves
    Train(Common),
    /// Evaluate every trained agent set of a framework and pick the representative
    Evaluate(Common),
    /// Compare strategies over paired runs
    Benchmark(Common),
    /// Sweep observation noise on the route-guidance features
    Robustness(Common),
    /// Render learning curves of a training directory
    Report(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario file; built-in defaults when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "multi", value_parser = parse_framework)]
    framework: Framework,
    /// Comma-separated strategies: no_control, fixed, multi, single
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    strategy: Vec<Strategy>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated base seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated observation-noise levels
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated artifact formats: csv, svg
    #[arg(long, value_delimiter = ',', default_value = "csv")]
    format: Vec<Format>,
    /// Directory holding trained agents (the output directory of `train`)
    #[arg(long, value_name = "DIR")]
    agents: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

fn parse_framework(s: &str) -> Result<Framework, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 1,
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::Train(c) => commands::train(&c),
        Command::Evaluate(c) => commands::evaluate(&c),
        Command::Benchmark(c) => commands::benchmark(&c),
        Command::Robustness(c) => commands::robustness(&c),
        Command::Report(c) => commands::report(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
