//! `hetero-topo`: learn sparse mixing matrices from label proportions,
//! measure heterogeneity quantities, simulate decentralized SGD, and run
//! end-to-end comparison pipelines.

mod commands;
mod config;
mod manifest;
mod table;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hetero-topo",
    version,
    about = "Decentralized SGD topology learning and heterogeneity measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a sparse doubly stochastic topology from class proportions.
    LearnTopo(commands::learn_topo::Args),
    /// Measure heterogeneity quantities of a topology on a problem.
    Measure(commands::measure::Args),
    /// Simulate D-SGD (or centralized SGD) and write the trace.
    Simulate(commands::simulate::Args),
    /// Learn, measure, simulate and tabulate a full comparison.
    Pipeline(commands::pipeline::Args),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::LearnTopo(args) => commands::learn_topo::run(args),
        Command::Measure(args) => commands::measure::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Pipeline(args) => commands::pipeline::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

/// Exit codes by error class: 2 for configuration/validation problems,
/// 3 for I/O, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<config::ConfigFieldError>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(core) = cause.downcast_ref::<hetero_topo_core::Error>() {
            return match core {
                hetero_topo_core::Error::Io(_) => 3,
                hetero_topo_core::Error::InvalidArgument(_)
                | hetero_topo_core::Error::MatrixParse { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}
