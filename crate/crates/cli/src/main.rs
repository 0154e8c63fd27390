//! `skewstream`: batch deskew, live streaming, phantom generation and
//! benchmarks for oblique lightsheet stacks.

mod bench;
mod config;
mod deskew;
mod live;
mod manifest;
mod phantom;
mod scenes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "skewstream", version, about)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deskew a recorded stack and write one projection per view angle.
    Deskew(deskew::DeskewArgs),
    /// Stream projections of a simulated or replayed acquisition.
    Live(live::LiveArgs),
    /// Measure per-stage cost across exposure, slice count and field of view.
    Bench(bench::BenchArgs),
    /// Render a synthetic scene into an oblique stack with its sidecar.
    PhantomGen(phantom::PhantomArgs),
}

/// Input and metadata problems exit with 2; anything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    use skewstream_core::Error as E;
    let bad_input = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<E>(),
            Some(E::Metadata(_) | E::Io(_) | E::Tiff(_) | E::Png(_) | E::Json(_))
        ) || cause.downcast_ref::<std::io::Error>().is_some()
    });
    if bad_input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = FileConfig::load_optional(cli.config.as_deref()).and_then(|file| match &cli.command {
        Command::Deskew(a) => deskew::run(a, &file),
        Command::Live(a) => live::run(a, &file),
        Command::Bench(a) => bench::run(a, &file),
        Command::PhantomGen(a) => phantom::run(a, &file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
