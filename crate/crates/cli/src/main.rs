//! `diffgan`: reproducible Diffusion-GAN experiments with CSV, JSON and SVG artifacts.
//!
//! Exit status is 0 on success, 1 for usage errors, 2 for bad input data
//! and 3 for numeric failures.

mod commands;
mod config;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "diffgan", version, about = "Diffusion-GAN experiments on toy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train on the 25-Gaussians (or a CSV dataset) and score mode coverage.
    Train(commands::TrainCmd),
    /// Sweep the toy JS divergence over a theta x t grid.
    ToyJsd(commands::ToyJsdCmd),
    /// Tabulate the optimal discriminator of the toy problem.
    ToyDisc(commands::ToyDiscCmd),
    /// Write the beta and alpha-bar tables.
    ScheduleDump(commands::ScheduleDumpCmd),
    /// Run the finite-difference gradient suite.
    Gradcheck(commands::GradcheckCmd),
    /// Write diffused copies of a point cloud at several timesteps.
    DiffuseDemo(commands::DiffuseDemoCmd),
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
    let result = match &cli.command {
        Command::Train(c) => commands::train(c),
        Command::ToyJsd(c) => commands::toy_jsd(c),
        Command::ToyDisc(c) => commands::toy_disc(c),
        Command::ScheduleDump(c) => commands::schedule_dump(c),
        Command::Gradcheck(c) => commands::gradcheck(c),
        Command::DiffuseDemo(c) => commands::diffuse_demo(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
