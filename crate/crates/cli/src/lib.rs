//! Front end of `qi-lab`: argument parsing, config merging, output writers
//! and the oracle suites behind `qi-lab verify`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};

/// Plot data for shaped-electron interference experiments, and the oracles that check it.
#[derive(Debug, Parser)]
#[command(name = "qi-lab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gain/loss spectrum of a shaped comb, with and without interference.
    PinemSpectrum(commands::pinem::SpectrumArgs),
    /// Spectra over a range of probe couplings |G|.
    PinemSweep(commands::pinem::SweepArgs),
    /// Emission rates and figure of merit for one configuration.
    SeRates(commands::emission::RatesArgs),
    /// Rates over a grid of interaction lengths and cavity frequencies.
    SeSweep(commands::emission::SweepArgs),
    /// Optimal interaction length, optionally over energy and transition-frequency grids.
    SeLopt(commands::emission::LoptArgs),
    /// |gamma| over the emitter's Bloch sphere.
    SeBlochMap(commands::emission::BlochArgs),
    /// gamma_max over bunching magnitude and phase.
    SeBunchingMap(commands::emission::BunchingArgs),
    /// Interference decomposition of a product state.
    QiDecompose(commands::decompose::DecomposeArgs),
    /// Runs every oracle suite and prints one summary row per suite.
    Verify(verify::VerifyArgs),
}

/// Sizes the global thread pool from `QI_LAB_THREADS`, if set.
fn configure_threads() -> CliResult<()> {
    let Ok(text) = std::env::var("QI_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config("QI_LAB_THREADS", format!("`{text}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("QI_LAB_THREADS", e.to_string()))
}

pub fn dispatch(command: &Command) -> CliResult<()> {
    configure_threads()?;
    match command {
        Command::PinemSpectrum(a) => commands::pinem::spectrum_cmd(a),
        Command::PinemSweep(a) => commands::pinem::sweep_cmd(a),
        Command::SeRates(a) => commands::emission::rates_cmd(a),
        Command::SeSweep(a) => commands::emission::sweep_cmd(a),
        Command::SeLopt(a) => commands::emission::lopt_cmd(a),
        Command::SeBlochMap(a) => commands::emission::bloch_cmd(a),
        Command::SeBunchingMap(a) => commands::emission::bunching_cmd(a),
        Command::QiDecompose(a) => commands::decompose::decompose_cmd(a),
        Command::Verify(a) => verify::verify_cmd(a),
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qi-lab: error: {e}");
            e.exit_code()
        }
    }
}
