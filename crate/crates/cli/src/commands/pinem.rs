use std::path::PathBuf;

use clap::Args;
use qilab_core::emission::lin_space;
use qilab_core::pinem::{coupling_sweep, spectrum, InteractionCoupling};
use qilab_core::qi::LabelWindow;
use serde::{Deserialize, Serialize};

use crate::args::{Coupling, CouplingArgs, Modulation, ModulationArgs, Run, RunArgs};
use crate::config::{at_least, finite, merge};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Provenance, Report};

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(default)]
    pub modulation: ModulationArgs,
    #[command(flatten)]
    #[serde(default)]
    pub coupling: CouplingArgs,
    /// Output labels -window..=window [default: wide enough for completeness].
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Serialize)]
struct SpectrumConfig {
    run: Run,
    modulation: Modulation,
    coupling: Coupling,
    window: Option<usize>,
}

pub fn spectrum_cmd(args: &SpectrumArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let cfg = SpectrumConfig {
        run: a.run.resolve(),
        modulation: a.modulation.resolve()?,
        coupling: a.coupling.resolve()?,
        window: a.window,
    };
    let s = spectrum(
        &cfg.modulation.params(),
        &cfg.coupling.coupling()?,
        cfg.window.map(LabelWindow::symmetric),
    )?;
    let prov = Provenance::new("pinem-spectrum", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &["N", "p_with_qi", "p_without_qi"],
    )?;
    for (n, with_qi, without_qi) in s.rows() {
        out.row(&[n.into(), with_qi.into(), without_qi.into()])?;
    }
    out.finish()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(default)]
    pub modulation: ModulationArgs,
    /// Smallest |G| [default: 0].
    #[arg(long)]
    pub g_min: Option<f64>,
    /// Largest |G| [default: 1.5].
    #[arg(long)]
    pub g_max: Option<f64>,
    /// Number of evenly spaced |G| values [default: 16].
    #[arg(long)]
    pub g_points: Option<usize>,
    /// arg G shared by every row, rad [default: 0].
    #[arg(long)]
    pub g_arg: Option<f64>,
    /// Output labels -window..=window [default: wide enough for the largest |G|].
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Serialize)]
struct SweepConfig {
    run: Run,
    modulation: Modulation,
    g_min: f64,
    g_max: f64,
    g_points: usize,
    g_arg: f64,
    window: Option<usize>,
}

pub fn sweep_cmd(args: &SweepArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let cfg = SweepConfig {
        run: a.run.resolve(),
        modulation: a.modulation.resolve()?,
        g_min: finite("g_min", a.g_min.unwrap_or(0.0))?,
        g_max: finite("g_max", a.g_max.unwrap_or(1.5))?,
        g_points: at_least("g_points", a.g_points.unwrap_or(16), 1)?,
        g_arg: finite("g_arg", a.g_arg.unwrap_or(0.0))?,
        window: a.window,
    };
    if cfg.g_min < 0.0 || cfg.g_max < cfg.g_min {
        return Err(CliError::config("g_min/g_max", "need 0 <= g_min <= g_max"));
    }
    let couplings = lin_space(cfg.g_min, cfg.g_max, cfg.g_points)
        .into_iter()
        .map(|g| InteractionCoupling::from_polar(g, cfg.g_arg))
        .collect::<Result<Vec<_>, _>>()?;

    // rows are gathered first so a guard failure leaves no partial output
    let mut rows: Vec<[Cell; 5]> = Vec::new();
    coupling_sweep(
        &cfg.modulation.params(),
        &couplings,
        cfg.window.map(LabelWindow::symmetric),
        |r| {
            rows.push([r.g_abs.into(), r.g_arg.into(), r.n.into(), r.with_qi.into(), r.without_qi.into()]);
            Ok(())
        },
    )?;

    let prov = Provenance::new("pinem-sweep", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &["g_abs", "g_arg", "N", "p_with_qi", "p_without_qi"],
    )?;
    for row in &rows {
        out.row(row)?;
    }
    out.finish()
}
