use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qilab_core::oracle::{random_product_state, random_unitary_operator};
use qilab_core::pinem::{auto_window, initial_amplitudes, PinemOperator};
use qilab_core::qi::{
    decompose, direct_probability, final_multi_indices, FinalSelector, LabelWindow, ProductState, QiBreakdown,
    ScatteringOperator,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::{Coupling, CouplingArgs, Modulation, ModulationArgs, Run, RunArgs};
use crate::config::merge;
use crate::error::{CliError, CliResult};
use crate::output::{Provenance, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Seeded random product state and random unitary on `dims`.
    Random,
    /// One shaped electron comb scattered by the probe coupling.
    Pinem,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    /// Input model [default: random].
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Per-system dimensions for the random model, comma separated [default: 2,2].
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Final labels per system, `*` marginalises, e.g. `1,*,0` [default: every final multi-index].
    #[arg(long = "final")]
    pub final_labels: Option<String>,
    #[command(flatten)]
    #[serde(default)]
    pub modulation: ModulationArgs,
    #[command(flatten)]
    #[serde(default)]
    pub coupling: CouplingArgs,
    /// Output labels -window..=window for the pinem model [default: automatic].
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Serialize)]
struct DecomposeConfig {
    run: Run,
    mode: Mode,
    dims: Option<Vec<usize>>,
    final_labels: Option<String>,
    modulation: Option<Modulation>,
    coupling: Option<Coupling>,
    window: Option<usize>,
}

fn parse_selector(text: &str, n: usize) -> CliResult<FinalSelector> {
    let fixed = text
        .split(',')
        .map(|t| match t.trim() {
            "*" => Ok(None),
            s => s
                .parse::<i64>()
                .map(Some)
                .map_err(|_| CliError::config("final", format!("`{s}` is neither a label nor `*`"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    if fixed.len() != n {
        return Err(CliError::config(
            "final",
            format!("{} entries given for {n} systems", fixed.len()),
        ));
    }
    Ok(FinalSelector::new(fixed))
}

fn label_text(sel: &FinalSelector) -> String {
    sel.fixed()
        .iter()
        .map(|f| f.map_or("*".to_string(), |l| l.to_string()))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn decompose_cmd(args: &DecomposeArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let run = a.run.resolve();
    let mode = a.mode.unwrap_or(Mode::Random);
    let (state, op, cfg): (ProductState, Box<dyn ScatteringOperator>, DecomposeConfig) = match mode {
        Mode::Random => {
            let dims = a.dims.clone().unwrap_or(vec![2, 2]);
            if dims.is_empty() || dims.len() > 16 || dims.contains(&0) {
                return Err(CliError::config("dims", "need 1 to 16 positive dimensions"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            let state = random_product_state(&dims, &mut rng)?;
            let op = random_unitary_operator(&dims, &mut rng)?;
            let cfg = DecomposeConfig {
                run,
                mode,
                dims: Some(dims),
                final_labels: a.final_labels.clone(),
                modulation: None,
                coupling: None,
                window: None,
            };
            (state, Box::new(op), cfg)
        }
        Mode::Pinem => {
            let modulation = a.modulation.resolve()?;
            let coupling = a.coupling.resolve()?;
            let comb = initial_amplitudes(&modulation.params())?;
            let g = coupling.coupling()?;
            let window = a.window.map_or_else(|| auto_window(&comb, &g), LabelWindow::symmetric);
            let lo = comb.labels()[0];
            let hi = *comb.labels().last().unwrap_or(&lo);
            let op = PinemOperator::new(g, window, LabelWindow::new(lo, hi)?)?;
            let cfg = DecomposeConfig {
                run,
                mode,
                dims: None,
                final_labels: a.final_labels.clone(),
                modulation: Some(modulation),
                coupling: Some(coupling),
                window: a.window,
            };
            (ProductState::single(comb), Box::new(op), cfg)
        }
    };
    let n = state.num_systems();
    let selectors: Vec<FinalSelector> = match &cfg.final_labels {
        Some(text) => vec![parse_selector(text, n)?],
        None => final_multi_indices(op.as_ref(), &FinalSelector::all_free(n))
            .iter()
            .map(|f| FinalSelector::exact(f))
            .collect(),
    };
    let results: Vec<(String, QiBreakdown, f64)> = selectors
        .iter()
        .map(|sel| {
            let b = decompose(&state, op.as_ref(), sel)?;
            let p = direct_probability(&state, op.as_ref(), sel)?;
            Ok((label_text(sel), b, p))
        })
        .collect::<CliResult<_>>()?;

    let prov = Provenance::new("qi-decompose", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &["final", "subset", "order", "term", "direct_probability"],
    )?;
    for (label, b, p) in &results {
        for (set, value) in b.iter() {
            out.row(&[
                crate::output::Cell::Text(label.clone()),
                crate::output::Cell::Text(set.to_string()),
                (set.order() as i64).into(),
                value.into(),
                (*p).into(),
            ])?;
        }
    }
    out.finish()
}
