use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use clap::Args;
use qilab_core::emission::{
    bloch_map, bunching_sensitivity, lin_space, log_space, optimize_length, rates, resonance_sweep, CavityTemplate,
    EmissionRates, OmegaModPolicy,
};
use serde::{Deserialize, Serialize};

use crate::args::{
    volume_policy, Atom, AtomArgs, Beam, BeamArgs, Cavity, CavityArgs, PolicyKind, Run, RunArgs, Search, SearchArgs, K,
};
use crate::config::{at_least, finite, merge, Length};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Provenance, Report};

const RATE_COLUMNS: [&str; 5] = ["gamma_a", "gamma_e", "gamma_ae", "total", "fom"];

fn rate_cells(r: &EmissionRates) -> [Cell; 5] {
    [
        r.gamma_a.into(),
        r.gamma_e.into(),
        r.gamma_ae.into(),
        r.total.into(),
        r.fom.into(),
    ]
}

fn columns(lead: &[&'static str], tail: &[&'static str]) -> Vec<&'static str> {
    lead.iter().chain(tail).copied().collect()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(default)]
    pub beam: BeamArgs,
    #[command(flatten)]
    #[serde(default)]
    pub atom: AtomArgs,
    #[command(flatten)]
    #[serde(default)]
    pub cavity: CavityArgs,
}

#[derive(Serialize)]
struct RatesConfig {
    run: Run,
    beam: Beam,
    atom: Atom,
    cavity: Cavity,
}

pub fn rates_cmd(args: &RatesArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let atom = a.atom.resolve()?;
    let cfg = RatesConfig {
        run: a.run.resolve(),
        beam: a.beam.resolve()?,
        cavity: a.cavity.resolve(&atom)?,
        atom,
    };
    let fe = cfg.beam.params(cfg.cavity.omega_cav);
    let r = rates(&K, &fe, &cfg.atom.params(), &cfg.cavity.params()?)?;
    let prov = Provenance::new("se-rates", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &columns(&["length_m", "omega_cav", "omega_mod", "volume_m3"], &RATE_COLUMNS),
    )?;
    let mut row: Vec<Cell> = vec![
        cfg.cavity.length.into(),
        cfg.cavity.omega_cav.into(),
        fe.omega_mod.into(),
        cfg.cavity.volume.into(),
    ];
    row.extend(rate_cells(&r));
    out.row(&row)?;
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
    pub beam: BeamArgs,
    #[command(flatten)]
    #[serde(default)]
    pub atom: AtomArgs,
    /// Fixed mode volume, m^3 [default: L (lambda_cav / 2)^2 per cell].
    #[arg(long)]
    pub volume: Option<f64>,
    /// Shortest length [default: 10nm].
    #[arg(long)]
    pub l_min: Option<Length>,
    /// Longest length [default: 10um].
    #[arg(long)]
    pub l_max: Option<Length>,
    /// Log-spaced lengths [default: 121].
    #[arg(long)]
    pub l_points: Option<usize>,
    /// Lowest cavity frequency, rad/s [default: 0.9 omega_a].
    #[arg(long)]
    pub omega_cav_min: Option<f64>,
    /// Highest cavity frequency, rad/s [default: 1.1 omega_a].
    #[arg(long)]
    pub omega_cav_max: Option<f64>,
    /// Evenly spaced cavity frequencies [default: 41].
    #[arg(long)]
    pub omega_cav_points: Option<usize>,
    /// track: omega_mod = omega_cav per cell; fixed: the beam's omega_mod [default: track].
    #[arg(long, value_enum)]
    pub omega_mod_policy: Option<PolicyKind>,
}

#[derive(Serialize)]
struct SweepConfig {
    run: Run,
    beam: Beam,
    atom: Atom,
    volume: Option<f64>,
    l_min: f64,
    l_max: f64,
    l_points: usize,
    omega_cav_min: f64,
    omega_cav_max: f64,
    omega_cav_points: usize,
    omega_mod_policy: PolicyKind,
}

pub fn sweep_cmd(args: &SweepArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let atom = a.atom.resolve()?;
    let cfg = SweepConfig {
        run: a.run.resolve(),
        beam: a.beam.resolve()?,
        volume: a.volume,
        l_min: finite("l_min", a.l_min.map_or(1e-8, Length::metres))?,
        l_max: finite("l_max", a.l_max.map_or(1e-5, Length::metres))?,
        l_points: at_least("l_points", a.l_points.unwrap_or(121), 1)?,
        omega_cav_min: finite("omega_cav_min", a.omega_cav_min.unwrap_or(0.9 * atom.omega_a))?,
        omega_cav_max: finite("omega_cav_max", a.omega_cav_max.unwrap_or(1.1 * atom.omega_a))?,
        omega_cav_points: at_least("omega_cav_points", a.omega_cav_points.unwrap_or(41), 1)?,
        omega_mod_policy: a.omega_mod_policy.unwrap_or(PolicyKind::Track),
        atom,
    };
    if !(cfg.l_min > 0.0 && cfg.l_max >= cfg.l_min) {
        return Err(CliError::config("l_min/l_max", "need 0 < l_min <= l_max"));
    }
    if !(cfg.omega_cav_min > 0.0 && cfg.omega_cav_max >= cfg.omega_cav_min) {
        return Err(CliError::config("omega_cav_min/omega_cav_max", "need 0 < min <= max"));
    }
    let policy = match cfg.omega_mod_policy {
        PolicyKind::Track => OmegaModPolicy::TrackCavity,
        PolicyKind::Fixed if cfg.beam.omega_mod.is_some() => OmegaModPolicy::Fixed,
        PolicyKind::Fixed => {
            return Err(CliError::config("omega_mod", "the fixed policy needs an explicit omega_mod"))
        }
        PolicyKind::Joint => {
            return Err(CliError::config("omega_mod_policy", "joint is only meaningful for se-lopt"))
        }
    };
    let lengths = log_space(cfg.l_min, cfg.l_max, cfg.l_points);
    let omegas = lin_space(cfg.omega_cav_min, cfg.omega_cav_max, cfg.omega_cav_points);
    let fe = cfg.beam.params(0.0);

    let prov = Provenance::new("se-sweep", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &columns(&["length_m", "omega_cav", "omega_mod"], &RATE_COLUMNS),
    )?;
    let mut failure = None;
    let result = resonance_sweep(
        &K,
        &fe,
        &cfg.atom.params(),
        volume_policy(cfg.volume)?,
        &lengths,
        &omegas,
        policy,
        |c| {
            let mut row: Vec<Cell> = vec![c.length.into(), c.omega_cav.into(), c.omega_mod.into()];
            row.extend(rate_cells(&c.rates));
            out.row(&row).map_err(|e| {
                let msg = e.to_string();
                failure = Some(e);
                qilab_core::Error::Invariant(msg)
            })
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    out.finish()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoptArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(default)]
    pub beam: BeamArgs,
    #[command(flatten)]
    #[serde(default)]
    pub atom: AtomArgs,
    #[command(flatten)]
    #[serde(default)]
    pub search: SearchArgs,
    /// Cavity frequency, rad/s [default: resonant with each omega_a].
    #[arg(long)]
    pub omega_cav: Option<f64>,
    /// Fixed mode volume, m^3 [default: L (lambda_cav / 2)^2].
    #[arg(long)]
    pub volume: Option<f64>,
    /// Kinetic energies to scan, eV, comma separated [default: the beam energy].
    #[arg(long, value_delimiter = ',')]
    pub energies_ev: Option<Vec<f64>>,
    /// Transition frequencies to scan, rad/s, comma separated [default: the atom's omega_a].
    #[arg(long, value_delimiter = ',')]
    pub omegas_a: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct LoptConfig {
    run: Run,
    beam: Beam,
    atom: Atom,
    search: Search,
    omega_cav: Option<f64>,
    volume: Option<f64>,
    energies_ev: Vec<f64>,
    omegas_a: Vec<f64>,
}

pub fn lopt_cmd(args: &LoptArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let beam = a.beam.resolve()?;
    let atom = a.atom.resolve()?;
    let cfg = LoptConfig {
        run: a.run.resolve(),
        search: a.search.resolve()?,
        omega_cav: a.omega_cav.map(|w| finite("omega_cav", w)).transpose()?,
        volume: a.volume,
        energies_ev: a.energies_ev.clone().unwrap_or(vec![beam.energy_ev]),
        omegas_a: a.omegas_a.clone().unwrap_or(vec![atom.omega_a]),
        beam,
        atom,
    };
    if cfg.energies_ev.is_empty() || cfg.omegas_a.is_empty() {
        return Err(CliError::config("energies_ev/omegas_a", "grids must not be empty"));
    }
    let volume = volume_policy(cfg.volume)?;
    let prov = Provenance::new("se-lopt", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &[
            "energy_ev",
            "omega_a",
            "omega_cav",
            "omega_mod",
            "l_opt_m",
            "gamma_max",
            "degenerate",
        ],
    )?;
    for &energy_ev in &cfg.energies_ev {
        for &omega_a in &cfg.omegas_a {
            let omega_cav = cfg.omega_cav.unwrap_or(omega_a);
            let beam = Beam { energy_ev, ..cfg.beam };
            let atom = Atom { omega_a, ..cfg.atom };
            let template = CavityTemplate { omega_cav, volume };
            let best = optimize_length(
                &K,
                &beam.params(omega_cav),
                &atom.params(),
                &template,
                &cfg.search.length_search(),
                cfg.search.policy(omega_cav),
            )?;
            out.row(&[
                energy_ev.into(),
                omega_a.into(),
                omega_cav.into(),
                best.omega_mod.into(),
                best.l_opt.into(),
                best.gamma_max.into(),
                best.degenerate.into(),
            ])?;
        }
    }
    out.finish()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(default)]
    pub beam: BeamArgs,
    #[command(flatten)]
    #[serde(default)]
    pub atom: AtomArgs,
    #[command(flatten)]
    #[serde(default)]
    pub cavity: CavityArgs,
    /// Polar angles evenly spaced over [0, pi] [default: 19].
    #[arg(long)]
    pub theta_points: Option<usize>,
    /// Azimuths evenly spaced over [0, 2 pi) [default: 36].
    #[arg(long)]
    pub phi_points: Option<usize>,
}

#[derive(Serialize)]
struct BlochConfig {
    run: Run,
    beam: Beam,
    atom: Atom,
    cavity: Cavity,
    theta_points: usize,
    phi_points: usize,
}

pub fn bloch_cmd(args: &BlochArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let atom = a.atom.resolve()?;
    let cfg = BlochConfig {
        run: a.run.resolve(),
        beam: a.beam.resolve()?,
        cavity: a.cavity.resolve(&atom)?,
        atom,
        theta_points: at_least("theta_points", a.theta_points.unwrap_or(19), 2)?,
        phi_points: at_least("phi_points", a.phi_points.unwrap_or(36), 1)?,
    };
    let thetas = lin_space(0.0, PI, cfg.theta_points);
    let phis: Vec<f64> = (0..cfg.phi_points)
        .map(|i| TAU * i as f64 / cfg.phi_points as f64)
        .collect();
    let cells = bloch_map(
        &K,
        &cfg.beam.params(cfg.cavity.omega_cav),
        &cfg.atom.params(),
        &cfg.cavity.params()?,
        &thetas,
        &phis,
    )?;
    let prov = Provenance::new("se-bloch-map", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &["theta_a", "phi_a", "fom_abs"],
    )?;
    for c in &cells {
        out.row(&[c.theta_a.into(), c.phi_a.into(), c.fom_abs.into()])?;
    }
    out.finish()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BunchingArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    #[command(flatten)]
    #[serde(default)]
    pub atom: AtomArgs,
    #[command(flatten)]
    #[serde(default)]
    pub search: SearchArgs,
    /// Electron kinetic energy, eV [default: 30000].
    #[arg(long)]
    pub energy_ev: Option<f64>,
    /// Cavity frequency, rad/s [default: omega_a].
    #[arg(long)]
    pub omega_cav: Option<f64>,
    /// Fixed mode volume, m^3 [default: L (lambda_cav / 2)^2].
    #[arg(long)]
    pub volume: Option<f64>,
    /// Smallest |b| [default: 0].
    #[arg(long)]
    pub b_min: Option<f64>,
    /// Largest |b| [default: 0.99].
    #[arg(long)]
    pub b_max: Option<f64>,
    /// Evenly spaced |b| values [default: 12].
    #[arg(long)]
    pub b_points: Option<usize>,
    /// Bunching phases evenly spaced over [0, 2 pi) [default: 12].
    #[arg(long)]
    pub psi_points: Option<usize>,
}

#[derive(Serialize)]
struct BunchingConfig {
    run: Run,
    atom: Atom,
    search: Search,
    energy_ev: f64,
    omega_cav: f64,
    volume: Option<f64>,
    b_min: f64,
    b_max: f64,
    b_points: usize,
    psi_points: usize,
}

pub fn bunching_cmd(args: &BunchingArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let atom = a.atom.resolve()?;
    let cfg = BunchingConfig {
        run: a.run.resolve(),
        search: a.search.resolve()?,
        energy_ev: finite("energy_ev", a.energy_ev.unwrap_or(30e3))?,
        omega_cav: finite("omega_cav", a.omega_cav.unwrap_or(atom.omega_a))?,
        volume: a.volume,
        b_min: finite("b_min", a.b_min.unwrap_or(0.0))?,
        b_max: finite("b_max", a.b_max.unwrap_or(0.99))?,
        b_points: at_least("b_points", a.b_points.unwrap_or(12), 1)?,
        psi_points: at_least("psi_points", a.psi_points.unwrap_or(12), 1)?,
        atom,
    };
    if !(0.0 <= cfg.b_min && cfg.b_min <= cfg.b_max && cfg.b_max <= 1.0) {
        return Err(CliError::config("b_min/b_max", "need 0 <= b_min <= b_max <= 1"));
    }
    if cfg.search.omega_mod_policy == PolicyKind::Fixed {
        return Err(CliError::config(
            "omega_mod_policy",
            "the bunching map has no beam omega_mod; use track or joint",
        ));
    }
    let bs = lin_space(cfg.b_min, cfg.b_max, cfg.b_points);
    let psis: Vec<f64> = (0..cfg.psi_points)
        .map(|i| TAU * i as f64 / cfg.psi_points as f64)
        .collect();
    let template = CavityTemplate {
        omega_cav: cfg.omega_cav,
        volume: volume_policy(cfg.volume)?,
    };
    let cells = bunching_sensitivity(
        &K,
        &cfg.atom.params(),
        &template,
        &bs,
        &psis,
        cfg.energy_ev,
        &cfg.search.length_search(),
        cfg.search.policy(cfg.omega_cav),
    )?;
    let prov = Provenance::new("se-bunching-map", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &["b_abs", "psi_b", "omega_mod", "l_opt_m", "gamma_max", "degenerate"],
    )?;
    for c in &cells {
        out.row(&[
            c.b_abs.into(),
            c.psi_b.into(),
            c.optimum.omega_mod.into(),
            c.optimum.l_opt.into(),
            c.optimum.gamma_max.into(),
            c.optimum.degenerate.into(),
        ])?;
    }
    out.finish()
}
