//! Parameter blocks shared by several subcommands.
//!
//! Every field is optional so that a block can be filled from flags, from a
//! `--config` JSON file, or both; `resolve` applies the defaults and checks
//! ranges. The JSON file uses the block names as nested objects, e.g.
//! `{"beam": {"energy_ev": 30000}, "run": {"seed": 3}}`.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use qilab_core::emission::{
    default_mode_volume, BoundElectronParams, CavityParams, FreeElectronParams, LengthSearch, OmegaModPolicy,
    PhysicalConstants, VolumePolicy,
};
use qilab_core::pinem::{InteractionCoupling, ModulationParams};
use serde::{Deserialize, Serialize};

use crate::config::{at_least, finite, Length};
use crate::error::{CliError, CliResult};
use crate::output::Format;

pub const K: PhysicalConstants = PhysicalConstants::CODATA_2018;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Run {
    pub output: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
}

impl RunArgs {
    pub fn resolve(&self) -> Run {
        Run {
            output: self.output.clone(),
            format: self.format.unwrap_or(Format::Csv),
            seed: self.seed.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationArgs {
    /// |G_mod| of the shaping stage [default: 0.5].
    #[arg(long)]
    pub g_mod: Option<f64>,
    /// arg G_mod, rad [default: 0].
    #[arg(long)]
    pub g_mod_arg: Option<f64>,
    /// Global comb phase, rad [default: 0].
    #[arg(long)]
    pub phi_mod: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Modulation {
    pub g_mod: f64,
    pub g_mod_arg: f64,
    pub phi_mod: f64,
}

impl ModulationArgs {
    pub fn resolve(&self) -> CliResult<Modulation> {
        let g_mod = finite("g_mod", self.g_mod.unwrap_or(0.5))?;
        if g_mod < 0.0 {
            return Err(CliError::config("g_mod", "is a magnitude and must be >= 0"));
        }
        Ok(Modulation {
            g_mod,
            g_mod_arg: finite("g_mod_arg", self.g_mod_arg.unwrap_or(0.0))?,
            phi_mod: finite("phi_mod", self.phi_mod.unwrap_or(0.0))?,
        })
    }
}

impl Modulation {
    pub fn params(&self) -> ModulationParams {
        ModulationParams::new(Complex64::from_polar(self.g_mod, self.g_mod_arg), self.phi_mod)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingArgs {
    /// |G| of the probe interaction [default: 0.7].
    #[arg(long)]
    pub g: Option<f64>,
    /// arg G, rad [default: 0].
    #[arg(long)]
    pub g_arg: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Coupling {
    pub g: f64,
    pub g_arg: f64,
}

impl CouplingArgs {
    pub fn resolve(&self) -> CliResult<Coupling> {
        let g = finite("g", self.g.unwrap_or(0.7))?;
        if g < 0.0 {
            return Err(CliError::config("g", "is a magnitude and must be >= 0"));
        }
        Ok(Coupling {
            g,
            g_arg: finite("g_arg", self.g_arg.unwrap_or(0.0))?,
        })
    }
}

impl Coupling {
    pub fn coupling(&self) -> CliResult<InteractionCoupling> {
        Ok(InteractionCoupling::from_polar(self.g, self.g_arg)?)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamArgs {
    /// Electron kinetic energy, eV [default: 30000].
    #[arg(long)]
    pub energy_ev: Option<f64>,
    /// Modulation angular frequency, rad/s [default: the cavity frequency].
    #[arg(long)]
    pub omega_mod: Option<f64>,
    /// Bunching magnitude |b| [default: 0.99].
    #[arg(long)]
    pub b: Option<f64>,
    /// Bunching phase Psi_b, rad [default: 0].
    #[arg(long)]
    pub psi_b: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Beam {
    pub energy_ev: f64,
    /// `None` means "track the cavity frequency".
    pub omega_mod: Option<f64>,
    pub b: f64,
    pub psi_b: f64,
}

impl BeamArgs {
    pub fn resolve(&self) -> CliResult<Beam> {
        let beam = Beam {
            energy_ev: finite("energy_ev", self.energy_ev.unwrap_or(30e3))?,
            omega_mod: self.omega_mod.map(|w| finite("omega_mod", w)).transpose()?,
            b: finite("b", self.b.unwrap_or(0.99))?,
            psi_b: finite("psi_b", self.psi_b.unwrap_or(0.0))?,
        };
        beam.params(1.0).validate()?;
        Ok(beam)
    }
}

impl Beam {
    pub fn params(&self, omega_cav: f64) -> FreeElectronParams {
        FreeElectronParams {
            kinetic_energy_ev: self.energy_ev,
            omega_mod: self.omega_mod.unwrap_or(omega_cav),
            bunching_magnitude: self.b,
            bunching_phase: self.psi_b,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomArgs {
    /// Transition angular frequency, rad/s [default: 3e15].
    #[arg(long)]
    pub omega_a: Option<f64>,
    /// Transition dipole |d|, C m [default: 4.33e-29].
    #[arg(long)]
    pub dipole: Option<f64>,
    /// Emitter position z_a (m, or with nm/um/mm suffix) [default: 0].
    #[arg(long)]
    pub z_a: Option<Length>,
    /// Bloch polar angle, rad [default: pi/2].
    #[arg(long)]
    pub theta_a: Option<f64>,
    /// Bloch azimuth, rad [default: pi/2].
    #[arg(long)]
    pub phi_a: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Atom {
    pub omega_a: f64,
    pub dipole: f64,
    pub z_a: f64,
    pub theta_a: f64,
    pub phi_a: f64,
}

impl AtomArgs {
    pub fn resolve(&self) -> CliResult<Atom> {
        let d = BoundElectronParams::tin_vacancy();
        let atom = Atom {
            omega_a: finite("omega_a", self.omega_a.unwrap_or(d.omega_a))?,
            dipole: finite("dipole", self.dipole.unwrap_or(d.dipole))?,
            z_a: finite("z_a", self.z_a.map_or(d.z_a, Length::metres))?,
            theta_a: finite("theta_a", self.theta_a.unwrap_or(FRAC_PI_2))?,
            phi_a: finite("phi_a", self.phi_a.unwrap_or(FRAC_PI_2))?,
        };
        atom.params().validate()?;
        Ok(atom)
    }
}

impl Atom {
    pub fn params(&self) -> BoundElectronParams {
        BoundElectronParams {
            omega_a: self.omega_a,
            dipole: self.dipole,
            z_a: self.z_a,
            theta_a: self.theta_a,
            phi_a: self.phi_a,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityArgs {
    /// Mode angular frequency, rad/s [default: omega_a].
    #[arg(long)]
    pub omega_cav: Option<f64>,
    /// Mode volume, m^3 [default: L (lambda_cav / 2)^2].
    #[arg(long)]
    pub volume: Option<f64>,
    /// Interaction length (m, or with nm/um/mm suffix) [default: 300nm].
    #[arg(long)]
    pub length: Option<Length>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cavity {
    pub omega_cav: f64,
    pub volume: f64,
    pub length: f64,
}

impl CavityArgs {
    pub fn resolve(&self, atom: &Atom) -> CliResult<Cavity> {
        let omega_cav = finite("omega_cav", self.omega_cav.unwrap_or(atom.omega_a))?;
        let length = finite("length", self.length.map_or(300e-9, Length::metres))?;
        let volume = match self.volume {
            Some(v) => finite("volume", v)?,
            None => default_mode_volume(&K, omega_cav, length),
        };
        let cav = Cavity {
            omega_cav,
            volume,
            length,
        };
        cav.params()?;
        Ok(cav)
    }
}

impl Cavity {
    pub fn params(&self) -> CliResult<CavityParams> {
        Ok(CavityParams::new(self.omega_cav, self.volume, self.length)?)
    }
}

/// Volume policy from an optional fixed volume.
pub fn volume_policy(volume: Option<f64>) -> CliResult<VolumePolicy> {
    match volume {
        Some(v) if v > 0.0 && v.is_finite() => Ok(VolumePolicy::Fixed(v)),
        Some(v) => Err(CliError::config("volume", format!("must be positive and finite, got {v}"))),
        None => Ok(VolumePolicy::HalfWavelengthSquared),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// omega_mod = omega_cav.
    Track,
    /// The beam's own omega_mod.
    Fixed,
    /// Joint optimisation over omega_mod.
    Joint,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchArgs {
    /// Shortest length scanned [default: 1e-10 m].
    #[arg(long)]
    pub l_min: Option<Length>,
    /// Longest length scanned [default: 0.1 m].
    #[arg(long)]
    pub l_max: Option<Length>,
    /// Log-spaced scan points [default: 2000].
    #[arg(long)]
    pub l_points: Option<usize>,
    /// Relative length tolerance of the refinement [default: 1e-4].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// How omega_mod follows the search [default: track].
    #[arg(long, value_enum)]
    pub omega_mod_policy: Option<PolicyKind>,
    /// Lower omega_mod bound for the joint policy [default: 0.5 omega_cav].
    #[arg(long)]
    pub omega_mod_min: Option<f64>,
    /// Upper omega_mod bound for the joint policy [default: 1.5 omega_cav].
    #[arg(long)]
    pub omega_mod_max: Option<f64>,
    /// omega_mod grid points for the joint policy [default: 11].
    #[arg(long)]
    pub omega_mod_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Search {
    pub l_min: f64,
    pub l_max: f64,
    pub l_points: usize,
    pub rel_tol: f64,
    pub omega_mod_policy: PolicyKind,
    /// Joint-policy bounds as fractions of `omega_cav` when not given explicitly.
    pub omega_mod_min: Option<f64>,
    pub omega_mod_max: Option<f64>,
    pub omega_mod_points: usize,
}

impl SearchArgs {
    pub fn resolve(&self) -> CliResult<Search> {
        let d = LengthSearch::default();
        let s = Search {
            l_min: self.l_min.map_or(d.l_min, Length::metres),
            l_max: self.l_max.map_or(d.l_max, Length::metres),
            l_points: self.l_points.unwrap_or(d.points),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            omega_mod_policy: self.omega_mod_policy.unwrap_or(PolicyKind::Track),
            omega_mod_min: self.omega_mod_min,
            omega_mod_max: self.omega_mod_max,
            omega_mod_points: at_least("omega_mod_points", self.omega_mod_points.unwrap_or(11), 3)?,
        };
        s.length_search().validate()?;
        Ok(s)
    }
}

impl Search {
    pub fn length_search(&self) -> LengthSearch {
        LengthSearch {
            l_min: self.l_min,
            l_max: self.l_max,
            points: self.l_points,
            rel_tol: self.rel_tol,
        }
    }

    pub fn policy(&self, omega_cav: f64) -> OmegaModPolicy {
        match self.omega_mod_policy {
            PolicyKind::Track => OmegaModPolicy::TrackCavity,
            PolicyKind::Fixed => OmegaModPolicy::Fixed,
            PolicyKind::Joint => OmegaModPolicy::Joint {
                lo: self.omega_mod_min.unwrap_or(0.5 * omega_cav),
                hi: self.omega_mod_max.unwrap_or(1.5 * omega_cav),
                points: self.omega_mod_points,
            },
        }
    }
}
