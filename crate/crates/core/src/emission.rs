//! Interference between free-electron and bound-electron spontaneous emission
//! into one longitudinal cavity mode.
//!
//! A bunched electron (velocity `v0`, modulation `omega_mod`, bunching factor
//! `b = |b| exp(i Psi_b)`) crosses a cavity of length `L` in `tau = L / v0`
//! while a two-level emitter at `z_a` (Bloch angles `theta_a`, `phi_a`) sits in
//! the same mode. To first order each source emits one photon with amplitude
//!
//! ```text
//! A_a = -i k_a tau sinc[(w_cav - w_a) tau/2] exp(i (phi_a - q z_a))
//! A_e =    k_e tau sinc[(b0 w_cav - w_mod) tau/2] sinc[(w_cav - w_mod) tau/2] exp(-i Psi_b)
//! k_a = (|d| w_a / w_cav) sqrt(w_cav / (2 hbar eps0 V))
//! k_e = e v0 sqrt(1 / (2 hbar w_cav eps0 V))
//! ```
//!
//! and the rates are `Gamma_a = rho_ee |A_a|^2 / tau`, `Gamma_e = |A_e|^2 / tau`
//! and `Gamma_ae = 2 |rho_eg| |b| Re[A_a conj(A_e)] / tau`, which gives
//!
//! ```text
//! Gamma_ae = (tau/hbar) (e v0 w_a |d| / (eps0 V w_cav)) |rho_eg| |b| cos(xi)
//!            sinc[(w_cav - w_a) tau/2] sinc[(b0 w_cav - w_mod) tau/2] sinc[(w_cav - w_mod) tau/2]
//! xi = phi_a - w_cav z_a / c - pi/2 + Psi_b
//! ```
//!
//! All quantities are SI; kinetic energies are in eV.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::sinc;

/// Fundamental constants (CODATA 2018).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Vacuum permittivity, F/m.
    pub eps0: f64,
    /// Elementary charge, C.
    pub e_charge: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Electron rest mass, kg.
    pub m_e: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        hbar: 1.054_571_817e-34,
        eps0: 8.854_187_812_8e-12,
        e_charge: 1.602_176_634e-19,
        c: 299_792_458.0,
        m_e: 9.109_383_701_5e-31,
    };

    /// `m_e c^2` in eV.
    pub fn electron_rest_energy_ev(&self) -> f64 {
        self.m_e * self.c * self.c / self.e_charge
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// Shaped free-electron beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeElectronParams {
    /// Central kinetic energy, eV.
    pub kinetic_energy_ev: f64,
    /// Modulation angular frequency, rad/s.
    pub omega_mod: f64,
    /// `|b|` in `[0, 1]`.
    pub bunching_magnitude: f64,
    /// `Psi_b`, rad.
    pub bunching_phase: f64,
}

impl FreeElectronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kinetic_energy_ev > 0.0) || !self.kinetic_energy_ev.is_finite() {
            return Err(Error::validation("kinetic_energy_ev", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.bunching_magnitude) {
            return Err(Error::validation("bunching_magnitude", "must lie in [0, 1]"));
        }
        if !self.omega_mod.is_finite() || self.omega_mod < 0.0 {
            return Err(Error::validation("omega_mod", "must be finite and non-negative"));
        }
        if !self.bunching_phase.is_finite() {
            return Err(Error::validation("bunching_phase", "must be finite"));
        }
        Ok(())
    }
}

/// Two-level emitter in a pure state on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundElectronParams {
    /// Transition angular frequency, rad/s.
    pub omega_a: f64,
    /// Transition dipole magnitude along the mode axis, C m.
    pub dipole: f64,
    /// Position along the beam axis, m.
    pub z_a: f64,
    /// Polar Bloch angle, rad, in `[0, pi]`.
    pub theta_a: f64,
    /// Azimuthal Bloch angle (phase of `rho_eg`), rad.
    pub phi_a: f64,
}

impl BoundElectronParams {
    /// Tin-vacancy emitter on the equator, placed so that `phi_a - w z_a / c = pi/2`.
    pub fn tin_vacancy() -> Self {
        Self {
            omega_a: 3e15,
            dipole: 4.33e-29,
            z_a: 0.0,
            theta_a: FRAC_PI_2,
            phi_a: FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_a > 0.0) || !self.omega_a.is_finite() {
            return Err(Error::validation("omega_a", "must be positive and finite"));
        }
        if !(self.dipole >= 0.0) || !self.dipole.is_finite() {
            return Err(Error::validation("dipole", "must be non-negative and finite"));
        }
        if !self.z_a.is_finite() {
            return Err(Error::validation("z_a", "must be finite"));
        }
        if !(0.0..=PI).contains(&self.theta_a) {
            return Err(Error::validation("theta_a", "must lie in [0, pi]"));
        }
        if !self.phi_a.is_finite() {
            return Err(Error::validation("phi_a", "must be finite"));
        }
        Ok(())
    }

    /// `rho_ee = cos^2(theta_a / 2)`.
    pub fn rho_ee(&self) -> f64 {
        if self.theta_a == std::f64::consts::PI {
            return 0.0;
        }
        (0.5 * self.theta_a).cos().powi(2)
    }

    /// `|rho_eg| = sin(theta_a) / 2`.
    pub fn rho_eg_abs(&self) -> f64 {
        if self.theta_a == 0.0 || self.theta_a == std::f64::consts::PI {
            return 0.0;
        }
        0.5 * self.theta_a.sin().abs()
    }

    /// `rho_eg = exp(i phi_a) sin(theta_a) / 2`.
    pub fn rho_eg(&self) -> Complex64 {
        Complex64::from_polar(self.rho_eg_abs(), self.phi_a)
    }
}

/// Single longitudinal cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Mode angular frequency, rad/s.
    pub omega_cav: f64,
    /// Mode volume, m^3.
    pub mode_volume: f64,
    /// Interaction length, m.
    pub length: f64,
}

impl CavityParams {
    pub fn new(omega_cav: f64, mode_volume: f64, length: f64) -> Result<Self> {
        let cav = Self {
            omega_cav,
            mode_volume,
            length,
        };
        cav.validate()?;
        Ok(cav)
    }

    /// Mode volume `L (lambda/2)^2` with `lambda = 2 pi c / w_cav`.
    pub fn with_default_volume(constants: &PhysicalConstants, omega_cav: f64, length: f64) -> Result<Self> {
        Self::new(omega_cav, default_mode_volume(constants, omega_cav, length), length)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_cav", self.omega_cav),
            ("mode_volume", self.mode_volume),
            ("length", self.length),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Mode wavevector along z, `w_cav / c`.
    pub fn wavevector(&self, constants: &PhysicalConstants) -> f64 {
        self.omega_cav / constants.c
    }
}

pub fn default_mode_volume(constants: &PhysicalConstants, omega_cav: f64, length: f64) -> f64 {
    let half_lambda = PI * constants.c / omega_cav;
    length * half_lambda * half_lambda
}

/// Relativistic beam kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    /// Speed, m/s.
    pub v0: f64,
    /// `v0 / c`.
    pub beta0: f64,
}

impl Kinematics {
    /// Transit time `L / v0`, s.
    pub fn tau(&self, length: f64) -> f64 {
        length / self.v0
    }
}

pub fn velocity_from_kinetic(constants: &PhysicalConstants, kinetic_energy_ev: f64) -> Result<Kinematics> {
    if !(kinetic_energy_ev > 0.0) || !kinetic_energy_ev.is_finite() {
        return Err(Error::validation("kinetic_energy_ev", "must be positive and finite"));
    }
    let u = kinetic_energy_ev / constants.electron_rest_energy_ev();
    // 1 - 1/gamma^2 written without cancellation for small u
    let beta0 = (u * (2.0 + u)).sqrt() / (1.0 + u);
    Ok(Kinematics {
        v0: beta0 * constants.c,
        beta0,
    })
}

/// `Gamma_a`, `Gamma_e`, `Gamma_ae`, their sum, and `gamma = Gamma_ae / (Gamma_a + Gamma_e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionRates {
    pub gamma_a: f64,
    pub gamma_e: f64,
    pub gamma_ae: f64,
    pub total: f64,
    /// `None` when `Gamma_a + Gamma_e` is below `1e-300` s^-1.
    pub fom: Option<f64>,
}

impl EmissionRates {
    pub fn fom_or_zero(&self) -> f64 {
        self.fom.unwrap_or(0.0)
    }
}

/// Shared phase-matching quantities of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatching {
    pub kinematics: Kinematics,
    pub tau: f64,
    /// `sinc[(w_cav - w_a) tau / 2]`.
    pub atom_sinc: f64,
    /// `sinc[(b0 w_cav - w_mod) tau / 2]`.
    pub beam_sinc: f64,
    /// `sinc[(w_cav - w_mod) tau / 2]`.
    pub modulation_sinc: f64,
    /// `xi = phi_a - w_cav z_a / c - pi/2 + Psi_b`.
    pub xi: f64,
}

impl PhaseMatching {
    pub fn new(
        constants: &PhysicalConstants,
        fe: &FreeElectronParams,
        be: &BoundElectronParams,
        cav: &CavityParams,
    ) -> Result<Self> {
        fe.validate()?;
        be.validate()?;
        cav.validate()?;
        let kinematics = velocity_from_kinetic(constants, fe.kinetic_energy_ev)?;
        let tau = kinematics.tau(cav.length);
        let w = cav.omega_cav;
        Ok(Self {
            kinematics,
            tau,
            atom_sinc: sinc(0.5 * (w - be.omega_a) * tau),
            beam_sinc: sinc(0.5 * (kinematics.beta0 * w - fe.omega_mod) * tau),
            modulation_sinc: sinc(0.5 * (w - fe.omega_mod) * tau),
            // phi_a and Psi_b enter only through their sum
            xi: (be.phi_a + fe.bunching_phase) - w * be.z_a / constants.c - FRAC_PI_2,
        })
    }
}

/// Interference rate `Gamma_ae`, s^-1 (signed).
pub fn rate_qi(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
) -> Result<f64> {
    let pm = PhaseMatching::new(constants, fe, be, cav)?;
    Ok(rate_qi_from(constants, fe, be, cav, &pm))
}

fn rate_qi_from(
    k: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
    pm: &PhaseMatching,
) -> f64 {
    let prefactor = (pm.tau / k.hbar) * (k.e_charge * pm.kinematics.v0 * be.omega_a * be.dipole)
        / (k.eps0 * cav.mode_volume * cav.omega_cav);
    prefactor
        * be.rho_eg_abs()
        * fe.bunching_magnitude
        * pm.xi.cos()
        * pm.atom_sinc
        * pm.beam_sinc
        * pm.modulation_sinc
}

/// `(Gamma_a, Gamma_e)`, s^-1.
pub fn companion_rates(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
) -> Result<(f64, f64)> {
    let pm = PhaseMatching::new(constants, fe, be, cav)?;
    Ok(companion_rates_from(constants, be, cav, &pm))
}

fn companion_rates_from(
    k: &PhysicalConstants,
    be: &BoundElectronParams,
    cav: &CavityParams,
    pm: &PhaseMatching,
) -> (f64, f64) {
    let common = (pm.tau / k.hbar) / (2.0 * k.eps0 * cav.mode_volume * cav.omega_cav);
    let gamma_a = be.rho_ee() * common * (be.omega_a * be.dipole).powi(2) * pm.atom_sinc.powi(2);
    let ev = k.e_charge * pm.kinematics.v0;
    let gamma_e = common * ev * ev * (pm.beam_sinc * pm.modulation_sinc).powi(2);
    (gamma_a, gamma_e)
}

/// Smallest `Gamma_a + Gamma_e` for which the figure of merit is reported.
pub const FOM_FLOOR: f64 = 1e-300;

pub fn rates(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
) -> Result<EmissionRates> {
    let pm = PhaseMatching::new(constants, fe, be, cav)?;
    let gamma_ae = rate_qi_from(constants, fe, be, cav, &pm);
    let (gamma_a, gamma_e) = companion_rates_from(constants, be, cav, &pm);
    let direct = gamma_a + gamma_e;
    Ok(EmissionRates {
        gamma_a,
        gamma_e,
        gamma_ae,
        total: direct + gamma_ae,
        fom: (direct >= FOM_FLOOR).then(|| gamma_ae / direct),
    })
}

/// How the mode volume follows the interaction length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumePolicy {
    /// Fixed volume, m^3.
    Fixed(f64),
    /// `V = L (lambda_cav / 2)^2`.
    HalfWavelengthSquared,
}

/// Cavity description without a length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityTemplate {
    pub omega_cav: f64,
    pub volume: VolumePolicy,
}

impl CavityTemplate {
    pub fn resonant(omega_cav: f64) -> Self {
        Self {
            omega_cav,
            volume: VolumePolicy::HalfWavelengthSquared,
        }
    }

    pub fn at_length(&self, constants: &PhysicalConstants, length: f64) -> Result<CavityParams> {
        let v = match self.volume {
            VolumePolicy::Fixed(v) => v,
            VolumePolicy::HalfWavelengthSquared => default_mode_volume(constants, self.omega_cav, length),
        };
        CavityParams::new(self.omega_cav, v, length)
    }
}

/// Choice of `omega_mod` during a length search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaModPolicy {
    /// `omega_mod = omega_cav`.
    TrackCavity,
    /// Keep the beam's own `omega_mod`.
    Fixed,
    /// Optimise over `omega_mod` in `[lo, hi]` jointly with the length.
    Joint { lo: f64, hi: f64, points: usize },
}

/// Log-spaced length scan followed by local refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthSearch {
    pub l_min: f64,
    pub l_max: f64,
    pub points: usize,
    /// Relative length tolerance of the refinement.
    pub rel_tol: f64,
}

impl Default for LengthSearch {
    fn default() -> Self {
        Self {
            l_min: 1e-10,
            l_max: 1e-1,
            points: 2000,
            rel_tol: 1e-4,
        }
    }
}

impl LengthSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_min > 0.0) || !(self.l_max > self.l_min) || !self.l_max.is_finite() {
            return Err(Error::validation(
                "length range",
                format!("need 0 < l_min < l_max, got [{}, {}]", self.l_min, self.l_max),
            ));
        }
        if self.points < 3 {
            return Err(Error::validation("points", "need at least 3 scan points"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::validation("rel_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthOptimum {
    pub l_opt: f64,
    /// Signed `gamma` at `l_opt`.
    pub gamma_max: f64,
    pub omega_mod: f64,
    /// The scanned `|gamma|` varied by less than `1e-15`.
    pub degenerate: bool,
}

/// Variation of `|gamma|` below which the objective counts as flat.
pub const FLAT_OBJECTIVE: f64 = 1e-15;
/// Refined optima within this relative distance of the best count as ties;
/// the shortest length wins.
const TIE_TOLERANCE: f64 = 1e-6;
const ZOOM_POINTS: usize = 33;
/// Tolerance on the log distance from a zero of `gamma`.
const ROOT_SIDE_TOLERANCE: f64 = 1e-6;

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Maximises `f` on `[a, b]` by golden-section search until `b - a <= tol`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Iterated dense sub-scans of `[lo, hi]`, then golden section.
fn refine_peak<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    while hi - lo > tol {
        let pts = lin_space(lo, hi, ZOOM_POINTS);
        let (best, _) = pts
            .iter()
            .enumerate()
            .map(|(i, &t)| (i, f(t)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        lo = pts[best.saturating_sub(1)];
        hi = pts[(best + 1).min(ZOOM_POINTS - 1)];
    }
    golden_section_max(f, lo, hi, 0.01 * tol)
}

/// Peak of `|f|` in the log-length bracket `[lo, hi]`.
fn refine_in_log_length<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let (t, ft) = refine_peak(&|t: f64| f(t.exp()).abs(), lo.ln(), hi.ln(), rel_tol);
    (t.exp(), ft)
}

/// Peaks of `|f|` on either side of the sign change of `f` inside `[lo, hi]`.
///
/// The peaks may sit arbitrarily close to the zero, so each side is searched
/// in the logarithm of the distance from it.
fn refine_around_zero<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (mut a, mut b) = (lo, hi);
    let fa_sign = f(a).signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m).signum() == fa_sign {
            a = m;
        } else {
            b = m;
        }
    }
    let root = 0.5 * (a + b);
    let floor = (root * f64::EPSILON * 4.0).ln();
    let mut out = Vec::with_capacity(2);
    for (side, edge) in [(-1.0, lo), (1.0, hi)] {
        let reach = (edge - root).abs();
        if reach <= 0.0 || reach.ln() <= floor {
            continue;
        }
        let at = |t: f64| root + side * t.exp();
        let (t, ft) = refine_peak(&|t: f64| f(at(t)).abs(), floor, reach.ln(), ROOT_SIDE_TOLERANCE);
        out.push((at(t), ft));
    }
    out
}

/// Shortest `L` maximising `|gamma(L)|` over `search`.
///
/// Every local maximum and every sign change of the sampled `gamma` seeds a
/// bracket that is refined independently, so narrow peaks sitting between
/// scan points are still resolved.
pub fn optimize_length_1d<F>(gamma: F, search: &LengthSearch) -> Result<(f64, f64, bool)>
where
    F: Fn(f64) -> f64 + Sync,
{
    search.validate()?;
    let grid = log_space(search.l_min, search.l_max, search.points);
    let values: Vec<f64> = grid.iter().map(|&l| gamma(l)).collect();
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let (lo, hi) = abs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < FLAT_OBJECTIVE {
        log::warn!("degenerate optimum: |gamma| varies by {:e} over the length scan", hi - lo);
        let i = abs
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > abs[best] { i } else { best });
        return Ok((grid[i], values[i], true));
    }

    let n = grid.len();
    let mut peaks = Vec::new();
    let mut zeros = Vec::new();
    for i in 0..n {
        let left = if i > 0 { abs[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < n { abs[i + 1] } else { f64::NEG_INFINITY };
        if abs[i] > 0.0 && abs[i] >= left && abs[i] >= right {
            peaks.push((i.saturating_sub(1), (i + 1).min(n - 1)));
        }
        if i + 1 < n && values[i] * values[i + 1] < 0.0 {
            zeros.push((i, i + 1));
        }
    }

    let mut candidates: Vec<(f64, f64)> = peaks
        .par_iter()
        .map(|&(a, b)| refine_in_log_length(&gamma, grid[a], grid[b], search.rel_tol))
        .collect();
    candidates.extend(
        zeros
            .par_iter()
            .flat_map_iter(|&(a, b)| refine_around_zero(&gamma, grid[a], grid[b]))
            .collect::<Vec<_>>(),
    );
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (l_opt, _) = candidates
        .into_iter()
        .find(|c| c.1 >= best * (1.0 - TIE_TOLERANCE))
        .ok_or_else(|| Error::Invariant("length search produced no candidate".into()))?;
    Ok((l_opt, gamma(l_opt), false))
}

fn fom_at(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityTemplate,
    length: f64,
) -> f64 {
    cav.at_length(constants, length)
        .and_then(|c| rates(constants, fe, be, &c))
        .map(|r| r.fom_or_zero())
        .unwrap_or(0.0)
}

/// Interaction length maximising `|gamma|`, and the signed `gamma` there.
pub fn optimize_length(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityTemplate,
    search: &LengthSearch,
    policy: OmegaModPolicy,
) -> Result<LengthOptimum> {
    fe.validate()?;
    be.validate()?;
    if !(cav.omega_cav > 0.0) {
        return Err(Error::validation("omega_cav", "must be positive"));
    }
    let run = |omega_mod: f64| -> Result<LengthOptimum> {
        let beam = FreeElectronParams { omega_mod, ..*fe };
        let (l_opt, gamma_max, degenerate) =
            optimize_length_1d(|l| fom_at(constants, &beam, be, cav, l), search)?;
        Ok(LengthOptimum {
            l_opt,
            gamma_max,
            omega_mod,
            degenerate,
        })
    };
    match policy {
        OmegaModPolicy::TrackCavity => run(cav.omega_cav),
        OmegaModPolicy::Fixed => run(fe.omega_mod),
        OmegaModPolicy::Joint { lo, hi, points } => {
            if !(lo >= 0.0 && hi > lo && points >= 3) {
                return Err(Error::validation(
                    "omega_mod range",
                    "need 0 <= lo < hi and at least 3 points",
                ));
            }
            let grid = lin_space(lo, hi, points);
            let coarse: Vec<LengthOptimum> =
                grid.iter().map(|&w| run(w)).collect::<Result<_>>()?;
            let best = coarse
                .iter()
                .enumerate()
                .fold(0, |b, (i, o)| if o.gamma_max.abs() > coarse[b].gamma_max.abs() { i } else { b });
            let a = grid[best.saturating_sub(1)];
            let b = grid[(best + 1).min(points - 1)];
            let score = |w: f64| run(w).map(|o| o.gamma_max.abs()).unwrap_or(0.0);
            let (w, _) = golden_section_max(score, a, b, search.rel_tol * (hi - lo));
            let refined = run(w)?;
            Ok(if refined.gamma_max.abs() >= coarse[best].gamma_max.abs() {
                refined
            } else {
                coarse[best]
            })
        }
    }
}

/// One cell of a bunching map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingCell {
    pub b_abs: f64,
    pub psi_b: f64,
    pub optimum: LengthOptimum,
}

/// `gamma_max` over a grid of bunching magnitudes and phases, row-major in `|b|`.
#[allow(clippy::too_many_arguments)]
pub fn bunching_sensitivity(
    constants: &PhysicalConstants,
    be: &BoundElectronParams,
    cav: &CavityTemplate,
    b_grid: &[f64],
    psi_grid: &[f64],
    kinetic_energy_ev: f64,
    search: &LengthSearch,
    policy: OmegaModPolicy,
) -> Result<Vec<BunchingCell>> {
    let cells: Vec<(f64, f64)> = b_grid
        .iter()
        .flat_map(|&b| psi_grid.iter().map(move |&p| (b, p)))
        .collect();
    cells
        .par_iter()
        .map(|&(b_abs, psi_b)| {
            let fe = FreeElectronParams {
                kinetic_energy_ev,
                omega_mod: cav.omega_cav,
                bunching_magnitude: b_abs,
                bunching_phase: psi_b,
            };
            optimize_length(constants, &fe, be, cav, search, policy).map(|optimum| BunchingCell {
                b_abs,
                psi_b,
                optimum,
            })
        })
        .collect()
}

/// One cell of a Bloch-sphere map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochCell {
    pub theta_a: f64,
    pub phi_a: f64,
    pub fom_abs: f64,
}

/// `|gamma|` over the emitter's Bloch sphere, row-major in `theta_a`.
pub fn bloch_map(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
    theta_grid: &[f64],
    phi_grid: &[f64],
) -> Result<Vec<BlochCell>> {
    for &t in theta_grid {
        if !(0.0..=PI).contains(&t) {
            return Err(Error::validation("theta_a", format!("{t} is outside [0, pi]")));
        }
    }
    for &p in phi_grid {
        if !(0.0..2.0 * PI).contains(&p) {
            return Err(Error::validation("phi_a", format!("{p} is outside [0, 2 pi)")));
        }
    }
    let mut out = Vec::with_capacity(theta_grid.len() * phi_grid.len());
    for &theta_a in theta_grid {
        for &phi_a in phi_grid {
            let atom = BoundElectronParams { theta_a, phi_a, ..*be };
            let r = rates(constants, fe, &atom, cav)?;
            out.push(BlochCell {
                theta_a,
                phi_a,
                fom_abs: r.fom_or_zero().abs(),
            });
        }
    }
    Ok(out)
}

/// One cell of a length / cavity-frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCell {
    pub length: f64,
    pub omega_cav: f64,
    pub omega_mod: f64,
    pub rates: EmissionRates,
}

/// Rates over `l_grid x omega_cav_grid`, emitted row-major in length.
#[allow(clippy::too_many_arguments)]
pub fn resonance_sweep<F>(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    volume: VolumePolicy,
    l_grid: &[f64],
    omega_cav_grid: &[f64],
    policy: OmegaModPolicy,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(ResonanceCell) -> Result<()>,
{
    for &length in l_grid {
        let row: Vec<ResonanceCell> = omega_cav_grid
            .par_iter()
            .map(|&omega_cav| {
                let omega_mod = match policy {
                    OmegaModPolicy::TrackCavity => omega_cav,
                    _ => fe.omega_mod,
                };
                let beam = FreeElectronParams { omega_mod, ..*fe };
                let cav = CavityTemplate { omega_cav, volume }.at_length(constants, length)?;
                Ok(ResonanceCell {
                    length,
                    omega_cav,
                    omega_mod,
                    rates: rates(constants, &beam, be, &cav)?,
                })
            })
            .collect::<Result<_>>()?;
        for cell in row {
            sink(cell)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> PhysicalConstants {
        PhysicalConstants::CODATA_2018
    }

    fn snv_setup(length: f64) -> (FreeElectronParams, BoundElectronParams, CavityParams) {
        let be = BoundElectronParams::tin_vacancy();
        let fe = FreeElectronParams {
            kinetic_energy_ev: 30e3,
            omega_mod: be.omega_a,
            bunching_magnitude: 0.99,
            bunching_phase: 0.0,
        };
        let cav = CavityParams::with_default_volume(&k(), be.omega_a, length).unwrap();
        (fe, be, cav)
    }

    #[test]
    fn kinematics() {
        let kin = velocity_from_kinetic(&k(), 30e3).unwrap();
        assert!((kin.beta0 - 0.328376).abs() < 5e-6, "{}", kin.beta0);
        let tau = kin.tau(1e-6);
        assert!((tau - 1.01578e-14).abs() < 1e-18, "{tau:e}");
        let slow = velocity_from_kinetic(&k(), 100.0).unwrap();
        let classical = (2.0 * 100.0 / k().electron_rest_energy_ev()).sqrt();
        assert!(((slow.beta0 - classical) / classical).abs() < 1e-3);
        assert!(velocity_from_kinetic(&k(), 0.0).is_err());
    }

    #[test]
    fn nullity() {
        let (mut fe, mut be, cav) = snv_setup(1e-6);
        fe.bunching_magnitude = 0.0;
        assert_eq!(rate_qi(&k(), &fe, &be, &cav).unwrap(), 0.0);
        let r = rates(&k(), &fe, &be, &cav).unwrap();
        assert_eq!(r.total, r.gamma_a + r.gamma_e);
        assert_eq!(r.fom, Some(0.0));
        fe.bunching_magnitude = 0.99;
        be.theta_a = 0.0;
        assert_eq!(rate_qi(&k(), &fe, &be, &cav).unwrap(), 0.0);
        be.theta_a = PI;
        assert_eq!(rate_qi(&k(), &fe, &be, &cav).unwrap().abs(), 0.0);
        assert_eq!(companion_rates(&k(), &fe, &be, &cav).unwrap().0, 0.0);
    }

    #[test]
    fn sign_flip_under_bunching_phase() {
        let (mut fe, be, cav) = snv_setup(3e-7);
        let a = rates(&k(), &fe, &be, &cav).unwrap();
        assert!(a.gamma_ae > 0.0);
        fe.bunching_phase += PI;
        let b = rates(&k(), &fe, &be, &cav).unwrap();
        assert!(((a.gamma_ae + b.gamma_ae) / a.gamma_ae).abs() < 1e-12);
        assert!((a.fom.unwrap().abs() - b.fom.unwrap().abs()).abs() < 1e-12);
    }

    #[test]
    fn atom_rate_peaks_on_resonance() {
        let (fe, be, _) = snv_setup(1e-6);
        let on = CavityParams::new(be.omega_a, 1e-18, 1e-4).unwrap();
        let g_on = companion_rates(&k(), &fe, &be, &on).unwrap().0;
        for f in [0.9, 0.99, 0.999, 1.001, 1.01, 1.1] {
            let off = CavityParams::new(be.omega_a * f, 1e-18, 1e-4).unwrap();
            let g_off = companion_rates(&k(), &fe, &be, &off).unwrap().0;
            assert!(g_off < g_on, "factor {f}");
        }
    }

    #[test]
    fn undefined_fom_when_rates_vanish() {
        let (fe, mut be, _) = snv_setup(1e-6);
        be.theta_a = PI;
        let cav = CavityParams::new(be.omega_a, 1e300, 1e-6).unwrap();
        let r = rates(&k(), &fe, &be, &cav).unwrap();
        assert!(r.gamma_a + r.gamma_e < FOM_FLOOR);
        assert!(r.fom.is_none());
        assert_eq!(r.fom_or_zero(), 0.0);
    }

    #[test]
    fn validation_errors() {
        let (mut fe, mut be, cav) = snv_setup(1e-6);
        fe.bunching_magnitude = 1.5;
        assert!(rates(&k(), &fe, &be, &cav).is_err());
        fe.bunching_magnitude = 0.5;
        be.theta_a = 4.0;
        assert!(rates(&k(), &fe, &be, &cav).is_err());
        assert!(CavityParams::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9);
        assert!(fx.abs() < 1e-18);
    }

    #[test]
    fn flat_objective_is_degenerate() {
        let (mut fe, be, _) = snv_setup(1e-6);
        fe.bunching_magnitude = 0.0;
        let opt = optimize_length(
            &k(),
            &fe,
            &be,
            &CavityTemplate::resonant(be.omega_a),
            &LengthSearch::default(),
            OmegaModPolicy::TrackCavity,
        )
        .unwrap();
        assert!(opt.degenerate);
        assert_eq!(opt.gamma_max, 0.0);
    }

    #[test]
    fn spaces() {
        let g = log_space(1e-9, 1e-3, 7);
        assert_eq!(g.len(), 7);
        assert_eq!(g[6], 1e-3);
        assert!((g[3] / 1e-6 - 1.0).abs() < 1e-12);
        assert_eq!(lin_space(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
