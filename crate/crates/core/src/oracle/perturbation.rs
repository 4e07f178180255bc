use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::emission::{BoundElectronParams, CavityParams, FreeElectronParams, PhysicalConstants};
use crate::error::{Error, Result};

/// Minimum number of Simpson panels.
pub const MIN_STEPS: usize = 1000;
/// Minimum panels per oscillation period of the fastest integrand.
pub const MIN_PANELS_PER_PERIOD: f64 = 20.0;

/// Rates obtained by quadrature of the first-order emission amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationReport {
    pub gamma_a: f64,
    pub gamma_e: f64,
    pub gamma_ae: f64,
    /// Panels of the coarser Simpson pass; the finer pass uses twice as many.
    pub steps: usize,
}

struct Beam {
    v0: f64,
    beta0: f64,
}

fn beam(k: &PhysicalConstants, kinetic_energy_ev: f64) -> Beam {
    let gamma = 1.0 + kinetic_energy_ev * k.e_charge / (k.m_e * k.c * k.c);
    let beta0 = (1.0 - 1.0 / (gamma * gamma)).sqrt();
    Beam {
        v0: beta0 * k.c,
        beta0,
    }
}

struct Detunings {
    tau: f64,
    atom: f64,
    beam: f64,
    modulation: f64,
}

fn detunings(k: &PhysicalConstants, fe: &FreeElectronParams, be: &BoundElectronParams, cav: &CavityParams) -> (Beam, Detunings) {
    let b = beam(k, fe.kinetic_energy_ev);
    let d = Detunings {
        tau: cav.length / b.v0,
        atom: cav.omega_cav - be.omega_a,
        beam: b.beta0 * cav.omega_cav - fe.omega_mod,
        modulation: cav.omega_cav - fe.omega_mod,
    };
    (b, d)
}

/// Panels needed for `panels_per_period` panels across the fastest oscillation.
pub fn resolved_steps(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
    panels_per_period: f64,
) -> usize {
    let (_, d) = detunings(constants, fe, be, cav);
    let fastest = d.atom.abs().max(d.beam.abs()).max(d.modulation.abs());
    let periods = fastest * d.tau / TAU;
    let need = (panels_per_period * periods).ceil() as usize;
    let need = need.max(MIN_STEPS);
    need + need % 2
}

/// Composite Simpson estimate of `int_{-tau/2}^{tau/2} exp(i w t) dt` with `panels` panels.
fn simpson_phase_integral(w: f64, tau: f64, panels: usize) -> Complex64 {
    let h = tau / panels as f64;
    let f = |i: usize| Complex64::from_polar(1.0, w * (-0.5 * tau + i as f64 * h));
    let mut acc = f(0) + f(panels);
    for i in 1..panels {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(i) * weight;
    }
    acc * (h / 3.0)
}

/// Richardson-extrapolated Simpson integral from `panels` and `2 panels`.
fn phase_integral(w: f64, tau: f64, panels: usize) -> Complex64 {
    let coarse = simpson_phase_integral(w, tau, panels);
    let fine = simpson_phase_integral(w, tau, 2 * panels);
    (fine * 16.0 - coarse) / 15.0
}

/// Emission rates from numerically integrated first-order amplitudes,
/// with time measured from the midpoint of the transit.
pub fn perturbation_integrator(
    constants: &PhysicalConstants,
    fe: &FreeElectronParams,
    be: &BoundElectronParams,
    cav: &CavityParams,
    steps: usize,
) -> Result<PerturbationReport> {
    fe.validate()?;
    be.validate()?;
    cav.validate()?;
    let required = resolved_steps(constants, fe, be, cav, MIN_PANELS_PER_PERIOD);
    if steps < required {
        return Err(Error::UnresolvedOscillation { steps, required });
    }
    let steps = steps + steps % 2;
    let k = constants;
    let (b, d) = detunings(k, fe, be, cav);
    let tau = d.tau;

    let i_atom = phase_integral(d.atom, tau, steps);
    let i_beam = phase_integral(d.beam, tau, steps);
    let i_mod = phase_integral(d.modulation, tau, steps);

    let v = cav.mode_volume;
    let w = cav.omega_cav;
    let kappa_a = (be.dipole * be.omega_a / w) * (w / (2.0 * k.hbar * k.eps0 * v)).sqrt();
    let kappa_e = k.e_charge * b.v0 * (1.0 / (2.0 * k.hbar * w * k.eps0 * v)).sqrt();

    let q = w / k.c;
    // the -pi/2 inside xi comes from the -i of the atomic amplitude
    let amp_atom = Complex64::new(0.0, -kappa_a) * i_atom * Complex64::from_polar(1.0, be.phi_a - q * be.z_a);
    let amp_beam = kappa_e * i_beam * i_mod / tau * Complex64::from_polar(1.0, -fe.bunching_phase);

    let rho_ee = (0.5 * be.theta_a).cos().powi(2);
    let rho_eg = 0.5 * be.theta_a.sin().abs();
    Ok(PerturbationReport {
        gamma_a: rho_ee * amp_atom.norm_sqr() / tau,
        gamma_e: amp_beam.norm_sqr() / tau,
        gamma_ae: 2.0 * rho_eg * fe.bunching_magnitude * (amp_atom * amp_beam.conj()).re / tau,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_detuning_integrates_to_tau() {
        let tau = 3.7e-14;
        let i = phase_integral(0.0, tau, 1000);
        assert!((i.re - tau).abs() < 1e-12 * tau);
        assert!(i.im.abs() < 1e-12 * tau);
    }

    #[test]
    fn oscillatory_integral_matches_sinc() {
        let (w, tau) = (7.3e15, 2.1e-14);
        let i = phase_integral(w, tau, 4000);
        let x = 0.5 * w * tau;
        let want = tau * x.sin() / x;
        assert!((i.re - want).abs() < 1e-10 * tau);
        assert!(i.im.abs() < 1e-12 * tau);
    }
}
