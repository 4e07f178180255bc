//! Oracle suites run by `qi-lab verify`.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use clap::Args;
use num_complex::Complex64;
use qilab_core::emission::{rates, BoundElectronParams, CavityParams, FreeElectronParams};
use qilab_core::oracle::{
    bessel_j_series, direct_sum_check, graf_double_sum, matrix_exponential_elements, perturbation_integrator,
    phase_scramble, random_product_state, random_unitary_operator, resolved_steps, MIN_PANELS_PER_PERIOD,
};
use qilab_core::pinem::{
    auto_window, initial_amplitudes, s_matrix_element, spectrum, InteractionCoupling, ModulationParams, PinemOperator,
};
use qilab_core::qi::{decompose, direct_probability, FinalSelector, LabelWindow, ProductState};
use qilab_core::special::bessel_j;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::args::{Run, RunArgs, K};
use crate::config::{at_least, merge};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Provenance, Report};

/// `|G| + |G_mod|` at the first zero of the zero-loss peak, `j_{0,1} / 2`.
pub const FIRST_ZLP_ZERO: f64 = 1.202_412_778_847_886_5;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub metric: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum of all decomposition terms against the direct probability on random configurations.
pub fn completeness(seed: u64, configs: usize) -> CliResult<SuiteResult> {
    let mut rng = sub_rng(seed, 1);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let n = rng.gen_range(1..=3);
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
        let state = random_product_state(&dims, &mut rng)?;
        let op = random_unitary_operator(&dims, &mut rng)?;
        let fixed = dims
            .iter()
            .map(|&d| rng.gen_bool(0.5).then(|| rng.gen_range(0..d as i64)))
            .collect();
        let sel = FinalSelector::new(fixed);
        let total = decompose(&state, &op, &sel)?.total();
        let direct = direct_probability(&state, &op, &sel)?;
        worst = worst.max((total - direct).abs());
    }
    Ok(SuiteResult {
        suite: "completeness",
        metric: "max_abs_delta",
        value: worst,
        tolerance: 1e-12,
        cases: configs,
    })
}

/// Grouped terms against the raw amplitude double sum.
pub fn direct_sum(seed: u64) -> CliResult<SuiteResult> {
    let mut rng = sub_rng(seed, 2);
    let state = random_product_state(&[3, 3, 3], &mut rng)?;
    let op = random_unitary_operator(&[3, 3, 3], &mut rng)?;
    let a = direct_sum_check(&state, &op, &FinalSelector::all_free(3))?;

    let comb = initial_amplitudes(&ModulationParams::real(0.5))?;
    let g = InteractionCoupling::real(0.7)?;
    let window = auto_window(&comb, &g);
    let pinem = PinemOperator::new(g, window, window)?;
    let b = direct_sum_check(&ProductState::single(comb), &pinem, &FinalSelector::all_free(1))?;
    Ok(SuiteResult {
        suite: "direct-sum",
        metric: "max_abs_delta",
        value: a.max_abs_delta.max(a.marginal_delta).max(b.max_abs_delta).max(b.marginal_delta),
        tolerance: 1e-12,
        cases: a.finals + b.finals,
    })
}

/// Downward recurrence against the power series.
pub fn bessel() -> CliResult<SuiteResult> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in -40..=40 {
        for i in 0..=32 {
            let x = 0.25 * i as f64;
            let want = bessel_j_series(n, x)?;
            worst = worst.max((bessel_j(n, x) - want).abs() / want.abs().max(1.0));
            cases += 1;
        }
    }
    Ok(SuiteResult {
        suite: "bessel-series",
        metric: "max_scaled_delta",
        value: worst,
        tolerance: 1e-12,
        cases,
    })
}

/// Aligned two-stage spectra against the series double sum.
pub fn graf(seed: u64, pairs: usize) -> CliResult<SuiteResult> {
    let mut rng = sub_rng(seed, 3);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let g = rng.gen_range(0.0..2.0);
        let g_mod = rng.gen_range(0.0..2.0);
        let s = spectrum(&ModulationParams::real(g_mod), &InteractionCoupling::real(g)?, None)?;
        for n in -15..=15 {
            let amp = graf_double_sum(n, 2.0 * g, 2.0 * g_mod, 40)?;
            worst = worst.max((s.with_qi(n) - amp * amp).abs());
        }
    }
    Ok(SuiteResult {
        suite: "graf",
        metric: "max_abs_delta",
        value: worst,
        tolerance: 1e-10,
        cases: pairs,
    })
}

/// Zero-loss amplitude `sum_n C_n <0|S|n>` for real aligned couplings.
fn zlp_amplitude(g_mod: f64, g: f64) -> CliResult<f64> {
    let comb = initial_amplitudes(&ModulationParams::real(g_mod))?;
    let c = InteractionCoupling::real(g)?;
    let mut amp = Complex64::default();
    for (&n, &a) in comb.labels().iter().zip(comb.amplitudes()) {
        amp += a * s_matrix_element(0, n, &c)?;
    }
    Ok(amp.re)
}

/// Bisects the first sign change of the zero-loss amplitude in `|G|` at `|G_mod| = 0.5`.
pub fn locate_first_zlp_zero() -> CliResult<f64> {
    let g_mod = 0.5;
    let step = 0.01;
    let mut a = 0.0;
    let fa = zlp_amplitude(g_mod, a)?;
    let mut b = a;
    loop {
        b += step;
        if zlp_amplitude(g_mod, b)?.signum() != fa.signum() {
            break;
        }
        if b > 5.0 {
            return Err(CliError::Failed("no zero-loss zero below |G| = 5".into()));
        }
        a = b;
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if zlp_amplitude(g_mod, m)?.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b) + g_mod)
}

pub fn zlp_zero() -> CliResult<SuiteResult> {
    let found = locate_first_zlp_zero()?;
    Ok(SuiteResult {
        suite: "zlp-zero",
        metric: "abs_offset",
        value: (found - FIRST_ZLP_ZERO).abs(),
        tolerance: 1e-5,
        cases: 1,
    })
}

/// Truncated matrix exponential against the closed-form elements on the interior window.
pub fn matrix_exponential() -> CliResult<SuiteResult> {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for &(g, arg) in &[(0.1, 0.0), (0.7, 0.0), (1.5, 0.8), (5.0, -2.1)] {
        let coupling = Complex64::from_polar(g, arg);
        let half = ((8.0 * g).ceil() as usize + 40) / 2 + 1;
        let m = matrix_exponential_elements(coupling, LabelWindow::symmetric(half))?;
        let c = InteractionCoupling::new(coupling)?;
        let inner = m.interior();
        for n in inner.labels() {
            for big_n in inner.labels() {
                worst = worst.max((m.get(big_n, n) - s_matrix_element(big_n, n, &c)?).norm());
                cases += 1;
            }
        }
    }
    Ok(SuiteResult {
        suite: "matrix-exponential",
        metric: "max_abs_delta",
        value: worst,
        tolerance: 1e-8,
        cases,
    })
}

/// A resolvable emission configuration: near-resonant cavity, lengths from 10 nm to 3 um.
pub fn random_emission_point<R: Rng>(rng: &mut R) -> CliResult<(FreeElectronParams, BoundElectronParams, CavityParams)> {
    let omega_a = 10f64.powf(rng.gen_range(14.0..15.5));
    let omega_cav = omega_a * (1.0 + rng.gen_range(-0.05..0.05));
    let fe = FreeElectronParams {
        kinetic_energy_ev: 10f64.powf(rng.gen_range(3.0..5.5)),
        omega_mod: omega_cav * rng.gen_range(0.2..1.0),
        bunching_magnitude: rng.gen_range(0.05..1.0),
        bunching_phase: rng.gen_range(0.0..TAU),
    };
    let be = BoundElectronParams {
        omega_a,
        dipole: 4.33e-29,
        z_a: rng.gen_range(0.0..1e-6),
        theta_a: rng.gen_range(0.1..PI - 0.1),
        phi_a: rng.gen_range(0.0..TAU),
    };
    let length = 10f64.powf(rng.gen_range(-8.0..-5.5));
    let cav = CavityParams::with_default_volume(&K, omega_cav, length)?;
    Ok((fe, be, cav))
}

/// Closed-form rates against Simpson integration of the emission amplitudes.
pub fn perturbation(seed: u64, points: usize) -> CliResult<SuiteResult> {
    let mut rng = sub_rng(seed, 4);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst = 0.0f64;
    for _ in 0..points {
        let (fe, be, cav) = random_emission_point(&mut rng)?;
        let steps = 4 * resolved_steps(&K, &fe, &be, &cav, MIN_PANELS_PER_PERIOD);
        let num = perturbation_integrator(&K, &fe, &be, &cav, steps)?;
        let r = rates(&K, &fe, &be, &cav)?;
        worst = worst
            .max(rel(num.gamma_a, r.gamma_a))
            .max(rel(num.gamma_e, r.gamma_e))
            .max(rel(num.gamma_ae, r.gamma_ae));
    }
    Ok(SuiteResult {
        suite: "perturbation",
        metric: "max_rel_delta",
        value: worst,
        tolerance: 1e-9,
        cases: points,
    })
}

/// Random phases on the shaped comb: interference averages away, populations do not move.
pub fn scramble(seed: u64, trials: usize) -> CliResult<[SuiteResult; 2]> {
    let comb = initial_amplitudes(&ModulationParams::real(0.5))?;
    let g = InteractionCoupling::real(0.7)?;
    let window = auto_window(&comb, &g);
    let op = PinemOperator::new(g, window, window)?;
    let r = phase_scramble(
        &ProductState::single(comb),
        &op,
        &FinalSelector::exact(&[0]),
        0,
        trials,
        seed,
    )?;
    Ok([
        SuiteResult {
            suite: "phase-scramble",
            metric: "worst_z_score",
            value: r.worst_z_score(),
            tolerance: 5.0,
            cases: trials,
        },
        SuiteResult {
            suite: "scramble-populations",
            metric: "max_abs_delta",
            value: r.empty_term_deviation,
            tolerance: 1e-15,
            cases: trials,
        },
    ])
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// JSON file with any of the parameters below; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunArgs,
    /// Random configurations for the completeness suite [default: 200].
    #[arg(long)]
    pub configs: Option<usize>,
    /// Random coupling pairs for the composition suite [default: 20].
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Parameter points for the perturbation suite [default: 50].
    #[arg(long)]
    pub points: Option<usize>,
    /// Monte Carlo trials for the phase-scramble suite [default: 10000].
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Serialize)]
struct VerifyConfig {
    run: Run,
    configs: usize,
    pairs: usize,
    points: usize,
    trials: usize,
}

pub fn run_all(seed: u64, configs: usize, pairs: usize, points: usize, trials: usize) -> CliResult<Vec<SuiteResult>> {
    let [scr, pop] = scramble(seed, trials)?;
    Ok(vec![
        completeness(seed, configs)?,
        direct_sum(seed)?,
        bessel()?,
        graf(seed, pairs)?,
        zlp_zero()?,
        matrix_exponential()?,
        perturbation(seed, points)?,
        scr,
        pop,
    ])
}

pub fn verify_cmd(args: &VerifyArgs) -> CliResult<()> {
    let a = merge(args, args.config.as_deref())?;
    let cfg = VerifyConfig {
        run: a.run.resolve(),
        configs: at_least("configs", a.configs.unwrap_or(200), 1)?,
        pairs: at_least("pairs", a.pairs.unwrap_or(20), 1)?,
        points: at_least("points", a.points.unwrap_or(50), 1)?,
        trials: at_least("trials", a.trials.unwrap_or(10_000), 100)?,
    };
    let results = run_all(cfg.run.seed, cfg.configs, cfg.pairs, cfg.points, cfg.trials)?;
    let prov = Provenance::new("verify", &cfg, cfg.run.seed)?;
    let mut out = Report::open(
        cfg.run.format,
        cfg.run.output.as_deref(),
        &prov,
        &["suite", "status", "metric", "value", "tolerance", "cases"],
    )?;
    for r in &results {
        out.row(&[
            Cell::Text(r.suite.into()),
            Cell::Text(if r.passed() { "pass" } else { "fail" }.into()),
            Cell::Text(r.metric.into()),
            r.value.into(),
            r.tolerance.into(),
            (r.cases as i64).into(),
        ])?;
    }
    out.finish()?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.suite).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("oracle suites failed: {}", failed.join(", "))))
    }
}
