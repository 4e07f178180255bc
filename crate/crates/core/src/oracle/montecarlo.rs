use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qi::{decompose, FinalSelector, ProductState, QiBreakdown, ScatteringOperator, SystemSet};

/// Trial-averaged decomposition under random phases on one system.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub seed: u64,
    pub system: usize,
    /// Decomposition of the unscrambled state.
    pub reference: QiBreakdown,
    pub mean_terms: QiBreakdown,
    /// Standard error of each mean.
    pub std_error: BTreeMap<SystemSet, f64>,
    /// Largest deviation of the `{}` term from its unscrambled value over all trials.
    pub empty_term_deviation: f64,
}

impl MonteCarloReport {
    /// `|mean| <= k * standard error` for every term containing the scrambled system.
    pub fn interference_vanishes(&self, k: f64) -> bool {
        self.mean_terms
            .iter()
            .filter(|(d, _)| d.contains(self.system))
            .all(|(d, mean)| mean.abs() <= k * self.std_error.get(&d).copied().unwrap_or(0.0))
    }

    /// Largest `|mean| / standard error` over terms containing the scrambled system.
    pub fn worst_z_score(&self) -> f64 {
        self.mean_terms
            .iter()
            .filter(|(d, _)| d.contains(self.system))
            .map(|(d, mean)| {
                let se = self.std_error.get(&d).copied().unwrap_or(0.0);
                if mean == 0.0 {
                    0.0
                } else if se == 0.0 {
                    f64::INFINITY
                } else {
                    mean.abs() / se
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Multiplies each amplitude of `system` by an independent uniform phase,
/// decomposes, and averages over `trials`.
///
/// Trial `t` draws from ChaCha8 stream `t` of `seed`, so the report is
/// identical for any thread count.
pub fn phase_scramble(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
    system: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    if trials < 100 {
        return Err(Error::validation("trials", "at least 100 trials are required"));
    }
    if system >= state.num_systems() {
        return Err(Error::validation(
            "system",
            format!("index {system} out of range for {} systems", state.num_systems()),
        ));
    }
    let reference = decompose(state, op, sel)?;
    let target = state.system(system);

    let samples: Vec<QiBreakdown> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let phases: Vec<f64> = (0..target.len()).map(|_| rng.gen::<f64>() * TAU).collect();
            let scrambled = state.with_system(system, target.with_phases(&phases));
            decompose(&scrambled, op, sel)
        })
        .collect::<Result<_>>()?;

    let n = trials as f64;
    let mut mean = BTreeMap::new();
    let mut std_error = BTreeMap::new();
    for (set, _) in reference.iter() {
        let values: Vec<f64> = samples.iter().map(|s| s.get(set).unwrap_or(0.0)).collect();
        let m = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean.insert(set, m);
        std_error.insert(set, (var / n).sqrt());
    }
    let base = reference.without_qi();
    let empty_term_deviation = samples
        .iter()
        .map(|s| (s.without_qi() - base).abs())
        .fold(0.0, f64::max);

    Ok(MonteCarloReport {
        trials,
        seed,
        system,
        reference,
        mean_terms: QiBreakdown::from_terms(mean),
        std_error,
        empty_term_deviation,
    })
}
