//! Shaped free electron scattered by a classical light field.
//!
//! The electron is a superposition over an energy ladder `|n>` spaced by one
//! photon energy. The interaction is the ladder shift
//! `S = exp(G* b - G b^dagger)` whose matrix elements follow from the
//! Jacobi-Anger expansion:
//!
//! ```text
//! <N| S |n> = J_{N-n}(2|G|) exp(-i (N-n) arg G)
//! ```
//!
//! A comb produced by an earlier shaping stage of coupling `G_mod` has
//! amplitudes `C_n = exp(i phi_mod) J_n(2|G_mod|) exp(-i n arg G_mod)`, i.e.
//! the column `<n| S(G_mod) |0>` of the same operator, so two stages with
//! equal coupling phases compose into one stage of coupling `|G| + |G_mod|`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qi::{LabelWindow, ScatteringOperator, SystemState};
use crate::special::BesselTable;

/// Largest `|G|` accepted by default.
pub const MAX_COUPLING: f64 = 50.0;
/// Largest `|N - n|` for which an element is evaluated.
pub const ORDER_CAP: i64 = 1000;
/// Probability the generated comb may leave outside its window.
pub const COMB_TAIL: f64 = 1e-10;
/// Probability a spectrum may leave outside its output window.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-8;
/// Margin added past `2|G|` when sizing windows automatically.
pub const WINDOW_MARGIN: usize = 20;

const NEGATIVE_CLAMP: f64 = 1e-14;

/// Shaping stage that prepares the incoming comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationParams {
    /// Complex coupling of the shaping stage.
    pub g_mod: Complex64,
    /// Global phase of the comb.
    pub phi_mod: f64,
    /// Initial half-width of the comb window; widened until the tail is below [`COMB_TAIL`].
    pub n_max: usize,
}

impl ModulationParams {
    pub fn new(g_mod: Complex64, phi_mod: f64) -> Self {
        Self {
            g_mod,
            phi_mod,
            n_max: 0,
        }
    }

    /// Real, non-negative shaping coupling with zero comb phase.
    pub fn real(g_mod: f64) -> Self {
        Self::new(Complex64::new(g_mod, 0.0), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g_mod.re.is_finite() || !self.g_mod.im.is_finite() {
            return Err(Error::validation("g_mod", "must be finite"));
        }
        if self.g_mod.norm() > MAX_COUPLING {
            return Err(Error::validation(
                "g_mod",
                format!("|G_mod| = {} exceeds {MAX_COUPLING}", self.g_mod.norm()),
            ));
        }
        if !self.phi_mod.is_finite() {
            return Err(Error::validation("phi_mod", "must be finite"));
        }
        Ok(())
    }
}

/// Probe coupling `G` between the comb and the light field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionCoupling {
    g: Complex64,
}

impl InteractionCoupling {
    pub fn new(g: Complex64) -> Result<Self> {
        Self::with_limit(g, MAX_COUPLING)
    }

    pub fn with_limit(g: Complex64, max_abs: f64) -> Result<Self> {
        if !g.re.is_finite() || !g.im.is_finite() {
            return Err(Error::validation("g", "must be finite"));
        }
        if g.norm() > max_abs {
            return Err(Error::validation(
                "g",
                format!("|G| = {} exceeds {max_abs}", g.norm()),
            ));
        }
        Ok(Self { g })
    }

    pub fn from_polar(abs: f64, arg: f64) -> Result<Self> {
        if abs < 0.0 {
            return Err(Error::validation("g", "magnitude must be non-negative"));
        }
        Self::new(Complex64::from_polar(abs, arg))
    }

    pub fn real(g: f64) -> Result<Self> {
        Self::new(Complex64::new(g, 0.0))
    }

    pub fn value(&self) -> Complex64 {
        self.g
    }

    pub fn abs(&self) -> f64 {
        self.g.norm()
    }

    pub fn arg(&self) -> f64 {
        if self.g == Complex64::default() {
            0.0
        } else {
            self.g.arg()
        }
    }
}

fn phase_factor(k: i64, arg: f64) -> Complex64 {
    if k == 0 || arg == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, -(k as f64) * arg)
    }
}

/// Comb amplitudes `C_n` over `[-n_max', n_max']`, normalised.
pub fn initial_amplitudes(params: &ModulationParams) -> Result<SystemState> {
    params.validate()?;
    let x = 2.0 * params.g_mod.norm();
    let k_max = params.n_max.max(x.ceil() as usize + 60);
    let table = BesselTable::new(k_max, x);
    let mut half = params.n_max;
    let mut mass: f64 = (-(half as i64)..=half as i64).map(|n| table.get(n).powi(2)).sum();
    while mass < 1.0 - COMB_TAIL {
        half += 1;
        if half > k_max {
            return Err(Error::Truncation {
                detail: format!("comb for |G_mod| = {} did not converge", params.g_mod.norm()),
                suggested: half,
            });
        }
        mass += 2.0 * table.get(half as i64).powi(2);
    }
    while half < k_max && table.get(half as i64 + 1).abs() > 1e-17 {
        half += 1;
    }
    let arg = if params.g_mod == Complex64::default() {
        0.0
    } else {
        params.g_mod.arg()
    };
    let global = Complex64::from_polar(1.0, params.phi_mod);
    let labels: Vec<i64> = (-(half as i64)..=half as i64).collect();
    let amplitudes = labels
        .iter()
        .map(|&n| global * table.get(n) * phase_factor(n, arg))
        .collect();
    SystemState::normalized(labels, amplitudes)
}

/// `<N| S |n>` for the ladder shift with coupling `coupling`.
pub fn s_matrix_element(final_label: i64, initial_label: i64, coupling: &InteractionCoupling) -> Result<Complex64> {
    let k = final_label - initial_label;
    if k.abs() > ORDER_CAP {
        return Err(Error::OrderCap {
            order: k,
            cap: ORDER_CAP,
        });
    }
    let j = crate::special::bessel_j(k, 2.0 * coupling.abs());
    Ok(j * phase_factor(k, coupling.arg()))
}

/// Single-system [`ScatteringOperator`] for the ladder shift, restricted to a window.
#[derive(Debug, Clone)]
pub struct PinemOperator {
    coupling: InteractionCoupling,
    window: LabelWindow,
    table: BesselTable,
    tolerance: f64,
}

impl PinemOperator {
    /// The truncation tolerance is the worst column loss over `source`, the
    /// labels the incoming state occupies.
    pub fn new(coupling: InteractionCoupling, window: LabelWindow, source: LabelWindow) -> Result<Self> {
        let span = window.len() as i64 - 1;
        if span > ORDER_CAP {
            return Err(Error::OrderCap {
                order: span,
                cap: ORDER_CAP,
            });
        }
        let table = BesselTable::new(span as usize, 2.0 * coupling.abs());
        let mut worst = 0.0f64;
        for n in source.labels() {
            let kept: f64 = window.labels().map(|big_n| table.get(big_n - n).powi(2)).sum();
            worst = worst.max((1.0 - kept).abs());
        }
        Ok(Self {
            coupling,
            window,
            table,
            tolerance: worst.max(1e-14),
        })
    }

    pub fn coupling(&self) -> InteractionCoupling {
        self.coupling
    }

    pub fn element(&self, final_label: i64, initial_label: i64) -> Complex64 {
        let k = final_label - initial_label;
        self.table.get(k) * phase_factor(k, self.coupling.arg())
    }
}

impl ScatteringOperator for PinemOperator {
    fn num_systems(&self) -> usize {
        1
    }

    fn window(&self, _system: usize) -> LabelWindow {
        self.window
    }

    fn amplitude(&self, initial: &[i64], final_labels: &[i64]) -> Complex64 {
        let (n, big_n) = (initial[0], final_labels[0]);
        if !self.window.contains(n) || !self.window.contains(big_n) {
            return Complex64::default();
        }
        self.element(big_n, n)
    }

    fn truncation_tolerance(&self) -> f64 {
        self.tolerance
    }
}

/// Output electron spectrum with and without the interference term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLossSpectrum {
    window: LabelWindow,
    with_qi: Vec<f64>,
    without_qi: Vec<f64>,
}

impl GainLossSpectrum {
    pub fn window(&self) -> LabelWindow {
        self.window
    }

    fn index(&self, n: i64) -> Option<usize> {
        self.window.contains(n).then(|| (n - self.window.lo) as usize)
    }

    /// `P_N` including interference; zero outside the window.
    pub fn with_qi(&self, n: i64) -> f64 {
        self.index(n).map_or(0.0, |i| self.with_qi[i])
    }

    /// `P_N` from populations only; zero outside the window.
    pub fn without_qi(&self, n: i64) -> f64 {
        self.index(n).map_or(0.0, |i| self.without_qi[i])
    }

    /// The 1-process interference contribution `with_qi - without_qi`.
    pub fn qi_term(&self, n: i64) -> f64 {
        self.with_qi(n) - self.without_qi(n)
    }

    pub fn with_qi_values(&self) -> &[f64] {
        &self.with_qi
    }

    pub fn without_qi_values(&self) -> &[f64] {
        &self.without_qi
    }

    /// `(N, with_qi, without_qi)` in increasing `N`.
    pub fn rows(&self) -> impl Iterator<Item = (i64, f64, f64)> + '_ {
        self.window
            .labels()
            .zip(self.with_qi.iter().zip(&self.without_qi))
            .map(|(n, (w, wo))| (n, *w, *wo))
    }
}

/// Window wide enough for `state` scattered with coupling `|G|`.
pub fn auto_window(state: &SystemState, coupling: &InteractionCoupling) -> LabelWindow {
    let reach = (2.0 * coupling.abs()).ceil() as i64 + WINDOW_MARGIN as i64;
    let lo = state.labels().iter().min().copied().unwrap_or(0);
    let hi = state.labels().iter().max().copied().unwrap_or(0);
    LabelWindow {
        lo: lo - reach,
        hi: hi + reach,
    }
}

/// Spectrum of the comb prepared by `params`.
pub fn spectrum(
    params: &ModulationParams,
    coupling: &InteractionCoupling,
    window: Option<LabelWindow>,
) -> Result<GainLossSpectrum> {
    let state = initial_amplitudes(params)?;
    spectrum_for_state(&state, coupling, window)
}

/// Spectrum of an arbitrary incoming ladder state.
pub fn spectrum_for_state(
    state: &SystemState,
    coupling: &InteractionCoupling,
    window: Option<LabelWindow>,
) -> Result<GainLossSpectrum> {
    let auto = auto_window(state, coupling);
    let window = window.unwrap_or(auto);
    let lo = state.labels().iter().min().copied().unwrap_or(0).min(window.lo);
    let hi = state.labels().iter().max().copied().unwrap_or(0).max(window.hi);
    let span = hi - lo;
    if span > ORDER_CAP {
        return Err(Error::OrderCap {
            order: span,
            cap: ORDER_CAP,
        });
    }
    let table = BesselTable::new(span as usize, 2.0 * coupling.abs());
    let arg = coupling.arg();

    let mut with_qi = Vec::with_capacity(window.len());
    let mut without_qi = Vec::with_capacity(window.len());
    for big_n in window.labels() {
        let mut amp = Complex64::default();
        let mut incoherent = 0.0;
        for (&n, &c) in state.labels().iter().zip(state.amplitudes()) {
            let k = big_n - n;
            let s = table.get(k) * phase_factor(k, arg);
            amp += c * s;
            incoherent += c.norm_sqr() * s.norm_sqr();
        }
        let p = amp.norm_sqr();
        with_qi.push(if p < 0.0 && p > -NEGATIVE_CLAMP { 0.0 } else { p });
        without_qi.push(incoherent);
    }

    let total_with: f64 = with_qi.iter().sum();
    let total_without: f64 = without_qi.iter().sum();
    let loss = (1.0 - total_with).abs().max((1.0 - total_without).abs());
    if loss > COMPLETENESS_TOLERANCE {
        let need = (auto.hi - auto.lo) as usize / 2 + 1;
        let have = window.len() / 2;
        return Err(Error::Truncation {
            detail: format!(
                "window {window} keeps only {:.12} of the probability",
                1.0 - loss
            ),
            suggested: need.max(have + 1),
        });
    }
    Ok(GainLossSpectrum {
        window,
        with_qi,
        without_qi,
    })
}

/// One cell of a coupling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g_abs: f64,
    pub g_arg: f64,
    pub n: i64,
    pub with_qi: f64,
    pub without_qi: f64,
}

/// Spectra for each coupling on a common window, emitted row by row in input order.
///
/// Couplings are evaluated in parallel chunks; only one chunk of spectra is
/// held in memory at a time.
pub fn coupling_sweep<F>(
    params: &ModulationParams,
    couplings: &[InteractionCoupling],
    window: Option<LabelWindow>,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(SweepRow) -> Result<()>,
{
    let state = initial_amplitudes(params)?;
    let window = match window {
        Some(w) => w,
        None => {
            let widest = couplings
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(InteractionCoupling { g: Complex64::default() });
            auto_window(&state, &widest)
        }
    };
    let chunk = rayon::current_num_threads().max(1) * 4;
    for block in couplings.chunks(chunk) {
        let spectra: Vec<GainLossSpectrum> = block
            .par_iter()
            .map(|g| spectrum_for_state(&state, g, Some(window)))
            .collect::<Result<_>>()?;
        for (g, s) in block.iter().zip(&spectra) {
            for (n, with_qi, without_qi) in s.rows() {
                sink(SweepRow {
                    g_abs: g.abs(),
                    g_arg: g.arg(),
                    n,
                    with_qi,
                    without_qi,
                })?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::special::bessel_j;

    #[test]
    fn unshaped_comb_is_single_peak() {
        let params = ModulationParams::new(Complex64::new(0.0, 0.0), 0.3);
        let s = initial_amplitudes(&params).unwrap();
        assert_eq!(s.labels(), &[0]);
        assert!((s.amplitudes()[0] - Complex64::from_polar(1.0, 0.3)).norm() < 1e-16);
    }

    #[test]
    fn comb_values_at_half_coupling() {
        let s = initial_amplitudes(&ModulationParams::real(0.5)).unwrap();
        let get = |n| s.amplitude_of(n).re;
        assert!((get(0) - 0.76519768655796655).abs() < 1e-12);
        assert!((get(1) - 0.44005058574493352).abs() < 1e-12);
        assert!((get(-1) + 0.44005058574493352).abs() < 1e-12);
        assert!((get(2) - 0.11490348493190048).abs() < 1e-12);
        assert!((get(-2) - 0.11490348493190048).abs() < 1e-12);
        let norm: f64 = s.amplitudes().iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn comb_carries_coupling_phase() {
        let params = ModulationParams::new(Complex64::from_polar(0.8, 0.4), 0.0);
        let s = initial_amplitudes(&params).unwrap();
        for n in -3..=3i64 {
            let want = bessel_j(n, 1.6) * Complex64::from_polar(1.0, -(n as f64) * 0.4);
            assert!((s.amplitude_of(n) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn element_values() {
        let g0 = InteractionCoupling::real(0.0).unwrap();
        assert_eq!(s_matrix_element(3, 3, &g0).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(s_matrix_element(4, 3, &g0).unwrap(), Complex64::new(0.0, 0.0));
        let g = InteractionCoupling::real(0.7).unwrap();
        let e = s_matrix_element(5, 5, &g).unwrap();
        assert!((e.re - 0.5668551203742887695).abs() < 1e-13);
        let col: f64 = (-35..=45).map(|big_n| s_matrix_element(big_n, 5, &g).unwrap().norm_sqr()).sum();
        assert!((col - 1.0).abs() < 1e-12);
        assert!(matches!(
            s_matrix_element(2000, 0, &g),
            Err(Error::OrderCap { order: 2000, .. })
        ));
    }

    #[test]
    fn coupling_guard() {
        assert!(InteractionCoupling::real(50.0).is_ok());
        assert!(InteractionCoupling::real(50.5).is_err());
        assert!(InteractionCoupling::with_limit(Complex64::new(60.0, 0.0), 80.0).is_ok());
        assert!(InteractionCoupling::new(Complex64::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn zero_loss_peak_vanishes() {
        let s = spectrum(&ModulationParams::real(0.5), &InteractionCoupling::real(0.7).unwrap(), None)
            .unwrap();
        assert!((s.with_qi(0) - 6.2884755192758336e-6).abs() < 1e-12);
        assert!((s.without_qi(0) - 0.30303139226984850).abs() < 1e-12);
        for n in s.window().labels().filter(|&n| n != 0) {
            assert!(s.without_qi(n) < s.without_qi(0));
        }
    }

    #[test]
    fn narrow_window_is_rejected_with_suggestion() {
        let err = spectrum(
            &ModulationParams::real(0.5),
            &InteractionCoupling::real(0.7).unwrap(),
            Some(LabelWindow::symmetric(3)),
        )
        .unwrap_err();
        match err {
            Error::Truncation { suggested, .. } => assert!(suggested > 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_rows_are_ordered() {
        let gs: Vec<_> = [0.0, 0.3, 0.9]
            .iter()
            .map(|&g| InteractionCoupling::real(g).unwrap())
            .collect();
        let mut rows = Vec::new();
        coupling_sweep(&ModulationParams::real(0.5), &gs, None, |r| {
            rows.push(r);
            Ok(())
        })
        .unwrap();
        let per = rows.len() / 3;
        assert_eq!(rows.len(), per * 3);
        assert!(rows[..per].iter().all(|r| r.g_abs == 0.0));
        assert!(rows[2 * per..].iter().all(|r| r.g_abs == 0.9));
        assert!(rows.windows(2).take(per - 1).all(|w| w[0].n + 1 == w[1].n));
    }
}
