use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qilab_core::oracle::graf_double_sum;
use qilab_core::pinem::{
    auto_window, coupling_sweep, initial_amplitudes, s_matrix_element, spectrum, spectrum_for_state,
    InteractionCoupling, ModulationParams, PinemOperator,
};
use qilab_core::qi::{decompose, direct_probability, FinalSelector, LabelWindow, ProductState};
use qilab_core::special::bessel_j;
use qilab_core::Error;

const J0_ZERO: f64 = 2.404_825_557_695_773;
const J1_ZERO: f64 = 3.831_705_970_207_512;

fn aligned(g_mod: f64, g: f64, arg: f64) -> (ModulationParams, InteractionCoupling) {
    (
        ModulationParams::new(Complex64::from_polar(g_mod, arg), 0.0),
        InteractionCoupling::from_polar(g, arg).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectra_are_normalised(g_mod in 0.0..3.0f64, phi in -PI..PI, g in 0.0..3.0f64, arg in -PI..PI) {
        let params = ModulationParams::new(Complex64::from_polar(g_mod, 0.4), phi);
        let s = spectrum(&params, &InteractionCoupling::from_polar(g, arg).unwrap(), None).unwrap();
        let with: f64 = s.with_qi_values().iter().sum();
        let without: f64 = s.without_qi_values().iter().sum();
        prop_assert!((with - 1.0).abs() < 1e-8);
        prop_assert!((without - 1.0).abs() < 1e-8);
        let qi: f64 = s.window().labels().map(|n| s.qi_term(n)).sum();
        prop_assert!(qi.abs() < 1e-10);
        prop_assert!(s.with_qi_values().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn element_depends_only_on_label_difference(k in -30i64..30, n in -50i64..50, g in 0.0..5.0f64, arg in -PI..PI) {
        let c = InteractionCoupling::from_polar(g, arg).unwrap();
        let a = s_matrix_element(k, 0, &c).unwrap();
        let b = s_matrix_element(n + k, n, &c).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn relabelling_shifts_the_spectrum(g_mod in 0.0..2.0f64, g in 0.0..2.0f64, shift in -25i64..25) {
        let (params, c) = aligned(g_mod, g, 0.3);
        let state = initial_amplitudes(&params).unwrap();
        let a = spectrum_for_state(&state, &c, None).unwrap();
        let b = spectrum_for_state(&state.shifted(shift), &c, None).unwrap();
        for n in a.window().labels() {
            prop_assert!((a.with_qi(n) - b.with_qi(n + shift)).abs() < 1e-15);
            prop_assert!((a.without_qi(n) - b.without_qi(n + shift)).abs() < 1e-15);
        }
    }

    #[test]
    fn aligned_stages_compose(g_mod in 0.0..2.0f64, g in 0.0..2.0f64, arg in -PI..PI) {
        let (params, c) = aligned(g_mod, g, arg);
        let s = spectrum(&params, &c, None).unwrap();
        for n in s.window().labels() {
            let want = bessel_j(n, 2.0 * (g + g_mod)).powi(2);
            prop_assert!((s.with_qi(n) - want).abs() < 1e-10, "N = {n}");
        }
    }

    #[test]
    fn anti_aligned_stages_cancel(g_mod in 0.0..2.0f64, g in 0.0..2.0f64, arg in -PI..PI) {
        let params = ModulationParams::new(Complex64::from_polar(g_mod, arg + PI), 0.0);
        let c = InteractionCoupling::from_polar(g, arg).unwrap();
        let s = spectrum(&params, &c, None).unwrap();
        for n in s.window().labels() {
            let want = bessel_j(n, 2.0 * (g - g_mod).abs()).powi(2);
            prop_assert!((s.with_qi(n) - want).abs() < 1e-10, "N = {n}");
        }
    }
}

#[test]
fn composition_matches_series_double_sum() {
    for &(g_mod, g) in &[(0.5, 0.7), (0.3, 1.1), (1.2, 0.4), (0.0, 0.9)] {
        let (params, c) = aligned(g_mod, g, 0.0);
        let s = spectrum(&params, &c, None).unwrap();
        for n in -6..=6 {
            let amp = graf_double_sum(n, 2.0 * g, 2.0 * g_mod, 40).unwrap();
            assert!((s.with_qi(n) - amp * amp).abs() < 1e-10, "({g_mod}, {g}) N = {n}");
        }
    }
}

#[test]
fn zero_loss_peak_vanishes() {
    let (params, c) = aligned(0.5, 0.7, 0.0);
    let s = spectrum(&params, &c, Some(LabelWindow::symmetric(10))).unwrap();
    assert!((s.with_qi(0) - 6.288_475_5e-6).abs() < 1e-12);
    assert!((s.without_qi(0) - 0.303_031_392_269_848_5).abs() < 1e-12);
    for n in s.window().labels().filter(|&n| n != 0) {
        assert!(s.without_qi(n) < s.without_qi(0));
    }
}

#[test]
fn unshaped_spectra_coincide() {
    let params = ModulationParams::new(Complex64::default(), 1.3);
    let s = spectrum(&params, &InteractionCoupling::real(0.7).unwrap(), None).unwrap();
    for (_, w, wo) in s.rows() {
        assert!((w - wo).abs() < 1e-14);
    }
}

#[test]
fn spectrum_agrees_with_generic_decomposition() {
    let (params, c) = aligned(0.5, 0.7, 0.9);
    let state = initial_amplitudes(&params).unwrap();
    let window = auto_window(&state, &c);
    let s = spectrum_for_state(&state, &c, Some(window)).unwrap();
    let op = PinemOperator::new(c, window, window).unwrap();
    let product = ProductState::single(state);
    for n in window.labels() {
        let sel = FinalSelector::exact(&[n]);
        let b = decompose(&product, &op, &sel).unwrap();
        let p = direct_probability(&product, &op, &sel).unwrap();
        assert!((p - s.with_qi(n)).abs() < 1e-12, "N = {n}");
        assert!((b.total() - s.with_qi(n)).abs() < 1e-12, "N = {n}");
        assert!((b.without_qi() - s.without_qi(n)).abs() < 1e-12, "N = {n}");
    }
}

#[test]
fn narrow_window_is_rejected_with_a_suggestion() {
    let (params, c) = aligned(0.5, 3.0, 0.0);
    match spectrum(&params, &c, Some(LabelWindow::symmetric(2))) {
        Err(Error::Truncation { suggested, .. }) => assert!(suggested > 2),
        other => panic!("expected truncation, got {other:?}"),
    }
}

#[test]
fn coupling_sweep_rows() {
    let params = ModulationParams::real(0.5);
    let couplings: Vec<InteractionCoupling> =
        (0..=15).map(|i| InteractionCoupling::real(i as f64 * 0.1).unwrap()).collect();
    let mut rows = Vec::new();
    coupling_sweep(&params, &couplings, None, |r| {
        rows.push(r);
        Ok(())
    })
    .unwrap();
    let comb = initial_amplitudes(&params).unwrap();
    for r in rows.iter().filter(|r| r.g_abs == 0.0) {
        let c2 = comb.population(r.n);
        assert!((r.with_qi - c2).abs() < 1e-15 && (r.without_qi - c2).abs() < 1e-15);
    }
    let first_dark = rows
        .iter()
        .filter(|r| r.n == 0 && r.with_qi < 1e-5)
        .map(|r| r.g_abs)
        .next()
        .unwrap();
    assert!((first_dark - 0.7).abs() < 1e-12);
    assert!((J0_ZERO / 2.0 - 0.5 - 0.7024).abs() < 1e-4);

    let mut order: Vec<(f64, i64)> = rows.iter().map(|r| (r.g_abs, r.n)).collect();
    order.dedup();
    assert_eq!(order.len(), rows.len());
    assert!(order.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1)));
}

#[test]
fn sidebands_are_suppressed_at_strong_coupling() {
    let g = J1_ZERO / 2.0 - 0.5;
    assert!(g > 1.0);
    let (params, c) = aligned(0.5, g, 0.0);
    let s = spectrum(&params, &c, None).unwrap();
    for n in [-1, 1] {
        assert!(s.with_qi(n) < 1e-4);
        assert!(s.without_qi(n) > 1e-3);
    }
}
