use num_complex::Complex64;

use crate::error::Result;
use crate::qi::{decompose, final_multi_indices, FinalSelector, ProductState, ScatteringOperator};

use super::series::bessel_j_series;

/// Worst disagreement between the grouped decomposition and the raw amplitude sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectSumReport {
    /// Largest `|sum_D terms[D] - |<f|S|initial>|^2|` over the final multi-indices.
    pub max_abs_delta: f64,
    /// Discrepancy of the marginalised probability.
    pub marginal_delta: f64,
    /// Number of final multi-indices compared.
    pub finals: usize,
}

/// `<final| S |initial>` by explicit recursion over the product expansion.
fn product_amplitude(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    final_labels: &[i64],
    prefix: &mut Vec<i64>,
    weight: Complex64,
) -> Complex64 {
    let j = prefix.len();
    if j == state.num_systems() {
        return weight * op.amplitude(prefix, final_labels);
    }
    let sys = state.system(j);
    let mut acc = Complex64::default();
    for (&l, &c) in sys.labels().iter().zip(sys.amplitudes()) {
        prefix.push(l);
        acc += product_amplitude(state, op, final_labels, prefix, weight * c);
        prefix.pop();
    }
    acc
}

/// Compares [`decompose`] against `|<final| S |initial>|^2` for every final
/// multi-index selected by `sel`, and for their marginal sum.
pub fn direct_sum_check(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
) -> Result<DirectSumReport> {
    // validates the inputs as a side effect
    let marginal_grouped = decompose(state, op, sel)?.total();
    let finals = final_multi_indices(op, sel);
    let mut worst = 0.0f64;
    let mut marginal_raw = 0.0;
    for f in &finals {
        let raw = product_amplitude(state, op, f, &mut Vec::new(), Complex64::new(1.0, 0.0)).norm_sqr();
        let grouped = decompose(state, op, &FinalSelector::exact(f))?.total();
        worst = worst.max((grouped - raw).abs());
        marginal_raw += raw;
    }
    Ok(DirectSumReport {
        max_abs_delta: worst,
        marginal_delta: (marginal_grouped - marginal_raw).abs(),
        finals: finals.len(),
    })
}

/// `sum_{|n| <= n_max} J_{N-n}(x) J_n(y)` with series-evaluated Bessel functions.
pub fn graf_double_sum(big_n: i64, x: f64, y: f64, n_max: i64) -> Result<f64> {
    let mut acc = 0.0;
    for n in -n_max..=n_max {
        acc += bessel_j_series(big_n - n, x)? * bessel_j_series(n, y)?;
    }
    Ok(acc)
}
