use crate::error::{Error, Result};

/// Largest argument for which the power series keeps ~1e-13 absolute accuracy.
pub const SERIES_MAX_ARGUMENT: f64 = 8.0;

/// `J_n(x)` from its power series `sum_k (-1)^k (x/2)^{2k+n} / (k! (k+n)!)`.
pub fn bessel_j_series(n: i64, x: f64) -> Result<f64> {
    if x.abs() > SERIES_MAX_ARGUMENT {
        return Err(Error::validation(
            "x",
            format!("series evaluation limited to |x| <= {SERIES_MAX_ARGUMENT}"),
        ));
    }
    let m = n.unsigned_abs();
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=m {
        term *= half / i as f64;
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut k = 0u64;
    loop {
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
        k += 1;
        term *= -half * half / (k as f64 * (k + m) as f64);
        if term.abs() < 1e-18 * sum.abs().max(1e-300) || k > 500 {
            break;
        }
    }
    let v = sum + comp;
    Ok(if n < 0 && m % 2 == 1 { -v } else { v })
}
