//! Special functions: integer-order Bessel functions of the first kind and
//! the unnormalised sinc.

/// `sin(x) / x` with `sinc(0) = 1`.
///
/// Below `|x| < 1e-4` the Taylor polynomial is used; the first omitted term
/// is `x^6 / 5040 < 2e-28`, far below one ulp of the result.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `J_0(x), J_1(x), ..., J_{n_max}(x)` by Miller's downward recurrence,
/// normalised with `J_0 + 2 * sum_k J_{2k} = 1`.
///
/// The recurrence is started well above both `n_max` and `|x|`, where the
/// minimal solution dominates, so the same path is stable on both sides of
/// the turning point `n ~ |x|`.
pub fn bessel_j_orders(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = n_max.max(ax.ceil() as usize).max(1);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;

    const BIG: f64 = 1e250;
    const RESCALE: f64 = 1e-250;

    let two_over_x = 2.0 / ax;
    let mut j_next = 0.0;
    let mut j = 1e-30;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        // J_{k-1} = (2k / x) J_k - J_{k+1}
        let j_prev = k as f64 * two_over_x * j - j_next;
        j_next = j;
        j = j_prev;
        let order = k - 1;
        if order <= n_max {
            out[order] = j;
        }
        if order > 0 && order % 2 == 0 {
            norm += 2.0 * j;
        }
        if j.abs() > BIG {
            j *= RESCALE;
            j_next *= RESCALE;
            norm *= RESCALE;
            for v in out.iter_mut().skip(order) {
                *v *= RESCALE;
            }
        }
    }
    norm += j;
    for v in out.iter_mut() {
        *v /= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_n(x)` for any integer order, using `J_{-n}(x) = (-1)^n J_n(x)`.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_orders(m, x)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Precomputed `J_k(x)` for `k` in `[-k_max, k_max]`.
#[derive(Debug, Clone)]
pub struct BesselTable {
    x: f64,
    values: Vec<f64>,
}

impl BesselTable {
    pub fn new(k_max: usize, x: f64) -> Self {
        Self {
            x,
            values: bessel_j_orders(k_max, x),
        }
    }

    pub fn argument(&self) -> f64 {
        self.x
    }

    pub fn k_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `J_k(x)`; zero outside the tabulated range.
    pub fn get(&self, k: i64) -> f64 {
        let m = k.unsigned_abs() as usize;
        match self.values.get(m) {
            Some(&v) if k < 0 && m % 2 == 1 => -v,
            Some(&v) => v,
            None => 0.0,
        }
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // Reference values from a 40-digit arbitrary-precision evaluation.
    const REFERENCE: &[(i64, f64, f64)] = &[
        (0, 0.5, 0.93846980724081290423),
        (0, 1.0, 0.76519768655796655145),
        (0, 1.4, 0.5668551203742887695),
        (0, 2.4, 0.0025076832972438592168),
        (1, 1.0, 0.44005058574493351596),
        (2, 1.0, 0.11490348493190048047),
        (1, 2.4, 0.52018526818193105299),
        (3, 7.5, -0.25806091319346031166),
        (5, 0.1, 2.6030817909644415564e-9),
        (10, 3.0, 0.000012928351645715883778),
        (20, 5.0, 2.7703300521289416874e-11),
        (0, 30.0, -0.086367983581040211336),
        (7, 30.0, 0.1451851895723282743),
        (25, 30.0, 0.08429274064303172925),
        (40, 30.0, 0.00036120236088965853089),
        (60, 30.0, 9.8075576431286246302e-14),
        (0, 100.0, 0.019985850304223122424),
        (1, 100.0, -0.077145352014112158033),
        (13, 100.0, -0.036393674340623354261),
        (50, 100.0, -0.038698339728525383467),
        (60, 100.0, 0.0010631563042277030813),
        (59, 99.5, 0.046006097254084254027),
        (45, 20.0, 9.0114462875412651957e-13),
        (2, 55.3, 0.044679775870192276677),
        (33, 71.2, 0.03292351328738468258),
        (60, 1.0, 1.0381149765645213319e-100),
        (12, 13.7, 0.28485845181841324044),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for &(n, x, want) in REFERENCE {
            let got = bessel_j(n, x);
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-12, "J_{n}({x}) = {got}, want {want}, rel {rel:e}");
        }
    }

    #[test]
    fn negative_orders_and_arguments() {
        for n in 0..8i64 {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(bessel_j(-n, 1.7), s * bessel_j(n, 1.7));
            assert_eq!(bessel_j(n, -1.7), s * bessel_j(n, 1.7));
        }
    }

    #[test]
    fn zero_argument_is_kronecker_delta() {
        let v = bessel_j_orders(5, 0.0);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn first_zero_of_j0() {
        // bisection on the implementation itself
        let (mut a, mut b) = (2.0, 3.0);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if bessel_j(0, a) * bessel_j(0, m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        assert!((0.5 * (a + b) - 2.404825557695773).abs() < 1e-6);
    }

    #[test]
    fn sum_of_squares_is_one() {
        for &x in &[0.3, 1.4, 2.4, 10.0, 57.0, 100.0] {
            let t = BesselTable::new(200, x);
            let s: f64 = (-200..=200).map(|k| t.get(k).powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-13, "x={x}: {s}");
        }
    }

    #[test]
    fn sinc_small_and_large() {
        assert_eq!(sinc(0.0), 1.0);
        for &x in &[1e-9_f64, 3e-5, 9.9e-5, 1e-4, 0.3, 3.0, -7.0] {
            let want = if x == 0.0 { 1.0 } else { x.sin() / x };
            assert!(((sinc(x) - want) / want).abs() < 1e-14);
        }
        assert!(sinc(std::f64::consts::PI).abs() < 1e-15);
    }
}
