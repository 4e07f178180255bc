//! Seeded random states and unitaries for property checks.

use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::qi::{DenseOperator, LabelWindow, ProductState, SystemState};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; 1 - u keeps the logarithm finite
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    (-2.0 * (1.0 - u).ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(gaussian(rng), gaussian(rng))
}

/// Normalised random state on labels `0..dim`.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<SystemState> {
    let amps = (0..dim).map(|_| complex_gaussian(rng)).collect();
    SystemState::normalized((0..dim as i64).collect(), amps)
}

pub fn random_product_state<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<ProductState> {
    let systems = dims
        .iter()
        .map(|&d| random_state(d, rng))
        .collect::<Result<Vec<_>>>()?;
    ProductState::new(systems)
}

/// Haar-like random unitary on the product of windows `[0, d_j - 1]`,
/// orthonormalised column by column with two Gram-Schmidt passes.
pub fn random_unitary_operator<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<DenseOperator> {
    let dim: usize = dims.iter().product();
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut v: Vec<Complex64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
        for _ in 0..2 {
            for u in &cols {
                let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, a) in v.iter_mut().zip(u) {
                    *x -= proj * a;
                }
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        cols.push(v);
    }
    let mut matrix = vec![Complex64::default(); dim * dim];
    for (c, col) in cols.iter().enumerate() {
        for (r, x) in col.iter().enumerate() {
            matrix[r * dim + c] = *x;
        }
    }
    let windows = dims
        .iter()
        .map(|&d| LabelWindow::new(0, d as i64 - 1))
        .collect::<Result<Vec<_>>>()?;
    DenseOperator::new(windows, matrix, 1e-12)
}
