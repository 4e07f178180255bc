use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qi::LabelWindow;

/// Dense `<N| S |n>` on a finite window, from the matrix exponential of the
/// truncated ladder generator.
#[derive(Debug, Clone)]
pub struct TruncatedOperatorMatrix {
    window: LabelWindow,
    entries: DMatrix<Complex64>,
}

impl TruncatedOperatorMatrix {
    pub fn window(&self) -> LabelWindow {
        self.window
    }

    /// Labels at least a third of the window away from either edge.
    pub fn interior(&self) -> LabelWindow {
        let cut = self.window.len() as i64 / 3;
        LabelWindow {
            lo: self.window.lo + cut,
            hi: self.window.hi - cut,
        }
    }

    /// `<final| S |initial>`.
    pub fn get(&self, final_label: i64, initial_label: i64) -> Complex64 {
        let r = (final_label - self.window.lo) as usize;
        let c = (initial_label - self.window.lo) as usize;
        self.entries[(r, c)]
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Largest `|1 - ||column||^2|` over interior columns.
    pub fn interior_unitarity_defect(&self) -> f64 {
        self.interior()
            .labels()
            .map(|n| {
                let c = (n - self.window.lo) as usize;
                (1.0 - self.entries.column(c).iter().map(|z| z.norm_sqr()).sum::<f64>()).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `exp(G* R - G R^dagger)` on `window`, with `R|n> = |n+1>` the label-raising
/// shift, by scaling and squaring of a Taylor series.
///
/// The window must be at least `4 |2G| + 40` labels wide; only the interior
/// two thirds are free of truncation artefacts.
pub fn matrix_exponential_elements(coupling: Complex64, window: LabelWindow) -> Result<TruncatedOperatorMatrix> {
    let need = (8.0 * coupling.norm()).ceil() as usize + 40;
    if window.len() < need {
        return Err(Error::Truncation {
            detail: format!("window {window} narrower than {need} labels"),
            suggested: need.div_ceil(2),
        });
    }
    let dim = window.len();
    let mut generator = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim - 1 {
        generator[(i + 1, i)] = coupling.conj();
        generator[(i, i + 1)] = -coupling;
    }

    // ||K||_1 <= 2|G|; scale until the norm is at most 1/2
    let norm = 2.0 * coupling.norm();
    let mut squarings = 0u32;
    while norm / 2f64.powi(squarings as i32) > 0.5 {
        squarings += 1;
    }
    let scaled = generator.scale(1.0 / 2f64.powi(squarings as i32));

    let mut result = DMatrix::<Complex64>::identity(dim, dim);
    let mut term = DMatrix::<Complex64>::identity(dim, dim);
    for k in 1..=40 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        result += &term;
        let size = term.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if size < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(TruncatedOperatorMatrix {
        window,
        entries: result,
    })
}
