//! Interference decomposition of multi-system scattering probabilities.
//!
//! `N` unentangled systems enter in a product of superpositions,
//! `|initial> = (sum_a C_a |a>)_1 (x) ... (x) (sum_a C_a |a>)_N`. The probability of
//! landing in a final multi-index is `|sum_alpha (prod_j C_{alpha_j}) S_alpha|^2`.
//! Expanding the square over ordered pairs `(alpha, alpha')` and grouping each
//! pair by the set `D = { j : alpha_j != alpha'_j }` of systems whose labels
//! differ gives one real contribution per subset `D`:
//!
//! * `D = {}` is the probability with all coherences removed (populations only);
//! * `|D| = R` is an `R`-process interference term, weighted by the coherences
//!   `rho_{a a'} = C_a conj(C_a')` of exactly the systems in `D`.
//!
//! Pair enumeration is dense, `O(M^{2N})` in the per-system dimension `M`, and
//! is capped by [`EnumerationLimits`].

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalisation tolerance for [`SystemState`].
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of initial (and final) multi-indices.
pub const DEFAULT_MAX_MULTI_INDICES: usize = 10_000;

/// Relative size of the imaginary residue tolerated when folding a term to a real.
const IMAG_RESIDUE_TOLERANCE: f64 = 1e-12;

/// Inclusive integer label range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelWindow {
    pub lo: i64,
    pub hi: i64,
}

impl LabelWindow {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::validation(
                "window",
                format!("lower bound {lo} exceeds upper bound {hi}"),
            ));
        }
        Ok(Self { lo, hi })
    }

    /// `[-half, half]`.
    pub fn symmetric(half: usize) -> Self {
        Self {
            lo: -(half as i64),
            hi: half as i64,
        }
    }

    pub fn contains(&self, label: i64) -> bool {
        self.lo <= label && label <= self.hi
    }

    pub fn contains_window(&self, other: &LabelWindow) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + Clone {
        self.lo..=self.hi
    }

    pub fn shifted(&self, by: i64) -> Self {
        Self {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }
}

impl fmt::Display for LabelWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Pure state of one system: distinct integer eigenlabels with complex amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    labels: Vec<i64>,
    amplitudes: Vec<Complex64>,
}

impl SystemState {
    /// Builds a state; fails unless `sum |C|^2 = 1` within [`NORM_TOLERANCE`].
    pub fn new(labels: Vec<i64>, amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::check_shape(&labels, &amplitudes)?;
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::validation(
                "amplitudes",
                format!("state is not normalised: sum |C|^2 = {norm:.17e}"),
            ));
        }
        Ok(Self { labels, amplitudes })
    }

    /// Builds a state after rescaling the amplitudes to unit norm.
    pub fn normalized(labels: Vec<i64>, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::check_shape(&labels, &amplitudes)?;
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::validation("amplitudes", "all amplitudes vanish"));
        }
        for c in amplitudes.iter_mut() {
            *c /= norm;
        }
        Self::new(labels, amplitudes)
    }

    /// Single eigenstate `|label>` with unit amplitude.
    pub fn eigenstate(label: i64) -> Self {
        Self {
            labels: vec![label],
            amplitudes: vec![Complex64::new(1.0, 0.0)],
        }
    }

    fn check_shape(labels: &[i64], amplitudes: &[Complex64]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::validation("labels", "a system needs at least one eigenlabel"));
        }
        if labels.len() != amplitudes.len() {
            return Err(Error::validation(
                "amplitudes",
                format!("{} labels but {} amplitudes", labels.len(), amplitudes.len()),
            ));
        }
        let mut sorted = labels.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("labels", "eigenlabels must be distinct"));
        }
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::validation("amplitudes", "non-finite amplitude"));
        }
        Ok(())
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn amplitude_of(&self, label: i64) -> Complex64 {
        self.labels
            .iter()
            .position(|&l| l == label)
            .map(|i| self.amplitudes[i])
            .unwrap_or_default()
    }

    /// `p_a = |C_a|^2`.
    pub fn population(&self, label: i64) -> f64 {
        self.amplitude_of(label).norm_sqr()
    }

    /// `rho_{a a'} = C_a conj(C_a')`.
    pub fn coherence(&self, a: i64, a_prime: i64) -> Complex64 {
        self.amplitude_of(a) * self.amplitude_of(a_prime).conj()
    }

    /// A state is shaped when at least two eigenstates carry weight.
    pub fn is_shaped(&self) -> bool {
        self.amplitudes.iter().filter(|c| c.norm_sqr() > 0.0).count() > 1
    }

    /// Multiplies amplitude `i` by `exp(i phases[i])`.
    pub fn with_phases(&self, phases: &[f64]) -> Self {
        assert_eq!(phases.len(), self.amplitudes.len());
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(phases)
            .map(|(c, &p)| c * Complex64::from_polar(1.0, p))
            .collect();
        Self {
            labels: self.labels.clone(),
            amplitudes,
        }
    }

    /// Same amplitudes with every label moved by `by`.
    pub fn shifted(&self, by: i64) -> Self {
        Self {
            labels: self.labels.iter().map(|l| l + by).collect(),
            amplitudes: self.amplitudes.clone(),
        }
    }
}

/// Unentangled input `|initial> = (x)_j |psi_j>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    systems: Vec<SystemState>,
}

impl ProductState {
    pub fn new(systems: Vec<SystemState>) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::validation("systems", "at least one system is required"));
        }
        for (j, s) in systems.iter().enumerate() {
            let norm: f64 = s.amplitudes.iter().map(|c| c.norm_sqr()).sum();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::validation(
                    format!("systems[{j}].amplitudes"),
                    format!("state is not normalised: sum |C|^2 = {norm:.17e}"),
                ));
            }
        }
        Ok(Self { systems })
    }

    pub fn single(system: SystemState) -> Self {
        Self {
            systems: vec![system],
        }
    }

    pub fn systems(&self) -> &[SystemState] {
        &self.systems
    }

    pub fn system(&self, j: usize) -> &SystemState {
        &self.systems[j]
    }

    pub fn num_systems(&self) -> usize {
        self.systems.len()
    }

    /// Copy with system `j` replaced.
    pub fn with_system(&self, j: usize, system: SystemState) -> Self {
        let mut systems = self.systems.clone();
        systems[j] = system;
        Self { systems }
    }

    /// Number of initial multi-indices, `prod_j M_j`.
    pub fn multi_index_count(&self) -> u128 {
        self.systems.iter().map(|s| s.len() as u128).product()
    }
}

/// Amplitude map `<final | S | alpha_1 .. alpha_N>` over a finite label window.
pub trait ScatteringOperator: Sync {
    fn num_systems(&self) -> usize;

    /// Labels of system `system` the operator is defined on.
    fn window(&self, system: usize) -> LabelWindow;

    /// `<final | S | initial>`; zero when either index leaves the window.
    fn amplitude(&self, initial: &[i64], final_labels: &[i64]) -> Complex64;

    /// Bound on `|1 - sum_final |amplitude|^2|` inside the window.
    fn truncation_tolerance(&self) -> f64 {
        1e-8
    }
}

impl<T: ScatteringOperator + ?Sized> ScatteringOperator for &T {
    fn num_systems(&self) -> usize {
        (**self).num_systems()
    }
    fn window(&self, system: usize) -> LabelWindow {
        (**self).window(system)
    }
    fn amplitude(&self, initial: &[i64], final_labels: &[i64]) -> Complex64 {
        (**self).amplitude(initial, final_labels)
    }
    fn truncation_tolerance(&self) -> f64 {
        (**self).truncation_tolerance()
    }
}

/// Matrix-backed operator on the product of per-system windows.
///
/// Flat indices are mixed-radix with system 0 most significant; the matrix is
/// stored row-major as `matrix[final_flat * dim + initial_flat]`.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    windows: Vec<LabelWindow>,
    dim: usize,
    matrix: Vec<Complex64>,
    tolerance: f64,
}

impl DenseOperator {
    pub fn new(windows: Vec<LabelWindow>, matrix: Vec<Complex64>, tolerance: f64) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::validation("windows", "at least one system is required"));
        }
        let dim: usize = windows.iter().map(LabelWindow::len).product();
        if matrix.len() != dim * dim {
            return Err(Error::validation(
                "matrix",
                format!("expected {} entries for dimension {dim}, got {}", dim * dim, matrix.len()),
            ));
        }
        Ok(Self {
            windows,
            dim,
            matrix,
            tolerance,
        })
    }

    /// Operator whose element is `f(initial, final)`.
    pub fn from_fn<F>(windows: Vec<LabelWindow>, tolerance: f64, f: F) -> Result<Self>
    where
        F: Fn(&[i64], &[i64]) -> Complex64,
    {
        let dim: usize = windows.iter().map(LabelWindow::len).product();
        let mut matrix = vec![Complex64::default(); dim * dim];
        let mut out_labels = vec![0; windows.len()];
        let mut in_labels = vec![0; windows.len()];
        for row in 0..dim {
            unflatten(&windows, row, &mut out_labels);
            for col in 0..dim {
                unflatten(&windows, col, &mut in_labels);
                matrix[row * dim + col] = f(&in_labels, &out_labels);
            }
        }
        Self::new(windows, matrix, tolerance)
    }

    pub fn identity(windows: Vec<LabelWindow>) -> Result<Self> {
        Self::from_fn(windows, 1e-15, |a, b| {
            if a == b {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    fn flatten(&self, labels: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (w, &l) in self.windows.iter().zip(labels) {
            if !w.contains(l) {
                return None;
            }
            flat = flat * w.len() + (l - w.lo) as usize;
        }
        Some(flat)
    }
}

fn unflatten(windows: &[LabelWindow], mut flat: usize, out: &mut [i64]) {
    for (j, w) in windows.iter().enumerate().rev() {
        let n = w.len();
        out[j] = w.lo + (flat % n) as i64;
        flat /= n;
    }
}

impl ScatteringOperator for DenseOperator {
    fn num_systems(&self) -> usize {
        self.windows.len()
    }

    fn window(&self, system: usize) -> LabelWindow {
        self.windows[system]
    }

    fn amplitude(&self, initial: &[i64], final_labels: &[i64]) -> Complex64 {
        match (self.flatten(final_labels), self.flatten(initial)) {
            (Some(r), Some(c)) => self.matrix[r * self.dim + c],
            _ => Complex64::default(),
        }
    }

    fn truncation_tolerance(&self) -> f64 {
        self.tolerance
    }
}

/// Final labels held fixed (`Some`) or marginalised over the window (`None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSelector {
    fixed: Vec<Option<i64>>,
}

impl FinalSelector {
    pub fn new(fixed: Vec<Option<i64>>) -> Self {
        Self { fixed }
    }

    /// Every final label marginalised.
    pub fn all_free(num_systems: usize) -> Self {
        Self {
            fixed: vec![None; num_systems],
        }
    }

    /// Every final label fixed.
    pub fn exact(labels: &[i64]) -> Self {
        Self {
            fixed: labels.iter().copied().map(Some).collect(),
        }
    }

    /// System `system` fixed to `label`, all others marginalised.
    pub fn single(num_systems: usize, system: usize, label: i64) -> Self {
        let mut fixed = vec![None; num_systems];
        fixed[system] = Some(label);
        Self { fixed }
    }

    pub fn fixed(&self) -> &[Option<i64>] {
        &self.fixed
    }
}

/// Subset of system indices (0-based), stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SystemSet(u64);

impl SystemSet {
    pub const EMPTY: SystemSet = SystemSet(0);

    pub fn from_mask(mask: u64) -> Self {
        Self(mask)
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        Self(indices.iter().fold(0, |m, &j| m | (1 << j)))
    }

    pub fn mask(&self) -> u64 {
        self.0
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0 & (1 << j) != 0
    }

    /// Number of interfering systems, the `R` of an `R`-process term.
    pub fn order(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(move |&j| self.contains(j))
    }
}

impl Ord for SystemSet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.0.reverse_bits().cmp(&other.0.reverse_bits()).reverse())
    }
}

impl PartialOrd for SystemSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SystemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.indices().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str("}")
    }
}

/// Real contribution of each interfering subset to a final-state probability.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QiBreakdown {
    terms: BTreeMap<SystemSet, f64>,
}

impl QiBreakdown {
    pub fn from_terms(terms: BTreeMap<SystemSet, f64>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &BTreeMap<SystemSet, f64> {
        &self.terms
    }

    pub fn get(&self, set: SystemSet) -> Option<f64> {
        self.terms.get(&set).copied()
    }

    /// Probability with all coherences removed.
    pub fn without_qi(&self) -> f64 {
        self.terms.get(&SystemSet::EMPTY).copied().unwrap_or(0.0)
    }

    /// Sum of all `R`-process terms.
    pub fn order_total(&self, r: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(d, _)| d.order() == r)
            .map(|(_, v)| v)
            .sum()
    }

    /// Sum of every term.
    pub fn total(&self) -> f64 {
        let mut acc = NeumaierSum::default();
        for v in self.terms.values() {
            acc.add(*v);
        }
        acc.value()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SystemSet, f64)> + '_ {
        self.terms.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Caps on dense enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationLimits {
    pub max_multi_indices: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_multi_indices: DEFAULT_MAX_MULTI_INDICES,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Initial multi-indices of a product state with their weights `prod_j C_{alpha_j}`.
struct InitialSpace {
    labels: Vec<Vec<i64>>,
    digits: Vec<Vec<usize>>,
    weights: Vec<Complex64>,
}

impl InitialSpace {
    fn new(state: &ProductState) -> Self {
        let count = state.multi_index_count() as usize;
        let n = state.num_systems();
        let mut labels = Vec::with_capacity(count);
        let mut digits = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; n];
        for _ in 0..count {
            let mut w = Complex64::new(1.0, 0.0);
            let mut l = Vec::with_capacity(n);
            for (j, s) in state.systems().iter().enumerate() {
                w *= s.amplitudes()[idx[j]];
                l.push(s.labels()[idx[j]]);
            }
            labels.push(l);
            digits.push(idx.clone());
            weights.push(w);
            for j in (0..n).rev() {
                idx[j] += 1;
                if idx[j] < state.system(j).len() {
                    break;
                }
                idx[j] = 0;
            }
        }
        Self {
            labels,
            digits,
            weights,
        }
    }
}

fn validate(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
    limits: &EnumerationLimits,
) -> Result<Vec<Vec<i64>>> {
    let n = state.num_systems();
    if op.num_systems() != n {
        return Err(Error::validation(
            "operator",
            format!("operator acts on {} systems, state has {n}", op.num_systems()),
        ));
    }
    if sel.fixed().len() != n {
        return Err(Error::validation(
            "selector",
            format!("selector has {} entries, state has {n} systems", sel.fixed().len()),
        ));
    }
    if n > 63 {
        return Err(Error::validation("systems", "at most 63 systems are supported"));
    }
    for (j, s) in state.systems().iter().enumerate() {
        let w = op.window(j);
        for &l in s.labels() {
            if !w.contains(l) {
                return Err(Error::OutsideWindow {
                    system: j,
                    label: l,
                    lo: w.lo,
                    hi: w.hi,
                });
            }
        }
    }
    for (j, f) in sel.fixed().iter().enumerate() {
        if let Some(l) = *f {
            let w = op.window(j);
            if !w.contains(l) {
                return Err(Error::OutsideWindow {
                    system: j,
                    label: l,
                    lo: w.lo,
                    hi: w.hi,
                });
            }
        }
    }
    let count = state.multi_index_count();
    if count > limits.max_multi_indices as u128 {
        return Err(Error::EnumerationCap {
            count,
            cap: limits.max_multi_indices,
        });
    }
    let final_count: u128 = sel
        .fixed()
        .iter()
        .enumerate()
        .map(|(j, f)| if f.is_some() { 1 } else { op.window(j).len() as u128 })
        .product();
    if final_count > limits.max_multi_indices as u128 {
        return Err(Error::EnumerationCap {
            count: final_count,
            cap: limits.max_multi_indices,
        });
    }
    Ok(final_multi_indices(op, sel))
}

/// All final multi-indices consistent with `sel`, in lexicographic order.
pub fn final_multi_indices(op: &dyn ScatteringOperator, sel: &FinalSelector) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for (j, f) in sel.fixed().iter().enumerate() {
        let choices: Vec<i64> = match f {
            Some(l) => vec![*l],
            None => op.window(j).labels().collect(),
        };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |&l| {
                    let mut p = prefix.clone();
                    p.push(l);
                    p
                })
            })
            .collect();
    }
    out
}

/// `sum over marginalised final labels of |<final| S |initial>|^2`.
pub fn direct_probability(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
) -> Result<f64> {
    direct_probability_with(state, op, sel, &EnumerationLimits::default())
}

pub fn direct_probability_with(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
    limits: &EnumerationLimits,
) -> Result<f64> {
    let finals = validate(state, op, sel, limits)?;
    let space = InitialSpace::new(state);
    let mut total = NeumaierSum::default();
    for f in &finals {
        let mut amp = ComplexSum::default();
        for (labels, w) in space.labels.iter().zip(&space.weights) {
            amp.add(w * op.amplitude(labels, f));
        }
        total.add(amp.value().norm_sqr());
    }
    Ok(total.value())
}

/// Groups the probability into the no-interference term and every `R`-process term.
///
/// A subset `D` is present in the result exactly when every system in `D` has
/// at least two eigenlabels, so a state made only of eigenstates yields the
/// single entry `D = {}`.
pub fn decompose(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
) -> Result<QiBreakdown> {
    decompose_with(state, op, sel, &EnumerationLimits::default())
}

pub fn decompose_with(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    sel: &FinalSelector,
    limits: &EnumerationLimits,
) -> Result<QiBreakdown> {
    let finals = validate(state, op, sel, limits)?;
    let n = state.num_systems();
    let space = InitialSpace::new(state);
    let count = space.weights.len();

    let multi_mask: u64 = state
        .systems()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() > 1)
        .fold(0, |m, (j, _)| m | (1 << j));
    let mut acc = vec![ComplexSum::default(); 1 << n];
    let mut scale = NeumaierSum::default();
    let mut amps = vec![Complex64::default(); count];

    for f in &finals {
        for (a, (labels, w)) in amps.iter_mut().zip(space.labels.iter().zip(&space.weights)) {
            *a = w * op.amplitude(labels, f);
        }
        scale.add(amps.iter().map(|a| a.norm()).sum::<f64>().powi(2));
        for (alpha, a) in amps.iter().enumerate() {
            let da = &space.digits[alpha];
            for (alpha_p, a_p) in amps.iter().enumerate() {
                let dp = &space.digits[alpha_p];
                let mut mask = 0usize;
                for j in 0..n {
                    if da[j] != dp[j] {
                        mask |= 1 << j;
                    }
                }
                acc[mask].add(a * a_p.conj());
            }
        }
    }

    let scale = scale.value();
    let mut terms = BTreeMap::new();
    for (mask, sum) in acc.iter().enumerate() {
        let mask = mask as u64;
        if mask & !multi_mask != 0 {
            continue;
        }
        let z = sum.value();
        let bound = IMAG_RESIDUE_TOLERANCE * z.re.abs().max(scale).max(f64::MIN_POSITIVE);
        if z.im.abs() > bound {
            return Err(Error::Invariant(format!(
                "term {} has imaginary residue {:e} (real part {:e})",
                SystemSet(mask),
                z.im,
                z.re
            )));
        }
        terms.insert(SystemSet(mask), z.re);
    }
    Ok(QiBreakdown { terms })
}

/// [`decompose`] for each final label of one system, all others marginalised.
pub fn marginal_spectrum(
    state: &ProductState,
    op: &dyn ScatteringOperator,
    system: usize,
    labels: LabelWindow,
) -> Result<BTreeMap<i64, QiBreakdown>> {
    let n = state.num_systems();
    if system >= n {
        return Err(Error::validation(
            "system",
            format!("index {system} out of range for {n} systems"),
        ));
    }
    let w = op.window(system);
    if !w.contains_window(&labels) {
        return Err(Error::OutsideWindow {
            system,
            label: if labels.lo < w.lo { labels.lo } else { labels.hi },
            lo: w.lo,
            hi: w.hi,
        });
    }
    let rows: Vec<(i64, QiBreakdown)> = labels
        .labels()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|l| {
            decompose(state, op, &FinalSelector::single(n, system, l)).map(|b| (l, b))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_level_uniform() -> SystemState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        SystemState::new(vec![0, 1], vec![c(h, 0.0), c(h, 0.0)]).unwrap()
    }

    fn swap_operator() -> DenseOperator {
        let w = LabelWindow::new(0, 1).unwrap();
        DenseOperator::from_fn(vec![w, w], 0.0, |a, b| {
            if a[0] == b[1] && a[1] == b[0] {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
        .unwrap()
    }

    #[test]
    fn identity_single_eigenstate() {
        let state = ProductState::single(SystemState::eigenstate(0));
        let op = DenseOperator::identity(vec![LabelWindow::new(-2, 2).unwrap()]).unwrap();
        let p = direct_probability(&state, &op, &FinalSelector::exact(&[0])).unwrap();
        assert_eq!(p, 1.0);
        let d = decompose(&state, &op, &FinalSelector::exact(&[0])).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.without_qi(), 1.0);
    }

    #[test]
    fn swap_of_two_uniform_qubits() {
        let state = ProductState::new(vec![two_level_uniform(), two_level_uniform()]).unwrap();
        let op = swap_operator();
        let sel = FinalSelector::exact(&[0, 1]);
        let p = direct_probability(&state, &op, &sel).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
        let d = decompose(&state, &op, &sel).unwrap();
        assert_eq!(d.len(), 4);
        assert!((d.total() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn eigenstates_only_give_empty_subset() {
        let state = ProductState::new(vec![
            SystemState::eigenstate(1),
            SystemState::eigenstate(0),
        ])
        .unwrap();
        let op = swap_operator();
        let sel = FinalSelector::all_free(2);
        let d = decompose(&state, &op, &sel).unwrap();
        assert_eq!(d.terms().keys().copied().collect::<Vec<_>>(), vec![SystemSet::EMPTY]);
        assert_eq!(d.without_qi(), direct_probability(&state, &op, &sel).unwrap());
    }

    #[test]
    fn identity_preserves_populations() {
        let s = SystemState::normalized(vec![-1, 0, 2], vec![c(0.3, 0.1), c(-0.5, 0.2), c(0.1, 0.7)])
            .unwrap();
        let state = ProductState::single(s.clone());
        let op = DenseOperator::identity(vec![LabelWindow::new(-2, 3).unwrap()]).unwrap();
        let spec = marginal_spectrum(&state, &op, 0, LabelWindow::new(-2, 3).unwrap()).unwrap();
        let mut sum = 0.0;
        for (l, b) in &spec {
            assert!((b.total() - s.population(*l)).abs() < 1e-15);
            sum += b.total();
        }
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_amplitude_system_has_exactly_zero_terms() {
        let unshaped =
            SystemState::new(vec![0, 1], vec![c(0.0, 0.0), c(0.0, 1.0)]).unwrap();
        let state = ProductState::new(vec![two_level_uniform(), unshaped]).unwrap();
        let w = LabelWindow::new(0, 1).unwrap();
        let op = DenseOperator::from_fn(vec![w, w], 0.0, |a, b| {
            c(0.5, (a[0] + 2 * b[1]) as f64 * 0.1)
        })
        .unwrap();
        let d = decompose(&state, &op, &FinalSelector::all_free(2)).unwrap();
        for (set, v) in d.iter() {
            if set.contains(1) {
                assert_eq!(v, 0.0, "{set}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SystemState::new(vec![0, 1], vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(SystemState::new(vec![0, 0], vec![c(0.6, 0.0), c(0.8, 0.0)]).is_err());
        assert!(SystemState::new(vec![0], vec![]).is_err());
        assert!(ProductState::new(vec![]).is_err());

        let state = ProductState::single(SystemState::eigenstate(5));
        let op = DenseOperator::identity(vec![LabelWindow::new(0, 3).unwrap()]).unwrap();
        let err = decompose(&state, &op, &FinalSelector::all_free(1)).unwrap_err();
        assert!(matches!(err, Error::OutsideWindow { label: 5, .. }));

        let state = ProductState::single(SystemState::eigenstate(0));
        let err = direct_probability(&state, &op, &FinalSelector::exact(&[9])).unwrap_err();
        assert!(matches!(err, Error::OutsideWindow { label: 9, .. }));
    }

    #[test]
    fn enumeration_cap_fails_fast() {
        let s = SystemState::normalized((0..4).collect(), vec![c(1.0, 0.0); 4]).unwrap();
        let state = ProductState::new(vec![s.clone(), s.clone(), s]).unwrap();
        let w = LabelWindow::new(0, 3).unwrap();
        let op = DenseOperator::identity(vec![w, w, w]).unwrap();
        let limits = EnumerationLimits { max_multi_indices: 63 };
        let err = decompose_with(&state, &op, &FinalSelector::all_free(3), &limits).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { count: 64, cap: 63 }));
    }

    #[test]
    fn system_set_order_and_display() {
        let mut sets: Vec<SystemSet> = (0..8).map(SystemSet::from_mask).collect();
        sets.sort();
        let shown: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            shown,
            ["{}", "{0}", "{1}", "{2}", "{0,1}", "{0,2}", "{1,2}", "{0,1,2}"]
        );
        assert_eq!(SystemSet::from_indices(&[0, 2]).order(), 2);
    }
}
