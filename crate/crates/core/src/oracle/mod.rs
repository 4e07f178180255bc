//! Brute-force verifiers for the closed forms in [`crate::qi`], [`crate::pinem`]
//! and [`crate::emission`].
//!
//! Each oracle reaches its answer by a route that shares no code with the
//! quantity it checks: the ladder shift by a dense matrix exponential instead
//! of Bessel functions, the interference grouping by the unfactored amplitude
//! sum, the emission rates by quadrature of the first-order amplitudes.

mod expm;
mod montecarlo;
mod perturbation;
mod random;
mod series;
mod sums;

pub use expm::{matrix_exponential_elements, TruncatedOperatorMatrix};
pub use montecarlo::{phase_scramble, MonteCarloReport};
pub use perturbation::{perturbation_integrator, resolved_steps, PerturbationReport, MIN_PANELS_PER_PERIOD, MIN_STEPS};
pub use random::{random_product_state, random_state, random_unitary_operator};
pub use series::bessel_j_series;
pub use sums::{direct_sum_check, graf_double_sum, DirectSumReport};
