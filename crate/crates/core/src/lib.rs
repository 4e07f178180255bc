//! Quantum-interference toolkit.
//!
//! The crate splits the final-state probability of a multi-system scattering
//! event into a no-interference part and one interference term per subset of
//! coherent input systems ([`qi`]), and applies that machinery to two physical
//! settings:
//!
//! * [`pinem`]: a shaped free-electron energy comb scattered by a classical
//!   light field (Bessel-function gain/loss spectra);
//! * [`emission`]: interference between free-electron and bound-electron
//!   spontaneous emission into a single cavity mode.
//!
//! [`oracle`] holds brute-force verifiers that pin every closed form used by
//! the other modules.
// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emission;
pub mod error;
pub mod oracle;
pub mod pinem;
pub mod qi;
pub mod special;

pub use error::{Error, ErrorCategory, Result};
