use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// The caller supplied an invalid or out-of-range input.
    Validation,
    /// A numerical guard fired (truncation, unresolved oscillation, order cap).
    NumericalGuard,
    /// An internal consistency check failed.
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("label {label} of system {system} lies outside the window [{lo}, {hi}]")]
    OutsideWindow {
        system: usize,
        label: i64,
        lo: i64,
        hi: i64,
    },

    #[error("enumeration of {count} multi-indices exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: usize },

    #[error("truncation guard: {detail}; try a half-width of at least {suggested}")]
    Truncation { detail: String, suggested: usize },

    #[error("Bessel order {order} exceeds the cap of {cap}")]
    OrderCap { order: i64, cap: i64 },

    #[error("unresolved oscillation: {steps} panels given, at least {required} required")]
    UnresolvedOscillation { steps: usize, required: usize },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Validation { .. } | Error::OutsideWindow { .. } | Error::EnumerationCap { .. } => {
                ErrorCategory::Validation
            }
            Error::Truncation { .. }
            | Error::OrderCap { .. }
            | Error::UnresolvedOscillation { .. } => ErrorCategory::NumericalGuard,
            Error::Invariant(_) => ErrorCategory::Invariant,
        }
    }
}
