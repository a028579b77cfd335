use thiserror::Error;

/// Errors raised by estimation, regression and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiivError {
    #[error("column `{column}` is not binary: row {row} holds {value}")]
    NonBinary { column: String, row: usize, value: f64 },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("column `{column}` has {found} rows, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },

    #[error("empty cell: {0}")]
    MissingCell(String),

    #[error("zero denominator: |{denominator:e}| does not exceed tolerance {tolerance:e}")]
    ZeroDenominator { denominator: f64, tolerance: f64 },

    #[error("rank deficient design: rank {rank} < {columns} columns")]
    RankDeficient { rank: usize, columns: usize },

    #[error("relevance violated: differential behavioral shift {shift:e} is not positive")]
    RelevanceViolated { shift: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl DiivError {
    /// Short machine-readable tag for reports.
    pub fn kind(&self) -> &'static str {
        match self {
            DiivError::NonBinary { .. } => "NonBinary",
            DiivError::MissingColumn(_) => "MissingColumn",
            DiivError::LengthMismatch { .. } => "LengthMismatch",
            DiivError::MissingCell(_) => "MissingCell",
            DiivError::ZeroDenominator { .. } => "ZeroDenominator",
            DiivError::RankDeficient { .. } => "RankDeficient",
            DiivError::RelevanceViolated { .. } => "RelevanceViolated",
            DiivError::InvalidInput(_) => "InvalidInput",
        }
    }

    /// True for errors caused by malformed input rather than by the estimator.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            DiivError::NonBinary { .. }
                | DiivError::MissingColumn(_)
                | DiivError::LengthMismatch { .. }
                | DiivError::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DiivError>;

/// Non-fatal diagnostics attached to results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    /// Sample shares contradict the opposing-shifts ordering.
    OrderingViolation,
    /// First-stage F below the weak-instrument threshold.
    WeakContrast { first_stage_f: f64 },
    /// Frames carry different assignment variance, so the XOR regression
    /// weights the two arms unequally and departs from the cell-mean ratio.
    UnbalancedFrames,
}

impl Warning {
    pub fn tag(&self) -> &'static str {
        match self {
            Warning::OrderingViolation => "OrderingViolation",
            Warning::WeakContrast { .. } => "WeakContrast",
            Warning::UnbalancedFrames => "UnbalancedFrames",
        }
    }
}
