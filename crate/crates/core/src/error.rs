use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty control set: no never-treated units")]
    EmptyControlSet,
    #[error("nothing to estimate: no treated units")]
    NothingToEstimate,
    #[error("unit {unit}: treated label {label} outside 2..={n_periods}")]
    TreatedLabelOutOfRange { unit: usize, label: usize, n_periods: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at unit {unit}, period {period}")]
    NonFinite { unit: usize, period: usize },
    #[error("observed factor `{name}` has length {got}, expected {expected}")]
    ObservedFactorLength { name: String, expected: usize, got: usize },
    #[error("pre-treatment window has {available} periods, need at least {required}")]
    InsufficientPreWindow { available: usize, required: usize },
    #[error("rank-deficient design: effective rank {rank} of {columns} columns (condition {condition:.3e})")]
    RankDeficient { rank: usize, columns: usize, condition: f64 },
    #[error("factor proxies are collinear over the pre-treatment window: rank {rank} of {columns} (condition {condition:.3e})")]
    SingularFactorGram { rank: usize, columns: usize, condition: f64 },
    #[error("defactored covariate moment matrix is singular: rank {rank} of {columns} (condition {condition:.3e})")]
    SingularCovariateGram { rank: usize, columns: usize, condition: f64 },
    #[error("collinear regressors: {}", .columns.join(", "))]
    Collinear { columns: Vec<String> },
    #[error("degenerate group {group}: {size} unit(s), variance needs at least 2")]
    DegenerateGroup { group: usize, size: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for failures caused by numerical degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::SingularFactorGram { .. }
                | Error::SingularCovariateGram { .. }
                | Error::Collinear { .. }
        )
    }
}
