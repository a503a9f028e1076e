use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("study has no matched sets")]
    EmptyStudy,

    #[error("set `{set_id}` has {count} treated units; exactly one is required")]
    TreatedCount { set_id: String, count: usize },

    #[error("set `{set_id}` has {size} unit(s); at least two are required")]
    SetTooSmall { set_id: String, size: usize },

    #[error("duplicate set id `{0}`")]
    DuplicateSet(String),

    #[error("set `{set_id}` has a non-finite outcome")]
    NonFiniteOutcome { set_id: String },

    #[error("set `{set_id}` has outcome {value} outside {{0, 1}}")]
    NonBinaryOutcome { set_id: String, value: f64 },

    #[error("invalid score matrix: {0}")]
    InvalidScores(String),

    #[error("gamma must be a finite value >= 1, got {0}")]
    InvalidGamma(f64),

    #[error("alpha must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),

    #[error("rho must lie in [-1, 1], got {0}")]
    InvalidRho(f64),

    #[error("huber scale is zero: every within-set outcome difference is zero")]
    ZeroScale,

    #[error("total null variance is zero; the statistic is degenerate")]
    ZeroVariance,

    #[error("sign-score weights need at most two distinct scores per set; set {set} has {distinct}")]
    NotSignScore { set: usize, distinct: usize },

    #[error("the u868 weighted rank scores are not built in; supply a custom scorer")]
    MissingScorer,

    #[error("enumeration needs {size} evaluations, above the limit of {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
