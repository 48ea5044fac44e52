//! Consistency metrics between base and tuned models and their fleet-level
//! relation to accuracy.

mod consistency;
mod fleet;
mod metrics;
pub mod tables;

use crate::corpus::SuiteKind;

pub use consistency::{consistency_report, ConsistencyReport};
pub use fleet::{
    fleet_analysis, group_value, ols, partial_p_value, spearman_partial, FleetAnalysis, FleetPoint,
    PartialCorrelation, Regression, SkippedGroup, MIN_GROUP,
};
pub use metrics::{
    average_ranks, kl_divergence, pearson, rank_correlation, spearman, DEFAULT_KL_EPSILON,
};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("distributions cover different letter sets ({left} vs {right} choices)")]
    LetterMismatch { left: usize, right: usize },
    #[error("rank correlation needs at least 2 choices, got {0}")]
    TooFewChoices(usize),
    #[error("smoothing epsilon must be finite and non-negative, got {0}")]
    Epsilon(f64),
    #[error("item {id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<AnalysisError>,
    },
    #[error("base results are for {base}, tuned results for {tuned}")]
    SuiteMismatch { base: SuiteKind, tuned: SuiteKind },
    #[error("item sets differ; unmatched ids: {}", missing.join(", "))]
    ItemMismatch { missing: Vec<String> },
    #[error("partial correlation: {0}")]
    Partial(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl AnalysisError {
    pub(crate) fn for_item(self, id: &str) -> AnalysisError {
        AnalysisError::Item {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
