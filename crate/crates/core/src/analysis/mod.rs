//! Rankings, top-N tables, rank shifts, Spearman correlation, two-variable
//! PCA and anomaly screens.

pub mod anomaly;
pub mod correlation;
pub mod pca;
pub mod ranking;

use thiserror::Error;

pub use anomaly::{detect_temporal_anomalies, AnomalyDirection, AnomalyFlag, AnomalyRule};
pub use correlation::{average_ranks, pearson, spearman_rho, spearman_values};
pub use pca::{pca_two_vars, PcaMode, PcaResult};
pub use ranking::{
    mean_rank_shift, rank_entities, topn_distribution, GroupCounts, RankEntry, Ranking,
    TopNDistribution,
};

pub const DEFAULT_TOP_N: [usize; 5] = [50, 100, 200, 500, 1000];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("non-finite values for: {}", .0.join(", "))]
    NonFinite(Vec<String>),
    #[error("entity sets differ; only in first: [{}], only in second: [{}]", only_first.join(", "), only_second.join(", "))]
    MismatchedEntities {
        only_first: Vec<String>,
        only_second: Vec<String>,
    },
    #[error("entity `{0}` has no group")]
    MissingGroup(String),
    #[error("group `{group}` declares {items} items but has {ranked} ranked members")]
    GroupCount {
        group: String,
        items: usize,
        ranked: usize,
    },
    #[error("at least {needed} points are required, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("all points are identical")]
    AllIdentical,
    #[error("input lengths differ: {0} vs {1}")]
    Length(usize, usize),
}
