//! Ranking evaluation: embedding index, two-pass scoring, filtered metrics.

pub mod evaluate;
pub mod index;
pub mod metrics;
pub mod rank;

pub use evaluate::{
    eval_reports, evaluate, write_eval_reports, write_query_dump, EvalConfig, EvalOutcome,
    EvalReport, EvalSplit, QueryRecord,
};
pub use index::EmbeddingIndex;
pub use metrics::{filtered_rank, metrics, RankingMetrics};
pub use rank::{ensemble, sp1_scores, sp2_rescore, top_k, Query, Scorer};
