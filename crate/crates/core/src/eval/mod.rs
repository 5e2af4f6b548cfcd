//! Evaluation: Recall@K retrieval over a deduplicated item index, mined-pair
//! quality against synthetic topic labels, and a finite-difference check of
//! the analytic contrastive gradients.

mod gradcheck;
mod quality;
mod retrieval;

pub use gradcheck::{
    check_batch, gradient_check, relative_error, GradCheckConfig, GradCheckReport, TrialResult,
    REL_ERROR_FLOOR,
};
pub use quality::{pair_quality, AnnotationQualityReport};
pub use retrieval::{
    build_index, evaluate_split, queries_for, recall_at_k, EvalReport, RetrievalIndex,
};

/// Cutoffs reported by every retrieval evaluation.
pub const RECALL_KS: [usize; 3] = [5, 10, 20];
