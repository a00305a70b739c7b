//! Retrieval quality: precision/recall, AP, MAP and cross-validation.

mod cv;
mod metrics;

pub use cv::{cross_validate, fold_assignment, score_fold, Corpus, CvOptions, Embedder, EvalReport, QueryScore, Trainer};
pub use metrics::{
    average_precision, mean_ap, output_sizes, pr_curve_export, pr_curve_import, pr_from_csv, pr_to_csv,
    precision_recall, PrPoint, RelevanceJudgment,
};
