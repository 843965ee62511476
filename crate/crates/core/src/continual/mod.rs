//! Task-by-task training of the detector and the Acc / AUC / forgetting
//! metrics used to score it.

mod metrics;
mod trainer;

pub use metrics::{accuracy, auc, average_forgetting, Metric, ScoreMatrix, SCORES_HEADER};
pub use trainer::{run_sequence, Ablation, TaskReport, TrainerConfig, TrainerState};
