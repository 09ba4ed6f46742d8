//! EM training and split-merge structure search.

mod em;
mod estep;
mod merge;
mod split;
mod train;

pub use em::{batch_em, incremental_em, EmRun};
pub use estep::{e_step, e_step_corpus};
pub use merge::{merge_back, merge_pairs, score_merges, MergeCandidate, MergeKind, MergeScoring};
pub use split::{split_all, SplitRecord};
pub use train::{train, EmMode, StageReport, TrainConfig, TrainSchedule, TrainingReport};

#[cfg(test)]
mod tests;
