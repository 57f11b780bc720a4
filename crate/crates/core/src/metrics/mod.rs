//! Evaluation metrics: SRV record metrics, top-1 gating, with-constraint
//! predicate accuracy, Recall@K and multi-label mAP.

mod ranking;
mod records;
mod report;
mod srv;

pub use ranking::{
    all_triplets, average_precision, frame_recall, multilabel_map, recall_at_k, verb_accuracy_with_constraint,
    with_constraint_triplets, FrameTriplets, MapReport, PairPrediction, RecallReport, ScoredTriplet,
};
pub use records::{build_records, evaluate, EvalRecords, EvalSetting};
pub use report::{MetricReport, TableRow};
pub use srv::{apply_top1_gating, srv_metrics, SingleRoleValueTwo, SrvOptions, SrvRecord};
