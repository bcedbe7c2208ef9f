//! Downstream evaluation: classifiers on representations, demographic
//! parity and AUC, and the multi-trial experiment protocol.

mod downstream;
mod experiment;
mod metrics;

pub use downstream::{embed, train_downstream, DownstreamConfig, DownstreamModel, EmbedMode};
pub use experiment::{
    aggregate, aggregates_to_csv, reports_to_jsonl, run_experiment, AggregateRow,
    ExperimentResult, MethodKind, ProtocolConfig, TaskEval, TrialReport,
};
pub use metrics::{auc, delta_dp};

pub(crate) use downstream::bce_loss;
