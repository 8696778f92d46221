//! End-to-end solutions built from the other modules: per-flow traffic
//! classification, SQLi/XSS payload detection and cluster-assisted
//! labeling, plus the synthetic corpora they are evaluated on.

mod apps;
pub mod bench;
mod classify;
pub mod corpus;
mod cv;
mod detect;
mod label;
mod stream;

use thiserror::Error;

use crate::features::FeatureError;
use crate::flow::FlowKey;
use crate::forest::ForestError;
use crate::packet_io::SynthError;

pub use apps::{
    app_trace, chat, dns, five_apps, labeled_rows, read_truth, rows_to_dataset, two_apps, video, voip, web, write_truth,
    AppSpec, AppTrace,
};
pub use classify::{classify_sharded, classify_stream, ClassifyResult, Classifier};
pub use cv::{cross_validate, detect_cv, stratified_folds, CvReport, DetectCv};
pub use detect::{
    bundled_model, decide, detect_payload, DetectResult, Detector, Profiles, Verdict, DEFAULT_THRESHOLD, DETECT_SCHEMA,
};
pub use label::{
    apply_labels, kmeans, label_helper, parse_assignments, read_report, silhouette, Cluster, ClusterReport, ClusterTip,
    DEFAULT_K_RANGE, DISCARD,
};
pub use stream::{snapshots, FlowSnapshot, SnapshotStream, StreamConfig, Trigger, DEFAULT_MIN_PKTS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ForestError),
    #[error("flow {key}: {source}")]
    Feature { key: FlowKey, source: FeatureError },
    #[error("flow {key}: {source}")]
    Predict { key: FlowKey, source: Box<ForestError> },
    #[error("need at least {need} flows with features, found {have}")]
    TooFewFlows { need: usize, have: usize },
    #[error("cluster {0} has no label assignment")]
    UnassignedCluster(usize),
    #[error("assignment names cluster {0}, which the report does not have")]
    UnknownCluster(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
