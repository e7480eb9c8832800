//! Data ingestion, synthetic data, configuration, checkpoints and the
//! experiment protocols built on the streaming engine.

mod checkpoint;
mod config;
mod data;
mod protocol;
mod report;
mod synth;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{PriorConfig, ProtocolConfig, ProtocolKind, RunConfig};
pub use data::{load_dataset, load_labels, read_dataset, read_labels, save_dataset, write_dataset, Dataset};
pub use protocol::{assign_rows, initial_ledger, run_protocol, stream_config, Progress, ProtocolRun};
pub use report::{
    ClusterRecord, DataInfo, ForgettingRecord, NoveltySection, RunReport, StreamRole, StreamSection, ValidationRecall,
    REPORT_FORMAT,
};
pub use synth::{gmm_centers, make_gmm};
