use serde::{Deserialize, Serialize};

use super::config::{ProtocolKind, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, NoveltyScore};
use crate::stream::{StreamEvent, StreamSummary};

pub const REPORT_FORMAT: &str = "streamdp-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamRole {
    Train,
    Pretrain,
    Contamination,
}

/// One processed stream with its sweep-level event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSection {
    pub role: StreamRole,
    /// Class group the stream was drawn from.
    pub group: usize,
    pub classes: Vec<usize>,
    pub summary: StreamSummary,
    pub events: Vec<StreamEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInfo {
    pub rows: usize,
    pub dim: usize,
    pub labelled: bool,
}

/// Novel-class detection over the contamination streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltySection {
    /// First stream index that contained novel points.
    pub first_stream: usize,
    pub score: NoveltyScore,
    /// `born_stream` of each cluster mapped to the novel class, by cluster id.
    pub cluster_births: Vec<(u64, usize)>,
}

/// Recall of one class on its group's held-back validation rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecall {
    pub group: usize,
    pub class: usize,
    pub points: usize,
    pub recall: f64,
}

/// Squared distance between a class's mean input and the closest decoded
/// cluster mean among the clusters born in the class's group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRecord {
    pub group: usize,
    pub class: usize,
    pub error: f64,
    /// Clusters that were candidates for the minimum.
    pub clusters: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: u64,
    pub born_stream: usize,
    pub weight: f64,
    pub mean: Vec<f64>,
}

/// Machine-readable outcome of a protocol run. Contains no timings, so equal
/// inputs give byte-identical serializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub protocol: ProtocolKind,
    pub config: RunConfig,
    pub data: DataInfo,
    pub streams: Vec<StreamSection>,
    pub final_metrics: Option<MetricReport>,
    pub novelty: Option<NoveltySection>,
    pub validation: Vec<ValidationRecall>,
    pub forgetting: Vec<ForgettingRecord>,
    pub clusters: Vec<ClusterRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        serde_json::to_string_pretty(self).map_err(|e| Error::numeric(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Integrity(format!("unreadable report: {e}")))?;
        report.validate()?;
        Ok(report)
    }

    /// Checks the documented schema: known format, finite ELBO traces and
    /// metrics, and a metric block whenever labels were supplied.
    pub fn validate(&self) -> Result<()> {
        if self.format != REPORT_FORMAT {
            return Err(Error::Integrity(format!("unknown report format `{}`", self.format)));
        }
        for s in &self.streams {
            if s.events.iter().any(|e| !e.elbo.is_finite()) || s.summary.final_elbo.is_some_and(|e| !e.is_finite()) {
                return Err(Error::numeric(format!("non-finite ELBO in stream {}", s.summary.stream)));
            }
        }
        if self.data.labelled != self.final_metrics.is_some() {
            return Err(Error::Integrity("metric block must be present exactly when labels are".into()));
        }
        if let Some(m) = &self.final_metrics {
            if ![m.nmi, m.ari, m.homogeneity, m.v_measure].iter().all(|v| v.is_finite()) {
                return Err(Error::numeric("non-finite final metric"));
            }
        }
        let finite_records = self.validation.iter().all(|v| v.recall.is_finite())
            && self.forgetting.iter().all(|f| f.error.is_finite())
            && self.clusters.iter().all(|c| c.weight.is_finite() && c.mean.iter().all(|m| m.is_finite()));
        if !finite_records {
            return Err(Error::numeric("non-finite value in report records"));
        }
        Ok(())
    }
}
