use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dpmm::SuffStats;
use crate::error::{Error, Result};

/// Three levels of cached sufficient statistics: per mini-batch of the live
/// stream, the live stream, and everything finalized so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatScope {
    dim: usize,
    live: Option<usize>,
    minibatch_stats: BTreeMap<usize, SuffStats>,
    stream_stats: SuffStats,
    overall_stats: SuffStats,
}

impl StatScope {
    pub fn new(k: usize, dim: usize) -> Self {
        Self {
            dim,
            live: None,
            minibatch_stats: BTreeMap::new(),
            stream_stats: SuffStats::zeros(k, dim),
            overall_stats: SuffStats::zeros(k, dim),
        }
    }

    pub fn k(&self) -> usize {
        self.overall_stats.k()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stream currently accepting mini-batch summaries.
    pub fn live_stream(&self) -> Option<usize> {
        self.live
    }

    pub fn stream_stats(&self) -> &SuffStats {
        &self.stream_stats
    }

    pub fn overall_stats(&self) -> &SuffStats {
        &self.overall_stats
    }

    pub fn minibatch_stats(&self, i: usize) -> Option<&SuffStats> {
        self.minibatch_stats.get(&i)
    }

    pub fn minibatch_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.minibatch_stats.keys().copied()
    }

    /// Starts collecting statistics for stream `j`.
    pub fn open_stream(&mut self, j: usize) -> Result<()> {
        if let Some(live) = self.live {
            return Err(Error::State(format!("stream {live} is still open")));
        }
        self.live = Some(j);
        self.minibatch_stats.clear();
        self.stream_stats = SuffStats::zeros(self.k(), self.dim);
        Ok(())
    }

    /// Replaces the summary of mini-batch `i` of stream `j`, keeping the
    /// stream total consistent: subtract the old summary, store, add the new one.
    pub fn stats_cycle(&mut self, j: usize, i: usize, new_batch_stats: SuffStats) -> Result<()> {
        if self.live != Some(j) {
            return Err(Error::State(format!("stream {j} is not open")));
        }
        if new_batch_stats.k() != self.k() || new_batch_stats.dim != self.dim {
            return Err(Error::shape(format!(
                "batch statistics have {} clusters of dim {}, scope has {} of dim {}",
                new_batch_stats.k(),
                new_batch_stats.dim,
                self.k(),
                self.dim
            )));
        }
        if let Some(old) = self.minibatch_stats.get(&i) {
            self.stream_stats.sub(old);
        }
        self.stream_stats.add(&new_batch_stats);
        self.minibatch_stats.insert(i, new_batch_stats);
        Ok(())
    }

    /// Folds the live stream into the overall statistics and clears the
    /// per-stream slots.
    pub fn finalize_stream(&mut self) -> Result<()> {
        if self.live.take().is_none() {
            return Err(Error::State("no open stream to finalize".into()));
        }
        self.overall_stats.add(&self.stream_stats);
        self.minibatch_stats.clear();
        self.stream_stats = SuffStats::zeros(self.k(), self.dim);
        Ok(())
    }

    pub(crate) fn append_clusters(&mut self, count: usize) {
        for s in self.all_mut() {
            s.append_empty(count);
        }
    }

    pub(crate) fn merge_clusters(&mut self, i: usize, j: usize) {
        for s in self.all_mut() {
            s.merge_clusters(i, j);
        }
    }

    pub(crate) fn remove_cluster(&mut self, j: usize) {
        for s in self.all_mut() {
            s.remove_cluster(j);
        }
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut SuffStats> {
        self.minibatch_stats
            .values_mut()
            .chain([&mut self.stream_stats, &mut self.overall_stats])
    }
}
