use std::collections::BTreeSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{ProtocolKind, RunConfig};
use super::data::Dataset;
use super::report::{
    ClusterRecord, DataInfo, ForgettingRecord, NoveltySection, RunReport, StreamRole, StreamSection, ValidationRecall,
    REPORT_FORMAT,
};
use crate::dpmm::{local_update_with_workers, DpmmModel, NWPrior};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::metrics::{metric_report, novelty_precision_recall};
use crate::stream::{derive_seed, run_stream, StreamConfig, StreamLedger};
use crate::vae::{pretrain_codec, AdamState, LatentCodec};

const CODEC_PURPOSE: u64 = 0x11;
const PLAN_PURPOSE: u64 = 0x12;
const PRETRAIN_PURPOSE: u64 = 0x13;

/// Position inside a protocol, stored in checkpoints taken between streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// Hash of the dataset the run was planned on.
    pub fingerprint: u64,
    pub next_stream: usize,
    pub sections: Vec<StreamSection>,
}

#[derive(Debug, Clone)]
struct PlannedStream {
    role: StreamRole,
    group: usize,
    classes: Vec<usize>,
    rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct Plan {
    streams: Vec<PlannedStream>,
    /// Classes of each group, in stream order.
    groups: Vec<Vec<usize>>,
    validation: Vec<usize>,
    novel: Option<usize>,
}

fn shuffled(mut rows: Vec<usize>, seed: u64, salt: usize) -> Vec<usize> {
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, salt, PLAN_PURPOSE)));
    rows
}

fn chunk(rows: &[usize], size: usize) -> Vec<Vec<usize>> {
    rows.chunks(size).map(<[usize]>::to_vec).collect()
}

fn rows_of(labels: &[usize], classes: &[usize]) -> Vec<usize> {
    (0..labels.len()).filter(|&i| classes.contains(&labels[i])).collect()
}

fn build_plan(cfg: &RunConfig, data: &Dataset) -> Result<Plan> {
    let p = &cfg.protocol;
    let mut plan = Plan::default();
    if p.kind == ProtocolKind::Batch {
        let classes = data
            .labels
            .as_ref()
            .map(|l| l.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
            .unwrap_or_default();
        plan.groups.push(Vec::clone(&classes));
        plan.streams.push(PlannedStream {
            role: StreamRole::Train,
            group: 0,
            classes,
            rows: shuffled((0..data.len()).collect(), cfg.seed, 0),
        });
        return Ok(plan);
    }
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config(format!("the {:?} protocol needs labelled data", p.kind)))?;
    let all: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

    if p.kind == ProtocolKind::DisjointStreams {
        for (g, classes) in all.chunks(p.classes_per_stream).enumerate() {
            let rows = shuffled(rows_of(labels, classes), cfg.seed, g);
            let held = (p.holdout_fraction * rows.len() as f64).floor() as usize;
            plan.validation.extend(&rows[..held]);
            for part in chunk(&rows[held..], cfg.stream_size) {
                plan.streams.push(PlannedStream {
                    role: StreamRole::Train,
                    group: g,
                    classes: classes.to_vec(),
                    rows: part,
                });
            }
            plan.groups.push(classes.to_vec());
        }
        return Ok(plan);
    }

    let novel = p.novel_class;
    if !all.contains(&novel) {
        return Err(Error::Config(format!("novel class {novel} does not occur in the data")));
    }
    let known: Vec<usize> = if p.pretrain_classes.is_empty() {
        all.iter().copied().filter(|&c| c != novel).collect()
    } else {
        p.pretrain_classes.clone()
    };
    if known.contains(&novel) {
        return Err(Error::Config(format!("novel class {novel} is also a pretraining class")));
    }
    if let Some(c) = known.iter().find(|c| !all.contains(c)) {
        return Err(Error::Config(format!("pretraining class {c} does not occur in the data")));
    }
    let known_rows = shuffled(rows_of(labels, &known), cfg.seed, 0);
    let half = known_rows.len().div_ceil(2);
    let (pretrain, mut pool) = (&known_rows[..half], &known_rows[half..]);
    for part in chunk(pretrain, cfg.stream_size) {
        plan.streams.push(PlannedStream {
            role: StreamRole::Pretrain,
            group: 0,
            classes: known.clone(),
            rows: part,
        });
    }
    let mut novel_pool = &shuffled(rows_of(labels, &[novel]), cfg.seed, 1)[..];
    let per_stream = ((p.fraction * cfg.stream_size as f64).round() as usize).min(cfg.stream_size);
    for s in 0..p.contamination_streams {
        let n_novel = per_stream.min(novel_pool.len());
        let n_known = (cfg.stream_size - per_stream).min(pool.len());
        let mut rows = novel_pool[..n_novel].to_vec();
        rows.extend(&pool[..n_known]);
        novel_pool = &novel_pool[n_novel..];
        pool = &pool[n_known..];
        let mut classes = known.clone();
        classes.push(novel);
        plan.streams.push(PlannedStream {
            role: StreamRole::Contamination,
            group: 1,
            classes,
            rows: shuffled(rows, cfg.seed, 2 + s),
        });
    }
    plan.groups = vec![known, vec![novel]];
    plan.novel = Some(novel);
    Ok(plan)
}

fn fingerprint(data: &Dataset) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(data.len() as u64);
    h.write_u64(data.dim() as u64);
    for v in data.x.as_slice() {
        h.write_u64(v.to_bits());
    }
    if let Some(l) = &data.labels {
        for &v in l {
            h.write_u64(v as u64);
        }
    }
    h.finish()
}

/// Stream settings for the protocol; batch mode takes its pass count from the
/// protocol and its mini-batch count from `batch_size`.
pub fn stream_config(cfg: &RunConfig, rows: usize) -> StreamConfig {
    let mut s = cfg.stream.clone();
    if cfg.protocol.kind == ProtocolKind::Batch {
        s.passes = cfg.protocol.passes;
        s.minibatches = rows.div_ceil(cfg.batch_size).max(1);
    }
    s
}

/// A ledger at stream zero: one cluster under the configured base prior and a
/// freshly initialized codec.
pub fn initial_ledger(cfg: &RunConfig, data_dim: usize) -> Result<StreamLedger> {
    let d = cfg.latent_dim;
    let w0 = Matrix::identity(d).scaled(cfg.prior.scale);
    let prior = NWPrior::new(vec![0.0; d], cfg.prior.beta0, d as f64 + cfg.prior.nu0_offset, &w0)
        .map_err(|e| Error::Config(format!("prior: {e}")))?;
    let model = DpmmModel::with_clusters(prior, cfg.alpha0, cfg.truncation_max, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, CODEC_PURPOSE));
    let codec = LatentCodec::new(data_dim, d, &cfg.codec, &mut rng)?;
    let adam = AdamState::new(&codec, cfg.learning_rate, cfg.lr_decay);
    StreamLedger::new(model, codec, adam, cfg.seed)
}

/// Hard cluster index of every row (already in model input scale).
pub fn assign_rows(ledger: &StreamLedger, x: &Matrix, workers: usize) -> Result<Vec<usize>> {
    if x.rows() == 0 {
        return Ok(Vec::new());
    }
    let z = ledger.codec.encode_mean(x)?;
    Ok(local_update_with_workers(&z, &ledger.model, workers)?.hard_assignments())
}

/// A protocol in progress. Streams run one at a time, and the run can be
/// checkpointed between any two of them.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    config: RunConfig,
    x: Matrix,
    labels: Option<Vec<usize>>,
    fingerprint: u64,
    plan: Plan,
    ledger: StreamLedger,
    sections: Vec<StreamSection>,
    next: usize,
}

impl ProtocolRun {
    pub fn new(config: RunConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::domain("dataset is empty"));
        }
        let plan = build_plan(&config, data)?;
        let mut ledger = initial_ledger(&config, data.dim())?;
        let x = data.x.scaled(config.input_scale);
        if let Some(first) = plan.streams.first() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0, PRETRAIN_PURPOSE));
            let fit = pretrain_codec(&mut ledger.codec, &x.select_rows(&first.rows), &config.pretrain, &mut rng)?;
            if config.pretrain.steps > 0 {
                log::info!("codec pretraining finished at {fit:.4} per row");
            }
        }
        Ok(Self {
            x,
            labels: data.labels.clone(),
            fingerprint: fingerprint(data),
            config,
            plan,
            ledger,
            sections: Vec::new(),
            next: 0,
        })
    }

    /// Continues from a checkpoint taken by [`ProtocolRun::checkpoint`] on the same data.
    pub fn resume(checkpoint: Checkpoint, data: &Dataset) -> Result<Self> {
        let progress = checkpoint
            .progress
            .ok_or_else(|| Error::State("checkpoint holds no protocol progress".into()))?;
        let mut run = Self::new(checkpoint.config, data)?;
        if progress.fingerprint != run.fingerprint {
            return Err(Error::domain("checkpoint was written for a different dataset"));
        }
        if progress.next_stream > run.plan.streams.len() || progress.sections.len() != progress.next_stream {
            return Err(Error::Integrity("checkpoint progress does not fit the protocol plan".into()));
        }
        if checkpoint.ledger.codec.data_dim != data.dim() {
            return Err(Error::shape("checkpoint codec does not match the data dimension"));
        }
        run.ledger = checkpoint.ledger;
        run.sections = progress.sections;
        run.next = progress.next_stream;
        Ok(run)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn ledger(&self) -> &StreamLedger {
        &self.ledger
    }

    pub fn total_streams(&self) -> usize {
        self.plan.streams.len()
    }

    pub fn completed_streams(&self) -> usize {
        self.next
    }

    pub fn is_finished(&self) -> bool {
        self.next == self.plan.streams.len()
    }

    /// Runs the next planned stream; `None` once the plan is exhausted.
    pub fn step(&mut self) -> Result<Option<&StreamSection>> {
        let Some(planned) = self.plan.streams.get(self.next) else {
            return Ok(None);
        };
        let x = self.x.select_rows(&planned.rows);
        let cfg = stream_config(&self.config, x.rows());
        let summary = run_stream(&mut self.ledger, &x, &cfg)?;
        log::info!(
            "stream {} ({:?}, {} rows): {} clusters, {} births, {} merges",
            summary.stream,
            planned.role,
            summary.rows,
            summary.clusters,
            summary.births,
            summary.merges
        );
        self.sections.push(StreamSection {
            role: planned.role,
            group: planned.group,
            classes: planned.classes.clone(),
            summary,
            events: std::mem::take(&mut self.ledger.events),
        });
        self.next += 1;
        Ok(self.sections.last())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step()?.is_some() {}
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            ledger: self.ledger.clone(),
            progress: Some(Progress {
                fingerprint: self.fingerprint,
                next_stream: self.next,
                sections: self.sections.clone(),
            }),
        }
    }

    /// Evaluates the final model and assembles the report.
    pub fn report(&self) -> Result<RunReport> {
        if !self.is_finished() {
            return Err(Error::State(format!(
                "{} of {} streams still to run",
                self.plan.streams.len() - self.next,
                self.plan.streams.len()
            )));
        }
        let workers = self.config.stream.workers;
        let train_rows: Vec<usize> = self.plan.streams.iter().flat_map(|s| s.rows.iter().copied()).collect();
        let ids: Vec<u64> = self.ledger.model.clusters.iter().map(|c| c.id).collect();

        let mut final_metrics = None;
        let mut novelty = None;
        let mut validation = Vec::new();
        let mut forgetting = Vec::new();
        if let Some(labels) = &self.labels {
            let pred = assign_rows(&self.ledger, &self.x.select_rows(&train_rows), workers)?;
            let truth: Vec<usize> = train_rows.iter().map(|&r| labels[r]).collect();
            final_metrics = Some(metric_report(&truth, &pred)?);

            if let Some(novel) = self.plan.novel {
                let contaminated: Vec<usize> = self
                    .plan
                    .streams
                    .iter()
                    .filter(|s| s.role == StreamRole::Contamination)
                    .flat_map(|s| s.rows.iter().copied())
                    .collect();
                let first_stream = self
                    .plan
                    .streams
                    .iter()
                    .position(|s| s.role == StreamRole::Contamination)
                    .unwrap_or(self.plan.streams.len());
                if contaminated.iter().any(|&r| labels[r] == novel) {
                    let pred = assign_rows(&self.ledger, &self.x.select_rows(&contaminated), workers)?;
                    let truth: Vec<usize> = contaminated.iter().map(|&r| labels[r]).collect();
                    let mut score = novelty_precision_recall(&truth, &pred, &[novel])?.remove(0);
                    let cluster_births = score
                        .clusters
                        .iter()
                        .map(|&k| (ids[k], self.ledger.model.clusters[k].born_stream))
                        .collect();
                    score.clusters = score.clusters.iter().map(|&k| ids[k] as usize).collect();
                    novelty = Some(NoveltySection {
                        first_stream,
                        score,
                        cluster_births,
                    });
                }
            }

            if !self.plan.validation.is_empty() {
                let pred = assign_rows(&self.ledger, &self.x.select_rows(&self.plan.validation), workers)?;
                let truth: Vec<usize> = self.plan.validation.iter().map(|&r| labels[r]).collect();
                for (g, classes) in self.plan.groups.iter().enumerate() {
                    for &class in classes {
                        let points = truth.iter().filter(|&&l| l == class).count();
                        if points == 0 {
                            continue;
                        }
                        let recall = novelty_precision_recall(&truth, &pred, &[class])?[0].recall;
                        validation.push(ValidationRecall {
                            group: g,
                            class,
                            points,
                            recall,
                        });
                    }
                }
            }

            if self.config.protocol.kind == ProtocolKind::DisjointStreams {
                forgetting = self.forgetting(labels)?;
            }
        }

        let weights = self.ledger.model.expected_weights();
        let clusters = self
            .ledger
            .model
            .clusters
            .iter()
            .zip(&weights)
            .map(|(c, &w)| ClusterRecord {
                id: c.id,
                born_stream: c.born_stream,
                weight: w,
                mean: c.posterior.m.clone(),
            })
            .collect();

        let report = RunReport {
            format: REPORT_FORMAT.to_string(),
            protocol: self.config.protocol.kind,
            config: self.config.clone(),
            data: DataInfo {
                rows: self.x.rows(),
                dim: self.x.cols(),
                labelled: self.labels.is_some(),
            },
            streams: self.sections.clone(),
            final_metrics,
            novelty,
            validation,
            forgetting,
            clusters,
        };
        report.validate()?;
        Ok(report)
    }

    fn forgetting(&self, labels: &[usize]) -> Result<Vec<ForgettingRecord>> {
        let model = &self.ledger.model;
        if model.is_empty() {
            return Ok(Vec::new());
        }
        let means = Matrix::from_rows(&model.clusters.iter().map(|c| c.posterior.m.clone()).collect::<Vec<_>>())?;
        let decoded = self.ledger.codec.decode_mean(&means)?;
        let mut out = Vec::new();
        for (g, classes) in self.plan.groups.iter().enumerate() {
            let streams: Vec<usize> = (0..self.plan.streams.len())
                .filter(|&s| self.plan.streams[s].group == g)
                .collect();
            let mut candidates: Vec<usize> = (0..model.len())
                .filter(|&k| streams.contains(&model.clusters[k].born_stream))
                .collect();
            if candidates.is_empty() {
                candidates = (0..model.len()).collect();
            }
            for &class in classes {
                let rows: Vec<usize> = streams
                    .iter()
                    .flat_map(|&s| self.plan.streams[s].rows.iter().copied())
                    .filter(|&r| labels[r] == class)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let mut centroid = vec![0.0; self.x.cols()];
                for &r in &rows {
                    centroid.iter_mut().zip(self.x.row(r)).for_each(|(c, v)| *c += v);
                }
                centroid.iter_mut().for_each(|c| *c /= rows.len() as f64);
                let error = candidates
                    .iter()
                    .map(|&k| {
                        decoded
                            .row(k)
                            .iter()
                            .zip(&centroid)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                out.push(ForgettingRecord {
                    group: g,
                    class,
                    error,
                    clusters: candidates.iter().map(|&k| model.clusters[k].id).collect(),
                });
            }
        }
        Ok(out)
    }
}

/// Runs a whole protocol and returns its report with a final checkpoint.
pub fn run_protocol(config: RunConfig, data: &Dataset) -> Result<(RunReport, Checkpoint)> {
    let mut run = ProtocolRun::new(config, data)?;
    run.run_to_end()?;
    Ok((run.report()?, run.checkpoint()))
}
