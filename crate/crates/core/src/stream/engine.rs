use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::birth::{birth_move, BirthConfig};
use super::ledger::{absorb_posterior_as_prior, StreamEvent, StreamLedger};
use super::merge::{merge_move, MergeConfig};
use crate::dpmm::{compute_suffstats, elbo_from_stats, global_update_in_place, local_update_with_workers, Responsibilities};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::replay::{replay_augment_with_origin, ReplayConfig};
use crate::vae::{adam_step, grad_elbo_vae};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Mini-batches per stream.
    pub minibatches: usize,
    /// Codec optimizer steps per mini-batch.
    pub vae_steps: usize,
    /// Monte Carlo draws per codec objective evaluation.
    pub mc_samples: usize,
    /// Passes over each stream.
    pub passes: usize,
    /// Relative ELBO change below which the inner loop stops.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Clusters whose stream plus carried mass falls below this are dropped.
    pub prune_mass: f64,
    pub train_codec: bool,
    pub workers: usize,
    pub birth: BirthConfig,
    pub merge: MergeConfig,
    pub replay: ReplayConfig,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            minibatches: 2,
            vae_steps: 10,
            mc_samples: 1,
            passes: 1,
            tol: 1e-6,
            max_sweeps: 20,
            prune_mass: 1.0,
            train_codec: true,
            workers: 1,
            birth: BirthConfig::default(),
            merge: MergeConfig::default(),
            replay: ReplayConfig::default(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatches == 0 || self.passes == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("minibatches, passes and max_sweeps must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tolerance must be non-negative, got {}", self.tol)));
        }
        self.birth.validate()
    }
}

/// Outcome of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub stream: usize,
    pub rows: usize,
    pub replay_rows: usize,
    pub births: usize,
    pub merges: usize,
    pub pruned: usize,
    pub sweeps: usize,
    pub final_elbo: Option<f64>,
    pub clusters: usize,
}

struct Batch {
    x: Matrix,
    z: Matrix,
    gamma: Responsibilities,
}

/// Processes one data stream and absorbs its posterior as the next prior.
///
/// Replay rows are mixed in first. Each mini-batch visit encodes the batch,
/// runs mixture sweeps over the batches seen so far (with one birth attempt),
/// then trains the codec on the batch, re-encodes and sweeps again without
/// birth.
pub fn run_stream(ledger: &mut StreamLedger, stream: &Matrix, cfg: &StreamConfig) -> Result<StreamSummary> {
    cfg.validate()?;
    let j = ledger.stream_index;
    let mut summary = StreamSummary {
        stream: j,
        rows: stream.rows(),
        replay_rows: 0,
        births: 0,
        merges: 0,
        pruned: 0,
        sweeps: 0,
        final_elbo: None,
        clusters: ledger.model.len(),
    };
    if stream.rows() == 0 {
        ledger.stream_index += 1;
        return Ok(summary);
    }
    if stream.cols() != ledger.codec.data_dim {
        return Err(Error::shape(format!(
            "stream has {} columns, codec expects {}",
            stream.cols(),
            ledger.codec.data_dim
        )));
    }
    let (augmented, origin) = replay_augment_with_origin(ledger, stream, &cfg.replay, cfg.minibatches)?;
    summary.replay_rows = origin.iter().filter(|o| o.is_none()).count();

    let mut batches: Vec<Batch> = split_rows(augmented.rows(), cfg.minibatches)
        .into_iter()
        .map(|rows| {
            let x = augmented.select_rows(&rows);
            Batch {
                z: Matrix::zeros(x.rows(), ledger.model.dim()),
                gamma: Responsibilities::from_labels(&vec![0; x.rows()], ledger.model.len()),
                x,
            }
        })
        .collect();
    let m = batches.len();

    ledger.scope.open_stream(j)?;
    for pass in 0..cfg.passes {
        for i in 0..m {
            let visited = if pass == 0 { i + 1 } else { m };
            batches[i].z = ledger.codec.encode_mean(&batches[i].x)?;
            let at = Position { stream: j, pass, batch: i };
            let mut sweep = inner_loop(ledger, &mut batches[..visited], cfg, at, 0, cfg.birth.enabled, &mut summary)?;
            if cfg.train_codec && cfg.vae_steps > 0 {
                train_codec(ledger, &batches[i], cfg)?;
                for b in &mut batches[..visited] {
                    b.z = ledger.codec.encode_mean(&b.x)?;
                }
                sweep = inner_loop(ledger, &mut batches[..visited], cfg, at, sweep, false, &mut summary)?;
            }
            log::debug!("stream {j} pass {pass} batch {i}: {sweep} sweeps");
        }
        ledger.adam.end_epoch();
    }
    ledger.scope.finalize_stream()?;
    absorb_posterior_as_prior(ledger)?;
    summary.clusters = ledger.model.len();
    Ok(summary)
}

#[derive(Clone, Copy)]
struct Position {
    stream: usize,
    pass: usize,
    batch: usize,
}

/// Sweeps of local and global updates with optional birth, then merge and
/// prune, until nothing moves and the ELBO settles. Returns the next sweep
/// number.
fn inner_loop(
    ledger: &mut StreamLedger,
    batches: &mut [Batch],
    cfg: &StreamConfig,
    at: Position,
    first_sweep: usize,
    birth: bool,
    summary: &mut StreamSummary,
) -> Result<usize> {
    let mut previous: Option<f64> = None;
    let mut sweep = first_sweep;
    for round in 0..cfg.max_sweeps {
        refresh(ledger, batches, at.stream, cfg.workers)?;
        let mut births = 0;
        if birth && round == 0 {
            let (z, gamma) = concat(batches)?;
            births = birth_move(ledger, &z, &gamma, &cfg.birth, cfg.workers)?;
            if births > 0 {
                refresh(ledger, batches, at.stream, cfg.workers)?;
            }
        }
        let mut merges = 0;
        if cfg.merge.enabled {
            let mut gammas: Vec<Responsibilities> = batches.iter().map(|b| b.gamma.clone()).collect();
            merges = merge_move(ledger, &mut gammas, &cfg.merge)?.len();
            for (b, g) in batches.iter_mut().zip(gammas) {
                b.gamma = g;
            }
        }
        let pruned = prune(ledger, batches, cfg.prune_mass);
        if pruned > 0 {
            refresh(ledger, batches, at.stream, cfg.workers)?;
        }

        let entropy: f64 = batches.iter().map(|b| b.gamma.entropy()).sum();
        let elbo = elbo_from_stats(&ledger.model, ledger.scope.stream_stats(), entropy).map_err(|e| match e {
            Error::Numeric { .. } => Error::numeric(format!(
                "mixture ELBO at stream {}, pass {}, batch {}, sweep {sweep} with {} clusters",
                at.stream,
                at.pass,
                at.batch,
                ledger.model.len()
            )),
            other => other,
        })?;
        ledger.events.push(StreamEvent {
            stream: at.stream,
            pass: at.pass,
            batch: at.batch,
            sweep,
            elbo,
            clusters: ledger.model.len(),
            births,
            merges,
            pruned,
        });
        summary.births += births;
        summary.merges += merges;
        summary.pruned += pruned;
        summary.sweeps += 1;
        summary.final_elbo = Some(elbo);
        sweep += 1;

        let moved = births + merges + pruned > 0;
        let converged = previous.is_some_and(|p| (elbo - p).abs() <= cfg.tol * p.abs().max(f64::MIN_POSITIVE));
        if !moved && converged {
            break;
        }
        previous = Some(elbo);
    }
    Ok(sweep)
}

/// Near-equal contiguous row ranges, never empty.
fn split_rows(n: usize, parts: usize) -> Vec<Vec<usize>> {
    let parts = parts.min(n).max(1);
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let rows = (start..start + len).collect();
            start += len;
            rows
        })
        .collect()
}

fn train_codec(ledger: &mut StreamLedger, batch: &Batch, cfg: &StreamConfig) -> Result<()> {
    let (n, latent) = (batch.x.rows(), ledger.codec.latent_dim);
    for _ in 0..cfg.vae_steps {
        let eps: Vec<Matrix> = (0..cfg.mc_samples)
            .map(|_| {
                let data = (0..n * latent).map(|_| StandardNormal.sample(&mut ledger.rng)).collect();
                Matrix::from_vec(n, latent, data)
            })
            .collect::<Result<_>>()?;
        let (_, grads) = grad_elbo_vae(&ledger.codec, &batch.x, &batch.gamma, &ledger.model, &eps)?;
        adam_step(&mut ledger.adam, &mut ledger.codec, &grads)?;
    }
    Ok(())
}

/// One memoized sweep: per batch, local step, statistic cycle, global step.
fn refresh(ledger: &mut StreamLedger, batches: &mut [Batch], j: usize, workers: usize) -> Result<()> {
    for (idx, b) in batches.iter_mut().enumerate() {
        b.gamma = local_update_with_workers(&b.z, &ledger.model, workers)?;
        ledger.scope.stats_cycle(j, idx, compute_suffstats(&b.z, &b.gamma)?)?;
        global_update_in_place(&mut ledger.model, ledger.scope.stream_stats())?;
    }
    Ok(())
}

fn concat(batches: &[Batch]) -> Result<(Matrix, Responsibilities)> {
    let z: Vec<&Matrix> = batches.iter().map(|b| &b.z).collect();
    let g: Vec<&Matrix> = batches.iter().map(|b| b.gamma.matrix()).collect();
    Ok((Matrix::vstack(&z)?, Responsibilities::new_unchecked(Matrix::vstack(&g)?)))
}

/// Removes clusters holding less than `threshold` of stream plus carried mass.
fn prune(ledger: &mut StreamLedger, batches: &mut [Batch], threshold: f64) -> usize {
    let mut removed = 0;
    for k in (0..ledger.model.len()).rev() {
        if ledger.model.len() == 1 {
            break;
        }
        let stream_mass = ledger.scope.stream_stats().clusters[k].n;
        let carried = (ledger.model.clusters[k].stick_prior.a - 1.0).max(0.0);
        if stream_mass + carried < threshold {
            ledger.remove_cluster(k);
            for b in batches.iter_mut() {
                b.gamma.remove_column(k);
            }
            removed += 1;
        }
    }
    removed
}
