//! Generative replay: samples drawn from the current model are mixed into
//! each incoming stream so earlier clusters keep shaping the codec.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpmm::sample_generative;
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::stream::{derive_seed, StreamLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// The same seed for every stream.
    Fixed(u64),
    /// Derived from the run seed and the stream index.
    StreamDerived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub enabled: bool,
    pub samples_per_minibatch: usize,
    pub seed_policy: SeedPolicy,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            samples_per_minibatch: 100,
            seed_policy: SeedPolicy::StreamDerived,
        }
    }
}

const SAMPLE_PURPOSE: u64 = 1;
const SHUFFLE_PURPOSE: u64 = 2;

/// Prepends `minibatches · samples_per_minibatch` generated rows to `stream`
/// and shuffles. The first stream and disabled configs pass through unchanged.
pub fn replay_augment(ledger: &StreamLedger, stream: &Matrix, cfg: &ReplayConfig, minibatches: usize) -> Result<Matrix> {
    Ok(replay_augment_with_origin(ledger, stream, cfg, minibatches)?.0)
}

/// [`replay_augment`] that also reports, per output row, the index of the
/// source row in `stream`, or `None` for generated rows.
pub fn replay_augment_with_origin(
    ledger: &StreamLedger,
    stream: &Matrix,
    cfg: &ReplayConfig,
    minibatches: usize,
) -> Result<(Matrix, Vec<Option<usize>>)> {
    let n = stream.rows();
    let identity = || (stream.clone(), (0..n).map(Some).collect());
    let count = minibatches * cfg.samples_per_minibatch;
    if !cfg.enabled || ledger.stream_index == 0 || count == 0 {
        return Ok(identity());
    }
    if n > 0 && stream.cols() != ledger.codec.data_dim {
        return Err(Error::shape(format!(
            "stream has {} columns, codec expects {}",
            stream.cols(),
            ledger.codec.data_dim
        )));
    }
    let (sample_seed, shuffle_seed) = match cfg.seed_policy {
        SeedPolicy::Fixed(s) => (s, derive_seed(s, 0, SHUFFLE_PURPOSE)),
        SeedPolicy::StreamDerived => (
            derive_seed(ledger.seed, ledger.stream_index, SAMPLE_PURPOSE),
            derive_seed(ledger.seed, ledger.stream_index, SHUFFLE_PURPOSE),
        ),
    };
    let generated = sample_generative(&ledger.model, &ledger.codec, count, sample_seed)?;
    let stacked = if n == 0 { generated } else { Matrix::vstack(&[&generated, stream])? };
    let mut origin: Vec<Option<usize>> = (0..count).map(|_| None).chain((0..n).map(Some)).collect();
    let mut order: Vec<usize> = (0..stacked.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    let out = stacked.select_rows(&order);
    origin = order.iter().map(|&r| origin[r]).collect();
    Ok((out, origin))
}
