use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scope::StatScope;
use crate::dpmm::{DpmmModel, NWPrior, StickPrior};
use crate::error::{Error, Result};
use crate::vae::{AdamState, LatentCodec};

/// One record per inner sweep of the stream loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub stream: usize,
    pub pass: usize,
    pub batch: usize,
    pub sweep: usize,
    pub elbo: f64,
    pub clusters: usize,
    pub births: usize,
    pub merges: usize,
    pub pruned: usize,
}

/// Everything carried from one data stream to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamLedger {
    pub model: DpmmModel,
    pub codec: LatentCodec,
    pub adam: AdamState,
    pub scope: StatScope,
    /// Number of streams absorbed so far; also the id of the next stream.
    pub stream_index: usize,
    /// Run seed from which per-stream seeds are derived.
    pub seed: u64,
    pub rng: ChaCha8Rng,
    pub events: Vec<StreamEvent>,
}

impl StreamLedger {
    pub fn new(model: DpmmModel, codec: LatentCodec, adam: AdamState, seed: u64) -> Result<Self> {
        if model.dim() != codec.latent_dim {
            return Err(Error::shape(format!(
                "model dimension {} differs from codec latent dimension {}",
                model.dim(),
                codec.latent_dim
            )));
        }
        let scope = StatScope::new(model.len(), model.dim());
        Ok(Self {
            model,
            codec,
            adam,
            scope,
            stream_index: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            events: Vec::new(),
        })
    }

    /// Per-cluster priors the next stream starts from.
    pub fn prior_snapshot(&self) -> Vec<(NWPrior, StickPrior)> {
        self.model
            .clusters
            .iter()
            .map(|c| (c.prior.clone(), c.stick_prior))
            .collect()
    }

    pub(crate) fn append_clusters(&mut self, count: usize) {
        self.scope.append_clusters(count);
    }

    pub(crate) fn remove_cluster(&mut self, j: usize) {
        self.model.remove_cluster(j);
        self.scope.remove_cluster(j);
    }
}

/// Makes each cluster's posterior its prior for the next stream, stick
/// parameters included as pseudo-counts, and advances the stream index.
pub fn absorb_posterior_as_prior(ledger: &mut StreamLedger) -> Result<()> {
    if let Some(j) = ledger.scope.live_stream() {
        return Err(Error::State(format!("stream {j} must be finalized before absorption")));
    }
    ledger.model.absorb_posteriors();
    ledger.stream_index += 1;
    Ok(())
}

/// Seed for stream-scoped randomness, distinct per (run seed, stream, purpose).
pub(crate) fn derive_seed(seed: u64, stream: usize, purpose: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut x = seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
