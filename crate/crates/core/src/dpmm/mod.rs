//! Truncated stick-breaking Dirichlet-process mixture with Normal–Wishart
//! components: variational family, coordinate updates, ancestral sampling
//! and the mixture ELBO.

mod elbo;
mod inference;
mod model;
mod sample;
mod stats;

pub use elbo::{elbo_dpmm, elbo_from_stats};
pub use inference::{
    expected_log_det_precision, expected_log_sticks, global_update, global_update_in_place, local_update,
    local_update_with_workers, stick_weights,
};
pub(crate) use inference::nw_posterior;
pub use model::{Cluster, ClusterPosterior, DpmmModel, NWPrior, StickPrior};
pub use sample::{sample_generative, sample_latent};
pub use stats::{compute_suffstats, ClusterStats, Responsibilities, SuffStats, GAMMA_FLOOR};
