//! Streaming nonparametric clustering in a learned latent space.
//!
//! A small Gaussian autoencoder maps data to a low-dimensional latent
//! space where a truncated Dirichlet-process mixture of Normal–Wishart
//! components is fit by coordinate-ascent variational inference. Data
//! arrives as a sequence of streams; each stream's posterior becomes the
//! prior for the next, birth and merge moves adapt the number of
//! components, and samples generated from the current model are replayed
//! into new streams to keep the codec from forgetting earlier clusters.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dpmm;
pub mod error;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod replay;
pub mod stream;
pub mod vae;

pub use dpmm::{DpmmModel, NWPrior, Responsibilities, SuffStats};
pub use error::{Error, Result};
pub use math::Matrix;
pub use vae::{AdamState, LatentCodec};
