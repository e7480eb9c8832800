//! Gaussian encoder/decoder networks, the codec objective with its
//! analytic gradient, and the Adam optimizer.

mod adam;
mod codec;
mod mlp;
mod objective;
mod pretrain;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use codec::{reparameterize, CodecConfig, CodecInit, LatentCodec, LOG_VAR_CLAMP};
pub use mlp::{Activation, Dense, MlpParams};
pub use objective::{elbo_vae, grad_elbo_vae, CodecGrads};
pub use pretrain::{pretrain_codec, reconstruction_grad, PretrainConfig};
