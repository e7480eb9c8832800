use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpParams};
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Bound applied to every log-variance head.
pub const LOG_VAR_CLAMP: f64 = 10.0;

/// How fresh codec weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecInit {
    #[default]
    Glorot,
    /// Linear encoder/decoder whose mean heads start as the coordinate
    /// projection and its embedding. Needs no hidden layers and `d ≥ D`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: CodecInit,
    /// Initial bias of both log-variance heads.
    pub log_var_bias: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            activation: Activation::Tanh,
            init: CodecInit::Glorot,
            log_var_bias: 0.0,
        }
    }
}

/// Gaussian encoder `x ↦ (μ, log σ²)` and Gaussian decoder `z ↦ (μₓ, log σₓ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCodec {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub latent_dim: usize,
    pub data_dim: usize,
}

impl LatentCodec {
    pub fn new<R: Rng + ?Sized>(data_dim: usize, latent_dim: usize, cfg: &CodecConfig, rng: &mut R) -> Result<Self> {
        if data_dim == 0 || latent_dim == 0 {
            return Err(Error::Config("codec dimensions must be positive".into()));
        }
        let mut enc_dims = vec![data_dim];
        enc_dims.extend(&cfg.hidden);
        enc_dims.push(2 * latent_dim);
        let mut dec_dims = vec![latent_dim];
        dec_dims.extend(cfg.hidden.iter().rev());
        dec_dims.push(2 * data_dim);

        let (mut encoder, mut decoder) = match cfg.init {
            CodecInit::Glorot => (
                MlpParams::glorot(&enc_dims, cfg.activation, rng),
                MlpParams::glorot(&dec_dims, cfg.activation, rng),
            ),
            CodecInit::Identity => {
                if !cfg.hidden.is_empty() || data_dim < latent_dim {
                    return Err(Error::Config(
                        "identity codec init needs no hidden layers and data_dim >= latent_dim".into(),
                    ));
                }
                let mut enc = MlpParams::zeros(&enc_dims, cfg.activation);
                let mut dec = MlpParams::zeros(&dec_dims, cfg.activation);
                for i in 0..latent_dim {
                    enc.layers[0].weights[(i, i)] = 1.0;
                    dec.layers[0].weights[(i, i)] = 1.0;
                }
                (enc, dec)
            }
        };
        let enc_head = encoder.layers.last_mut().expect("encoder has a head");
        enc_head.biases[latent_dim..].iter_mut().for_each(|b| *b = cfg.log_var_bias);
        let dec_head = decoder.layers.last_mut().expect("decoder has a head");
        dec_head.biases[data_dim..].iter_mut().for_each(|b| *b = cfg.log_var_bias);

        Ok(Self {
            encoder,
            decoder,
            latent_dim,
            data_dim,
        })
    }

    /// Mean and clamped log-variance of `q(z|x)`.
    pub fn encode(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        if x.cols() != self.data_dim {
            return Err(Error::shape(format!(
                "codec expects {} data columns, got {}",
                self.data_dim,
                x.cols()
            )));
        }
        let out = self.encoder.forward(x)?;
        Ok(split_head(&out, self.latent_dim))
    }

    /// Encoder means only.
    pub fn encode_mean(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.encode(x)?.0)
    }

    /// Mean and clamped log-variance of `p(x|z)`.
    pub fn decode(&self, z: &Matrix) -> Result<(Matrix, Matrix)> {
        if z.cols() != self.latent_dim {
            return Err(Error::shape(format!(
                "codec expects {} latent columns, got {}",
                self.latent_dim,
                z.cols()
            )));
        }
        let out = self.decoder.forward(z)?;
        Ok(split_head(&out, self.data_dim))
    }

    pub fn decode_mean(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.decode(z)?.0)
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.decoder.tensors_mut());
        t
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.tensors();
        t.extend(self.decoder.tensors());
        t
    }
}

/// Splits a `2w`-wide head into its mean and clamped log-variance halves.
pub(crate) fn split_head(out: &Matrix, width: usize) -> (Matrix, Matrix) {
    let n = out.rows();
    let mut mean = Matrix::zeros(n, width);
    let mut log_var = Matrix::zeros(n, width);
    for r in 0..n {
        let row = out.row(r);
        mean.row_mut(r).copy_from_slice(&row[..width]);
        for (o, v) in log_var.row_mut(r).iter_mut().zip(&row[width..]) {
            *o = v.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP);
        }
    }
    (mean, log_var)
}

/// `z = μ + ε · exp(log σ² / 2)`, element-wise.
pub fn reparameterize(mu: &Matrix, log_var: &Matrix, eps: &Matrix) -> Result<Matrix> {
    if mu.shape() != log_var.shape() || mu.shape() != eps.shape() {
        return Err(Error::shape(format!(
            "reparameterize shapes differ: mu {:?}, log_var {:?}, eps {:?}",
            mu.shape(),
            log_var.shape(),
            eps.shape()
        )));
    }
    let data = mu
        .as_slice()
        .iter()
        .zip(log_var.as_slice())
        .zip(eps.as_slice())
        .map(|((m, lv), e)| m + e * (0.5 * lv).exp())
        .collect();
    Matrix::from_vec(mu.rows(), mu.cols(), data)
}
