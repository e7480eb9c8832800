use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::codec::{split_head, LatentCodec, LOG_VAR_CLAMP};
use super::mlp::MlpParams;
use crate::dpmm::{DpmmModel, Responsibilities};
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Gradients with the same layout as a [`LatentCodec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecGrads {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
}

impl CodecGrads {
    pub fn zeros_like(codec: &LatentCodec) -> Self {
        Self {
            encoder: codec.encoder.zeros_like(),
            decoder: codec.decoder.zeros_like(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for t in self.encoder.tensors().into_iter().chain(self.decoder.tensors()) {
            m = t.iter().fold(m, |a, v| a.max(v.abs()));
        }
        m
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.tensors();
        t.extend(self.decoder.tensors());
        t
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.decoder.tensors_mut());
        t
    }
}

fn check_inputs(codec: &LatentCodec, x: &Matrix, gamma: &Responsibilities, model: &DpmmModel, eps: &[Matrix]) -> Result<()> {
    if x.cols() != codec.data_dim {
        return Err(Error::shape(format!("data has {} columns, codec expects {}", x.cols(), codec.data_dim)));
    }
    if gamma.n() != x.rows() {
        return Err(Error::shape(format!("{} responsibility rows for {} data rows", gamma.n(), x.rows())));
    }
    if gamma.k() != model.len() {
        return Err(Error::shape(format!("{} responsibility columns for {} clusters", gamma.k(), model.len())));
    }
    if model.dim() != codec.latent_dim {
        return Err(Error::shape("model and codec latent dimensions differ"));
    }
    if eps.is_empty() {
        return Err(Error::shape("at least one noise draw is required"));
    }
    for e in eps {
        if e.shape() != (x.rows(), codec.latent_dim) {
            return Err(Error::shape(format!("noise draw has shape {:?}", e.shape())));
        }
    }
    Ok(())
}

/// Codec objective: mixture fit of the encoder means, Monte Carlo
/// reconstruction log-density, and encoder entropy.
///
/// `eps` holds one standard-normal matrix (`n × D`) per Monte Carlo draw.
pub fn elbo_vae(codec: &LatentCodec, x: &Matrix, gamma: &Responsibilities, model: &DpmmModel, eps: &[Matrix]) -> Result<f64> {
    Ok(evaluate(codec, x, gamma, model, eps, false)?.0)
}

/// Objective value and its gradient with respect to every codec parameter,
/// holding `eps` fixed.
pub fn grad_elbo_vae(
    codec: &LatentCodec,
    x: &Matrix,
    gamma: &Responsibilities,
    model: &DpmmModel,
    eps: &[Matrix],
) -> Result<(f64, CodecGrads)> {
    let (value, grads) = evaluate(codec, x, gamma, model, eps, true)?;
    Ok((value, grads.expect("gradients requested")))
}

fn evaluate(
    codec: &LatentCodec,
    x: &Matrix,
    gamma: &Responsibilities,
    model: &DpmmModel,
    eps: &[Matrix],
    want_grad: bool,
) -> Result<(f64, Option<CodecGrads>)> {
    check_inputs(codec, x, gamma, model, eps)?;
    let n = x.rows();
    let latent = codec.latent_dim;
    let data_dim = codec.data_dim;
    let draws = eps.len() as f64;

    let enc_acts = codec.encoder.forward_cached(x)?;
    let enc_out = enc_acts.last().expect("encoder output");
    let (mu, log_var) = split_head(enc_out, latent);
    let mut d_enc = Matrix::zeros(n, 2 * latent);
    let mut grads = want_grad.then(|| CodecGrads::zeros_like(codec));

    // −½ Σₖ νₖ Σₙ γₙₖ (ẑₙ − mₖ)ᵀ Wₖ (ẑₙ − mₖ), the two mixture summands combined
    let mut value = 0.0;
    for (k, c) in model.posteriors().enumerate() {
        let mut diff = vec![0.0; latent];
        for i in 0..n {
            let g = gamma.row(i)[k];
            if g == 0.0 {
                continue;
            }
            for (d, (a, b)) in diff.iter_mut().zip(mu.row(i).iter().zip(&c.m)) {
                *d = a - b;
            }
            let w_diff = c.w_inv_chol.solve(&diff)?;
            let quad: f64 = w_diff.iter().zip(&diff).map(|(a, b)| a * b).sum();
            value -= 0.5 * c.nu * g * quad;
            if want_grad {
                let row = d_enc.row_mut(i);
                for j in 0..latent {
                    row[j] -= c.nu * g * w_diff[j];
                }
            }
        }
    }

    // reconstruction
    for e in eps {
        let mut z = Matrix::zeros(n, latent);
        for i in 0..n {
            for j in 0..latent {
                z[(i, j)] = mu[(i, j)] + e[(i, j)] * (0.5 * log_var[(i, j)]).exp();
            }
        }
        let dec_acts = codec.decoder.forward_cached(&z)?;
        let dec_out = dec_acts.last().expect("decoder output");
        let mut d_dec = Matrix::zeros(n, 2 * data_dim);
        let mut rec = 0.0;
        for i in 0..n {
            let out = dec_out.row(i);
            let xi = x.row(i);
            for j in 0..data_dim {
                let raw_lv = out[data_dim + j];
                let lv = raw_lv.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP);
                let inv_var = (-lv).exp();
                let resid = xi[j] - out[j];
                rec += lv + resid * resid * inv_var;
                if want_grad {
                    d_dec[(i, j)] = resid * inv_var / draws;
                    if raw_lv.abs() < LOG_VAR_CLAMP {
                        d_dec[(i, data_dim + j)] = -0.5 * (1.0 - resid * resid * inv_var) / draws;
                    }
                }
            }
        }
        value -= 0.5 * rec / draws;

        if let Some(g) = grads.as_mut() {
            let dz = codec.decoder.backward(&dec_acts, &d_dec, &mut g.decoder);
            for i in 0..n {
                let raw = &enc_out.row(i)[latent..];
                for j in 0..latent {
                    let dzij = dz[(i, j)];
                    d_enc[(i, j)] += dzij;
                    if raw[j].abs() < LOG_VAR_CLAMP {
                        d_enc[(i, latent + j)] += dzij * e[(i, j)] * 0.5 * (0.5 * log_var[(i, j)]).exp();
                    }
                }
            }
        }
    }

    // ½ log det(2πe Σ), summed over rows
    let log_2pie = (2.0 * PI * std::f64::consts::E).ln();
    for i in 0..n {
        let raw = &enc_out.row(i)[latent..];
        for j in 0..latent {
            value += 0.5 * (log_2pie + log_var[(i, j)]);
            if want_grad && raw[j].abs() < LOG_VAR_CLAMP {
                d_enc[(i, latent + j)] += 0.5;
            }
        }
    }

    if !value.is_finite() {
        return Err(Error::numeric("codec objective"));
    }
    if let Some(g) = grads.as_mut() {
        codec.encoder.backward(&enc_acts, &d_enc, &mut g.encoder);
    }
    Ok((value, grads))
}
