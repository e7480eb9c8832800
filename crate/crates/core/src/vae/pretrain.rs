use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::codec::{LatentCodec, LOG_VAR_CLAMP};
use super::objective::CodecGrads;
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Autoencoder warm start for a fresh codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Adam steps; 0 disables pretraining.
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1e-2,
            batch_size: 256,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("pretraining needs a positive learning rate and batch size".into()));
        }
        Ok(())
    }
}

/// Gaussian reconstruction log-density of `x` decoded from the encoder
/// means, with its gradient. Encoder log-variance heads get no gradient.
pub fn reconstruction_grad(codec: &LatentCodec, x: &Matrix) -> Result<(f64, CodecGrads)> {
    if x.cols() != codec.data_dim {
        return Err(Error::shape(format!("data has {} columns, codec expects {}", x.cols(), codec.data_dim)));
    }
    let (n, latent, d) = (x.rows(), codec.latent_dim, codec.data_dim);
    let mut grads = CodecGrads::zeros_like(codec);
    let enc_acts = codec.encoder.forward_cached(x)?;
    let enc_out = enc_acts.last().expect("encoder output");
    let mut z = Matrix::zeros(n, latent);
    for i in 0..n {
        z.row_mut(i).copy_from_slice(&enc_out.row(i)[..latent]);
    }
    let dec_acts = codec.decoder.forward_cached(&z)?;
    let out = dec_acts.last().expect("decoder output");
    let mut d_dec = Matrix::zeros(n, 2 * d);
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..d {
            let raw = out[(i, d + j)];
            let lv = raw.clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP);
            let inv = (-lv).exp();
            let r = x[(i, j)] - out[(i, j)];
            value -= 0.5 * (lv + r * r * inv);
            d_dec[(i, j)] = r * inv;
            if raw.abs() < LOG_VAR_CLAMP {
                d_dec[(i, d + j)] = -0.5 * (1.0 - r * r * inv);
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::numeric("reconstruction objective"));
    }
    let dz = codec.decoder.backward(&dec_acts, &d_dec, &mut grads.decoder);
    let mut d_enc = Matrix::zeros(n, 2 * latent);
    for i in 0..n {
        d_enc.row_mut(i)[..latent].copy_from_slice(dz.row(i));
    }
    codec.encoder.backward(&enc_acts, &d_enc, &mut grads.encoder);
    Ok((value, grads))
}

/// Fits the codec as a deterministic autoencoder on random mini-batches of
/// `x`. Returns the per-row objective of the last step.
pub fn pretrain_codec<R: Rng + ?Sized>(
    codec: &mut LatentCodec,
    x: &Matrix,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if x.rows() == 0 || cfg.steps == 0 {
        return Ok(0.0);
    }
    let mut adam = AdamState::new(codec, cfg.learning_rate, 1.0);
    let size = cfg.batch_size.min(x.rows());
    let mut last = 0.0;
    for _ in 0..cfg.steps {
        let mut rows = index::sample(rng, x.rows(), size).into_vec();
        rows.sort_unstable();
        let batch = x.select_rows(&rows);
        let (value, mut grads) = reconstruction_grad(codec, &batch)?;
        grads.scale(1.0 / size as f64);
        adam_step(&mut adam, codec, &grads)?;
        last = value / size as f64;
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::CodecConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn nudge(codec: &mut LatentCodec, mut idx: usize, delta: f64) {
        let mut flat: Vec<&mut [f64]> = codec.encoder.tensors_mut();
        flat.extend(codec.decoder.tensors_mut());
        for t in flat {
            if idx < t.len() {
                t[idx] += delta;
                return;
            }
            idx -= t.len();
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = CodecConfig {
            hidden: vec![3],
            ..CodecConfig::default()
        };
        let mut codec = LatentCodec::new(3, 2, &cfg, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let (_, grads) = reconstruction_grad(&codec, &x).unwrap();
        let analytic: Vec<f64> = grads.tensors().concat();
        let h = 1e-5;
        let count = analytic.len();
        for p in 0..count {
            nudge(&mut codec, p, h);
            let up = reconstruction_grad(&codec, &x).unwrap().0;
            nudge(&mut codec, p, -2.0 * h);
            let down = reconstruction_grad(&codec, &x).unwrap().0;
            nudge(&mut codec, p, h);
            let fd = (up - down) / (2.0 * h);
            assert!((analytic[p] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "param {p}: {} vs {fd}", analytic[p]);
        }
    }

    #[test]
    fn pretraining_improves_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_vec(200, 4, (0..800).map(|i| ((i % 7) as f64 - 3.0) * 0.3).collect()).unwrap();
        let cfg = CodecConfig {
            hidden: vec![8],
            ..CodecConfig::default()
        };
        let mut codec = LatentCodec::new(4, 2, &cfg, &mut rng).unwrap();
        let before = reconstruction_grad(&codec, &x).unwrap().0;
        let p = PretrainConfig {
            steps: 200,
            ..PretrainConfig::default()
        };
        pretrain_codec(&mut codec, &x, &p, &mut rng).unwrap();
        let after = reconstruction_grad(&codec, &x).unwrap().0;
        assert!(after > before, "{before} -> {after}");
    }
}
