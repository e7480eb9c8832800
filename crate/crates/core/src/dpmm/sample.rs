use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::model::DpmmModel;
use crate::error::Result;
use crate::math::Matrix;
use crate::vae::LatentCodec;

/// Ancestral latent draws: a component from the expected stick weights, then
/// `z ~ N(mₖ, (νₖ Wₖ)⁻¹)`. Returns the points and their components.
pub fn sample_latent(model: &DpmmModel, n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let d = model.dim();
    let mut z = Matrix::zeros(n, d);
    if n == 0 {
        return (z, Vec::new());
    }
    let weights = model.expected_weights();
    let pick = WeightedIndex::new(&weights).expect("stick weights are a probability vector");
    let mut ks = Vec::with_capacity(n);
    let mut e = vec![0.0; d];
    for i in 0..n {
        let k = pick.sample(rng);
        let post = &model.clusters[k].posterior;
        e.iter_mut().for_each(|v| *v = rng.sample::<f64, _>(StandardNormal));
        // W⁻¹ = L Lᵀ, so L e / √ν has covariance (ν W)⁻¹
        let l = post.w_inv_chol.lower();
        let scale = 1.0 / post.nu.sqrt();
        let row = z.row_mut(i);
        for r in 0..d {
            let s: f64 = (0..=r).map(|c| l[(r, c)] * e[c]).sum();
            row[r] = post.m[r] + scale * s;
        }
        ks.push(k);
    }
    (z, ks)
}

/// Ancestral samples in data space: latent draws pushed through the decoder mean.
pub fn sample_generative(model: &DpmmModel, codec: &LatentCodec, n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Ok(Matrix::zeros(0, codec.data_dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (z, _) = sample_latent(model, n, &mut rng);
    codec.decode_mean(&z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpmm::NWPrior;
    use crate::vae::{CodecConfig, CodecInit};

    fn identity_codec(d: usize) -> LatentCodec {
        let cfg = CodecConfig {
            hidden: vec![],
            init: CodecInit::Identity,
            ..CodecConfig::default()
        };
        LatentCodec::new(d, d, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn seeded_samples_repeat() {
        let model = DpmmModel::with_clusters(NWPrior::default_for_dim(2), 1.0, 5, 3).unwrap();
        let codec = identity_codec(2);
        let a = sample_generative(&model, &codec, 50, 11).unwrap();
        let b = sample_generative(&model, &codec, 50, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (50, 2));
        assert_eq!(sample_generative(&model, &codec, 0, 1).unwrap().shape(), (0, 2));
    }

    #[test]
    fn single_component_mean_is_centered() {
        let model = DpmmModel::new(NWPrior::default_for_dim(2), 1.0, 5).unwrap();
        let n = 10_000;
        let x = sample_generative(&model, &identity_codec(2), n, 5).unwrap();
        // prior component: covariance (ν W)⁻¹ = I / 4, σ = 1/2
        let sigma = 0.5;
        for j in 0..2 {
            let mean: f64 = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt(), "coordinate {j}: {mean}");
        }
    }
}
