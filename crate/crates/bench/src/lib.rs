//! Shared fixtures for the kernel benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use streamdp::dpmm::{compute_suffstats, global_update, local_update};
use streamdp::harness::make_gmm;
use streamdp::vae::CodecConfig;
use streamdp::{DpmmModel, LatentCodec, Matrix, NWPrior, Responsibilities};

/// Latent points from a `k`-component mixture with a model fit to them.
pub fn fitted_mixture(n: usize, dim: usize, k: usize) -> (Matrix, DpmmModel) {
    let (z, labels) = make_gmm(1, k, dim, n, 6.0).expect("valid mixture");
    let gamma = Responsibilities::from_labels(&labels, k);
    let base = DpmmModel::with_clusters(NWPrior::default_for_dim(dim), 1.0, k, k).expect("valid model");
    let stats = compute_suffstats(&z, &gamma).expect("matching shapes");
    let model = global_update(&base, &stats).expect("valid update");
    (z, model)
}

/// A well-conditioned SPD matrix of size `n`.
pub fn spd(n: usize) -> Matrix {
    let mut a = Matrix::identity(n);
    a.scale(n as f64);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += 1.0 / (1.0 + (i as f64 - j as f64).abs());
        }
    }
    a
}

/// Codec, batch, responsibilities and noise for one objective evaluation.
pub struct CodecFixture {
    pub codec: LatentCodec,
    pub x: Matrix,
    pub gamma: Responsibilities,
    pub model: DpmmModel,
    pub eps: Vec<Matrix>,
}

pub fn codec_fixture(n: usize, data_dim: usize, latent_dim: usize, k: usize) -> CodecFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let codec = LatentCodec::new(data_dim, latent_dim, &CodecConfig::default(), &mut rng).expect("valid codec");
    let (x, _) = make_gmm(2, k, data_dim, n, 4.0).expect("valid mixture");
    let (z, model) = fitted_mixture(n, latent_dim, k);
    let gamma = local_update(&z, &model).expect("valid model");
    let (eps, _) = make_gmm(3, 1, latent_dim, n, 0.0).expect("valid noise");
    CodecFixture {
        codec,
        x,
        gamma,
        model,
        eps: vec![eps],
    }
}
