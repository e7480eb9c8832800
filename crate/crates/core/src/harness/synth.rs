use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Cluster centers on a centered grid with spacing `separation`, so every
/// pair is at least `separation` apart.
pub fn gmm_centers(k: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut side = 1usize;
    while side.checked_pow(d as u32).is_some_and(|c| c < k) {
        side += 1;
    }
    let mut centers: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut rest = i;
            (0..d)
                .map(|_| {
                    let digit = rest % side;
                    rest /= side;
                    digit as f64 * separation
                })
                .collect()
        })
        .collect();
    for j in 0..d {
        let mean = centers.iter().map(|c| c[j]).sum::<f64>() / k as f64;
        centers.iter_mut().for_each(|c| c[j] -= mean);
    }
    centers
}

/// `n` points from `k` unit-variance Gaussians with balanced, shuffled labels.
pub fn make_gmm(seed: u64, k: usize, d: usize, n: usize, separation: f64) -> Result<(Matrix, Vec<usize>)> {
    if k == 0 || d == 0 || n == 0 {
        return Err(Error::domain("make_gmm needs k, d and n of at least 1"));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::domain(format!("separation must be non-negative, got {separation}")));
    }
    let centers = gmm_centers(k, d, separation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut x = Matrix::zeros(n, d);
    for (i, &l) in labels.iter().enumerate() {
        for (v, c) in x.row_mut(i).iter_mut().zip(&centers[l]) {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v = c + e;
        }
    }
    Ok((x, labels))
}
