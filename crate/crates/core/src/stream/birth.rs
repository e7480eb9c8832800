use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ledger::StreamLedger;
use crate::dpmm::{compute_suffstats, global_update_in_place, local_update_with_workers, DpmmModel, Responsibilities};
use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirthConfig {
    pub enabled: bool,
    /// Points join a cluster's subsample when their responsibility exceeds this.
    pub collect_threshold: f64,
    /// Components of the fresh model fit to each subsample.
    pub k_prime: usize,
    pub subsample_cap: usize,
    /// Subsamples smaller than this produce no birth.
    pub min_subsample: usize,
    pub fit_iters: usize,
    /// Clusters with the largest stream mass that are tried per birth pass.
    pub max_targets: usize,
    /// Fitted components lighter than this many points are not appended.
    pub min_component_mass: f64,
}

impl Default for BirthConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            collect_threshold: 0.1,
            k_prime: 10,
            subsample_cap: 500,
            min_subsample: 50,
            fit_iters: 50,
            max_targets: 3,
            min_component_mass: 1.0,
        }
    }
}

impl BirthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.collect_threshold > 0.0 && self.collect_threshold < 1.0) {
            return Err(Error::Config(format!(
                "birth threshold must lie in (0, 1), got {}",
                self.collect_threshold
            )));
        }
        if self.k_prime == 0 {
            return Err(Error::Config("birth k_prime must be at least 1".into()));
        }
        if self.subsample_cap < self.min_subsample {
            return Err(Error::Config("birth subsample cap is below the minimum subsample".into()));
        }
        Ok(())
    }
}

/// Proposes new components for the heaviest clusters of the current stream.
///
/// For each target, points with responsibility above the threshold are
/// collected (capped), a fresh `k_prime`-component mixture is fit to them,
/// and its non-empty components are appended with base priors. Returns the
/// number of appended components. Callers must refresh responsibilities and
/// statistics afterwards.
pub fn birth_move(
    ledger: &mut StreamLedger,
    z: &Matrix,
    gamma: &Responsibilities,
    cfg: &BirthConfig,
    workers: usize,
) -> Result<usize> {
    cfg.validate()?;
    if gamma.n() != z.rows() || gamma.k() != ledger.model.len() {
        return Err(Error::shape("birth inputs disagree with the model"));
    }
    let k = gamma.k();
    let mut mass = vec![0.0; k];
    for row in gamma.matrix().row_iter() {
        mass.iter_mut().zip(row).for_each(|(m, g)| *m += g);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));

    // Proposal responsibilities: each birth hands the target's share of its
    // collected rows to the new components, so the global step below gives
    // them stick mass before the next local step.
    let mut proposal: Vec<Vec<f64>> = gamma.matrix().row_iter().map(<[f64]>::to_vec).collect();
    let mut born = 0;
    for &target in order.iter().take(cfg.max_targets) {
        let room = ledger.model.truncation_max.saturating_sub(ledger.model.len());
        if room == 0 {
            log::info!(
                "birth skipped: model is at its truncation of {} clusters",
                ledger.model.truncation_max
            );
            break;
        }
        let collected: Vec<usize> = (0..z.rows())
            .filter(|&n| gamma.row(n)[target] > cfg.collect_threshold)
            .collect();
        if collected.len() < cfg.min_subsample {
            log::debug!("no birth from cluster {target}: subsample of {} points", collected.len());
            continue;
        }
        let rows = if collected.len() > cfg.subsample_cap {
            let mut pick = index::sample(&mut ledger.rng, collected.len(), cfg.subsample_cap).into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|p| collected[p]).collect()
        } else {
            collected.clone()
        };
        let sub = z.select_rows(&rows);
        let fitted = fit_fresh(&ledger.model, &sub, cfg, workers, &mut ledger.rng)?;

        let stats = compute_suffstats(&sub, &local_update_with_workers(&sub, &fitted, workers)?)?;
        let mut keep: Vec<usize> = (0..fitted.len())
            .filter(|&c| stats.clusters[c].n >= cfg.min_component_mass)
            .collect();
        keep.sort_by(|&a, &b| stats.clusters[b].n.total_cmp(&stats.clusters[a].n).then(a.cmp(&b)));
        keep.truncate(room);
        if keep.is_empty() {
            continue;
        }
        let split = local_update_with_workers(&z.select_rows(&collected), &fitted, workers)?;
        for row in &mut proposal {
            row.extend(std::iter::repeat_n(0.0, keep.len()));
        }
        let first_new = ledger.model.len();
        for (r, &n) in collected.iter().enumerate() {
            let share = proposal[n][target];
            let moved: Vec<f64> = keep.iter().map(|&c| share * split.row(r)[c]).collect();
            proposal[n][target] = (share - moved.iter().sum::<f64>()).max(0.0);
            for (c, m) in moved.into_iter().enumerate() {
                proposal[n][first_new + c] = m;
            }
        }
        for &c in &keep {
            let stream = ledger.stream_index;
            ledger.model.push_with_posterior(fitted.clusters[c].posterior.clone(), stream);
        }
        ledger.append_clusters(keep.len());
        born += keep.len();
    }
    if born > 0 {
        let proposal = Responsibilities::new(Matrix::from_rows(&proposal)?)?;
        global_update_in_place(&mut ledger.model, &compute_suffstats(z, &proposal)?)?;
    }
    Ok(born)
}

/// Variational fit of a fresh `k_prime`-component mixture seeded by k-means++.
fn fit_fresh<R: Rng + ?Sized>(
    parent: &DpmmModel,
    z: &Matrix,
    cfg: &BirthConfig,
    workers: usize,
    rng: &mut R,
) -> Result<DpmmModel> {
    let k = cfg.k_prime.min(z.rows());
    let mut model = DpmmModel::with_clusters(parent.prior.clone(), parent.alpha0, k, k)?;
    let labels = kmeans_pp_labels(z, k, rng);
    let mut gamma = Responsibilities::from_labels(&labels, k);
    for _ in 0..cfg.fit_iters {
        global_update_in_place(&mut model, &compute_suffstats(z, &gamma)?)?;
        gamma = local_update_with_workers(z, &model, workers)?;
    }
    global_update_in_place(&mut model, &compute_suffstats(z, &gamma)?)?;
    Ok(model)
}

/// Nearest-seed labels for seeds chosen by D² sampling.
fn kmeans_pp_labels<R: Rng + ?Sized>(z: &Matrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = z.rows();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| sq(z.row(i), z.row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, d) in dist.iter().enumerate() {
            if u < *d {
                pick = i;
                break;
            }
            u -= d;
        }
        seeds.push(pick);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq(z.row(i), z.row(pick)));
        }
    }
    (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for (c, &s) in seeds.iter().enumerate() {
                let d = sq(z.row(i), z.row(s));
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpmm::{local_update, NWPrior};
    use crate::vae::{AdamState, CodecConfig, LatentCodec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ledger(k: usize, truncation: usize) -> StreamLedger {
        let model = DpmmModel::with_clusters(NWPrior::default_for_dim(2), 1.0, truncation, k).unwrap();
        let codec = LatentCodec::new(2, 2, &CodecConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let adam = AdamState::new(&codec, 1e-3, 0.9);
        StreamLedger::new(model, codec, adam, 1).unwrap()
    }

    fn two_blobs(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Matrix::zeros(n, 2);
        for i in 0..n {
            let c = if i % 2 == 0 { -6.0 } else { 6.0 };
            for j in 0..2 {
                let e: f64 = StandardNormal.sample(&mut rng);
                z[(i, j)] = c + e;
            }
        }
        z
    }

    #[test]
    fn small_subsample_gives_no_birth() {
        let mut l = ledger(1, 10);
        let z = two_blobs(40, 1);
        let g = local_update(&z, &l.model).unwrap();
        assert_eq!(birth_move(&mut l, &z, &g, &BirthConfig::default(), 1).unwrap(), 0);
        assert_eq!(l.model.len(), 1);
    }

    #[test]
    fn truncation_blocks_birth() {
        let mut l = ledger(1, 1);
        let z = two_blobs(200, 2);
        let g = local_update(&z, &l.model).unwrap();
        assert_eq!(birth_move(&mut l, &z, &g, &BirthConfig::default(), 1).unwrap(), 0);
        assert_eq!(l.model.len(), 1);
    }

    #[test]
    fn birth_recovers_two_blobs() {
        let mut l = ledger(1, 20);
        let z = two_blobs(400, 3);
        let mut g = local_update(&z, &l.model).unwrap();
        let born = birth_move(&mut l, &z, &g, &BirthConfig::default(), 1).unwrap();
        assert!(born >= 2);
        assert_eq!(l.scope.k(), l.model.len());
        for _ in 0..30 {
            g = local_update(&z, &l.model).unwrap();
            global_update_in_place(&mut l.model, &compute_suffstats(&z, &g).unwrap()).unwrap();
        }
        let stats = compute_suffstats(&z, &g).unwrap();
        let heavy = stats.counts().iter().filter(|&&n| n >= 0.05 * 400.0).count();
        assert!(heavy >= 2, "{:?}", stats.counts());
    }

    #[test]
    fn config_validation() {
        let bad = BirthConfig {
            collect_threshold: 1.0,
            ..BirthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = BirthConfig {
            k_prime: 0,
            ..BirthConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
