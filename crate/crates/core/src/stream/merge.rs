use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ledger::StreamLedger;
use crate::dpmm::{elbo_from_stats, global_update_in_place, nw_posterior, ClusterStats, NWPrior, Responsibilities};
use crate::error::{Error, Result};
use crate::math::{cholesky, ln_multigamma};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub enabled: bool,
    /// Highest-scoring pairs tried per call.
    pub top_pairs: usize,
    /// Both clusters need at least this much stream mass to be paired.
    pub min_mass: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            top_pairs: 3,
            min_mass: 1.0,
        }
    }
}

/// An accepted merge, with the ELBO values that justified it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub kept_id: u64,
    pub removed_id: u64,
    pub elbo_before: f64,
    pub elbo_after: f64,
}

/// Log marginal likelihood of the data summarized by `stats` under `prior`.
pub fn nw_log_marginal(prior: &NWPrior, stats: &ClusterStats) -> Result<f64> {
    let d = prior.dim();
    let (_, beta, nu, w_inv) = nw_posterior(prior, stats)?;
    let log_det_post = cholesky(&w_inv)?.log_det();
    let log_det_prior = prior.w0_inv_chol().log_det();
    let df = d as f64;
    Ok(-0.5 * stats.n * df * PI.ln() + ln_multigamma(0.5 * nu, d) - ln_multigamma(0.5 * prior.nu0, d)
        + 0.5 * prior.nu0 * log_det_prior
        - 0.5 * nu * log_det_post
        + 0.5 * df * (prior.beta0.ln() - beta.ln()))
}

/// `log H(Sa + Sb) − log H(Sa) − log H(Sb)` under the base prior.
pub fn merge_score(prior: &NWPrior, a: &ClusterStats, b: &ClusterStats) -> Result<f64> {
    let mut ab = a.clone();
    ab.add(b);
    Ok(nw_log_marginal(prior, &ab)? - nw_log_marginal(prior, a)? - nw_log_marginal(prior, b)?)
}

fn neg_x_log_x(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

/// Tries the best-scoring cluster pairs of the live stream and keeps each
/// merge only if the stream ELBO strictly increases.
///
/// `gammas` are the responsibilities of every mini-batch in the stream;
/// accepted merges fold their columns. The model is expected to be at its
/// global optimum for the current stream statistics.
pub fn merge_move(ledger: &mut StreamLedger, gammas: &mut [Responsibilities], cfg: &MergeConfig) -> Result<Vec<MergeRecord>> {
    let k = ledger.model.len();
    if k < 2 || cfg.top_pairs == 0 {
        return Ok(Vec::new());
    }
    if gammas.iter().any(|g| g.k() != k) {
        return Err(Error::shape("responsibilities disagree with the model"));
    }
    let stats = ledger.scope.stream_stats().clone();
    let mut candidates = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&stats.clusters[i], &stats.clusters[j]);
            if a.n < cfg.min_mass || b.n < cfg.min_mass {
                continue;
            }
            let score = merge_score(&ledger.model.prior, a, b)?;
            candidates.push((score, ledger.model.clusters[i].id, ledger.model.clusters[j].id));
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    candidates.truncate(cfg.top_pairs);

    let mut entropy: f64 = gammas.iter().map(Responsibilities::entropy).sum();
    let mut current = elbo_from_stats(&ledger.model, ledger.scope.stream_stats(), entropy)?;
    let mut records = Vec::new();
    for (_, id_a, id_b) in candidates {
        let find = |id| ledger.model.clusters.iter().position(|c| c.id == id);
        let (Some(i), Some(j)) = (find(id_a), find(id_b)) else {
            continue;
        };
        let (i, j) = (i.min(j), i.max(j));
        let mut trial = ledger.model.clone();
        trial.merge_clusters(i, j)?;
        let mut trial_stats = ledger.scope.stream_stats().clone();
        trial_stats.merge_clusters(i, j);
        global_update_in_place(&mut trial, &trial_stats)?;
        let mut delta = 0.0;
        for g in gammas.iter() {
            for row in g.matrix().row_iter() {
                delta += neg_x_log_x(row[i] + row[j]) - neg_x_log_x(row[i]) - neg_x_log_x(row[j]);
            }
        }
        let trial_entropy = entropy + delta;
        let proposed = elbo_from_stats(&trial, &trial_stats, trial_entropy)?;
        if proposed > current {
            let record = MergeRecord {
                kept_id: ledger.model.clusters[i].id,
                removed_id: ledger.model.clusters[j].id,
                elbo_before: current,
                elbo_after: proposed,
            };
            log::debug!("merged cluster {} into {}", record.removed_id, record.kept_id);
            ledger.scope.merge_clusters(i, j);
            ledger.model = trial;
            for g in gammas.iter_mut() {
                g.merge_columns(i, j);
            }
            entropy = trial_entropy;
            current = proposed;
            records.push(record);
        }
    }
    Ok(records)
}
