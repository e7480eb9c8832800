//! Evidence lower bound of the mixture over a fixed set of latent points.
//!
//! Covers `E[log p(z|y,φ)] + E[log p(y|v)] + E[log p(v)] + E[log p(φ)]
//! − E[log q(y)] − E[log q(v)] − E[log q(φ)]`. The reconstruction and
//! encoder-entropy terms belong to the codec objective.

use std::f64::consts::PI;

use super::inference::{expected_log_det_precision, expected_log_pi};
use super::model::{Cluster, DpmmModel};
use super::stats::{compute_suffstats, ClusterStats, Responsibilities, SuffStats};
use crate::error::{Error, Result};
use crate::math::{digamma_unchecked, ln_gamma, log_wishart_normalizer_parts, Matrix};

/// Mixture ELBO for latent points `z` under responsibilities `gamma`.
pub fn elbo_dpmm(model: &DpmmModel, z: &Matrix, gamma: &Responsibilities) -> Result<f64> {
    if gamma.k() != model.len() {
        return Err(Error::shape(format!(
            "{} responsibility columns for {} clusters",
            gamma.k(),
            model.len()
        )));
    }
    if z.rows() > 0 && z.cols() != model.dim() {
        return Err(Error::shape(format!("latent width {} but model dim {}", z.cols(), model.dim())));
    }
    let stats = if z.rows() == 0 {
        SuffStats::zeros(model.len(), model.dim())
    } else {
        compute_suffstats(z, gamma)?
    };
    elbo_from_stats(model, &stats, gamma.entropy())
}

/// ELBO from sufficient statistics and the assignment entropy `−Σ γ log γ`.
pub fn elbo_from_stats(model: &DpmmModel, stats: &SuffStats, assignment_entropy: f64) -> Result<f64> {
    if stats.k() != model.len() {
        return Err(Error::shape("statistics and model disagree on cluster count"));
    }
    let k = model.len();
    let log_pi = expected_log_pi(model);
    let mut total = assignment_entropy;
    for (t, (cluster, cs)) in model.clusters.iter().zip(&stats.clusters).enumerate() {
        let log_lambda = expected_log_det_precision(&cluster.posterior);
        total += data_term(cluster, cs, log_lambda);
        total += cs.n * log_pi[t];
        if t + 1 < k {
            total += stick_term(cluster);
        }
        total += nw_term(cluster, log_lambda);
    }
    if !total.is_finite() {
        return Err(Error::numeric("mixture ELBO"));
    }
    Ok(total)
}

/// `E[log p(z|y, φ)]` restricted to one component.
fn data_term(cluster: &Cluster, cs: &ClusterStats, log_lambda: f64) -> f64 {
    if cs.n == 0.0 {
        return 0.0;
    }
    let post = &cluster.posterior;
    let d = post.dim() as f64;
    // Σ γ (z − m)(z − m)ᵀ
    let mut around_mean = cs.sum_zz.clone();
    around_mean.add_outer(-1.0, &cs.sum_z, &post.m);
    around_mean.add_outer(-1.0, &post.m, &cs.sum_z);
    around_mean.add_outer(cs.n, &post.m, &post.m);
    around_mean.symmetrize();
    let quad = post.w_inv_chol.trace_solve(&around_mean);
    0.5 * (cs.n * (log_lambda - d / post.beta - d * (2.0 * PI).ln()) - post.nu * quad)
}

/// `E[log p(v)] − E[log q(v)]` for one stick.
fn stick_term(cluster: &Cluster) -> f64 {
    let p = &cluster.posterior;
    let prior = cluster.stick_prior;
    let total = digamma_unchecked(p.eta1 + p.eta2);
    let e_log_v = digamma_unchecked(p.eta1) - total;
    let e_log_1mv = digamma_unchecked(p.eta2) - total;
    let log_p = ln_gamma(prior.a + prior.b) - ln_gamma(prior.a) - ln_gamma(prior.b)
        + (prior.a - 1.0) * e_log_v
        + (prior.b - 1.0) * e_log_1mv;
    let log_q = ln_gamma(p.eta1 + p.eta2) - ln_gamma(p.eta1) - ln_gamma(p.eta2)
        + (p.eta1 - 1.0) * e_log_v
        + (p.eta2 - 1.0) * e_log_1mv;
    log_p - log_q
}

/// `E[log p(φ)] − E[log q(φ)]` for one Normal–Wishart component.
fn nw_term(cluster: &Cluster, log_lambda: f64) -> f64 {
    let post = &cluster.posterior;
    let prior = &cluster.prior;
    let d = post.dim() as f64;
    let two_pi = 2.0 * PI;

    let dm: Vec<f64> = post.m.iter().zip(&prior.m0).map(|(a, b)| a - b).collect();
    let mean_quad = post.w_inv_chol.inv_quad_form(&dm);
    let trace_w0inv_w = post.w_inv_chol.trace_solve_factor(prior.w0_inv_chol());
    let log_b0 = log_wishart_normalizer_parts(-prior.w0_inv_chol().log_det(), post.dim(), prior.nu0);

    let log_p = 0.5
        * (d * (prior.beta0 / two_pi).ln() + log_lambda
            - d * prior.beta0 / post.beta
            - prior.beta0 * post.nu * mean_quad)
        + log_b0
        + 0.5 * (prior.nu0 - d - 1.0) * log_lambda
        - 0.5 * post.nu * trace_w0inv_w;

    let log_b = log_wishart_normalizer_parts(post.log_det_scale(), post.dim(), post.nu);
    let entropy_lambda = -log_b - 0.5 * (post.nu - d - 1.0) * log_lambda + 0.5 * post.nu * d;
    let log_q = 0.5 * log_lambda + 0.5 * d * (post.beta / two_pi).ln() - 0.5 * d - entropy_lambda;

    log_p - log_q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpmm::NWPrior;

    #[test]
    fn prior_equals_posterior_without_data_is_zero() {
        let model = DpmmModel::new(NWPrior::default_for_dim(3), 1.0, 5).unwrap();
        let z = Matrix::zeros(0, 3);
        let gamma = Responsibilities::new(Matrix::zeros(0, 1)).unwrap();
        let v = elbo_dpmm(&model, &z, &gamma).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn shape_errors() {
        let model = DpmmModel::with_clusters(NWPrior::default_for_dim(2), 1.0, 5, 2).unwrap();
        let z = Matrix::zeros(2, 2);
        let gamma = Responsibilities::from_labels(&[0, 0], 1);
        assert!(matches!(elbo_dpmm(&model, &z, &gamma), Err(Error::Shape(_))));
    }
}
