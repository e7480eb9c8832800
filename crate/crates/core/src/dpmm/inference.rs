use super::model::{ClusterPosterior, DpmmModel, NWPrior, StickPrior};
use super::stats::{ClusterStats, Responsibilities, SuffStats};
use crate::error::{Error, Result};
use crate::math::{cholesky, digamma_unchecked, log_sum_exp_unchecked, Matrix};

/// Mixture weights from stick proportions: `πₖ = vₖ ∏_{j<k} (1 − vⱼ)`.
pub fn stick_weights(v: &[f64]) -> Result<Vec<f64>> {
    let mut remaining = 1.0;
    let mut out = Vec::with_capacity(v.len());
    for (i, &vi) in v.iter().enumerate() {
        if !(vi > 0.0 && vi <= 1.0) {
            return Err(Error::domain(format!("stick proportion {i} = {vi} is outside (0, 1]")));
        }
        out.push(vi * remaining);
        remaining *= 1.0 - vi;
    }
    Ok(out)
}

/// `(E[log V], E[log(1 − V)])` under `Beta(η₁, η₂)`, element-wise.
pub fn expected_log_sticks(eta1: &[f64], eta2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if eta1.len() != eta2.len() {
        return Err(Error::shape("stick parameter vectors differ in length"));
    }
    let mut log_v = Vec::with_capacity(eta1.len());
    let mut log_1mv = Vec::with_capacity(eta1.len());
    for (&a, &b) in eta1.iter().zip(eta2) {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::domain(format!("Beta parameters must be positive, got ({a}, {b})")));
        }
        let total = digamma_unchecked(a + b);
        log_v.push(digamma_unchecked(a) - total);
        log_1mv.push(digamma_unchecked(b) - total);
    }
    Ok((log_v, log_1mv))
}

/// `E[log |Λₖ|] = Σᵢ ψ((νₖ + 1 − i)/2) + D log 2 + log |Wₖ|`.
pub fn expected_log_det_precision(c: &ClusterPosterior) -> f64 {
    let d = c.dim();
    (1..=d)
        .map(|i| digamma_unchecked(0.5 * (c.nu + 1.0 - i as f64)))
        .sum::<f64>()
        + d as f64 * std::f64::consts::LN_2
        + c.log_det_scale()
}

/// Per-component log-prior mass `E[log πₖ]` with the last stick closed.
pub(crate) fn expected_log_pi(model: &DpmmModel) -> Vec<f64> {
    let k = model.len();
    let mut out = Vec::with_capacity(k);
    let mut tail = 0.0;
    for (i, c) in model.clusters.iter().enumerate() {
        let p = &c.posterior;
        if i + 1 == k {
            out.push(tail);
        } else {
            let total = digamma_unchecked(p.eta1 + p.eta2);
            out.push(digamma_unchecked(p.eta1) - total + tail);
            tail += digamma_unchecked(p.eta2) - total;
        }
    }
    out
}

/// Optimal soft assignments given the global variational parameters.
pub fn local_update(z: &Matrix, model: &DpmmModel) -> Result<Responsibilities> {
    local_update_with_workers(z, model, 1)
}

/// [`local_update`] over row partitions on `workers` threads.
///
/// Rows are scored independently, so the result does not depend on the
/// worker count.
pub fn local_update_with_workers(z: &Matrix, model: &DpmmModel, workers: usize) -> Result<Responsibilities> {
    let d = model.dim();
    if z.cols() != d && z.rows() > 0 {
        return Err(Error::shape(format!("latent width {} but model dim {d}", z.cols())));
    }
    if !z.is_finite() {
        return Err(Error::domain("latent matrix has non-finite entries"));
    }
    let k = model.len();
    let log_pi = expected_log_pi(model);
    let constant: Vec<f64> = model
        .posteriors()
        .zip(&log_pi)
        .map(|(c, lp)| lp + 0.5 * expected_log_det_precision(c) - 0.5 * d as f64 / c.beta)
        .collect();

    let n = z.rows();
    let mut gamma = Matrix::zeros(n, k);
    let score_rows = |rows: std::ops::Range<usize>, out: &mut [f64]| {
        let mut s = vec![0.0; k];
        for (local, i) in rows.enumerate() {
            let zi = z.row(i);
            for (t, c) in model.posteriors().enumerate() {
                s[t] = constant[t] - 0.5 * c.nu * c.scale_quad(zi);
            }
            let norm = log_sum_exp_unchecked(&s);
            for (t, o) in out[local * k..(local + 1) * k].iter_mut().enumerate() {
                *o = (s[t] - norm).exp();
            }
        }
    };

    let workers = workers.max(1).min(n.max(1));
    if workers == 1 {
        score_rows(0..n, gamma.as_mut_slice());
    } else {
        let chunk = n.div_ceil(workers);
        std::thread::scope(|scope| {
            for (w, out) in gamma.as_mut_slice().chunks_mut(chunk * k).enumerate() {
                let start = w * chunk;
                let end = (start + chunk).min(n);
                let f = &score_rows;
                scope.spawn(move || f(start..end, out));
            }
        });
    }
    let mut r = Responsibilities::new_unchecked(gamma);
    r.floor();
    Ok(r)
}

/// Conjugate Normal–Wishart update of one component from its prior and statistics.
pub(crate) fn nw_posterior(prior: &NWPrior, stats: &ClusterStats) -> Result<(Vec<f64>, f64, f64, Matrix)> {
    let n = stats.n.max(0.0);
    let beta = prior.beta0 + n;
    let nu = prior.nu0 + n;
    let mut w_inv = prior.w0_inv_chol().reconstruct();
    let m = if n > 0.0 {
        let zbar = stats.mean();
        w_inv.add_assign(&stats.centered_scatter());
        let diff: Vec<f64> = zbar.iter().zip(&prior.m0).map(|(a, b)| a - b).collect();
        w_inv.add_outer(prior.beta0 * n / (prior.beta0 + n), &diff, &diff);
        prior
            .m0
            .iter()
            .zip(&stats.sum_z)
            .map(|(m0, s)| (prior.beta0 * m0 + s) / beta)
            .collect()
    } else {
        prior.m0.clone()
    };
    w_inv.symmetrize();
    Ok((m, beta, nu, w_inv))
}

/// Stick parameters `η₁ = a + Nₖ`, `η₂ = b + Σ_{j>k} Nⱼ`.
pub(crate) fn stick_posteriors(priors: &[StickPrior], counts: &[f64]) -> Vec<(f64, f64)> {
    let mut tail: f64 = counts.iter().map(|n| n.max(0.0)).sum();
    priors
        .iter()
        .zip(counts)
        .map(|(p, &n)| {
            let n = n.max(0.0);
            tail -= n;
            (p.a + n, p.b + tail.max(0.0))
        })
        .collect()
}

/// Optimal global variational parameters given sufficient statistics.
pub fn global_update(model: &DpmmModel, stats: &SuffStats) -> Result<DpmmModel> {
    let mut out = model.clone();
    global_update_in_place(&mut out, stats)?;
    Ok(out)
}

pub fn global_update_in_place(model: &mut DpmmModel, stats: &SuffStats) -> Result<()> {
    if stats.k() != model.len() {
        return Err(Error::shape(format!(
            "{} statistic records for {} clusters",
            stats.k(),
            model.len()
        )));
    }
    if stats.dim != model.dim() {
        return Err(Error::shape("statistics dimension differs from model"));
    }
    let priors: Vec<StickPrior> = model.clusters.iter().map(|c| c.stick_prior).collect();
    let sticks = stick_posteriors(&priors, &stats.counts());
    for ((cluster, cs), (eta1, eta2)) in model.clusters.iter_mut().zip(&stats.clusters).zip(sticks) {
        let (m, beta, nu, w_inv_chol) = if cs.n > 0.0 {
            let (m, beta, nu, w_inv) = nw_posterior(&cluster.prior, cs)?;
            (m, beta, nu, cholesky(&w_inv)?)
        } else {
            // exact fixed point: no refactorization round-off
            let p = &cluster.prior;
            (p.m0.clone(), p.beta0, p.nu0, p.w0_inv_chol().clone())
        };
        cluster.posterior = ClusterPosterior {
            m,
            beta,
            nu,
            w_inv_chol,
            eta1,
            eta2,
        };
    }
    Ok(())
}
