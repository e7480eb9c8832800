//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::{digamma, ln_gamma};
use streamdp::dpmm::{compute_suffstats, global_update, Cluster};
use streamdp::harness::RunConfig;
use streamdp::{DpmmModel, Matrix, NWPrior, Responsibilities};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            scale * e
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Strictly positive rows summing to one.
pub fn random_gamma(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Responsibilities {
    let mut g = Matrix::zeros(n, k);
    for i in 0..n {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = w.iter().sum();
        for (t, v) in w.iter().enumerate() {
            g[(i, t)] = v / s;
        }
        let fix: f64 = g.row(i).iter().sum::<f64>() - 1.0;
        g[(i, 0)] -= fix;
    }
    Responsibilities::new(g).unwrap()
}

/// A model with `k` components fit to `(z, gamma)`, optionally after one
/// absorption so that components carry their own priors.
pub fn fitted_model(z: &Matrix, gamma: &Responsibilities, absorb: bool) -> DpmmModel {
    let d = z.cols();
    let base = DpmmModel::with_clusters(NWPrior::default_for_dim(d), 1.3, gamma.k().max(2), gamma.k()).unwrap();
    let stats = compute_suffstats(z, gamma).unwrap();
    let mut model = global_update(&base, &stats).unwrap();
    if absorb {
        model.absorb_posteriors();
        let half = z.select_rows(&(0..z.rows() / 2).collect::<Vec<_>>());
        let hg = Responsibilities::new(gamma.matrix().select_rows(&(0..z.rows() / 2).collect::<Vec<_>>())).unwrap();
        model = global_update(&model, &compute_suffstats(&half, &hg).unwrap()).unwrap();
    }
    model
}

// ---- small dense helpers, deliberately not shared with the crate ----

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

/// Gauss–Jordan inverse with partial pivoting; returns `(inverse, log|det|)`.
pub fn invert(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut log_det = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        inv.swap(c, p);
        let piv = m[c][c];
        log_det += piv.abs().ln();
        for j in 0..n {
            m[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for j in 0..n {
                    m[r][j] -= f * m[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    (inv, log_det)
}

fn quad(w: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            s += v[i] * w[i][j] * v[j];
        }
    }
    s
}

fn trace_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i][j] * b[j][i];
        }
    }
    s
}

fn ln_wishart_b(log_det_w: f64, nu: f64, d: usize) -> f64 {
    let df = d as f64;
    let mut s = -0.5 * nu * log_det_w - 0.5 * nu * df * 2f64.ln() - 0.25 * df * (df - 1.0) * PI.ln();
    for i in 1..=d {
        s -= ln_gamma(0.5 * (nu + 1.0 - i as f64));
    }
    s
}

fn e_log_det(nu: f64, log_det_w: f64, d: usize) -> f64 {
    (1..=d).map(|i| digamma(0.5 * (nu + 1.0 - i as f64))).sum::<f64>() + d as f64 * 2f64.ln() + log_det_w
}

fn nw_terms(c: &Cluster) -> (f64, f64, f64, Vec<Vec<f64>>) {
    let post = &c.posterior;
    let d = post.dim();
    let w_inv = to_rows(&post.w_inv_chol.reconstruct());
    let (w, log_det_w_inv) = invert(&w_inv);
    let log_det_w = -log_det_w_inv;
    let ell = e_log_det(post.nu, log_det_w, d);

    let prior = &c.prior;
    let w0_inv = to_rows(&prior.w0_inv_chol().reconstruct());
    let (_, log_det_w0_inv) = invert(&w0_inv);
    let df = d as f64;
    let dm: Vec<f64> = post.m.iter().zip(&prior.m0).map(|(a, b)| a - b).collect();
    let log_p = 0.5 * (df * (prior.beta0 / (2.0 * PI)).ln() + ell - df * prior.beta0 / post.beta - prior.beta0 * post.nu * quad(&w, &dm))
        + ln_wishart_b(-log_det_w0_inv, prior.nu0, d)
        + 0.5 * (prior.nu0 - df - 1.0) * ell
        - 0.5 * post.nu * trace_product(&w0_inv, &w);
    let entropy = -ln_wishart_b(log_det_w, post.nu, d) - 0.5 * (post.nu - df - 1.0) * ell + 0.5 * post.nu * df;
    let log_q = 0.5 * ell + 0.5 * df * (post.beta / (2.0 * PI)).ln() - 0.5 * df - entropy;
    (ell, log_p, log_q, w)
}

/// Mixture ELBO evaluated point by point from textbook expressions.
pub fn elbo_oracle(model: &DpmmModel, z: &Matrix, gamma: &Responsibilities) -> f64 {
    let k = model.len();
    let d = model.dim();
    let df = d as f64;
    let mut total = 0.0;
    let mut tail = 0.0;
    let mut log_pi = Vec::with_capacity(k);
    for (t, c) in model.clusters.iter().enumerate() {
        let p = &c.posterior;
        if t + 1 == k {
            log_pi.push(tail);
            continue;
        }
        let ev = digamma(p.eta1) - digamma(p.eta1 + p.eta2);
        let e1v = digamma(p.eta2) - digamma(p.eta1 + p.eta2);
        log_pi.push(ev + tail);
        tail += e1v;
        let sp = c.stick_prior;
        let log_p = -ln_beta(sp.a, sp.b) + (sp.a - 1.0) * ev + (sp.b - 1.0) * e1v;
        let log_q = -ln_beta(p.eta1, p.eta2) + (p.eta1 - 1.0) * ev + (p.eta2 - 1.0) * e1v;
        total += log_p - log_q;
    }
    for (t, c) in model.clusters.iter().enumerate() {
        let (ell, log_p, log_q, w) = nw_terms(c);
        total += log_p - log_q;
        let post = &c.posterior;
        for i in 0..z.rows() {
            let g = gamma.row(i)[t];
            let diff: Vec<f64> = z.row(i).iter().zip(&post.m).map(|(a, b)| a - b).collect();
            let lik = 0.5 * (ell - df / post.beta - post.nu * quad(&w, &diff) - df * (2.0 * PI).ln());
            total += g * (lik + log_pi[t]);
            if g > 0.0 {
                total -= g * g.ln();
            }
        }
    }
    total
}

// ---- partition metrics straight from their definitions ----

fn entropy_of<K: std::hash::Hash + Eq>(items: impl Iterator<Item = K>, n: f64) -> f64 {
    let mut counts: HashMap<K, f64> = HashMap::new();
    for it in items {
        *counts.entry(it).or_default() += 1.0;
    }
    counts.values().map(|&c| -(c / n) * (c / n).ln()).sum()
}

pub struct DirectMetrics {
    pub nmi: f64,
    pub ari: Option<f64>,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

pub fn direct_metrics(l: &[usize], c: &[usize]) -> DirectMetrics {
    let n = l.len() as f64;
    let hl = entropy_of(l.iter(), n);
    let hc = entropy_of(c.iter(), n);
    let hlc = entropy_of(l.iter().zip(c), n);
    let mi = hl + hc - hlc;
    let nmi = if hl + hc == 0.0 { 1.0 } else { 2.0 * mi / (hl + hc) };
    let homogeneity = if hl == 0.0 { 1.0 } else { 1.0 - (hlc - hc) / hl };
    let completeness = if hc == 0.0 { 1.0 } else { 1.0 - (hlc - hl) / hc };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    let ari = (l.len() >= 2).then(|| {
        let (mut a, mut b, mut cc, mut d) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..l.len() {
            for j in i + 1..l.len() {
                match (l[i] == l[j], c[i] == c[j]) {
                    (true, true) => a += 1.0,
                    (true, false) => b += 1.0,
                    (false, true) => cc += 1.0,
                    (false, false) => d += 1.0,
                }
            }
        }
        let denom = (a + b) * (b + d) + (a + cc) * (cc + d);
        if denom == 0.0 {
            1.0
        } else {
            2.0 * (a * d - b * cc) / denom
        }
    });
    DirectMetrics {
        nmi,
        ari,
        homogeneity,
        completeness,
        v_measure,
    }
}

/// Every labelling of `n` points into at most `parts` blocks, as
/// restricted growth strings.
pub fn partitions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, n: usize, parts: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for b in 0..=next.min(parts - 1) {
            prefix.push(b);
            go(prefix, n, parts, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), n, parts, &mut out);
    out
}

// ---- run configurations used by the protocol-level checks ----

pub fn config(pairs: &[(&str, &str)]) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in pairs {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

/// Linear codec started at the identity, warmed up as an autoencoder.
pub const LINEAR_CODEC: &[(&str, &str)] = &[
    ("codec.hidden", "[]"),
    ("codec.init", "identity"),
    ("pretrain.steps", "1000"),
    ("input_scale", "0.1"),
];

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
