use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cholesky, CholeskyFactor, Matrix};

/// Normal–Wishart prior `(m₀, β₀, ν₀, W₀)`.
///
/// The scale matrix is held as the Cholesky factor of `W₀⁻¹`, the form the
/// conjugate update consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NWPrior {
    pub m0: Vec<f64>,
    pub beta0: f64,
    pub nu0: f64,
    w0_inv_chol: CholeskyFactor,
}

impl NWPrior {
    /// Builds a prior from the scale matrix `W₀` itself.
    pub fn new(m0: Vec<f64>, beta0: f64, nu0: f64, w0: &Matrix) -> Result<Self> {
        let w0_inv = cholesky(w0)?.inverse();
        Self::from_scale_inverse(m0, beta0, nu0, &w0_inv)
    }

    pub fn from_scale_inverse(m0: Vec<f64>, beta0: f64, nu0: f64, w0_inv: &Matrix) -> Result<Self> {
        let chol = cholesky(w0_inv)?;
        Self::from_parts(m0, beta0, nu0, chol)
    }

    pub(crate) fn from_parts(m0: Vec<f64>, beta0: f64, nu0: f64, w0_inv_chol: CholeskyFactor) -> Result<Self> {
        let d = m0.len();
        if w0_inv_chol.dim() != d {
            return Err(Error::shape(format!(
                "prior mean has dim {d} but scale has dim {}",
                w0_inv_chol.dim()
            )));
        }
        if !(beta0 > 0.0) || !beta0.is_finite() {
            return Err(Error::domain(format!("beta0 must be positive, got {beta0}")));
        }
        if !(nu0 > d as f64 - 1.0) || !nu0.is_finite() {
            return Err(Error::domain(format!("nu0 must exceed D - 1, got {nu0}")));
        }
        if m0.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("prior mean must be finite"));
        }
        Ok(Self {
            m0,
            beta0,
            nu0,
            w0_inv_chol,
        })
    }

    /// `(0, 0.2, D + 2, I)`.
    pub fn default_for_dim(dim: usize) -> Self {
        Self {
            m0: vec![0.0; dim],
            beta0: 0.2,
            nu0: dim as f64 + 2.0,
            w0_inv_chol: CholeskyFactor::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn w0_inv_chol(&self) -> &CholeskyFactor {
        &self.w0_inv_chol
    }

    /// Explicit `W₀`.
    pub fn scale(&self) -> Matrix {
        self.w0_inv_chol.inverse()
    }

    /// Prior with the same parameters as a fitted posterior.
    pub fn from_posterior(post: &ClusterPosterior) -> Self {
        Self {
            m0: post.m.clone(),
            beta0: post.beta,
            nu0: post.nu,
            w0_inv_chol: post.w_inv_chol.clone(),
        }
    }

    fn natural(&self) -> NaturalNW {
        let mut second = self.w0_inv_chol.reconstruct();
        second.add_outer(self.beta0, &self.m0, &self.m0);
        NaturalNW {
            beta: self.beta0,
            beta_m: self.m0.iter().map(|v| v * self.beta0).collect(),
            second,
            nu: self.nu0,
        }
    }

    fn from_natural(nat: NaturalNW) -> Result<Self> {
        let m: Vec<f64> = nat.beta_m.iter().map(|v| v / nat.beta).collect();
        let mut w_inv = nat.second;
        w_inv.add_outer(-nat.beta, &m, &m);
        w_inv.symmetrize();
        Self::from_scale_inverse(m, nat.beta, nat.nu, &w_inv)
    }
}

/// Additive coordinates of a Normal–Wishart: `(β, βm, W⁻¹ + βmmᵀ, ν)`.
struct NaturalNW {
    beta: f64,
    beta_m: Vec<f64>,
    second: Matrix,
    nu: f64,
}

/// Beta prior on one stick proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickPrior {
    pub a: f64,
    pub b: f64,
}

/// Variational posterior for one component: Normal–Wishart over the
/// component's (mean, precision) and a Beta over its stick proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPosterior {
    pub m: Vec<f64>,
    pub beta: f64,
    pub nu: f64,
    /// Cholesky factor of `Wₖ⁻¹`.
    pub w_inv_chol: CholeskyFactor,
    pub eta1: f64,
    pub eta2: f64,
}

impl ClusterPosterior {
    pub fn from_prior(prior: &NWPrior, stick: StickPrior) -> Self {
        Self {
            m: prior.m0.clone(),
            beta: prior.beta0,
            nu: prior.nu0,
            w_inv_chol: prior.w0_inv_chol.clone(),
            eta1: stick.a,
            eta2: stick.b,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Explicit `Wₖ`.
    pub fn scale(&self) -> Matrix {
        self.w_inv_chol.inverse()
    }

    /// `log|Wₖ|`.
    pub fn log_det_scale(&self) -> f64 {
        -self.w_inv_chol.log_det()
    }

    /// `(x − mₖ)ᵀ Wₖ (x − mₖ)`.
    pub fn scale_quad(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.m).map(|(a, b)| a - b).collect();
        self.w_inv_chol.inv_quad_form(&diff)
    }
}

/// One mixture component together with the prior it is updated against.
///
/// Components born in an earlier stream carry that stream's posterior as
/// their prior; newborn components carry the model's base prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u64,
    pub born_stream: usize,
    pub prior: NWPrior,
    pub stick_prior: StickPrior,
    pub posterior: ClusterPosterior,
}

/// Truncated stick-breaking mixture; cluster order is stick order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmmModel {
    pub alpha0: f64,
    pub prior: NWPrior,
    pub clusters: Vec<Cluster>,
    pub truncation_max: usize,
    next_id: u64,
}

impl DpmmModel {
    /// A model with one component sitting at the prior.
    pub fn new(prior: NWPrior, alpha0: f64, truncation_max: usize) -> Result<Self> {
        if !(alpha0 > 0.0) || !alpha0.is_finite() {
            return Err(Error::domain(format!("alpha0 must be positive, got {alpha0}")));
        }
        if truncation_max == 0 {
            return Err(Error::domain("truncation_max must be at least 1"));
        }
        let mut model = Self {
            alpha0,
            prior,
            clusters: Vec::new(),
            truncation_max,
            next_id: 0,
        };
        model.push_fresh(0);
        Ok(model)
    }

    /// A model with `k` components, all at the prior.
    pub fn with_clusters(prior: NWPrior, alpha0: f64, truncation_max: usize, k: usize) -> Result<Self> {
        let mut model = Self::new(prior, alpha0, truncation_max.max(k))?;
        for _ in 1..k {
            model.push_fresh(0);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn base_stick_prior(&self) -> StickPrior {
        StickPrior {
            a: 1.0,
            b: self.alpha0,
        }
    }

    fn push_fresh(&mut self, born_stream: usize) -> usize {
        let stick = self.base_stick_prior();
        let posterior = ClusterPosterior::from_prior(&self.prior, stick);
        self.push_with_posterior(posterior, born_stream)
    }

    /// Appends a component with base priors and the given posterior. Returns its index.
    pub fn push_with_posterior(&mut self, posterior: ClusterPosterior, born_stream: usize) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.clusters.push(Cluster {
            id,
            born_stream,
            prior: self.prior.clone(),
            stick_prior: self.base_stick_prior(),
            posterior,
        });
        self.clusters.len() - 1
    }

    pub fn posteriors(&self) -> impl Iterator<Item = &ClusterPosterior> {
        self.clusters.iter().map(|c| &c.posterior)
    }

    /// Pseudo-count a component carries from earlier streams.
    fn carried_mass(&self, k: usize) -> f64 {
        (self.clusters[k].stick_prior.a - 1.0).max(0.0)
    }

    /// Drops component `j`, removing its carried mass from earlier tails.
    pub fn remove_cluster(&mut self, j: usize) {
        let mass = self.carried_mass(j);
        let floor = self.alpha0;
        for c in &mut self.clusters[..j] {
            c.stick_prior.b = (c.stick_prior.b - mass).max(floor);
        }
        self.clusters.remove(j);
    }

    /// Folds component `j` into component `i` (`i < j`), combining their
    /// priors and moving `j`'s carried mass to position `i`.
    ///
    /// The merged posterior is left at the merged prior; callers refresh it
    /// from merged statistics.
    pub fn merge_clusters(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= j || j >= self.clusters.len() {
            return Err(Error::domain(format!("invalid merge pair ({i}, {j})")));
        }
        let mass_j = self.carried_mass(j);
        let base = self.prior.natural();
        let a = self.clusters[i].prior.natural();
        let b = self.clusters[j].prior.natural();
        let mut second = a.second;
        second.add_assign(&b.second);
        second.sub_assign(&base.second);
        let merged = NaturalNW {
            beta: a.beta + b.beta - base.beta,
            beta_m: a
                .beta_m
                .iter()
                .zip(&b.beta_m)
                .zip(&base.beta_m)
                .map(|((x, y), z)| x + y - z)
                .collect(),
            second,
            nu: a.nu + b.nu - base.nu,
        };
        let merged_prior = NWPrior::from_natural(merged)?;
        let floor = self.alpha0;
        for c in &mut self.clusters[i + 1..j] {
            c.stick_prior.b = (c.stick_prior.b - mass_j).max(floor);
        }
        let target = &mut self.clusters[i];
        target.prior = merged_prior;
        target.stick_prior.a += mass_j;
        target.stick_prior.b = (target.stick_prior.b - mass_j).max(floor);
        target.posterior = ClusterPosterior::from_prior(&target.prior, target.stick_prior);
        self.clusters.remove(j);
        Ok(())
    }

    /// Makes every component's current posterior its prior.
    pub fn absorb_posteriors(&mut self) {
        for c in &mut self.clusters {
            c.prior = NWPrior::from_posterior(&c.posterior);
            c.stick_prior = StickPrior {
                a: c.posterior.eta1,
                b: c.posterior.eta2,
            };
        }
    }

    /// Posterior means of the stick weights, last stick closed at 1.
    pub fn expected_weights(&self) -> Vec<f64> {
        let k = self.clusters.len();
        let v: Vec<f64> = self
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i + 1 == k {
                    1.0
                } else {
                    c.posterior.eta1 / (c.posterior.eta1 + c.posterior.eta2)
                }
            })
            .collect();
        super::stick_weights(&v).expect("expected stick proportions lie in (0, 1]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prior_values() {
        let p = NWPrior::default_for_dim(3);
        assert_eq!(p.m0, vec![0.0; 3]);
        assert_eq!(p.beta0, 0.2);
        assert_eq!(p.nu0, 5.0);
        assert_eq!(p.scale(), Matrix::identity(3));
    }

    #[test]
    fn prior_validation() {
        let w = Matrix::identity(2);
        assert!(NWPrior::new(vec![0.0; 2], 0.0, 4.0, &w).is_err());
        assert!(NWPrior::new(vec![0.0; 2], 1.0, 0.5, &w).is_err());
        assert!(NWPrior::new(vec![0.0; 3], 1.0, 4.0, &w).is_err());
        let p = NWPrior::new(vec![1.0, 2.0], 1.0, 4.0, &w.scaled(2.0)).unwrap();
        assert!(p.scale().max_abs_diff(&w.scaled(2.0)) < 1e-14);
    }

    #[test]
    fn natural_round_trip() {
        let w = Matrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let p = NWPrior::new(vec![1.0, -2.0], 3.0, 5.0, &w).unwrap();
        let q = NWPrior::from_natural(p.natural()).unwrap();
        assert!((q.beta0 - 3.0).abs() < 1e-14);
        assert!((q.m0[1] + 2.0).abs() < 1e-13);
        assert!(q.scale().max_abs_diff(&w) < 1e-12);
    }

    #[test]
    fn ids_are_unique_and_stable() {
        let mut m = DpmmModel::with_clusters(NWPrior::default_for_dim(2), 1.0, 10, 3).unwrap();
        assert_eq!(m.clusters.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        m.remove_cluster(1);
        let post = ClusterPosterior::from_prior(&m.prior, m.base_stick_prior());
        m.push_with_posterior(post, 4);
        assert_eq!(m.clusters.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 2, 3]);
        assert_eq!(m.clusters[2].born_stream, 4);
    }

    #[test]
    fn merging_fresh_priors_keeps_base_prior() {
        let mut m = DpmmModel::with_clusters(NWPrior::default_for_dim(2), 1.0, 10, 3).unwrap();
        m.merge_clusters(0, 2).unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.clusters[0].prior.beta0 - 0.2).abs() < 1e-15);
        assert!((m.clusters[0].prior.nu0 - 4.0).abs() < 1e-15);
        assert!(m.clusters[0].prior.scale().max_abs_diff(&Matrix::identity(2)) < 1e-14);
        assert!(m.merge_clusters(1, 1).is_err());
    }
}
