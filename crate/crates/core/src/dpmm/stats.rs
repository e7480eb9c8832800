use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Floor applied to responsibilities before renormalization.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Soft cluster assignments, one row per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    gamma: Matrix,
}

impl Responsibilities {
    /// Wraps a matrix whose rows are probability vectors.
    pub fn new(gamma: Matrix) -> Result<Self> {
        for (i, row) in gamma.row_iter().enumerate() {
            if row.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::domain(format!("responsibility row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::domain(format!("responsibility row {i} sums to {s}")));
            }
        }
        Ok(Self { gamma })
    }

    pub(crate) fn new_unchecked(gamma: Matrix) -> Self {
        Self { gamma }
    }

    /// One-hot rows, floored and renormalized.
    pub fn from_labels(labels: &[usize], k: usize) -> Self {
        let mut gamma = Matrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            gamma[(i, l)] = 1.0;
        }
        let mut r = Self { gamma };
        r.floor();
        r
    }

    pub fn matrix(&self) -> &Matrix {
        &self.gamma
    }

    pub fn n(&self) -> usize {
        self.gamma.rows()
    }

    pub fn k(&self) -> usize {
        self.gamma.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.gamma.row(i)
    }

    /// Index of the largest responsibility in each row.
    pub fn hard_assignments(&self) -> Vec<usize> {
        self.gamma
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &g)| if g > best.1 { (j, g) } else { best })
                    .0
            })
            .collect()
    }

    /// `−Σ γ log γ`.
    pub fn entropy(&self) -> f64 {
        -self
            .gamma
            .as_slice()
            .iter()
            .filter(|g| **g > 0.0)
            .map(|g| g * g.ln())
            .sum::<f64>()
    }

    pub(crate) fn floor(&mut self) {
        let k = self.gamma.cols();
        for i in 0..self.gamma.rows() {
            let row = self.gamma.row_mut(i);
            let mut s = 0.0;
            for g in row.iter_mut() {
                *g = g.max(GAMMA_FLOOR);
                s += *g;
            }
            if k > 0 {
                row.iter_mut().for_each(|g| *g /= s);
            }
        }
    }

    /// Sums column `j` into column `i` and drops `j`.
    pub(crate) fn merge_columns(&mut self, i: usize, j: usize) {
        let (n, k) = self.gamma.shape();
        let mut out = Matrix::zeros(n, k - 1);
        for r in 0..n {
            let src = self.gamma.row(r);
            let dst = out.row_mut(r);
            let mut c = 0;
            for (col, v) in src.iter().enumerate() {
                if col == j {
                    continue;
                }
                dst[c] = if col == i { v + src[j] } else { *v };
                c += 1;
            }
        }
        self.gamma = out;
    }

    /// Drops column `j` and renormalizes.
    pub(crate) fn remove_column(&mut self, j: usize) {
        let (n, k) = self.gamma.shape();
        let mut out = Matrix::zeros(n, k - 1);
        for r in 0..n {
            let src = self.gamma.row(r);
            let kept: Vec<f64> = src
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != j)
                .map(|(_, v)| *v)
                .collect();
            let s: f64 = kept.iter().sum();
            for (d, v) in out.row_mut(r).iter_mut().zip(kept) {
                *d = v / s;
            }
        }
        self.gamma = out;
    }
}

/// Weighted zero/first/second moments of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub n: f64,
    pub sum_z: Vec<f64>,
    pub sum_zz: Matrix,
}

impl ClusterStats {
    pub fn zeros(dim: usize) -> Self {
        Self {
            n: 0.0,
            sum_z: vec![0.0; dim],
            sum_zz: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.sum_z.len()
    }

    /// `z̄ = sum_z / N`, or zero when the cluster is empty.
    pub fn mean(&self) -> Vec<f64> {
        if self.n > 0.0 {
            self.sum_z.iter().map(|v| v / self.n).collect()
        } else {
            vec![0.0; self.dim()]
        }
    }

    /// `N·S`, the scatter about the weighted mean.
    pub fn centered_scatter(&self) -> Matrix {
        let mut s = self.sum_zz.clone();
        if self.n > 0.0 {
            s.add_outer(-1.0 / self.n, &self.sum_z, &self.sum_z);
        }
        s.symmetrize();
        s
    }

    /// `S = sum_zz / N − z̄ z̄ᵀ`.
    pub fn scatter(&self) -> Matrix {
        let mut s = self.centered_scatter();
        if self.n > 0.0 {
            s.scale(1.0 / self.n);
        }
        s
    }

    pub fn add(&mut self, other: &ClusterStats) {
        self.n += other.n;
        self.sum_z.iter_mut().zip(&other.sum_z).for_each(|(a, b)| *a += b);
        self.sum_zz.add_assign(&other.sum_zz);
    }

    /// Subtracts, clamping rounding-level negative counts to an empty record.
    pub fn sub(&mut self, other: &ClusterStats) {
        self.n -= other.n;
        self.sum_z.iter_mut().zip(&other.sum_z).for_each(|(a, b)| *a -= b);
        self.sum_zz.sub_assign(&other.sum_zz);
        if self.n < 0.0 {
            *self = Self::zeros(self.dim());
        }
    }
}

/// Per-cluster sufficient statistics `(Nₖ, Σγz, Σγzzᵀ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffStats {
    pub dim: usize,
    pub clusters: Vec<ClusterStats>,
}

impl SuffStats {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Self {
            dim,
            clusters: (0..k).map(|_| ClusterStats::zeros(dim)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.n).collect()
    }

    pub fn total(&self) -> f64 {
        self.clusters.iter().map(|c| c.n).sum()
    }

    pub fn add(&mut self, other: &SuffStats) {
        debug_assert_eq!(self.k(), other.k());
        self.clusters.iter_mut().zip(&other.clusters).for_each(|(a, b)| a.add(b));
    }

    pub fn sub(&mut self, other: &SuffStats) {
        debug_assert_eq!(self.k(), other.k());
        self.clusters.iter_mut().zip(&other.clusters).for_each(|(a, b)| a.sub(b));
    }

    /// Largest absolute entry-wise difference across all records.
    pub fn max_abs_diff(&self, other: &SuffStats) -> f64 {
        self.clusters
            .iter()
            .zip(&other.clusters)
            .map(|(a, b)| {
                let dn = (a.n - b.n).abs();
                let dz = a
                    .sum_z
                    .iter()
                    .zip(&b.sum_z)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                dn.max(dz).max(a.sum_zz.max_abs_diff(&b.sum_zz))
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn append_empty(&mut self, count: usize) {
        for _ in 0..count {
            self.clusters.push(ClusterStats::zeros(self.dim));
        }
    }

    pub(crate) fn merge_clusters(&mut self, i: usize, j: usize) {
        let removed = self.clusters.remove(j);
        self.clusters[i].add(&removed);
    }

    pub(crate) fn remove_cluster(&mut self, j: usize) {
        self.clusters.remove(j);
    }
}

/// Accumulates per-cluster sufficient statistics of `z` under `gamma`.
pub fn compute_suffstats(z: &Matrix, gamma: &Responsibilities) -> Result<SuffStats> {
    if z.rows() != gamma.n() {
        return Err(Error::shape(format!(
            "{} latent rows but {} responsibility rows",
            z.rows(),
            gamma.n()
        )));
    }
    let dim = z.cols();
    let mut stats = SuffStats::zeros(gamma.k(), dim);
    for (zi, gi) in z.row_iter().zip(gamma.matrix().row_iter()) {
        for (cs, &g) in stats.clusters.iter_mut().zip(gi) {
            if g == 0.0 {
                continue;
            }
            cs.n += g;
            cs.sum_z.iter_mut().zip(zi).for_each(|(s, v)| *s += g * v);
            cs.sum_zz.add_outer(g, zi, zi);
        }
    }
    for cs in &mut stats.clusters {
        cs.sum_zz.symmetrize();
    }
    Ok(stats)
}
