//! External clustering metrics computed from a class × cluster contingency
//! table. Natural logarithms throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts `a[i][j]` of points with class `i` in cluster `j`, over compacted ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub classes: Vec<usize>,
    pub clusters: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    pub class_totals: Vec<u64>,
    pub cluster_totals: Vec<u64>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(labels: &[usize], clusters: &[usize]) -> Result<Self> {
        if labels.len() != clusters.len() {
            return Err(Error::shape(format!(
                "{} labels but {} cluster assignments",
                labels.len(),
                clusters.len()
            )));
        }
        let class_ids = compact(labels);
        let cluster_ids = compact(clusters);
        let mut counts = vec![vec![0u64; cluster_ids.len()]; class_ids.len()];
        for (l, c) in labels.iter().zip(clusters) {
            counts[class_ids[l]][cluster_ids[c]] += 1;
        }
        let class_totals: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let cluster_totals: Vec<u64> = (0..cluster_ids.len())
            .map(|j| counts.iter().map(|r| r[j]).sum())
            .collect();
        Ok(Self {
            classes: class_ids.into_keys().collect(),
            clusters: cluster_ids.into_keys().collect(),
            counts,
            class_totals,
            cluster_totals,
            n: labels.len() as u64,
        })
    }

    fn entropy_of(totals: &[u64], n: u64) -> f64 {
        let n = n as f64;
        -totals
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    pub fn class_entropy(&self) -> f64 {
        Self::entropy_of(&self.class_totals, self.n)
    }

    pub fn cluster_entropy(&self) -> f64 {
        Self::entropy_of(&self.cluster_totals, self.n)
    }

    pub fn joint_entropy(&self) -> f64 {
        let cells: Vec<u64> = self.counts.iter().flatten().copied().collect();
        Self::entropy_of(&cells, self.n)
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let a = a as f64;
                let ai = self.class_totals[i] as f64;
                let bj = self.cluster_totals[j] as f64;
                mi += a / n * (a * n / (ai * bj)).ln();
            }
        }
        mi.max(0.0)
    }

    /// `H(C|K)`
    pub fn class_given_cluster(&self) -> f64 {
        let n = self.n as f64;
        let mut h = 0.0;
        for row in &self.counts {
            for (j, &a) in row.iter().enumerate() {
                if a > 0 {
                    h -= a as f64 / n * (a as f64 / self.cluster_totals[j] as f64).ln();
                }
            }
        }
        h.max(0.0)
    }

    /// `H(K|C)`
    pub fn cluster_given_class(&self) -> f64 {
        let n = self.n as f64;
        let mut h = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for &a in row {
                if a > 0 {
                    h -= a as f64 / n * (a as f64 / self.class_totals[i] as f64).ln();
                }
            }
        }
        h.max(0.0)
    }
}

fn compact(ids: &[usize]) -> BTreeMap<usize, usize> {
    let mut map = BTreeMap::new();
    for &id in ids {
        map.entry(id).or_insert(0);
    }
    for (i, v) in map.values_mut().enumerate() {
        *v = i;
    }
    map
}

fn non_empty(labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::domain("metrics need at least one point"));
    }
    Ok(())
}

/// `2 I(l, c) / (H(l) + H(c))`.
pub fn nmi(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(labels, clusters)?;
    non_empty(labels)?;
    let denom = t.class_entropy() + t.cluster_entropy();
    if denom == 0.0 {
        // both partitions are a single block, hence identical
        return Ok(1.0);
    }
    Ok((2.0 * t.mutual_information() / denom).clamp(0.0, 1.0))
}

fn choose2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(labels, clusters)?;
    if labels.len() < 2 {
        return Err(Error::domain("ARI needs at least two points"));
    }
    let index: f64 = t.counts.iter().flatten().map(|&a| choose2(a)).sum();
    let sum_a: f64 = t.class_totals.iter().map(|&a| choose2(a)).sum();
    let sum_b: f64 = t.cluster_totals.iter().map(|&b| choose2(b)).sum();
    let expected = sum_a * sum_b / choose2(t.n);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        // only reachable when both partitions are all-singletons or a single block
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// `1 − H(C|K)/H(C)`; 1 when `H(C) = 0` or `H(C, K) = 0`.
pub fn homogeneity(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(labels, clusters)?;
    non_empty(labels)?;
    Ok(homogeneity_of(&t))
}

fn homogeneity_of(t: &ContingencyTable) -> f64 {
    let hc = t.class_entropy();
    if hc == 0.0 || t.joint_entropy() == 0.0 {
        return 1.0;
    }
    (1.0 - t.class_given_cluster() / hc).clamp(0.0, 1.0)
}

/// `1 − H(K|C)/H(K)`; 1 when `H(K) = 0` or `H(K, C) = 0`.
pub fn completeness(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(labels, clusters)?;
    non_empty(labels)?;
    Ok(completeness_of(&t))
}

fn completeness_of(t: &ContingencyTable) -> f64 {
    let hk = t.cluster_entropy();
    if hk == 0.0 || t.joint_entropy() == 0.0 {
        return 1.0;
    }
    (1.0 - t.cluster_given_class() / hk).clamp(0.0, 1.0)
}

/// Weighted harmonic mean `(1 + β) h c / (β h + c)`.
pub fn v_measure(labels: &[usize], clusters: &[usize], beta: f64) -> Result<f64> {
    let t = ContingencyTable::new(labels, clusters)?;
    non_empty(labels)?;
    if !(beta > 0.0) {
        return Err(Error::domain(format!("V-measure weight must be positive, got {beta}")));
    }
    let h = homogeneity_of(&t);
    let c = completeness_of(&t);
    if beta * h + c == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + beta) * h * c / (beta * h + c))
}

/// All four partition metrics at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub nmi: f64,
    pub ari: f64,
    pub homogeneity: f64,
    pub v_measure: f64,
}

pub fn metric_report(labels: &[usize], clusters: &[usize]) -> Result<MetricReport> {
    Ok(MetricReport {
        nmi: nmi(labels, clusters)?,
        ari: if labels.len() >= 2 { ari(labels, clusters)? } else { 1.0 },
        homogeneity: homogeneity(labels, clusters)?,
        v_measure: v_measure(labels, clusters, 1.0)?,
    })
}

/// Detection quality for one novel class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyScore {
    pub label: usize,
    pub precision: f64,
    pub recall: f64,
    /// False when no cluster maps to the label; precision is then reported as 0.
    pub precision_defined: bool,
    /// Predicted clusters whose majority class is `label`.
    pub clusters: Vec<usize>,
}

/// Majority class of every predicted cluster (ties go to the smaller label).
pub fn majority_labels(labels: &[usize], clusters: &[usize]) -> Result<BTreeMap<usize, usize>> {
    let t = ContingencyTable::new(labels, clusters)?;
    let mut out = BTreeMap::new();
    for (j, &cluster) in t.clusters.iter().enumerate() {
        let mut best = (0u64, usize::MAX);
        for (i, &class) in t.classes.iter().enumerate() {
            let a = t.counts[i][j];
            if a > best.0 {
                best = (a, class);
            }
        }
        out.insert(cluster, best.1);
    }
    Ok(out)
}

/// Precision and recall of novel-class detection under majority-label mapping,
/// pooling every cluster mapped to the same label.
pub fn novelty_precision_recall(labels: &[usize], clusters: &[usize], novel: &[usize]) -> Result<Vec<NoveltyScore>> {
    let majority = majority_labels(labels, clusters)?;
    let mut out = Vec::with_capacity(novel.len());
    for &label in novel {
        let total = labels.iter().filter(|&&l| l == label).count();
        if total == 0 {
            return Err(Error::domain(format!("novel label {label} does not occur in the labels")));
        }
        let mapped: Vec<usize> = majority
            .iter()
            .filter(|(_, &m)| m == label)
            .map(|(&c, _)| c)
            .collect();
        let mut in_mapped = 0usize;
        let mut hits = 0usize;
        for (l, c) in labels.iter().zip(clusters) {
            if mapped.contains(c) {
                in_mapped += 1;
                if *l == label {
                    hits += 1;
                }
            }
        }
        let precision_defined = in_mapped > 0;
        out.push(NoveltyScore {
            label,
            precision: if precision_defined { hits as f64 / in_mapped as f64 } else { 0.0 },
            recall: hits as f64 / total as f64,
            precision_defined,
            clusters: mapped,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn nmi_examples() {
        assert!(close(nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0));
        assert!(close(nmi(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0));
        assert!(close(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0));
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ari_examples() {
        assert!(close(ari(&[0, 0, 1, 2], &[5, 5, 7, 9]).unwrap(), 1.0));
        assert!(close(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5));
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn homogeneity_examples() {
        assert!(close(homogeneity(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap(), 1.0));
        assert!(close(homogeneity(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap(), 0.0));
        // H(C) = ln 2; cluster 0 holds {0, 0, 1}, so H(C|K) = (3/4)·H(1/3, 2/3)
        let h13 = -(1.0 / 3.0f64) * (1.0 / 3.0f64).ln() - (2.0 / 3.0f64) * (2.0 / 3.0f64).ln();
        let expected = 1.0 - 0.75 * h13 / 2f64.ln();
        assert!(close(homogeneity(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), expected));
    }

    #[test]
    fn v_measure_examples() {
        assert!(close(v_measure(&[0, 1, 1, 2], &[3, 4, 4, 5], 1.0).unwrap(), 1.0));
        // transpose-symmetric table: h = c
        let l = [0, 0, 1, 1, 0, 1];
        let c = [0, 1, 0, 1, 0, 1];
        let h = homogeneity(&l, &c).unwrap();
        assert!(close(v_measure(&l, &c, 1.0).unwrap(), h));
    }

    #[test]
    fn novelty_examples() {
        const A: usize = 0;
        const B: usize = 1;
        let s = novelty_precision_recall(&[A, A, B, B], &[0, 0, 1, 1], &[B]).unwrap();
        assert_eq!((s[0].precision, s[0].recall), (1.0, 1.0));
        let s = novelty_precision_recall(&[A, A, B, B], &[0, 0, 0, 1], &[B]).unwrap();
        assert_eq!((s[0].precision, s[0].recall), (1.0, 0.5));
        let s = novelty_precision_recall(&[A, A, A, B], &[0, 0, 0, 0], &[B]).unwrap();
        assert_eq!((s[0].precision, s[0].recall), (0.0, 0.0));
        assert!(!s[0].precision_defined);
        assert!(novelty_precision_recall(&[A, A], &[0, 0], &[B]).is_err());
    }
}
