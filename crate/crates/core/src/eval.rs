//! Clustering metrics: NMI, the text/time NMI gap, kernel-weight error.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmiNorm {
    /// `I / sqrt(H(A) H(B))`
    #[default]
    Geometric,
    /// `2I / (H(A) + H(B))`
    Arithmetic,
}

/// Contingency counts keyed by `(a, b)` label pairs, in sorted order.
pub fn contingency(a: &[u32], b: &[u32]) -> Result<BTreeMap<(u32, u32), u64>> {
    if a.len() != b.len() {
        return Err(PdhpError::input(format!("label lengths differ: {} vs {}", a.len(), b.len())));
    }
    let mut table = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
    }
    Ok(table)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    -counts
        .map(|c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Normalized mutual information between two labelings of the same items.
pub fn nmi(a: &[u32], b: &[u32], norm: NmiNorm) -> Result<f64> {
    if a.is_empty() {
        return Err(PdhpError::input("nmi needs at least one item"));
    }
    let table = contingency(a, b)?;
    let n = a.len() as f64;
    let mut ra: BTreeMap<u32, u64> = BTreeMap::new();
    let mut rb: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(x, y), &c) in &table {
        *ra.entry(x).or_insert(0) += c;
        *rb.entry(y).or_insert(0) += c;
    }
    let ha = entropy(ra.values().copied(), n);
    let hb = entropy(rb.values().copied(), n);
    if ra.len() == 1 && rb.len() == 1 {
        return Ok(1.0);
    }
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = table
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            c / n * (c * n / (ra[&x] as f64 * rb[&y] as f64)).ln()
        })
        .sum();
    let v = match norm {
        NmiNorm::Geometric => mi / (ha * hb).sqrt(),
        NmiNorm::Arithmetic => 2.0 * mi / (ha + hb),
    };
    Ok(v.clamp(0.0, 1.0))
}

/// `NMI(pred, textual) − NMI(pred, temporal)`.
pub fn delta_nmi(pred: &[u32], temporal: &[u32], textual: &[u32], norm: NmiNorm) -> Result<f64> {
    Ok(nmi(pred, textual, norm)? - nmi(pred, temporal, norm)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    /// `None` when no inferred cluster could be matched to a true one.
    pub mae: Option<f64>,
    /// `(true cluster, inferred cluster)` pairs used.
    pub matched: Vec<(u32, u32)>,
    pub unmatched_inferred: usize,
}

/// Maximum-overlap one-to-one matching between true and inferred labels.
/// Pairs that share no item are dropped.
pub fn match_clusters(truth: &[u32], pred: &[u32]) -> Result<Vec<(u32, u32)>> {
    let table = contingency(truth, pred)?;
    let rows: Vec<u32> = truth.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let cols: Vec<u32> = pred.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let count = |t: u32, p: u32| *table.get(&(t, p)).unwrap_or(&0) as i64;
    let transposed = rows.len() > cols.len();
    let (r, c) = if transposed { (&cols, &rows) } else { (&rows, &cols) };
    let weights = Matrix::from_fn(r.len(), c.len(), |(i, j)| {
        if transposed {
            count(c[j], r[i])
        } else {
            count(r[i], c[j])
        }
    });
    let (_, assignment) = kuhn_munkres(&weights);
    let mut pairs: Vec<(u32, u32)> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| if transposed { (c[j], r[i]) } else { (r[i], c[j]) })
        .filter(|&(t, p)| count(t, p) > 0)
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Mean absolute error between true and inferred kernel weights over
/// matched clusters and kernel entries.
pub fn alpha_mae(
    truth: &[u32],
    pred: &[u32],
    true_alphas: &BTreeMap<u32, Vec<f64>>,
    inferred_alphas: &BTreeMap<u32, Vec<f64>>,
) -> Result<MaeReport> {
    let matched: Vec<(u32, u32)> = match_clusters(truth, pred)?
        .into_iter()
        .filter(|(t, p)| true_alphas.contains_key(t) && inferred_alphas.contains_key(p))
        .collect();
    let mut total = 0.0;
    let mut n = 0usize;
    for (t, p) in &matched {
        let (a, b) = (&true_alphas[t], &inferred_alphas[p]);
        if a.len() != b.len() {
            return Err(PdhpError::input(format!(
                "alpha dimensions differ for clusters {t} and {p}: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        total += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        n += a.len();
    }
    let distinct_pred = pred.iter().collect::<std::collections::BTreeSet<_>>().len();
    Ok(MaeReport {
        mae: (n > 0).then(|| total / n as f64),
        unmatched_inferred: distinct_pred - matched.len(),
        matched,
    })
}

/// Event-weighted mean of per-cluster entropies; `None` if nothing is defined.
pub fn weighted_entropy(clusters: impl IntoIterator<Item = (Option<f64>, usize)>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0usize);
    for (h, n) in clusters {
        if let Some(h) = h {
            num += h * n as f64;
            den += n;
        }
    }
    (den > 0).then(|| num / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmi_examples() {
        let g = NmiNorm::Geometric;
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1], g).unwrap(), 0.0);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0], g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 2, 0], g).unwrap(), 0.0);
        assert_eq!(nmi(&[3, 3], &[7, 7], g).unwrap(), 1.0);
        assert!(nmi(&[0, 1], &[0], g).is_err());
        assert!(nmi(&[], &[], g).is_err());
    }

    #[test]
    fn delta_nmi_signs() {
        let g = NmiNorm::Geometric;
        let temporal = [0, 0, 0, 1, 1, 1];
        let textual = [0, 1, 0, 1, 0, 1];
        assert_eq!(delta_nmi(&temporal, &temporal, &temporal, g).unwrap(), 0.0);
        assert!(delta_nmi(&textual, &temporal, &textual, g).unwrap() > 0.0);
        assert!(delta_nmi(&temporal, &temporal, &textual, g).unwrap() < 0.0);
    }

    #[test]
    fn mae_examples() {
        let truth = [0, 0, 1, 1, 1];
        let pred = [5, 5, 2, 2, 9];
        let true_a = BTreeMap::from([(0, vec![0.1, 0.2]), (1, vec![0.3, 0.4])]);
        let same = BTreeMap::from([(5, vec![0.1, 0.2]), (2, vec![0.3, 0.4]), (9, vec![0.0, 0.0])]);
        let r = alpha_mae(&truth, &pred, &true_a, &same).unwrap();
        assert_eq!(r.mae, Some(0.0));
        assert_eq!(r.matched, vec![(0, 5), (1, 2)]);
        assert_eq!(r.unmatched_inferred, 1);
        let off = BTreeMap::from([(5, vec![0.15, 0.25]), (2, vec![0.35, 0.45])]);
        let r = alpha_mae(&truth, &pred, &true_a, &off).unwrap();
        assert!((r.mae.unwrap() - 0.05).abs() < 1e-12);
        let none = alpha_mae(&truth, &pred, &true_a, &BTreeMap::new()).unwrap();
        assert_eq!(none.mae, None);
    }

    #[test]
    fn matching_handles_more_truth_than_predictions() {
        let pairs = match_clusters(&[0, 1, 2, 2], &[4, 4, 4, 4]).unwrap();
        assert_eq!(pairs, vec![(2, 4)]);
    }
}
