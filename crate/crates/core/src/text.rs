//! Collapsed Dirichlet-Multinomial text model.
//!
//! A document's word bag is scored against a cluster's accumulated word
//! counts through the Dirichlet-Multinomial posterior predictive:
//!
//! ```text
//! Γ(N_c + θ0) / Γ(N_c + n_i + θ0) · Π_v Γ(N_cv + n_iv + θ_v) / Γ(N_cv + θ_v)
//! ```
//!
//! with a symmetric per-word concentration `θ_v` and `θ0 = V·θ_v`.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, DefaultHasher};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{PdhpError, Result};

type FixedState = BuildHasherDefault<DefaultHasher>;

/// Sparse word counts of one cluster.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordCounts {
    counts: HashMap<u32, u64, FixedState>,
    total: u64,
}

impl WordCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, word: u32) -> u64 {
        self.counts.get(&word).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Entries sorted by word id.
    pub fn sorted(&self) -> Vec<(u32, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(&w, &c)| (w, c)).collect();
        v.sort_unstable();
        v
    }

    /// The `k` most frequent words, ties broken by word id.
    pub fn top(&self, k: usize) -> Vec<(u32, u64)> {
        let mut v = self.sorted();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(k);
        v
    }

    /// Adds a document's words.
    pub fn absorb(&mut self, doc: &DocBag) {
        for &(w, c) in doc.entries() {
            *self.counts.entry(w).or_insert(0) += u64::from(c);
        }
        self.total += u64::from(doc.total());
    }
}

/// Word bag of a single document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocBag {
    entries: Vec<(u32, u32)>,
    total: u32,
}

impl DocBag {
    /// Builds a bag from token ids, merging duplicates.
    pub fn from_tokens(tokens: &[u32]) -> Result<Self> {
        let mut ids = tokens.to_vec();
        ids.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match entries.last_mut() {
                Some((w, c)) if *w == id => *c += 1,
                _ => entries.push((id, 1)),
            }
        }
        Self::from_counts(entries)
    }

    /// Builds a bag from `(word, count)` pairs; zero counts are dropped and
    /// repeated ids merged.
    pub fn from_counts(mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        pairs.retain(|&(_, c)| c > 0);
        pairs.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::with_capacity(pairs.len());
        for (w, c) in pairs {
            match entries.last_mut() {
                Some((lw, lc)) if *lw == w => *lc += c,
                _ => entries.push((w, c)),
            }
        }
        let total = entries.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            return Err(PdhpError::input("document has no words"));
        }
        Ok(DocBag { entries, total })
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn max_word(&self) -> u32 {
        self.entries.last().map(|&(w, _)| w).unwrap_or(0)
    }
}

/// Symmetric Dirichlet prior over the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextPrior {
    per_word: f64,
    vocab_size: usize,
}

impl TextPrior {
    /// Prior with aggregate concentration `theta0` spread evenly over `vocab_size` words.
    pub fn from_aggregate(theta0: f64, vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(PdhpError::input("vocabulary size must be positive"));
        }
        Self::per_word(theta0 / vocab_size as f64, vocab_size)
    }

    pub fn per_word(theta: f64, vocab_size: usize) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(PdhpError::input("per-word concentration must be positive"));
        }
        if vocab_size == 0 {
            return Err(PdhpError::input("vocabulary size must be positive"));
        }
        Ok(TextPrior {
            per_word: theta,
            vocab_size,
        })
    }

    pub fn theta_word(&self) -> f64 {
        self.per_word
    }

    pub fn theta_total(&self) -> f64 {
        self.per_word * self.vocab_size as f64
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }
}

/// `ln Γ(k + θ_v)` and `ln Γ(k + θ0)` for small integers `k`, falling back to
/// direct evaluation beyond the table.
#[derive(Debug, Clone)]
pub struct LnGammaTable {
    prior: TextPrior,
    word: Vec<f64>,
    total: Vec<f64>,
}

impl LnGammaTable {
    pub const DEFAULT_SIZE: usize = 1 << 16;

    pub fn new(prior: TextPrior, size: usize) -> Self {
        let (tw, t0) = (prior.theta_word(), prior.theta_total());
        LnGammaTable {
            prior,
            word: (0..size).map(|k| ln_gamma(k as f64 + tw)).collect(),
            total: (0..size).map(|k| ln_gamma(k as f64 + t0)).collect(),
        }
    }

    pub fn prior(&self) -> &TextPrior {
        &self.prior
    }

    #[inline]
    fn word(&self, k: u64) -> f64 {
        match self.word.get(k as usize) {
            Some(&v) => v,
            None => ln_gamma(k as f64 + self.prior.theta_word()),
        }
    }

    #[inline]
    fn total(&self, k: u64) -> f64 {
        match self.total.get(k as usize) {
            Some(&v) => v,
            None => ln_gamma(k as f64 + self.prior.theta_total()),
        }
    }

    /// Log posterior predictive of `doc` given `cluster`'s counts.
    pub fn predictive_log_likelihood(&self, cluster: &WordCounts, doc: &DocBag) -> f64 {
        let nc = cluster.total();
        let mut ll = self.total(nc) - self.total(nc + u64::from(doc.total()));
        for &(w, c) in doc.entries() {
            let ncv = cluster.get(w);
            ll += self.word(ncv + u64::from(c)) - self.word(ncv);
        }
        ll
    }
}

/// Log posterior predictive of `doc` under `cluster` (an empty `WordCounts`
/// scores a brand-new cluster).
pub fn predictive_log_likelihood(cluster: &WordCounts, doc: &DocBag, prior: &TextPrior) -> Result<f64> {
    if doc.total() == 0 {
        return Err(PdhpError::input("empty document"));
    }
    let (tw, t0) = (prior.theta_word(), prior.theta_total());
    let nc = cluster.total() as f64;
    let mut ll = ln_gamma(nc + t0) - ln_gamma(nc + doc.total() as f64 + t0);
    for &(w, c) in doc.entries() {
        let ncv = cluster.get(w) as f64;
        ll += ln_gamma(ncv + c as f64 + tw) - ln_gamma(ncv + tw);
    }
    Ok(ll)
}

/// Normalized Shannon entropy of a cluster's word distribution, in `[0, 1]`.
pub fn cluster_entropy(cluster: &WordCounts, vocab_size: usize) -> Result<f64> {
    if vocab_size < 2 {
        return Err(PdhpError::input("entropy needs a vocabulary of at least two words"));
    }
    if cluster.total() == 0 {
        return Err(PdhpError::input("entropy of an empty cluster"));
    }
    let n = cluster.total() as f64;
    let h: f64 = cluster
        .sorted()
        .into_iter()
        .map(|(_, c)| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok((h / (vocab_size as f64).ln()).clamp(0.0, 1.0))
}

/// Shared probability mass `Σ_v min(p_A(v), p_B(v))`.
pub fn vocabulary_overlap(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(PdhpError::input(format!(
            "distributions over different vocabularies ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.min(*y)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior(v: usize, theta0: f64) -> TextPrior {
        TextPrior::from_aggregate(theta0, v).unwrap()
    }

    #[test]
    fn single_token_into_empty_cluster() {
        let p = prior(50, 2.0);
        let doc = DocBag::from_tokens(&[7]).unwrap();
        let ll = predictive_log_likelihood(&WordCounts::new(), &doc, &p).unwrap();
        assert!((ll - (p.theta_word() / p.theta_total()).ln()).abs() < 1e-12);
    }

    #[test]
    fn repeated_token_into_empty_cluster() {
        let p = prior(50, 2.0);
        let doc = DocBag::from_tokens(&[7, 7]).unwrap();
        let ll = predictive_log_likelihood(&WordCounts::new(), &doc, &p).unwrap();
        let (tw, t0) = (p.theta_word(), p.theta_total());
        let expected = (tw * (tw + 1.0) / (t0 * (t0 + 1.0))).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn table_matches_direct() {
        let p = prior(1000, 1.0);
        let table = LnGammaTable::new(p, 64);
        let mut c = WordCounts::new();
        c.absorb(&DocBag::from_tokens(&[1, 2, 2, 3, 900]).unwrap());
        for _ in 0..30 {
            c.absorb(&DocBag::from_tokens(&[2, 2, 5]).unwrap());
        }
        let doc = DocBag::from_tokens(&[2, 2, 2, 5, 6]).unwrap();
        let a = table.predictive_log_likelihood(&c, &doc);
        let b = predictive_log_likelihood(&c, &doc, &p).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn empty_doc_rejected() {
        assert!(DocBag::from_tokens(&[]).is_err());
        assert!(DocBag::from_counts(vec![(1, 0)]).is_err());
    }

    #[test]
    fn absorb_bookkeeping() {
        let doc = DocBag::from_counts(vec![(3, 2), (1, 1), (3, 1)]).unwrap();
        assert_eq!(doc.entries(), &[(1, 1), (3, 3)]);
        let mut c = WordCounts::new();
        c.absorb(&doc);
        assert_eq!(c.sorted(), vec![(1, 1), (3, 3)]);
        assert_eq!(c.total(), 4);
        c.absorb(&doc);
        assert_eq!(c.sorted(), vec![(1, 2), (3, 6)]);
        assert_eq!(c.total(), 8);
        assert_eq!(c.top(1), vec![(3, 6)]);
    }

    #[test]
    fn entropy_examples() {
        let mut one = WordCounts::new();
        one.absorb(&DocBag::from_tokens(&[4, 4, 4]).unwrap());
        assert_eq!(cluster_entropy(&one, 10).unwrap(), 0.0);

        let mut uniform = WordCounts::new();
        uniform.absorb(&DocBag::from_tokens(&[0, 1, 2, 3]).unwrap());
        assert!((cluster_entropy(&uniform, 4).unwrap() - 1.0).abs() < 1e-15);

        let mut two = WordCounts::new();
        two.absorb(&DocBag::from_tokens(&[0, 0, 1, 1]).unwrap());
        assert!((cluster_entropy(&two, 4).unwrap() - 0.5).abs() < 1e-15);

        assert!(cluster_entropy(&two, 1).is_err());
    }

    #[test]
    fn overlap_examples() {
        let v = 151;
        let mut a = vec![0.0; v];
        let mut b = vec![0.0; v];
        (1..=100).for_each(|i| a[i] = 1.0 / 100.0);
        (50..=150).for_each(|i| b[i] = 1.0 / 101.0);
        let o = vocabulary_overlap(&a, &b).unwrap();
        assert!((o - 0.5).abs() <= 0.01, "{o}");
        assert!((vocabulary_overlap(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut c = vec![0.0; v];
        c[0] = 1.0;
        assert_eq!(vocabulary_overlap(&a, &c).unwrap(), 0.0);
        assert!(vocabulary_overlap(&a, &c[..10]).is_err());
    }
}
