mod common;

use std::collections::HashMap;

use pdhp::hawkes::{compensator, intensity, AlphaBank, AlphaSample, EventHistory, HawkesAccumulator, KernelBasis};
use pdhp::math::substream;
use pdhp::text::{cluster_entropy, predictive_log_likelihood, vocabulary_overlap, LnGammaTable};
use pdhp::{DocBag, TextPrior, WordCounts};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_tokens<R: Rng>(rng: &mut R, vocab: u32, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..vocab)).collect()
}

fn counts_of(tokens: &[u32]) -> HashMap<u32, u64> {
    let mut m = HashMap::new();
    for &w in tokens {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn word_counts(tokens: &[u32]) -> WordCounts {
    let mut wc = WordCounts::new();
    if !tokens.is_empty() {
        wc.absorb(&DocBag::from_tokens(tokens).unwrap());
    }
    wc
}

#[test]
fn text_predictive_matches_polya_urn() {
    let mut rng = substream(11, 0, 0);
    for _ in 0..1000 {
        let vocab = rng.random_range(2..300u32);
        let theta_word = 10f64.powf(rng.random_range(-3.0..1.0));
        let (nc, nd) = (rng.random_range(0..200), rng.random_range(1..40));
        let cluster_tokens = random_tokens(&mut rng, vocab, nc);
        let doc_tokens = random_tokens(&mut rng, vocab, nd);
        let prior = TextPrior::per_word(theta_word, vocab as usize).unwrap();
        let bag = DocBag::from_tokens(&doc_tokens).unwrap();
        let wc = word_counts(&cluster_tokens);
        let oracle = common::polya_urn_loglik(&counts_of(&cluster_tokens), &doc_tokens, theta_word, vocab as usize);
        let direct = predictive_log_likelihood(&wc, &bag, &prior).unwrap();
        let table = LnGammaTable::new(prior, 64).predictive_log_likelihood(&wc, &bag);
        assert!(rel_err(direct, oracle) < 1e-9, "{direct} vs {oracle}");
        assert!(rel_err(table, oracle) < 1e-9, "{table} vs {oracle}");
    }
}

#[test]
fn aggregate_prior_spreads_concentration() {
    let p = TextPrior::from_aggregate(1.0, 1000).unwrap();
    assert!((p.theta_word() - 1e-3).abs() < 1e-18);
    assert!((p.theta_total() - 1.0).abs() < 1e-12);
}

fn basis_strategy() -> impl Strategy<Value = KernelBasis> {
    prop::collection::vec((0.0f64..20.0, 0.2f64..4.0), 1..4)
        .prop_map(|v| KernelBasis::new(v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect()).unwrap())
}

fn times_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..6.0, 1..max_len).prop_map(|gaps| {
        let mut t = 0.0;
        gaps.iter()
            .map(|g| {
                t += g;
                t
            })
            .collect()
    })
}

#[test]
fn compensator_matches_quadrature() {
    let mut rng = substream(12, 0, 0);
    for _ in 0..200 {
        let l = rng.random_range(1..5);
        let means: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..30.0)).collect();
        let sigmas: Vec<f64> = (0..l).map(|_| rng.random_range(0.3..6.0)).collect();
        let alpha: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut t = 0.0;
        let times: Vec<f64> = (0..rng.random_range(1..25))
            .map(|_| {
                t += rng.random_range(0.0..8.0);
                t
            })
            .collect();
        let t0 = rng.random_range(0.0..t + 1.0);
        let t1 = t0 + rng.random_range(0.5..80.0);
        let basis = KernelBasis::new(means.clone(), sigmas.clone()).unwrap();
        let h = EventHistory::from_times(times.clone()).unwrap();
        let a = AlphaSample::new(alpha.clone()).unwrap();
        let got = compensator(&h, &a, &basis, t0, t1).unwrap();
        let want = common::quadrature_compensator(&times, &alpha, &means, &sigmas, t0, t1);
        if want.abs() < 1e-12 {
            assert!(got.abs() < 1e-10);
        } else {
            assert!(rel_err(got, want) < 1e-6, "{got} vs {want}");
        }
    }
}

#[test]
fn sample_alpha_matches_categorical() {
    let basis = KernelBasis::synthetic();
    let samples = [vec![0.2, 0.5, 0.1], vec![0.6, 0.1, 0.3], vec![0.3, 0.3, 0.3]];
    let bank = AlphaBank::from_samples(&samples.iter().map(|s| AlphaSample::new(s.clone()).unwrap()).collect::<Vec<_>>())
        .unwrap();
    let times = [0.0, 3.1, 6.8, 7.2, 10.0, 13.9];
    let mut h = EventHistory::new();
    let mut acc = HawkesAccumulator::new(3, 3, times[0]);
    for &t in &times {
        acc.accumulate_event(&mut h, &bank, &basis, t).unwrap();
    }
    let ll: Vec<f64> = samples
        .iter()
        .map(|a| common::batch_hawkes_loglik(&times, a, basis.means(), basis.sigmas(), basis.reach(), 13.9))
        .collect();
    let m = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = ll.iter().map(|x| (x - m).exp()).sum();
    let p: Vec<f64> = ll.iter().map(|x| (x - m).exp() / z).collect();

    let n = 10_000;
    let mut hits = [0usize; 3];
    let mut rng = substream(13, 0, 0);
    for _ in 0..n {
        hits[acc.sample_alpha(&bank, &mut rng).unwrap()] += 1;
    }
    let chi2: f64 = (0..3)
        .map(|s| {
            let e = p[s] * n as f64;
            (hits[s] as f64 - e).powi(2) / e
        })
        .sum();
    let pval = ChiSquared::new(2.0).unwrap().sf(chi2);
    assert!(pval > 1e-3, "chi2 {chi2}, p {pval}, hits {hits:?}, expected {p:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn incremental_equals_batch(
        basis in basis_strategy(),
        times in times_strategy(30),
        raw_alphas in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..5),
        tail in 0.0f64..200.0,
    ) {
        let dim = basis.len();
        let alphas: Vec<Vec<f64>> = raw_alphas.iter().map(|a| a[..dim].to_vec()).collect();
        let bank = AlphaBank::from_samples(&alphas.iter().map(|a| AlphaSample::new(a.clone()).unwrap()).collect::<Vec<_>>()).unwrap();
        let mut h = EventHistory::new();
        let mut acc = HawkesAccumulator::new(bank.len(), dim, times[0]);
        let mut kept = Vec::new();
        for &t in &times {
            if acc.accumulate_event(&mut h, &bank, &basis, t).is_ok() {
                kept.push(t);
            } else {
                break;
            }
        }
        let t_end = kept.last().unwrap() + tail;
        acc.advance(&mut h, &basis, t_end).unwrap();
        for (s, a) in alphas.iter().enumerate() {
            let want = common::batch_hawkes_loglik(&kept, a, basis.means(), basis.sigmas(), basis.reach(), t_end);
            let got = acc.log_likelihood(&bank, s);
            if want.is_finite() {
                prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "sample {}: {} vs {}", s, got, want);
            } else {
                prop_assert_eq!(got, f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn compensator_monotone_in_horizon(
        basis in basis_strategy(),
        times in times_strategy(20),
        alpha in prop::collection::vec(0.0f64..1.0, 3),
        cuts in prop::collection::vec(0.0f64..150.0, 2..10),
    ) {
        let a = AlphaSample::new(alpha[..basis.len()].to_vec()).unwrap();
        let h = EventHistory::from_times(times).unwrap();
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for t in cuts {
            let c = compensator(&h, &a, &basis, 0.0, t).unwrap();
            prop_assert!(c >= prev - 1e-15, "{} < {}", c, prev);
            prev = c;
        }
    }

    #[test]
    fn intensity_ignores_history_order(
        basis in basis_strategy(),
        times in times_strategy(20),
        alpha in prop::collection::vec(0.0f64..1.0, 3),
        t in 0.0f64..150.0,
        seed in any::<u64>(),
    ) {
        let a = AlphaSample::new(alpha[..basis.len()].to_vec()).unwrap();
        let mut shuffled = times.clone();
        shuffled.shuffle(&mut substream(seed, 0, 0));
        shuffled.sort_by(f64::total_cmp);
        let x = intensity(&EventHistory::from_times(times.clone()).unwrap(), &a, &basis, t).unwrap();
        let y = intensity(&EventHistory::from_times(shuffled).unwrap(), &a, &basis, t).unwrap();
        prop_assert_eq!(x, y);
        let want = common::intensity(&times, t, a.weights(), basis.means(), basis.sigmas());
        prop_assert!((x - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn predictive_is_exchangeable(
        cluster in prop::collection::vec(0u32..50, 0..80),
        doc in prop::collection::vec(0u32..50, 1..30),
        theta in 0.001f64..5.0,
        seed in any::<u64>(),
    ) {
        let prior = TextPrior::per_word(theta, 50).unwrap();
        let wc = word_counts(&cluster);
        let closed = predictive_log_likelihood(&wc, &DocBag::from_tokens(&doc).unwrap(), &prior).unwrap();
        let mut order = doc.clone();
        order.shuffle(&mut substream(seed, 1, 0));
        let urn = common::polya_urn_loglik(&counts_of(&cluster), &order, theta, 50);
        let urn_orig = common::polya_urn_loglik(&counts_of(&cluster), &doc, theta, 50);
        prop_assert!(rel_err(closed, urn) < 1e-9);
        prop_assert!(rel_err(urn_orig, urn) < 1e-9);
        let shuffled = predictive_log_likelihood(&wc, &DocBag::from_tokens(&order).unwrap(), &prior).unwrap();
        prop_assert_eq!(closed, shuffled);
    }

    #[test]
    fn predictive_chain_rule(
        cluster in prop::collection::vec(0u32..40, 0..60),
        d1 in prop::collection::vec(0u32..40, 1..25),
        d2 in prop::collection::vec(0u32..40, 1..25),
        theta in 0.001f64..5.0,
    ) {
        let prior = TextPrior::per_word(theta, 40).unwrap();
        let mut wc = word_counts(&cluster);
        let b1 = DocBag::from_tokens(&d1).unwrap();
        let b2 = DocBag::from_tokens(&d2).unwrap();
        let merged: Vec<u32> = d1.iter().chain(&d2).copied().collect();
        let joint = predictive_log_likelihood(&wc, &DocBag::from_tokens(&merged).unwrap(), &prior).unwrap();
        let first = predictive_log_likelihood(&wc, &b1, &prior).unwrap();
        wc.absorb(&b1);
        let second = predictive_log_likelihood(&wc, &b2, &prior).unwrap();
        prop_assert!((first + second - joint).abs() <= 1e-9 * joint.abs().max(1.0));
    }

    #[test]
    fn entropy_in_unit_interval(tokens in prop::collection::vec(0u32..30, 1..200)) {
        let s = cluster_entropy(&word_counts(&tokens), 30).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn overlap_symmetric(a in prop::collection::vec(0.0f64..1.0, 1..40), seed in any::<u64>()) {
        let mut b = a.clone();
        b.shuffle(&mut substream(seed, 2, 0));
        let norm = |v: &[f64]| {
            let z: f64 = v.iter().sum::<f64>().max(1e-12);
            v.iter().map(|x| x / z).collect::<Vec<_>>()
        };
        let (a, b) = (norm(&a), norm(&b));
        let x = vocabulary_overlap(&a, &b).unwrap();
        let y = vocabulary_overlap(&b, &a).unwrap();
        prop_assert_eq!(x, y);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
    }
}

#[test]
fn entropy_is_one_only_for_uniform() {
    let all: Vec<u32> = (0..30).collect();
    assert!((cluster_entropy(&word_counts(&all), 30).unwrap() - 1.0).abs() < 1e-12);
    let mut skew = all.clone();
    skew.push(0);
    assert!(cluster_entropy(&word_counts(&skew), 30).unwrap() < 1.0);
    assert_eq!(cluster_entropy(&word_counts(&[4, 4, 4]), 30).unwrap(), 0.0);
}
