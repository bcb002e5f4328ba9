//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use statrs::function::gamma::ln_gamma;

/// Plain Gaussian density, written out rather than borrowed from the crate.
pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Kernel `α · κ(lag)` for lag > 0.
pub fn kernel(lag: f64, alpha: &[f64], means: &[f64], sigmas: &[f64]) -> f64 {
    if lag <= 0.0 {
        return 0.0;
    }
    alpha
        .iter()
        .zip(means.iter().zip(sigmas))
        .map(|(a, (m, s))| a * normal_pdf(lag, *m, *s))
        .sum()
}

pub fn intensity(times: &[f64], t: f64, alpha: &[f64], means: &[f64], sigmas: &[f64]) -> f64 {
    times.iter().map(|&ti| kernel(t - ti, alpha, means, sigmas)).sum()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫_{t0}^{t1} λ(t) dt` by quadrature. Each event and basis entry is
/// integrated separately over pieces one sigma wide around the bump.
pub fn quadrature_compensator(times: &[f64], alpha: &[f64], means: &[f64], sigmas: &[f64], t0: f64, t1: f64) -> f64 {
    let mut total = 0.0;
    for &ti in times {
        for l in 0..alpha.len() {
            if alpha[l] == 0.0 {
                continue;
            }
            let (m, s) = (means[l], sigmas[l]);
            let lo = (t0 - ti).max(0.0).max(m - 14.0 * s);
            let hi = (t1 - ti).min(m + 14.0 * s);
            if hi <= lo {
                continue;
            }
            let f = |x: f64| normal_pdf(x, m, s);
            let pieces = ((hi - lo) / s).ceil().max(1.0) as usize;
            let w = (hi - lo) / pieces as f64;
            let mut acc = 0.0;
            for p in 0..pieces {
                let a = lo + p as f64 * w;
                // relative tolerance: far tails hold tiny masses
                let rough = w / 6.0 * (f(a) + 4.0 * f(a + 0.5 * w) + f(a + w));
                acc += adaptive_simpson(&f, a, a + w, (1e-13 * rough).max(1e-300));
            }
            total += alpha[l] * acc;
        }
    }
    total
}

/// Hawkes log-likelihood recomputed from scratch: events with no earlier
/// event inside `reach` open the process and contribute no intensity factor.
pub fn batch_hawkes_loglik(times: &[f64], alpha: &[f64], means: &[f64], sigmas: &[f64], reach: f64, t_end: f64) -> f64 {
    let mut ll = 0.0;
    for (j, &tj) in times.iter().enumerate() {
        // the kernel support ends at `reach`
        let prev: Vec<f64> = times[..j].iter().copied().filter(|&ti| tj - ti <= reach).collect();
        if prev.iter().any(|&ti| tj - ti > 0.0) {
            let lam = intensity(&prev, tj, alpha, means, sigmas);
            ll += lam.ln();
        }
    }
    ll - erf_compensator(times, alpha, means, sigmas, times[0], t_end)
}

/// Closed-form compensator through the error function.
pub fn erf_compensator(times: &[f64], alpha: &[f64], means: &[f64], sigmas: &[f64], t0: f64, t1: f64) -> f64 {
    let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
    let mut total = 0.0;
    for &ti in times {
        for l in 0..alpha.len() {
            let (m, s) = (means[l], sigmas[l]);
            let upto = |lag: f64| if lag <= 0.0 { 0.0 } else { cdf((lag - m) / s) - cdf(-m / s) };
            total += alpha[l] * (upto(t1 - ti) - upto(t0 - ti));
        }
    }
    total
}

/// Sequential Pólya urn: tokens are drawn one at a time and each is added to
/// the counts before the next.
pub fn polya_urn_loglik(cluster: &HashMap<u32, u64>, tokens: &[u32], theta_word: f64, vocab: usize) -> f64 {
    let mut counts = cluster.clone();
    let mut n: u64 = counts.values().sum();
    let theta_total = theta_word * vocab as f64;
    let mut ll = 0.0;
    for &w in tokens {
        let c = counts.entry(w).or_insert(0);
        ll += ((*c as f64 + theta_word) / (n as f64 + theta_total)).ln();
        *c += 1;
        n += 1;
    }
    ll
}

/// Closed-form Dirichlet-multinomial predictive, token sequence version.
pub fn gamma_ratio_loglik(cluster: &HashMap<u32, u64>, tokens: &[u32], theta_word: f64, vocab: usize) -> f64 {
    let theta_total = theta_word * vocab as f64;
    let n: u64 = cluster.values().sum();
    let mut doc: HashMap<u32, u64> = HashMap::new();
    for &w in tokens {
        *doc.entry(w).or_insert(0) += 1;
    }
    let mut ll = ln_gamma(n as f64 + theta_total) - ln_gamma((n + tokens.len() as u64) as f64 + theta_total);
    for (w, c) in doc {
        let ncv = *cluster.get(&w).unwrap_or(&0) as f64;
        ll += ln_gamma(ncv + c as f64 + theta_word) - ln_gamma(ncv + theta_word);
    }
    ll
}

/// Dirichlet-Hawkes prior: `λ_c / (Σλ + λ0)`, new cluster `λ0 / (Σλ + λ0)`.
pub fn dhp_prior(lambdas: &[f64], lambda0: f64) -> Vec<f64> {
    let z: f64 = lambdas.iter().sum::<f64>() + lambda0;
    lambdas.iter().map(|l| l / z).chain(std::iter::once(lambda0 / z)).collect()
}

/// Dirichlet-uniform prior: every live cluster weighs 1.
pub fn uniform_prior(n_live: usize, lambda0: f64) -> Vec<f64> {
    let z = n_live as f64 + lambda0;
    (0..n_live).map(|_| 1.0 / z).chain(std::iter::once(lambda0 / z)).collect()
}

/// Chinese restaurant process: `N_c / (N + α0)` and `α0 / (N + α0)`.
pub fn crp(counts: &[f64], alpha0: f64) -> Vec<f64> {
    dhp_prior(counts, alpha0)
}

/// Uniform process: `1 / (K + α0)` and `α0 / (K + α0)`.
pub fn uniform_process(k: usize, alpha0: f64) -> Vec<f64> {
    uniform_prior(k, alpha0)
}

/// NMI by the textbook double sum over all label pairs, geometric normalization.
pub fn brute_nmi(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    let mut la: Vec<u32> = a.to_vec();
    la.sort_unstable();
    la.dedup();
    let mut lb: Vec<u32> = b.to_vec();
    lb.sort_unstable();
    lb.dedup();
    let p = |xs: &[u32], v: u32| xs.iter().filter(|&&x| x == v).count() as f64 / n;
    let h = |xs: &[u32], ls: &[u32]| -ls.iter().map(|&v| p(xs, v) * p(xs, v).ln()).sum::<f64>();
    let (ha, hb) = (h(a, &la), h(b, &lb));
    if la.len() == 1 && lb.len() == 1 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for &x in &la {
        for &y in &lb {
            let pxy = a.iter().zip(b).filter(|(&u, &v)| u == x && v == y).count() as f64 / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (p(a, x) * p(b, y))).ln();
            }
        }
    }
    mi / (ha * hb).sqrt()
}

/// Shared area of two curves sampled on a common grid, over their mean area.
pub fn riemann_overlap(a: &[f64], b: &[f64]) -> f64 {
    let shared: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
    let mean = 0.5 * (a.iter().sum::<f64>() + b.iter().sum::<f64>());
    shared / mean
}
