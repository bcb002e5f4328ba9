//! Per-cluster Hawkes intensities over a fixed Gaussian kernel basis.
//!
//! The triggering kernel of a cluster is `α · κ(Δt)`, where `κ` is a vector of
//! normalized Gaussian densities and `α` a non-negative weight vector, so
//! `Σα` is the branching ratio. Kernel weights are never optimized directly:
//! a bank of candidate vectors is drawn once and every cluster keeps one
//! running log-likelihood per candidate ([`HawkesAccumulator`]).
//!
//! Events older than [`KernelBasis::reach`] are evicted from the working
//! window once their remaining kernel mass has been folded into the
//! compensator, which keeps the per-event cost bounded.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::math::{gaussian_pdf, sample_log_categorical, std_normal_cdf};

/// Number of standard deviations past the mean after which a basis entry is
/// treated as exhausted.
pub const TRUNCATION_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelBasisRepr", into = "KernelBasisRepr")]
pub struct KernelBasis {
    means: Vec<f64>,
    sigmas: Vec<f64>,
    reach: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelBasisRepr {
    means: Vec<f64>,
    sigmas: Vec<f64>,
}

impl TryFrom<KernelBasisRepr> for KernelBasis {
    type Error = PdhpError;
    fn try_from(r: KernelBasisRepr) -> Result<Self> {
        KernelBasis::new(r.means, r.sigmas)
    }
}

impl From<KernelBasis> for KernelBasisRepr {
    fn from(b: KernelBasis) -> Self {
        KernelBasisRepr {
            means: b.means,
            sigmas: b.sigmas,
        }
    }
}

impl KernelBasis {
    pub fn new(means: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if means.is_empty() || means.len() != sigmas.len() {
            return Err(PdhpError::input(format!(
                "kernel basis needs equal, non-zero numbers of means and sigmas (got {} and {})",
                means.len(),
                sigmas.len()
            )));
        }
        if means.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(PdhpError::input("kernel means must be finite and non-negative"));
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(PdhpError::input("kernel sigmas must be finite and positive"));
        }
        let reach = means
            .iter()
            .zip(&sigmas)
            .map(|(m, s)| m + TRUNCATION_SIGMAS * s)
            .fold(0.0, f64::max);
        Ok(KernelBasis {
            means,
            sigmas,
            reach,
        })
    }

    /// Three narrow Gaussians at 3, 7 and 11 hours.
    pub fn synthetic() -> Self {
        KernelBasis::new(vec![3.0, 7.0, 11.0], vec![0.5; 3]).expect("static basis")
    }

    /// Twelve Gaussians spanning half an hour to one week.
    pub fn reddit() -> Self {
        KernelBasis::new(
            vec![0.5, 1.0, 4.0, 8.0, 12.0, 24.0, 48.0, 72.0, 96.0, 120.0, 144.0, 168.0],
            vec![1.0, 1.0, 3.0, 8.0, 12.0, 12.0, 24.0, 24.0, 24.0, 24.0, 24.0, 24.0],
        )
        .expect("static basis")
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Lag after which every basis entry is negligible: `max_l(μ_l + 10σ_l)`.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn min_sigma(&self) -> f64 {
        self.sigmas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Density of entry `l` at a strictly positive lag, zero otherwise.
    #[inline]
    pub fn density(&self, l: usize, lag: f64) -> f64 {
        if lag > 0.0 {
            gaussian_pdf(lag, self.means[l], self.sigmas[l])
        } else {
            0.0
        }
    }

    /// Kernel mass of entry `l` collected over lags in `[0, lag]`.
    #[inline]
    pub fn mass_until(&self, l: usize, lag: f64) -> f64 {
        if lag <= 0.0 {
            return 0.0;
        }
        let (m, s) = (self.means[l], self.sigmas[l]);
        std_normal_cdf((lag - m) / s) - std_normal_cdf(-m / s)
    }

    /// Kernel mass of entry `l` over lags in `[lo, hi]`, clipped at zero; `hi`
    /// may be infinite. Upper-tail differences go through the survival
    /// function so that they keep their relative precision.
    #[inline]
    pub fn mass_between(&self, l: usize, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        if hi <= lo {
            return 0.0;
        }
        let (m, s) = (self.means[l], self.sigmas[l]);
        let (za, zb) = ((lo - m) / s, (hi - m) / s);
        if za > 0.0 {
            std_normal_cdf(-za) - std_normal_cdf(-zb)
        } else {
            std_normal_cdf(zb) - std_normal_cdf(za)
        }
    }

    /// Kernel mass of entry `l` over lags in `[0, ∞)`.
    #[inline]
    pub fn total_mass(&self, l: usize) -> f64 {
        let (m, s) = (self.means[l], self.sigmas[l]);
        1.0 - std_normal_cdf(-m / s)
    }

    /// Upper bound of entry `l`'s density over lags in `[lo, hi]`.
    pub fn max_density_on(&self, l: usize, lo: f64, hi: f64) -> f64 {
        let hi = hi.max(0.0);
        if hi <= 0.0 {
            return 0.0;
        }
        let lo = lo.max(0.0);
        let m = self.means[l];
        let at = if m < lo {
            lo
        } else if m > hi {
            hi
        } else {
            m
        };
        gaussian_pdf(at, m, self.sigmas[l])
    }

    /// Per-entry excitation `Σ_{t_i < t} κ_l(t − t_i)` over `times`.
    pub fn excitation(&self, times: &[f64], t: f64) -> Vec<f64> {
        let mut k = vec![0.0; self.len()];
        self.add_excitation(times, t, f64::INFINITY, &mut k);
        k
    }

    /// Accumulates per-entry excitation of events whose lag is in `(0, max_lag]`.
    pub(crate) fn add_excitation(&self, times: &[f64], t: f64, max_lag: f64, out: &mut [f64]) {
        for &ti in times {
            let lag = t - ti;
            if lag <= 0.0 || lag > max_lag {
                continue;
            }
            for (l, o) in out.iter_mut().enumerate() {
                *o += gaussian_pdf(lag, self.means[l], self.sigmas[l]);
            }
        }
    }
}

/// One candidate kernel-weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample(Vec<f64>);

impl AlphaSample {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PdhpError::input("alpha entries must be finite and non-negative"));
        }
        Ok(AlphaSample(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn branching_ratio(&self) -> f64 {
        self.0.iter().sum()
    }

    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// The fixed set of candidate kernel-weight vectors shared by every cluster.
#[derive(Debug, Clone)]
pub struct AlphaBank {
    dim: usize,
    flat: Vec<f64>,
}

impl AlphaBank {
    pub fn from_samples(samples: &[AlphaSample]) -> Result<Self> {
        let dim = samples
            .first()
            .map(|s| s.0.len())
            .ok_or_else(|| PdhpError::input("alpha bank needs at least one sample"))?;
        if samples.iter().any(|s| s.0.len() != dim) {
            return Err(PdhpError::input("alpha samples must share one dimension"));
        }
        Ok(AlphaBank {
            dim,
            flat: samples.iter().flat_map(|s| s.0.iter().copied()).collect(),
        })
    }

    /// `n` vectors with i.i.d. Uniform(0, alpha_max) entries.
    pub fn uniform<R: Rng + ?Sized>(n: usize, dim: usize, alpha_max: f64, rng: &mut R) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(PdhpError::input("alpha bank needs n >= 1 and dim >= 1"));
        }
        if !(alpha_max > 0.0) || !alpha_max.is_finite() {
            return Err(PdhpError::input("alpha_max must be positive and finite"));
        }
        let flat = (0..n * dim).map(|_| rng.random::<f64>() * alpha_max).collect();
        Ok(AlphaBank { dim, flat })
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn weights(&self, s: usize) -> &[f64] {
        &self.flat[s * self.dim..(s + 1) * self.dim]
    }

    pub fn sample(&self, s: usize) -> AlphaSample {
        AlphaSample(self.weights(s).to_vec())
    }

    #[inline]
    fn dot(&self, s: usize, v: &[f64]) -> f64 {
        self.weights(s).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Event times of one cluster, non-decreasing.
///
/// `retained_from` marks the first event still inside the working window;
/// earlier events have been folded into the owning accumulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventHistory {
    times: Vec<f64>,
    retained_from: usize,
}

impl EventHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(PdhpError::input("event times must be finite"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(PdhpError::input("event times must be sorted"));
        }
        Ok(EventHistory {
            times,
            retained_from: 0,
        })
    }

    pub fn push(&mut self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(PdhpError::input("event time must be finite"));
        }
        if let Some(&last) = self.times.last() {
            if t < last {
                return Err(PdhpError::Ordering {
                    what: "cluster event".into(),
                    time: t,
                    frontier: last,
                });
            }
        }
        self.times.push(t);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn retained(&self) -> &[f64] {
        &self.times[self.retained_from..]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// True if some retained event still excites at time `t`.
    pub fn has_live_events(&self, t: f64, reach: f64) -> bool {
        self.retained().iter().any(|&ti| t - ti <= reach)
    }
}

/// Intensity `Σ_{t_i<t} α·κ(t − t_i)` from the full history, without truncation.
pub fn intensity(history: &EventHistory, alpha: &AlphaSample, basis: &KernelBasis, t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(PdhpError::input("intensity evaluated at a non-finite time"));
    }
    check_dim(alpha, basis)?;
    Ok(alpha.dot(&basis.excitation(history.times(), t)))
}

/// `∫_{t0}^{t1} λ(t) dt` in closed form.
pub fn compensator(
    history: &EventHistory,
    alpha: &AlphaSample,
    basis: &KernelBasis,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(PdhpError::input("compensator bounds must be finite"));
    }
    if t1 < t0 {
        return Err(PdhpError::input(format!("compensator window reversed: [{t0}, {t1}]")));
    }
    check_dim(alpha, basis)?;
    let mut total = 0.0;
    for &ti in history.times() {
        for (l, a) in alpha.weights().iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            total += a * basis.mass_between(l, t0 - ti, t1 - ti);
        }
    }
    Ok(total)
}

fn check_dim(alpha: &AlphaSample, basis: &KernelBasis) -> Result<()> {
    if alpha.weights().len() != basis.len() {
        return Err(PdhpError::input(format!(
            "alpha has {} entries but the basis has {}",
            alpha.weights().len(),
            basis.len()
        )));
    }
    Ok(())
}

/// Running Hawkes log-likelihood of one cluster under every bank sample.
///
/// The compensator is linear in `α`, so it is stored once per basis entry;
/// the per-sample compensator is `α_s · basis_mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesAccumulator {
    log_intensity: Vec<f64>,
    basis_mass: Vec<f64>,
    last_update: f64,
}

/// How an absorbed event entered the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// No prior event was still exciting: attributed to the base rate, no
    /// intensity factor.
    Opening,
    /// Attributed to the cluster's own intensity.
    Triggered,
}

impl HawkesAccumulator {
    pub fn new(n_samples: usize, n_basis: usize, start: f64) -> Self {
        HawkesAccumulator {
            log_intensity: vec![0.0; n_samples],
            basis_mass: vec![0.0; n_basis],
            last_update: start,
        }
    }

    pub fn last_update(&self) -> f64 {
        self.last_update
    }

    pub fn n_samples(&self) -> usize {
        self.log_intensity.len()
    }

    pub fn log_intensity_sum(&self, s: usize) -> f64 {
        self.log_intensity[s]
    }

    /// Integrated kernel mass per basis entry.
    pub fn basis_mass(&self) -> &[f64] {
        &self.basis_mass
    }

    pub fn compensator(&self, bank: &AlphaBank, s: usize) -> f64 {
        bank.dot(s, &self.basis_mass)
    }

    pub fn log_likelihood(&self, bank: &AlphaBank, s: usize) -> f64 {
        let li = self.log_intensity[s];
        if li == f64::NEG_INFINITY {
            return li;
        }
        li - self.compensator(bank, s)
    }

    pub fn log_likelihoods(&self, bank: &AlphaBank) -> Vec<f64> {
        (0..self.n_samples()).map(|s| self.log_likelihood(bank, s)).collect()
    }

    /// Integrates the retained events up to `t` and evicts those that can no
    /// longer excite, adding their remaining kernel mass in closed form.
    pub fn advance(&mut self, history: &mut EventHistory, basis: &KernelBasis, t: f64) -> Result<()> {
        if t < self.last_update {
            return Err(PdhpError::Ordering {
                what: "accumulator update".into(),
                time: t,
                frontier: self.last_update,
            });
        }
        let from = self.last_update;
        let reach = basis.reach();
        let mut evict = 0;
        for (k, &ti) in history.retained().iter().enumerate() {
            let expired = t - ti > reach;
            for (l, m) in self.basis_mass.iter_mut().enumerate() {
                let hi = if expired { f64::INFINITY } else { t - ti };
                *m += basis.mass_between(l, from - ti, hi);
            }
            // retained times are sorted, so expired events form a prefix
            if expired && k == evict {
                evict += 1;
            }
        }
        debug_assert!(history.retained()[evict..].iter().all(|&ti| t - ti <= reach));
        history.retained_from += evict;
        self.last_update = t;
        Ok(())
    }

    /// Adds an event at `t_new`: advances the compensator, adds `ln λ_s(t_new)`
    /// for every sample (unless the event is an opening event), and appends
    /// the event to `history`.
    ///
    /// Fails with [`PdhpError::DegenerateCluster`], leaving the event out, if
    /// no sample with non-zero likelihood gives the event positive intensity.
    pub fn accumulate_event(
        &mut self,
        history: &mut EventHistory,
        bank: &AlphaBank,
        basis: &KernelBasis,
        t_new: f64,
    ) -> Result<EventKind> {
        if bank.len() != self.n_samples() || bank.dim() != basis.len() {
            return Err(PdhpError::input("alpha bank does not match accumulator or basis"));
        }
        self.advance(history, basis, t_new)?;
        let mut k = vec![0.0; basis.len()];
        basis.add_excitation(history.retained(), t_new, basis.reach(), &mut k);
        let kind = if history.retained().iter().any(|&ti| t_new - ti > 0.0) {
            let explained = (0..self.n_samples())
                .any(|s| self.log_intensity[s] != f64::NEG_INFINITY && bank.dot(s, &k) > 0.0);
            if !explained {
                return Err(PdhpError::DegenerateCluster);
            }
            for (s, li) in self.log_intensity.iter_mut().enumerate() {
                if *li == f64::NEG_INFINITY {
                    continue;
                }
                let lambda = bank.dot(s, &k);
                *li += if lambda > 0.0 { lambda.ln() } else { f64::NEG_INFINITY };
            }
            EventKind::Triggered
        } else {
            EventKind::Opening
        };
        history.push(t_new)?;
        Ok(kind)
    }

    /// Draws a bank index with probability proportional to its likelihood.
    pub fn sample_alpha<R: Rng + ?Sized>(&self, bank: &AlphaBank, rng: &mut R) -> Result<usize> {
        let ll = self.log_likelihoods(bank);
        sample_log_categorical(&ll, rng).ok_or(PdhpError::DegenerateCluster)
    }

    /// Highest-likelihood bank index; ties go to the lowest index.
    pub fn map_alpha(&self, bank: &AlphaBank) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for s in 0..self.n_samples() {
            let ll = self.log_likelihood(bank, s);
            if ll == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, b)| ll > b) {
                best = Some((s, ll));
            }
        }
        best.map(|(s, _)| s).ok_or(PdhpError::DegenerateCluster)
    }

    pub fn is_degenerate(&self) -> bool {
        self.log_intensity.iter().all(|&l| l == f64::NEG_INFINITY)
    }
}
