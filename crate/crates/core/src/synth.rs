//! Synthetic benchmark streams: one Hawkes process per cluster, uniform
//! vocabulary blocks per cluster, controlled textual and temporal overlap,
//! and an optional decorrelation of textual from temporal labels.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::hawkes::{AlphaSample, EventHistory, KernelBasis};
use crate::math::substream;
use crate::text::DocBag;

/// How the common area of two intensities is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapNorm {
    /// `∫min / (½∫λ_A + ½∫λ_B)`: the shared area relative to the mean area.
    #[default]
    MeanArea,
    /// `∫min / ∫max`: the shared area relative to the union.
    UnionArea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    pub n_clusters: usize,
    pub vocab_size: usize,
    pub words_per_doc: u32,
    pub kernel: KernelBasis,
    /// Immigrant rate per cluster, events per hour.
    pub immigrant_rate: f64,
    /// Hours.
    pub horizon: f64,
    pub vocab_overlap: f64,
    /// `None` leaves the simulated times untouched.
    pub intensity_overlap: Option<f64>,
    pub overlap_tolerance: f64,
    pub overlap_norm: OverlapNorm,
    pub decorrelation: f64,
    pub alpha_max: f64,
    /// Rescales every drawn α to this sum; `None` keeps the raw draw.
    pub branching_ratio: Option<f64>,
    pub allow_explosive: bool,
    /// Hours simulated before time 0 and discarded, so the kept window is
    /// close to stationary. `None` picks five relaxation times of the process.
    pub burn_in: Option<f64>,
    /// Fresh simulations tried when the intensity-overlap target cannot be
    /// reached by shifting.
    pub max_attempts: u32,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_clusters: 2,
            vocab_size: 1000,
            words_per_doc: 20,
            kernel: KernelBasis::synthetic(),
            immigrant_rate: 0.05,
            horizon: 1500.0,
            vocab_overlap: 0.0,
            intensity_overlap: Some(0.0),
            overlap_tolerance: 0.05,
            overlap_norm: OverlapNorm::MeanArea,
            decorrelation: 0.0,
            alpha_max: 1.0,
            branching_ratio: Some(0.98),
            allow_explosive: false,
            burn_in: None,
            max_attempts: 10,
            seed: 0,
        }
    }
}

fn unit_interval(x: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(PdhpError::input(format!("{what} must lie in [0, 1] (got {x})")));
    }
    Ok(())
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(PdhpError::input("n_clusters must be at least 1"));
        }
        if self.vocab_size < self.n_clusters {
            return Err(PdhpError::input("vocab_size must be at least n_clusters"));
        }
        if self.words_per_doc == 0 {
            return Err(PdhpError::input("words_per_doc must be at least 1"));
        }
        if !(self.immigrant_rate > 0.0) || !self.immigrant_rate.is_finite() {
            return Err(PdhpError::input("immigrant_rate must be positive"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(PdhpError::input("horizon must be positive"));
        }
        unit_interval(self.vocab_overlap, "vocab_overlap")?;
        if let Some(o) = self.intensity_overlap {
            unit_interval(o, "intensity_overlap")?;
            if self.n_clusters != 2 {
                return Err(PdhpError::input("intensity_overlap is defined for exactly two clusters"));
            }
        }
        unit_interval(self.decorrelation, "decorrelation")?;
        if self.max_attempts == 0 {
            return Err(PdhpError::input("max_attempts must be at least 1"));
        }
        if !(self.overlap_tolerance > 0.0) {
            return Err(PdhpError::input("overlap_tolerance must be positive"));
        }
        if !(self.alpha_max > 0.0) || !self.alpha_max.is_finite() {
            return Err(PdhpError::input("alpha_max must be positive"));
        }
        if let Some(b) = self.burn_in {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(PdhpError::input("burn_in must be finite and >= 0"));
            }
        }
        if let Some(b) = self.branching_ratio {
            if !(b > 0.0) || !b.is_finite() {
                return Err(PdhpError::input("branching_ratio must be positive"));
            }
            if b >= 1.0 && !self.allow_explosive {
                return Err(PdhpError::Explosive(b));
            }
        }
        Ok(())
    }
}

/// Ogata thinning on `[0, horizon]` with immigrant rate `lambda0`, started
/// empty at time 0.
pub fn simulate_cluster<R: Rng + ?Sized>(
    alpha: &AlphaSample,
    basis: &KernelBasis,
    lambda0: f64,
    horizon: f64,
    allow_explosive: bool,
    rng: &mut R,
) -> Result<EventHistory> {
    simulate_cluster_from(alpha, basis, lambda0, 0.0, horizon, allow_explosive, rng)
}

/// Relaxation time of a subcritical process: mean kernel lag over `1 − Σα`.
pub fn relaxation_time(alpha: &AlphaSample, basis: &KernelBasis) -> f64 {
    let b = alpha.branching_ratio();
    if b <= 0.0 {
        return 0.0;
    }
    let lag: f64 = alpha.weights().iter().zip(basis.means()).map(|(a, m)| a * m).sum::<f64>() / b;
    if b >= 1.0 {
        f64::INFINITY
    } else {
        lag / (1.0 - b)
    }
}

/// Thinning on `[-burn_in, horizon]`, keeping only events in `[0, horizon]`.
pub fn simulate_cluster_from<R: Rng + ?Sized>(
    alpha: &AlphaSample,
    basis: &KernelBasis,
    lambda0: f64,
    burn_in: f64,
    horizon: f64,
    allow_explosive: bool,
    rng: &mut R,
) -> Result<EventHistory> {
    if !(burn_in >= 0.0) || !burn_in.is_finite() {
        return Err(PdhpError::input("burn_in must be finite and >= 0"));
    }
    if alpha.weights().len() != basis.len() {
        return Err(PdhpError::input("alpha dimension differs from the kernel basis"));
    }
    let ratio = alpha.branching_ratio();
    if ratio >= 1.0 && !allow_explosive {
        return Err(PdhpError::Explosive(ratio));
    }
    if !(lambda0 > 0.0) || !(horizon >= 0.0) {
        return Err(PdhpError::input("lambda0 must be positive and horizon non-negative"));
    }
    let reach = basis.reach();
    let window = basis.min_sigma() / 2.0;
    let mut times: Vec<f64> = Vec::new();
    let mut live = 0;
    let mut t = -burn_in;
    loop {
        while live < times.len() && t - times[live] > reach {
            live += 1;
        }
        let hi = t + window;
        let mut bound = lambda0;
        for &ti in &times[live..] {
            for (l, a) in alpha.weights().iter().enumerate() {
                bound += a * basis.max_density_on(l, t - ti, hi - ti);
            }
        }
        let step = Exp::new(bound)
            .map_err(|e| PdhpError::Invariant(format!("thinning bound {bound}: {e}")))?
            .sample(rng);
        if t + step > hi {
            t = hi;
            if t > horizon {
                break;
            }
            continue;
        }
        t += step;
        if t > horizon {
            break;
        }
        let mut lambda = lambda0;
        for &ti in &times[live..] {
            for (l, a) in alpha.weights().iter().enumerate() {
                lambda += a * basis.density(l, t - ti);
            }
        }
        if rng.random::<f64>() * bound < lambda {
            times.push(t);
        }
    }
    let kept = times.partition_point(|&x| x < 0.0);
    EventHistory::from_times(times.split_off(kept))
}

/// Excitation part of a cluster intensity sampled on a uniform grid.
fn grid_intensity(times: &[f64], alpha: &AlphaSample, basis: &KernelBasis, start: f64, step: f64, len: usize) -> Vec<f64> {
    let mut values = vec![0.0; len];
    let reach = basis.reach();
    for &ti in times {
        let first = ((ti - start) / step).floor().max(0.0) as usize;
        let last = ((((ti + reach) - start) / step).ceil() as usize).min(len);
        for (k, v) in values.iter_mut().enumerate().take(last).skip(first) {
            let lag = start + k as f64 * step - ti;
            for (l, a) in alpha.weights().iter().enumerate() {
                *v += a * basis.density(l, lag);
            }
        }
    }
    values
}

/// Overlap of `a` and `b` shifted right by `shift` grid steps.
fn grid_overlap(a: &[f64], b: &[f64], shift: usize, norm: OverlapNorm) -> f64 {
    let (mut lo, mut sum_a, mut sum_b, mut hi) = (0.0, 0.0, 0.0, 0.0);
    let n = a.len().max(b.len() + shift);
    for k in 0..n {
        let x = a.get(k).copied().unwrap_or(0.0);
        let y = if k >= shift { b.get(k - shift).copied().unwrap_or(0.0) } else { 0.0 };
        lo += x.min(y);
        hi += x.max(y);
        sum_a += x;
        sum_b += y;
    }
    let denom = match norm {
        OverlapNorm::MeanArea => 0.5 * (sum_a + sum_b),
        OverlapNorm::UnionArea => hi,
    };
    if denom > 0.0 {
        lo / denom
    } else {
        0.0
    }
}

fn default_step(basis: &KernelBasis) -> f64 {
    basis.min_sigma() / 5.0
}

/// Shared area of two excitation intensities (the base rate is excluded),
/// in `[0, 1]`.
pub fn intensity_overlap(
    a: &EventHistory,
    alpha_a: &AlphaSample,
    b: &EventHistory,
    alpha_b: &AlphaSample,
    basis: &KernelBasis,
    step: Option<f64>,
    norm: OverlapNorm,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(PdhpError::input("intensity overlap needs two non-empty histories"));
    }
    let step = step.unwrap_or_else(|| default_step(basis));
    if !(step > 0.0) {
        return Err(PdhpError::input("grid step must be positive"));
    }
    let start = a.times()[0].min(b.times()[0]);
    let end = a.last().unwrap().max(b.last().unwrap()) + basis.reach();
    let len = ((end - start) / step).ceil() as usize + 1;
    let ga = grid_intensity(a.times(), alpha_a, basis, start, step, len);
    let gb = grid_intensity(b.times(), alpha_b, basis, start, step, len);
    Ok(grid_overlap(&ga, &gb, 0, norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftOutcome {
    /// Hours added to every event of the shifted cluster.
    pub shift: f64,
    pub achieved: f64,
}

/// Rigidly delays `b` until its overlap with `a` is within `tolerance` of
/// `target`. The delay is a multiple of the grid step in `[0, horizon + reach]`.
#[allow(clippy::too_many_arguments)]
pub fn enforce_intensity_overlap(
    a: &EventHistory,
    alpha_a: &AlphaSample,
    b: &EventHistory,
    alpha_b: &AlphaSample,
    basis: &KernelBasis,
    target: f64,
    tolerance: f64,
    horizon: f64,
    norm: OverlapNorm,
) -> Result<(EventHistory, ShiftOutcome)> {
    unit_interval(target, "target overlap")?;
    if a.is_empty() || b.is_empty() {
        return Err(PdhpError::input("intensity overlap needs two non-empty histories"));
    }
    let step = default_step(basis);
    let max_shift = ((horizon + basis.reach()) / step).ceil() as usize;
    let start = a.times()[0].min(b.times()[0]);
    let end = a.last().unwrap().max(b.last().unwrap()) + basis.reach();
    let len = ((end - start) / step).ceil() as usize + 1;
    let ga = grid_intensity(a.times(), alpha_a, basis, start, step, len);
    let gb = grid_intensity(b.times(), alpha_b, basis, start, step, len);
    let measure = |k: usize| grid_overlap(&ga, &gb, k, norm);

    let mut best = (0usize, measure(0));
    let mut found = None;
    if (best.1 - target).abs() <= tolerance {
        found = Some(0);
    }
    // coarse scan for the first bracket around the target, then bisect it
    let coarse = ((1.0 / step).round() as usize).max(1);
    let mut prev = (0usize, best.1);
    let mut k = coarse;
    while found.is_none() && prev.0 < max_shift {
        k = k.min(max_shift);
        let v = measure(k);
        if (v - target).abs() < (best.1 - target).abs() {
            best = (k, v);
        }
        if (v - target).abs() <= tolerance {
            found = Some(k);
        } else if (prev.1 - target).signum() != (v - target).signum() {
            let (mut lo, mut hi) = (prev, (k, v));
            while hi.0 - lo.0 > 1 {
                let mid = (lo.0 + hi.0) / 2;
                let vm = measure(mid);
                if (vm - target).abs() < (best.1 - target).abs() {
                    best = (mid, vm);
                }
                if (vm - target).abs() <= tolerance {
                    found = Some(mid);
                    break;
                }
                if (lo.1 - target).signum() == (vm - target).signum() {
                    lo = (mid, vm);
                } else {
                    hi = (mid, vm);
                }
            }
        }
        prev = (k, v);
        k += coarse;
    }
    let Some(k) = found else {
        return Err(PdhpError::Convergence {
            target,
            tolerance,
            best: best.1,
            shift: best.0 as f64 * step,
        });
    };
    let shift = k as f64 * step;
    let shifted = EventHistory::from_times(b.times().iter().map(|t| t + shift).collect())?;
    Ok((
        shifted,
        ShiftOutcome {
            shift,
            achieved: measure(k),
        },
    ))
}

/// Uniform word distribution over a contiguous block of ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabBlock {
    pub start: u32,
    pub width: u32,
}

impl VocabBlock {
    pub fn contains(&self, w: u32) -> bool {
        w >= self.start && w < self.start + self.width
    }

    pub fn probabilities(&self, vocab_size: usize) -> Vec<f64> {
        let p = 1.0 / f64::from(self.width);
        (0..vocab_size as u32).map(|w| if self.contains(w) { p } else { 0.0 }).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(self.start..self.start + self.width)
    }
}

/// Blocks of width `V / n` where neighbouring blocks share `target` of their mass.
pub fn make_vocabularies(vocab_size: usize, n_clusters: usize, target: f64) -> Result<Vec<VocabBlock>> {
    unit_interval(target, "vocab_overlap")?;
    if n_clusters == 0 || vocab_size < n_clusters {
        return Err(PdhpError::input("need 1 <= n_clusters <= vocab_size"));
    }
    let width = (vocab_size / n_clusters) as u32;
    let shift = (f64::from(width) * (1.0 - target)).round() as u32;
    let achieved = f64::from(width - shift) / f64::from(width);
    if n_clusters > 1 && (achieved - target).abs() > 0.01 {
        return Err(PdhpError::Infeasible(format!(
            "vocab overlap {target} needs finer blocks than width {width} (nearest {achieved:.4})"
        )));
    }
    Ok((0..n_clusters as u32)
        .map(|k| VocabBlock {
            start: k * shift,
            width,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvent {
    pub id: String,
    pub time: f64,
    pub temporal_label: u32,
    pub textual_label: u32,
    pub bag: DocBag,
}

/// Draws `words_per_doc` i.i.d. tokens from `block`.
pub fn draw_document<R: Rng + ?Sized>(block: &VocabBlock, words_per_doc: u32, rng: &mut R) -> Result<DocBag> {
    let tokens: Vec<u32> = (0..words_per_doc).map(|_| block.draw(rng)).collect();
    DocBag::from_tokens(&tokens)
}

/// Attaches a document to each `(time, cluster)` event, drawn from that
/// cluster's block. Events must be sorted by time.
pub fn attach_documents<R: Rng + ?Sized>(
    events: &[(f64, u32)],
    blocks: &[VocabBlock],
    words_per_doc: u32,
    rng: &mut R,
) -> Result<Vec<SyntheticEvent>> {
    let width = events.len().max(1).to_string().len().max(6);
    events
        .iter()
        .enumerate()
        .map(|(i, &(time, c))| {
            let block = blocks
                .get(c as usize)
                .ok_or_else(|| PdhpError::input(format!("no vocabulary for cluster {c}")))?;
            Ok(SyntheticEvent {
                id: format!("d{i:0width$}"),
                time,
                temporal_label: c,
                textual_label: c,
                bag: draw_document(block, words_per_doc, rng)?,
            })
        })
        .collect()
}

/// Redraws the textual label of exactly `round(fraction·N)` events chosen
/// without replacement, uniformly over clusters, and resamples their words.
/// Returns the indices that were redrawn, sorted.
pub fn decorrelate<R: Rng + ?Sized>(
    events: &mut [SyntheticEvent],
    blocks: &[VocabBlock],
    words_per_doc: u32,
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    unit_interval(fraction, "decorrelation")?;
    if blocks.is_empty() {
        return Err(PdhpError::input("no vocabularies"));
    }
    let n = events.len();
    let k = (fraction * n as f64).round() as usize;
    let mut picked = sample_indices(rng, n, k).into_vec();
    picked.sort_unstable();
    for &i in &picked {
        let label = rng.random_range(0..blocks.len() as u32);
        events[i].textual_label = label;
        events[i].bag = draw_document(&blocks[label as usize], words_per_doc, rng)?;
    }
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spec: GenSpec,
    pub alphas: Vec<AlphaSample>,
    pub vocabularies: Vec<VocabBlock>,
    pub events: Vec<SyntheticEvent>,
    pub achieved_vocab_overlap: f64,
    pub achieved_intensity_overlap: Option<f64>,
    pub shift: Option<f64>,
    pub redrawn: usize,
    /// Simulation attempt that produced the events, from 0.
    pub attempt: u32,
}

impl Dataset {
    pub fn temporal_labels(&self) -> Vec<u32> {
        self.events.iter().map(|e| e.temporal_label).collect()
    }

    pub fn textual_labels(&self) -> Vec<u32> {
        self.events.iter().map(|e| e.textual_label).collect()
    }

    pub fn documents(&self) -> Vec<crate::smc::Document> {
        self.events
            .iter()
            .map(|e| crate::smc::Document {
                id: e.id.clone(),
                time: e.time,
                bag: e.bag.clone(),
            })
            .collect()
    }
}

/// Draws a kernel-weight vector from Uniform(0, α_max), rescaled to the
/// configured branching ratio.
pub fn draw_alpha<R: Rng + ?Sized>(spec: &GenSpec, rng: &mut R) -> Result<AlphaSample> {
    let raw: Vec<f64> = (0..spec.kernel.len()).map(|_| rng.random::<f64>() * spec.alpha_max).collect();
    let w = match spec.branching_ratio {
        Some(b) => {
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x * b / s).collect()
        }
        None => raw,
    };
    let alpha = AlphaSample::new(w)?;
    if alpha.branching_ratio() >= 1.0 && !spec.allow_explosive {
        return Err(PdhpError::Explosive(alpha.branching_ratio()));
    }
    Ok(alpha)
}

const ALPHA_STREAM: u64 = 1;
const EVENT_STREAM: u64 = 2;
const WORD_STREAM: u64 = 3;
const DECORRELATE_STREAM: u64 = 4;

type Simulated = (Vec<AlphaSample>, Vec<EventHistory>, Option<ShiftOutcome>);

fn simulate_all(spec: &GenSpec, attempt: u32) -> Result<Simulated> {
    let basis = &spec.kernel;
    let mut alphas = Vec::with_capacity(spec.n_clusters);
    let mut histories = Vec::with_capacity(spec.n_clusters);
    for k in 0..spec.n_clusters as u64 {
        let key = (u64::from(attempt) << 32) | k;
        let alpha = draw_alpha(spec, &mut substream(spec.seed, ALPHA_STREAM, key))?;
        let mut rng = substream(spec.seed, EVENT_STREAM, key);
        let burn_in = spec.burn_in.unwrap_or_else(|| 5.0 * relaxation_time(&alpha, basis));
        histories.push(simulate_cluster_from(
            &alpha,
            basis,
            spec.immigrant_rate,
            burn_in,
            spec.horizon,
            spec.allow_explosive,
            &mut rng,
        )?);
        alphas.push(alpha);
    }
    let mut outcome = None;
    if let Some(target) = spec.intensity_overlap {
        if histories.iter().any(|h| h.is_empty()) {
            return Err(PdhpError::Infeasible("a cluster produced no events; overlap undefined".into()));
        }
        let (shifted, out) = enforce_intensity_overlap(
            &histories[0],
            &alphas[0],
            &histories[1],
            &alphas[1],
            basis,
            target,
            spec.overlap_tolerance,
            spec.horizon,
            spec.overlap_norm,
        )?;
        histories[1] = shifted;
        outcome = Some(out);
    }
    Ok((alphas, histories, outcome))
}

pub fn generate_dataset(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut attempt = 0;
    let (alphas, histories, outcome) = loop {
        match simulate_all(spec, attempt) {
            Err(PdhpError::Convergence { .. } | PdhpError::Infeasible(_)) if attempt + 1 < spec.max_attempts => {
                attempt += 1;
            }
            other => break other?,
        }
    };
    let shift = outcome.map(|o| o.shift);
    let achieved_intensity = outcome.map(|o| o.achieved);

    let mut merged: Vec<(f64, u32)> = histories
        .iter()
        .enumerate()
        .flat_map(|(k, h)| h.times().iter().map(move |&t| (t, k as u32)))
        .collect();
    merged.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let vocabularies = make_vocabularies(spec.vocab_size, spec.n_clusters, spec.vocab_overlap)?;
    let achieved_vocab_overlap = if spec.n_clusters > 1 {
        crate::text::vocabulary_overlap(
            &vocabularies[0].probabilities(spec.vocab_size),
            &vocabularies[1].probabilities(spec.vocab_size),
        )?
    } else {
        1.0
    };
    let mut events = attach_documents(
        &merged,
        &vocabularies,
        spec.words_per_doc,
        &mut substream(spec.seed, WORD_STREAM, 0),
    )?;
    let redrawn = decorrelate(
        &mut events,
        &vocabularies,
        spec.words_per_doc,
        spec.decorrelation,
        &mut substream(spec.seed, DECORRELATE_STREAM, 0),
    )?
    .len();

    Ok(Dataset {
        spec: spec.clone(),
        alphas,
        vocabularies,
        events,
        achieved_vocab_overlap,
        achieved_intensity_overlap: achieved_intensity,
        shift,
        redrawn,
        attempt,
    })
}
