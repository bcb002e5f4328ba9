//! Sequential Monte-Carlo clustering of a timestamped document stream.
//!
//! Every particle carries one clustering hypothesis. For each arriving
//! document and each particle:
//!
//! 1. the document's cluster is drawn from the posterior, i.e. the textual
//!    predictive likelihood times the powered Dirichlet-Hawkes prior;
//! 2. the chosen cluster absorbs the words and the event time, updates its
//!    per-sample Hawkes likelihoods and redraws its kernel weights;
//! 3. the particle weight is multiplied by the posterior mass of the document.
//!
//! Particles that fall below `omega_thres` are then replaced by copies of
//! heavier ones.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::hawkes::{AlphaBank, EventHistory, HawkesAccumulator, KernelBasis};
use crate::math::{log_sum_exp, sample_categorical, sample_log_categorical, substream};
use crate::prior::pdhp_log_weights;
use crate::text::{cluster_entropy, DocBag, LnGammaTable, TextPrior, WordCounts};

/// Jitter added per repeated timestamp, in hours.
pub const DUPLICATE_JITTER: f64 = 1e-6;

const BANK_STREAM: u64 = u64::MAX;
const RESAMPLE_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightUpdate {
    /// Multiply by the document's posterior predictive mass summed over clusters.
    Marginal,
    /// Multiply by the unnormalized posterior of the sampled cluster only.
    SampledBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Replace each light particle with a copy of a survivor drawn by weight.
    ReplaceByCopy,
    /// Systematic resampling of the whole population when any particle is light.
    Systematic,
}

/// Which clusters stay eligible once their intensity has died out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadClusters {
    /// Dead clusters are dropped for every `r`, including `r = 0`.
    Exclude,
    /// Dead clusters are dropped for `r > 0`; at `r = 0` every cluster ever
    /// opened remains a candidate (the uniform process over all tables).
    KeepAtUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdhpConfig {
    pub r: f64,
    pub lambda0: f64,
    /// Text concentration: aggregate `θ0 = V·θ_v`, or `θ_v` itself when
    /// `theta0_per_word` is set.
    pub theta0: f64,
    pub theta0_per_word: bool,
    pub n_particles: usize,
    pub n_samples: usize,
    pub omega_thres: f64,
    pub kernel: KernelBasis,
    pub alpha_max: f64,
    pub seed: u64,
    pub liveness_threshold: f64,
    pub weight_update: WeightUpdate,
    pub resampling: Resampling,
    pub dead_clusters: DeadClusters,
    /// Overrides the vocabulary size inferred from the data.
    pub vocab_size: Option<usize>,
}

impl PdhpConfig {
    /// Defaults used for the synthetic benchmark.
    pub fn synthetic() -> Self {
        let n_particles = 8;
        PdhpConfig {
            r: 1.0,
            lambda0: 0.1,
            theta0: 1.0,
            theta0_per_word: true,
            n_particles,
            n_samples: 2000,
            omega_thres: 1.0 / (2.0 * n_particles as f64),
            kernel: KernelBasis::synthetic(),
            alpha_max: 1.0,
            seed: 0,
            liveness_threshold: 1e-8,
            weight_update: WeightUpdate::Marginal,
            resampling: Resampling::ReplaceByCopy,
            dead_clusters: DeadClusters::Exclude,
            vocab_size: None,
        }
    }

    /// Defaults used for week-scale social-media streams.
    pub fn reddit() -> Self {
        PdhpConfig {
            lambda0: 0.5,
            theta0: 0.01,
            kernel: KernelBasis::reddit(),
            ..Self::synthetic()
        }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(PdhpError::input("r must be finite and >= 0"));
        }
        if !(self.lambda0 > 0.0) || !self.lambda0.is_finite() {
            return Err(PdhpError::input("lambda0 must be positive"));
        }
        if !(self.theta0 > 0.0) || !self.theta0.is_finite() {
            return Err(PdhpError::input("theta0 must be positive"));
        }
        if self.n_particles == 0 {
            return Err(PdhpError::input("n_particles must be at least 1"));
        }
        if self.n_samples == 0 {
            return Err(PdhpError::input("n_samples must be at least 1"));
        }
        let max_thres = 1.0 / self.n_particles as f64;
        if !(self.omega_thres > 0.0 && self.omega_thres <= max_thres) {
            return Err(PdhpError::input(format!(
                "omega_thres must lie in (0, 1/n_particles] = (0, {max_thres}]"
            )));
        }
        if !(self.alpha_max > 0.0) || !self.alpha_max.is_finite() {
            return Err(PdhpError::input("alpha_max must be positive"));
        }
        if !(self.liveness_threshold >= 0.0) {
            return Err(PdhpError::input("liveness_threshold must be >= 0"));
        }
        if self.vocab_size == Some(0) {
            return Err(PdhpError::input("vocab_size must be positive"));
        }
        Ok(())
    }
}

/// Unit of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    /// Hours.
    pub time: f64,
    pub bag: DocBag,
}

/// Prior over live clusters used to build the posterior.
pub trait ClusterPrior: Send + Sync {
    /// Normalized log weights: one entry per live intensity, then the new cluster.
    fn log_weights(&self, lambdas: &[f64], lambda0: f64) -> Result<Vec<f64>>;

    /// True if clusters whose intensity has died out remain candidates.
    fn keeps_dead(&self) -> bool {
        false
    }
}

/// The powered Dirichlet-Hawkes prior with exponent `r`.
#[derive(Debug, Clone, Copy)]
pub struct PoweredPrior {
    pub r: f64,
    pub dead_clusters: DeadClusters,
}

impl ClusterPrior for PoweredPrior {
    fn log_weights(&self, lambdas: &[f64], lambda0: f64) -> Result<Vec<f64>> {
        pdhp_log_weights(lambdas, self.r, lambda0)
    }

    fn keeps_dead(&self) -> bool {
        self.r == 0.0 && self.dead_clusters == DeadClusters::KeepAtUniform
    }
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pub id: u32,
    pub history: EventHistory,
    pub words: WordCounts,
    pub hawkes: HawkesAccumulator,
    pub alpha_index: usize,
    pub alive: bool,
    /// Joint marginal text log-likelihood of the documents absorbed so far.
    pub text_loglik: f64,
}

impl ClusterState {
    fn open(id: u32, n_samples: usize, n_basis: usize, t: f64) -> Self {
        ClusterState {
            id,
            history: EventHistory::new(),
            words: WordCounts::new(),
            hawkes: HawkesAccumulator::new(n_samples, n_basis, t),
            alpha_index: 0,
            alive: true,
            text_loglik: 0.0,
        }
    }
}

const LOG_CHUNK: usize = 4096;

/// Append-only cluster ids per document, cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct AssignmentLog {
    sealed: Vec<Arc<[u32]>>,
    tail: Vec<u32>,
}

impl AssignmentLog {
    pub fn push(&mut self, cluster: u32) {
        self.tail.push(cluster);
        if self.tail.len() == LOG_CHUNK {
            let chunk: Arc<[u32]> = std::mem::take(&mut self.tail).into();
            self.sealed.push(chunk);
        }
    }

    pub fn len(&self) -> usize {
        self.sealed.len() * LOG_CHUNK + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.sealed.iter().flat_map(|c| c.iter().copied()).chain(self.tail.iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    clusters: Vec<Arc<ClusterState>>,
    candidates: Vec<u32>,
    assignments: AssignmentLog,
    log_weight: f64,
    clock: f64,
}

impl Particle {
    pub fn new(log_weight: f64) -> Self {
        Particle {
            clusters: Vec::new(),
            candidates: Vec::new(),
            assignments: AssignmentLog::default(),
            log_weight,
            clock: f64::NEG_INFINITY,
        }
    }

    pub fn clusters(&self) -> impl Iterator<Item = &ClusterState> {
        self.clusters.iter().map(|c| c.as_ref())
    }

    pub fn cluster(&self, id: u32) -> Option<&ClusterState> {
        self.clusters.get(id as usize).map(|c| c.as_ref())
    }

    /// Candidate clusters as of the last processed document.
    pub fn candidates(&self) -> &[u32] {
        &self.candidates
    }

    pub fn assignments(&self) -> &AssignmentLog {
        &self.assignments
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn set_log_weight(&mut self, w: f64) {
        self.log_weight = w;
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Inserts a ready-made cluster as a candidate; for building fixtures.
    pub fn insert_cluster(&mut self, mut cluster: ClusterState) -> u32 {
        let id = self.clusters.len() as u32;
        cluster.id = id;
        if let Some(t) = cluster.history.last() {
            self.clock = self.clock.max(t);
        }
        self.clusters.push(Arc::new(cluster));
        self.candidates.push(id);
        id
    }
}

/// Shared, read-only inference state.
pub struct Model {
    config: PdhpConfig,
    bank: AlphaBank,
    text: LnGammaTable,
    prior: Arc<dyn ClusterPrior>,
}

impl Model {
    pub fn new(config: PdhpConfig, vocab_size: usize) -> Result<Self> {
        let prior = Arc::new(PoweredPrior {
            r: config.r,
            dead_clusters: config.dead_clusters,
        });
        Self::with_prior(config, vocab_size, prior)
    }

    pub fn with_prior(config: PdhpConfig, vocab_size: usize, prior: Arc<dyn ClusterPrior>) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, BANK_STREAM, 0);
        let bank = AlphaBank::uniform(config.n_samples, config.kernel.len(), config.alpha_max, &mut rng)?;
        Self::with_bank(config, vocab_size, prior, bank)
    }

    pub fn with_bank(
        config: PdhpConfig,
        vocab_size: usize,
        prior: Arc<dyn ClusterPrior>,
        bank: AlphaBank,
    ) -> Result<Self> {
        config.validate()?;
        if bank.dim() != config.kernel.len() {
            return Err(PdhpError::input("alpha bank dimension differs from the kernel basis"));
        }
        let text_prior = if config.theta0_per_word {
            TextPrior::per_word(config.theta0, vocab_size)?
        } else {
            TextPrior::from_aggregate(config.theta0, vocab_size)?
        };
        let mut config = config;
        config.n_samples = bank.len();
        Ok(Model {
            text: LnGammaTable::new(text_prior, LnGammaTable::DEFAULT_SIZE),
            config,
            bank,
            prior,
        })
    }

    pub fn config(&self) -> &PdhpConfig {
        &self.config
    }

    pub fn bank(&self) -> &AlphaBank {
        &self.bank
    }

    pub fn text_prior(&self) -> &TextPrior {
        self.text.prior()
    }

    fn basis(&self) -> &KernelBasis {
        &self.config.kernel
    }

    /// Intensity of `cluster` at `t` under its current kernel weights, using
    /// only retained events inside the kernel reach.
    pub fn cluster_intensity(&self, cluster: &ClusterState, t: f64) -> f64 {
        let basis = self.basis();
        let mut k = vec![0.0; basis.len()];
        basis.add_excitation(cluster.history.retained(), t, basis.reach(), &mut k);
        self.bank
            .weights(cluster.alpha_index)
            .iter()
            .zip(&k)
            .map(|(a, b)| a * b)
            .sum()
    }

    fn is_live(&self, cluster: &ClusterState, lambda: f64, t: f64) -> bool {
        cluster.alive
            && (cluster.history.has_live_events(t, self.basis().reach())
                || lambda >= self.config.liveness_threshold * self.config.lambda0)
    }
}

/// Posterior over the live clusters of a particle plus a new cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Cluster ids in the order of `log_mass`; the new cluster is not listed.
    pub clusters: Vec<u32>,
    pub intensities: Vec<f64>,
    /// Log textual predictive likelihood per entry (last = new cluster).
    pub text_loglik: Vec<f64>,
    /// Unnormalized log posterior per entry: text likelihood times normalized prior.
    pub log_mass: Vec<f64>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.log_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_mass.is_empty()
    }

    pub fn log_evidence(&self) -> f64 {
        log_sum_exp(&self.log_mass)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let z = self.log_evidence();
        self.log_mass.iter().map(|m| (m - z).exp()).collect()
    }
}

/// Posterior cluster probabilities for `doc` under `particle`.
pub fn posterior_weights(particle: &Particle, doc: &Document, model: &Model) -> Result<Posterior> {
    if doc.time < particle.clock {
        return Err(PdhpError::Ordering {
            what: format!("document {}", doc.id),
            time: doc.time,
            frontier: particle.clock,
        });
    }
    let keep_dead = model.prior.keeps_dead();
    let mut clusters = Vec::with_capacity(particle.candidates.len());
    let mut intensities = Vec::with_capacity(particle.candidates.len());
    for &id in &particle.candidates {
        let c = &particle.clusters[id as usize];
        let lambda = model.cluster_intensity(c, doc.time);
        if keep_dead || model.is_live(c, lambda, doc.time) {
            clusters.push(id);
            intensities.push(lambda);
        }
    }
    let log_prior = model.prior.log_weights(&intensities, model.config.lambda0)?;
    let empty = WordCounts::new();
    let mut text_loglik: Vec<f64> = clusters
        .iter()
        .map(|&id| model.text.predictive_log_likelihood(&particle.clusters[id as usize].words, &doc.bag))
        .collect();
    text_loglik.push(model.text.predictive_log_likelihood(&empty, &doc.bag));
    let log_mass = text_loglik.iter().zip(&log_prior).map(|(t, p)| t + p).collect();
    Ok(Posterior {
        clusters,
        intensities,
        text_loglik,
        log_mass,
    })
}

/// What happened to one particle for one document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub cluster: u32,
    pub opened: bool,
    /// Cluster killed because no kernel sample could explain the event.
    pub killed: Option<u32>,
    /// Log factor applied to the particle weight.
    pub log_increment: f64,
}

/// Runs the three per-document steps on one particle.
pub fn step_particle<R: Rng + ?Sized>(
    particle: &mut Particle,
    doc: &Document,
    model: &Model,
    rng: &mut R,
) -> Result<StepOutcome> {
    let post = posterior_weights(particle, doc, model)?;
    particle.candidates.clone_from(&post.clusters);

    let pick = sample_log_categorical(&post.log_mass, rng)
        .ok_or_else(|| PdhpError::Invariant(format!("posterior for document {} has no mass", doc.id)))?;
    let log_increment = match model.config.weight_update {
        WeightUpdate::Marginal => post.log_evidence(),
        WeightUpdate::SampledBranch => post.log_mass[pick],
    };

    let mut opened = pick == post.clusters.len();
    let mut killed = None;
    let mut target = if opened {
        open_cluster(particle, model, doc.time)
    } else {
        post.clusters[pick]
    };
    let mut text_ll = post.text_loglik[pick];

    loop {
        match absorb(particle, target, doc, text_ll, model, rng) {
            Ok(()) => break,
            Err(PdhpError::DegenerateCluster) if !opened => {
                // no kernel sample can explain the event: retire the cluster and
                // hand the document to a fresh one
                Arc::make_mut(&mut particle.clusters[target as usize]).alive = false;
                particle.candidates.retain(|&c| c != target);
                killed = Some(target);
                target = open_cluster(particle, model, doc.time);
                text_ll = *post.text_loglik.last().expect("new-cluster entry");
                opened = true;
            }
            Err(e) => return Err(e),
        }
    }

    particle.assignments.push(target);
    particle.log_weight += log_increment;
    particle.clock = doc.time;
    Ok(StepOutcome {
        cluster: target,
        opened,
        killed,
        log_increment,
    })
}

fn open_cluster(particle: &mut Particle, model: &Model, t: f64) -> u32 {
    let id = particle.clusters.len() as u32;
    particle.clusters.push(Arc::new(ClusterState::open(
        id,
        model.bank.len(),
        model.basis().len(),
        t,
    )));
    particle.candidates.push(id);
    id
}

fn absorb<R: Rng + ?Sized>(
    particle: &mut Particle,
    id: u32,
    doc: &Document,
    text_ll: f64,
    model: &Model,
    rng: &mut R,
) -> Result<()> {
    let cluster = Arc::make_mut(&mut particle.clusters[id as usize]);
    cluster
        .hawkes
        .accumulate_event(&mut cluster.history, &model.bank, model.basis(), doc.time)?;
    cluster.words.absorb(&doc.bag);
    cluster.text_loglik += text_ll;
    cluster.alive = true;
    cluster.alpha_index = cluster.hawkes.sample_alpha(&model.bank, rng)?;
    Ok(())
}

/// Replaces light particles. Returns true if any particle was replaced, in
/// which case all weights are reset to uniform.
pub fn resample<R: Rng + ?Sized>(particles: &mut [Particle], config: &PdhpConfig, rng: &mut R) -> Result<bool> {
    let n = particles.len();
    if n == 0 {
        return Ok(false);
    }
    let lw: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let z = log_sum_exp(&lw);
    if !z.is_finite() {
        return Err(PdhpError::Invariant("every particle has zero weight".into()));
    }
    let w: Vec<f64> = lw.iter().map(|l| (l - z).exp()).collect();
    let light: Vec<usize> = (0..n).filter(|&i| w[i] < config.omega_thres).collect();
    if light.is_empty() {
        return Ok(false);
    }
    match config.resampling {
        Resampling::ReplaceByCopy => {
            let survivors: Vec<usize> = (0..n).filter(|&i| w[i] >= config.omega_thres).collect();
            if survivors.is_empty() {
                return Err(PdhpError::Invariant(
                    "all particles fell below omega_thres after normalization".into(),
                ));
            }
            let sw: Vec<f64> = survivors.iter().map(|&i| w[i]).collect();
            for i in light {
                let k = sample_categorical(&sw, rng)
                    .ok_or_else(|| PdhpError::Invariant("survivor weights vanished".into()))?;
                particles[i] = particles[survivors[k]].clone();
            }
        }
        Resampling::Systematic => {
            let u0: f64 = rng.random::<f64>() / n as f64;
            let mut picks = Vec::with_capacity(n);
            let mut cum = 0.0;
            let mut j = 0;
            for k in 0..n {
                let u = u0 + k as f64 / n as f64;
                while j < n - 1 && cum + w[j] <= u {
                    cum += w[j];
                    j += 1;
                }
                picks.push(j);
            }
            let old: Vec<Particle> = particles.to_vec();
            for (slot, &src) in particles.iter_mut().zip(&picks) {
                *slot = old[src].clone();
            }
        }
    }
    let uniform = -(n as f64).ln();
    for p in particles.iter_mut() {
        p.log_weight = uniform;
    }
    Ok(true)
}

/// Normalizes particle log-weights so their weights sum to one.
fn normalize(particles: &mut [Particle]) -> Result<()> {
    let lw: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let z = log_sum_exp(&lw);
    if !z.is_finite() {
        return Err(PdhpError::Invariant("particle weights vanished".into()));
    }
    for p in particles.iter_mut() {
        p.log_weight -= z;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_documents: usize,
    pub n_clusters: usize,
    pub n_live_clusters: usize,
    pub resample_rounds: usize,
    pub killed_clusters: usize,
    pub jittered_documents: usize,
    /// Sum over clusters of the joint Dirichlet-Multinomial log-likelihood.
    pub text_loglik: f64,
    /// Hawkes log-likelihood of the reported partition under each cluster's
    /// best kernel sample, including the base-rate survival term.
    pub hawkes_loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: u32,
    pub n_events: usize,
    pub n_words: u64,
    pub alpha_index: usize,
    pub alpha_map: Vec<f64>,
    pub entropy: Option<f64>,
    pub top_words: Vec<(u32, u64)>,
    pub text_loglik: f64,
    pub hawkes_loglik: f64,
    pub first_event: f64,
    pub last_event: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub doc_id: String,
    pub cluster: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub assignments: Vec<Assignment>,
    pub particle_index: usize,
    pub particle_weight: f64,
    pub clusters: Vec<ClusterSummary>,
    pub diagnostics: Diagnostics,
}

/// Incremental driver: feed documents one at a time, then [`finish`](Self::finish).
pub struct StreamEngine {
    model: Model,
    particles: Vec<Particle>,
    doc_ids: Vec<String>,
    processed: usize,
    last_raw: f64,
    last_time: f64,
    first_time: Option<f64>,
    dup_run: u32,
    diag: Diagnostics,
}

impl StreamEngine {
    pub fn new(config: PdhpConfig, vocab_size: usize) -> Result<Self> {
        Ok(Self::from_model(Model::new(config, vocab_size)?))
    }

    pub fn from_model(model: Model) -> Self {
        let n = model.config.n_particles;
        let uniform = -(n as f64).ln();
        StreamEngine {
            particles: (0..n).map(|_| Particle::new(uniform)).collect(),
            model,
            doc_ids: Vec::new(),
            processed: 0,
            last_raw: f64::NEG_INFINITY,
            last_time: f64::NEG_INFINITY,
            first_time: None,
            dup_run: 0,
            diag: Diagnostics::default(),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Processes one document through every particle, then resamples.
    pub fn process(&mut self, doc: &Document) -> Result<()> {
        if !doc.time.is_finite() {
            return Err(PdhpError::input(format!("document {} has a non-finite time", doc.id)));
        }
        if doc.time < self.last_raw {
            return Err(PdhpError::Ordering {
                what: format!("document {}", doc.id),
                time: doc.time,
                frontier: self.last_raw,
            });
        }
        let raw = doc.time;
        let mut time = raw;
        if raw == self.last_raw {
            self.dup_run += 1;
            time = (doc.time + f64::from(self.dup_run) * DUPLICATE_JITTER).max(self.last_time);
            self.diag.jittered_documents += 1;
        } else {
            self.dup_run = 0;
            time = time.max(self.last_time);
        }
        let jittered;
        let doc = if time != doc.time {
            jittered = Document {
                time,
                ..doc.clone()
            };
            &jittered
        } else {
            doc
        };

        let seed = self.model.config.seed;
        let index = self.processed as u64;
        let model = &self.model;
        let outcomes: Vec<Result<StepOutcome>> = self
            .particles
            .par_iter_mut()
            .enumerate()
            .map(|(p, particle)| {
                let mut rng = substream(seed, index, p as u64);
                step_particle(particle, doc, model, &mut rng)
            })
            .collect();
        for o in outcomes {
            if o?.killed.is_some() {
                self.diag.killed_clusters += 1;
            }
        }
        normalize(&mut self.particles)?;
        let mut rng = substream(seed, index, RESAMPLE_STREAM);
        if resample(&mut self.particles, &self.model.config, &mut rng)? {
            self.diag.resample_rounds += 1;
        }

        self.doc_ids.push(doc.id.clone());
        self.processed += 1;
        self.last_raw = raw;
        self.last_time = time;
        self.first_time.get_or_insert(time);
        Ok(())
    }

    /// Index of the heaviest particle, ties to the lowest index.
    pub fn best_particle(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        best
    }

    pub fn finish(self) -> Result<StreamResult> {
        let best = self.best_particle();
        let particle = &self.particles[best];
        let model = &self.model;
        let t_end = self.last_time;
        let vocab = model.text_prior().vocab_size();

        let assignments = self
            .doc_ids
            .iter()
            .zip(particle.assignments.iter())
            .map(|(id, c)| Assignment {
                doc_id: id.clone(),
                cluster: c,
            })
            .collect();

        let mut clusters = Vec::with_capacity(particle.clusters.len());
        let mut hawkes_total = 0.0;
        let mut text_total = 0.0;
        for c in particle.clusters() {
            if c.history.is_empty() {
                continue;
            }
            let mut hist = c.history.clone();
            let mut acc = c.hawkes.clone();
            acc.advance(&mut hist, model.basis(), t_end.max(acc.last_update()))?;
            let s = acc.map_alpha(&model.bank)?;
            let hawkes_ll = acc.log_likelihood(&model.bank, s);
            hawkes_total += hawkes_ll;
            text_total += c.text_loglik;
            clusters.push(ClusterSummary {
                id: c.id,
                n_events: c.history.len(),
                n_words: c.words.total(),
                alpha_index: s,
                alpha_map: model.bank.weights(s).to_vec(),
                entropy: cluster_entropy(&c.words, vocab).ok(),
                top_words: c.words.top(10),
                text_loglik: c.text_loglik,
                hawkes_loglik: hawkes_ll,
                first_event: c.history.times()[0],
                last_event: c.history.last().unwrap_or(f64::NAN),
            });
        }
        if let Some(t0) = self.first_time {
            hawkes_total -= model.config.lambda0 * (t_end - t0);
        }
        let live = particle
            .candidates
            .iter()
            .filter(|&&id| {
                let c = &particle.clusters[id as usize];
                model.is_live(c, model.cluster_intensity(c, t_end), t_end)
            })
            .count();
        let diagnostics = Diagnostics {
            n_documents: self.processed,
            n_clusters: clusters.len(),
            n_live_clusters: live,
            text_loglik: text_total,
            hawkes_loglik: hawkes_total,
            ..self.diag
        };
        Ok(StreamResult {
            assignments,
            particle_index: best,
            particle_weight: particle.log_weight.exp(),
            clusters,
            diagnostics,
        })
    }
}

/// Largest word id + 1 over the stream.
pub fn infer_vocab_size(docs: &[Document]) -> usize {
    docs.iter().map(|d| d.bag.max_word() as usize + 1).max().unwrap_or(1)
}

/// Clusters a time-ordered stream.
pub fn run_stream(docs: &[Document], config: &PdhpConfig) -> Result<StreamResult> {
    if let Some(w) = docs.windows(2).find(|w| w[1].time < w[0].time) {
        return Err(PdhpError::Ordering {
            what: format!("document {}", w[1].id),
            time: w[1].time,
            frontier: w[0].time,
        });
    }
    let vocab = config.vocab_size.unwrap_or_else(|| infer_vocab_size(docs));
    if let Some(d) = docs.iter().find(|d| d.bag.max_word() as usize >= vocab) {
        return Err(PdhpError::input(format!(
            "document {} uses word id {} outside a vocabulary of {vocab}",
            d.id,
            d.bag.max_word()
        )));
    }
    let mut engine = StreamEngine::new(config.clone(), vocab)?;
    for d in docs {
        engine.process(d)?;
    }
    engine.finish()
}
