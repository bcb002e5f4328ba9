//! File formats: JSONL documents, run configuration, fit outputs and
//! generated datasets.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::hawkes::{AlphaSample, KernelBasis};
use crate::smc::{DeadClusters, Document, PdhpConfig, Resampling, StreamResult, WeightUpdate};
use crate::synth::{Dataset, GenSpec, VocabBlock};
use crate::text::DocBag;

pub const SCHEMA_VERSION: u32 = 1;

pub const DOCS_FILE: &str = "docs.jsonl";
pub const META_FILE: &str = "meta.json";
pub const TRUTH_FILE: &str = "truth.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// One line of a document file. Exactly one of `tokens`, `counts` and
/// `text` must be present; `text` is only read with the whitespace tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Hours,
    Seconds,
}

impl TimeUnit {
    pub fn to_hours(self, t: f64) -> f64 {
        match self {
            TimeUnit::Hours => t,
            TimeUnit::Seconds => t / 3600.0,
        }
    }
}

/// Token strings to dense ids, in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    ids: HashMap<String, u32>,
    words: Vec<String>,
}

impl Vocabulary {
    pub fn id(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(word.to_owned(), id);
        self.words.push(word.to_owned());
        id
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReadOptions {
    pub time_unit: TimeUnit,
    pub whitespace_tokenizer: bool,
}

/// Converts one record, interning its tokens.
pub fn record_to_document(rec: &DocumentRecord, vocab: &mut Vocabulary, opts: ReadOptions) -> Result<Document> {
    if !rec.t.is_finite() {
        return Err(PdhpError::input(format!("document {}: t must be finite", rec.id)));
    }
    let present = [rec.tokens.is_some(), rec.counts.is_some(), rec.text.is_some()]
        .iter()
        .filter(|&&x| x)
        .count();
    if present != 1 {
        return Err(PdhpError::input(format!(
            "document {}: exactly one of tokens, counts or text is required",
            rec.id
        )));
    }
    let bag = if let Some(tokens) = &rec.tokens {
        let ids: Vec<u32> = tokens.iter().map(|w| vocab.id(w)).collect();
        DocBag::from_tokens(&ids)
    } else if let Some(counts) = &rec.counts {
        DocBag::from_counts(counts.iter().map(|(w, &c)| (vocab.id(w), c)).collect())
    } else {
        if !opts.whitespace_tokenizer {
            return Err(PdhpError::input(format!(
                "document {}: raw text needs the whitespace tokenizer",
                rec.id
            )));
        }
        let text = rec.text.as_deref().unwrap_or_default();
        let ids: Vec<u32> = text.split_whitespace().map(|w| vocab.id(w)).collect();
        DocBag::from_tokens(&ids)
    }
    .map_err(|e| PdhpError::input(format!("document {}: {e}", rec.id)))?;
    Ok(Document {
        id: rec.id.clone(),
        time: opts.time_unit.to_hours(rec.t),
        bag,
    })
}

/// Reads a JSONL document file. Blank lines are skipped; records must be
/// sorted by time.
pub fn read_documents(path: &Path, opts: ReadOptions) -> Result<(Vec<Document>, Vocabulary)> {
    let file = File::open(path).map_err(|e| PdhpError::io(path, e))?;
    let mut vocab = Vocabulary::default();
    let mut docs: Vec<Document> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PdhpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord =
            serde_json::from_str(&line).map_err(|e| PdhpError::json(format!("{}:{}", path.display(), n + 1), e))?;
        let doc = record_to_document(&rec, &mut vocab, opts)?;
        if let Some(prev) = docs.last() {
            if doc.time < prev.time {
                return Err(PdhpError::Ordering {
                    what: format!("document {}", doc.id),
                    time: doc.time,
                    frontier: prev.time,
                });
            }
        }
        docs.push(doc);
    }
    Ok((docs, vocab))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Synthetic,
    Reddit,
}

/// Run configuration file. Every field is optional and overrides the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub r: Option<f64>,
    pub lambda0: Option<f64>,
    pub theta0: Option<f64>,
    pub theta0_per_word: Option<bool>,
    pub n_particles: Option<usize>,
    pub n_samples: Option<usize>,
    pub omega_thres: Option<f64>,
    pub kernel: Option<KernelBasis>,
    pub alpha_max: Option<f64>,
    pub seed: Option<u64>,
    pub liveness_threshold: Option<f64>,
    pub weight_update: Option<WeightUpdate>,
    pub resampling: Option<Resampling>,
    pub dead_clusters: Option<DeadClusters>,
    pub vocab_size: Option<usize>,
    pub time_unit: TimeUnit,
    pub whitespace_tokenizer: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PdhpError::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| PdhpError::json(path.display().to_string(), e))?;
        cfg.to_pdhp()?;
        Ok(cfg)
    }

    /// Resolves the preset and overrides into a validated engine configuration.
    pub fn to_pdhp(&self) -> Result<PdhpConfig> {
        let mut c = match self.preset.unwrap_or(Preset::Synthetic) {
            Preset::Synthetic => PdhpConfig::synthetic(),
            Preset::Reddit => PdhpConfig::reddit(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        set!(r, lambda0, theta0, theta0_per_word, n_samples, kernel, alpha_max, seed);
        set!(liveness_threshold, weight_update, resampling, dead_clusters);
        if let Some(n) = self.n_particles {
            c.n_particles = n;
            c.omega_thres = 1.0 / (2.0 * n as f64);
        }
        if let Some(w) = self.omega_thres {
            c.omega_thres = w;
        }
        if self.vocab_size.is_some() {
            c.vocab_size = self.vocab_size;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read_options(&self) -> ReadOptions {
        ReadOptions {
            time_unit: self.time_unit,
            whitespace_tokenizer: self.whitespace_tokenizer,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| PdhpError::io(path, e))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| PdhpError::json(path.display().to_string(), e))?;
    w.write_all(b"\n").map_err(|e| PdhpError::io(path, e))?;
    w.flush().map_err(|e| PdhpError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| PdhpError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PdhpError::json(path.display().to_string(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub doc_id: String,
    pub cluster_id: u32,
    pub particle_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopWord {
    pub word: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: u32,
    pub n_events: usize,
    pub n_words: u64,
    pub alpha_map: Vec<f64>,
    pub alpha_index: usize,
    pub entropy: Option<f64>,
    pub top_words: Vec<TopWord>,
    pub text_loglik: f64,
    pub hawkes_loglik: f64,
    pub first_event: f64,
    pub last_event: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersFile {
    pub schema_version: u32,
    pub clusters: Vec<ClusterRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub diagnostics: crate::smc::Diagnostics,
    pub particle_index: usize,
    pub particle_weight: f64,
    pub vocab_size: usize,
    pub config: PdhpConfig,
    pub warnings: Vec<String>,
}

/// Writes `assignments.csv`, `clusters.json` and `diagnostics.json` into `dir`.
pub fn write_fit_outputs(
    dir: &Path,
    result: &StreamResult,
    vocab: &Vocabulary,
    config: &PdhpConfig,
    vocab_size: usize,
    warnings: &[String],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PdhpError::io(dir, e))?;
    let path = dir.join(ASSIGNMENTS_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["doc_id", "cluster_id", "particle_weight"])?;
    for a in &result.assignments {
        w.serialize((&a.doc_id, a.cluster, result.particle_weight))?;
    }
    w.flush().map_err(|e| PdhpError::io(&path, e))?;

    let clusters = result
        .clusters
        .iter()
        .map(|c| ClusterRecord {
            id: c.id,
            n_events: c.n_events,
            n_words: c.n_words,
            alpha_map: c.alpha_map.clone(),
            alpha_index: c.alpha_index,
            entropy: c.entropy,
            top_words: c
                .top_words
                .iter()
                .map(|&(w, count)| TopWord {
                    word: vocab.word(w).map(str::to_owned).unwrap_or_else(|| w.to_string()),
                    count,
                })
                .collect(),
            text_loglik: c.text_loglik,
            hawkes_loglik: c.hawkes_loglik,
            first_event: c.first_event,
            last_event: c.last_event,
        })
        .collect();
    write_json(
        &dir.join(CLUSTERS_FILE),
        &ClustersFile {
            schema_version: SCHEMA_VERSION,
            clusters,
        },
    )?;
    write_json(
        &dir.join(DIAGNOSTICS_FILE),
        &DiagnosticsFile {
            schema_version: SCHEMA_VERSION,
            diagnostics: result.diagnostics.clone(),
            particle_index: result.particle_index,
            particle_weight: result.particle_weight,
            vocab_size,
            config: config.clone(),
            warnings: warnings.to_vec(),
        },
    )
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub doc_id: String,
    pub temporal_label: u32,
    pub textual_label: u32,
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub spec: GenSpec,
    pub alphas: Vec<AlphaSample>,
    pub vocabularies: Vec<VocabBlock>,
    pub n_events: usize,
    pub achieved_vocab_overlap: f64,
    pub achieved_intensity_overlap: Option<f64>,
    pub shift: Option<f64>,
    pub redrawn: usize,
    pub attempt: u32,
}

/// Token string used for word id `w` in generated data.
pub fn synthetic_token(w: u32) -> String {
    format!("w{w:04}")
}

/// Writes `docs.jsonl`, `meta.json` and `truth.csv` into `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PdhpError::io(dir, e))?;
    let path = dir.join(DOCS_FILE);
    let mut w = create(&path)?;
    for e in &ds.events {
        let rec = DocumentRecord {
            id: e.id.clone(),
            t: e.time,
            tokens: None,
            counts: Some(e.bag.entries().iter().map(|&(w, c)| (synthetic_token(w), c)).collect()),
            text: None,
        };
        serde_json::to_writer(&mut w, &rec).map_err(|err| PdhpError::json(path.display().to_string(), err))?;
        w.write_all(b"\n").map_err(|err| PdhpError::io(&path, err))?;
    }
    w.flush().map_err(|e| PdhpError::io(&path, e))?;

    let path = dir.join(TRUTH_FILE);
    let mut t = csv::Writer::from_writer(create(&path)?);
    for e in &ds.events {
        t.serialize(TruthRow {
            doc_id: e.id.clone(),
            temporal_label: e.temporal_label,
            textual_label: e.textual_label,
        })?;
    }
    t.flush().map_err(|e| PdhpError::io(&path, e))?;

    write_json(
        &dir.join(META_FILE),
        &DatasetMeta {
            schema_version: SCHEMA_VERSION,
            spec: ds.spec.clone(),
            alphas: ds.alphas.clone(),
            vocabularies: ds.vocabularies.clone(),
            n_events: ds.events.len(),
            achieved_vocab_overlap: ds.achieved_vocab_overlap,
            achieved_intensity_overlap: ds.achieved_intensity_overlap,
            shift: ds.shift,
            redrawn: ds.redrawn,
            attempt: ds.attempt,
        },
    )
}
