//! The `generate`, `fit`, `eval` and `sweep` operations behind the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PdhpError, Result};
use crate::eval::{alpha_mae, delta_nmi, nmi, weighted_entropy, NmiNorm};
use crate::io::{self, ClustersFile, DatasetMeta, RunConfig, TruthRow, Vocabulary};
use crate::smc::{infer_vocab_size, run_stream, Document, PdhpConfig, StreamResult};
use crate::synth::{generate_dataset, GenSpec};

/// Generates `count` datasets into `out/ds-000`, `out/ds-001`, ... with
/// seeds `seed, seed + 1, ...`. Returns the dataset directories.
pub fn cmd_generate(spec_path: &Path, out: &Path, seed: Option<u64>, count: usize) -> Result<Vec<PathBuf>> {
    let mut spec: GenSpec = io::read_json(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    generate_into(&spec, out, count)
}

pub fn generate_into(spec: &GenSpec, out: &Path, count: usize) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    if count == 0 {
        return Err(PdhpError::input("count must be at least 1"));
    }
    let jobs: Vec<(PathBuf, GenSpec)> = (0..count)
        .map(|i| {
            let s = GenSpec {
                seed: spec.seed.wrapping_add(i as u64),
                ..spec.clone()
            };
            (out.join(format!("ds-{i:03}")), s)
        })
        .collect();
    jobs.par_iter()
        .map(|(dir, s)| io::write_dataset(dir, &generate_dataset(s)?).map(|_| dir.clone()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub result: StreamResult,
    pub vocab: Vocabulary,
    pub vocab_size: usize,
    pub config: PdhpConfig,
    pub warnings: Vec<String>,
}

/// Clusters an in-memory stream.
pub fn fit_documents(docs: &[Document], vocab: Vocabulary, config: &PdhpConfig) -> Result<FitOutcome> {
    let mut warnings = Vec::new();
    if docs.is_empty() {
        warnings.push("input contains no documents".to_owned());
    }
    let vocab_size = config
        .vocab_size
        .unwrap_or_else(|| vocab.len().max(infer_vocab_size(docs)).max(1));
    let config = PdhpConfig {
        vocab_size: Some(vocab_size),
        ..config.clone()
    };
    let result = run_stream(docs, &config)?;
    if result.diagnostics.jittered_documents > 0 {
        warnings.push(format!(
            "{} documents shared a timestamp and were jittered",
            result.diagnostics.jittered_documents
        ));
    }
    Ok(FitOutcome {
        result,
        vocab,
        vocab_size,
        config,
        warnings,
    })
}

/// Reads `data`, clusters it and writes the three output files into `out`.
pub fn cmd_fit(data: &Path, config: &RunConfig, out: &Path, seed: Option<u64>) -> Result<FitOutcome> {
    let mut pdhp = config.to_pdhp()?;
    if let Some(s) = seed {
        pdhp.seed = s;
    }
    let (docs, vocab) = io::read_documents(data, config.read_options())?;
    let fit = fit_documents(&docs, vocab, &pdhp)?;
    io::write_fit_outputs(out, &fit.result, &fit.vocab, &fit.config, fit.vocab_size, &fit.warnings)?;
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_documents: usize,
    pub n_clusters: usize,
    pub nmi_temporal: f64,
    pub nmi_textual: f64,
    pub delta_nmi: f64,
    pub mae: Option<f64>,
    pub matched_clusters: usize,
    pub unmatched_clusters: usize,
    pub entropy: Option<f64>,
}

/// Aligns predictions and truth by document id.
fn align(pred: &BTreeMap<String, u32>, truth: &[TruthRow]) -> Result<(Vec<u32>, Vec<u32>, Vec<u32>)> {
    if pred.len() != truth.len() {
        return Err(PdhpError::input(format!(
            "prediction has {} documents but truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut p = Vec::with_capacity(truth.len());
    for row in truth {
        let c = pred
            .get(&row.doc_id)
            .ok_or_else(|| PdhpError::input(format!("document {} has no prediction", row.doc_id)))?;
        p.push(*c);
    }
    Ok((
        p,
        truth.iter().map(|r| r.temporal_label).collect(),
        truth.iter().map(|r| r.textual_label).collect(),
    ))
}

/// Scores predictions against truth. `clusters` and `meta` enable the
/// kernel-weight error and the entropy summary.
pub fn evaluate(
    pred: &BTreeMap<String, u32>,
    truth: &[TruthRow],
    clusters: Option<&ClustersFile>,
    meta: Option<&DatasetMeta>,
    norm: NmiNorm,
) -> Result<EvalReport> {
    let (p, temporal, textual) = align(pred, truth)?;
    let n_clusters = p.iter().collect::<std::collections::BTreeSet<_>>().len();
    let (nmi_temporal, nmi_textual, delta) = if p.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            nmi(&p, &temporal, norm)?,
            nmi(&p, &textual, norm)?,
            delta_nmi(&p, &temporal, &textual, norm)?,
        )
    };
    let mut report = EvalReport {
        n_documents: p.len(),
        n_clusters,
        nmi_temporal,
        nmi_textual,
        delta_nmi: delta,
        mae: None,
        matched_clusters: 0,
        unmatched_clusters: n_clusters,
        entropy: None,
    };
    if let Some(c) = clusters {
        report.entropy = weighted_entropy(c.clusters.iter().map(|c| (c.entropy, c.n_events)));
        if let Some(m) = meta {
            let true_alphas: BTreeMap<u32, Vec<f64>> = m
                .alphas
                .iter()
                .enumerate()
                .map(|(k, a)| (k as u32, a.weights().to_vec()))
                .collect();
            let inferred: BTreeMap<u32, Vec<f64>> = c.clusters.iter().map(|c| (c.id, c.alpha_map.clone())).collect();
            let mae = alpha_mae(&temporal, &p, &true_alphas, &inferred)?;
            report.mae = mae.mae;
            report.matched_clusters = mae.matched.len();
            report.unmatched_clusters = mae.unmatched_inferred;
        }
    }
    Ok(report)
}

fn pick(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

/// `pred` is a fit output directory or an assignments file; `truth` a
/// dataset directory or a truth file. Sibling `clusters.json` and
/// `meta.json` are used when present.
pub fn cmd_eval(pred: &Path, truth: &Path, norm: NmiNorm) -> Result<EvalReport> {
    let assignments = pick(pred, io::ASSIGNMENTS_FILE);
    let truth_file = pick(truth, io::TRUTH_FILE);
    let rows = io::read_assignments(&assignments)?;
    let pred_map: BTreeMap<String, u32> = rows.into_iter().map(|r| (r.doc_id, r.cluster_id)).collect();
    let truth_rows = io::read_truth(&truth_file)?;
    let sibling = |p: &Path, f: &str| p.parent().map(|d| d.join(f)).filter(|f| f.exists());
    let clusters: Option<ClustersFile> = sibling(&assignments, io::CLUSTERS_FILE)
        .map(|p| io::read_json(&p))
        .transpose()?;
    let meta: Option<DatasetMeta> = sibling(&truth_file, io::META_FILE).map(|p| io::read_json(&p)).transpose()?;
    evaluate(&pred_map, &truth_rows, clusters.as_ref(), meta.as_ref(), norm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub r: f64,
    pub seed: u64,
    pub nmi_text: Option<f64>,
    pub nmi_temp: Option<f64>,
    pub delta_nmi: Option<f64>,
    pub mae: Option<f64>,
    pub entropy: Option<f64>,
    pub n_clusters: Option<usize>,
    pub status: String,
    pub error: String,
}

fn sweep_cell(dir: &Path, name: &str, r: f64, config: &RunConfig, norm: NmiNorm) -> Result<SweepRow> {
    let mut pdhp = config.to_pdhp()?;
    pdhp.r = r;
    let meta: Option<DatasetMeta> = {
        let p = dir.join(io::META_FILE);
        p.exists().then(|| io::read_json(&p)).transpose()?
    };
    if pdhp.vocab_size.is_none() {
        pdhp.vocab_size = meta.as_ref().map(|m| m.spec.vocab_size);
    }
    let (docs, vocab) = io::read_documents(&dir.join(io::DOCS_FILE), config.read_options())?;
    let fit = fit_documents(&docs, vocab, &pdhp)?;
    let truth = io::read_truth(&dir.join(io::TRUTH_FILE))?;
    let pred: BTreeMap<String, u32> = fit
        .result
        .assignments
        .iter()
        .map(|a| (a.doc_id.clone(), a.cluster))
        .collect();
    let clusters = ClustersFile {
        schema_version: io::SCHEMA_VERSION,
        clusters: fit
            .result
            .clusters
            .iter()
            .map(|c| io::ClusterRecord {
                id: c.id,
                n_events: c.n_events,
                n_words: c.n_words,
                alpha_map: c.alpha_map.clone(),
                alpha_index: c.alpha_index,
                entropy: c.entropy,
                top_words: Vec::new(),
                text_loglik: c.text_loglik,
                hawkes_loglik: c.hawkes_loglik,
                first_event: c.first_event,
                last_event: c.last_event,
            })
            .collect(),
    };
    let rep = evaluate(&pred, &truth, Some(&clusters), meta.as_ref(), norm)?;
    Ok(SweepRow {
        dataset: name.to_owned(),
        r,
        seed: pdhp.seed,
        nmi_text: Some(rep.nmi_textual),
        nmi_temp: Some(rep.nmi_temporal),
        delta_nmi: Some(rep.delta_nmi),
        mae: rep.mae,
        entropy: rep.entropy,
        n_clusters: Some(rep.n_clusters),
        status: "ok".into(),
        error: String::new(),
    })
}

/// Dataset directories under `data`: every subdirectory holding a document
/// file, or `data` itself if it holds one. Sorted by name.
pub fn dataset_dirs(data: &Path) -> Result<Vec<(String, PathBuf)>> {
    if data.join(io::DOCS_FILE).exists() {
        let name = data.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, data.to_path_buf())]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(data).map_err(|e| PdhpError::io(data, e))? {
        let entry = entry.map_err(|e| PdhpError::io(data, e))?;
        let path = entry.path();
        if path.join(io::DOCS_FILE).exists() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(PdhpError::input(format!("no datasets found under {}", data.display())));
    }
    Ok(out)
}

/// Runs every (dataset, r) cell. Failing cells are reported in their row
/// and do not stop the sweep.
pub fn sweep(data: &Path, rs: &[f64], config: &RunConfig, norm: NmiNorm) -> Result<Vec<SweepRow>> {
    if let Some(bad) = rs.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(PdhpError::input(format!("r values must be finite and >= 0 (got {bad})")));
    }
    let base = config.to_pdhp()?;
    let datasets = dataset_dirs(data)?;
    let cells: Vec<(&String, &PathBuf, f64)> = datasets
        .iter()
        .flat_map(|(n, p)| rs.iter().map(move |&r| (n, p, r)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(name, dir, r)| {
            sweep_cell(dir, name, r, config, norm).unwrap_or_else(|e| SweepRow {
                dataset: name.clone(),
                r,
                seed: base.seed,
                nmi_text: None,
                nmi_temp: None,
                delta_nmi: None,
                mae: None,
                entropy: None,
                n_clusters: None,
                status: "failed".into(),
                error: e.to_string(),
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

/// Writes `metrics.csv` and `metrics.jsonl` into `out`.
pub fn cmd_sweep(data: &Path, rs: &[f64], config: &RunConfig, out: &Path, norm: NmiNorm) -> Result<SweepSummary> {
    let rows = sweep(data, rs, config, norm)?;
    fs::create_dir_all(out).map_err(|e| PdhpError::io(out, e))?;
    let csv_path = out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| PdhpError::io(&csv_path, e))?;
    let jsonl = out.join("metrics.jsonl");
    let mut lines = String::new();
    for row in &rows {
        lines.push_str(&serde_json::to_string(row).map_err(|e| PdhpError::json("metrics", e))?);
        lines.push('\n');
    }
    fs::write(&jsonl, lines).map_err(|e| PdhpError::io(&jsonl, e))?;
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| format!("{} r={}: {}", r.dataset, r.r, r.error))
        .collect();
    Ok(SweepSummary {
        cells: rows.len(),
        failed: failures.len(),
        failures,
    })
}
