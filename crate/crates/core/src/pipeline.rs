//! Corpus runs: read records, align or score them in parallel, write results
//! in input order.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align_record, AlignerChoice, Strategy, ThresholdMode};
use crate::detection::{sentence_scores, ScoreOptions, ScoreRecord};
use crate::embedding_io::{read_records, ReadOptions, RecordError, SentencePairRecord};
use crate::evaluation::{
    corpus_aer, parse_pharaoh_line, roc_auc_binary, roc_auc_multiclass, AerCounts, EvalError, GoldAlignment,
    LabeledScore, MulticlassAuc, ScoreKind,
};
use crate::geometry::NullDistance;

/// Environment variable consulted for the worker count when none is configured.
pub const JOBS_ENV: &str = "OTTO_ALIGN_JOBS";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("join mismatch: {}", .missing.join(", "))]
    JoinMismatch { missing: Vec<String> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub aligner: AlignerChoice,
    pub score: ScoreOptions,
    pub read: ReadOptions,
    pub emit_null: bool,
    pub strict: bool,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            aligner: AlignerChoice::default(),
            score: ScoreOptions::default(),
            read: ReadOptions::default(),
            emit_null: false,
            strict: false,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.aligner.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.jobs == 0 {
            return Err(PipelineError::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Config-file form; every field is optional and overridden by explicit flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub strategy: Option<Strategy>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub stabilized: Option<bool>,
    pub pot_mass: Option<f64>,
    pub pot_tau: Option<f64>,
    pub pot_tau_mode: Option<ThresholdMode>,
    pub null_distance: Option<NullDistance>,
    pub paper_literal_eq78: Option<bool>,
    pub normalize_before_pool: Option<bool>,
    pub emit_null: Option<bool>,
    pub strict: Option<bool>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Overlays `other` on `self`; fields set in `other` win.
    pub fn merged_with(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            strategy, epsilon, max_iters, tol, stabilized, pot_mass, pot_tau, pot_tau_mode, null_distance,
            paper_literal_eq78, normalize_before_pool, emit_null, strict, jobs
        )
    }

    /// Resolves to a run configuration; `env_jobs` is used only when no job count is set.
    pub fn into_run_config(self, env_jobs: Option<usize>) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::default();
        let a = &mut cfg.aligner;
        if let Some(v) = self.strategy {
            a.strategy = v;
        }
        if let Some(v) = self.epsilon {
            a.solver.epsilon = v;
        }
        if let Some(v) = self.max_iters {
            a.solver.max_iterations = v;
        }
        if let Some(v) = self.tol {
            a.solver.tolerance = v;
        }
        if let Some(v) = self.stabilized {
            a.solver.stabilized = v;
        }
        if let Some(v) = self.pot_mass {
            a.pot_mass = v;
        }
        if let Some(v) = self.pot_tau {
            a.pot_tau = v;
        }
        if let Some(v) = self.pot_tau_mode {
            a.threshold_mode = v;
        }
        if let Some(v) = self.null_distance {
            a.null_distance = v;
        }
        cfg.score.paper_literal_eq78 = self.paper_literal_eq78.unwrap_or(false);
        cfg.read.normalize_before_pool = self.normalize_before_pool.unwrap_or(false);
        cfg.emit_null = self.emit_null.unwrap_or(false);
        cfg.strict = self.strict.unwrap_or(false);
        cfg.jobs = self.jobs.or(env_jobs).unwrap_or(1);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A record that could not be processed.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFailure {
    /// Pair id, or `line N` when the record never parsed.
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub written: usize,
    pub failures: Vec<RecordFailure>,
    /// Pairs whose solver reported a warning (non-convergence, degenerate geometry).
    pub warned: usize,
    /// Set when `strict` stopped the run early.
    pub aborted: bool,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

type Job = Result<SentencePairRecord, RecordFailure>;
/// One output line plus whether the solver raised warnings.
type Done = Result<(String, bool), RecordFailure>;

fn failure_from_read(err: RecordError, line: usize) -> RecordFailure {
    let id = err.pair_id().map_or_else(|| format!("line {line}"), str::to_string);
    RecordFailure { id, message: err.to_string() }
}

fn process<R, W, F>(input: R, mut out: W, cfg: &RunConfig, work: F) -> Result<RunSummary, PipelineError>
where
    R: BufRead,
    W: Write,
    F: Fn(&SentencePairRecord) -> Done + Sync,
{
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let chunk_size = 64 * cfg.jobs;
    let mut reader = read_records(input, cfg.read);
    let mut summary = RunSummary::default();

    loop {
        let mut chunk: Vec<Job> = Vec::with_capacity(chunk_size);
        while chunk.len() < chunk_size {
            match reader.next() {
                Some(item) => chunk.push(item.map_err(|e| failure_from_read(e, reader.line_no()))),
                None => break,
            }
        }
        if chunk.is_empty() {
            break;
        }
        // Indexed parallel collect keeps input order.
        let results: Vec<Done> =
            pool.install(|| chunk.par_iter().map(|job| job.as_ref().map_err(Clone::clone).and_then(&work)).collect());
        for result in results {
            match result {
                Ok((line, warned)) => {
                    out.write_all(line.as_bytes())?;
                    out.write_all(b"\n")?;
                    summary.written += 1;
                    summary.warned += usize::from(warned);
                }
                Err(failure) => {
                    summary.failures.push(failure);
                    if cfg.strict {
                        summary.aborted = true;
                        out.flush()?;
                        return Ok(summary);
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(summary)
}

/// Writes one Pharaoh line per record.
pub fn run_align<R: BufRead, W: Write>(input: R, out: W, cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    process(input, out, cfg, |record| {
        let outcome = align_record(record, &cfg.aligner)
            .map_err(|e| RecordFailure { id: record.pair_id.clone(), message: e.to_string() })?;
        Ok((outcome.alignment.to_pharaoh(cfg.emit_null), !outcome.warnings.is_empty()))
    })
}

/// Writes one JSON score object per record, always using OTTAWA.
pub fn run_detect<R: BufRead, W: Write>(input: R, out: W, cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    let mut ottawa = *cfg;
    ottawa.aligner.strategy = Strategy::Ottawa;
    process(input, out, &ottawa, |record| {
        let fail = |message: String| RecordFailure { id: record.pair_id.clone(), message };
        let outcome = align_record(record, &ottawa.aligner).map_err(|e| fail(e.to_string()))?;
        let detail = outcome.ottawa.as_ref().expect("OTTAWA strategy");
        let scores = sentence_scores(&outcome.alignment, &detail.plan_rev, &detail.plan_fwd, ottawa.score)
            .map_err(|e| fail(e.to_string()))?;
        let warned = !outcome.warnings.is_empty();
        let line = serde_json::to_string(&ScoreRecord::new(record.pair_id.clone(), scores, outcome.warnings))
            .map_err(|e| fail(e.to_string()))?;
        Ok((line, warned))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AerReport {
    pub sentences: usize,
    pub aer: f64,
    pub counts: AerCounts,
}

/// Corpus AER of Pharaoh predictions against gold, joined by line index.
pub fn eval_aer<P: BufRead, G: BufRead>(predicted: P, gold: G) -> Result<AerReport, PipelineError> {
    let pred_lines: Vec<String> = predicted.lines().collect::<Result<_, _>>()?;
    let gold_lines: Vec<String> = gold.lines().collect::<Result<_, _>>()?;
    if pred_lines.len() != gold_lines.len() {
        let (short, long) = if pred_lines.len() < gold_lines.len() { ("predictions", &gold_lines) } else { ("gold", &pred_lines) };
        let start = pred_lines.len().min(gold_lines.len());
        let missing = (start..long.len()).map(|k| format!("line {} (absent from {short})", k + 1)).collect();
        return Err(PipelineError::JoinMismatch { missing });
    }
    let mut preds = Vec::with_capacity(pred_lines.len());
    let mut golds = Vec::with_capacity(gold_lines.len());
    for (k, (p, g)) in pred_lines.iter().zip(&gold_lines).enumerate() {
        preds.push(parse_pharaoh_line(p, k + 1)?);
        golds.push(GoldAlignment::parse_line(g, k + 1)?);
    }
    let counts = corpus_aer(preds.iter().zip(&golds));
    Ok(AerReport { sentences: preds.len(), aer: counts.aer(), counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub kind: ScoreKind,
    pub pairs: usize,
    /// Label 0 against labels 1-3.
    pub binary_auc: f64,
    pub multiclass: MulticlassAuc,
}

#[derive(Deserialize)]
struct LabelLine {
    pair_id: String,
    #[serde(default)]
    hallucination: Option<u8>,
    #[serde(default)]
    omission: Option<u8>,
    #[serde(default)]
    labels: Option<Labels>,
}

#[derive(Deserialize)]
struct Labels {
    #[serde(default)]
    hallucination: Option<u8>,
    #[serde(default)]
    omission: Option<u8>,
}

fn parse_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(input: R) -> Result<Vec<T>, PipelineError> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Parse { line: k + 1, message: e.to_string() })?);
    }
    Ok(out)
}

/// ROC AUC of `detect` output against severity labels, joined by `pair_id`.
///
/// Label lines are `{"pair_id", "hallucination", "omission"}`; a record file
/// whose `labels` object carries the same keys works as well.
pub fn eval_auc<S: BufRead, L: BufRead>(scores: S, labels: L, kind: ScoreKind) -> Result<AucReport, PipelineError> {
    let scores: Vec<ScoreRecord> = parse_jsonl(scores)?;
    let label_lines: Vec<LabelLine> = parse_jsonl(labels)?;
    let mut gold: HashMap<String, u8> = HashMap::new();
    let mut unlabeled = Vec::new();
    for l in label_lines {
        let nested = l.labels.as_ref();
        let value = match kind {
            ScoreKind::Hallucination => l.hallucination.or(nested.and_then(|n| n.hallucination)),
            ScoreKind::Omission => l.omission.or(nested.and_then(|n| n.omission)),
        };
        match value {
            Some(v) => {
                gold.insert(l.pair_id, v);
            }
            None => unlabeled.push(l.pair_id),
        }
    }

    let score_ids: HashSet<&str> = scores.iter().map(|s| s.pair_id.as_str()).collect();
    let mut missing: Vec<String> = scores
        .iter()
        .filter(|s| !gold.contains_key(&s.pair_id))
        .map(|s| format!("{} (no label)", s.pair_id))
        .collect();
    let mut absent: Vec<String> =
        gold.keys().filter(|id| !score_ids.contains(id.as_str())).map(|id| format!("{id} (no score)")).collect();
    absent.sort();
    missing.extend(absent);
    if !missing.is_empty() {
        return Err(PipelineError::JoinMismatch { missing });
    }

    let labeled: Vec<LabeledScore> = scores
        .iter()
        .map(|s| {
            let value = match kind {
                ScoreKind::Hallucination => s.hallucination,
                ScoreKind::Omission => s.omission,
            };
            LabeledScore::new(value, gold[&s.pair_id])
        })
        .collect::<Result<_, _>>()?;
    let binary_auc = roc_auc_binary(&labeled, &[1, 2, 3].into_iter().collect())?;
    let multiclass = roc_auc_multiclass(&labeled)?;
    Ok(AucReport { kind, pairs: labeled.len(), binary_auc, multiclass })
}
