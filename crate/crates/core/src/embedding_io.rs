//! Embedding record ingestion.
//!
//! Records are line-delimited JSON, one sentence pair per line:
//!
//! ```text
//! {"pair_id": "...", "src_words": [...], "tgt_words": [...],
//!  "src_emb": [[...]], "tgt_emb": [[...]],
//!  "src_token_to_word": [...], "tgt_token_to_word": [...], "labels": {...}}
//! ```
//!
//! When a `*_token_to_word` array is present the matching `*_emb` holds one row
//! per subword token and is mean-pooled to word level. Otherwise `*_emb` holds
//! one row per word already.

use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// Pooled word vectors below this norm are rejected.
pub const MIN_WORD_NORM: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("{pair_id}: {side} word {word} has a zero-norm embedding")]
    ZeroNormWord { pair_id: String, side: Side, word: usize },
    #[error("{pair_id}: {side} word {word} receives no tokens")]
    MappingGap { pair_id: String, side: Side, word: usize },
    #[error("{pair_id}: {side} token map is invalid: {reason}")]
    InvalidMapping { pair_id: String, side: Side, reason: String },
    #[error("{pair_id}: embedding dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch { pair_id: String, expected: usize, got: usize },
    #[error("{pair_id}: {side} side is malformed: {reason}")]
    Malformed { pair_id: String, side: Side, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RecordError {
    /// Pair id of the offending record, when it was parsed far enough to know it.
    pub fn pair_id(&self) -> Option<&str> {
        match self {
            RecordError::ZeroNormWord { pair_id, .. }
            | RecordError::MappingGap { pair_id, .. }
            | RecordError::InvalidMapping { pair_id, .. }
            | RecordError::DimensionMismatch { pair_id, .. }
            | RecordError::Malformed { pair_id, .. } => Some(pair_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Source => f.write_str("source"),
            Side::Target => f.write_str("target"),
        }
    }
}

/// Subword-level embeddings for one side of a pair, before pooling.
#[derive(Debug, Clone)]
pub struct TokenizedSide {
    pub words: Vec<String>,
    /// `num_tokens x D`
    pub token_embeddings: Array2<f64>,
    /// Word index for each token row.
    pub token_to_word: Vec<usize>,
}

/// Word-level embeddings for one side: `vectors` is `words.len() x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    pub words: Vec<String>,
    pub vectors: Array2<f64>,
}

impl WordEmbeddings {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// A validated source/target pair ready for alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePairRecord {
    pub pair_id: String,
    pub src: WordEmbeddings,
    pub tgt: WordEmbeddings,
    /// Gold annotations, carried through untouched.
    pub labels: Option<serde_json::Value>,
}

impl SentencePairRecord {
    /// Builds a record from word-level embeddings and checks every invariant.
    pub fn new(
        pair_id: impl Into<String>,
        src: WordEmbeddings,
        tgt: WordEmbeddings,
    ) -> Result<Self, RecordError> {
        let record = SentencePairRecord { pair_id: pair_id.into(), src, tgt, labels: None };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        validate_side(&self.pair_id, Side::Source, &self.src)?;
        validate_side(&self.pair_id, Side::Target, &self.tgt)?;
        if self.src.dim() != self.tgt.dim() {
            return Err(RecordError::DimensionMismatch {
                pair_id: self.pair_id.clone(),
                expected: self.src.dim(),
                got: self.tgt.dim(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.src.dim()
    }

    /// The same pair with source and target exchanged.
    pub fn swapped(&self) -> Self {
        SentencePairRecord {
            pair_id: self.pair_id.clone(),
            src: self.tgt.clone(),
            tgt: self.src.clone(),
            labels: self.labels.clone(),
        }
    }
}

fn validate_side(pair_id: &str, side: Side, emb: &WordEmbeddings) -> Result<(), RecordError> {
    let malformed = |reason: String| RecordError::Malformed { pair_id: pair_id.to_string(), side, reason };
    if emb.vectors.nrows() == 0 {
        return Err(malformed("no words".into()));
    }
    if emb.words.len() != emb.vectors.nrows() {
        return Err(malformed(format!(
            "{} words but {} embedding rows",
            emb.words.len(),
            emb.vectors.nrows()
        )));
    }
    if emb.vectors.ncols() < 2 {
        return Err(malformed(format!("embedding dimension {} is below 2", emb.vectors.ncols())));
    }
    for (w, row) in emb.vectors.outer_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(malformed(format!("word {w} has a non-finite embedding")));
        }
        if norm(row) < MIN_WORD_NORM {
            return Err(RecordError::ZeroNormWord { pair_id: pair_id.to_string(), side, word: w });
        }
    }
    Ok(())
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Mean-pools token rows into word rows.
pub fn pool_to_words(side: &TokenizedSide) -> Result<WordEmbeddings, RecordError> {
    pool_inner("", Side::Source, side, false)
}

fn pool_inner(
    pair_id: &str,
    which: Side,
    side: &TokenizedSide,
    normalize_before_pool: bool,
) -> Result<WordEmbeddings, RecordError> {
    let invalid = |reason: String| RecordError::InvalidMapping { pair_id: pair_id.to_string(), side: which, reason };
    let num_words = side.words.len();
    let dim = side.token_embeddings.ncols();
    if side.token_to_word.len() != side.token_embeddings.nrows() {
        return Err(invalid(format!(
            "{} map entries for {} token rows",
            side.token_to_word.len(),
            side.token_embeddings.nrows()
        )));
    }
    if side.token_to_word.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("word indices must be non-decreasing".into()));
    }
    if let Some(&bad) = side.token_to_word.iter().find(|&&w| w >= num_words) {
        return Err(invalid(format!("word index {bad} out of range for {num_words} words")));
    }

    let mut pooled = Array2::<f64>::zeros((num_words, dim));
    let mut counts = vec![0usize; num_words];
    for (row, &w) in side.token_embeddings.outer_iter().zip(&side.token_to_word) {
        let mut target = pooled.row_mut(w);
        if normalize_before_pool {
            let n = norm(row);
            if n < MIN_WORD_NORM {
                return Err(RecordError::ZeroNormWord { pair_id: pair_id.to_string(), side: which, word: w });
            }
            target.scaled_add(1.0 / n, &row);
        } else {
            target += &row;
        }
        counts[w] += 1;
    }
    for (w, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(RecordError::MappingGap { pair_id: pair_id.to_string(), side: which, word: w });
        }
        let mut row = pooled.row_mut(w);
        row /= count as f64;
        if norm(row.view()) < MIN_WORD_NORM {
            return Err(RecordError::ZeroNormWord { pair_id: pair_id.to_string(), side: which, word: w });
        }
    }
    Ok(WordEmbeddings { words: side.words.clone(), vectors: pooled })
}

/// On-disk shape of one record line.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    pair_id: String,
    src_words: Vec<String>,
    tgt_words: Vec<String>,
    src_emb: Vec<Vec<f64>>,
    tgt_emb: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    src_token_to_word: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tgt_token_to_word: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// L2-normalize each token row before averaging.
    pub normalize_before_pool: bool,
    /// Reject records whose dimension differs from the first record's.
    pub uniform_dim: bool,
}

fn rows_to_matrix(
    pair_id: &str,
    side: Side,
    rows: &[Vec<f64>],
) -> Result<Array2<f64>, RecordError> {
    let dim = rows.first().map_or(0, Vec::len);
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != dim) {
        return Err(RecordError::Malformed {
            pair_id: pair_id.to_string(),
            side,
            reason: format!("row {r} has {} columns, expected {dim}", row.len()),
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked above"))
}

fn build_side(
    pair_id: &str,
    side: Side,
    words: Vec<String>,
    emb: &[Vec<f64>],
    token_to_word: Option<Vec<usize>>,
    opts: &ReadOptions,
) -> Result<WordEmbeddings, RecordError> {
    let matrix = rows_to_matrix(pair_id, side, emb)?;
    match token_to_word {
        Some(map) => {
            let tokenized = TokenizedSide { words, token_embeddings: matrix, token_to_word: map };
            pool_inner(pair_id, side, &tokenized, opts.normalize_before_pool)
        }
        None => Ok(WordEmbeddings { words, vectors: matrix }),
    }
}

/// Parses and validates a single JSON line.
pub fn parse_record(line: &str, line_no: usize, opts: &ReadOptions) -> Result<SentencePairRecord, RecordError> {
    let raw: RawRecord = serde_json::from_str(line)
        .map_err(|e| RecordError::Parse { line: line_no, message: e.to_string() })?;
    let src = build_side(&raw.pair_id, Side::Source, raw.src_words, &raw.src_emb, raw.src_token_to_word, opts)?;
    let tgt = build_side(&raw.pair_id, Side::Target, raw.tgt_words, &raw.tgt_emb, raw.tgt_token_to_word, opts)?;
    let record = SentencePairRecord { pair_id: raw.pair_id, src, tgt, labels: raw.labels };
    record.validate()?;
    Ok(record)
}

/// Streaming reader over a JSONL record file. Blank lines are skipped.
pub struct RecordReader<R> {
    input: R,
    opts: ReadOptions,
    line_no: usize,
    expected_dim: Option<usize>,
    buf: String,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(input: R, opts: ReadOptions) -> Self {
        RecordReader { input, opts, line_no: 0, expected_dim: None, buf: String::new() }
    }

    /// One-based number of the line most recently read.
    pub fn line_no(&self) -> usize {
        self.line_no
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<SentencePairRecord, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let parsed = parse_record(line, self.line_no, &self.opts).and_then(|rec| {
                if self.opts.uniform_dim {
                    let expected = *self.expected_dim.get_or_insert(rec.dim());
                    if rec.dim() != expected {
                        return Err(RecordError::DimensionMismatch {
                            got: rec.dim(),
                            pair_id: rec.pair_id,
                            expected,
                        });
                    }
                }
                Ok(rec)
            });
            return Some(parsed);
        }
    }
}

pub fn read_records<R: BufRead>(input: R, opts: ReadOptions) -> RecordReader<R> {
    RecordReader::new(input, opts)
}

/// Writes records in word-level form (pooling already applied).
pub fn write_records<'a, W, I>(mut out: W, records: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a SentencePairRecord>,
{
    for rec in records {
        let raw = RawRecord {
            pair_id: rec.pair_id.clone(),
            src_words: rec.src.words.clone(),
            tgt_words: rec.tgt.words.clone(),
            src_emb: rec.src.vectors.outer_iter().map(|r| r.to_vec()).collect(),
            tgt_emb: rec.tgt.vectors.outer_iter().map(|r| r.to_vec()).collect(),
            src_token_to_word: None,
            tgt_token_to_word: None,
            labels: rec.labels.clone(),
        };
        serde_json::to_writer(&mut out, &raw).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
