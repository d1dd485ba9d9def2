//! Hallucination and omission scores from OTTAWA alignments.
//!
//! A sentence-level score adds two signals for one side: the fraction of its
//! words left unaligned by the final alignment, and the mean mass those words
//! sent to the null word. Target-side signals score hallucination and
//! source-side signals score omission.

use serde::{Deserialize, Serialize};

use crate::align::AlignmentMatrix;
use crate::ot::TransportPlan;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("plan shapes {rev:?} / {fwd:?} do not fit a {m}x{n} alignment")]
pub struct DimensionMismatch {
    pub m: usize,
    pub n: usize,
    pub rev: (usize, usize),
    pub fwd: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub r_src: f64,
    pub r_tgt: f64,
    pub c_rev: f64,
    pub c_fwd: f64,
    pub hallucination: f64,
    pub omission: f64,
    pub word_hallucination: Vec<f64>,
    pub word_omission: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Pair hallucination with the source-side unaligned ratio and omission
    /// with the target-side one, the opposite of the default.
    pub paper_literal_eq78: bool,
}

fn check(gamma: &AlignmentMatrix, rev: &TransportPlan, fwd: &TransportPlan) -> Result<(usize, usize), DimensionMismatch> {
    let (m, n) = gamma.gamma.dim();
    if rev.values.dim() != (m + 1, n) || fwd.values.dim() != (m, n + 1) {
        return Err(DimensionMismatch { m, n, rev: rev.values.dim(), fwd: fwd.values.dim() });
    }
    Ok((m, n))
}

fn indicator(flag: bool) -> f64 {
    if flag {
        1.0
    } else {
        0.0
    }
}

pub fn sentence_scores(
    gamma: &AlignmentMatrix,
    plan_rev: &TransportPlan,
    plan_fwd: &TransportPlan,
    opts: ScoreOptions,
) -> Result<DetectionScores, DimensionMismatch> {
    let (m, n) = check(gamma, plan_rev, plan_fwd)?;
    let src_unaligned = gamma.src_unaligned();
    let tgt_unaligned = gamma.tgt_unaligned();
    let r_src = src_unaligned.iter().filter(|&&u| u).count() as f64 / m as f64;
    let r_tgt = tgt_unaligned.iter().filter(|&&u| u).count() as f64 / n as f64;
    let null_row = plan_rev.values.row(m);
    let null_col = plan_fwd.values.column(n);
    let c_rev = null_row.sum() / n as f64;
    let c_fwd = null_col.sum() / m as f64;

    let (hallucination, omission) =
        if opts.paper_literal_eq78 { (r_src + c_rev, r_tgt + c_fwd) } else { (r_tgt + c_rev, r_src + c_fwd) };

    let (word_hallucination, word_omission) = word_scores_unchecked(&src_unaligned, &tgt_unaligned, plan_rev, plan_fwd);
    Ok(DetectionScores { r_src, r_tgt, c_rev, c_fwd, hallucination, omission, word_hallucination, word_omission })
}

/// Per-word scores: null mass scaled so a word's full share counts as 1, plus 1 if unaligned.
pub fn word_scores(
    gamma: &AlignmentMatrix,
    plan_rev: &TransportPlan,
    plan_fwd: &TransportPlan,
) -> Result<(Vec<f64>, Vec<f64>), DimensionMismatch> {
    check(gamma, plan_rev, plan_fwd)?;
    Ok(word_scores_unchecked(&gamma.src_unaligned(), &gamma.tgt_unaligned(), plan_rev, plan_fwd))
}

fn word_scores_unchecked(
    src_unaligned: &[bool],
    tgt_unaligned: &[bool],
    plan_rev: &TransportPlan,
    plan_fwd: &TransportPlan,
) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (src_unaligned.len(), tgt_unaligned.len());
    let null_row = plan_rev.values.row(m);
    let null_col = plan_fwd.values.column(n);
    let hallucination =
        (0..n).map(|j| n as f64 * null_row[j] + indicator(tgt_unaligned[j])).collect();
    let omission =
        (0..m).map(|i| m as f64 * null_col[i] + indicator(src_unaligned[i])).collect();
    (hallucination, omission)
}

/// One line of `detect` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub pair_id: String,
    pub hallucination: f64,
    pub omission: f64,
    pub r_src: f64,
    pub r_tgt: f64,
    pub c_fwd: f64,
    pub c_rev: f64,
    pub word_hallucination: Vec<f64>,
    pub word_omission: Vec<f64>,
    pub solver_warnings: Vec<String>,
}

impl ScoreRecord {
    pub fn new(pair_id: impl Into<String>, scores: DetectionScores, solver_warnings: Vec<String>) -> Self {
        ScoreRecord {
            pair_id: pair_id.into(),
            hallucination: scores.hallucination,
            omission: scores.omission,
            r_src: scores.r_src,
            r_tgt: scores.r_tgt,
            c_fwd: scores.c_fwd,
            c_rev: scores.c_rev,
            word_hallucination: scores.word_hallucination,
            word_omission: scores.word_omission,
            solver_warnings,
        }
    }
}
