//! Alignment error rate and ROC AUC.

use std::collections::{BTreeSet, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type Link = (usize, usize);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("line {line}: cannot parse alignment token `{token}`")]
    BadToken { line: usize, token: String },
    #[error("AUC needs at least one positive and one negative score")]
    DegenerateLabels,
    #[error("label {0} is outside 0..=3")]
    BadLabel(u8),
}

/// Gold links for one sentence. `possible` always contains `sure`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldAlignment {
    pub sure: BTreeSet<Link>,
    pub possible: BTreeSet<Link>,
}

impl GoldAlignment {
    pub fn new(sure: impl IntoIterator<Item = Link>, possible: impl IntoIterator<Item = Link>) -> Self {
        let sure: BTreeSet<Link> = sure.into_iter().collect();
        let mut possible: BTreeSet<Link> = possible.into_iter().collect();
        possible.extend(sure.iter().copied());
        GoldAlignment { sure, possible }
    }

    /// Parses one gold line: `i-j` is sure, `i?j` possible only.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, EvalError> {
        let mut sure = Vec::new();
        let mut possible = Vec::new();
        for token in line.split_whitespace() {
            let bad = || EvalError::BadToken { line: line_no, token: token.to_string() };
            let (sep, bucket) = if token.contains('?') { ('?', &mut possible) } else { ('-', &mut sure) };
            let (a, b) = token.split_once(sep).ok_or_else(bad)?;
            bucket.push((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
        }
        Ok(GoldAlignment::new(sure, possible))
    }
}

/// Parses a predicted Pharaoh line, skipping null-word tokens.
pub fn parse_pharaoh_line(line: &str, line_no: usize) -> Result<BTreeSet<Link>, EvalError> {
    let mut links = BTreeSet::new();
    for token in line.split_whitespace() {
        if token.contains(crate::align::NULL_TOKEN) {
            continue;
        }
        let bad = || EvalError::BadToken { line: line_no, token: token.to_string() };
        let (a, b) = token.split_once('-').ok_or_else(bad)?;
        links.insert((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    Ok(links)
}

/// Integer counts behind a (corpus) AER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AerCounts {
    pub a_and_s: usize,
    pub a_and_p: usize,
    pub predicted: usize,
    pub sure: usize,
}

impl AerCounts {
    pub fn sentence(predicted: &BTreeSet<Link>, gold: &GoldAlignment) -> Self {
        AerCounts {
            a_and_s: predicted.intersection(&gold.sure).count(),
            a_and_p: predicted.intersection(&gold.possible).count(),
            predicted: predicted.len(),
            sure: gold.sure.len(),
        }
    }

    pub fn add(&mut self, other: AerCounts) {
        self.a_and_s += other.a_and_s;
        self.a_and_p += other.a_and_p;
        self.predicted += other.predicted;
        self.sure += other.sure;
    }

    /// AER as the exact fraction `(numerator, denominator)`; `(0, 1)` when both sets are empty.
    pub fn as_fraction(&self) -> (usize, usize) {
        let den = self.predicted + self.sure;
        if den == 0 {
            return (0, 1);
        }
        (den - self.a_and_s - self.a_and_p, den)
    }

    pub fn aer(&self) -> f64 {
        let (num, den) = self.as_fraction();
        num as f64 / den as f64
    }
}

pub fn aer(predicted: &BTreeSet<Link>, gold: &GoldAlignment) -> f64 {
    AerCounts::sentence(predicted, gold).aer()
}

/// Corpus AER: counts are summed over sentences before dividing.
pub fn corpus_aer<'a>(pairs: impl IntoIterator<Item = (&'a BTreeSet<Link>, &'a GoldAlignment)>) -> AerCounts {
    let mut total = AerCounts::default();
    for (p, g) in pairs {
        total.add(AerCounts::sentence(p, g));
    }
    total
}

/// Severity: 0 = none, 1 = small, 2 = partial, 3 = full.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub score: f64,
    pub label: u8,
}

impl LabeledScore {
    pub fn new(score: f64, label: u8) -> Result<Self, EvalError> {
        if label > 3 {
            return Err(EvalError::BadLabel(label));
        }
        Ok(LabeledScore { score, label })
    }
}

/// Mann-Whitney AUC with average ranks for ties.
pub fn roc_auc_binary(scores: &[LabeledScore], positive: &HashSet<u8>) -> Result<f64, EvalError> {
    let mut ranked: Vec<(f64, bool)> = scores.iter().map(|s| (s.score, positive.contains(&s.label))).collect();
    let n_pos = ranked.iter().filter(|(_, p)| *p).count();
    let n_neg = ranked.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateLabels);
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < ranked.len() {
        let mut end = start;
        while end + 1 < ranked.len() && ranked[end + 1].0 == ranked[start].0 {
            end += 1;
        }
        // Ranks are 1-based; a tie group shares the mean of its ranks.
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        let group_pos = ranked[start..=end].iter().filter(|(_, p)| *p).count();
        positive_rank_sum += avg_rank * group_pos as f64;
        start = end + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    pub auc: f64,
    /// Thresholds `k` whose split `{0..k-1}` vs `{k..3}` was usable.
    pub splits_used: Vec<u8>,
    /// Always true: this is a stand-in for the multi-class definition.
    pub approximation: bool,
}

/// Unweighted mean of the binary AUCs over the three ordinal splits.
pub fn roc_auc_multiclass(scores: &[LabeledScore]) -> Result<MulticlassAuc, EvalError> {
    let mut aucs = Vec::new();
    let mut splits_used = Vec::new();
    for k in 1..=3u8 {
        let positive: HashSet<u8> = (k..=3).collect();
        match roc_auc_binary(scores, &positive) {
            Ok(auc) => {
                aucs.push(auc);
                splits_used.push(k);
            }
            Err(EvalError::DegenerateLabels) => {}
            Err(e) => return Err(e),
        }
    }
    if aucs.is_empty() {
        return Err(EvalError::DegenerateLabels);
    }
    Ok(MulticlassAuc { auc: aucs.iter().sum::<f64>() / aucs.len() as f64, splits_used, approximation: true })
}

/// Which score a label file refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Hallucination,
    Omission,
}

impl FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hallucination" => Ok(ScoreKind::Hallucination),
            "omission" => Ok(ScoreKind::Omission),
            other => Err(format!("unknown score kind `{other}`")),
        }
    }
}
