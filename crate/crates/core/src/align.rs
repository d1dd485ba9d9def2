//! Word alignment strategies.
//!
//! Every strategy produces a forward (source to target) and a reverse (target
//! to source) binary matrix and keeps their intersection. Transport plans are
//! binarized by taking the largest transported mass per row or column, the
//! plan playing the role that the negated cost plays for greedy alignment.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embedding_io::SentencePairRecord;
use crate::geometry::{cost_matrix, extend_cost, null_geometry, CostMatrix, Direction, NullDistance, NullGeometry};
use crate::ot::{self, Marginals, OtError, SolverConfig, TransportPlan};

/// Token used for the null word in Pharaoh output.
pub const NULL_TOKEN: &str = "∅";

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    pub gamma: Array2<bool>,
    pub gamma_fwd: Array2<bool>,
    pub gamma_rev: Array2<bool>,
    /// Source words whose forward choice was the null target.
    pub null_assigned_src: Vec<bool>,
    /// Target words whose reverse choice was the null source.
    pub null_assigned_tgt: Vec<bool>,
}

impl AlignmentMatrix {
    fn from_directions(gamma_fwd: Array2<bool>, gamma_rev: Array2<bool>) -> Self {
        let (m, n) = gamma_fwd.dim();
        let gamma = ndarray::Zip::from(&gamma_fwd).and(&gamma_rev).map_collect(|&f, &r| f && r);
        AlignmentMatrix {
            gamma,
            gamma_fwd,
            gamma_rev,
            null_assigned_src: vec![false; m],
            null_assigned_tgt: vec![false; n],
        }
    }

    fn symmetric(gamma: Array2<bool>) -> Self {
        Self::from_directions(gamma.clone(), gamma)
    }

    pub fn src_len(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn tgt_len(&self) -> usize {
        self.gamma.ncols()
    }

    /// Aligned `(i, j)` pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.gamma.indexed_iter().filter(|(_, &g)| g).map(|(ij, _)| ij).collect()
    }

    pub fn src_unaligned(&self) -> Vec<bool> {
        self.gamma.rows().into_iter().map(|r| !r.iter().any(|&g| g)).collect()
    }

    pub fn tgt_unaligned(&self) -> Vec<bool> {
        self.gamma.columns().into_iter().map(|c| !c.iter().any(|&g| g)).collect()
    }

    /// Pharaoh line: `i-j` pairs, 0-based, optionally followed by null tokens.
    pub fn to_pharaoh(&self, emit_null: bool) -> String {
        let mut out = String::new();
        let mut push = |tok: &str| {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        };
        for (i, j) in self.pairs() {
            push(&format!("{i}-{j}"));
        }
        if emit_null {
            for (i, _) in self.null_assigned_src.iter().enumerate().filter(|(_, &f)| f) {
                push(&format!("{i}-{NULL_TOKEN}"));
            }
            for (j, _) in self.null_assigned_tgt.iter().enumerate().filter(|(_, &f)| f) {
                push(&format!("{NULL_TOKEN}-{j}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Assignment,
    Ot,
    Pot,
    #[default]
    Ottawa,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" => Ok(Strategy::Greedy),
            "assignment" => Ok(Strategy::Assignment),
            "ot" => Ok(Strategy::Ot),
            "pot" => Ok(Strategy::Pot),
            "ottawa" => Ok(Strategy::Ottawa),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// How the partial-OT threshold is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// `tau = pot_tau * max(1/m, 1/n)`.
    #[default]
    Relative,
    /// `tau = pot_tau`.
    Absolute,
}

impl FromStr for ThresholdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relative" => Ok(ThresholdMode::Relative),
            "absolute" => Ok(ThresholdMode::Absolute),
            other => Err(format!("unknown threshold mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignerChoice {
    pub strategy: Strategy,
    pub solver: SolverConfig,
    pub pot_mass: f64,
    pub pot_tau: f64,
    pub threshold_mode: ThresholdMode,
    pub null_distance: NullDistance,
}

impl Default for AlignerChoice {
    fn default() -> Self {
        AlignerChoice {
            strategy: Strategy::Ottawa,
            solver: SolverConfig::default(),
            pot_mass: 0.5,
            pot_tau: 0.05,
            threshold_mode: ThresholdMode::Relative,
            null_distance: NullDistance::Median,
        }
    }
}

impl AlignerChoice {
    pub fn with_strategy(strategy: Strategy) -> Self {
        AlignerChoice { strategy, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), OtError> {
        self.solver.validate()?;
        if self.threshold_mode == ThresholdMode::Relative && !(self.pot_tau > 0.0 && self.pot_tau < 1.0) {
            return Err(OtError::InvalidConfig(format!("pot_tau must lie in (0, 1), got {}", self.pot_tau)));
        }
        if !(self.pot_mass > 0.0 && self.pot_mass < 1.0) {
            return Err(OtError::InvalidConfig(format!("pot_mass must lie in (0, 1), got {}", self.pot_mass)));
        }
        Ok(())
    }
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Index of the largest value; ties go to the lowest index.
/// Values this close to the maximum, relative to it, count as tied.
const TIE_RELATIVE: f64 = 1e-12;

/// First index whose value ties the maximum. Plans with forced equal entries
/// (a single row or column) differ only by rounding, so ties are judged with
/// a relative tolerance.
fn argmax(values: ArrayView1<f64>) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = max - TIE_RELATIVE * max.abs();
    values.iter().position(|&v| v >= floor).unwrap_or(0)
}

fn directional(scores: ArrayView2<f64>, pick: fn(ArrayView1<f64>) -> usize) -> AlignmentMatrix {
    let (m, n) = scores.dim();
    let mut fwd = Array2::from_elem((m, n), false);
    let mut rev = Array2::from_elem((m, n), false);
    for (i, row) in scores.rows().into_iter().enumerate() {
        fwd[[i, pick(row)]] = true;
    }
    for (j, col) in scores.columns().into_iter().enumerate() {
        rev[[pick(col), j]] = true;
    }
    AlignmentMatrix::from_directions(fwd, rev)
}

pub fn greedy_align(costs: &CostMatrix) -> AlignmentMatrix {
    directional(costs.view(), argmin)
}

pub fn assignment_align(costs: &CostMatrix) -> AlignmentMatrix {
    AlignmentMatrix::symmetric(ot::solve_assignment(costs.view()))
}

pub fn ot_align(costs: &CostMatrix, cfg: &SolverConfig) -> Result<(AlignmentMatrix, TransportPlan), OtError> {
    let plan = ot::sinkhorn_balanced(costs.view(), &Marginals::uniform(costs.nrows(), costs.ncols()), cfg)?;
    Ok((directional(plan.values.view(), argmax), plan))
}

pub fn pot_align(costs: &CostMatrix, choice: &AlignerChoice) -> Result<(AlignmentMatrix, TransportPlan), OtError> {
    let (m, n) = (costs.nrows(), costs.ncols());
    let plan = ot::solve_partial(costs.view(), &Marginals::uniform(m, n), choice.pot_mass, &choice.solver)?;
    let tau = match choice.threshold_mode {
        ThresholdMode::Relative => choice.pot_tau * (1.0 / m as f64).max(1.0 / n as f64),
        ThresholdMode::Absolute => choice.pot_tau,
    };
    Ok((AlignmentMatrix::symmetric(plan.values.mapv(|p| p >= tau)), plan))
}

/// Everything OTTAWA computes for one record.
#[derive(Debug, Clone)]
pub struct OttawaAlignment {
    pub alignment: AlignmentMatrix,
    pub costs: CostMatrix,
    /// `(m+1) x n`, null source row last.
    pub plan_rev: TransportPlan,
    /// `m x (n+1)`, null target column last.
    pub plan_fwd: TransportPlan,
    pub geometry_rev: NullGeometry,
    pub geometry_fwd: NullGeometry,
}

pub fn ottawa_align(record: &SentencePairRecord, choice: &AlignerChoice) -> Result<OttawaAlignment, OtError> {
    let costs = cost_matrix(record.src.vectors.view(), record.tgt.vectors.view());
    ottawa_from_costs(record.src.vectors.view(), record.tgt.vectors.view(), costs, choice)
}

fn ottawa_from_costs(
    src: ArrayView2<f64>,
    tgt: ArrayView2<f64>,
    costs: CostMatrix,
    choice: &AlignerChoice,
) -> Result<OttawaAlignment, OtError> {
    let (m, n) = (costs.nrows(), costs.ncols());

    let geometry_rev = null_geometry(tgt, &costs, choice.null_distance);
    let plan_rev =
        ot::solve_one_side_constrained(&extend_cost(&costs, geometry_rev.d, Direction::Reverse), &choice.solver)?;
    let geometry_fwd = null_geometry(src, &costs, choice.null_distance);
    let plan_fwd =
        ot::solve_one_side_constrained(&extend_cost(&costs, geometry_fwd.d, Direction::Forward), &choice.solver)?;

    let mut gamma_rev = Array2::from_elem((m, n), false);
    let mut null_tgt = vec![false; n];
    for (j, col) in plan_rev.values.columns().into_iter().enumerate() {
        // The null row is last, so an exact tie resolves to the real word.
        let i = argmax(col);
        if i == m {
            null_tgt[j] = true;
        } else {
            gamma_rev[[i, j]] = true;
        }
    }
    let mut gamma_fwd = Array2::from_elem((m, n), false);
    let mut null_src = vec![false; m];
    for (i, row) in plan_fwd.values.rows().into_iter().enumerate() {
        let j = argmax(row);
        if j == n {
            null_src[i] = true;
        } else {
            gamma_fwd[[i, j]] = true;
        }
    }

    let mut alignment = AlignmentMatrix::from_directions(gamma_fwd, gamma_rev);
    alignment.null_assigned_src = null_src;
    alignment.null_assigned_tgt = null_tgt;
    Ok(OttawaAlignment { alignment, costs, plan_rev, plan_fwd, geometry_rev, geometry_fwd })
}

/// Result of running any strategy on one record.
#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub alignment: AlignmentMatrix,
    pub warnings: Vec<String>,
    /// Present for the OTTAWA strategy only.
    pub ottawa: Option<OttawaAlignment>,
}

pub fn align_record(record: &SentencePairRecord, choice: &AlignerChoice) -> Result<AlignOutcome, OtError> {
    let costs = cost_matrix(record.src.vectors.view(), record.tgt.vectors.view());
    let plain = |alignment| AlignOutcome { alignment, warnings: Vec::new(), ottawa: None };
    Ok(match choice.strategy {
        Strategy::Greedy => plain(greedy_align(&costs)),
        Strategy::Assignment => plain(assignment_align(&costs)),
        Strategy::Ot => {
            let (alignment, plan) = ot_align(&costs, &choice.solver)?;
            AlignOutcome { alignment, warnings: plan.warning().into_iter().collect(), ottawa: None }
        }
        Strategy::Pot => {
            let (alignment, plan) = pot_align(&costs, choice)?;
            AlignOutcome { alignment, warnings: plan.warning().into_iter().collect(), ottawa: None }
        }
        Strategy::Ottawa => {
            let out = ottawa_from_costs(record.src.vectors.view(), record.tgt.vectors.view(), costs, choice)?;
            let warnings = [out.plan_rev.warning(), out.plan_fwd.warning()]
                .into_iter()
                .flatten()
                .chain(out.geometry_rev.fallback_used.then(|| "reverse null geometry degenerate; used c".to_string()))
                .chain(out.geometry_fwd.fallback_used.then(|| "forward null geometry degenerate; used c".to_string()))
                .collect();
            AlignOutcome { alignment: out.alignment.clone(), warnings, ottawa: Some(out) }
        }
    })
}

/// Multi-line dump of the intermediate OTTAWA quantities for one record.
pub fn describe_ottawa(record: &SentencePairRecord, out: &OttawaAlignment) -> String {
    let mut s = String::new();
    let (m, n) = (out.costs.nrows(), out.costs.ncols());
    let _ = writeln!(s, "pair {} ({m} source x {n} target words)", record.pair_id);
    let _ = writeln!(s, "\ncost matrix:");
    write_matrix(&mut s, out.costs.view(), &record.src.words, &record.tgt.words);
    for (name, geom) in [("reverse", &out.geometry_rev), ("forward", &out.geometry_fwd)] {
        let _ = writeln!(
            s,
            "\n{name} null: d_min={:.6} c={:.6} d={:.6} fallback={}",
            geom.d_min, geom.c_median, geom.d, geom.fallback_used
        );
    }
    let mut src_rows = record.src.words.clone();
    src_rows.push(NULL_TOKEN.into());
    let _ = writeln!(
        s,
        "\nreverse plan ({} iterations, converged={}):",
        out.plan_rev.iterations, out.plan_rev.converged
    );
    write_matrix(&mut s, out.plan_rev.values.view(), &src_rows, &record.tgt.words);
    let mut tgt_cols = record.tgt.words.clone();
    tgt_cols.push(NULL_TOKEN.into());
    let _ = writeln!(
        s,
        "\nforward plan ({} iterations, converged={}):",
        out.plan_fwd.iterations, out.plan_fwd.converged
    );
    write_matrix(&mut s, out.plan_fwd.values.view(), &record.src.words, &tgt_cols);
    let _ = writeln!(s, "\nalignment: {}", out.alignment.to_pharaoh(true));
    s
}

fn write_matrix(s: &mut String, values: ArrayView2<f64>, rows: &[String], cols: &[String]) {
    let width = rows.iter().map(|w| w.chars().count()).max().unwrap_or(0).max(4);
    let _ = write!(s, "{:width$}", "");
    for c in cols {
        let _ = write!(s, " {:>10}", truncate(c, 10));
    }
    s.push('\n');
    for (r, row) in values.rows().into_iter().enumerate() {
        let _ = write!(s, "{:width$}", truncate(rows.get(r).map_or("?", |w| w.as_str()), width));
        for v in row.iter() {
            let _ = write!(s, " {v:>10.6}");
        }
        s.push('\n');
    }
}

fn truncate(word: &str, max: usize) -> String {
    word.chars().take(max).collect()
}

/// Reverse-null cost row and the interior block, for callers that want to
/// reproduce the extension themselves.
pub fn null_row(plan_rev: &TransportPlan) -> ArrayView1<'_, f64> {
    let m = plan_rev.values.nrows() - 1;
    plan_rev.values.row(m)
}

/// Forward-null column of a forward plan.
pub fn null_column(plan_fwd: &TransportPlan) -> ArrayView1<'_, f64> {
    let n = plan_fwd.values.ncols() - 1;
    plan_fwd.values.column(n)
}
