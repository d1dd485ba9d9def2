//! Exact reference solutions for small transport problems.
//!
//! Used to check the entropic solvers. Nothing here is tuned for speed:
//! assignments enumerate every maximum matching, small balanced problems
//! enumerate the vertices of the transportation polytope (spanning-tree
//! bases), and the remaining linear programs go through a dense two-phase
//! simplex with Bland's rule written directly against the inequality form.

use ndarray::{Array1, Array2, ArrayView2};

use super::Marginals;

/// Largest supported side length, counting an appended null row or column.
pub const MAX_ORACLE_DIM: usize = 7;
/// Balanced problems with at most this many cells use vertex enumeration.
pub const MAX_VERTEX_ENUMERATION_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("{rows}x{cols} exceeds the oracle limit of {MAX_ORACLE_DIM}")]
    TooLarge { rows: usize, cols: usize },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("marginals do not match a {rows}x{cols} cost matrix")]
    Shape { rows: usize, cols: usize },
}

#[derive(Debug, Clone)]
pub enum OracleProblem {
    /// Binary one-to-one matching of `min(m, n)` pairs.
    Assignment,
    /// Row sums `= mu`, column sums `= nu`.
    Balanced(Marginals),
    /// Row sums `<= mu`, column sums `<= nu`, total mass fixed.
    Partial { marginals: Marginals, mass: f64 },
    /// Cost matrix is `(m+1) x n` with the null word last. Columns ship
    /// exactly `1/n`, real rows take at most `1/m`, the null row at most 1.
    OneSide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub plan: Array2<f64>,
    pub objective: f64,
}

pub fn lp_oracle(costs: ArrayView2<f64>, problem: &OracleProblem) -> Result<OracleSolution, OracleError> {
    let (m, n) = costs.dim();
    if m > MAX_ORACLE_DIM || n > MAX_ORACLE_DIM {
        return Err(OracleError::TooLarge { rows: m, cols: n });
    }
    match problem {
        OracleProblem::Assignment => Ok(enumerate_assignments(costs)),
        OracleProblem::Balanced(marg) => {
            check_shape(costs, marg)?;
            if m * n <= MAX_VERTEX_ENUMERATION_CELLS {
                enumerate_vertices(costs, marg)
            } else {
                balanced_lp(costs, marg)
            }
        }
        OracleProblem::Partial { marginals, mass } => {
            check_shape(costs, marginals)?;
            let mut lp = DenseLp::new(costs);
            for i in 0..m {
                lp.constrain(row_cells(i, n), Relation::Le, marginals.mu[i]);
            }
            for j in 0..n {
                lp.constrain(col_cells(j, m, n), Relation::Le, marginals.nu[j]);
            }
            lp.constrain((0..m * n).collect(), Relation::Eq, *mass);
            lp.solve(m, n)
        }
        OracleProblem::OneSide => {
            if m < 2 {
                return Err(OracleError::Shape { rows: m, cols: n });
            }
            let real = m - 1;
            let mut lp = DenseLp::new(costs);
            for i in 0..m {
                let cap = if i < real { 1.0 / real as f64 } else { 1.0 };
                lp.constrain(row_cells(i, n), Relation::Le, cap);
            }
            for j in 0..n {
                lp.constrain(col_cells(j, m, n), Relation::Eq, 1.0 / n as f64);
            }
            lp.solve(m, n)
        }
    }
}

/// Balanced problem through the simplex, bypassing vertex enumeration.
pub fn balanced_lp(costs: ArrayView2<f64>, marg: &Marginals) -> Result<OracleSolution, OracleError> {
    check_shape(costs, marg)?;
    let (m, n) = costs.dim();
    let mut lp = DenseLp::new(costs);
    for i in 0..m {
        lp.constrain(row_cells(i, n), Relation::Eq, marg.mu[i]);
    }
    for j in 0..n {
        lp.constrain(col_cells(j, m, n), Relation::Eq, marg.nu[j]);
    }
    lp.solve(m, n)
}

fn check_shape(costs: ArrayView2<f64>, marg: &Marginals) -> Result<(), OracleError> {
    let (m, n) = costs.dim();
    if marg.mu.len() != m || marg.nu.len() != n {
        return Err(OracleError::Shape { rows: m, cols: n });
    }
    Ok(())
}

fn row_cells(i: usize, n: usize) -> Vec<usize> {
    (0..n).map(|j| i * n + j).collect()
}

fn col_cells(j: usize, m: usize, n: usize) -> Vec<usize> {
    (0..m).map(|i| i * n + j).collect()
}

fn enumerate_assignments(costs: ArrayView2<f64>) -> OracleSolution {
    let (m, n) = costs.dim();
    let target = m.min(n);
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut used = vec![false; n];
    let mut current = Vec::with_capacity(target);

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        i: usize,
        costs: ArrayView2<f64>,
        target: usize,
        used: &mut [bool],
        current: &mut Vec<(usize, usize)>,
        acc: f64,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        let (m, n) = costs.dim();
        if current.len() == target {
            let better = match best {
                None => true,
                Some((b, pairs)) => acc < *b - 1e-12 || ((acc - *b).abs() <= 1e-12 && *current < *pairs),
            };
            if better {
                *best = Some((acc, current.clone()));
            }
            return;
        }
        if m - i < target - current.len() {
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                current.push((i, j));
                recurse(i + 1, costs, target, used, current, acc + costs[[i, j]], best);
                current.pop();
                used[j] = false;
            }
        }
        recurse(i + 1, costs, target, used, current, acc, best);
    }

    recurse(0, costs, target, &mut used, &mut current, 0.0, &mut best);
    let (objective, pairs) = best.unwrap_or((0.0, Vec::new()));
    let mut plan = Array2::zeros((m, n));
    for (i, j) in pairs {
        plan[[i, j]] = 1.0;
    }
    OracleSolution { plan, objective }
}

/// Minimum over all basic feasible solutions of the transportation polytope.
///
/// Every basis is a spanning tree of the complete bipartite graph on rows and
/// columns with `m + n - 1` edges; its flows follow by peeling leaves.
fn enumerate_vertices(costs: ArrayView2<f64>, marg: &Marginals) -> Result<OracleSolution, OracleError> {
    let (m, n) = costs.dim();
    let cells = m * n;
    let k = m + n - 1;
    let mut best: Option<OracleSolution> = None;
    let mut combo: Vec<usize> = (0..k).collect();

    loop {
        if let Some(flows) = tree_flows(&combo, m, n, marg) {
            let objective: f64 = combo.iter().zip(&flows).map(|(&c, f)| costs[[c / n, c % n]] * f).sum();
            if best.as_ref().is_none_or(|b| objective < b.objective) {
                let mut plan = Array2::zeros((m, n));
                for (&c, &f) in combo.iter().zip(&flows) {
                    plan[[c / n, c % n]] = f.max(0.0);
                }
                best = Some(OracleSolution { plan, objective });
            }
        }
        // Next k-combination of `cells` in lexicographic order.
        let mut pos = k;
        loop {
            if pos == 0 {
                return best.ok_or(OracleError::Infeasible);
            }
            pos -= 1;
            if combo[pos] < cells - k + pos {
                break;
            }
        }
        combo[pos] += 1;
        for q in pos + 1..k {
            combo[q] = combo[q - 1] + 1;
        }
    }
}

/// Flows on a candidate basis, or `None` if it is not a spanning tree or is infeasible.
fn tree_flows(basis: &[usize], m: usize, n: usize, marg: &Marginals) -> Option<Vec<f64>> {
    let nodes = m + n;
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &c in basis {
        let (a, b) = (find(&mut parent, c / n), find(&mut parent, m + c % n));
        if a == b {
            return None;
        }
        parent[a] = b;
    }

    let mut remaining: Vec<f64> = marg.mu.iter().chain(marg.nu.iter()).copied().collect();
    let mut degree = vec![0usize; nodes];
    for &c in basis {
        degree[c / n] += 1;
        degree[m + c % n] += 1;
    }
    let mut flows = vec![f64::NAN; basis.len()];
    let mut done = vec![false; basis.len()];
    for _ in 0..basis.len() {
        let (e, leaf) = basis.iter().enumerate().filter(|(e, _)| !done[*e]).find_map(|(e, &c)| {
            let (r, col) = (c / n, m + c % n);
            if degree[r] == 1 {
                Some((e, r))
            } else if degree[col] == 1 {
                Some((e, col))
            } else {
                None
            }
        })?;
        let c = basis[e];
        let (r, col) = (c / n, m + c % n);
        let other = if leaf == r { col } else { r };
        let f = remaining[leaf];
        if f < -1e-12 {
            return None;
        }
        flows[e] = f;
        done[e] = true;
        remaining[leaf] = 0.0;
        remaining[other] -= f;
        degree[r] -= 1;
        degree[col] -= 1;
    }
    Some(flows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Relation {
    Le,
    Eq,
}

/// `min c.x` subject to sparse-ish 0/1 constraints over the plan cells.
struct DenseLp {
    cost: Vec<f64>,
    constraints: Vec<(Vec<usize>, Relation, f64)>,
}

const PIVOT_EPS: f64 = 1e-12;

impl DenseLp {
    fn new(costs: ArrayView2<f64>) -> Self {
        DenseLp { cost: costs.iter().copied().collect(), constraints: Vec::new() }
    }

    fn constrain(&mut self, cells: Vec<usize>, rel: Relation, rhs: f64) {
        debug_assert!(rhs >= 0.0);
        self.constraints.push((cells, rel, rhs));
    }

    fn solve(&self, m: usize, n: usize) -> Result<OracleSolution, OracleError> {
        let x = self.simplex()?;
        let objective = x.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
        let plan = Array2::from_shape_vec((m, n), x.iter().map(|v| v.max(0.0)).collect())
            .expect("one variable per cell");
        Ok(OracleSolution { plan, objective })
    }

    fn simplex(&self) -> Result<Array1<f64>, OracleError> {
        let nx = self.cost.len();
        let rows = self.constraints.len();
        let slacks = self.constraints.iter().filter(|c| c.1 == Relation::Le).count();
        let artificials = rows - slacks;
        let total = nx + slacks + artificials;
        let rhs_col = total;
        let first_artificial = nx + slacks;

        let mut t = Array2::<f64>::zeros((rows, total + 1));
        let mut basis = vec![0usize; rows];
        let (mut next_slack, mut next_art) = (nx, first_artificial);
        for (r, (cells, rel, rhs)) in self.constraints.iter().enumerate() {
            for &c in cells {
                t[[r, c]] = 1.0;
            }
            t[[r, rhs_col]] = *rhs;
            match rel {
                Relation::Le => {
                    t[[r, next_slack]] = 1.0;
                    basis[r] = next_slack;
                    next_slack += 1;
                }
                Relation::Eq => {
                    t[[r, next_art]] = 1.0;
                    basis[r] = next_art;
                    next_art += 1;
                }
            }
        }

        // Phase 1: drive the artificial variables to zero.
        let mut phase1 = vec![0.0; total];
        for c in phase1.iter_mut().skip(first_artificial) {
            *c = 1.0;
        }
        run_phase(&mut t, &mut basis, &phase1, total)?;
        let infeasibility: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= first_artificial)
            .map(|(r, _)| t[[r, rhs_col]])
            .sum();
        if infeasibility > 1e-9 {
            return Err(OracleError::Infeasible);
        }
        // Pivot basic artificials out where possible; rows where that fails are redundant.
        for r in 0..rows {
            if basis[r] >= first_artificial {
                if let Some(c) = (0..first_artificial).find(|&c| t[[r, c]].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, r, c);
                }
            }
        }

        // Phase 2 on the real objective, artificials barred from entering.
        let mut phase2 = vec![0.0; total];
        phase2[..nx].copy_from_slice(&self.cost);
        run_phase(&mut t, &mut basis, &phase2, first_artificial)?;

        let mut x = Array1::zeros(nx);
        for (r, &b) in basis.iter().enumerate() {
            if b < nx {
                x[b] = t[[r, rhs_col]];
            }
        }
        Ok(x)
    }
}

/// Bland's-rule simplex iterations; only columns `< allowed` may enter.
fn run_phase(t: &mut Array2<f64>, basis: &mut [usize], cost: &[f64], allowed: usize) -> Result<(), OracleError> {
    let rows = t.nrows();
    let rhs_col = t.ncols() - 1;
    loop {
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - (0..rows).map(|r| cost[basis[r]] * t[[r, j]]).sum::<f64>();
            reduced < -PIVOT_EPS
        });
        let Some(j) = entering else { return Ok(()) };

        let mut leaving: Option<(usize, f64)> = None;
        for r in 0..rows {
            let a = t[[r, j]];
            if a > PIVOT_EPS {
                let ratio = t[[r, rhs_col]] / a;
                let better = match leaving {
                    None => true,
                    Some((lr, best)) => ratio < best - PIVOT_EPS || (ratio <= best + PIVOT_EPS && basis[r] < basis[lr]),
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
        }
        let Some((r, _)) = leaving else { return Err(OracleError::Unbounded) };
        pivot(t, basis, r, j);
    }
}

fn pivot(t: &mut Array2<f64>, basis: &mut [usize], r: usize, c: usize) {
    let p = t[[r, c]];
    t.row_mut(r).mapv_inplace(|x| x / p);
    let pivot_row = t.row(r).to_owned();
    for k in 0..t.nrows() {
        if k != r {
            let factor = t[[k, c]];
            if factor != 0.0 {
                t.row_mut(k).scaled_add(-factor, &pivot_row);
            }
        }
    }
    basis[r] = c;
}
