//! Rectangular linear assignment.
//!
//! The cost matrix is padded to square with zero-cost dummy rows or columns
//! and solved with the potential-based Hungarian method. Among all optimal
//! assignments the one whose sorted `(i, j)` pair sequence is lexicographically
//! smallest is returned: rows are fixed in order, each to the smallest column
//! that still admits an optimal completion. Only zero-reduced-cost columns
//! under the first solve's duals can appear in any optimum, so a row with a
//! single such column needs no re-solve.

use ndarray::{Array2, ArrayView2};

struct Solution {
    value: f64,
    /// Column assigned to each row.
    row_to_col: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Hungarian method on a square matrix given as a closure over `(row, col)`.
fn hungarian(n: usize, cost: impl Fn(usize, usize) -> f64) -> Solution {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let value = (0..n).map(|i| cost(i, row_to_col[i])).sum();
    Solution { value, row_to_col, u: u[1..].to_vec(), v: v[1..].to_vec() }
}

/// Minimum-cost one-to-one alignment of `min(m, n)` pairs.
pub fn solve_assignment(costs: ArrayView2<f64>) -> Array2<bool> {
    let (m, n) = costs.dim();
    let mut gamma = Array2::from_elem((m, n), false);
    if m == 0 || n == 0 {
        return gamma;
    }
    let size = m.max(n);
    let padded = |i: usize, j: usize| if i < m && j < n { costs[[i, j]] } else { 0.0 };
    let full = hungarian(size, padded);

    let scale = 1.0 + costs.iter().fold(0.0f64, |acc, c| acc.max(c.abs())) * size as f64;
    let tol = 1e-9 * scale;
    let reduced = |i: usize, j: usize| padded(i, j) - full.u[i] - full.v[j];

    let mut used = vec![false; size];
    let mut fixed_cost = 0.0;
    for i in 0..m {
        // Real columns in ascending order, then one representative dummy column.
        let mut candidates: Vec<usize> = (0..n).filter(|&j| !used[j] && reduced(i, j) <= tol).collect();
        if let Some(dummy) = (n..size).find(|&j| !used[j] && reduced(i, j) <= tol) {
            candidates.push(dummy);
        }
        let chosen = if candidates.len() == 1 {
            candidates[0]
        } else {
            let rest_rows: Vec<usize> = (i + 1..size).collect();
            candidates
                .iter()
                .copied()
                .find(|&j| {
                    let rest_cols: Vec<usize> = (0..size).filter(|&c| !used[c] && c != j).collect();
                    let sub = hungarian(rest_rows.len(), |a, b| padded(rest_rows[a], rest_cols[b]));
                    (fixed_cost + padded(i, j) + sub.value - full.value).abs() <= tol
                })
                .unwrap_or(full.row_to_col[i])
        };
        used[chosen] = true;
        fixed_cost += padded(i, chosen);
        if chosen < n {
            gamma[[i, chosen]] = true;
        }
    }
    gamma
}

/// `sum C * Gamma` for a binary alignment.
pub fn assignment_cost(costs: ArrayView2<f64>, gamma: &Array2<bool>) -> f64 {
    costs.iter().zip(gamma.iter()).filter(|(_, &g)| g).map(|(c, _)| c).sum()
}
