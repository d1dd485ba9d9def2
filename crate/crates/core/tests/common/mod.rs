//! Shared generators and independent reference computations for the
//! integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use otto_align::embedding_io::{SentencePairRecord, WordEmbeddings};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn unit_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = gaussian(rng, rows, cols);
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    m
}

pub fn uniform_costs(rng: &mut impl Rng, rows: usize, cols: usize, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(0.0..hi))
}

pub fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

pub fn record(id: &str, src: Array2<f64>, tgt: Array2<f64>) -> SentencePairRecord {
    let src = WordEmbeddings { words: words("s", src.nrows()), vectors: src };
    let tgt = WordEmbeddings { words: words("t", tgt.nrows()), vectors: tgt };
    SentencePairRecord::new(id, src, tgt).expect("valid record")
}

/// Clean pair: each target word is its source word plus Gaussian noise.
pub fn noisy_copy(rng: &mut impl Rng, src: &Array2<f64>, sigma: f64) -> Array2<f64> {
    src + &(gaussian(rng, src.nrows(), src.ncols()) * sigma)
}

/// Indices of a uniformly random subset of size `k` of `0..n`, sorted.
pub fn subset(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

pub struct SyntheticTriple {
    pub clean: SentencePairRecord,
    pub hallucinated: SentencePairRecord,
    pub truncated: SentencePairRecord,
}

/// One clean pair and its two corruptions: half the target rows replaced by
/// the negated source vectors, and half the target rows dropped.
pub fn synthetic_triple(rng: &mut impl Rng, id: usize, dim: usize, sigma: f64) -> SyntheticTriple {
    let m = rng.gen_range(6..16);
    let src = unit_rows(rng, m, dim);
    let tgt = noisy_copy(rng, &src, sigma);
    let k = m / 2;

    let mut hallucinated = tgt.clone();
    for i in subset(rng, m, k) {
        hallucinated.row_mut(i).assign(&(-&src.row(i)));
    }
    let kept = subset(rng, m, m - k);
    let truncated = tgt.select(Axis(0), &kept);

    SyntheticTriple {
        clean: record(&format!("clean-{id}"), src.clone(), tgt),
        hallucinated: record(&format!("hall-{id}"), src.clone(), hallucinated),
        truncated: record(&format!("omit-{id}"), src, truncated),
    }
}

pub fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    1.0 - a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

/// Orthonormal basis of the row span, by modified Gram-Schmidt.
pub fn orthonormal_basis(rows: &[Array1<f64>]) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let scale = rows.iter().map(|r| r.dot(r).sqrt()).fold(0.0, f64::max).max(1.0);
    for r in rows {
        let mut v = r.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.scaled_add(-c, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 * scale {
            basis.push(v / norm);
        }
    }
    basis
}

fn normalized(v: ArrayView1<f64>) -> Array1<f64> {
    &v / v.dot(&v).sqrt()
}

/// Basis of `span{u_1 - u_j}` for the unit rows `u_j`; its orthogonal
/// complement is the set of directions equidistant to every row.
pub fn difference_basis(vectors: ArrayView2<f64>) -> Vec<Array1<f64>> {
    let u1 = normalized(vectors.row(0));
    let diffs: Vec<Array1<f64>> = vectors.rows().into_iter().skip(1).map(|v| &u1 - &normalized(v)).collect();
    orthonormal_basis(&diffs)
}

pub fn project_out(x: &Array1<f64>, basis: &[Array1<f64>]) -> Array1<f64> {
    let mut out = x.clone();
    for q in basis {
        let c = q.dot(&out);
        out.scaled_add(-c, q);
    }
    out
}

/// Smallest common cosine distance over all equidistant directions:
/// `1 - |P u_1|`, with `P` the projector onto the equidistant subspace.
pub fn closed_form_d_min(vectors: ArrayView2<f64>) -> f64 {
    let u1 = normalized(vectors.row(0));
    let p = project_out(&u1, &difference_basis(vectors));
    1.0 - p.dot(&p).sqrt()
}

/// Smallest common distance found among `samples` random equidistant
/// directions near `center` (both signs), and the largest equidistance
/// violation among them.
pub fn minimality_search(
    rng: &mut impl Rng,
    vectors: ArrayView2<f64>,
    center: ArrayView1<f64>,
    samples: usize,
) -> (f64, f64) {
    let basis = difference_basis(vectors);
    let dim = vectors.ncols();
    let center = center.to_owned();
    let center_norm = center.dot(&center).sqrt();
    let mut best = f64::INFINITY;
    let mut worst_violation: f64 = 0.0;
    for s in 0..samples {
        let z: Array1<f64> = Array1::from_shape_simple_fn(dim, || rng.sample(StandardNormal));
        // Mix global directions with local moves of decreasing size around the center.
        let scale = [1e3, 1.0, 0.1, 1e-2, 1e-3][s % 5];
        let x = project_out(&(&center + &(z * (scale * center_norm))), &basis);
        if x.dot(&x).sqrt() < 1e-12 {
            continue;
        }
        for cand in [x.clone(), -x] {
            let ds: Vec<f64> = vectors.rows().into_iter().map(|v| cosine_distance(cand.view(), v)).collect();
            let spread = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ds.iter().copied().fold(f64::INFINITY, f64::min);
            worst_violation = worst_violation.max(spread);
            best = best.min(ds[0]);
        }
    }
    (best, worst_violation)
}

/// Minimum assignment cost by trying every injective map from the shorter side.
pub fn brute_force_assignment(costs: ArrayView2<f64>) -> (f64, Vec<(usize, usize)>) {
    let (m, n) = costs.dim();
    let transposed = m > n;
    let c = if transposed { costs.reversed_axes() } else { costs };
    let mut used = vec![false; c.ncols()];
    let mut current = Vec::with_capacity(c.nrows());
    fn rec(
        c: ArrayView2<f64>,
        row: usize,
        acc: f64,
        used: &mut [bool],
        current: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if row == c.nrows() {
            if acc < best.0 {
                *best = (acc, current.clone());
            }
            return;
        }
        for j in 0..c.ncols() {
            if !used[j] {
                used[j] = true;
                current.push(j);
                rec(c, row + 1, acc + c[[row, j]], used, current, best);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    rec(c, 0, 0.0, &mut used, &mut current, &mut best);
    let mut links: Vec<(usize, usize)> =
        best.1.iter().enumerate().map(|(r, &col)| if transposed { (col, r) } else { (r, col) }).collect();
    links.sort_unstable();
    (best.0, links)
}

/// One-side-constrained LP optimum for a `(m+1) x n` cost with the null row
/// last, by scaling to integers and solving the resulting assignment:
/// every column becomes `m` unit supplies, every real row `n` unit slots and
/// the null row `m*n` slots.
pub fn one_side_by_assignment(costs: ArrayView2<f64>) -> f64 {
    let (rows, n) = costs.dim();
    let m = rows - 1;
    let supplies = m * n;
    let slots = m * n + m * n;
    let mut expanded = Array2::<f64>::zeros((supplies, slots));
    for s in 0..supplies {
        let j = s / m;
        for t in 0..slots {
            let i = if t < m * n { t / n } else { m };
            expanded[[s, t]] = costs[[i, j]];
        }
    }
    let gamma = otto_align::ot::solve_assignment(expanded.view());
    otto_align::ot::assignment_cost(expanded.view(), &gamma) / (m * n) as f64
}
