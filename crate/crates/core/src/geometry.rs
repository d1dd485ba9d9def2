//! Cosine cost matrices and the geometry of the null word.
//!
//! The null word is placed at equal cosine distance from every word vector on
//! the opposite side. Writing the null vector as a combination of those word
//! vectors, `e = sum_k a_k v_k`, equidistance becomes the homogeneous system
//! `E a = 0` with `E[j-1][k] = v_k . (v_1/|v_1| - v_j/|v_j|)` for `j = 2..N`.
//! The kernel of `E` is read off an SVD; in general position it is
//! one-dimensional and gives the equidistant vector with the smallest common
//! distance `d_min`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Singular values below this fraction of the largest one count as zero.
pub const KERNEL_RELATIVE_THRESHOLD: f64 = 1e-10;
/// Null vectors shorter than this (relative to the longest input vector) are degenerate.
pub const DEGENERATE_NORM: f64 = 1e-10;

pub fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let cos = a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
    (1.0 - cos).clamp(0.0, 2.0)
}

/// `m x n` matrix of cosine distances between source and target word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    /// Wraps an existing matrix. Entries must be finite.
    pub fn from_values(values: Array2<f64>) -> Self {
        debug_assert!(values.iter().all(|x| x.is_finite()));
        CostMatrix(values)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn transposed(&self) -> CostMatrix {
        CostMatrix(self.0.t().to_owned())
    }

    pub fn median(&self) -> f64 {
        median(self.0.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.0.mean().unwrap_or(0.0)
    }
}

/// Pairwise cosine distances between the rows of `src` and the rows of `tgt`.
pub fn cost_matrix(src: ArrayView2<f64>, tgt: ArrayView2<f64>) -> CostMatrix {
    let src_norms: Vec<f64> = src.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let tgt_norms: Vec<f64> = tgt.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut values = Array2::zeros((src.nrows(), tgt.nrows()));
    for (i, s) in src.outer_iter().enumerate() {
        for (j, t) in tgt.outer_iter().enumerate() {
            let cos = s.dot(&t) / (src_norms[i] * tgt_norms[j]);
            values[[i, j]] = (1.0 - cos).clamp(0.0, 2.0);
        }
    }
    CostMatrix(values)
}

/// Median with the midpoint convention for even counts. Returns NaN on empty input.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquidistantVector {
    pub vector: Array1<f64>,
    pub d_min: f64,
    /// Number of singular values treated as zero (including the padding row).
    pub kernel_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no non-degenerate equidistant vector in the span of the inputs")]
pub struct Degenerate;

/// The `(N-1) x N` equidistance system for the rows of `vectors`.
pub fn equidistance_system(vectors: ArrayView2<f64>) -> DMatrix<f64> {
    let n = vectors.nrows();
    let first = unit(vectors.row(0));
    let mut e = DMatrix::zeros(n.saturating_sub(1), n);
    for j in 1..n {
        let diff = &first - &unit(vectors.row(j));
        for (k, v) in vectors.outer_iter().enumerate() {
            e[(j - 1, k)] = v.dot(&diff);
        }
    }
    e
}

/// Orthogonal projector onto the kernel of `e`, computed as `I - E^+ E`.
pub fn kernel_projector(e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = e.ncols();
    let svd = e.clone().svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let pinv = if largest == 0.0 {
        DMatrix::zeros(n, e.nrows())
    } else {
        svd.pseudo_inverse(KERNEL_RELATIVE_THRESHOLD * largest)
            .expect("SVD computed with both factors")
    };
    DMatrix::identity(n, n) - pinv * e
}

/// Right singular vectors spanning the numerical kernel of `e`, ordered by
/// ascending singular value.
pub fn kernel_basis(e: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = e.ncols();
    // Pad to square so the full set of right singular vectors is available.
    let mut square = DMatrix::zeros(n, n);
    square.view_mut((0, 0), (e.nrows(), n)).copy_from(e);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let threshold = KERNEL_RELATIVE_THRESHOLD * largest;
    let mut kernel: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(i, &s)| (s, i))
        .collect();
    kernel.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    kernel.into_iter().map(|(_, i)| v_t.row(i).transpose()).collect()
}

/// Equidistant vector in the span of `vectors` with the smallest common cosine distance.
pub fn equidistant_vector(vectors: ArrayView2<f64>) -> Result<EquidistantVector, Degenerate> {
    let n = vectors.nrows();
    if n == 0 {
        return Err(Degenerate);
    }
    if n == 1 {
        return Ok(EquidistantVector { vector: vectors.row(0).to_owned(), d_min: 0.0, kernel_dim: 1 });
    }
    let e = equidistance_system(vectors);
    let projector = kernel_projector(&e);
    let basis = kernel_basis(&e);
    let kernel_dim = basis.len();
    let scale = vectors.outer_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);

    // Smallest singular value first; later kernel directions are only tried
    // when the earlier ones collapse to the zero vector.
    for candidate in basis {
        let mut a = &projector * candidate;
        let a_norm = a.norm();
        if a_norm == 0.0 {
            continue;
        }
        a /= a_norm;
        let coeffs = Array1::from_iter(a.iter().copied());
        let mut null = vectors.t().dot(&coeffs);
        if null.dot(&null).sqrt() < DEGENERATE_NORM * scale {
            continue;
        }
        if null.dot(&vectors.row(0)) < 0.0 {
            null.mapv_inplace(|x| -x);
        }
        let d_min = cosine_distance(null.view(), vectors.row(0));
        return Ok(EquidistantVector { vector: null, d_min, kernel_dim });
    }
    Err(Degenerate)
}

fn unit(v: ArrayView1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v.mapv(|x| x / n)
}

/// How the typical source-target distance `c` is summarised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullDistance {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for NullDistance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median" => Ok(NullDistance::Median),
            "mean" => Ok(NullDistance::Mean),
            other => Err(format!("unknown null distance mode `{other}` (expected median or mean)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullGeometry {
    /// `None` when the equidistant construction was degenerate.
    pub null_vector: Option<Array1<f64>>,
    pub d_min: f64,
    /// Median (or mean, in ablation mode) of all pairwise costs.
    pub c_median: f64,
    pub d: f64,
    pub fallback_used: bool,
}

/// Null-word geometry against `opposite_side` (the vectors the null word must
/// be equidistant to), with `c` taken from every pairwise cost.
pub fn null_geometry(opposite_side: ArrayView2<f64>, costs: &CostMatrix, mode: NullDistance) -> NullGeometry {
    let c = match mode {
        NullDistance::Median => costs.median(),
        NullDistance::Mean => costs.mean(),
    };
    match equidistant_vector(opposite_side) {
        Ok(eq) => NullGeometry {
            d: eq.d_min.max(c),
            null_vector: Some(eq.vector),
            d_min: eq.d_min,
            c_median: c,
            fallback_used: false,
        },
        Err(Degenerate) => NullGeometry { null_vector: None, d_min: c, c_median: c, d: c, fallback_used: true },
    }
}

/// Which side receives the null word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Null target word appended as an extra column.
    Forward,
    /// Null source word appended as an extra row.
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCostMatrix {
    pub values: Array2<f64>,
    pub direction: Direction,
}

impl ExtendedCostMatrix {
    /// The cost block without the null row or column.
    pub fn interior(&self) -> CostMatrix {
        let (m, n) = self.values.dim();
        match self.direction {
            Direction::Reverse => CostMatrix(self.values.slice(ndarray::s![..m - 1, ..]).to_owned()),
            Direction::Forward => CostMatrix(self.values.slice(ndarray::s![.., ..n - 1]).to_owned()),
        }
    }

    /// Number of real source words.
    pub fn src_len(&self) -> usize {
        match self.direction {
            Direction::Reverse => self.values.nrows() - 1,
            Direction::Forward => self.values.nrows(),
        }
    }

    /// Number of real target words.
    pub fn tgt_len(&self) -> usize {
        match self.direction {
            Direction::Reverse => self.values.ncols(),
            Direction::Forward => self.values.ncols() - 1,
        }
    }
}

pub fn extend_cost(base: &CostMatrix, d: f64, direction: Direction) -> ExtendedCostMatrix {
    assert!(d.is_finite() && d >= 0.0, "null distance must be finite and non-negative, got {d}");
    let (m, n) = base.0.dim();
    let values = match direction {
        Direction::Reverse => {
            let mut out = Array2::from_elem((m + 1, n), d);
            out.slice_mut(ndarray::s![..m, ..]).assign(&base.0);
            out
        }
        Direction::Forward => {
            let mut out = Array2::from_elem((m, n + 1), d);
            out.slice_mut(ndarray::s![.., ..n]).assign(&base.0);
            out
        }
    };
    ExtendedCostMatrix { values, direction }
}

/// Largest deviation of `dist(null, v_j)` from `dist(null, v_1)` over the rows of `vectors`.
pub fn equidistance_error(null: ArrayView1<f64>, vectors: ArrayView2<f64>) -> f64 {
    let reference = cosine_distance(null, vectors.row(0));
    vectors
        .axis_iter(Axis(0))
        .map(|v| (cosine_distance(null, v) - reference).abs())
        .fold(0.0, f64::max)
}
