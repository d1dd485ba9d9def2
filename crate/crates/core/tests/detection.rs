mod common;

use ndarray::{s, Array2};
use rand::Rng;

use otto_align::align::{align_record, ottawa_align, AlignerChoice};
use otto_align::detection::{sentence_scores, DetectionScores, ScoreOptions};
use otto_align::SentencePairRecord;

fn scores(record: &SentencePairRecord, opts: ScoreOptions) -> DetectionScores {
    let out = align_record(record, &AlignerChoice::default()).unwrap();
    let d = out.ottawa.as_ref().unwrap();
    sentence_scores(&out.alignment, &d.plan_rev, &d.plan_fwd, opts).unwrap()
}

fn clean_pair(rng: &mut impl Rng, m: usize) -> (Array2<f64>, Array2<f64>) {
    let src = common::unit_rows(rng, m, 32);
    let tgt = common::noisy_copy(rng, &src, 0.05);
    (src, tgt)
}

/// Hallucination after replacing target rows, in a random order, with the
/// negated source rows: one curve of `m + 1` scores per base record.
fn corruption_curves(seed: u64, bases: usize, m: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = common::rng(seed);
    (0..bases)
        .map(|_| {
            let src = common::unit_rows(&mut rng, m, dim);
            let mut tgt = common::noisy_copy(&mut rng, &src, 0.05);
            let mut order: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let mut curve = vec![scores(&common::record("b", src.clone(), tgt.clone()), ScoreOptions::default()).hallucination];
            for &row in &order {
                tgt.row_mut(row).assign(&(-&src.row(row)));
                curve.push(scores(&common::record("b", src.clone(), tgt.clone()), ScoreOptions::default()).hallucination);
            }
            curve
        })
        .collect()
}

// A single record's curve is not monotone: an antipodal target and a source
// that lost its partner can become mutual best matches and re-align.
#[test]
fn antipodal_rows_raise_hallucination_above_clean() {
    for curve in corruption_curves(11, 50, 8, 32) {
        assert!(curve[1..].iter().all(|&h| h > curve[0]), "{curve:?}");
    }
}

#[test]
fn mean_hallucination_grows_with_antipodal_rows() {
    let curves = corruption_curves(12, 50, 8, 256);
    let mean: Vec<f64> = (0..=8).map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64).collect();
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}

#[test]
fn truncated_targets_score_as_omission() {
    let mut rng = common::rng(12);
    let mut below = 0;
    for _ in 0..100 {
        let m = rng.gen_range(4..16);
        let (src, tgt) = clean_pair(&mut rng, m);
        let keep = m.div_ceil(2);
        let s = scores(&common::record("t", src, tgt.slice(s![..keep, ..]).to_owned()), ScoreOptions::default());
        below += usize::from(s.omission > s.hallucination);
    }
    assert!(below >= 90, "{below}/100 truncated records have omission > hallucination");
}

#[test]
fn paper_literal_pairing_swaps_unaligned_ratios() {
    let mut rng = common::rng(13);
    let (src, tgt) = clean_pair(&mut rng, 8);
    let record = common::record("l", src, tgt.slice(s![..3, ..]).to_owned());
    let default = scores(&record, ScoreOptions::default());
    let literal = scores(&record, ScoreOptions { paper_literal_eq78: true });
    assert_eq!(literal.hallucination, default.r_src + default.c_rev);
    assert_eq!(literal.omission, default.r_tgt + default.c_fwd);
    assert_eq!(default.hallucination, default.r_tgt + default.c_rev);
}

#[test]
fn swapping_sides_swaps_directions() {
    let mut rng = common::rng(14);
    let choice = AlignerChoice::default();
    for _ in 0..40 {
        let (m, n) = (rng.gen_range(1..=10), rng.gen_range(1..=10));
        let record = common::record("w", common::gaussian(&mut rng, m, 12), common::gaussian(&mut rng, n, 12));
        let a = ottawa_align(&record, &choice).unwrap();
        let b = ottawa_align(&record.swapped(), &choice).unwrap();
        assert_eq!(a.alignment.gamma.t(), b.alignment.gamma);
        assert_eq!(a.alignment.gamma_fwd.t(), b.alignment.gamma_rev);
        assert_eq!(a.alignment.gamma_rev.t(), b.alignment.gamma_fwd);
        assert_eq!(a.alignment.null_assigned_src, b.alignment.null_assigned_tgt);
        assert_eq!(a.alignment.null_assigned_tgt, b.alignment.null_assigned_src);
        assert_eq!(a.plan_fwd.values.t(), b.plan_rev.values);
        assert_eq!(a.plan_rev.values.t(), b.plan_fwd.values);
    }
}

#[test]
fn identity_records_align_to_themselves() {
    let mut rng = common::rng(15);
    for m in 2..=30 {
        let v = common::gaussian(&mut rng, m, 32);
        let record = common::record("i", v.clone(), v);
        let out = align_record(&record, &AlignerChoice::default()).unwrap();
        assert_eq!(out.alignment.gamma, Array2::from_shape_fn((m, m), |(i, j)| i == j));
        let s = scores(&record, ScoreOptions::default());
        assert!(s.hallucination <= 0.05 && s.omission <= 0.05, "m = {m}: {s:?}");
    }
}

#[test]
fn single_word_identity_splits_with_null() {
    // With one word the null distance is max(d_min, median C) = max(0, 0) = 0,
    // so the null word ties the real one.
    let v = Array2::from_shape_vec((1, 3), vec![0.2, -0.4, 1.0]).unwrap();
    let record = common::record("one", v.clone(), v);
    let out = ottawa_align(&record, &AlignerChoice::default()).unwrap();
    assert_eq!(out.geometry_rev.d, 0.0);
    assert!((out.plan_rev.values[[1, 0]] - 0.5).abs() <= 1e-12);
    assert!(out.alignment.gamma[[0, 0]]);
}

#[test]
fn antipodal_target_row_goes_to_null() {
    let mut rng = common::rng(16);
    let (src, mut tgt) = clean_pair(&mut rng, 6);
    tgt.row_mut(2).assign(&(-&src.row(2)));
    let record = common::record("a", src, tgt);
    let out = ottawa_align(&record, &AlignerChoice::default()).unwrap();
    assert!(out.alignment.null_assigned_tgt[2]);
    assert!(out.alignment.gamma.column(2).iter().all(|&b| !b));
}
