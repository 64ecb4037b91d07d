use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskfield::evaluation::{
    coverage, percentile, rmise, rmise_from_moments, roc_curve, scenario_summary, Intervals, RScale, RocThresholds,
};

pub fn one_cell_plug_in() {
    let (r, d): (f64, f64) = (0.02, 0.005);
    let risk = vec![vec![(r + d).ln()]; 100];
    assert!((rmise(&[r], &risk, &[1.0], RScale::Risk).unwrap() - d).abs() < 1e-15);
    let log = vec![vec![r.ln() + 0.3]; 100];
    assert!((rmise(&[r], &log, &[1.0], RScale::Log).unwrap() - 0.3).abs() < 1e-12);
}

pub fn two_cells_match_enumeration() {
    let truth = [0.02, 0.05];
    let w = [2.0, 0.5];
    let c1 = [(0.01f64, 0.3), (0.03, 0.7)];
    let c2 = [(0.04f64, 0.5), (0.07, 0.5)];
    for scale in [RScale::Log, RScale::Risk] {
        let f = |l: f64| if scale == RScale::Log { l.ln() } else { l };
        let mut expected = 0.0;
        let mut samples = Vec::new();
        for &(a, pa) in &c1 {
            for &(b, pb) in &c2 {
                let p: f64 = pa * pb;
                expected += p * (w[0] * (f(a) - f(truth[0])).powi(2) + w[1] * (f(b) - f(truth[1])).powi(2));
                for _ in 0..(p * 100.0).round() as usize {
                    samples.push(vec![a.ln(), b.ln()]);
                }
            }
        }
        assert_eq!(samples.len(), 100);
        let got = rmise(&truth, &samples, &w, scale).unwrap();
        assert!((got - expected.sqrt()).abs() < 1e-12, "{got} vs {}", expected.sqrt());
    }
}

fn random_case(rng: &mut ChaCha8Rng, g: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let truth: Vec<f64> = (0..g).map(|_| rng.random_range(0.001..0.01)).collect();
    let samples: Vec<Vec<f64>> = (0..150)
        .map(|_| truth.iter().map(|t| t.ln() + rng.random_range(-0.5..0.5)).collect())
        .collect();
    let w: Vec<f64> = (0..g).map(|_| rng.random_range(0.5..2.0)).collect();
    (truth, samples, w)
}

pub fn rmise_relabel_invariant_and_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (truth, samples, w) = random_case(&mut rng, 12);
    let base = rmise(&truth, &samples, &vec![1.0; 12], RScale::Log).unwrap();
    let perm: Vec<usize> = (0..12).rev().collect();
    let t2: Vec<f64> = perm.iter().map(|&i| truth[i]).collect();
    let s2: Vec<Vec<f64>> = samples.iter().map(|s| perm.iter().map(|&i| s[i]).collect()).collect();
    assert!((rmise(&t2, &s2, &vec![1.0; 12], RScale::Log).unwrap() - base).abs() < 1e-12);

    // union of two disjoint cell sets
    for scale in [RScale::Log, RScale::Risk] {
        let all = rmise(&truth, &samples, &w, scale).unwrap();
        let part = |r: std::ops::Range<usize>| {
            let s: Vec<Vec<f64>> = samples.iter().map(|x| x[r.clone()].to_vec()).collect();
            rmise(&truth[r.clone()], &s, &w[r], scale).unwrap()
        };
        let (a, b) = (part(0..5), part(5..12));
        assert!((all * all - (a * a + b * b)).abs() < 1e-12 * (1.0 + all * all));
    }
}

pub fn moments_agree_with_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (truth, samples, w) = random_case(&mut rng, 7);
    let n = samples.len() as f64;
    for scale in [RScale::Log, RScale::Risk] {
        let f = |e: f64| if scale == RScale::Log { e } else { e.exp() };
        let m1: Vec<f64> = (0..7).map(|g| samples.iter().map(|s| f(s[g])).sum::<f64>() / n).collect();
        let m2: Vec<f64> = (0..7).map(|g| samples.iter().map(|s| f(s[g]).powi(2)).sum::<f64>() / n).collect();
        let a = rmise(&truth, &samples, &w, scale).unwrap();
        let b = rmise_from_moments(&truth, &m1, &m2, &w, scale).unwrap();
        assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
    }
}

pub fn coverage_counts() {
    let truth = [1.0, 2.0];
    let all = Intervals { lo: vec![0.0, 0.0], hi: vec![5.0, 5.0] };
    let none = Intervals { lo: vec![3.0, 3.0], hi: vec![5.0, 5.0] };
    let c = coverage(&truth, &[all.clone(), all.clone()]).unwrap();
    assert_eq!(c.per_cell, vec![1.0, 1.0]);
    assert_eq!(c.per_replicate, vec![1.0, 1.0]);
    let c = coverage(&truth, &[none.clone()]).unwrap();
    assert_eq!(c.per_cell, vec![0.0, 0.0]);
    assert_eq!(c.per_replicate, vec![0.0]);
    let c = coverage(&truth, &[all, none]).unwrap();
    assert_eq!(c.per_cell, vec![0.5, 0.5]);
    assert_eq!(c.per_replicate, vec![1.0, 0.0]);
    // interval endpoints count as covered
    let edge = Intervals { lo: vec![1.0, 0.0], hi: vec![1.0, 2.0] };
    assert_eq!(coverage(&truth, &[edge]).unwrap().per_replicate, vec![1.0]);
}

pub fn perfect_classifier_has_unit_auc() {
    let truth = [true, false, true, false, false];
    let scores: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let q: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    let roc = roc_curve(&truth, &scores, &[1.0; 5], RocThresholds::Grid(&q)).unwrap();
    assert!(roc.sensitivity.iter().all(|&s| s == 1.0));
    assert!(roc.specificity.iter().all(|&s| s == 1.0));
    assert_eq!(roc.auc, 1.0);
}

pub fn constant_scores_give_chance() {
    let truth = [true, false, true, false, false, true];
    let q: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    let roc = roc_curve(&truth, &[0.37; 6], &[1.0; 6], RocThresholds::Grid(&q)).unwrap();
    assert!((roc.auc - 0.5).abs() < 1e-12);
}

pub fn four_cell_hand_computation() {
    let truth = [true, true, false, false];
    let scores = [0.9, 0.4, 0.6, 0.1];
    let q = [0.0, 0.3, 0.5, 0.7, 0.95];
    let roc = roc_curve(&truth, &scores, &[1.0; 4], RocThresholds::Grid(&q)).unwrap();
    assert_eq!(roc.sensitivity, vec![1.0, 1.0, 0.5, 0.5, 0.0]);
    assert_eq!(roc.specificity, vec![0.0, 0.5, 0.5, 1.0, 1.0]);
    assert!((roc.auc - 0.75).abs() < 1e-15);

    let pop = [10.0, 30.0, 20.0, 40.0];
    let roc = roc_curve(&truth, &scores, &pop, RocThresholds::Grid(&q)).unwrap();
    assert_eq!(roc.sensitivity, vec![1.0, 1.0, 0.25, 0.25, 0.0]);
    let sp: Vec<f64> = vec![0.0, 2.0 / 3.0, 2.0 / 3.0, 1.0, 1.0];
    for (a, b) in roc.specificity.iter().zip(&sp) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!((roc.auc - 0.75).abs() < 1e-12);
}

pub fn empty_truth_set_is_error() {
    assert!(roc_curve(&[false, false], &[0.2, 0.9], &[1.0, 1.0], RocThresholds::Empirical).is_err());
    assert!(roc_curve(&[true, true], &[0.2, 0.9], &[1.0, 1.0], RocThresholds::Empirical).is_err());
}

fn mann_whitney(truth: &[bool], s: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti && !tj {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

pub fn auc_invariant_under_monotone_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(5..60);
        let mut truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        truth[0] = true;
        truth[1] = false;
        // rounding creates ties
        let s: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0).collect();
        let w = vec![1.0; n];
        let base = roc_curve(&truth, &s, &w, RocThresholds::Empirical).unwrap().auc;
        assert!((base - mann_whitney(&truth, &s)).abs() < 1e-12);
        for f in [|x: f64| (3.0 * x).exp(), |x: f64| x * x * x + x - 7.0, |x: f64| (x + 1.0).ln()] {
            let t: Vec<f64> = s.iter().map(|&x| f(x)).collect();
            let auc = roc_curve(&truth, &t, &w, RocThresholds::Empirical).unwrap().auc;
            assert!((auc - base).abs() < 1e-12);
        }
    }
}

pub fn sensitivity_and_specificity_monotone_in_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
    for _ in 0..50 {
        let truth: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let s: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let w: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..100.0)).collect();
        let roc = roc_curve(&truth, &s, &w, RocThresholds::Grid(&q)).unwrap();
        for k in 1..q.len() {
            assert!(roc.sensitivity[k] <= roc.sensitivity[k - 1]);
            assert!(roc.specificity[k] >= roc.specificity[k - 1]);
        }
        assert!((0.0..=1.0).contains(&roc.auc));
    }
}

pub fn summary_examples() {
    let s = scenario_summary(&[4.2; 7]).unwrap();
    assert_eq!((s.median, s.p2_5, s.p97_5), (4.2, 4.2, 4.2));
    let s = scenario_summary(&[3.0, 1.0, 2.0]).unwrap();
    assert_eq!(s.median, 2.0);
    let s = scenario_summary(&[5.0]).unwrap();
    assert_eq!((s.median, s.p2_5, s.p97_5), (5.0, 5.0, 5.0));
    assert!(scenario_summary(&[]).is_none());
}

pub fn percentile_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(1..50);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        v.sort_by(f64::total_cmp);
        for p in [0.0, 0.025, 0.1, 0.5, 0.9, 0.975, 1.0] {
            // piecewise-linear through (k / (n - 1), x_(k))
            let oracle = if n == 1 {
                v[0]
            } else {
                let k = (0..n - 1)
                    .find(|&k| p <= (k + 1) as f64 / (n - 1) as f64)
                    .unwrap();
                let (p0, p1) = (k as f64 / (n - 1) as f64, (k + 1) as f64 / (n - 1) as f64);
                v[k] + (p - p0) / (p1 - p0) * (v[k + 1] - v[k])
            };
            assert!((percentile(&v, p) - oracle).abs() < 1e-12);
        }
    }
}

/// Every metric example, by name.
pub const SUITE: &[(&str, fn())] = &[
    ("one_cell_plug_in", one_cell_plug_in),
    ("two_cells_match_enumeration", two_cells_match_enumeration),
    ("rmise_relabel_invariant_and_additive", rmise_relabel_invariant_and_additive),
    ("moments_agree_with_samples", moments_agree_with_samples),
    ("coverage_counts", coverage_counts),
    ("perfect_classifier_has_unit_auc", perfect_classifier_has_unit_auc),
    ("constant_scores_give_chance", constant_scores_give_chance),
    ("four_cell_hand_computation", four_cell_hand_computation),
    ("empty_truth_set_is_error", empty_truth_set_is_error),
    ("auc_invariant_under_monotone_transforms", auc_invariant_under_monotone_transforms),
    ("sensitivity_and_specificity_monotone_in_q", sensitivity_and_specificity_monotone_in_q),
    ("summary_examples", summary_examples),
    ("percentile_matches_sort_oracle", percentile_matches_sort_oracle),
];
