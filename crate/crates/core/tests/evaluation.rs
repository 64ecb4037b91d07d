mod common;

use common::metrics;

#[test]
fn one_cell_plug_in() {
    metrics::one_cell_plug_in();
}

#[test]
fn two_cells_match_enumeration() {
    metrics::two_cells_match_enumeration();
}

#[test]
fn rmise_relabel_invariant_and_additive() {
    metrics::rmise_relabel_invariant_and_additive();
}

#[test]
fn moments_agree_with_samples() {
    metrics::moments_agree_with_samples();
}

#[test]
fn coverage_counts() {
    metrics::coverage_counts();
}

#[test]
fn perfect_classifier_has_unit_auc() {
    metrics::perfect_classifier_has_unit_auc();
}

#[test]
fn constant_scores_give_chance() {
    metrics::constant_scores_give_chance();
}

#[test]
fn four_cell_hand_computation() {
    metrics::four_cell_hand_computation();
}

#[test]
fn empty_truth_set_is_error() {
    metrics::empty_truth_set_is_error();
}

#[test]
fn auc_invariant_under_monotone_transforms() {
    metrics::auc_invariant_under_monotone_transforms();
}

#[test]
fn sensitivity_and_specificity_monotone_in_q() {
    metrics::sensitivity_and_specificity_monotone_in_q();
}

#[test]
fn summary_examples() {
    metrics::summary_examples();
}

#[test]
fn percentile_matches_sort_oracle() {
    metrics::percentile_matches_sort_oracle();
}
