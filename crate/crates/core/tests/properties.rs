mod common;

const CASES: u32 = 256;

#[test]
fn ancova_variance_equals_ols_coefficient_variance() {
    common::prop_eq11_matches_ols(CASES).unwrap();
}

#[test]
fn ols_residuals_orthogonal() {
    common::prop_ols_orthogonality(CASES).unwrap();
}

#[test]
fn covariance_matrices_are_psd() {
    common::prop_covariance_psd(CASES).unwrap();
}

#[test]
fn blinded_recalc_ignores_order_and_labels() {
    common::prop_blinding_invariance(CASES).unwrap();
}

#[test]
fn final_size_bounds_and_parity() {
    common::prop_n_fin_bounds(CASES).unwrap();
}

#[test]
fn recalc_outcome_bounds() {
    common::prop_recalc_bounds(CASES).unwrap();
}

#[test]
fn sizes_are_monotone() {
    common::prop_monotonicity(CASES).unwrap();
}

#[test]
fn proposed_reduces_to_simple() {
    common::prop_comparator_identity(CASES).unwrap();
}

#[test]
fn recalc_is_scale_free() {
    common::prop_scale_equivariance(CASES).unwrap();
}

#[test]
fn analysis_location_scale_equivariance() {
    common::prop_analysis_equivariance(CASES).unwrap();
}

#[test]
fn population_residual_identity_and_slopes() {
    common::prop_population_identities(CASES).unwrap();
}
