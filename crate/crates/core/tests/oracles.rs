#[path = "support/oracles.rs"]
mod oracles;

#[test]
fn mcnemar_exact_branch_matches_rationals() {
    oracles::mcnemar_exact_branch_matches_rationals();
}

#[test]
fn t_tail_matches_numeric_integration() {
    oracles::t_tail_matches_numeric_integration();
}

#[test]
fn chi_square_tail_matches_numeric_integration() {
    oracles::chi_square_tail_matches_numeric_integration();
}

#[test]
fn pearson_reference_p_value() {
    oracles::pearson_reference_p_value();
}

#[test]
fn eigenvalues_of_2x2_match_quadratic_roots() {
    oracles::eigenvalues_of_2x2_match_quadratic_roots();
}

#[test]
fn eigenvalues_of_3x3_match_closed_form() {
    oracles::eigenvalues_of_3x3_match_closed_form();
}

#[test]
fn pca_on_known_spectrum() {
    oracles::pca_on_known_spectrum();
}

#[test]
fn svm_satisfies_kkt() {
    oracles::svm_satisfies_kkt();
}

#[test]
fn svm_solves_xor_and_separable_data() {
    oracles::svm_solves_xor_and_separable_data();
}
