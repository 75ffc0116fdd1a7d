mod common {
    pub mod oracles;
}

use common::oracles::*;

#[test]
fn forward_equals_jacobian_times_input() {
    let worst = local_linearity(100);
    assert!(worst <= 1e-8, "relative error {worst:e}");
}

#[test]
fn data_jacobian_matches_central_differences() {
    let worst = jacobian_vs_fd(100, 1e-5);
    assert!(worst <= 1e-5, "relative error {worst:e}");
}

#[test]
fn projection_matches_svd_identities() {
    let o = svd_oracle(5);
    assert!(o.reconstruction <= 1e-9, "{o:?}");
    assert!(o.normalized_top <= 1e-9, "{o:?}");
    assert!(o.distances <= 1e-9, "{o:?}");
}

#[test]
fn nt_xent_closed_form() {
    let e = std::f64::consts::E;
    let expect = -(e / (e + 2.0)).ln();
    assert!((nt_xent_orthogonal_pairs() - expect).abs() <= 1e-6);
    assert!((expect - 0.5514).abs() < 1e-4);
}

#[test]
fn encoder_and_loss_gradients_match_fd() {
    let worst = encoder_gradients_vs_fd();
    assert!(worst <= 1e-4, "relative error {worst:e}");
}

#[test]
fn gp_posterior_matches_dense_solve() {
    let o = gp_vs_dense(20);
    assert!(o.mean <= 1e-10 && o.variance <= 1e-10, "{o:?}");
}

#[test]
fn expected_improvement_closed_form_and_mc() {
    let o = ei_oracle(100_000);
    assert!(o.closed_form <= 1e-10, "{o:?}");
    assert!(o.mc_sigmas <= 3.0, "{o:?}");
}

#[test]
fn metrics_match_brute_force() {
    let (p, t) = metrics_vs_brute_force();
    assert!(p <= 1e-12 && t <= 1e-12, "pearson {p:e}, tau {t:e}");
}
