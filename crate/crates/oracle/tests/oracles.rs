use gradinv_core::Activation;
use gradinv_oracle::selftest::{decomposition_cases, gradient_cases, polynomial_moment_cases, stein_cases};
use gradinv_oracle::{mc_stein_check, SelftestLevel};
use ndarray::array;

fn assert_all(cases: Vec<gradinv_oracle::SelftestCase>) {
    let failed: Vec<_> = cases.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn poly23_second_moment_tensor() {
    let c = mc_stein_check(&Activation::poly23(), 2, array![1.0, 0.0].view(), 1_000_000, 11).unwrap();
    assert!((c.lhs[[0, 0]] - 2.0).abs() < 4.0 * c.stderr[[0, 0]]);
    assert!(c.within(4.0), "max z {}", c.max_z());
}

#[test]
fn tanh_second_order_vanishes() {
    let c = mc_stein_check(&Activation::tanh(), 2, array![1.0, 0.0].view(), 1_000_000, 12).unwrap();
    assert!(c.rhs.iter().all(|&v| v == 0.0));
    assert!(c.within(4.0), "max z {}", c.max_z());
}

#[test]
fn relu_first_order_is_half_x() {
    let x = array![0.6, 0.8];
    let c = mc_stein_check(&Activation::relu(), 1, x.view(), 1_000_000, 13).unwrap();
    assert!((c.rhs[[0]] - 0.3).abs() < 1e-15 && (c.rhs[[1]] - 0.4).abs() < 1e-15);
    assert!(c.within(4.0), "max z {}", c.max_z());
}

#[test]
fn relu_fourth_order_constant() {
    let c = mc_stein_check(&Activation::relu(), 4, array![1.0].view(), 10_000_000, 14).unwrap();
    let expected = -1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((c.rhs[[0, 0, 0, 0]] - expected).abs() < 1e-12);
    assert!((c.lhs[[0, 0, 0, 0]] - expected).abs() < 4.0 * c.stderr[[0, 0, 0, 0]]);
}

#[test]
fn stein_suite_full_budget() {
    assert_all(stein_cases(SelftestLevel::Full));
}

#[test]
fn polynomial_moments_agree() {
    assert_all(polynomial_moment_cases());
}

#[test]
fn gradient_oracle_agrees_on_twenty_instances() {
    let cases = gradient_cases(20);
    assert_eq!(cases.len(), 20);
    assert_all(cases);
}

#[test]
fn decomposition_agrees_with_closed_form() {
    assert_all(decomposition_cases(10));
}
