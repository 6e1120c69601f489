mod common;

use common::*;
use nalgebra::DMatrix;
use ssc_core::data::{normalize_columns, orthonormalize, DataMatrix};
use ssc_core::embeddings::{apply, make_gaussian};
use ssc_core::privacy::*;
use ssc_core::Error;

fn params(eps_priv: f64, delta: f64, mu0: f64, eps_embed: f64) -> PrivacyParams {
    PrivacyParams { eps_priv, delta_priv: delta, mu0, eps_embed }
}

#[test]
fn noise_scale_examples() {
    let s = noise_scale(&params(1.0, 0.05, 1.0, 0.0)).unwrap();
    assert!((s - (32.0 * 25f64.ln()).sqrt()).abs() < 1e-12);
    assert!((s - 10.14909).abs() < 1e-5);
    let half = noise_scale(&params(0.5, 0.05, 1.0, 0.0)).unwrap();
    assert!((half / s - 2.0).abs() < 1e-12);
    let embed = noise_scale(&params(1.0, 0.05, 1.0, 0.5)).unwrap();
    assert!((embed / s - 3.0).abs() < 1e-12);
    for bad in [params(0.0, 0.05, 1.0, 0.0), params(1.0, 1.0, 1.0, 0.0), params(1.0, 0.1, 0.5, 0.0), params(1.0, 0.1, 1.0, 1.0)] {
        assert!(matches!(noise_scale(&bad), Err(Error::BadParameter(_))));
    }
}

#[test]
fn noise_scale_is_monotone() {
    let base = params(1.0, 0.05, 2.0, 0.2);
    let s = noise_scale(&base).unwrap();
    assert!(noise_scale(&PrivacyParams { eps_priv: 1.1, ..base }).unwrap() < s);
    assert!(noise_scale(&PrivacyParams { mu0: 2.1, ..base }).unwrap() > s);
    assert!(noise_scale(&PrivacyParams { eps_embed: 0.3, ..base }).unwrap() > s);
    assert!(noise_scale(&PrivacyParams { delta_priv: 0.01, ..base }).unwrap() > s);
}

#[test]
fn sensitivity_bound_examples() {
    assert!((l2_sensitivity_bound(1.0, 0.0, 100).unwrap() - 0.4).abs() < 1e-15);
    let a = l2_sensitivity_bound(2.0, 0.3, 100).unwrap();
    let b = l2_sensitivity_bound(2.0, 0.3, 400).unwrap();
    assert!((a / b - 2.0).abs() < 1e-12);
    assert!(matches!(l2_sensitivity_bound(1.0, 1.0, 10), Err(Error::BadParameter(_))));
}

#[test]
fn gaussian_mechanism_identity() {
    for &(eps, delta, mu0, e, d) in &[
        (1.0, 0.05, 1.0, 0.0, 100usize),
        (0.3, 1e-5, 3.0, 0.2, 2000),
        (4.0, 0.5, 1.5, 0.9, 7),
    ] {
        let p = params(eps, delta, mu0, e);
        let lhs = noise_scale(&p).unwrap() / (d as f64).sqrt();
        let rhs = l2_sensitivity_bound(mu0, e, d).unwrap() * (2.0 * (1.25 / delta).ln()).sqrt() / eps;
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn incoherence_examples() {
    let mut e = DMatrix::zeros(8, 2);
    e[(0, 0)] = 1.0;
    e[(1, 1)] = 1.0;
    assert!((column_space_incoherence(&e).unwrap() - 4.0).abs() < 1e-12);
    // Hadamard-like basis: equal row norms
    let h = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]) * 0.5;
    assert!((column_space_incoherence(&h).unwrap() - 1.0).abs() < 1e-12);
    let u = orthonormalize(&gaussian_matrix(12, 3, 4));
    let q = orthonormalize(&gaussian_matrix(3, 3, 5));
    let a = column_space_incoherence(&u).unwrap();
    assert!((a - column_space_incoherence(&(&u * q)).unwrap()).abs() < 1e-10);
    assert!((1.0..=4.0).contains(&a));
    assert!(matches!(column_space_incoherence(&(u * 2.0)), Err(Error::NotOrthonormal(_))));
}

#[test]
fn release_has_the_stated_variance() {
    let x = normalize_columns(&DataMatrix::new(gaussian_matrix(100, 10_000, 1)).unwrap()).unwrap();
    let p = params(1.0, 0.05, 1.0, 0.0);
    let d = 400;
    let rel = privatize(&x, &p, d, 9).unwrap();
    assert_eq!(rel.sigma, noise_scale(&p).unwrap());
    let noise = rel.data.matrix() - x.matrix();
    let n = noise.len() as f64;
    let mean = noise.sum() / n;
    let var = noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let expect = rel.sigma * rel.sigma / d as f64;
    assert!((var / expect - 1.0).abs() < 0.01, "{var} vs {expect}");
    assert_eq!(privatize(&x, &p, d, 9).unwrap(), rel);
    assert_ne!(privatize(&x, &p, d, 10).unwrap().data, rel.data);
}

#[test]
fn huge_budget_releases_the_input() {
    let x = unit_columns(6, 5, 2);
    let rel = privatize(&x, &params(1e15, 0.05, 1.0, 0.0), 100, 1).unwrap();
    assert!(rel.sigma < 1e-12);
    assert!((rel.data.matrix() - x.matrix()).amax() < 1e-12);
}

#[test]
fn release_round_trips_through_files() {
    let x = unit_columns(4, 6, 3);
    let rel = privatize(&x, &params(2.0, 0.1, 1.5, 0.1), 50, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rel.save(dir.path()).unwrap();
    let back = PrivateRelease::<f64>::load(dir.path()).unwrap();
    assert_eq!(back.sigma, rel.sigma);
    assert_eq!(back.params, rel.params);
    assert!((back.data.matrix() - rel.data.matrix()).amax() < 1e-15);
}

#[test]
fn utility_threshold_matches_direct_evaluation() {
    let (delta, mu0, d, p, n, b, c) = (1e-3f64, 2.0f64, 1000usize, 50usize, 180usize, 0.2f64, 1.0f64);
    let ln_n = (n as f64).ln();
    let oracle = c * (mu0 * (1.0 / delta).ln() / d as f64).sqrt()
        * f64::max(ln_n.powf(1.25) / (b * b), ln_n.powf(1.5) / (b.powf(5.5) * (p as f64).powf(0.25)));
    let t = utility_threshold(delta, mu0, d, p, n, b, c).unwrap();
    assert!((t - oracle).abs() <= 1e-12 * oracle);
    assert!(check_utility(oracle * 1.01, delta, mu0, d, p, n, b, c).unwrap().satisfied);
    let v = check_utility(oracle * 0.99, delta, mu0, d, p, n, b, c).unwrap();
    assert_eq!(v.binding_constraint, "privacy budget");
    assert!(matches!(check_utility(1.0, delta, mu0, d, p, n, 0.0, c), Err(Error::BadParameter(_))));
}

#[test]
fn utility_threshold_is_monotone() {
    let t = |d: usize, b: f64| utility_threshold(0.01, 2.0, d, 40, 100, b, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for d in [10, 100, 1000, 10_000, 100_000] {
        assert!(t(d, 0.3) < prev);
        prev = t(d, 0.3);
    }
    assert!(t(1000, 0.1) > t(1000, 0.2));
}

#[test]
fn empirical_sensitivity_stays_below_the_bound() {
    let op = make_gaussian::<f64>(400, 200, 17).unwrap();
    let rep = empirical_sensitivity(&op, 2.0, 1000, 1.0, 5).unwrap();
    let bound = l2_sensitivity_bound(2.0, rep.max_local_distortion, 400).unwrap();
    assert!(rep.max_sensitivity <= bound, "{} > {bound}", rep.max_sensitivity);
    assert!(rep.max_local_distortion <= 0.2);
    assert!(rep.max_sensitivity <= 4.0 * (2.0f64 / 400.0).sqrt() * 1.5);
    let half = empirical_sensitivity(&op, 2.0, 1000, 0.5, 5).unwrap();
    assert!(half.max_sensitivity <= rep.max_sensitivity);
    let none = empirical_sensitivity(&op, 2.0, 10, 0.0, 5).unwrap();
    assert_eq!(none.max_sensitivity, 0.0);
}

#[test]
fn release_after_projection_is_deterministic() {
    let x = DataMatrix::new(gaussian_matrix(30, 8, 6)).unwrap();
    let op = make_gaussian::<f64>(30, 10, 2).unwrap();
    let xn = normalize_columns(&apply(&op, &x).unwrap()).unwrap();
    let p = params(1.0, 0.05, 3.0, 0.3);
    assert_eq!(privatize(&xn, &p, 30, 3).unwrap(), privatize(&xn, &p, 30, 3).unwrap());
}
