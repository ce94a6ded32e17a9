mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use slabspike::{ActiveSet, Dataset, MarginalModel, Sigma2Prior};

use common::quadrature::quadrature_log_marginal;
use common::{normal_matrix, normal_vector, rng};

struct Case {
    y: DVector<f64>,
    x: DMatrix<f64>,
    u: DMatrix<f64>,
    gamma2: f64,
    scales: Vec<f64>,
    prior: Sigma2Prior,
}

fn case(seed: u64, k: usize, l: usize, gamma2: f64, scales: Vec<f64>, prior: Sigma2Prior) -> Case {
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, 6, k);
    let u = normal_matrix(&mut r, 6, l);
    let mut y = normal_vector(&mut r, 6);
    y += 0.9 * x.column(0);
    Case { y, x, u, gamma2, scales, prior }
}

fn check_against_quadrature(c: &Case) {
    let model = MarginalModel::new(&c.y, &c.x, &c.u, c.prior).unwrap();
    let k = c.x.ncols();
    let subsets: Vec<Vec<usize>> = (0..1usize << k)
        .map(|mask| (0..k).filter(|i| mask & (1 << i) != 0).collect())
        .filter(|s: &Vec<usize>| s.len() + c.u.ncols() <= 2)
        .collect();
    let empty_q = quadrature_log_marginal(&c.y, &c.x, &c.u, &[], &[], c.gamma2, c.prior);
    let empty_c = model.log_marginal(&ActiveSet::empty(), c.gamma2).unwrap();
    for s in subsets.iter().filter(|s| !s.is_empty()) {
        let scales: Vec<f64> = s.iter().map(|&i| c.scales[i]).collect();
        let q = quadrature_log_marginal(&c.y, &c.x, &c.u, s, &scales, c.gamma2, c.prior) - empty_q;
        let active = ActiveSet::new(s.clone(), scales).unwrap();
        let closed = model.log_marginal(&active, c.gamma2).unwrap() - empty_c;
        assert!(
            (q - closed).abs() < 1e-6,
            "set {s:?}: quadrature {q:.12} vs closed form {closed:.12}"
        );
    }
}

#[test]
fn quadrature_two_predictors_unit_scales() {
    check_against_quadrature(&case(1, 2, 0, 0.7, vec![1.0, 1.0], Sigma2Prior::Jeffreys));
}

#[test]
fn quadrature_two_predictors_mixed_scales() {
    check_against_quadrature(&case(2, 2, 0, 3.0, vec![2.5, 0.4], Sigma2Prior::Jeffreys));
}

#[test]
fn quadrature_with_always_included_column() {
    check_against_quadrature(&case(3, 1, 1, 1.3, vec![0.8], Sigma2Prior::Jeffreys));
}

#[test]
fn quadrature_inverse_gamma_sigma2_prior() {
    let prior = Sigma2Prior::InverseGamma { shape: 2.0, rate: 1.5 };
    check_against_quadrature(&case(4, 2, 0, 0.5, vec![1.0, 1.7], prior));
}

#[test]
fn quadrature_bayes_factor_for_second_predictor() {
    let c = case(5, 2, 0, 2.0, vec![1.0, 1.0], Sigma2Prior::Jeffreys);
    let model = MarginalModel::new(&c.y, &c.x, &c.u, c.prior).unwrap();
    let bf = model
        .log_bayes_factor(&ActiveSet::unit(vec![0]).unwrap(), 1, 1.0, c.gamma2)
        .unwrap();
    let q = quadrature_log_marginal(&c.y, &c.x, &c.u, &[0, 1], &[1.0, 1.0], c.gamma2, c.prior)
        - quadrature_log_marginal(&c.y, &c.x, &c.u, &[0], &[1.0], c.gamma2, c.prior);
    assert!((bf - q).abs() < 1e-6, "{bf} vs {q}");
}

#[test]
fn random_flips_match_fresh_factorizations() {
    let mut r = rng(10);
    let (n, k, l) = (12, 8, 1);
    let x = normal_matrix(&mut r, n, k);
    let u = normal_matrix(&mut r, n, l);
    let y = normal_vector(&mut r, n) + 0.7 * x.column(2) - 0.4 * x.column(5);
    let model = MarginalModel::new(&y, &x, &u, Sigma2Prior::Jeffreys).unwrap();
    let mut z = vec![false; k];
    let mut lambda2: Vec<f64> = (0..k).map(|_| r.random_range(0.2..3.0)).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let i = r.random_range(0..k);
        let gamma2 = r.random_range(0.05..20.0);
        if r.random_bool(0.1) {
            lambda2[i] = r.random_range(0.2..3.0);
        }
        z[i] = false;
        let without = ActiveSet::from_inclusion(&z, &lambda2);
        let mut with_z = z.clone();
        with_z[i] = true;
        let with = ActiveSet::from_inclusion(&with_z, &lambda2);
        let bf = model.log_bayes_factor(&without, i, lambda2[i], gamma2).unwrap();
        let direct = model.log_marginal(&with, gamma2).unwrap() - model.log_marginal(&without, gamma2).unwrap();
        worst = worst.max((bf - direct).abs());
        z[i] = r.random_bool(0.5);
    }
    assert!(worst < 1e-8, "largest discrepancy {worst:e}");
}

#[test]
fn intercept_makes_marginals_location_invariant() {
    let mut r = rng(20);
    let (n, k) = (15, 4);
    let x = normal_matrix(&mut r, n, k);
    let y = normal_vector(&mut r, n) + 0.5 * x.column(1);
    let ones = DMatrix::from_element(n, 1, 1.0);
    let names: Vec<String> = (1..=k).map(|j| format!("x{j}")).collect();
    let base = Dataset::new(y.clone(), x.clone(), ones.clone(), "y", names.clone(), vec!["c".into()]).unwrap();
    let shifted_y = y.add_scalar(37.5);
    let shifted = Dataset::new(shifted_y, x, ones, "y", names, vec!["c".into()]).unwrap();
    let m0 = MarginalModel::from_dataset(&base, Sigma2Prior::Jeffreys).unwrap();
    let m1 = MarginalModel::from_dataset(&shifted, Sigma2Prior::Jeffreys).unwrap();
    for mask in 1..(1usize << k) {
        let set = ActiveSet::unit((0..k).filter(|i| mask & (1 << i) != 0).collect()).unwrap();
        let d0 = m0.log_marginal(&set, 0.8).unwrap() - m0.log_marginal(&ActiveSet::empty(), 0.8).unwrap();
        let d1 = m1.log_marginal(&set, 0.8).unwrap() - m1.log_marginal(&ActiveSet::empty(), 0.8).unwrap();
        assert!((d0 - d1).abs() < 1e-8, "mask {mask}: {d0} vs {d1}");
    }

    // full pipeline: identical inclusion frequencies from the same seed
    let spec = slabspike::SlabSpec {
        n_iter: 3_000,
        n_burn: 500,
        thin: 5,
        grid_q: 30,
        grid_r2: 30,
        seed: 4,
        ..Default::default()
    };
    let t0 = slabspike::run_chain(&base, &spec).unwrap();
    let t1 = slabspike::run_chain(&shifted, &spec).unwrap();
    let inc0 = slabspike::reporting::inclusion_probabilities(&t0);
    let inc1 = slabspike::reporting::inclusion_probabilities(&t1);
    assert_eq!(inc0, inc1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exchangeable_under_permutation(seed in 0u64..10_000, mask in 1usize..64, gamma2 in 0.01f64..50.0) {
        let mut r = rng(seed);
        let (n, k) = (10, 6);
        let x = normal_matrix(&mut r, n, k);
        let u = normal_matrix(&mut r, n, 1);
        let y = normal_vector(&mut r, n);
        let scales: Vec<f64> = (0..k).map(|_| r.random_range(0.1..4.0)).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut r);
        // column j of the permuted design is column perm[j] of the original
        let xp = DMatrix::from_fn(n, k, |i, j| x[(i, perm[j])]);
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let mut permuted: Vec<(usize, f64)> = active
            .iter()
            .map(|&i| (perm.iter().position(|&p| p == i).unwrap(), scales[i]))
            .collect();
        permuted.sort_by_key(|p| p.0);
        let a = ActiveSet::new(active.clone(), active.iter().map(|&i| scales[i]).collect()).unwrap();
        let b = ActiveSet::new(permuted.iter().map(|p| p.0).collect(), permuted.iter().map(|p| p.1).collect()).unwrap();
        let m = MarginalModel::new(&y, &x, &u, Sigma2Prior::Jeffreys).unwrap();
        let mp = MarginalModel::new(&y, &xp, &u, Sigma2Prior::Jeffreys).unwrap();
        let va = m.log_marginal(&a, gamma2).unwrap();
        let vb = mp.log_marginal(&b, gamma2).unwrap();
        prop_assert!((va - vb).abs() < 1e-10, "{} vs {}", va, vb);
    }
}
