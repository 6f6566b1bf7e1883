mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qcascade::balancing::*;
use qcascade::matcore::{rotation, AntisymmetricMatrix, SymmetricMatrix};
use qcascade::reference;
use qcascade::sensitivity::purity_gradients;
use qcascade::Error;
use rand::Rng;

#[test]
fn newton_converges_fast_and_monotonically() {
    let mut r = rng(8);
    for _ in 0..100 {
        let r1 = r.random_range(-5.0..5.0);
        let r2 = r.random_range(-5.0..5.0);
        let det = 10f64.powf(r.random_range(-3.0..3.0));
        let o = newton_lambda(r1, r2, det).unwrap();
        assert!(!o.bisection_fallback);
        assert!((h_lambda(o.lambda, &[r1, r2]) - det).abs() <= 1e-12 * det);
        assert!(o.iterates.len() - 1 <= 8, "{r1} {r2} {det}: {:?}", o.iterates);
        for w in o.iterates[1..].windows(2) {
            assert!(w[1] <= w[0], "{:?}", o.iterates);
        }
    }
}

#[test]
fn multiplier_curve_is_increasing_and_convex() {
    let (r1, r2) = reference::CURVE_R;
    let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.05).collect();
    let h: Vec<f64> = grid.iter().map(|&l| h_lambda(l, &[r1, r2])).collect();
    for w in h.windows(2) {
        assert!(w[1] > w[0]);
    }
    for w in h.windows(3) {
        assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12 * w[1]);
    }
    // derivative formula
    for &l in &[0.1, 1.0, 7.0] {
        let d = (h_lambda(l + 1e-6, &[r1, r2]) - h_lambda(l - 1e-6, &[r1, r2])) / 2e-6;
        assert!((h_prime(l, &[r1, r2]) - d).abs() < 1e-7 * d.abs().max(1.0));
    }
}

#[test]
fn zero_eigenvalues_hit_the_starting_point() {
    let o = newton_lambda(0.0, 0.0, 2.25).unwrap();
    assert_eq!(o.iterations, 1);
    assert_eq!(o.lambda, 3.0);
    assert!(newton_lambda(1.0, 1.0, 0.0).is_err());
}

fn random_problem(r: &mut rand_chacha::ChaCha8Rng, m: usize) -> OneModeBalanceProblem {
    OneModeBalanceProblem::new(random_symmetric(r, 2, 2.0), random_matrix(r, m, 2, 1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn one_mode_minimiser_properties(seed in any::<u64>(), m in 1usize..4) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, 2 * m);
        let res = minimize_psi_one_mode(&p).unwrap();
        let s = &res.s;
        prop_assert!((s[(0, 1)] - s[(1, 0)]).abs() < 1e-12);
        prop_assert!((s.determinant() - 1.0).abs() < 1e-9);
        prop_assert!(res.stationarity_residual < 1e-9);
        prop_assert!(res.psi_after <= res.psi_before * (1.0 + 1e-12));
        prop_assert!((p.psi(s) - res.psi_after).abs() < 1e-10 * res.psi_after);
        prop_assert!((res.varsigma * (res.u.determinant()) / res.varsigma - 1.0).abs() < 1e-9);
        let best = probe_one_mode(&p, &res, 1000, seed);
        prop_assert!(best >= res.psi_after * (1.0 - 1e-9));
        // ς-eigenvector is (cos ψ, -sin ψ)
        let v = nalgebra::DVector::from_vec(vec![res.psi_angle.cos(), -res.psi_angle.sin()]);
        prop_assert!((res.u.as_matrix() * &v - &v * res.varsigma).norm() < 1e-9 * res.varsigma);
    }

    #[test]
    fn rotations_do_not_change_psi(seed in any::<u64>(), phi in -3.0f64..3.0) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, 4);
        let res = minimize_psi_one_mode(&p).unwrap();
        let rotated = rotation(phi) * &res.s;
        prop_assert!((p.psi(&rotated) - res.psi_after).abs() < 1e-10 * res.psi_after);
    }

    #[test]
    fn multimode_bound_is_a_lower_bound(seed in any::<u64>(), half in 1usize..4) {
        let mut r = rng(seed);
        let nu = 2 * half;
        let rho = random_symmetric(&mut r, nu, 1.0);
        let x = random_matrix(&mut r, nu + 2, nu, 1.0);
        let tau = SymmetricMatrix::symmetrize(x.transpose() * &x);
        let bound = multimode_lower_bound(&rho, &tau).unwrap();
        let rm = rho.as_matrix();
        for _ in 0..50 {
            let y = random_matrix(&mut r, nu, nu, 0.5) + DMatrix::identity(nu, nu);
            let u0 = &y * y.transpose();
            let u = &u0 / u0.determinant().powf(1.0 / nu as f64);
            let val = 0.5 * rm.dot(&(&u * rm * &u)) + tau.dot(&u);
            prop_assert!(bound <= val * (1.0 + 1e-10));
        }
    }
}

#[test]
fn multimode_bound_matches_one_mode_minimum() {
    let mut r = rng(41);
    let p = random_problem(&mut r, 6);
    let res = minimize_psi_one_mode(&p).unwrap();
    let b = multimode_lower_bound(&p.rho, &p.tau).unwrap();
    assert!((b - res.psi_after).abs() < 1e-10 * b);
}

#[test]
fn scaled_example_problem_gives_published_transform() {
    let spec = example_spec();
    let c = spec.cascade().unwrap();
    let g = purity_gradients(&c).unwrap();
    let bounds = spec.bounds().unwrap();
    for (k, &(a, b)) in bounds.iter().enumerate() {
        let p = OneModeBalanceProblem::from_gradients(&g.rho[k], &g.mu[k], a, b).unwrap();
        let res = minimize_psi_one_mode(&p).unwrap();
        assert!(reference::max_abs_diff(&res.s, &reference::s_matrix(k)) < 1e-3);
        assert!(res.newton_iterations <= 9);
    }
}

#[test]
fn cascade_balancing_transforms_consistently() {
    let spec = example_spec();
    let c = spec.cascade().unwrap();
    let g = purity_gradients(&c).unwrap();
    let bal = balance_cascade(&c, &g, &spec.bounds().unwrap()).unwrap();
    let g2 = purity_gradients(&bal.transformed).unwrap();
    let bounds = spec.bounds().unwrap();
    for (k, &(a, b)) in bounds.iter().enumerate() {
        let after = qcascade::sensitivity::psi_k(g2.rho[k].as_matrix(), &g2.mu[k], a, b, &DMatrix::identity(2, 2));
        assert!((after - bal.results[k].psi_after).abs() < 1e-9 * after);
    }
    let total: f64 = bal.results.iter().map(|r| r.psi_after).sum::<f64>() / bal.results.iter().map(|r| r.psi_before).sum::<f64>();
    assert_eq!(total, bal.total_ratio);
}

#[test]
fn balancing_errors() {
    let mut r = rng(1);
    let c = random_cascade(&mut r, 1, 4, 4);
    let g = purity_gradients(&c).unwrap();
    assert!(matches!(balance_cascade(&c, &g, &[(0.1, 0.1)]), Err(Error::NotOneMode(4))));
    let mu = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    let p = OneModeBalanceProblem::new(SymmetricMatrix::identity(2), mu).unwrap();
    assert!(matches!(minimize_psi_one_mode(&p), Err(Error::RankDeficientMu(_))));
    let th = AntisymmetricMatrix::canonical(2, 0.5).unwrap();
    assert_eq!(th.order(), 2);
    assert!(OneModeBalanceProblem::from_gradients(&SymmetricMatrix::identity(2), &DMatrix::identity(2, 2), 0.0, 1.0).is_err());
}

#[test]
fn multimode_bound_without_rho_is_am_gm() {
    let mut r = rng(12);
    for nu in [2usize, 4, 6] {
        let x = random_matrix(&mut r, nu + 1, nu, 1.0);
        let tau = SymmetricMatrix::symmetrize(x.transpose() * &x);
        let b = multimode_lower_bound(&SymmetricMatrix::symmetrize(DMatrix::zeros(nu, nu)), &tau).unwrap();
        let want = nu as f64 * tau.determinant().powf(1.0 / nu as f64);
        assert!((b - want).abs() < 1e-10 * want);
    }
}

#[test]
fn multimode_bound_lies_below_symplectic_search() {
    let mut r = rng(13);
    let th = AntisymmetricMatrix::canonical(4, 0.5).unwrap();
    let rho = random_symmetric(&mut r, 4, 1.0);
    let x = random_matrix(&mut r, 6, 4, 1.0);
    let tau = SymmetricMatrix::symmetrize(x.transpose() * &x);
    let bound = multimode_lower_bound(&rho, &tau).unwrap();
    let rm = rho.as_matrix();
    let mut best = f64::INFINITY;
    for _ in 0..1000 {
        let s = random_symplectic(&mut r, &th, 0.5);
        let u = s.transpose() * &s;
        best = best.min(0.5 * rm.dot(&(&u * rm * &u)) + tau.dot(&u));
    }
    assert!(bound <= best * (1.0 + 1e-12), "{bound} {best}");
}

#[test]
fn returned_transforms_are_symplectic() {
    let th = AntisymmetricMatrix::canonical(2, 0.5).unwrap();
    let mut r = rng(14);
    for _ in 0..50 {
        let p = random_problem(&mut r, 4);
        let res = minimize_psi_one_mode(&p).unwrap();
        let chk = qcascade::matcore::symplectic_residual(&res.s, &th).unwrap();
        assert!(chk.residual <= 1e-10 && (chk.det - 1.0).abs() <= 1e-10);
    }
}
