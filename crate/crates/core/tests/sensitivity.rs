mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qcascade::matcore::{spd_sqrt, symmetric_matrix_function, AntisymmetricMatrix, SymmetricMatrix};
use qcascade::sensitivity::*;
use qcascade::steadystate::invariant_covariance_direct;
use qcascade::Error;

fn best_fd_distance(c: &qcascade::cascade::CascadeModel, g: &GradientSet) -> f64 {
    let rho: Vec<DMatrix<f64>> = g.rho.iter().map(|r| r.as_matrix().clone()).collect();
    [1e-3, 1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&h| {
            let (fr, fm) = gradient_fd_independent(c, h);
            gradient_distance((&fr, &fm), (&rho, &g.mu))
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn closed_form_gradients_match_independent_differences() {
    let c = example_cascade();
    let g = purity_gradients(&c).unwrap();
    assert!(best_fd_distance(&c, &g) <= 1e-6);
    let mut r = rng(2024);
    for _ in 0..20 {
        let c = random_corpus_cascade(&mut r);
        let g = purity_gradients(&c).unwrap();
        let d = best_fd_distance(&c, &g);
        assert!(d <= 1e-6, "N = {}, m = {}: {d:e}", c.len(), c.channels());
    }
}

#[test]
fn library_fd_oracle_agrees() {
    let c = example_cascade();
    let g = purity_gradients(&c).unwrap();
    let sweep = fd_sweep(&c, &g, &[1e-3, 1e-4, 1e-5]).unwrap();
    assert!(sweep.iter().map(|x| x.1).fold(f64::INFINITY, f64::min) < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn direct_and_recursive_routes_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_corpus_cascade(&mut r);
        let g = purity_gradients(&c).unwrap();
        let gr = purity_gradients_recursive(&c).unwrap();
        prop_assert!(gr.relative_distance(&g) <= 1e-8);
    }

    #[test]
    fn gradients_follow_coordinate_changes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_corpus_cascade(&mut r);
        let th = AntisymmetricMatrix::canonical(2, 0.5).unwrap();
        let s: Vec<DMatrix<f64>> = (0..c.len()).map(|_| random_symplectic(&mut r, &th, 0.5)).collect();
        let thetas = vec![th; c.len()];
        let g = purity_gradients(&c).unwrap();
        let predicted = transform_gradients(&g, &s, &thetas).unwrap();
        let actual = purity_gradients(&c.transformed(&s).unwrap()).unwrap();
        prop_assert!(actual.relative_distance(&predicted) <= 1e-8);
    }

    #[test]
    fn quartic_index_is_bounded_by_psi(seed in any::<u64>(), a in 0.001f64..0.1, b in 0.001f64..0.5) {
        let mut r = rng(seed);
        let c = random_cascade(&mut r, 1, 2, 4);
        let g = purity_gradients(&c).unwrap();
        let d = 3 + 4 * 2;
        // Σ = D^{1/2} W D^{1/2} with 0 ⪯ W ⪯ I
        let x = random_matrix(&mut r, d, d, 1.0);
        let w0 = SymmetricMatrix::symmetrize(&x * x.transpose());
        let top = w0.as_matrix().clone().symmetric_eigen().eigenvalues.max();
        let w = &*w0 / top;
        let dh = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| if i < 3 { a.sqrt() } else { b.sqrt() }));
        let sig = SymmetricMatrix::symmetrize(&dh * w * &dh);
        let th = AntisymmetricMatrix::canonical(2, 0.5).unwrap();
        let s = random_symplectic(&mut r, &th, 0.6);
        let phi = phi_k(g.rho[0].as_matrix(), &g.mu[0], &sig, &s).unwrap();
        let psi = psi_k(g.rho[0].as_matrix(), &g.mu[0], a, b, &s);
        prop_assert!(phi <= psi * (1.0 + 1e-12));
    }

    #[test]
    fn variation_matches_difference_quotient(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_cascade(&mut r, 3, 2, 4);
        let k = (seed % 3) as usize;
        let dr = random_symmetric(&mut r, 2, 1.0).into_inner();
        let dm = random_matrix(&mut r, 4, 2, 1.0);
        let (da, db) = cascade_variation(&c, k, &dr, &dm);
        let h = 1e-6;
        let shifted = |t: f64| {
            let o = c.oscillator(k);
            let p = qcascade::cascade::OscillatorParams::new(
                o.theta().clone(),
                SymmetricMatrix::symmetrize(o.energy().as_matrix() + &dr * t),
                o.coupling() + &dm * t,
            )
            .unwrap();
            c.with_oscillator(k, p).unwrap()
        };
        let (cp, cm) = (shifted(h), shifted(-h));
        let fa = (cp.a() - cm.a()) / (2.0 * h);
        let fb = (cp.b() - cm.b()) / (2.0 * h);
        prop_assert!(rel(&da, &fa) < 1e-7);
        prop_assert!(rel(&db, &fb) < 1e-7);
    }
}

#[test]
fn index_matches_hand_expansion() {
    let spec = example_spec();
    let c = spec.cascade().unwrap();
    let g = purity_gradients(&c).unwrap();
    let u = spec.uncertainty.clone().unwrap();
    let rep = sensitivity_index(&g, &u).unwrap();
    let bounds = spec.bounds().unwrap();
    for (k, &(a, b)) in bounds.iter().enumerate() {
        let r = g.rho[k].as_matrix();
        let hand = a * (r[(0, 0)].powi(2) + 4.0 * r[(1, 0)].powi(2) + r[(1, 1)].powi(2)) + b * g.mu[k].norm_squared();
        assert!((rep.z_k[k] - hand).abs() < 1e-12 * hand);
    }
    assert!((rep.z - rep.z_k.iter().sum::<f64>()).abs() < 1e-12 * rep.z);
}

#[test]
fn fisher_sensitivity_bounds_purity_index() {
    let spec = example_spec();
    let c = spec.cascade().unwrap();
    let u = spec.uncertainty.clone().unwrap();
    let p = invariant_covariance_direct(&c).unwrap();
    let derivs = covariance_derivatives(&c, &p).unwrap();
    let sigmas: Vec<_> = (0..3).map(|k| u.blocks[k].covariance(2, 6).unwrap()).collect();
    let f = fisher_sensitivity(&p, &derivs, &sigmas).unwrap();
    let z = sensitivity_index(&purity_gradients(&c).unwrap(), &u).unwrap().z;
    assert!((f.z - z).abs() < 1e-6 * z);
    assert!(z <= f.n as f64 * f.z_fisher);

    // δ𝒫 from the variational equation matches a difference quotient
    let o = c.oscillator(1);
    let h = 1e-6;
    let shifted = |t: f64| {
        let mut m = o.coupling().clone();
        m[(2, 1)] += t;
        let q = qcascade::cascade::OscillatorParams::new(o.theta().clone(), o.energy().clone(), m).unwrap();
        invariant_covariance_direct(&c.with_oscillator(1, q).unwrap()).unwrap().into_inner()
    };
    let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
    // coordinate 3 + (column 1)·6 + row 2 of e_2
    let idx = 3 + 6 + 2;
    assert!(rel(derivs[1][idx].as_matrix(), &fd) < 1e-6);
}

#[test]
fn fisher_inequality_on_sampled_directions() {
    let c = example_cascade();
    let p = invariant_covariance_direct(&c).unwrap();
    let mut r = rng(99);
    for _ in 0..100 {
        let dp = random_symmetric(&mut r, 6, 1.0).into_inner();
        let (lhs, rhs) = fisher_bound_terms(&p, &dp).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-12));
    }
}

#[test]
fn kl_divergence_cases() {
    let p = SymmetricMatrix::from_diagonal(&[2.0]);
    let q = SymmetricMatrix::from_diagonal(&[1.0]);
    assert!((kl_gaussian(&p, &q).unwrap() - 0.5 * (2.0 - 2f64.ln() - 1.0)).abs() < 1e-15);
    assert_eq!(kl_gaussian(&q, &q).unwrap(), 0.0);
    let d = SymmetricMatrix::from_diagonal(&[3.0, 0.5]);
    let e = SymmetricMatrix::from_diagonal(&[1.5, 2.0]);
    let want = 0.5 * ((2.0 - 2f64.ln() - 1.0) + (0.25 - 0.25f64.ln() - 1.0));
    assert!((kl_gaussian(&d, &e).unwrap() - want).abs() < 1e-14);
    assert!(matches!(kl_gaussian(&d, &q), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn kl_is_quadratic_near_the_reference() {
    let c = example_cascade();
    let ps = invariant_covariance_direct(&c).unwrap();
    let half = spd_sqrt(&ps).unwrap();
    let mut r = rng(5);
    for _ in 0..10 {
        let e = random_symmetric(&mut r, 6, 1.0);
        let e = &*e / e.norm() * 1e-3;
        let chi = DMatrix::identity(6, 6) + &e;
        let p = SymmetricMatrix::symmetrize(half.as_matrix() * &chi * half.as_matrix());
        let ratio = kl_gaussian(&p, &ps).unwrap() / (0.25 * e.norm_squared());
        assert!((0.99..=1.01).contains(&ratio), "{ratio}");
    }
}

#[test]
fn small_monte_carlo_is_reproducible() {
    let spec = example_spec();
    let c = spec.cascade().unwrap();
    let u = spec.uncertainty.clone().unwrap();
    let a = monte_carlo_variance(&c, &u, 4000, 1).unwrap();
    let b = monte_carlo_variance(&c, &u, 4000, 1).unwrap();
    assert_eq!(a, b);
    assert!((a.ratio - 1.0).abs() < 5.0 * a.ratio_std_err, "{} ± {}", a.ratio, a.ratio_std_err);
    let d = monte_carlo_variance(&c, &u, 4000, 2).unwrap();
    assert_ne!(a.variance, d.variance);
}

#[test]
fn semidefinite_uncertainty_is_accepted() {
    let c = example_cascade();
    let blocks = (0..3)
        .map(|k| {
            let mut diag = vec![0.0; 15];
            diag[k] = 0.01;
            OscillatorUncertainty::Covariance(SymmetricMatrix::from_diagonal(&diag))
        })
        .collect();
    let u = UncertaintyModel { blocks, epsilon: 1e-6 };
    let m = monte_carlo_variance(&c, &u, 500, 3).unwrap();
    assert!(m.variance > 0.0);
    let root = symmetric_matrix_function(&u.blocks[0].covariance(2, 6).unwrap(), |x| x.max(0.0).sqrt()).unwrap();
    assert!((root[(0, 0)] - 0.1).abs() < 1e-15);
}

#[test]
fn mismatched_uncertainty_is_rejected() {
    let c = example_cascade();
    let g = purity_gradients(&c).unwrap();
    let u = UncertaintyModel {
        blocks: vec![OscillatorUncertainty::Bounds { a: 1.0, b: 1.0 }],
        epsilon: 1e-6,
    };
    assert!(matches!(sensitivity_index(&g, &u), Err(Error::DimensionMismatch { .. })));
    let bad = OscillatorUncertainty::Covariance(SymmetricMatrix::identity(4));
    assert!(bad.covariance(2, 6).is_err());
}
