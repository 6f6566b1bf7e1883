mod common;

use common::*;
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use qcascade::matcore::*;
use qcascade::Error;

fn stable(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let x = random_matrix(rng, n, n, 1.0);
    let shift = x.clone().complex_eigenvalues().iter().map(|e| e.re).fold(f64::MIN, f64::max);
    x - DMatrix::identity(n, n) * (shift + 0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schur_sylvester_matches_kronecker_oracle(seed in any::<u64>(), n in 1usize..9, m in 1usize..9) {
        let mut g = rng(seed);
        let a = stable(&mut g, n);
        let b = stable(&mut g, m);
        let c = random_matrix(&mut g, n, m, 1.0);
        let x = solve_sylvester_schur(&a, &b, &c).unwrap();
        let id_n = DMatrix::<f64>::identity(n, n);
        let id_m = DMatrix::<f64>::identity(m, m);
        let big = id_m.kronecker(&a) + b.kronecker(&id_n);
        let xo = big.lu().solve(&(-nalgebra::DVector::from_column_slice(c.as_slice()))).unwrap();
        let xo = DMatrix::from_column_slice(n, m, xo.as_slice());
        prop_assert!(rel(&x, &xo) < 1e-9);
    }

    #[test]
    fn lyapunov_solution_is_symmetric_and_matches_oracle(seed in any::<u64>(), n in 1usize..8) {
        let mut g = rng(seed);
        let a = stable(&mut g, n);
        let b = random_matrix(&mut g, n, n, 1.0);
        let q = &b * b.transpose();
        let p = solve_lyapunov(&a, &q).unwrap();
        prop_assert!(rel(p.as_matrix(), &lyapunov_kron_oracle(&a, &q)) < 1e-9);
        prop_assert!(symmetric_eigenvalues(&p).unwrap().min() > -1e-9 * p.norm());
    }

    #[test]
    fn duplication_maps_half_vectorisation(seed in any::<u64>(), n in 1usize..7) {
        let mut g = rng(seed);
        let s = random_symmetric(&mut g, n, 1.0);
        let d = duplication_matrix(n);
        prop_assert!((d * vech(s.as_matrix()) - vec(s.as_matrix())).norm() < 1e-14);
        prop_assert_eq!(unvech(&vech(s.as_matrix()), n).unwrap(), s);
    }

    #[test]
    fn symplectic_exponential_preserves_theta(seed in any::<u64>(), half in 1usize..4) {
        let mut g = rng(seed);
        let th = AntisymmetricMatrix::canonical(2 * half, 0.5).unwrap();
        let s = random_symplectic(&mut g, &th, 0.7);
        let chk = symplectic_residual(&s, &th).unwrap();
        prop_assert!(chk.residual < 1e-12);
        prop_assert!((chk.det - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spd_functions_are_consistent(seed in any::<u64>(), n in 1usize..7) {
        let mut g = rng(seed);
        let b = random_matrix(&mut g, n, n, 1.0);
        let x = SymmetricMatrix::symmetrize(&b * b.transpose() + DMatrix::identity(n, n));
        let r = spd_sqrt(&x).unwrap();
        prop_assert!(rel(&(r.as_matrix() * r.as_matrix()), x.as_matrix()) < 1e-12);
        let ri = spd_inv_sqrt(&x).unwrap();
        prop_assert!(rel(&(ri.as_matrix() * x.as_matrix() * ri.as_matrix()), &DMatrix::identity(n, n)) < 1e-12);
        prop_assert!((spd_logdet(&x).unwrap() - x.determinant().ln()).abs() < 1e-10);
        prop_assert!(rel(&(spd_inverse(&x).unwrap().as_matrix() * x.as_matrix()), &DMatrix::identity(n, n)) < 1e-12);
    }
}

#[test]
fn complex_sylvester_kronecker() {
    let mut g = rng(3);
    let a = stable(&mut g, 3).map(|x| Complex::new(x, 0.2 * x));
    let b = stable(&mut g, 2).map(|x| Complex::new(x, -0.1));
    let c = random_matrix(&mut g, 3, 2, 1.0).map(|x| Complex::new(x, 1.0));
    let x = solve_sylvester_kron(&a, &b, &c).unwrap();
    let r = &a * &x + &x * b.transpose() + &c;
    assert!(r.norm() < 1e-10 * c.norm());
}

#[test]
fn unstable_lyapunov_rejected() {
    let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 0.0, -1.0]);
    assert!(matches!(solve_lyapunov(&a, &DMatrix::identity(2, 2)), Err(Error::NotHurwitz { .. })));
}

#[test]
fn singular_sylvester_detected() {
    // spectra of α and -β overlap
    let a = DMatrix::from_element(1, 1, 1.0);
    let b = DMatrix::from_element(1, 1, -1.0);
    assert!(solve_sylvester(&a, &b, &DMatrix::from_element(1, 1, 1.0)).is_err());
}

#[test]
fn symmetric_validation() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1e-3, 1.0]);
    assert!(SymmetricMatrix::try_new(m, 1e-9).is_err());
    let t = AntisymmetricMatrix::canonical(4, 0.5).unwrap();
    // J ⊗ I orders the state as (q_1, q_2, p_1, p_2)
    assert_eq!(t[(0, 2)], 0.5);
    assert_eq!(t[(1, 3)], 0.5);
    assert_eq!(t[(2, 0)], -0.5);
    assert_eq!(t[(0, 1)], 0.0);
}

#[test]
fn vacuum_covariance_is_quantum_psd() {
    let th = AntisymmetricMatrix::canonical(2, 0.5).unwrap();
    let p = SymmetricMatrix::from_diagonal(&[0.5, 0.5]);
    assert!(quantum_psd_margin(&p, &th).unwrap().abs() < 1e-12);
    let q = SymmetricMatrix::from_diagonal(&[0.4, 0.4]);
    assert!(quantum_psd_margin(&q, &th).unwrap() < 0.0);
}

#[test]
fn kronecker_helpers() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let i = DMatrix::<f64>::identity(2, 2);
    assert_eq!(kron(&a, &i), a.kronecker(&i));
    assert_eq!(kron_sum(&a, &a), a.kronecker(&i) + i.kronecker(&a));
    assert!((rotation(0.3).determinant() - 1.0).abs() < 1e-15);
}
