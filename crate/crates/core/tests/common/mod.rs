//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};
use qcascade::cascade::{CascadeModel, OscillatorParams};
use qcascade::matcore::{symplectic_exp, AntisymmetricMatrix, SymmetricMatrix};
use qcascade::spec_file::{parse_spec, CascadeSpec, EXAMPLE_SPEC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type C64 = Complex<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SymmetricMatrix {
    SymmetricMatrix::symmetrize(random_matrix(rng, n, n, scale))
}

pub fn example_spec() -> CascadeSpec {
    parse_spec(EXAMPLE_SPEC).unwrap()
}

pub fn example_cascade() -> CascadeModel {
    example_spec().cascade().unwrap()
}

/// Oscillator with `n` state variables and `m` channels whose drift matrix has
/// spectral abscissa below `-margin`. Drawn by rejection.
pub fn random_oscillator(rng: &mut ChaCha8Rng, n: usize, m: usize, margin: f64) -> OscillatorParams {
    loop {
        let r = random_symmetric(rng, n, 0.6);
        let mm = random_matrix(rng, m, n, 0.8);
        let p = OscillatorParams::with_canonical_theta(r, mm).unwrap();
        let c = CascadeModel::assemble(vec![p.clone()]).unwrap();
        if c.hurwitz_checks()[0].max_real < -margin {
            return p;
        }
    }
}

pub fn random_cascade(rng: &mut ChaCha8Rng, count: usize, n: usize, m: usize) -> CascadeModel {
    let osc = (0..count).map(|_| random_oscillator(rng, n, m, 0.1)).collect();
    CascadeModel::assemble(osc).unwrap()
}

/// Random cascade with `N ≤ 4`, `n_k = 2`, `m ∈ {2, 4, 6}`.
pub fn random_corpus_cascade(rng: &mut ChaCha8Rng) -> CascadeModel {
    let count = rng.random_range(1..=4);
    let m = 2 * rng.random_range(1..=3);
    random_cascade(rng, count, 2, m)
}

/// `exp(ΘH)` with a random symmetric `H` of size `scale`.
pub fn random_symplectic(rng: &mut ChaCha8Rng, theta: &AntisymmetricMatrix, scale: f64) -> DMatrix<f64> {
    let h = random_symmetric(rng, theta.order(), scale);
    symplectic_exp(theta, &h)
}

/// `𝒫` from the Kronecker-vectorised Lyapunov equation, solved by dense LU.
pub fn lyapunov_kron_oracle(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let big = id.kronecker(a) + a.kronecker(&id);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = big.lu().solve(&rhs).expect("nonsingular Kronecker sum");
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    (&p + p.transpose()) * 0.5
}

pub fn covariance_oracle(c: &CascadeModel) -> DMatrix<f64> {
    lyapunov_kron_oracle(c.a(), &(c.b() * c.b().transpose()))
}

/// `ln det 𝒫` with `𝒫` from the Kronecker oracle and the determinant from LU.
pub fn logdet_oracle(c: &CascadeModel) -> f64 {
    covariance_oracle(c).determinant().ln()
}

/// `(2π)^{-1} ∫ F(iω)F(iω)^* dω` with `F(s) = (sI - A)^{-1}B`, integrated by
/// adaptive Simpson after the substitution `ω = tan θ`.
pub fn covariance_quadrature(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let bb = b * b.transpose();
    let ac = a.map(|x| C64::new(x, 0.0));
    let bc = b.map(|x| C64::new(x, 0.0));
    let f = |t: f64| -> DMatrix<f64> {
        if (t.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-15 {
            return bb.clone();
        }
        let w = t.tan();
        let res = (DMatrix::<C64>::identity(n, n) * C64::new(0.0, w) - &ac).try_inverse().unwrap();
        let ff = &res * &bc;
        let g = &ff * ff.adjoint();
        g.map(|z| z.re) * (1.0 + w * w)
    };
    let lo = -std::f64::consts::FRAC_PI_2;
    let hi = std::f64::consts::FRAC_PI_2;
    let (fa, fm, fb) = (f(lo), f(0.0), f(hi));
    let whole = simpson(lo, hi, &fa, &fm, &fb);
    let total = adaptive_simpson(&f, lo, hi, fa, fm, fb, whole, tol, 50);
    total / (2.0 * std::f64::consts::PI)
}

fn simpson(a: f64, b: f64, fa: &DMatrix<f64>, fm: &DMatrix<f64>, fb: &DMatrix<f64>) -> DMatrix<f64> {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> DMatrix<f64>,
    a: f64,
    b: f64,
    fa: DMatrix<f64>,
    fm: DMatrix<f64>,
    fb: DMatrix<f64>,
    whole: DMatrix<f64>,
    tol: f64,
    depth: usize,
) -> DMatrix<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let err = (&left + &right - &whole).norm();
    if depth == 0 || err <= 15.0 * tol {
        return &left + &right + (&left + &right - whole) / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm.clone(), left, tol / 2.0, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn rel(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).norm() / y.norm().max(f64::MIN_POSITIVE)
}

pub fn crel(x: &DMatrix<C64>, y: &DMatrix<C64>) -> f64 {
    (x - y).norm() / y.norm().max(f64::MIN_POSITIVE)
}

/// Central differences of [`logdet_oracle`] with respect to every entry of
/// `R_k` (symmetric pairs moved together, derivative halved off the diagonal)
/// and of `M_k`.
pub fn gradient_fd_independent(c: &CascadeModel, h: f64) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let (mut rho, mut mu) = (vec![], vec![]);
    for k in 0..c.len() {
        let o = c.oscillator(k);
        let (n, m) = (o.n(), o.channels());
        let eval = |dr: &DMatrix<f64>, dm: &DMatrix<f64>| {
            let p = OscillatorParams::new(
                o.theta().clone(),
                SymmetricMatrix::symmetrize(o.energy().as_matrix() + dr),
                o.coupling() + dm,
            )
            .unwrap();
            logdet_oracle(&c.with_oscillator(k, p).unwrap())
        };
        let zr = DMatrix::zeros(n, n);
        let zm = DMatrix::zeros(m, n);
        let mut r = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut d = DMatrix::zeros(n, n);
                d[(i, j)] = h;
                d[(j, i)] = h;
                let g = (eval(&d, &zm) - eval(&(-&d), &zm)) / (2.0 * h);
                let g = if i == j { g } else { 0.5 * g };
                r[(i, j)] = g;
                r[(j, i)] = g;
            }
        }
        let mut mg = DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut d = DMatrix::zeros(m, n);
                d[(i, j)] = h;
                mg[(i, j)] = (eval(&zr, &d) - eval(&zr, &(-&d))) / (2.0 * h);
            }
        }
        rho.push(r);
        mu.push(mg);
    }
    (rho, mu)
}

/// Relative distance between stacked gradient lists.
pub fn gradient_distance(a: (&[DMatrix<f64>], &[DMatrix<f64>]), b: (&[DMatrix<f64>], &[DMatrix<f64>])) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.0.iter().zip(b.0).chain(a.1.iter().zip(b.1)) {
        num += (x - y).norm_squared();
        den += y.norm_squared();
    }
    (num / den).sqrt()
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut o = 0;
    for b in blocks {
        out.view_mut((o, o), (b.nrows(), b.ncols())).copy_from(b);
        o += b.nrows();
    }
    out
}
