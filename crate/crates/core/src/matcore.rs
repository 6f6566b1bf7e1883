//! Dense linear-algebra kernels: Sylvester/Lyapunov solvers, half-vectorisation,
//! symmetric matrix functions and the structural checks used throughout.

use std::ops::Deref;

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest order handled by the dense Kronecker solver in [`solve_sylvester`].
pub const KRONECKER_MAX_ORDER: usize = 8;

const EIG_EPS: f64 = 1e-15;

/// Tolerances shared by the solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative residual accepted after a Sylvester solve.
    pub residual_tol: f64,
    /// Margin used by the Hurwitz check.
    pub hurwitz_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            residual_tol: 1e-9,
            hurwitz_tol: 1e-9,
        }
    }
}

/// Real symmetric matrix. Construction symmetrises or validates the input.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Replaces `m` by `(m + m^T)/2`. Panics if `m` is not square.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize: matrix must be square");
        let t = m.transpose();
        SymmetricMatrix((m + t) * 0.5)
    }

    /// Accepts `m` when its antisymmetric part is below `tol` relative to its size.
    pub fn try_new(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("symmetric matrix", "square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let skew = (&m - m.transpose()).norm() * 0.5;
        if skew > tol * m.norm().max(1.0) {
            return Err(Error::Schema {
                path: "matrix".into(),
                message: format!("not symmetric (antisymmetric part {skew:.3e})"),
            });
        }
        Ok(Self::symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        SymmetricMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Congruence `S X S^T`.
    pub fn congruence(&self, s: &DMatrix<f64>) -> Self {
        Self::symmetrize(s * &self.0 * s.transpose())
    }
}

impl Deref for SymmetricMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl From<SymmetricMatrix> for DMatrix<f64> {
    fn from(s: SymmetricMatrix) -> Self {
        s.0
    }
}

/// Real antisymmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AntisymmetricMatrix(DMatrix<f64>);

impl AntisymmetricMatrix {
    /// Replaces `m` by `(m - m^T)/2`. Panics if `m` is not square.
    pub fn antisymmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "antisymmetrize: matrix must be square");
        let t = m.transpose();
        AntisymmetricMatrix((m - t) * 0.5)
    }

    pub fn try_new(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim("antisymmetric matrix", "square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let sym = (&m + m.transpose()).norm() * 0.5;
        if sym > tol * m.norm().max(1.0) {
            return Err(Error::Schema {
                path: "matrix".into(),
                message: format!("not antisymmetric (symmetric part {sym:.3e})"),
            });
        }
        Ok(Self::antisymmetrize(m))
    }

    /// `c (J ⊗ I_{r/2})` with `J = [[0, 1], [-1, 0]]`; `r` must be even.
    pub fn canonical(r: usize, c: f64) -> Result<Self> {
        if !r.is_multiple_of(2) {
            return Err(Error::dim("canonical antisymmetric matrix", "even order", r));
        }
        let h = r / 2;
        let mut m = DMatrix::zeros(r, r);
        for i in 0..h {
            m[(i, h + i)] = c;
            m[(h + i, i)] = -c;
        }
        Ok(AntisymmetricMatrix(m))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for AntisymmetricMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Frobenius inner product.
pub fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Column-major vectorisation.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Column-wise lower triangle of a square matrix.
pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let r = m.nrows();
    let mut out = Vec::with_capacity(r * (r + 1) / 2);
    for j in 0..r {
        for i in j..r {
            out.push(m[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vech`] onto symmetric matrices.
pub fn unvech(v: &DVector<f64>, r: usize) -> Result<SymmetricMatrix> {
    if v.len() != r * (r + 1) / 2 {
        return Err(Error::dim("unvech", r * (r + 1) / 2, v.len()));
    }
    let mut m = DMatrix::zeros(r, r);
    let mut p = 0;
    for j in 0..r {
        for i in j..r {
            m[(i, j)] = v[p];
            m[(j, i)] = v[p];
            p += 1;
        }
    }
    Ok(SymmetricMatrix(m))
}

/// Duplication matrix `D` with `vec(X) = D vech(X)` for symmetric `X` of order `r`.
pub fn duplication_matrix(r: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(r * r, r * (r + 1) / 2);
    let mut p = 0;
    for j in 0..r {
        for i in j..r {
            d[(i + j * r, p)] = 1.0;
            d[(j + i * r, p)] = 1.0;
            p += 1;
        }
    }
    d
}

pub fn kron<T: ComplexField>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

/// `a ⊗ I + I ⊗ b`.
pub fn kron_sum<T: ComplexField>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let ib = DMatrix::<T>::identity(b.nrows(), b.nrows());
    let ia = DMatrix::<T>::identity(a.nrows(), a.nrows());
    a.kronecker(&ib) + ia.kronecker(b)
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

fn check_sylvester_dims<T: ComplexField>(alpha: &DMatrix<T>, beta: &DMatrix<T>, gamma: &DMatrix<T>) -> Result<()> {
    if !alpha.is_square() || !beta.is_square() {
        return Err(Error::dim("Sylvester coefficients", "square", "non-square"));
    }
    if gamma.nrows() != alpha.nrows() || gamma.ncols() != beta.nrows() {
        return Err(Error::dim(
            "Sylvester right-hand side",
            format!("{}x{}", alpha.nrows(), beta.nrows()),
            format!("{}x{}", gamma.nrows(), gamma.ncols()),
        ));
    }
    Ok(())
}

fn check_residual<T: ComplexField<RealField = f64>>(
    alpha: &DMatrix<T>,
    beta: &DMatrix<T>,
    gamma: &DMatrix<T>,
    x: &DMatrix<T>,
    tol: f64,
) -> Result<()> {
    let res = (alpha * x + x * beta.transpose() + gamma).norm();
    let scale = (alpha.norm() + beta.norm()) * x.norm() + gamma.norm();
    if !res.is_finite() || res > tol * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SolverSingular(format!("relative residual {:.3e}", res / scale)));
    }
    Ok(())
}

/// Solves `alpha X + X beta^T + gamma = 0` through the vectorised Kronecker system.
/// Works over real and complex scalars; cost grows as `(n p)^3`.
pub fn solve_sylvester_kron<T: ComplexField<RealField = f64>>(
    alpha: &DMatrix<T>,
    beta: &DMatrix<T>,
    gamma: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_sylvester_dims(alpha, beta, gamma)?;
    let (n, p) = (alpha.nrows(), beta.nrows());
    let big = kron_sum(beta, alpha);
    let rhs = -DVector::from_column_slice(gamma.as_slice());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SolverSingular("Kronecker system is singular".into()))?;
    let x = DMatrix::from_column_slice(n, p, sol.as_slice());
    check_residual(alpha, beta, gamma, &x, SolverOptions::default().residual_tol)?;
    Ok(x)
}

fn real_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    Schur::try_new(m.clone(), EIG_EPS, 10_000 * n.max(1))
        .map(|s| s.unpack())
        .ok_or_else(|| Error::EigFailure(format!("real Schur form of order {n}")))
}

fn is_block_start(t: &DMatrix<f64>, j: usize) -> bool {
    // true when rows/cols (j, j+1) form a 2x2 diagonal block
    j + 1 < t.nrows() && t[(j + 1, j)].abs() > 1e-14 * (t[(j, j)].abs() + t[(j + 1, j + 1)].abs()).max(1e-300)
}

/// Real Bartels–Stewart solver for `alpha X + X beta^T + gamma = 0`.
pub fn solve_sylvester_schur(alpha: &DMatrix<f64>, beta: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_sylvester_dims(alpha, beta, gamma)?;
    let (n, p) = (alpha.nrows(), beta.nrows());
    if n == 0 || p == 0 {
        return Ok(DMatrix::zeros(n, p));
    }
    let (qa, ta) = real_schur(alpha)?;
    let (qb, tb) = real_schur(beta)?;
    // T_a Y + Y T_b^T = F
    let f = -(qa.transpose() * gamma * &qb);
    let mut y = DMatrix::<f64>::zeros(n, p);
    let ident = DMatrix::<f64>::identity(n, n);

    // walk the diagonal blocks of T_b from the bottom up
    let mut blocks = Vec::new();
    let mut j = 0;
    while j < p {
        if is_block_start(&tb, j) {
            blocks.push((j, 2));
            j += 2;
        } else {
            blocks.push((j, 1));
            j += 1;
        }
    }
    for &(j, w) in blocks.iter().rev() {
        let mut rhs = DMatrix::<f64>::zeros(n, w);
        for c in 0..w {
            let mut col = f.column(j + c).clone_owned();
            for i in (j + w)..p {
                col -= y.column(i) * tb[(j + c, i)];
            }
            rhs.set_column(c, &col);
        }
        if w == 1 {
            let lhs = &ta + &ident * tb[(j, j)];
            let sol = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SolverSingular("shifted Schur factor is singular".into()))?;
            y.set_column(j, &sol.column(0));
        } else {
            let mut lhs = DMatrix::<f64>::zeros(2 * n, 2 * n);
            lhs.view_mut((0, 0), (n, n)).copy_from(&(&ta + &ident * tb[(j, j)]));
            lhs.view_mut((0, n), (n, n)).copy_from(&(&ident * tb[(j, j + 1)]));
            lhs.view_mut((n, 0), (n, n)).copy_from(&(&ident * tb[(j + 1, j)]));
            lhs.view_mut((n, n), (n, n)).copy_from(&(&ta + &ident * tb[(j + 1, j + 1)]));
            let stacked = DVector::from_column_slice(rhs.as_slice());
            let sol = lhs
                .lu()
                .solve(&stacked)
                .ok_or_else(|| Error::SolverSingular("2x2 Schur block system is singular".into()))?;
            y.set_column(j, &sol.rows(0, n));
            y.set_column(j + 1, &sol.rows(n, n));
        }
    }
    let x = &qa * y * qb.transpose();
    check_residual(alpha, beta, gamma, &x, SolverOptions::default().residual_tol)?;
    Ok(x)
}

/// Solves `alpha X + X beta^T + gamma = 0`, dispatching on problem size.
pub fn solve_sylvester(alpha: &DMatrix<f64>, beta: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if alpha.nrows().max(beta.nrows()) <= KRONECKER_MAX_ORDER {
        solve_sylvester_kron(alpha, beta, gamma)
    } else {
        solve_sylvester_schur(alpha, beta, gamma)
    }
}

/// Solves `A P + P A^T + Q = 0` for Hurwitz `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let h = is_hurwitz(a, SolverOptions::default().hurwitz_tol)?;
    if !h.hurwitz {
        return Err(Error::NotHurwitz {
            what: "Lyapunov coefficient".into(),
            max_real: h.max_real,
        });
    }
    let q = sym(q);
    Ok(SymmetricMatrix::symmetrize(solve_sylvester(a, a, &q)?))
}

/// Outcome of a Hurwitz test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HurwitzCheck {
    pub hurwitz: bool,
    pub max_real: f64,
}

/// Largest real part of the spectrum of `a`; Hurwitz when it is below `-tol (1 + |a|)`.
pub fn is_hurwitz(a: &DMatrix<f64>, tol: f64) -> Result<HurwitzCheck> {
    if !a.is_square() {
        return Err(Error::dim("Hurwitz check", "square", format!("{}x{}", a.nrows(), a.ncols())));
    }
    let max_real = spectral_abscissa(a)?;
    Ok(HurwitzCheck {
        hurwitz: max_real < -tol * (1.0 + a.norm()),
        max_real,
    })
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let n = a.nrows();
    if let Some(s) = Schur::try_new(a.clone(), EIG_EPS, 10_000 * n) {
        return Ok(s.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
    }
    // repeated eigenvalues can stall the real iteration; the complex one copes
    let c = a.map(|x| nalgebra::Complex::new(x, 0.0));
    let eig = Schur::try_new(c, EIG_EPS, 10_000 * n)
        .and_then(|s| s.eigenvalues())
        .ok_or_else(|| Error::EigFailure(format!("spectrum of order {n}")))?;
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn symmetric_matrix_function(x: &SymmetricMatrix, f: impl Fn(f64) -> f64) -> Result<SymmetricMatrix> {
    let n = x.order();
    let e = SymmetricEigen::try_new(x.as_matrix().clone(), EIG_EPS, 10_000 * n.max(1))
        .ok_or_else(|| Error::EigFailure(format!("symmetric eigendecomposition of order {n}")))?;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    Ok(SymmetricMatrix::symmetrize(&e.eigenvectors * d * e.eigenvectors.transpose()))
}

pub fn symmetric_eigenvalues(x: &SymmetricMatrix) -> Result<DVector<f64>> {
    let n = x.order();
    SymmetricEigen::try_new(x.as_matrix().clone(), EIG_EPS, 10_000 * n.max(1))
        .map(|e| e.eigenvalues)
        .ok_or_else(|| Error::EigFailure(format!("symmetric eigendecomposition of order {n}")))
}

fn min_eigenvalue(x: &SymmetricMatrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(x)?.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn require_positive(x: &SymmetricMatrix, what: &str) -> Result<()> {
    let lo = min_eigenvalue(x)?;
    if lo <= 1e-14 * x.norm() {
        return Err(Error::NonPositive(format!("{what} (smallest eigenvalue {lo:.3e})")));
    }
    Ok(())
}

/// Principal square root of a positive definite matrix.
pub fn spd_sqrt(x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    require_positive(x, "square root argument")?;
    symmetric_matrix_function(x, f64::sqrt)
}

/// `x^{-1/2}` for positive definite `x`.
pub fn spd_inv_sqrt(x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    require_positive(x, "inverse square root argument")?;
    symmetric_matrix_function(x, |t| 1.0 / t.sqrt())
}

/// `ln det x` from the Cholesky pivots.
pub fn spd_logdet(x: &SymmetricMatrix) -> Result<f64> {
    let c = Cholesky::new(x.as_matrix().clone())
        .ok_or_else(|| Error::NonPositive(format!("Cholesky factorisation of order {} failed", x.order())))?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn spd_inverse(x: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let c = Cholesky::new(x.as_matrix().clone())
        .ok_or_else(|| Error::NonPositive(format!("Cholesky factorisation of order {} failed", x.order())))?;
    Ok(SymmetricMatrix::symmetrize(c.inverse()))
}

/// Residual of `S Θ S^T = Θ` together with `det S`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymplecticCheck {
    pub residual: f64,
    pub det: f64,
}

pub fn symplectic_residual(s: &DMatrix<f64>, theta: &AntisymmetricMatrix) -> Result<SymplecticCheck> {
    if s.shape() != theta.shape() {
        return Err(Error::dim(
            "symplectic check",
            format!("{}x{}", theta.nrows(), theta.ncols()),
            format!("{}x{}", s.nrows(), s.ncols()),
        ));
    }
    let r = s * theta.as_matrix() * s.transpose() - theta.as_matrix();
    Ok(SymplecticCheck {
        residual: r.norm() / theta.norm(),
        det: s.determinant(),
    })
}

/// `exp(Θ H)` for symmetric `H`; always preserves `Θ`.
pub fn symplectic_exp(theta: &AntisymmetricMatrix, h: &SymmetricMatrix) -> DMatrix<f64> {
    (theta.as_matrix() * h.as_matrix()).exp()
}

/// Smallest eigenvalue of the Hermitian matrix `P + iΘ`, via its real embedding.
pub fn quantum_psd_margin(p: &SymmetricMatrix, theta: &AntisymmetricMatrix) -> Result<f64> {
    let n = p.order();
    if theta.order() != n {
        return Err(Error::dim("quantum positivity check", n, theta.order()));
    }
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    e.view_mut((0, 0), (n, n)).copy_from(p.as_matrix());
    e.view_mut((n, n), (n, n)).copy_from(p.as_matrix());
    e.view_mut((0, n), (n, n)).copy_from(&(-theta.as_matrix()));
    e.view_mut((n, 0), (n, n)).copy_from(theta.as_matrix());
    min_eigenvalue(&SymmetricMatrix::symmetrize(e))
}

/// Planar rotation `[[cos φ, -sin φ], [sin φ, cos φ]]`.
pub fn rotation(phi: f64) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}
