//! Single-oscillator realisations and their series connection.

use std::ops::Range;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::matcore::{is_hurwitz, symplectic_residual, AntisymmetricMatrix, HurwitzCheck, SolverOptions, SymmetricMatrix};

pub type CMatrix = DMatrix<Complex<f64>>;

/// Commutation matrix, energy matrix and coupling matrix of one oscillator.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorParams {
    theta: AntisymmetricMatrix,
    r: SymmetricMatrix,
    m: DMatrix<f64>,
}

impl OscillatorParams {
    /// `theta` is n×n antisymmetric and nonsingular, `r` n×n symmetric, `m` has n columns.
    pub fn new(theta: AntisymmetricMatrix, r: SymmetricMatrix, m: DMatrix<f64>) -> Result<Self> {
        let n = r.order();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::dim("oscillator state dimension", "positive even", n));
        }
        if theta.order() != n {
            return Err(Error::dim("commutation matrix", n, theta.order()));
        }
        if m.ncols() != n {
            return Err(Error::dim("coupling matrix columns", n, m.ncols()));
        }
        if m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
            return Err(Error::dim("field channel count", "positive even", m.nrows()));
        }
        let sv = theta.as_matrix().clone().singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
        if !(lo > 1e-12 * hi) {
            return Err(Error::SingularTheta { index: 0 });
        }
        Ok(OscillatorParams { theta, r, m })
    }

    /// Uses the canonical commutation matrix `½ J ⊗ I_{n/2}`.
    pub fn with_canonical_theta(r: SymmetricMatrix, m: DMatrix<f64>) -> Result<Self> {
        let theta = AntisymmetricMatrix::canonical(r.order(), 0.5)?;
        Self::new(theta, r, m)
    }

    pub fn n(&self) -> usize {
        self.r.order()
    }

    pub fn channels(&self) -> usize {
        self.m.nrows()
    }

    pub fn theta(&self) -> &AntisymmetricMatrix {
        &self.theta
    }

    pub fn energy(&self) -> &SymmetricMatrix {
        &self.r
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Equivalent parameters after the change of variables `x ↦ S x`:
    /// `R ↦ S^{-T} R S^{-1}`, `M ↦ M S^{-1}`. `S` must preserve `Θ`.
    pub fn transformed(&self, s: &DMatrix<f64>) -> Result<Self> {
        let chk = symplectic_residual(s, &self.theta)?;
        if chk.residual > 1e-9 {
            return Err(Error::NotSymplectic {
                index: 0,
                residual: chk.residual,
            });
        }
        let si = s
            .clone()
            .try_inverse()
            .ok_or(Error::NotSymplectic { index: 0, residual: f64::INFINITY })?;
        Ok(OscillatorParams {
            theta: self.theta.clone(),
            r: SymmetricMatrix::symmetrize(si.transpose() * self.r.as_matrix() * &si),
            m: &self.m * si,
        })
    }
}

/// State-space triple `(A, B, C)` of one oscillator.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorRealization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Ito matrix of the field, `J ⊗ I_{m/2}`.
pub fn ito_matrix(m: usize) -> Result<AntisymmetricMatrix> {
    AntisymmetricMatrix::canonical(m, 1.0)
}

/// `A = 2Θ(R + M^T J M)`, `B = 2Θ M^T`, `C = 2 J M`.
pub fn oscillator_realization(p: &OscillatorParams, j: &AntisymmetricMatrix) -> Result<OscillatorRealization> {
    if j.order() != p.channels() {
        return Err(Error::dim("Ito matrix", p.channels(), j.order()));
    }
    let th = p.theta.as_matrix();
    let mt = p.m.transpose();
    Ok(OscillatorRealization {
        a: th * (p.r.as_matrix() + &mt * j.as_matrix() * &p.m) * 2.0,
        b: th * &mt * 2.0,
        c: j.as_matrix() * &p.m * 2.0,
    })
}

/// Relative residuals of `AΘ + ΘA^T + BJB^T = 0` and `ΘC^T + BJ = 0`.
pub fn pr_residuals(r: &OscillatorRealization, theta: &AntisymmetricMatrix, j: &AntisymmetricMatrix) -> (f64, f64) {
    let th = theta.as_matrix();
    let jm = j.as_matrix();
    let e1 = &r.a * th + th * r.a.transpose() + &r.b * jm * r.b.transpose();
    let e2 = th * r.c.transpose() + &r.b * jm;
    let s1 = 2.0 * r.a.norm() * th.norm() + r.b.norm().powi(2) * jm.norm();
    let s2 = th.norm() * r.c.norm() + r.b.norm() * jm.norm();
    (e1.norm() / s1.max(f64::MIN_POSITIVE), e2.norm() / s2.max(f64::MIN_POSITIVE))
}

/// `G(s) = I + C(sI - A)^{-1}B` for one realisation.
pub fn transfer_eval(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, s: Complex<f64>) -> Result<CMatrix> {
    let n = a.nrows();
    let ac = a.map(|x| Complex::new(x, 0.0));
    let res = CMatrix::identity(n, n) * s - ac;
    let inv = res
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularResolvent(format!("{s}")))?;
    let cc = c.map(|x| Complex::new(x, 0.0));
    let bc = b.map(|x| Complex::new(x, 0.0));
    let f = cc * inv * bc;
    Ok(CMatrix::identity(f.nrows(), f.ncols()) + f)
}

/// Series connection of oscillators driven by a common field.
#[derive(Clone, Debug)]
pub struct CascadeModel {
    oscillators: Vec<OscillatorParams>,
    realizations: Vec<OscillatorRealization>,
    j: AntisymmetricMatrix,
    offsets: Vec<usize>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    theta: AntisymmetricMatrix,
    r: SymmetricMatrix,
    mm: DMatrix<f64>,
    hurwitz: Vec<HurwitzCheck>,
}

impl CascadeModel {
    /// Builds the composite realisation. Stability of each block is recorded
    /// and can be enforced with [`CascadeModel::require_hurwitz`].
    pub fn assemble(oscillators: Vec<OscillatorParams>) -> Result<Self> {
        let first = oscillators
            .first()
            .ok_or_else(|| Error::InvalidArgument("a cascade needs at least one oscillator".into()))?;
        let m = first.channels();
        for (k, o) in oscillators.iter().enumerate() {
            if o.channels() != m {
                return Err(Error::dim(format!("oscillator {} field channels", k + 1), m, o.channels()));
            }
        }
        let j = ito_matrix(m)?;
        let mut offsets = vec![0];
        for o in &oscillators {
            offsets.push(offsets.last().unwrap() + o.n());
        }
        let n = *offsets.last().unwrap();
        let realizations = oscillators
            .iter()
            .map(|o| oscillator_realization(o, &j))
            .collect::<Result<Vec<_>>>()?;
        let opts = SolverOptions::default();
        let hurwitz = realizations
            .iter()
            .map(|r| is_hurwitz(&r.a, opts.hurwitz_tol))
            .collect::<Result<Vec<_>>>()?;

        let nn = oscillators.len();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        let mut c = DMatrix::zeros(m, n);
        let mut theta = DMatrix::zeros(n, n);
        let mut r = DMatrix::zeros(n, n);
        let mut mm = DMatrix::zeros(m, n);
        for k in 0..nn {
            let (ok, nk) = (offsets[k], oscillators[k].n());
            a.view_mut((ok, ok), (nk, nk)).copy_from(&realizations[k].a);
            b.view_mut((ok, 0), (nk, m)).copy_from(&realizations[k].b);
            c.view_mut((0, ok), (m, nk)).copy_from(&realizations[k].c);
            theta.view_mut((ok, ok), (nk, nk)).copy_from(oscillators[k].theta.as_matrix());
            r.view_mut((ok, ok), (nk, nk)).copy_from(oscillators[k].r.as_matrix());
            mm.view_mut((0, ok), (m, nk)).copy_from(&oscillators[k].m);
            for i in 0..nn {
                if i == k {
                    continue;
                }
                let (oi, ni) = (offsets[i], oscillators[i].n());
                let cross = oscillators[i].m.transpose() * j.as_matrix() * &oscillators[k].m;
                let sign = if i > k { 1.0 } else { -1.0 };
                r.view_mut((oi, ok), (ni, nk)).copy_from(&(cross * sign));
                if i > k {
                    a.view_mut((oi, ok), (ni, nk)).copy_from(&(&realizations[i].b * &realizations[k].c));
                }
            }
        }
        Ok(CascadeModel {
            oscillators,
            realizations,
            j,
            offsets,
            a,
            b,
            c,
            theta: AntisymmetricMatrix::antisymmetrize(theta),
            r: SymmetricMatrix::symmetrize(r),
            mm,
            hurwitz,
        })
    }

    /// Fails with `NotHurwitz` naming the first unstable oscillator (1-based).
    pub fn require_hurwitz(&self) -> Result<()> {
        for (k, h) in self.hurwitz.iter().enumerate() {
            if !h.hurwitz {
                return Err(Error::NotHurwitz {
                    what: format!("oscillator {}", k + 1),
                    max_real: h.max_real,
                });
            }
        }
        Ok(())
    }

    pub fn hurwitz_checks(&self) -> &[HurwitzCheck] {
        &self.hurwitz
    }

    pub fn len(&self) -> usize {
        self.oscillators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oscillators.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn channels(&self) -> usize {
        self.j.order()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.oscillators.iter().map(|o| o.n()).collect()
    }

    /// Block offsets, `N + 1` entries.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// State indices of oscillator `k` (0-based).
    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn oscillators(&self) -> &[OscillatorParams] {
        &self.oscillators
    }

    pub fn oscillator(&self, k: usize) -> &OscillatorParams {
        &self.oscillators[k]
    }

    pub fn realization(&self, k: usize) -> &OscillatorRealization {
        &self.realizations[k]
    }

    pub fn ito(&self) -> &AntisymmetricMatrix {
        &self.j
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn theta(&self) -> &AntisymmetricMatrix {
        &self.theta
    }

    /// Composite energy matrix.
    pub fn energy(&self) -> &SymmetricMatrix {
        &self.r
    }

    /// Composite coupling matrix `[M_1 … M_N]`.
    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.mm
    }

    /// `|A - 2Θ(R + M^T J M)|`, zero up to rounding for a consistent assembly.
    pub fn consistency_residual(&self) -> f64 {
        let rebuilt = self.theta.as_matrix() * (self.r.as_matrix() + self.mm.transpose() * self.j.as_matrix() * &self.mm) * 2.0;
        (&self.a - rebuilt).norm()
    }

    /// Cascade with oscillator `k` replaced.
    pub fn with_oscillator(&self, k: usize, p: OscillatorParams) -> Result<Self> {
        let mut osc = self.oscillators.clone();
        osc[k] = p;
        Self::assemble(osc)
    }

    /// Applies one symplectic change of variables per oscillator.
    pub fn transformed(&self, s: &[DMatrix<f64>]) -> Result<Self> {
        if s.len() != self.len() {
            return Err(Error::dim("transform list", self.len(), s.len()));
        }
        let osc = self
            .oscillators
            .iter()
            .zip(s)
            .enumerate()
            .map(|(k, (o, sk))| o.transformed(sk).map_err(|e| reindex(e, k)))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(osc)
    }

    /// Composite `G(s) = I + 𝒞(sI - 𝒜)^{-1}ℬ`.
    pub fn transfer(&self, s: Complex<f64>) -> Result<CMatrix> {
        transfer_eval(&self.a, &self.b, &self.c, s)
    }

    /// Product `G_N(s) ⋯ G_1(s)` of the individual transfer functions.
    pub fn transfer_product(&self, s: Complex<f64>) -> Result<CMatrix> {
        let m = self.channels();
        let mut g = CMatrix::identity(m, m);
        for r in &self.realizations {
            g = transfer_eval(&r.a, &r.b, &r.c, s)? * g;
        }
        Ok(g)
    }
}

/// Attaches a 0-based oscillator index to index-carrying errors.
pub(crate) fn reindex(e: Error, k: usize) -> Error {
    match e {
        Error::SingularTheta { .. } => Error::SingularTheta { index: k + 1 },
        Error::NotSymplectic { residual, .. } => Error::NotSymplectic { index: k + 1, residual },
        other => other,
    }
}
