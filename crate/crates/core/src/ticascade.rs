//! Infinite cascades of identical oscillators: z-transformed state-space family,
//! cross-covariance generating function, H2/H∞ norms and the covariance growth bound.

use nalgebra::{Complex, DMatrix};

use crate::cascade::{ito_matrix, oscillator_realization, transfer_eval, CMatrix, CascadeModel, OscillatorParams, OscillatorRealization};
use crate::error::{Error, Result};
use crate::matcore::{kron_sum, solve_lyapunov, solve_sylvester_kron, AntisymmetricMatrix, SymmetricMatrix};
use crate::steadystate::invariant_covariance_direct;

type C64 = Complex<f64>;

fn cx(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest real part of the spectrum of a complex matrix.
fn complex_abscissa(m: &CMatrix) -> Result<f64> {
    let n = m.nrows();
    let eig = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000 * n.max(1))
        .and_then(|s| s.eigenvalues())
        .ok_or_else(|| Error::EigFailure(format!("complex spectrum of order {n}")))?;
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Base oscillator of a translation-invariant cascade.
#[derive(Clone, Debug)]
pub struct TIModel {
    pub params: OscillatorParams,
    pub realization: OscillatorRealization,
    pub j: AntisymmetricMatrix,
    /// Controllability Gramian of `(A, B)`.
    pub gramian: SymmetricMatrix,
}

impl TIModel {
    pub fn new(params: OscillatorParams) -> Result<Self> {
        let j = ito_matrix(params.channels())?;
        let realization = oscillator_realization(&params, &j)?;
        let gramian = solve_lyapunov(&realization.a, &(&realization.b * realization.b.transpose()))?;
        Ok(TIModel {
            params,
            realization,
            j,
            gramian,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn channels(&self) -> usize {
        self.params.channels()
    }

    /// `F(s) = (sI - A)^{-1} B`.
    pub fn f(&self, s: C64) -> Result<CMatrix> {
        let n = self.n();
        let res = CMatrix::identity(n, n) * s - cx(&self.realization.a);
        let inv = res.try_inverse().ok_or_else(|| Error::SingularResolvent(format!("{s}")))?;
        Ok(inv * cx(&self.realization.b))
    }

    /// `G(s) = I + C(sI - A)^{-1} B`.
    pub fn g(&self, s: C64) -> Result<CMatrix> {
        let r = &self.realization;
        transfer_eval(&r.a, &r.b, &r.c, s)
    }
}

/// State-space matrices of the z-transformed process.
#[derive(Clone, Debug)]
pub struct ZPoint {
    pub z: C64,
    pub a_z: CMatrix,
    pub b_z: CMatrix,
    pub c_z: CMatrix,
    pub d_z: CMatrix,
    /// Whether `𝒜_z` is Hurwitz, i.e. `z` lies in the stability set.
    pub hurwitz: bool,
    pub max_real: f64,
}

/// `𝒜_z = A + BC/(z-1)`, `ℬ_z = B/(z-1)`, `𝒞_z = zC/(z-1)`, `𝒟_z = zI/(z-1)`.
pub fn z_domain_matrices(model: &TIModel, z: C64) -> Result<ZPoint> {
    if (z - 1.0).norm() <= 1e-12 {
        return Err(Error::ZAtOne);
    }
    let r = &model.realization;
    let w = C64::new(1.0, 0.0) / (z - 1.0);
    let a_z = cx(&r.a) + cx(&(&r.b * &r.c)) * w;
    let b_z = cx(&r.b) * w;
    let c_z = cx(&r.c) * (z * w);
    let m = model.channels();
    let d_z = CMatrix::identity(m, m) * (z * w);
    let max_real = complex_abscissa(&a_z)?;
    Ok(ZPoint {
        z,
        hurwitz: max_real < -1e-9 * (1.0 + a_z.norm()),
        max_real,
        a_z,
        b_z,
        c_z,
        d_z,
    })
}

/// Relative residual of `(𝒜_zΘ + Θ𝒜_v^T)/(zv-1) + ℬ_zJℬ_v^T = 0`.
pub fn z_pr_residual(model: &TIModel, z: C64, v: C64) -> Result<f64> {
    let pz = z_domain_matrices(model, z)?;
    let pv = z_domain_matrices(model, v)?;
    let th = cx(model.params.theta().as_matrix());
    let j = cx(model.j.as_matrix());
    let lhs = (&pz.a_z * &th + &th * pv.a_z.transpose()) / (z * v - 1.0);
    let rhs = &pz.b_z * &j * pv.b_z.transpose();
    Ok((&lhs + &rhs).norm() / (lhs.norm() + rhs.norm()).max(f64::MIN_POSITIVE))
}

/// `Ω = I + iJ`.
fn omega(j: &AntisymmetricMatrix) -> CMatrix {
    let m = j.order();
    CMatrix::identity(m, m) + j.as_matrix().map(|x| C64::new(0.0, x))
}

/// Cross-covariance generating function at `(z, v)`.
#[derive(Clone, Debug)]
pub struct CrossCovariance {
    /// Solution with forcing `ℬ_zΩℬ_v^T`: `Σ z^{-j}v^{-k}(P_jk + iδ_jkΘ)`.
    pub quantum: CMatrix,
    /// Solution with forcing `ℬ_zℬ_v^T`: `Σ z^{-j}v^{-k}P_jk`.
    pub real_part: CMatrix,
}

fn check_pair(model: &TIModel, z: C64, v: C64) -> Result<(ZPoint, ZPoint)> {
    if z.norm() * v.norm() <= 1.0 {
        return Err(Error::NotInStabilitySet(format!("|z||v| = {} must exceed 1", z.norm() * v.norm())));
    }
    let pz = z_domain_matrices(model, z)?;
    if !pz.hurwitz {
        return Err(Error::NotInStabilitySet(format!("{z}")));
    }
    let pv = z_domain_matrices(model, v)?;
    if !pv.hurwitz {
        return Err(Error::NotInStabilitySet(format!("{v}")));
    }
    Ok((pz, pv))
}

/// Solves `𝒜_z𝒫 + 𝒫𝒜_v^T + ℬ_zΩℬ_v^T = 0` (and the `Ω = I` companion).
pub fn cross_covariance(model: &TIModel, z: C64, v: C64) -> Result<CrossCovariance> {
    let (pz, pv) = check_pair(model, z, v)?;
    let om = omega(&model.j);
    let fq = &pz.b_z * om * pv.b_z.transpose();
    let fr = &pz.b_z * pv.b_z.transpose();
    Ok(CrossCovariance {
        quantum: solve_sylvester_kron(&pz.a_z, &pv.a_z, &fq)?,
        real_part: solve_sylvester_kron(&pz.a_z, &pv.a_z, &fr)?,
    })
}

/// Rational form in `z` and `v` through `K = (A⊕A)^{-1}((BC)⊗I)` and `L = (A⊕A)^{-1}(I⊗(BC))`.
pub fn cross_covariance_generating(model: &TIModel, z: C64, v: C64) -> Result<CrossCovariance> {
    check_pair(model, z, v)?;
    let r = &model.realization;
    let n = model.n();
    let a = cx(&r.a);
    let bc = cx(&(&r.b * &r.c));
    let ident = CMatrix::identity(n, n);
    let ksum = kron_sum(&a, &a)
        .try_inverse()
        .ok_or_else(|| Error::SolverSingular("A ⊕ A".into()))?;
    let k = &ksum * bc.kronecker(&ident);
    let l = &ksum * ident.kronecker(&bc);
    let one = C64::new(1.0, 0.0);
    let mid = CMatrix::identity(n * n, n * n) + k * (one / (v - 1.0)) + l * (one / (z - 1.0));
    let mid_lu = mid.lu();
    let scale = -one / ((z - 1.0) * (v - 1.0));
    let b = cx(&r.b);
    let solve = |forcing: CMatrix| -> Result<CMatrix> {
        let rhs = &ksum * nalgebra::DVector::from_column_slice(forcing.as_slice());
        let x = mid_lu
            .solve(&rhs)
            .ok_or_else(|| Error::SolverSingular("generating-function resolvent".into()))?;
        Ok(CMatrix::from_column_slice(n, n, (x * scale).as_slice()))
    };
    Ok(CrossCovariance {
        quantum: solve(&b * omega(&model.j) * b.transpose())?,
        real_part: solve(&b * b.transpose())?,
    })
}

/// Truncated double series over a finite cascade of `depth` copies of the base oscillator.
pub fn cross_covariance_series(model: &TIModel, z: C64, v: C64, depth: usize) -> Result<CrossCovariance> {
    if depth == 0 {
        return Err(Error::InvalidArgument("series depth must be positive".into()));
    }
    let c = CascadeModel::assemble(vec![model.params.clone(); depth])?;
    let p = invariant_covariance_direct(&c)?;
    let n = model.n();
    let mut real_part = CMatrix::zeros(n, n);
    let mut zp = vec![C64::new(1.0, 0.0); depth + 1];
    let mut vp = vec![C64::new(1.0, 0.0); depth + 1];
    for i in 1..=depth {
        zp[i] = zp[i - 1] / z;
        vp[i] = vp[i - 1] / v;
    }
    for jj in 0..depth {
        for kk in 0..depth {
            let blk = p.view((jj * n, kk * n), (n, n)).clone_owned();
            real_part += cx(&blk) * (zp[jj + 1] * vp[kk + 1]);
        }
    }
    let comm: C64 = (1..=depth).map(|i| zp[i] * vp[i]).sum();
    let quantum = &real_part + model.params.theta().as_matrix().map(|x| C64::new(0.0, x)) * comm;
    Ok(CrossCovariance { quantum, real_part })
}

/// Frobenius bound on the series terms left out by [`cross_covariance_series`] at `depth`.
pub fn series_tail_bound(model: &TIModel, z: C64, v: C64, depth: usize, g_inf: f64) -> f64 {
    let f2 = model.gramian.trace();
    let (qz, qv) = (g_inf / z.norm(), g_inf / v.norm());
    let geo = |q: f64, k: usize| q * (1.0 - q.powi(k as i32)) / (1.0 - q);
    let full = |q: f64| q / (1.0 - q);
    let c = 2.0 * f2 / (g_inf * g_inf);
    let real = c * (full(qz) * full(qv) - geo(qz, depth) * geo(qv, depth));
    let w = 1.0 / (z.norm() * v.norm());
    let comm = model.params.theta().norm() * w.powi(depth as i32 + 1) / (1.0 - w);
    real + comm
}

/// `(F(s)(zI - G(s))^{-1}, (sI - 𝒜_z)^{-1}ℬ_z)`.
pub fn transfer_phi_z(model: &TIModel, z: C64, s: C64) -> Result<(CMatrix, CMatrix)> {
    let m = model.channels();
    let g = model.g(s)?;
    let inv = (CMatrix::identity(m, m) * z - g)
        .try_inverse()
        .ok_or_else(|| Error::SingularResolvent(format!("zI - G(s) at z = {z}")))?;
    let lhs = model.f(s)? * inv;
    let pz = z_domain_matrices(model, z)?;
    let n = model.n();
    let res = (CMatrix::identity(n, n) * s - &pz.a_z)
        .try_inverse()
        .ok_or_else(|| Error::SingularResolvent(format!("{s}")))?;
    Ok((lhs, res * pz.b_z))
}

/// `|F|_2 = sqrt(Tr P)`.
pub fn h2_norm(model: &TIModel) -> f64 {
    model.gramian.trace().sqrt()
}

/// `|Φ_z|_2` from the Gramian of `(𝒜_z, ℬ_z)`.
pub fn h2_norm_phi_z(model: &TIModel, z: C64) -> Result<f64> {
    let pz = z_domain_matrices(model, z)?;
    if !pz.hurwitz {
        return Err(Error::NotInStabilitySet(format!("{z}")));
    }
    let conj = pz.a_z.map(|x| x.conj());
    let forcing = &pz.b_z * pz.b_z.adjoint();
    let p = solve_sylvester_kron(&pz.a_z, &conj, &forcing)?;
    Ok(p.trace().re.max(0.0).sqrt())
}

fn hamiltonian_has_imaginary(r: &OscillatorRealization, gamma: f64) -> Result<bool> {
    let n = r.a.nrows();
    let rr = gamma * gamma - 1.0;
    let ar = &r.a + &r.b * &r.c / rr;
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ar);
    h.view_mut((0, n), (n, n)).copy_from(&(&r.b * r.b.transpose() / rr));
    h.view_mut((n, 0), (n, n)).copy_from(&(-(r.c.transpose() * &r.c) * (gamma * gamma / rr)));
    h.view_mut((n, n), (n, n)).copy_from(&(-ar.transpose()));
    let scale = h.norm();
    let s = nalgebra::Schur::try_new(h, 1e-15, 100_000).ok_or_else(|| Error::EigFailure("Hamiltonian spectrum".into()))?;
    Ok(s.complex_eigenvalues().iter().any(|e| e.re.abs() <= 1e-9 * scale))
}

/// `|G|_∞` for `G(s) = I + C(sI - A)^{-1}B` by Hamiltonian bisection.
pub fn hinf_norm(model: &TIModel) -> Result<f64> {
    hinf_norm_realization(&model.realization)
}

pub fn hinf_norm_realization(r: &OscillatorRealization) -> Result<f64> {
    let a = &r.a;
    let rho = a.clone().complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0f64, f64::max).max(1e-6);
    let mut peak = 1.0f64;
    let mut freqs = vec![0.0];
    for i in 0..=400 {
        freqs.push(rho * 10f64.powf(-4.0 + 8.0 * i as f64 / 400.0));
    }
    for &w in &freqs {
        let g = transfer_eval(a, &r.b, &r.c, C64::new(0.0, w))?;
        peak = peak.max(g.singular_values().max());
    }
    let mut lo = peak.max(1.0 + 1e-9);
    if !hamiltonian_has_imaginary(r, lo * (1.0 + 1e-12))? {
        return Ok(lo);
    }
    let mut hi = 2.0 * lo;
    let mut grow = 0;
    while hamiltonian_has_imaginary(r, hi)? {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::BisectionFailure("no upper bracket found".into()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-10 * lo {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if hamiltonian_has_imaginary(r, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::BisectionFailure("bracket did not shrink".into()))
}

/// Diagonal-block traces of a finite identical cascade against their growth bound.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceBoundReport {
    pub traces: Vec<f64>,
    pub bounds: Vec<f64>,
    pub h2: f64,
    pub hinf: f64,
    pub holds: bool,
}

/// `Tr P_kk ≤ 2|F|_2²|G|_∞^{2(k-1)}` for `k = 1..k_max`.
pub fn covariance_trace_bound(model: &TIModel, k_max: usize) -> Result<TraceBoundReport> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let h2 = h2_norm(model);
    let hinf = hinf_norm(model)?;
    let c = CascadeModel::assemble(vec![model.params.clone(); k_max])?;
    let p = invariant_covariance_direct(&c)?;
    let n = model.n();
    let traces: Vec<f64> = (0..k_max).map(|k| p.view((k * n, k * n), (n, n)).trace()).collect();
    let bounds: Vec<f64> = (0..k_max).map(|k| 2.0 * h2 * h2 * hinf.powi(2 * k as i32)).collect();
    let holds = traces.iter().zip(&bounds).all(|(t, b)| *t <= *b * (1.0 + 1e-12));
    Ok(TraceBoundReport {
        traces,
        bounds,
        h2,
        hinf,
        holds,
    })
}
