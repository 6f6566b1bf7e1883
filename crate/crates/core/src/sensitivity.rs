//! Derivatives of the log-determinant of the invariant covariance with respect to
//! the energy and coupling matrices, and the sensitivity indices built from them.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cascade::{CascadeModel, OscillatorParams};
use crate::error::{Error, Result};
use crate::matcore::{
    asym, duplication_matrix, solve_lyapunov, solve_sylvester, spd_inv_sqrt, spd_inverse, spd_logdet, sym, unvech, vec, vech,
    AntisymmetricMatrix, SymmetricMatrix,
};
use crate::steadystate::invariant_covariance_direct;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Gradients `ρ_k = ∂V/∂R_k` and `μ_k = ∂V/∂M_k` of `V = ln det 𝒫`.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub rho: Vec<SymmetricMatrix>,
    pub mu: Vec<DMatrix<f64>>,
    /// Observability Gramian `𝒬`, when the route computes it.
    pub q_gramian: Option<SymmetricMatrix>,
    /// Hankelian `ℋ = 𝒬𝒫`, when the route computes it.
    pub hankelian: Option<DMatrix<f64>>,
}

impl GradientSet {
    pub fn new(rho: Vec<SymmetricMatrix>, mu: Vec<DMatrix<f64>>) -> Self {
        GradientSet {
            rho,
            mu,
            q_gramian: None,
            hankelian: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `[vech(ρ_k); vec(μ_k)]`.
    pub fn d(&self, k: usize) -> DVector<f64> {
        let a = vech(self.rho[k].as_matrix());
        let b = vec(&self.mu[k]);
        DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
    }

    /// `[vec(ρ_k); vec(μ_k)]`, the gradient over unconstrained entries.
    pub fn full(&self, k: usize) -> DVector<f64> {
        let a = vec(self.rho[k].as_matrix());
        let b = vec(&self.mu[k]);
        DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
    }

    pub fn norm(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| r.norm_squared())
            .chain(self.mu.iter().map(|m| m.norm_squared()))
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius distance over all blocks divided by the norm of `self`.
    pub fn relative_distance(&self, other: &GradientSet) -> f64 {
        let mut d2 = 0.0;
        for (a, b) in self.rho.iter().zip(&other.rho) {
            d2 += (a.as_matrix() - b.as_matrix()).norm_squared();
        }
        for (a, b) in self.mu.iter().zip(&other.mu) {
            d2 += (a - b).norm_squared();
        }
        d2.sqrt() / self.norm().max(f64::MIN_POSITIVE)
    }
}

/// `V = ln det 𝒫` of a cascade.
pub fn log_det_covariance(c: &CascadeModel) -> Result<f64> {
    spd_logdet(&invariant_covariance_direct(c)?)
}

/// Solves `𝒜^T𝒬 + 𝒬𝒜 + 𝒫^{-1} = 0` and forms `ℋ = 𝒬𝒫`.
pub fn observability_gramian_and_hankelian(c: &CascadeModel, p: &SymmetricMatrix) -> Result<(SymmetricMatrix, DMatrix<f64>)> {
    c.require_hurwitz()?;
    let pinv = spd_inverse(p)?;
    let q = SymmetricMatrix::symmetrize(solve_sylvester(&c.a().transpose(), &c.a().transpose(), pinv.as_matrix())?);
    let h = q.as_matrix() * p.as_matrix();
    Ok((q, h))
}

/// Closed-form gradients from the Gramian and the Hankelian.
pub fn purity_gradients_direct(c: &CascadeModel, q: &SymmetricMatrix, h: &DMatrix<f64>) -> Result<GradientSet> {
    let n = c.state_dim();
    if q.order() != n || h.shape() != (n, n) {
        return Err(Error::dim("Gramian/Hankelian", n, q.order()));
    }
    let j = c.ito().as_matrix();
    let (mut rho, mut mu) = (vec![], vec![]);
    for k in 0..c.len() {
        let rk = c.range(k);
        let o = c.oscillator(k);
        let th = o.theta().as_matrix();
        let hkk = h.view((rk.start, rk.start), (rk.len(), rk.len())).clone_owned();
        let th_h = th * &hkk;
        rho.push(SymmetricMatrix::symmetrize(sym(&th_h) * -4.0));

        let q_col = q.columns(rk.start, rk.len());
        let mut inner = o.coupling() * asym(&th_h);
        for jj in 0..c.len() {
            let rj = c.range(jj);
            let mj = c.oscillator(jj).coupling();
            if jj > k {
                let hjk = h.view((rj.start, rk.start), (rj.len(), rk.len()));
                inner += mj * c.oscillator(jj).theta().as_matrix() * hjk;
            } else if jj < k {
                let hkj = h.view((rk.start, rj.start), (rk.len(), rj.len()));
                inner += mj * hkj.transpose() * th;
            }
        }
        mu.push((c.b().transpose() * q_col * th + j * inner * 2.0) * 4.0);
    }
    Ok(GradientSet {
        rho,
        mu,
        q_gramian: Some(q.clone()),
        hankelian: Some(h.clone()),
    })
}

/// Closed-form gradients, computing `𝒫`, `𝒬` and `ℋ` along the way.
pub fn purity_gradients(c: &CascadeModel) -> Result<GradientSet> {
    let p = invariant_covariance_direct(c)?;
    let (q, h) = observability_gramian_and_hankelian(c, &p)?;
    purity_gradients_direct(c, &q, &h)
}

/// Pulls cotangents of `(A_k, B_k, C_k)` back to `(R_k, M_k)`.
fn pullback(o: &OscillatorParams, j: &DMatrix<f64>, wa: &DMatrix<f64>, wb: &DMatrix<f64>, wc: &DMatrix<f64>) -> (SymmetricMatrix, DMatrix<f64>) {
    let th = o.theta().as_matrix();
    let y = th * wa * -2.0;
    let rho = SymmetricMatrix::symmetrize(y.clone());
    let mu = j * o.coupling() * (y.transpose() - &y) + wb.transpose() * th * 2.0 - j * wc * 2.0;
    (rho, mu)
}

/// Gradients through the tail functionals `V_{≥k} = ln det Π_{≥k}`, one adjoint pass per oscillator.
pub fn purity_gradients_recursive(c: &CascadeModel) -> Result<GradientSet> {
    let p = invariant_covariance_direct(c)?;
    let pm = p.as_matrix();
    let n = c.state_dim();
    let j = c.ito().as_matrix();
    let (mut rho, mut mu) = (vec![], vec![]);
    for k in 0..c.len() {
        let rk = c.range(k);
        let (pre, nk) = (rk.start, rk.len());
        let tail = n - pre;
        let a_t = c.a().view((pre, pre), (tail, tail)).clone_owned();
        let b_t = c.b().rows(pre, tail).clone_owned();

        let mut prev = None;
        let mut b_tilde = b_t.clone();
        if pre > 0 {
            let p_p = pm.view((0, 0), (pre, pre)).clone_owned();
            let ch = Cholesky::new(p_p.clone()).ok_or(Error::SingularLeadingBlock { order: pre })?;
            let q_t = pm.view((pre, 0), (tail, pre)).clone_owned();
            let b_p = c.b().rows(0, pre).clone_owned();
            let t = ch.solve(&q_t.transpose()).transpose();
            b_tilde -= &t * &b_p;
            prev = Some((p_p, ch, q_t, b_p));
        }
        let pi = solve_lyapunov(&a_t, &(&b_tilde * b_tilde.transpose()))?;
        let pi_inv = spd_inverse(&pi)?;
        let qg = solve_lyapunov(&a_t.transpose(), pi_inv.as_matrix())?;

        let mut g_a = qg.as_matrix() * pi.as_matrix() * 2.0;
        let mut g_b = qg.as_matrix() * &b_tilde * 2.0;
        let mut w_b_extra = DMatrix::zeros(nk, c.channels());
        if let Some((p_p, ch, q_t, b_p)) = prev {
            let a_p = c.a().view((0, 0), (pre, pre)).clone_owned();
            let pinv_bp = ch.solve(&b_p);
            let w_q = qg.as_matrix() * &b_tilde * pinv_bp.transpose() * -2.0;
            let y = solve_sylvester(&a_t.transpose(), &a_p.transpose(), &w_q)?;
            g_a += &y * q_t.transpose();
            g_b += &y * &b_p;
            let g_d = &y * &p_p;
            let c_p = c.c().columns(0, pre);
            w_b_extra = g_d.rows(0, nk) * c_p.transpose();
        }
        let w_a = g_a.view((0, 0), (nk, nk)).clone_owned();
        let w_b = g_b.rows(0, nk) + w_b_extra;
        let w_c = if tail > nk {
            c.b().rows(pre + nk, tail - nk).transpose() * g_a.view((nk, 0), (tail - nk, nk))
        } else {
            DMatrix::zeros(c.channels(), nk)
        };
        let (r, m) = pullback(c.oscillator(k), j, &w_a, &w_b, &w_c);
        rho.push(r);
        mu.push(m);
    }
    Ok(GradientSet::new(rho, mu))
}

/// Unit perturbation directions of `e_k = [vech(R_k); vec(M_k)]`.
fn unit_direction(o: &OscillatorParams, i: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = o.n();
    let m = o.channels();
    let nv = n * (n + 1) / 2;
    let mut dr = DMatrix::zeros(n, n);
    let mut dm = DMatrix::zeros(m, n);
    if i < nv {
        let mut v = DVector::zeros(nv);
        v[i] = 1.0;
        dr = unvech(&v, n).expect("length matches").into_inner();
    } else {
        let p = i - nv;
        dm[(p % m, p / m)] = 1.0;
    }
    (dr, dm)
}

/// Number of coordinates in `e_k`.
pub fn coordinate_count(o: &OscillatorParams) -> usize {
    let n = o.n();
    n * (n + 1) / 2 + o.channels() * n
}

fn perturbed(c: &CascadeModel, k: usize, dr: &DMatrix<f64>, dm: &DMatrix<f64>, t: f64) -> Result<CascadeModel> {
    let o = c.oscillator(k);
    let p = OscillatorParams::new(
        o.theta().clone(),
        SymmetricMatrix::symmetrize(o.energy().as_matrix() + dr * t),
        o.coupling() + dm * t,
    )?;
    c.with_oscillator(k, p)
}

/// Central differences of `V` over every coordinate of every `e_k`.
pub fn gradient_fd_oracle(c: &CascadeModel, h: f64) -> Result<GradientSet> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let (mut rho, mut mu) = (vec![], vec![]);
    for k in 0..c.len() {
        let o = c.oscillator(k);
        let n = o.n();
        let nv = n * (n + 1) / 2;
        let mut gv = DVector::zeros(nv);
        let mut gm = DMatrix::zeros(o.channels(), n);
        for i in 0..coordinate_count(o) {
            let (dr, dm) = unit_direction(o, i);
            let eval = |t: f64| -> Result<f64> {
                log_det_covariance(&perturbed(c, k, &dr, &dm, t)?).map_err(|e| match e {
                    Error::NotHurwitz { max_real, .. } => Error::NotHurwitz {
                        what: format!("oscillator {} perturbed along coordinate {}", k + 1, i + 1),
                        max_real,
                    },
                    other => other,
                })
            };
            let d = (eval(h)? - eval(-h)?) / (2.0 * h);
            if i < nv {
                gv[i] = d;
            } else {
                let p = i - nv;
                gm[(p % o.channels(), p / o.channels())] = d;
            }
        }
        // a vech coordinate off the diagonal moves two entries of R_k
        let mut r = unvech(&gv, n)?.into_inner();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    r[(a, b)] *= 0.5;
                }
            }
        }
        rho.push(SymmetricMatrix::symmetrize(r));
        mu.push(gm);
    }
    Ok(GradientSet::new(rho, mu))
}

/// Relative distance between `reference` and the FD estimate at each step.
pub fn fd_sweep(c: &CascadeModel, reference: &GradientSet, steps: &[f64]) -> Result<Vec<(f64, f64)>> {
    steps
        .iter()
        .map(|&h| Ok((h, reference.relative_distance(&gradient_fd_oracle(c, h)?))))
        .collect()
}

/// Gradients for the realisation transformed by `S_k`: `ρ_k ↦ S_kρ_kS_k^T`, `μ_k ↦ μ_kS_k^T`.
pub fn transform_gradients(g: &GradientSet, s: &[DMatrix<f64>], thetas: &[AntisymmetricMatrix]) -> Result<GradientSet> {
    if s.len() != g.len() || thetas.len() != g.len() {
        return Err(Error::dim("transform list", g.len(), s.len()));
    }
    let (mut rho, mut mu) = (vec![], vec![]);
    for (k, ((sk, th), (r, m))) in s.iter().zip(thetas).zip(g.rho.iter().zip(&g.mu)).enumerate() {
        let chk = crate::matcore::symplectic_residual(sk, th)?;
        if chk.residual > 1e-9 {
            return Err(Error::NotSymplectic {
                index: k + 1,
                residual: chk.residual,
            });
        }
        rho.push(r.congruence(sk));
        mu.push(m * sk.transpose());
    }
    Ok(GradientSet::new(rho, mu))
}

/// Uncertainty description of one oscillator's parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum OscillatorUncertainty {
    /// `Σ_k = blockdiag(a I, b I)`.
    Bounds { a: f64, b: f64 },
    /// Full covariance of `[vech(R_k); vec(M_k)]`.
    Covariance(SymmetricMatrix),
}

impl OscillatorUncertainty {
    pub fn covariance(&self, n: usize, m: usize) -> Result<SymmetricMatrix> {
        let nv = n * (n + 1) / 2;
        let d = nv + m * n;
        match self {
            OscillatorUncertainty::Bounds { a, b } => {
                if *a < 0.0 || *b < 0.0 {
                    return Err(Error::NonPositive(format!("uncertainty bounds a = {a}, b = {b}")));
                }
                let diag: Vec<f64> = (0..d).map(|i| if i < nv { *a } else { *b }).collect();
                Ok(SymmetricMatrix::from_diagonal(&diag))
            }
            OscillatorUncertainty::Covariance(s) => {
                if s.order() != d {
                    return Err(Error::dim("uncertainty covariance", d, s.order()));
                }
                Ok(s.clone())
            }
        }
    }

    /// `(a, b)` when given as bounds.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            OscillatorUncertainty::Bounds { a, b } => Some((*a, *b)),
            OscillatorUncertainty::Covariance(_) => None,
        }
    }
}

/// Independent per-oscillator parameter uncertainties of size `ε Σ_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyModel {
    pub blocks: Vec<OscillatorUncertainty>,
    pub epsilon: f64,
}

/// `blockdiag(D_n, I_{mn})` with `D_n` the duplication matrix.
pub fn weight_matrix(n: usize, m: usize) -> DMatrix<f64> {
    crate::matcore::block_diag(&[duplication_matrix(n), DMatrix::identity(m * n, m * n)])
}

/// Gradient over `e_k` coordinates, `𝟁_k^T [vec(ρ_k); vec(μ_k)]`.
pub fn coordinate_gradient(rho: &DMatrix<f64>, mu: &DMatrix<f64>) -> DVector<f64> {
    let n = rho.nrows();
    let a = duplication_matrix(n).transpose() * vec(rho);
    let b = vec(mu);
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
}

/// Sensitivity index and its split over oscillators.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub z: f64,
    pub z_k: Vec<f64>,
}

pub fn sensitivity_index(g: &GradientSet, u: &UncertaintyModel) -> Result<SensitivityReport> {
    if u.blocks.len() != g.len() {
        return Err(Error::dim("uncertainty blocks", g.len(), u.blocks.len()));
    }
    let mut z_k = vec![];
    for (k, b) in u.blocks.iter().enumerate() {
        let (n, m) = (g.rho[k].order(), g.mu[k].nrows());
        let sig = b.covariance(n, m)?;
        z_k.push(phi_k(g.rho[k].as_matrix(), &g.mu[k], &sig, &DMatrix::identity(n, n))?);
    }
    Ok(SensitivityReport { z: z_k.iter().sum(), z_k })
}

/// `Φ_k(S)`: the weighted squared norm of the transformed coordinate gradient.
pub fn phi_k(rho: &DMatrix<f64>, mu: &DMatrix<f64>, sigma: &SymmetricMatrix, s: &DMatrix<f64>) -> Result<f64> {
    let x = coordinate_gradient(&(s * rho * s.transpose()), &(mu * s.transpose()));
    if sigma.order() != x.len() {
        return Err(Error::dim("uncertainty covariance", x.len(), sigma.order()));
    }
    Ok((x.transpose() * sigma.as_matrix() * &x)[(0, 0)])
}

/// `Ψ_k(S) = 2a|SρS^T|² + b|μS^T|²`.
pub fn psi_k(rho: &DMatrix<f64>, mu: &DMatrix<f64>, a: f64, b: f64, s: &DMatrix<f64>) -> f64 {
    2.0 * a * (s * rho * s.transpose()).norm_squared() + b * (mu * s.transpose()).norm_squared()
}

/// Linearisation `(δ𝒜, δℬ)` of the composite realisation for `R_k += δR`, `M_k += δM`.
pub fn cascade_variation(c: &CascadeModel, k: usize, dr: &DMatrix<f64>, dm: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = c.state_dim();
    let o = c.oscillator(k);
    let th = o.theta().as_matrix();
    let j = c.ito().as_matrix();
    let m = o.coupling();
    let da_k = th * (dr + dm.transpose() * j * m + m.transpose() * j * dm) * 2.0;
    let db_k = th * dm.transpose() * 2.0;
    let dc_k = j * dm * 2.0;
    let rk = c.range(k);
    let mut da = DMatrix::zeros(n, n);
    let mut db = DMatrix::zeros(n, c.channels());
    da.view_mut((rk.start, rk.start), (rk.len(), rk.len())).copy_from(&da_k);
    db.view_mut((rk.start, 0), (rk.len(), c.channels())).copy_from(&db_k);
    for i in 0..c.len() {
        let ri = c.range(i);
        if i > k {
            da.view_mut((ri.start, rk.start), (ri.len(), rk.len())).copy_from(&(&c.realization(i).b * &dc_k));
        } else if i < k {
            da.view_mut((rk.start, ri.start), (rk.len(), ri.len())).copy_from(&(&db_k * &c.realization(i).c));
        }
    }
    (da, db)
}

/// `δ𝒫` for every coordinate of every `e_k`, from the variational Lyapunov equation.
pub fn covariance_derivatives(c: &CascadeModel, p: &SymmetricMatrix) -> Result<Vec<Vec<SymmetricMatrix>>> {
    c.require_hurwitz()?;
    let mut out = vec![];
    for k in 0..c.len() {
        let o = c.oscillator(k);
        let mut cols = vec![];
        for i in 0..coordinate_count(o) {
            let (dr, dm) = unit_direction(o, i);
            let (da, db) = cascade_variation(c, k, &dr, &dm);
            let g = &da * p.as_matrix() + c.b() * db.transpose();
            cols.push(SymmetricMatrix::symmetrize(solve_sylvester(c.a(), c.a(), &(sym(&g) * 2.0))?));
        }
        out.push(cols);
    }
    Ok(out)
}

/// Fisher-metric sensitivity alongside the purity index obtained from the same derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherReport {
    pub z_fisher: f64,
    pub z_fisher_k: Vec<f64>,
    /// Purity index `Z` recomputed from `⟨𝒫^{-1}, δ𝒫⟩`.
    pub z: f64,
    /// Order of `𝒫`; `Z ≤ n Z_fisher`.
    pub n: usize,
}

pub fn fisher_sensitivity(p: &SymmetricMatrix, derivatives: &[Vec<SymmetricMatrix>], sigmas: &[SymmetricMatrix]) -> Result<FisherReport> {
    if derivatives.len() != sigmas.len() {
        return Err(Error::dim("uncertainty blocks", derivatives.len(), sigmas.len()));
    }
    let pinv = spd_inverse(p)?;
    let pi = pinv.as_matrix();
    let (mut z_fisher_k, mut z) = (vec![], 0.0);
    for (cols, sig) in derivatives.iter().zip(sigmas) {
        let d = cols.len();
        if sig.order() != d {
            return Err(Error::dim("uncertainty covariance", d, sig.order()));
        }
        let whitened: Vec<DMatrix<f64>> = cols.iter().map(|dp| pi * dp.as_matrix() * pi).collect();
        let mut f = DMatrix::zeros(d, d);
        let mut g = DVector::zeros(d);
        for a in 0..d {
            g[a] = pi.dot(cols[a].as_matrix());
            for b in 0..d {
                f[(a, b)] = whitened[a].dot(cols[b].as_matrix());
            }
        }
        z_fisher_k.push(f.dot(sig.as_matrix()));
        z += (g.transpose() * sig.as_matrix() * &g)[(0, 0)];
    }
    Ok(FisherReport {
        z_fisher: z_fisher_k.iter().sum(),
        z_fisher_k,
        z,
        n: p.order(),
    })
}

/// The two sides of `⟨𝒫^{-1}, δ𝒫⟩² ≤ n |𝒫^{-1/2} δ𝒫 𝒫^{-1/2}|²`.
pub fn fisher_bound_terms(p: &SymmetricMatrix, dp: &DMatrix<f64>) -> Result<(f64, f64)> {
    let pinv = spd_inverse(p)?;
    let w = spd_inv_sqrt(p)?;
    let lhs = pinv.dot(dp).powi(2);
    let rhs = p.order() as f64 * (w.as_matrix() * dp * w.as_matrix()).norm_squared();
    Ok((lhs, rhs))
}

/// Kullback–Leibler divergence of `N(0, p)` from `N(0, p_star)`.
pub fn kl_gaussian(p: &SymmetricMatrix, p_star: &SymmetricMatrix) -> Result<f64> {
    if p.order() != p_star.order() {
        return Err(Error::dim("KL divergence", p_star.order(), p.order()));
    }
    let w = spd_inv_sqrt(p_star)?;
    let chi = SymmetricMatrix::symmetrize(w.as_matrix() * p.as_matrix() * w.as_matrix());
    let ld = spd_logdet(&chi)?;
    Ok(0.5 * (chi.trace() - ld - p.order() as f64))
}

/// Empirical spread of `δV` under random parameter perturbations.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloReport {
    pub samples: usize,
    pub rejected: usize,
    pub mean: f64,
    pub variance: f64,
    /// Predicted variance `ε Z`.
    pub predicted: f64,
    pub ratio: f64,
    /// Standard error of `ratio` under a Gaussian approximation.
    pub ratio_std_err: f64,
}

/// Draws `δe_k ~ N(0, εΣ_k)`, recomputes `V` exactly and compares `Var(δV)` with `εZ`.
/// Sample `i` uses stream `i` of a ChaCha generator seeded with `seed`.
pub fn monte_carlo_variance(c: &CascadeModel, u: &UncertaintyModel, samples: usize, seed: u64) -> Result<MonteCarloReport> {
    if u.blocks.len() != c.len() {
        return Err(Error::dim("uncertainty blocks", c.len(), u.blocks.len()));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    let v0 = log_det_covariance(c)?;
    let g = purity_gradients(c)?;
    let z = sensitivity_index(&g, u)?.z;
    let factors = (0..c.len())
        .map(|k| {
            let o = c.oscillator(k);
            let sig = u.blocks[k].covariance(o.n(), o.channels())?;
            if sig.norm() == 0.0 {
                return Ok(DMatrix::zeros(sig.order(), sig.order()));
            }
            // semidefinite covariances: factor through the symmetric square root
            let root = crate::matcore::symmetric_matrix_function(&sig, |x| x.max(0.0).sqrt())?;
            Ok(root.into_inner() * u.epsilon.sqrt())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dv = Vec::with_capacity(samples);
    let mut rejected = 0;
    let mut drawn = 0usize;
    let mut stream = 0u64;
    while dv.len() < samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        stream += 1;
        drawn += 1;
        let mut osc = Vec::with_capacity(c.len());
        for (k, f) in factors.iter().enumerate() {
            let o = c.oscillator(k);
            let (n, m) = (o.n(), o.channels());
            let nv = n * (n + 1) / 2;
            let zeta = DVector::from_iterator(f.ncols(), (0..f.ncols()).map(|_| StandardNormal.sample(&mut rng)));
            let de = f * zeta;
            let dr = unvech(&de.rows(0, nv).clone_owned(), n)?;
            let dm = DMatrix::from_column_slice(m, n, de.rows(nv, m * n).as_slice());
            osc.push(OscillatorParams::new(
                o.theta().clone(),
                SymmetricMatrix::symmetrize(o.energy().as_matrix() + dr.as_matrix()),
                o.coupling() + dm,
            )?);
        }
        let pc = CascadeModel::assemble(osc)?;
        if pc.require_hurwitz().is_err() {
            rejected += 1;
            if rejected * 100 > samples {
                return Err(Error::TooManyRejections { rejected, drawn });
            }
            continue;
        }
        dv.push(log_det_covariance(&pc)? - v0);
    }
    let nf = samples as f64;
    let mean = dv.iter().sum::<f64>() / nf;
    let variance = dv.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let predicted = u.epsilon * z;
    let ratio = if predicted > 0.0 { variance / predicted } else { f64::NAN };
    Ok(MonteCarloReport {
        samples,
        rejected,
        mean,
        variance,
        predicted,
        ratio,
        ratio_std_err: ratio * (2.0 / (nf - 1.0)).sqrt(),
    })
}
