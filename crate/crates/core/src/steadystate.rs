//! Invariant covariance of a cascade, its Schur-complement decomposition and the purity.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::cascade::CascadeModel;
use crate::error::{Error, Result};
use crate::matcore::{quantum_psd_margin, solve_lyapunov, solve_sylvester, spd_logdet, sym, AntisymmetricMatrix, SymmetricMatrix};

/// `𝒫` from the full Lyapunov equation `𝒜𝒫 + 𝒫𝒜^T + ℬℬ^T = 0`.
pub fn invariant_covariance_direct(c: &CascadeModel) -> Result<SymmetricMatrix> {
    // block triangular: stable iff every diagonal block is
    c.require_hurwitz()?;
    let bb = c.b() * c.b().transpose();
    Ok(SymmetricMatrix::symmetrize(solve_sylvester(c.a(), c.a(), &bb)?))
}

/// `𝒫` built block by block: one Sylvester and one Lyapunov solve per oscillator.
pub fn invariant_covariance_recursive(c: &CascadeModel) -> Result<SymmetricMatrix> {
    c.require_hurwitz()?;
    let n = c.state_dim();
    let mut p = DMatrix::zeros(n, n);
    for k in 0..c.len() {
        let rk = c.range(k);
        let (pre, nk) = (rk.start, rk.len());
        let re = c.realization(k);
        let bk = &re.b;
        let mut forcing = bk * bk.transpose();
        if pre > 0 {
            let a_prev = c.a().view((0, 0), (pre, pre)).clone_owned();
            let c_prev = c.c().columns(0, pre).clone_owned();
            let b_prev = c.b().rows(0, pre).clone_owned();
            let p_prev = p.view((0, 0), (pre, pre)).clone_owned();
            let g = bk * (&c_prev * &p_prev + b_prev.transpose());
            let q = solve_sylvester(&re.a, &a_prev, &g)?;
            let cross = bk * &c_prev * q.transpose();
            forcing += &cross + cross.transpose();
            p.view_mut((pre, 0), (nk, pre)).copy_from(&q);
            p.view_mut((0, pre), (pre, nk)).copy_from(&q.transpose());
        }
        let pkk = solve_lyapunov(&re.a, &forcing)?;
        p.view_mut((pre, pre), (nk, nk)).copy_from(pkk.as_matrix());
    }
    Ok(SymmetricMatrix::symmetrize(p))
}

fn leading_cholesky(p: &DMatrix<f64>, pre: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(p.view((0, 0), (pre, pre)).clone_owned()).ok_or(Error::SingularLeadingBlock { order: pre })
}

/// Schur complements of `𝒫` with respect to its leading blocks.
#[derive(Clone, Debug)]
pub struct SchurComplements {
    /// `Π_k = P_kk - Q_k 𝒫_{k-1}^{-1} Q_k^T`.
    pub pi_k: Vec<SymmetricMatrix>,
    /// `Π_{≥k} = 𝒫_{≥k} - T_k Q_{≥k}^T`.
    pub pi_tail: Vec<SymmetricMatrix>,
    /// `T_k = Q_{≥k} 𝒫_{k-1}^{-1}`; empty for the first oscillator.
    pub t: Vec<DMatrix<f64>>,
}

/// Computes the Schur complements directly from the leading-block factorisations.
pub fn schur_complements(p: &SymmetricMatrix, dims: &[usize]) -> Result<SchurComplements> {
    let n: usize = dims.iter().sum();
    if p.order() != n {
        return Err(Error::dim("covariance order", n, p.order()));
    }
    let pm = p.as_matrix();
    let (mut pi_k, mut pi_tail, mut t) = (vec![], vec![], vec![]);
    let mut pre = 0;
    for &nk in dims {
        let tail = n - pre;
        let p_tail = pm.view((pre, pre), (tail, tail)).clone_owned();
        if pre == 0 {
            t.push(DMatrix::zeros(tail, 0));
            pi_tail.push(SymmetricMatrix::symmetrize(p_tail));
        } else {
            let ch = leading_cholesky(pm, pre)?;
            let q_tail = pm.view((pre, 0), (tail, pre)).clone_owned();
            let tk = ch.solve(&q_tail.transpose()).transpose();
            pi_tail.push(SymmetricMatrix::symmetrize(p_tail - &tk * q_tail.transpose()));
            t.push(tk);
        }
        let last = pi_tail.last().unwrap();
        pi_k.push(SymmetricMatrix::symmetrize(last.view((0, 0), (nk, nk)).clone_owned()));
        pre += nk;
    }
    Ok(SchurComplements { pi_k, pi_tail, t })
}

/// `Π_{≥k+1} = α - β γ^{-1} β^T` where `Π_{≥k} = [[γ, β^T], [β, α]]`, starting from `Π_{≥1} = 𝒫`.
pub fn pi_tail_recurrence(p: &SymmetricMatrix, dims: &[usize]) -> Result<Vec<SymmetricMatrix>> {
    let mut out = vec![p.clone()];
    let mut pre = 0;
    for &nk in dims.iter().take(dims.len().saturating_sub(1)) {
        let cur = out.last().unwrap().as_matrix();
        let rest = cur.nrows() - nk;
        let gamma = cur.view((0, 0), (nk, nk)).clone_owned();
        let beta = cur.view((nk, 0), (rest, nk)).clone_owned();
        let alpha = cur.view((nk, nk), (rest, rest)).clone_owned();
        pre += nk;
        let ch = Cholesky::new(gamma).ok_or(Error::SingularLeadingBlock { order: pre })?;
        let next = alpha - &beta * ch.solve(&beta.transpose());
        out.push(SymmetricMatrix::symmetrize(next));
    }
    Ok(out)
}

/// `ln det 𝒫`, its split over oscillators and the purity `sqrt(det ϴ / det 𝒫)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Purity {
    pub purity: f64,
    pub logdet: f64,
    pub v_k: Vec<f64>,
}

pub fn purity_and_logdet(p: &SymmetricMatrix, theta: &AntisymmetricMatrix, dims: &[usize]) -> Result<Purity> {
    let logdet = spd_logdet(p)?;
    let sc = schur_complements(p, dims)?;
    let v_k = sc.pi_k.iter().map(spd_logdet).collect::<Result<Vec<_>>>()?;
    let det_theta = theta.as_matrix().determinant().abs();
    if det_theta == 0.0 {
        return Err(Error::SingularTheta { index: 0 });
    }
    Ok(Purity {
        purity: (0.5 * (det_theta.ln() - logdet)).exp(),
        logdet,
        v_k,
    })
}

/// Everything the steady-state analysis reports for one cascade.
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub p: SymmetricMatrix,
    pub schur: SchurComplements,
    pub purity: Purity,
    /// Smallest eigenvalue of `𝒫 + iϴ`.
    pub psd_margin: f64,
    /// Relative residual of the Lyapunov equation.
    pub residual: f64,
}

pub fn lyapunov_residual(c: &CascadeModel, p: &SymmetricMatrix) -> f64 {
    let ap = c.a() * p.as_matrix();
    let bb = c.b() * c.b().transpose();
    let r = &ap + ap.transpose() + &bb;
    r.norm() / (2.0 * ap.norm() + bb.norm())
}

pub fn steady_state(c: &CascadeModel) -> Result<SteadyState> {
    let p = invariant_covariance_direct(c)?;
    let dims = c.dims();
    let schur = schur_complements(&p, &dims)?;
    let purity = purity_and_logdet(&p, c.theta(), &dims)?;
    let psd_margin = quantum_psd_margin(&p, c.theta())?;
    let residual = lyapunov_residual(c, &p);
    Ok(SteadyState {
        p,
        schur,
        purity,
        psd_margin,
        residual,
    })
}

/// Steady-state covariance of one isolated oscillator driven by vacuum.
pub fn oscillator_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    solve_lyapunov(a, &sym(&(b * b.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::OscillatorParams;

    fn two_osc() -> CascadeModel {
        let mk = |r: [f64; 4], m: [f64; 8]| {
            OscillatorParams::with_canonical_theta(
                SymmetricMatrix::symmetrize(DMatrix::from_row_slice(2, 2, &r)),
                DMatrix::from_row_slice(4, 2, &m),
            )
            .unwrap()
        };
        CascadeModel::assemble(vec![
            mk([0.8, 0.1, 0.1, 0.3], [1.0, -0.3, 0.4, -0.4, -0.9, 1.2, 0.5, 1.9]),
            mk([-0.1, -0.2, -0.2, 0.5], [0.1, -2.0, -0.6, -1.1, 0.4, -0.6, 1.1, -1.2]),
        ])
        .unwrap()
    }

    #[test]
    fn routes_agree() {
        let c = two_osc();
        c.require_hurwitz().unwrap();
        let p1 = invariant_covariance_direct(&c).unwrap();
        let p2 = invariant_covariance_recursive(&c).unwrap();
        assert!((p1.as_matrix() - p2.as_matrix()).norm() < 1e-11 * p1.norm());
    }

    #[test]
    fn logdet_splits_over_blocks() {
        let c = two_osc();
        let s = steady_state(&c).unwrap();
        let sum: f64 = s.purity.v_k.iter().sum();
        assert!((sum - s.purity.logdet).abs() < 1e-11);
        assert!(s.purity.purity > 0.0 && s.purity.purity <= 1.0 + 1e-12);
        assert!(s.psd_margin > -1e-10);
    }

    #[test]
    fn tail_recurrence_matches_direct() {
        let c = two_osc();
        let s = steady_state(&c).unwrap();
        let rec = pi_tail_recurrence(&s.p, &c.dims()).unwrap();
        for (x, y) in rec.iter().zip(&s.schur.pi_tail) {
            assert!((x.as_matrix() - y.as_matrix()).norm() < 1e-11 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn unstable_cascade_rejected() {
        let o = OscillatorParams::with_canonical_theta(SymmetricMatrix::identity(2), DMatrix::zeros(2, 2)).unwrap();
        let c = CascadeModel::assemble(vec![o]).unwrap();
        assert!(matches!(invariant_covariance_direct(&c), Err(Error::NotHurwitz { .. })));
    }
}
