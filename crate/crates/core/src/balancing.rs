//! Symplectic balancing of one-mode oscillators: closed-form minimiser of the
//! quadratic sensitivity bound and its application to a cascade.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::CascadeModel;
use crate::error::{Error, Result};
use crate::matcore::{rotation, spd_inv_sqrt, spd_sqrt, symmetric_eigenvalues, symmetric_matrix_function, SymmetricMatrix};
use crate::sensitivity::{psi_k, GradientSet};

pub const NEWTON_MAX_ITER: usize = 50;
const NEWTON_RTOL: f64 = 1e-12;

/// `λ / (1 + sqrt(1 + 2λz²))`.
pub fn f_lambda(lambda: f64, z: f64) -> f64 {
    lambda / (1.0 + (1.0 + 2.0 * lambda * z * z).sqrt())
}

/// `Π_i f_λ(r_i)`.
pub fn h_lambda(lambda: f64, rs: &[f64]) -> f64 {
    rs.iter().map(|&r| f_lambda(lambda, r)).product()
}

/// `d/dλ Π_i f_λ(r_i)`.
pub fn h_prime(lambda: f64, rs: &[f64]) -> f64 {
    let s: f64 = rs
        .iter()
        .map(|&r| {
            let q = (1.0 + 2.0 * lambda * r * r).sqrt();
            r * r / ((1.0 + q) * q)
        })
        .sum();
    (rs.len() as f64 / lambda - s) * h_lambda(lambda, rs)
}

/// Root of `h(λ) = det τ` and the iterates that reached it.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub lambda: f64,
    /// Number of residual evaluations, 1 when the starting point is already a root.
    pub iterations: usize,
    pub iterates: Vec<f64>,
    /// Set when an iterate left `(0, ∞)` and bisection finished the solve.
    pub bisection_fallback: bool,
}

/// Newton–Raphson for `f_λ(r1) f_λ(r2) = det τ` from `λ₀ = 2 sqrt(det τ)`.
pub fn newton_lambda(r1: f64, r2: f64, det_tau: f64) -> Result<NewtonOutcome> {
    newton_lambda_multi(&[r1, r2], det_tau, NEWTON_MAX_ITER)
}

/// Same iteration for `Π_i f_λ(r_i) = det τ` with `λ₀ = 2 (det τ)^{1/ν}`.
pub fn newton_lambda_multi(rs: &[f64], det_tau: f64, max_iter: usize) -> Result<NewtonOutcome> {
    if !(det_tau > 0.0) || !det_tau.is_finite() {
        return Err(Error::InvalidArgument(format!("det tau must be positive, got {det_tau}")));
    }
    if rs.is_empty() || rs.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("eigenvalues must be finite".into()));
    }
    let lambda0 = 2.0 * det_tau.powf(1.0 / rs.len() as f64);
    let mut lambda = lambda0;
    let mut iterates = vec![lambda];
    for it in 1..=max_iter {
        let h = h_lambda(lambda, rs);
        if (h - det_tau).abs() <= NEWTON_RTOL * det_tau {
            return Ok(NewtonOutcome {
                lambda,
                iterations: it,
                iterates,
                bisection_fallback: false,
            });
        }
        let next = lambda - (h - det_tau) / h_prime(lambda, rs);
        if !(next > 0.0) || !next.is_finite() {
            return bisect_lambda(rs, det_tau, lambda0, iterates);
        }
        lambda = next;
        iterates.push(lambda);
    }
    Err(Error::NoConvergence(format!("Newton iteration for the multiplier after {max_iter} steps")))
}

fn bisect_lambda(rs: &[f64], det_tau: f64, lambda0: f64, mut iterates: Vec<f64>) -> Result<NewtonOutcome> {
    let (mut lo, mut hi) = (lambda0, lambda0 * 2.0);
    let mut grow = 0;
    while h_lambda(hi, rs) < det_tau {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoConvergence("could not bracket the multiplier".into()));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        iterates.push(mid);
        let h = h_lambda(mid, rs);
        if (h - det_tau).abs() <= NEWTON_RTOL * det_tau || hi - lo <= f64::EPSILON * hi {
            return Ok(NewtonOutcome {
                lambda: mid,
                iterations: iterates.len(),
                iterates,
                bisection_fallback: true,
            });
        }
        if h < det_tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence("bisection for the multiplier".into()))
}

/// One-mode problem in scaled form: minimise `½|σρσ^T|² + |μσ^T|²` over `det σ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneModeBalanceProblem {
    pub rho: SymmetricMatrix,
    pub mu: DMatrix<f64>,
    pub tau: SymmetricMatrix,
}

impl OneModeBalanceProblem {
    pub fn new(rho: SymmetricMatrix, mu: DMatrix<f64>) -> Result<Self> {
        if rho.order() != 2 {
            return Err(Error::NotOneMode(rho.order()));
        }
        if mu.ncols() != 2 {
            return Err(Error::dim("coupling gradient columns", 2, mu.ncols()));
        }
        let tau = SymmetricMatrix::symmetrize(mu.transpose() * &mu);
        Ok(OneModeBalanceProblem { rho, mu, tau })
    }

    /// Scales the gradients by the uncertainty bounds: `ρ = 2 sqrt(a) ρ_k`, `μ = sqrt(b) μ_k`.
    pub fn from_gradients(rho_k: &SymmetricMatrix, mu_k: &DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(format!("uncertainty bounds must be positive, got a = {a}, b = {b}")));
        }
        Self::new(SymmetricMatrix::symmetrize(rho_k.as_matrix() * (2.0 * a.sqrt())), mu_k * b.sqrt())
    }

    /// `Ψ(σ) = ½|σρσ^T|² + |μσ^T|²`.
    pub fn psi(&self, sigma: &DMatrix<f64>) -> f64 {
        0.5 * (sigma * self.rho.as_matrix() * sigma.transpose()).norm_squared() + (&self.mu * sigma.transpose()).norm_squared()
    }

    /// `½⟨ρ, UρU⟩ + ⟨τ, U⟩`.
    pub fn psi_u(&self, u: &DMatrix<f64>) -> f64 {
        let r = self.rho.as_matrix();
        0.5 * r.dot(&(u * r * u)) + self.tau.dot(u)
    }
}

/// Optimal transform for one oscillator.
#[derive(Clone, Debug, PartialEq)]
pub struct BalancingResult {
    /// Symmetric positive definite `σ = sqrt(U)`.
    pub s: DMatrix<f64>,
    pub lambda: f64,
    pub u: SymmetricMatrix,
    /// Larger eigenvalue of `U`; the other is its reciprocal.
    pub varsigma: f64,
    /// Angle of the eigenvector of `U` belonging to `varsigma`, in `(-π/2, π/2]`.
    pub psi_angle: f64,
    pub psi_before: f64,
    pub psi_after: f64,
    pub newton_iterations: usize,
    /// Relative residual of `ρUρ + τ - (λ/2)U^{-1} = 0`.
    pub stationarity_residual: f64,
}

fn require_tau(tau: &SymmetricMatrix) -> Result<(SymmetricMatrix, f64)> {
    let ev = symmetric_eigenvalues(tau)?;
    let lo = ev.min();
    if !(lo > 1e-12 * ev.max().abs().max(f64::MIN_POSITIVE)) || ev.max() <= 0.0 {
        return Err(Error::RankDeficientMu(lo));
    }
    Ok((spd_inv_sqrt(tau)?, ev.iter().product()))
}

pub fn minimize_psi_one_mode(p: &OneModeBalanceProblem) -> Result<BalancingResult> {
    let (ti, det_tau) = require_tau(&p.tau)?;
    let rt = p.rho.congruence(ti.as_matrix());
    let r = symmetric_eigenvalues(&rt)?;
    let nl = newton_lambda(r[0], r[1], det_tau)?;
    let lambda = nl.lambda;
    let t = symmetric_matrix_function(&rt, |z| f_lambda(lambda, z))?;
    let u = t.congruence(ti.as_matrix());
    let s = spd_sqrt(&u)?.into_inner();

    let rm = p.rho.as_matrix();
    let uinv = u.as_matrix().clone().try_inverse().ok_or_else(|| Error::NonPositive("balancing matrix U".into()))?;
    let stat = rm * u.as_matrix() * rm + p.tau.as_matrix() - uinv * (lambda / 2.0);
    let stat_scale = (rm * u.as_matrix() * rm).norm() + p.tau.norm();

    let e = nalgebra::SymmetricEigen::new(u.as_matrix().clone());
    let imax = if e.eigenvalues[0] >= e.eigenvalues[1] { 0 } else { 1 };
    let v = e.eigenvectors.column(imax);
    // U = R(ψ)^T diag(ς, 1/ς) R(ψ): the ς-eigenvector is (cos ψ, -sin ψ)
    let mut psi_angle = (-v[1]).atan2(v[0]);
    if psi_angle <= -std::f64::consts::FRAC_PI_2 {
        psi_angle += std::f64::consts::PI;
    } else if psi_angle > std::f64::consts::FRAC_PI_2 {
        psi_angle -= std::f64::consts::PI;
    }

    Ok(BalancingResult {
        psi_before: p.psi(&DMatrix::identity(2, 2)),
        psi_after: p.psi_u(u.as_matrix()),
        s,
        lambda,
        varsigma: e.eigenvalues[imax],
        psi_angle,
        u,
        newton_iterations: nl.iterations,
        stationarity_residual: stat.norm() / stat_scale.max(f64::MIN_POSITIVE),
    })
}

/// Lowest `Ψ` found by random unimodular probes (around the optimum and globally).
pub fn probe_one_mode(p: &OneModeBalanceProblem, result: &BalancingResult, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for i in 0..probes {
        let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let psi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let sq = if i % 2 == 0 { rng.random_range(-3.0..3.0) } else { rng.random_range(-0.05..0.05) };
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![f64::exp(sq), f64::exp(-sq)]));
        let g = rotation(phi) * d * rotation(psi);
        let sigma = if i % 2 == 0 { g } else { g * &result.s };
        best = best.min(p.psi(&sigma));
    }
    best
}

/// Balanced cascade and the per-oscillator outcomes.
#[derive(Clone, Debug)]
pub struct CascadeBalance {
    pub transformed: CascadeModel,
    pub results: Vec<BalancingResult>,
    pub ratios: Vec<f64>,
    pub total_ratio: f64,
}

/// Balances every oscillator independently with bounds `(a_k, b_k)`.
pub fn balance_cascade(c: &CascadeModel, g: &GradientSet, bounds: &[(f64, f64)]) -> Result<CascadeBalance> {
    if g.len() != c.len() || bounds.len() != c.len() {
        return Err(Error::dim("balancing inputs", c.len(), bounds.len().min(g.len())));
    }
    let mut results = vec![];
    for (k, &(a, b)) in bounds.iter().enumerate() {
        let n = c.oscillator(k).n();
        if n != 2 {
            return Err(Error::NotOneMode(n));
        }
        let p = OneModeBalanceProblem::from_gradients(&g.rho[k], &g.mu[k], a, b)?;
        let mut r = minimize_psi_one_mode(&p)?;
        r.psi_before = psi_k(g.rho[k].as_matrix(), &g.mu[k], a, b, &DMatrix::identity(2, 2));
        r.psi_after = psi_k(g.rho[k].as_matrix(), &g.mu[k], a, b, &r.s);
        results.push(r);
    }
    let s: Vec<DMatrix<f64>> = results.iter().map(|r| r.s.clone()).collect();
    let transformed = c.transformed(&s)?;
    let ratios = results.iter().map(|r| r.psi_after / r.psi_before).collect();
    let total_ratio = results.iter().map(|r| r.psi_after).sum::<f64>() / results.iter().map(|r| r.psi_before).sum::<f64>();
    Ok(CascadeBalance {
        transformed,
        results,
        ratios,
        total_ratio,
    })
}

/// Minimum of `½⟨ρ, UρU⟩ + ⟨τ, U⟩` over positive definite `U` with `det U = 1`, any order.
pub fn multimode_lower_bound(rho: &SymmetricMatrix, tau: &SymmetricMatrix) -> Result<f64> {
    let nu = rho.order();
    if nu < 2 || tau.order() != nu {
        return Err(Error::dim("multimode bound", "matching orders of at least 2", format!("{} and {}", nu, tau.order())));
    }
    let (ti, det_tau) = require_tau(tau)?;
    let rt = rho.congruence(ti.as_matrix());
    let r = symmetric_eigenvalues(&rt)?;
    let nl = newton_lambda_multi(r.as_slice(), det_tau, NEWTON_MAX_ITER)?;
    let t = symmetric_matrix_function(&rt, |z| f_lambda(nl.lambda, z))?;
    let u = t.congruence(ti.as_matrix());
    let rm = rho.as_matrix();
    Ok(0.5 * rm.dot(&(u.as_matrix() * rm * u.as_matrix())) + tau.dot(u.as_matrix()))
}
