//! Discrete algebraic Riccati equation, LQ state feedback and steady-state
//! Kalman filter design.

use nalgebra::{Cholesky, SVD};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, eigenvalues, norm2, stein, symmetrize, CMat, Mat, C64};
use crate::lti::DiscreteModel;
use crate::matio::MatrixSet;

/// Relative DARE residual accepted for a returned solution.
pub const DARE_TOL: f64 = 1e-8;
/// Relative tolerance of the eigenvalue (PBH) rank tests.
pub const PBH_TOL: f64 = 1e-9;

const SDA_MAX_ITER: usize = 100;
const NEWTON_MAX_STEPS: usize = 4;

/// Relative spectral-norm residual of
/// `P = AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q`.
pub fn dare_residual(p: &Mat, a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> f64 {
    let atpb = a.transpose() * p * b;
    let inner = r + b.transpose() * p * b;
    let corr = match inner.clone().lu().solve(&atpb.transpose()) {
        Some(x) => &atpb * x,
        None => return f64::INFINITY,
    };
    let res = a.transpose() * p * a - corr + q - p;
    norm2(&res) / norm2(p).max(f64::MIN_POSITIVE)
}

fn check_square(m: &Mat, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn require_pd(m: &Mat, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

fn require_psd(m: &Mat, what: &str) -> Result<()> {
    let s = symmetrize(m);
    if (m - &s).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    if s.nrows() > 0 {
        let min = nalgebra::SymmetricEigen::new(s.clone()).eigenvalues.min();
        if min < -1e-12 * s.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!("{what} is not positive semidefinite")));
        }
    }
    Ok(())
}

/// PBH test: `rank [A − λI, B] = n` for every eigenvalue with `|λ| ≥ 1`.
pub fn is_stabilizable(a: &Mat, b: &Mat) -> Result<bool> {
    let n = a.nrows();
    let scale = a.amax().max(b.amax()).max(1.0);
    for lam in eigenvalues(a)? {
        if lam.norm() < 1.0 - PBH_TOL {
            continue;
        }
        let mut m = CMat::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = C64::new(a[(i, j)], 0.0);
            }
            m[(i, i)] -= lam;
            for j in 0..b.ncols() {
                m[(i, n + j)] = C64::new(b[(i, j)], 0.0);
            }
        }
        let smin = SVD::new(m, false, false).singular_values.min();
        if smin <= PBH_TOL * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// PBH detectability of `(A, C)`, the dual of [`is_stabilizable`].
pub fn is_detectable(a: &Mat, c: &Mat) -> Result<bool> {
    is_stabilizable(&a.transpose(), &c.transpose())
}

/// Stabilizing solution of the DARE by the structured doubling algorithm,
/// refined with Newton (Kleinman–Hewer) steps until the relative residual is
/// at most [`DARE_TOL`].
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let n = a.nrows();
    check_square(a, n, "A")?;
    check_square(q, n, "Q")?;
    check_square(r, b.ncols(), "R")?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
    }
    if !(all_finite(a) && all_finite(b) && all_finite(q) && all_finite(r)) {
        return Err(Error::NonFinite("DARE data".into()));
    }
    let r_chol = require_pd(r, "R")?;
    require_psd(q, "Q")?;
    if !is_stabilizable(a, b)? {
        return Err(Error::NotStabilizable);
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    let eye = Mat::identity(n, n);
    let mut ak = a.clone();
    let mut gk = symmetrize(&(b * r_chol.solve(&b.transpose())));
    let mut hk = symmetrize(q);
    for _ in 0..SDA_MAX_ITER {
        let w = (&eye + &gk * &hk).lu();
        let w_a = w.solve(&ak).ok_or_else(|| riccati_err("doubling step singular", f64::NAN))?;
        let w_g = w.solve(&gk).ok_or_else(|| riccati_err("doubling step singular", f64::NAN))?;
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_a));
        let g_next = symmetrize(&(&gk + &ak * &w_g * ak.transpose()));
        let a_next = &ak * &w_a;
        let delta = (&h_next - &hk).amax();
        hk = h_next;
        gk = g_next;
        ak = a_next;
        if !all_finite(&hk) {
            return Err(riccati_err("doubling iteration diverged", f64::INFINITY));
        }
        if delta <= 1e-15 * hk.amax().max(f64::MIN_POSITIVE) || ak.amax() < 1e-300 {
            break;
        }
    }

    let mut p = hk;
    let mut res = dare_residual(&p, a, b, q, r);
    let mut steps = 0;
    while res > 1e-12 && steps < NEWTON_MAX_STEPS {
        let Ok(next) = newton_step(&p, a, b, q, r) else {
            break;
        };
        let next_res = dare_residual(&next, a, b, q, r);
        if !(next_res < res) {
            break;
        }
        p = next;
        res = next_res;
        steps += 1;
    }
    if !(res <= DARE_TOL) {
        return Err(riccati_err("residual above tolerance", res));
    }
    Ok(p)
}

fn riccati_err(reason: &str, residual: f64) -> Error {
    Error::Riccati {
        reason: reason.to_string(),
        residual,
    }
}

/// One Newton step: with `K` from `P`, solve
/// `P⁺ = (A+BK)ᵀ P⁺ (A+BK) + Q + KᵀRK`.
fn newton_step(p: &Mat, a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let k = lq_gain(p, a, b, r)?;
    let acl = a + b * &k;
    let rhs = symmetrize(&(q + k.transpose() * r * &k));
    Ok(symmetrize(&stein(&acl.transpose(), &rhs)?))
}

/// `K = −(R + BᵀPB)⁻¹ BᵀPA`, so that `u = K x`.
pub fn lq_gain(p: &Mat, a: &Mat, b: &Mat, r: &Mat) -> Result<Mat> {
    let inner = symmetrize(&(r + b.transpose() * p * b));
    let rhs = b.transpose() * p * a;
    let x = match Cholesky::new(inner.clone()) {
        Some(ch) => ch.solve(&rhs),
        None => inner
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("R + BᵀPB".into()))?,
    };
    if !all_finite(&x) {
        return Err(Error::Singular("R + BᵀPB".into()));
    }
    Ok(-x)
}

/// Steady-state current-estimator gain `M` for
/// `x(k|k) = x(k|k−1) + M (y − C x(k|k−1))`, from the dual DARE on `(Aᵀ, Cᵀ)`.
/// Returns `(M, P)` with `P` the steady-state prediction covariance.
pub fn kalman_gain_with_covariance(a: &Mat, c: &Mat, qk: &Mat, rk: &Mat) -> Result<(Mat, Mat)> {
    if !is_detectable(a, c)? {
        return Err(Error::NotDetectable);
    }
    let p = solve_dare(&a.transpose(), &c.transpose(), qk, rk).map_err(|e| match e {
        Error::NotStabilizable => Error::NotDetectable,
        other => other,
    })?;
    let s = symmetrize(&(c * &p * c.transpose() + rk));
    let ch = Cholesky::new(s).ok_or_else(|| Error::Singular("C P Cᵀ + R".into()))?;
    let m = ch.solve(&(c * &p)).transpose();
    Ok((m, p))
}

pub fn kalman_gain(a: &Mat, c: &Mat, qk: &Mat, rk: &Mat) -> Result<Mat> {
    Ok(kalman_gain_with_covariance(a, c, qk, rk)?.0)
}

/// LQ design: terminal cost `P` and gain `K` for `u = K x`.
#[derive(Debug, Clone)]
pub struct LqDesign {
    pub p: Mat,
    pub k: Mat,
    pub q: Mat,
    pub r: Mat,
}

impl LqDesign {
    pub fn new(model: &DiscreteModel, q: Mat, r: Mat) -> Result<Self> {
        let p = solve_dare(&model.a, &model.b, &q, &r)?;
        let k = lq_gain(&p, &model.a, &model.b, &r)?;
        Ok(LqDesign { p, k, q, r })
    }

    /// Spectral radius of `A + BK`.
    pub fn closed_loop_radius(&self, model: &DiscreteModel) -> Result<f64> {
        crate::linalg::spectral_radius(&(&model.a + &model.b * &self.k))
    }

    pub fn to_matrix_set(&self) -> MatrixSet {
        let mut s = MatrixSet::new();
        s.insert("P", self.p.clone());
        s.insert("K_LQ", self.k.clone());
        s.insert("Q_C", self.q.clone());
        s.insert("R_C", self.r.clone());
        s
    }

    pub fn from_matrix_set(set: &MatrixSet) -> Result<Self> {
        Ok(LqDesign {
            p: set.require("P")?.clone(),
            k: set.require("K_LQ")?.clone(),
            q: set.require("Q_C")?.clone(),
            r: set.require("R_C")?.clone(),
        })
    }
}

/// Steady-state Kalman filter design.
#[derive(Debug, Clone)]
pub struct KalmanDesign {
    pub m: Mat,
    /// Steady-state prediction error covariance.
    pub p: Mat,
    pub q: Mat,
    pub r: Mat,
}

impl KalmanDesign {
    pub fn new(model: &DiscreteModel, q: Mat, r: Mat) -> Result<Self> {
        require_pd(&q, "Q_K")?;
        require_pd(&r, "R_K")?;
        let (m, p) = kalman_gain_with_covariance(&model.a, &model.c, &q, &r)?;
        Ok(KalmanDesign { m, p, q, r })
    }

    /// Spectral radius of the estimation-error dynamics `(I − M C) A`.
    pub fn error_radius(&self, model: &DiscreteModel) -> Result<f64> {
        let n = model.n_x();
        crate::linalg::spectral_radius(&((Mat::identity(n, n) - &self.m * &model.c) * &model.a))
    }

    pub fn to_matrix_set(&self) -> MatrixSet {
        let mut s = MatrixSet::new();
        s.insert("M_K", self.m.clone());
        s.insert("P_K", self.p.clone());
        s.insert("Q_K", self.q.clone());
        s.insert("R_K", self.r.clone());
        s
    }

    pub fn from_matrix_set(set: &MatrixSet) -> Result<Self> {
        Ok(KalmanDesign {
            m: set.require("M_K")?.clone(),
            p: set.require("P_K")?.clone(),
            q: set.require("Q_K")?.clone(),
            r: set.require("R_K")?.clone(),
        })
    }
}
