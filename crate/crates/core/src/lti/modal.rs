use nalgebra::SVD;

use super::ContinuousModel;
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, null_space_basis, solve, CMat, Mat, C64};

/// Relative tolerance for classifying an eigenvalue as lying on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-9;

/// Model split into its unstable pair and the stable remainder:
///
/// ```text
/// d/dt [ξ_u]   [Λ_u   0 ] [ξ_u]   [B_u]
///      [ξ_s] = [ 0   Λ_s] [ξ_s] + [B_s] u,     ξ = T_M x
/// ```
///
/// For a complex pair `Λ_u = [[γ, ω], [−ω, γ]]` exactly. For two real unstable
/// eigenvalues `Λ_u = diag(λ₁, λ₂)`, `gamma` is their mean and `omega` is 0.
#[derive(Debug, Clone)]
pub struct ModalModel {
    pub gamma: f64,
    pub omega: f64,
    pub unstable_block: Mat,
    pub lambda_s: Mat,
    pub b_u: Mat,
    pub b_s: Mat,
    pub c_u: Mat,
    pub c_s: Mat,
    pub c_aux_u: Mat,
    pub c_aux_s: Mat,
    pub d: Mat,
    pub d_aux: Mat,
    /// `ξ = T_M x`
    pub t_m: Mat,
    /// `x = T_M⁻¹ ξ`
    pub t_m_inv: Mat,
}

impl ModalModel {
    pub fn n_stable(&self) -> usize {
        self.lambda_s.nrows()
    }

    /// Same model with the unstable block replaced by `[[γ, ω], [−ω, γ]]`.
    pub fn with_unstable(&self, gamma: f64, omega: f64) -> ModalModel {
        let mut out = self.clone();
        out.gamma = gamma;
        out.omega = omega.abs();
        out.unstable_block = rotation_block(gamma, omega);
        out
    }

    /// The model expressed in modal coordinates `ξ`.
    pub fn to_modal_model(&self) -> Result<ContinuousModel> {
        let ns = self.n_stable();
        let n = ns + 2;
        let mut a = Mat::zeros(n, n);
        a.view_mut((0, 0), (2, 2)).copy_from(&self.unstable_block);
        a.view_mut((2, 2), (ns, ns)).copy_from(&self.lambda_s);
        let b = stack_rows(&self.b_u, &self.b_s);
        let c = stack_cols(&self.c_u, &self.c_s);
        let c_aux = stack_cols(&self.c_aux_u, &self.c_aux_s);
        ContinuousModel::from_parts(a, b, c, self.d.clone(), c_aux, self.d_aux.clone())
    }

    /// Transforms back to the original state coordinates.
    pub fn reassemble(&self) -> Result<ContinuousModel> {
        self.to_modal_model()?.transform(&self.t_m, &self.t_m_inv)
    }
}

pub(crate) fn rotation_block(gamma: f64, omega: f64) -> Mat {
    Mat::from_row_slice(2, 2, &[gamma, omega, -omega, gamma])
}

fn stack_rows(top: &Mat, bottom: &Mat) -> Mat {
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

fn stack_cols(left: &Mat, right: &Mat) -> Mat {
    let mut out = Mat::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}

/// Eigenvector of `a` for eigenvalue `lam` by shifted inverse iteration.
fn inverse_iteration(a: &Mat, lam: C64) -> Result<Vec<C64>> {
    let n = a.nrows();
    let shift = lam + C64::new(1.0, 1.0) * (1e-10 * lam.norm().max(1.0));
    let mut m: CMat = a.map(|v| C64::new(v, 0.0));
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    let mut x = CMat::from_fn(n, 1, |i, _| C64::new(1.0 + 0.1 * (i as f64).sin(), 0.3 * (i as f64).cos()));
    for _ in 0..4 {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::Singular("inverse iteration".into()))?;
        let nrm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(nrm.is_finite() && nrm > 0.0) {
            return Err(Error::Convergence("inverse iteration".into()));
        }
        x /= C64::new(nrm, 0.0);
    }
    Ok(x.iter().copied().collect())
}

/// Real basis `[Re v, Im v]` with the two columns orthogonal and the first of
/// unit length. When `vᵀv ≈ 0` the phase is fixed by the largest component.
fn real_pair_basis(v: &[C64]) -> Mat {
    let n = v.len();
    let vtv: C64 = v.iter().map(|z| z * z).sum();
    let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let phase = if vtv.norm() > 1e-8 * vnorm2 {
        C64::from_polar(1.0, -0.5 * vtv.arg())
    } else {
        let big = v.iter().copied().fold(C64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
        C64::from_polar(1.0, -big.arg())
    };
    let mut out = Mat::zeros(n, 2);
    for (i, z) in v.iter().enumerate() {
        let w = z * phase;
        out[(i, 0)] = w.re;
        out[(i, 1)] = w.im;
    }
    let s = out.column(0).norm();
    if s > 0.0 {
        out /= s;
    }
    out
}

/// Right/left basis for a (possibly repeated) real eigenvalue pair.
fn real_double_bases(a: &Mat, lam: f64) -> Result<(Mat, Mat)> {
    let n = a.nrows();
    let shifted = a - Mat::identity(n, n) * lam;
    let null2 = |m: &Mat| -> Result<Mat> {
        let svd = SVD::new(m.clone(), false, true);
        let vt = svd.v_t.unwrap();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let scale = svd.singular_values.max().max(1.0);
        if svd.singular_values[idx[1]] > 1e-6 * scale {
            return Err(Error::Defective("repeated unstable eigenvalue without two independent eigenvectors".into()));
        }
        let mut out = Mat::zeros(n, 2);
        out.set_column(0, &vt.row(idx[0]).transpose());
        out.set_column(1, &vt.row(idx[1]).transpose());
        Ok(out)
    };
    Ok((null2(&shifted)?, null2(&shifted.transpose())?))
}

/// Splits `m` into its unstable pair and a stable remainder.
pub fn modal_decompose(m: &ContinuousModel) -> Result<ModalModel> {
    let eig = eigenvalues(&m.a)?;
    if let Some(l) = eig.iter().find(|l| l.re.abs() <= AXIS_TOL * l.norm().max(1.0)) {
        return Err(Error::OnImaginaryAxis(format!("{l}")));
    }
    let mut unstable: Vec<C64> = eig.iter().copied().filter(|l| l.re > 0.0).collect();
    match unstable.len() {
        0 | 1 => return Err(Error::NoUnstablePair),
        2 => {}
        k => return Err(Error::TooManyUnstable(k)),
    }
    unstable.sort_by(|a, b| b.im.total_cmp(&a.im));
    let top = unstable[0];
    let n = m.n_x();

    let is_complex = top.im.abs() > AXIS_TOL * top.norm().max(1.0);
    let (v_u, wr, gamma, omega, block) = if is_complex {
        let v = inverse_iteration(&m.a, top)?;
        let w = inverse_iteration(&m.a.transpose(), top)?;
        let v_u = real_pair_basis(&v);
        let mut wr = Mat::zeros(n, 2);
        for (i, z) in w.iter().enumerate() {
            wr[(i, 0)] = z.re;
            wr[(i, 1)] = z.im;
        }
        (v_u, wr, top.re, top.im, rotation_block(top.re, top.im))
    } else {
        let (l1, l2) = (unstable[0].re.max(unstable[1].re), unstable[0].re.min(unstable[1].re));
        let (v_u, wr) = if (l1 - l2).abs() <= 1e-9 * l1.abs().max(1.0) {
            real_double_bases(&m.a, 0.5 * (l1 + l2))?
        } else {
            let real_vec = |v: Vec<C64>| -> Mat {
                let b = real_pair_basis(&v);
                b.columns(0, 1).into_owned()
            };
            let v1 = real_vec(inverse_iteration(&m.a, C64::new(l1, 0.0))?);
            let v2 = real_vec(inverse_iteration(&m.a, C64::new(l2, 0.0))?);
            let w1 = real_vec(inverse_iteration(&m.a.transpose(), C64::new(l1, 0.0))?);
            let w2 = real_vec(inverse_iteration(&m.a.transpose(), C64::new(l2, 0.0))?);
            (stack_cols(&v1, &v2), stack_cols(&w1, &w2))
        };
        (v_u, wr, 0.5 * (l1 + l2), 0.0, Mat::from_row_slice(2, 2, &[l1, 0.0, 0.0, l2]))
    };

    // W_u spans the left invariant subspace and satisfies W_u V_u = I.
    let w_u = solve(&(wr.transpose() * &v_u), &wr.transpose(), "unstable left basis")?;
    let v_s = null_space_basis(&w_u)?;
    let w_s = v_s.transpose() * (Mat::identity(n, n) - &v_u * &w_u);
    let t_m = stack_rows(&w_u, &w_s);
    let t_m_inv = stack_cols(&v_u, &v_s);

    let lambda_s = &w_s * &m.a * &v_s;
    if let Some(l) = eigenvalues(&lambda_s)?.iter().find(|l| l.re >= 0.0) {
        return Err(Error::Defective(format!("stable block retains eigenvalue {l}")));
    }
    // the projected unstable block must agree with the exact one
    let proj = &w_u * &m.a * &v_u;
    let dev = (&proj - &block).abs().max();
    if dev > 1e-6 * block.abs().max().max(1.0) {
        return Err(Error::Defective(format!("unstable block mismatch {dev:.3e}")));
    }

    Ok(ModalModel {
        gamma,
        omega,
        unstable_block: block,
        lambda_s,
        b_u: &w_u * &m.b,
        b_s: &w_s * &m.b,
        c_u: &m.c * &v_u,
        c_s: &m.c * &v_s,
        c_aux_u: &m.c_aux * &v_u,
        c_aux_s: &m.c_aux * &v_s,
        d: m.d.clone(),
        d_aux: m.d_aux.clone(),
        t_m,
        t_m_inv,
    })
}
