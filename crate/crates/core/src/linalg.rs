//! Dense linear-algebra helpers shared by the model, design and solver code.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Deflation tolerances tried in turn; the first that converges is used.
const SCHUR_TOLERANCES: [f64; 4] = [f64::EPSILON, 1e-14, 1e-13, 1e-12];

fn schur_budget(n: usize) -> usize {
    30 * n + 100
}

/// Diagonal similarity `D⁻¹ A D` with power-of-two entries that equalizes row
/// and column norms (Parlett–Reinsch). Returns the balanced matrix and `D`.
pub fn balance(a: &Mat) -> (Mat, Vec<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![1.0; n];
    let radix = 2.0_f64;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut c2, r2) = (c, r);
            let g = r2 / radix;
            while c2 < g {
                f *= radix;
                c2 *= radix * radix;
            }
            let g = r2 * radix;
            while c2 > g {
                f /= radix;
                c2 /= radix * radix;
            }
            if (c * f + r / f) < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if all_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a real square matrix, via the real Schur form.
pub fn eigenvalues(a: &Mat) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (b, _) = balance(a);
    let schur = SCHUR_TOLERANCES
        .iter()
        .find_map(|&eps| Schur::try_new(b.clone(), eps, schur_budget(a.nrows())))
        .ok_or_else(|| Error::Convergence("real Schur decomposition".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().fold(0.0_f64, |acc, l| acc.max(l.norm())))
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Complex eigen-decomposition `A V = V diag(values)` with unit-norm columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: CMat,
}

/// Full eigen-decomposition from the complex Schur form, eigenvectors by
/// back-substitution on the triangular factor. Fails with `Defective` when the
/// eigenvector matrix is numerically singular (relative tolerance 1e-9).
pub fn eigen_decompose(a: &Mat) -> Result<Eigen> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Eigen {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        });
    }
    let (b, scale) = balance(a);
    let ac: CMat = b.map(|v| C64::new(v, 0.0));
    let (q, t) = SCHUR_TOLERANCES
        .iter()
        .find_map(|&eps| Schur::try_new(ac.clone(), eps, schur_budget(n)))
        .ok_or_else(|| Error::Convergence("complex Schur decomposition".into()))?
        .unpack();
    let tnorm = t.iter().fold(0.0_f64, |acc, v| acc.max(v.norm())).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * tnorm;

    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut vectors = CMat::zeros(n, n);
    let mut v = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let lam = t[(k, k)];
        v.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        v[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * v[j];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            v[i] = -s / d;
        }
        let mut col = CMat::zeros(n, 1);
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..=k {
                s += q[(i, j)] * v[j];
            }
            col[(i, 0)] = s * scale[i];
        }
        let nrm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            vectors[(i, k)] = col[(i, 0)] / nrm;
        }
    }

    let sv = vectors.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 1e-9 * smax) {
        return Err(Error::Defective(format!(
            "eigenvector matrix condition {:.3e}",
            smax / smin
        )));
    }
    Ok(Eigen { values, vectors })
}

pub fn solve(a: &Mat, b: &Mat, what: &str) -> Result<Mat> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("solve for {what}")));
    }
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if !all_finite(&x) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}

pub fn inverse(a: &Mat, what: &str) -> Result<Mat> {
    solve(a, &Mat::identity(a.nrows(), a.nrows()), what)
}

/// Factor `F` with `W = F Fᵀ` for a symmetric positive semidefinite `W`;
/// negative rounding-level eigenvalues are clamped to zero.
pub fn psd_factor(w: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(w));
    let mut f = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// (min, max) eigenvalue of a symmetric matrix.
pub fn sym_eig_range(m: &Mat) -> (f64, f64) {
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    (ev.min(), ev.max())
}

/// Solves the Stein equation `X = A X Aᵀ + Q` for `ρ(A) < 1` by squared Smith
/// iteration.
pub fn stein(a: &Mat, q: &Mat) -> Result<Mat> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        ak = &ak * &ak;
        if !all_finite(&ak) {
            return Err(Error::Convergence("Stein iteration diverged".into()));
        }
        if max_abs(&inc) <= 1e-17 * max_abs(&x).max(f64::MIN_POSITIVE) || max_abs(&ak) < 1e-300 {
            break;
        }
    }
    let resid = &x - a * &x * a.transpose() - q;
    let scale = max_abs(&x).max(max_abs(q)).max(f64::MIN_POSITIVE);
    if max_abs(&resid) > 1e-8 * scale {
        return Err(Error::Convergence(format!(
            "Stein residual {:.3e}",
            max_abs(&resid) / scale
        )));
    }
    Ok(x)
}

/// Solves the continuous Lyapunov equation `A X + X Aᵀ + Q = 0` for Hurwitz
/// `A` through a Cayley transform to a Stein equation.
pub fn lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eig = eigenvalues(a)?;
    if eig.iter().any(|l| l.re >= 0.0) {
        return Err(Error::InvalidArgument(
            "Lyapunov equation requires a Hurwitz matrix".into(),
        ));
    }
    let mags: Vec<f64> = eig.iter().map(|l| l.norm()).collect();
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().cloned().fold(0.0, f64::max);
    let p = (lo * hi).sqrt();
    let id = Mat::identity(n, n);
    let m = a - &id * p;
    let minv = inverse(&m, "Cayley transform")?;
    let ac = &minv * (a + &id * p);
    let qc = &minv * q * minv.transpose() * (2.0 * p);
    let x = symmetrize(&stein(&ac, &qc)?);
    let resid = a * &x + &x * a.transpose() + q;
    let scale = (max_abs(a) * max_abs(&x)).max(max_abs(q)).max(f64::MIN_POSITIVE);
    if max_abs(&resid) > 1e-7 * scale {
        return Err(Error::Convergence(format!(
            "Lyapunov residual {:.3e}",
            max_abs(&resid) / scale
        )));
    }
    Ok(x)
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Orthonormal basis (as columns) of the null space of a full-row-rank `w`.
pub fn null_space_basis(w: &Mat) -> Result<Mat> {
    let n = w.ncols();
    let r = w.nrows();
    let gram = w * w.transpose();
    let proj = Mat::identity(n, n) - w.transpose() * solve(&gram, w, "row-space projector")?;
    let eig = SymmetricEigen::new(symmetrize(&proj));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut basis = Mat::zeros(n, n - r);
    for (c, &i) in idx.iter().take(n - r).enumerate() {
        basis.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(basis)
}

/// Moore–Penrose pseudo-inverse of a full-column-rank matrix.
pub fn left_pseudo_inverse(m: &Mat) -> Result<Mat> {
    let gram = m.transpose() * m;
    solve(&gram, &m.transpose(), "pseudo-inverse normal equations")
}
