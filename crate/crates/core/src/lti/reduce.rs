//! Order reduction: dominant-mode (Davison) retention with static-gain
//! correction, and balanced truncation of the stable part.

use super::modal::modal_decompose;
use super::ContinuousModel;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, eigen_decompose, lyapunov, psd_factor, solve, Mat, C64};

/// Keeps the `k` eigenvalues of largest real part (unstable modes are always
/// among them). The discarded modes are residualized: their static gain is
/// folded into the feedthrough so the DC gain of the model is preserved.
///
/// The result is in real modal coordinates (1×1 blocks for real eigenvalues,
/// `[[a, b], [−b, a]]` blocks for complex pairs), ordered by decreasing real
/// part.
pub fn davison_reduce(m: &ContinuousModel, k: usize) -> Result<ContinuousModel> {
    let n = m.n_x();
    if k > n {
        return Err(Error::InvalidArgument(format!("requested order {k} exceeds model order {n}")));
    }
    let eig = eigen_decompose(&m.a)?;
    let n_unstable = eig.values.iter().filter(|l| l.re > 0.0).count();
    if k < n_unstable {
        return Err(Error::InvalidArgument(format!(
            "requested order {k} is below the {n_unstable} unstable modes"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (eig.values[i], eig.values[j]);
        b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
    });

    let winv = {
        let lu = eig.vectors.clone().lu();
        lu.try_inverse()
            .ok_or_else(|| Error::Singular("eigenvector matrix".into()))?
    };

    // Walk the sorted spectrum, emitting real basis columns/rows per mode.
    let tol = 1e-9;
    let mut used = vec![false; n];
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &i in &order {
        if used[i] {
            continue;
        }
        used[i] = true;
        let lam = eig.values[i];
        let v: Vec<C64> = eig.vectors.column(i).iter().copied().collect();
        let w: Vec<C64> = winv.row(i).iter().copied().collect();
        if lam.im.abs() <= tol * lam.norm().max(1.0) {
            let big = v.iter().copied().fold(C64::new(0.0, 0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
            let ph = C64::from_polar(1.0, -big.arg());
            right.push(v.iter().map(|z| (z * ph).re).collect());
            left.push(w.iter().map(|z| (z / ph).re).collect());
        } else {
            // find the conjugate partner
            let partner = order
                .iter()
                .copied()
                .filter(|&j| !used[j])
                .min_by(|&a, &b| {
                    (eig.values[a] - lam.conj())
                        .norm()
                        .total_cmp(&(eig.values[b] - lam.conj()).norm())
                })
                .ok_or_else(|| Error::Defective("unpaired complex eigenvalue".into()))?;
            used[partner] = true;
            // take the member with positive imaginary part as v
            let (v, w) = if lam.im > 0.0 {
                (v, w)
            } else {
                (
                    eig.vectors.column(partner).iter().copied().collect::<Vec<_>>(),
                    winv.row(partner).iter().copied().collect::<Vec<_>>(),
                )
            };
            if right.len() + 1 == k {
                return Err(Error::InvalidArgument(format!(
                    "order {k} splits a complex-conjugate pair; use {} or {}",
                    k - 1,
                    k + 1
                )));
            }
            right.push(v.iter().map(|z| z.re).collect());
            right.push(v.iter().map(|z| z.im).collect());
            left.push(w.iter().map(|z| 2.0 * z.re).collect());
            left.push(w.iter().map(|z| -2.0 * z.im).collect());
        }
    }

    let vr = Mat::from_fn(n, n, |r, c| right[c][r]);
    let wl = Mat::from_fn(n, n, |r, c| left[r][c]);
    let (v_keep, v_drop) = (vr.columns(0, k).into_owned(), vr.columns(k, n - k).into_owned());
    let (w_keep, w_drop) = (wl.rows(0, k).into_owned(), wl.rows(k, n - k).into_owned());

    let a_r = &w_keep * &m.a * &v_keep;
    let b_r = &w_keep * &m.b;
    let c_r = &m.c * &v_keep;
    let c_aux_r = &m.c_aux * &v_keep;
    let (mut d, mut d_aux) = (m.d.clone(), m.d_aux.clone());
    if k < n {
        let a_d = &w_drop * &m.a * &v_drop;
        let x_ss = solve(&a_d, &(&w_drop * &m.b), "discarded-mode static gain")?;
        d -= &m.c * &v_drop * &x_ss;
        d_aux -= &m.c_aux * &v_drop * &x_ss;
    }
    ContinuousModel::from_parts(a_r, b_r, c_r, d, c_aux_r, d_aux)
}

/// Balanced-truncation result.
#[derive(Debug, Clone)]
pub struct BalancedReduction {
    pub model: ContinuousModel,
    /// Hankel singular values of the stable part, descending.
    pub hankel_singular_values: Vec<f64>,
    /// `2·Σ` of the discarded Hankel singular values (H∞ error bound of the
    /// stable part).
    pub error_bound: f64,
    pub n_unstable: usize,
}

/// Balanced truncation to order `r`. An unstable pair is split off exactly
/// (modal decomposition) and kept verbatim; only the stable part is balanced
/// and truncated. The returned state order is `[unstable pair, balanced stable]`.
pub fn balanced_truncate(m: &ContinuousModel, r: usize) -> Result<BalancedReduction> {
    let eig = m.eigenvalues()?;
    let n_unstable = eig.iter().filter(|l| l.re > 0.0).count();
    if r < n_unstable {
        return Err(Error::InvalidArgument(format!(
            "target order {r} is below the {n_unstable} unstable modes"
        )));
    }
    if r > m.n_x() {
        return Err(Error::InvalidArgument(format!("target order {r} exceeds model order {}", m.n_x())));
    }

    let (unstable, stable) = if n_unstable == 0 {
        (None, m.clone())
    } else {
        let mm = modal_decompose(m)?;
        let stable = ContinuousModel::from_parts(
            mm.lambda_s.clone(),
            mm.b_s.clone(),
            mm.c_s.clone(),
            mm.d.clone(),
            mm.c_aux_s.clone(),
            mm.d_aux.clone(),
        )?;
        (Some(mm), stable)
    };

    let wc = lyapunov(&stable.a, &(&stable.b * stable.b.transpose()))?;
    let wo = lyapunov(&stable.a.transpose(), &(stable.c.transpose() * &stable.c))?;
    let lc = psd_factor(&wc);
    let lo = psd_factor(&wo);
    let svd = (lo.transpose() * &lc).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let hsv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();

    let rs = r - n_unstable;
    let error_bound = 2.0 * hsv.iter().skip(rs).sum::<f64>();

    let reduced_stable = if rs == stable.n_x() {
        stable.clone()
    } else {
        let ns = stable.n_x();
        let mut t = Mat::zeros(ns, rs);
        let mut ti = Mat::zeros(rs, ns);
        for (c, &i) in idx.iter().take(rs).enumerate() {
            let s = svd.singular_values[i];
            if !(s > 1e-14 * hsv[0].max(f64::MIN_POSITIVE)) {
                return Err(Error::InvalidArgument(format!(
                    "target order {r} exceeds the numerically minimal order"
                )));
            }
            let scale = 1.0 / s.sqrt();
            t.set_column(c, &(&lc * vt.row(i).transpose() * scale));
            ti.set_row(c, &(u.column(i).transpose() * lo.transpose() * scale));
        }
        ContinuousModel::from_parts(
            &ti * &stable.a * &t,
            &ti * &stable.b,
            &stable.c * &t,
            stable.d.clone(),
            &stable.c_aux * &t,
            stable.d_aux.clone(),
        )?
    };

    let model = match unstable {
        None => reduced_stable,
        Some(mm) => ContinuousModel::from_parts(
            block_diag(&[&mm.unstable_block, &reduced_stable.a]),
            vstack(&mm.b_u, &reduced_stable.b),
            hstack(&mm.c_u, &reduced_stable.c),
            reduced_stable.d.clone(),
            hstack(&mm.c_aux_u, &reduced_stable.c_aux),
            reduced_stable.d_aux.clone(),
        )?,
    };
    Ok(BalancedReduction {
        model,
        hankel_singular_values: hsv,
        error_bound,
        n_unstable,
    })
}

fn vstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}
