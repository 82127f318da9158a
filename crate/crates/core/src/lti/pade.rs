use super::ContinuousModel;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, Mat};

/// Padé(order, order) rational approximation of a pure delay `e^{-sτ}` as a
/// state-space model with unit feedthrough sign `(-1)^order`.
///
/// The realization is built in normalized time `p = sτ` (controllable
/// canonical form) and rescaled, which keeps the entries O(1/τ).
pub fn pade_delay(tau: f64, order: usize) -> Result<ContinuousModel> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("delay must be positive, got {tau}")));
    }
    if order == 0 {
        return Err(Error::InvalidArgument("Padé order must be at least 1".into()));
    }
    let n = order;
    // c_k = (2n-k)! n! / ((2n)! k! (n-k)!)
    let coeff: Vec<f64> = (0..=n)
        .map(|k| {
            let mut c = 1.0;
            for i in 0..k {
                c *= (n - i) as f64 / ((2 * n - i) as f64 * (i + 1) as f64);
            }
            c
        })
        .collect();
    let lead = coeff[n];
    // monic denominator p^n + a_{n-1} p^{n-1} + ... + a_0
    let den: Vec<f64> = coeff.iter().map(|c| c / lead).collect();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    // numerator(p) - sign * denominator(p), monic-normalized; degree < n
    let rem: Vec<f64> = (0..n)
        .map(|k| {
            let nk = coeff[k] * if k % 2 == 0 { 1.0 } else { -1.0 };
            (nk - sign * coeff[k]) / lead
        })
        .collect();

    let mut a = Mat::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for k in 0..n {
        a[(n - 1, k)] = -den[k];
    }
    let mut b = Mat::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let c = Mat::from_row_slice(1, n, &rem);
    let d = Mat::from_element(1, 1, sign);
    ContinuousModel::new(a / tau, b / tau, c)?.with_feedthrough(d)
}

/// Unit-gain first-order lag `1 / (τ s + 1)`.
pub fn first_order_lag(tau: f64) -> Result<ContinuousModel> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("time constant must be positive, got {tau}")));
    }
    ContinuousModel::new(
        Mat::from_element(1, 1, -1.0 / tau),
        Mat::from_element(1, 1, 1.0 / tau),
        Mat::from_element(1, 1, 1.0),
    )
}

/// Series connection `u → first → second → y`. States are stacked as
/// `[x_first; x_second]`; the auxiliary outputs are those of `second`.
pub fn series_compose(first: &ContinuousModel, second: &ContinuousModel) -> Result<ContinuousModel> {
    if second.n_u() != first.n_y() {
        return Err(Error::Dimension(format!(
            "series: first has {} outputs, second has {} inputs",
            first.n_y(),
            second.n_u()
        )));
    }
    let (n1, n2) = (first.n_x(), second.n_x());
    let mut a = Mat::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&second.b * &first.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&second.a);
    let mut b = Mat::zeros(n1 + n2, first.n_u());
    b.view_mut((0, 0), (n1, first.n_u())).copy_from(&first.b);
    b.view_mut((n1, 0), (n2, first.n_u())).copy_from(&(&second.b * &first.d));
    let mut c = Mat::zeros(second.n_y(), n1 + n2);
    c.view_mut((0, 0), (second.n_y(), n1)).copy_from(&(&second.d * &first.c));
    c.view_mut((0, n1), (second.n_y(), n2)).copy_from(&second.c);
    let d = &second.d * &first.d;
    let mut c_aux = Mat::zeros(second.n_aux(), n1 + n2);
    c_aux
        .view_mut((0, 0), (second.n_aux(), n1))
        .copy_from(&(&second.d_aux * &first.c));
    c_aux.view_mut((0, n1), (second.n_aux(), n2)).copy_from(&second.c_aux);
    let d_aux = &second.d_aux * &first.d;
    ContinuousModel::from_parts(a, b, c, d, c_aux, d_aux)
}

/// Block-diagonal stacking of independent systems (inputs and outputs are
/// concatenated in order). Auxiliary outputs are dropped.
pub fn parallel_compose(parts: &[ContinuousModel]) -> Result<ContinuousModel> {
    let a: Vec<&Mat> = parts.iter().map(|p| &p.a).collect();
    let b: Vec<&Mat> = parts.iter().map(|p| &p.b).collect();
    let c: Vec<&Mat> = parts.iter().map(|p| &p.c).collect();
    let d: Vec<&Mat> = parts.iter().map(|p| &p.d).collect();
    let a = block_diag(&a);
    let b = block_diag(&b);
    let nx = a.nrows();
    let nu = b.ncols();
    ContinuousModel::from_parts(a, b, block_diag(&c), block_diag(&d), Mat::zeros(0, nx), Mat::zeros(0, nu))
}

/// Power-supply bank: `channels` copies of (Padé delay → first-order lag).
pub fn actuator_bank(channels: usize, lag_tau: f64, delay: f64, pade_order: usize) -> Result<ContinuousModel> {
    let one = series_compose(&pade_delay(delay, pade_order)?, &first_order_lag(lag_tau)?)?;
    parallel_compose(&vec![one; channels])
}
