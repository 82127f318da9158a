use super::{ContinuousModel, DiscreteModel};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, Mat};

/// Zero-order-hold equivalent of `m` at sampling time `ts`.
///
/// `A_d` and `B_d` come out of one exponential of the augmented matrix
/// `[[A, B], [0, 0]]·ts`; `C` and `D` carry over unchanged.
pub fn zoh_discretize(m: &ContinuousModel, ts: f64) -> Result<DiscreteModel> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::InvalidArgument(format!("sampling time must be positive, got {ts}")));
    }
    let (nx, nu) = (m.n_x(), m.n_u());
    let mut aug = Mat::zeros(nx + nu, nx + nu);
    aug.view_mut((0, 0), (nx, nx)).copy_from(&(&m.a * ts));
    aug.view_mut((0, nx), (nx, nu)).copy_from(&(&m.b * ts));
    let e = aug.exp();
    if !all_finite(&e) {
        return Err(Error::NonFinite("matrix exponential overflowed (A·Ts too large)".into()));
    }
    let ad = e.view((0, 0), (nx, nx)).into_owned();
    let bd = e.view((0, nx), (nx, nu)).into_owned();
    DiscreteModel::new(ad, bd, m.c.clone(), m.d.clone(), ts)
}
