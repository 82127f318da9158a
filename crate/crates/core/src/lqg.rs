//! LQG baseline: steady-state Kalman filter plus LQ state feedback, with
//! optional estimator wind-up protection (EWP).

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::lti::DiscreteModel;

/// Kalman filter memory: `x_hat = x(k|k)`, `x_pred = x(k|k−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x_hat: Vector,
    pub x_pred: Vector,
}

impl EstimatorState {
    pub fn zeros(n: usize) -> Self {
        EstimatorState {
            x_hat: Vector::zeros(n),
            x_pred: Vector::zeros(n),
        }
    }

    pub fn from_estimate(x_hat: Vector) -> Self {
        EstimatorState {
            x_pred: x_hat.clone(),
            x_hat,
        }
    }
}

/// Predicts with the previously applied input and corrects with the new
/// measurement:
///
/// ```text
/// x(k|k−1) = A x(k−1|k−1) + B u(k−1)
/// x(k|k)   = x(k|k−1) + M (y(k) − C x(k|k−1))
/// ```
pub fn kf_step(est: &EstimatorState, u_prev: &Vector, y: &Vector, model: &DiscreteModel, m_k: &Mat) -> Result<EstimatorState> {
    let n = model.n_x();
    if est.x_hat.len() != n || u_prev.len() != model.n_u() || y.len() != model.n_y() {
        return Err(Error::Dimension("kf_step vector sizes".into()));
    }
    if m_k.nrows() != n || m_k.ncols() != model.n_y() {
        return Err(Error::Dimension(format!(
            "filter gain is {}x{}, expected {n}x{}",
            m_k.nrows(),
            m_k.ncols(),
            model.n_y()
        )));
    }
    let x_pred = &model.a * &est.x_hat + &model.b * u_prev;
    let innov = y - &model.c * &x_pred;
    let x_hat = &x_pred + m_k * innov;
    Ok(EstimatorState { x_hat, x_pred })
}

/// Returns `(u_command, u_for_estimator)`. The command is `K x_hat`; with EWP
/// the estimator is fed the saturated command instead.
pub fn lqg_control(x_hat: &Vector, k_lq: &Mat, ewp: bool, bounds: &Bounds) -> Result<(Vector, Vector)> {
    if k_lq.ncols() != x_hat.len() {
        return Err(Error::Dimension("LQ gain vs state estimate".into()));
    }
    let u = k_lq * x_hat;
    if !ewp {
        return Ok((u.clone(), u));
    }
    if bounds.len() != u.len() {
        return Err(Error::Dimension("bounds vs input count".into()));
    }
    if !bounds.is_finite() {
        return Err(Error::InvalidArgument("estimator wind-up protection needs finite bounds".into()));
    }
    let clipped = bounds.clip(&u);
    Ok((u, clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::kalman_gain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_state() -> DiscreteModel {
        DiscreteModel::new(
            Mat::from_row_slice(3, 3, &[1.02, 0.1, 0.0, -0.1, 0.95, 0.05, 0.0, 0.2, 0.7]),
            Mat::from_row_slice(3, 2, &[0.1, 0.0, 0.0, 0.2, 0.05, 0.05]),
            Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.0]),
            Mat::zeros(2, 2),
            1e-3,
        )
        .unwrap()
    }

    #[test]
    fn zero_innovation_keeps_prediction() {
        let m = three_state();
        let mk = Mat::from_element(3, 2, 0.3);
        let est = EstimatorState::from_estimate(Vector::from_vec(vec![1.0, -2.0, 0.5]));
        let u = Vector::from_vec(vec![0.3, -0.1]);
        let pred = &m.a * &est.x_hat + &m.b * &u;
        let next = kf_step(&est, &u, &(&m.c * &pred), &m, &mk).unwrap();
        assert_eq!(next.x_hat, next.x_pred);
        assert_eq!(next.x_pred, pred);
    }

    #[test]
    fn zero_gain_is_open_loop_prediction() {
        let m = three_state();
        let est = EstimatorState::from_estimate(Vector::from_vec(vec![1.0, 0.0, 0.0]));
        let u = Vector::from_vec(vec![1.0, 1.0]);
        let next = kf_step(&est, &u, &Vector::from_vec(vec![9.0, 9.0]), &m, &Mat::zeros(3, 2)).unwrap();
        assert_eq!(next.x_hat, &m.a * &est.x_hat + &m.b * &u);
    }

    /// The filter is linear: x(k|k) = Φᵏ x₀ + Σ Φ^{k−1−j} ((I−MC) B u_j + M y_{j+1})
    /// with Φ = (I − MC) A. The oracle evaluates that sum with explicit powers.
    #[test]
    fn recursion_matches_unrolled_sum() {
        let m = three_state();
        let mk = kalman_gain(&m.a, &m.c, &(Mat::identity(3, 3) * 0.1), &Mat::identity(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let steps = 200;
        let us: Vec<Vector> = (0..steps).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
        let ys: Vec<Vector> = (0..steps).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
        let x0 = Vector::from_vec(vec![0.4, -0.2, 0.1]);

        let mut est = EstimatorState::from_estimate(x0.clone());
        for k in 0..steps {
            est = kf_step(&est, &us[k], &ys[k], &m, &mk).unwrap();
        }

        let i_mc = Mat::identity(3, 3) - &mk * &m.c;
        let phi = &i_mc * &m.a;
        let mut powers = vec![Mat::identity(3, 3)];
        for j in 1..=steps {
            powers.push(&powers[j - 1] * &phi);
        }
        let mut oracle = &powers[steps] * &x0;
        for j in 0..steps {
            oracle += &powers[steps - 1 - j] * (&i_mc * &m.b * &us[j] + &mk * &ys[j]);
        }
        assert!((est.x_hat - oracle).amax() < 1e-9);
    }

    #[test]
    fn zero_estimate_gives_zero_input() {
        let b = Bounds::symmetric(2, 34.0).unwrap();
        let k = Mat::from_element(2, 3, 5.0);
        for ewp in [false, true] {
            let (u, ue) = lqg_control(&Vector::zeros(3), &k, ewp, &b).unwrap();
            assert_eq!(u, Vector::zeros(2));
            assert_eq!(ue, Vector::zeros(2));
        }
    }

    #[test]
    fn ewp_feeds_clipped_input() {
        let b = Bounds::symmetric(2, 34.0).unwrap();
        let k = Mat::from_row_slice(2, 1, &[100.0, -10.0]);
        let (u, ue) = lqg_control(&Vector::from_element(1, 1.0), &k, true, &b).unwrap();
        assert_eq!(u.as_slice(), &[100.0, -10.0]);
        assert_eq!(ue.as_slice(), &[34.0, -10.0]);
        let (_, plain) = lqg_control(&Vector::from_element(1, 1.0), &k, false, &b).unwrap();
        assert_eq!(plain, u);
    }
}
