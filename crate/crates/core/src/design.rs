//! Control-oriented model and controller synthesis:
//!
//! plant → harmonic output reduction → Davison → series with the power-supply
//! model (lag + Padé delay) → balanced truncation → ZOH, followed by LQ,
//! Kalman and condensed-MPC design on the result.

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::lti::{actuator_bank, balanced_truncate, davison_reduce, series_compose, zoh_discretize, ContinuousModel, DiscreteModel};
use crate::matio::MatrixSet;
use crate::mpc::{condense, BlockingMap, CondensedQp};
use crate::riccati::{KalmanDesign, LqDesign};

/// Least-squares amplitudes of the n=1 cosine/sine pattern from sensor
/// readings at the given toroidal angles.
#[derive(Debug, Clone)]
pub struct SensorReducer {
    pub angles_deg: Vec<f64>,
    /// `2 × n_sensors` left inverse of the harmonic basis.
    pub t_out: Mat,
}

impl SensorReducer {
    pub fn new(angles_deg: &[f64]) -> Result<Self> {
        let n = angles_deg.len();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two sensor angles".into()));
        }
        let m = Mat::from_fn(n, 2, |i, j| {
            let a = angles_deg[i].to_radians();
            if j == 0 { a.cos() } else { a.sin() }
        });
        let t_out = crate::linalg::left_pseudo_inverse(&m)?;
        Ok(SensorReducer {
            angles_deg: angles_deg.to_vec(),
            t_out,
        })
    }

    pub fn reduce(&self, y_m: &Vector) -> Vector {
        &self.t_out * y_m
    }
}

/// Tuning and structure of the control-oriented model and controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Control period (s).
    pub ts: f64,
    /// Power-supply first-order lag (s).
    pub ps_lag: f64,
    /// Power-supply pure delay (s).
    pub ps_delay: f64,
    pub pade_order: usize,
    /// Modes kept by the Davison step (capped at the plant order).
    pub davison_order: usize,
    /// Final order after balanced truncation.
    pub reduced_order: usize,
    pub q_unstable: f64,
    pub q_stable: f64,
    pub r: f64,
    pub qk_unstable: f64,
    pub qk_stable: f64,
    pub rk: f64,
    /// Largest accepted relative frequency-response deviation of the reduced
    /// model over [0.1, 100] rad/s.
    pub freq_gate: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            ts: 0.75e-3,
            ps_lag: 7.5e-3,
            ps_delay: 2.5e-3,
            pade_order: 2,
            davison_order: 120,
            reduced_order: 50,
            q_unstable: 10.0,
            q_stable: 0.1,
            r: 1e-2,
            qk_unstable: 0.1,
            qk_stable: 0.01,
            rk: 1.0,
            freq_gate: 0.1,
        }
    }
}

/// Reduced continuous model with unstable pair first, plus reduction data.
#[derive(Debug, Clone)]
pub struct ControlModel {
    pub continuous: ContinuousModel,
    pub discrete: DiscreteModel,
    pub hankel_singular_values: Vec<f64>,
    pub error_bound: f64,
    pub n_unstable: usize,
}

/// Builds the control-oriented model from a plant whose outputs are the raw
/// sensor signals.
pub fn control_model(plant: &ContinuousModel, reducer: &SensorReducer, cfg: &DesignConfig) -> Result<ControlModel> {
    let reduced_outputs = plant.map_outputs(&reducer.t_out)?;
    let k = cfg.davison_order.min(plant.n_x());
    let dav = if k < plant.n_x() {
        davison_reduce(&reduced_outputs, k)?
    } else {
        reduced_outputs
    };
    let ps = actuator_bank(plant.n_u(), cfg.ps_lag, cfg.ps_delay, cfg.pade_order)?;
    let full = series_compose(&ps, &dav)?;
    let bt = balanced_truncate(&full, cfg.reduced_order.min(full.n_x()))?;
    if bt.model.d.amax() != 0.0 {
        return Err(Error::InvalidArgument("control-oriented model must have no feedthrough".into()));
    }
    let discrete = zoh_discretize(&bt.model, cfg.ts)?;
    Ok(ControlModel {
        continuous: bt.model,
        discrete,
        hankel_singular_values: bt.hankel_singular_values,
        error_bound: bt.error_bound,
        n_unstable: bt.n_unstable,
    })
}

/// Diagonal weight with `hi` on the leading `n_hi` states and `lo` elsewhere.
pub fn modal_weight(n: usize, n_hi: usize, hi: f64, lo: f64) -> Mat {
    Mat::from_diagonal(&Vector::from_fn(n, |i, _| if i < n_hi { hi } else { lo }))
}

/// Everything the closed loop needs.
#[derive(Debug, Clone)]
pub struct ControllerDesign {
    pub model: ControlModel,
    pub reducer: SensorReducer,
    pub lq: LqDesign,
    pub kalman: KalmanDesign,
    pub config: DesignConfig,
}

impl ControllerDesign {
    pub fn new(plant: &ContinuousModel, reducer: SensorReducer, cfg: &DesignConfig) -> Result<Self> {
        let model = control_model(plant, &reducer, cfg)?;
        let n = model.discrete.n_x();
        let nu = model.discrete.n_u();
        let ny = model.discrete.n_y();
        let nh = model.n_unstable;
        let q = modal_weight(n, nh, cfg.q_unstable, cfg.q_stable);
        let r = Mat::identity(nu, nu) * cfg.r;
        let lq = LqDesign::new(&model.discrete, q, r)?;
        let qk = modal_weight(n, nh, cfg.qk_unstable, cfg.qk_stable);
        let rk = Mat::identity(ny, ny) * cfg.rk;
        let kalman = KalmanDesign::new(&model.discrete, qk, rk)?;
        Ok(ControllerDesign {
            model,
            reducer,
            lq,
            kalman,
            config: cfg.clone(),
        })
    }

    /// Condensed MPC problem for this design.
    pub fn mpc_qp(&self, blocking: &BlockingMap, bounds: &Bounds) -> Result<CondensedQp> {
        condense(&self.model.discrete, &self.lq.q, &self.lq.r, &self.lq.p, blocking, bounds)
    }

    pub fn to_matrix_set(&self) -> MatrixSet {
        let mut s = self.model.discrete.to_matrix_set();
        for (name, m) in self.lq.to_matrix_set().iter() {
            s.insert(name, m.clone());
        }
        for (name, m) in self.kalman.to_matrix_set().iter() {
            s.insert(name, m.clone());
        }
        s.insert("T_out", self.reducer.t_out.clone());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{build_surrogate, SurrogateConfig};

    #[test]
    fn reducer_inverts_harmonic_basis() {
        let angles = [39.0, 101.0, 159.0, 221.0, 279.0, 341.0];
        let r = SensorReducer::new(&angles).unwrap();
        let m = Mat::from_fn(6, 2, |i, j| {
            let a = f64::to_radians(angles[i]);
            if j == 0 { a.cos() } else { a.sin() }
        });
        assert!((&r.t_out * &m - Mat::identity(2, 2)).amax() < 1e-12);
        let y = Vector::from_fn(6, |i, _| 3.0 * angles[i].to_radians().cos() - 2.0 * angles[i].to_radians().sin());
        let amp = r.reduce(&y);
        assert!((amp[0] - 3.0).abs() < 1e-12 && (amp[1] + 2.0).abs() < 1e-12);
        assert_eq!(r.reduce(&Vector::zeros(6)), Vector::zeros(2));
    }

    #[test]
    fn nominal_design_is_stabilizing() {
        let cfg = SurrogateConfig::default();
        let plant = build_surrogate(&cfg).unwrap();
        let d = ControllerDesign::new(&plant, SensorReducer::new(&cfg.sensor_angles_deg).unwrap(), &DesignConfig::default()).unwrap();
        assert_eq!(d.model.discrete.n_x(), 50);
        assert_eq!(d.model.n_unstable, 2);
        assert!(d.lq.closed_loop_radius(&d.model.discrete).unwrap() < 1.0);
        assert!(d.kalman.error_radius(&d.model.discrete).unwrap() < 1.0);
    }
}
