//! Seeded synthetic stand-in for a high-order resistive-wall-mode plant.
//!
//! State layout: `[ξ₁, ξ₂, ξ_s (n_stable), I (n_coils)]`.
//!
//! * `ξ₁, ξ₂` – cosine/sine components of the unstable n=1 mode, dynamics
//!   `[[γ, ω], [−ω, γ]]`.
//! * `ξ_s` – stable eddy-current modes with log-uniform decay rates.
//! * `I` – coil currents, `L dI/dt = −R I + u`, with a seeded per-coil
//!   resistance spread.
//!
//! Coil currents drive the unstable pair through the n=1 pattern
//! `(cos φ_j, sin φ_j)` and the stable modes through seeded random gains.
//! Sensors read `ξ₁ cos ψ_i + ξ₂ sin ψ_i` plus small seeded stable-mode terms;
//! the auxiliary output returns the coil currents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ContinuousModel;
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const DEFAULT_SENSOR_ANGLES_DEG: [f64; 6] = [39.0, 101.0, 159.0, 221.0, 279.0, 341.0];

/// Coil toroidal angles for 3 rows × 9 sectors at 40°·(i−1).
pub fn default_coil_angles_deg() -> Vec<f64> {
    (0..3).flat_map(|_| (0..9).map(|i| 40.0 * i as f64)).collect()
}

/// Per-coil coupling weights: upper and lower rows couple less than the
/// equatorial row.
pub fn default_coil_gains() -> Vec<f64> {
    [0.8, 1.0, 0.8].iter().flat_map(|&g| std::iter::repeat_n(g, 9)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Growth rate of the unstable pair (1/s).
    pub gamma: f64,
    /// Rotation frequency of the unstable pair (rad/s).
    pub omega: f64,
    pub n_stable: usize,
    /// Decay-rate range (1/s) of the stable modes, sampled log-uniformly.
    pub stable_decay_min: f64,
    pub stable_decay_max: f64,
    pub coil_angles_deg: Vec<f64>,
    pub coil_gains: Vec<f64>,
    pub sensor_angles_deg: Vec<f64>,
    /// Nominal coil L/R time constant (s).
    pub tau_coil: f64,
    /// Nominal coil resistance (Ω).
    pub coil_resistance: f64,
    /// Relative half-width of the uniform per-coil resistance spread.
    pub resistance_spread: f64,
    /// Coil-current to unstable-mode coupling (1/(A·s)).
    pub mode_coupling: f64,
    /// Relative random perturbation of the per-coil mode coupling.
    pub coupling_noise: f64,
    /// Scale of the random coil-current to stable-mode gains (1/(A·s)).
    pub stable_input_scale: f64,
    /// Scale of the random stable-mode sensor pickup.
    pub stable_output_scale: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            gamma: 19.0,
            omega: 0.26,
            n_stable: 48,
            stable_decay_min: 30.0,
            stable_decay_max: 3000.0,
            coil_angles_deg: default_coil_angles_deg(),
            coil_gains: default_coil_gains(),
            sensor_angles_deg: DEFAULT_SENSOR_ANGLES_DEG.to_vec(),
            tau_coil: 20e-3,
            coil_resistance: 0.1,
            resistance_spread: 0.05,
            mode_coupling: 5.0e-3,
            coupling_noise: 0.05,
            stable_input_scale: 3.0e-3,
            stable_output_scale: 0.1,
            seed: 1,
        }
    }
}

impl SurrogateConfig {
    pub fn n_coils(&self) -> usize {
        self.coil_angles_deg.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_angles_deg.len()
    }

    pub fn order(&self) -> usize {
        2 + self.n_stable + self.n_coils()
    }

    /// Config with `n_stable` chosen so the plant has the given total order.
    pub fn with_order(mut self, order: usize) -> Result<Self> {
        let fixed = 2 + self.n_coils();
        if order < fixed {
            return Err(Error::InvalidArgument(format!("order must be at least {fixed}")));
        }
        self.n_stable = order - fixed;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gamma,
            self.omega,
            self.stable_decay_min,
            self.stable_decay_max,
            self.mode_coupling,
            self.coupling_noise,
            self.stable_input_scale,
            self.stable_output_scale,
            self.resistance_spread,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("surrogate parameters must be finite".into()));
        }
        if !(self.tau_coil > 0.0 && self.tau_coil.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coil time constant must be positive and finite, got {}",
                self.tau_coil
            )));
        }
        if !(self.coil_resistance > 0.0 && self.coil_resistance.is_finite()) {
            return Err(Error::InvalidArgument("coil resistance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.resistance_spread) {
            return Err(Error::InvalidArgument("resistance spread must lie in [0, 1)".into()));
        }
        if self.n_stable > 0 && !(self.stable_decay_min > 0.0 && self.stable_decay_max >= self.stable_decay_min) {
            return Err(Error::InvalidArgument("stable decay range must be positive and ordered".into()));
        }
        if self.coil_gains.len() != self.n_coils() || self.n_coils() == 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coil gains for {} coils",
                self.coil_gains.len(),
                self.n_coils()
            )));
        }
        if self.n_sensors() < 2 {
            return Err(Error::InvalidArgument("at least two sensors are needed".into()));
        }
        let in_range = |a: &f64| (0.0..360.0).contains(a);
        if !self.coil_angles_deg.iter().all(in_range) || !self.sensor_angles_deg.iter().all(in_range) {
            return Err(Error::InvalidArgument("angles must lie in [0°, 360°)".into()));
        }
        Ok(())
    }
}

/// Builds the surrogate plant; a pure function of `cfg`.
pub fn build_surrogate(cfg: &SurrogateConfig) -> Result<ContinuousModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ns = cfg.n_stable;
    let nc = cfg.n_coils();
    let nm = cfg.n_sensors();
    let nx = 2 + ns + nc;
    let coil0 = 2 + ns;

    let mut a = Mat::zeros(nx, nx);
    a[(0, 0)] = cfg.gamma;
    a[(0, 1)] = cfg.omega;
    a[(1, 0)] = -cfg.omega;
    a[(1, 1)] = cfg.gamma;

    let (lo, hi) = (cfg.stable_decay_min.max(f64::MIN_POSITIVE).ln(), cfg.stable_decay_max.max(f64::MIN_POSITIVE).ln());
    for k in 0..ns {
        let u: f64 = rng.random();
        a[(2 + k, 2 + k)] = -(lo + (hi - lo) * u).exp();
    }

    // n=1 coupling of coil currents into the unstable pair
    for j in 0..nc {
        let phi = cfg.coil_angles_deg[j].to_radians();
        let noise: f64 = rng.sample(StandardNormal);
        let g = cfg.mode_coupling * cfg.coil_gains[j] * (1.0 + cfg.coupling_noise * noise);
        a[(0, coil0 + j)] = -g * phi.cos();
        a[(1, coil0 + j)] = -g * phi.sin();
    }
    for k in 0..ns {
        for j in 0..nc {
            let z: f64 = rng.sample(StandardNormal);
            a[(2 + k, coil0 + j)] = cfg.stable_input_scale * z;
        }
    }

    // coil circuits
    let inductance = cfg.coil_resistance * cfg.tau_coil;
    let mut b = Mat::zeros(nx, nc);
    for j in 0..nc {
        let u: f64 = rng.random();
        let r = cfg.coil_resistance * (1.0 + cfg.resistance_spread * (2.0 * u - 1.0));
        a[(coil0 + j, coil0 + j)] = -r / inductance;
        b[(coil0 + j, j)] = 1.0 / inductance;
    }

    let mut c = Mat::zeros(nm, nx);
    for i in 0..nm {
        let psi = cfg.sensor_angles_deg[i].to_radians();
        c[(i, 0)] = psi.cos();
        c[(i, 1)] = psi.sin();
        for k in 0..ns {
            let z: f64 = rng.sample(StandardNormal);
            c[(i, 2 + k)] = cfg.stable_output_scale * z;
        }
    }

    let mut c_aux = Mat::zeros(nc, nx);
    for j in 0..nc {
        c_aux[(j, coil0 + j)] = 1.0;
    }
    ContinuousModel::new(a, b, c)?.with_aux(c_aux, Mat::zeros(nc, nc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unstable_pair_is_gamma_plus_minus_i_omega() {
        let m = build_surrogate(&SurrogateConfig::default()).unwrap();
        let eig = m.eigenvalues().unwrap();
        let mut unstable: Vec<_> = eig.iter().filter(|l| l.re > 0.0).collect();
        unstable.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert_eq!(unstable.len(), 2);
        assert!((unstable[0].re - 19.0).abs() < 1e-10 && (unstable[0].im + 0.26).abs() < 1e-10);
        assert!((unstable[1].re - 19.0).abs() < 1e-10 && (unstable[1].im - 0.26).abs() < 1e-10);
    }

    #[test]
    fn pure_harmonic_sensors() {
        let cfg = SurrogateConfig {
            n_stable: 0,
            coupling_noise: 0.0,
            stable_output_scale: 0.0,
            ..SurrogateConfig::default()
        };
        let m = build_surrogate(&cfg).unwrap();
        let mut x = Mat::zeros(m.n_x(), 1);
        x[(0, 0)] = 1.0;
        let y = &m.c * x;
        for (i, deg) in DEFAULT_SENSOR_ANGLES_DEG.iter().enumerate() {
            assert_eq!(y[(i, 0)], deg.to_radians().cos());
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SurrogateConfig::default();
        let a = build_surrogate(&cfg).unwrap();
        let b = build_surrogate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = build_surrogate(&SurrogateConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layout_and_aux_output() {
        let cfg = SurrogateConfig::default();
        let m = build_surrogate(&cfg).unwrap();
        assert_eq!(m.n_x(), 2 + 48 + 27);
        assert_eq!((m.n_u(), m.n_y(), m.n_aux()), (27, 6, 27));
        let coil0 = 2 + cfg.n_stable;
        let mut x = Mat::zeros(m.n_x(), 1);
        x[(coil0 + 4, 0)] = 7.0;
        let z = &m.c_aux * x;
        assert_eq!(z[(4, 0)], 7.0);
        assert_eq!(z.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn rejects_bad_coil_time_constant() {
        for tau in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            let cfg = SurrogateConfig {
                tau_coil: tau,
                ..SurrogateConfig::default()
            };
            assert!(matches!(build_surrogate(&cfg), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn with_order_sets_stable_count() {
        let cfg = SurrogateConfig::default().with_order(300).unwrap();
        assert_eq!(cfg.n_stable, 271);
        assert_eq!(build_surrogate(&cfg).unwrap().n_x(), 300);
    }
}
