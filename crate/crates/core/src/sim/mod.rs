//! Closed-loop simulation: truth plant integrated at a fine substep, 27
//! power-supply channels with saturation, delay and lag, sensor harmonic
//! reduction, Kalman filter and the MPC/LQG controllers.

mod channel;
mod sweep;
mod trace;

pub use channel::PsChannel;
pub use sweep::{bap_grid, bap_sweep, robustness_sweep, sweep_csv, BapPoint, Outcome, RobustnessPoint, SweepRow, BAP_POWER_CAP};
pub use trace::{power_integral, settling_time, SampleRecord, SimTrace};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::design::ControllerDesign;
use crate::error::{Error, Result};
use crate::fgm::{FgmOptions, FgmPlan, FgmSolver};
use crate::linalg::{Mat, Vector};
use crate::lqg::{kf_step, lqg_control, EstimatorState};
use crate::lti::{modal_decompose, zoh_discretize, ContinuousModel};
use crate::mpc::{BlockingMap, CondensedQp};
use crate::oracle::oracle_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Mpc,
    Lqg,
    LqgEwp,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Mpc => "mpc",
            ControllerKind::Lqg => "lqg",
            ControllerKind::LqgEwp => "lqg-ewp",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpc" => Ok(ControllerKind::Mpc),
            "lqg" => Ok(ControllerKind::Lqg),
            "lqg-ewp" => Ok(ControllerKind::LqgEwp),
            _ => Err(Error::InvalidArgument(format!("unknown controller `{s}` (expected mpc, lqg or lqg-ewp)"))),
        }
    }
}

/// Additive noise powers. With `raw_variance` the power is used directly as
/// the per-sample variance instead of `power / T_s`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub actuator_power: f64,
    pub measurement_power: f64,
    pub raw_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated time (s); rounded up to whole control periods.
    pub duration: f64,
    /// Control period (s).
    pub ts: f64,
    /// Plant integration substep (s).
    pub substep: f64,
    /// Power-supply lag (s).
    pub ps_lag: f64,
    /// Power-supply delay (s).
    pub ps_delay: f64,
    /// Command saturation |u| ≤ saturation (V).
    pub saturation: f64,
    /// Initial unstable-mode amplitudes; the stable states start at zero.
    pub xi0: [f64; 2],
    /// Output band for the settling time.
    pub settle_threshold: f64,
    /// State-norm bound beyond which the run is declared diverged.
    pub divergence: f64,
    /// Coil-current level that is monitored (never enforced).
    pub current_limit: f64,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 0.5,
            ts: 0.75e-3,
            substep: 5e-5,
            ps_lag: 7.5e-3,
            ps_delay: 2.5e-3,
            saturation: 34.0,
            xi0: [0.5, 0.5],
            settle_threshold: 0.1,
            divergence: 1e9,
            current_limit: 1.5e4,
            noise: NoiseConfig::default(),
            seed: 0,
        }
    }
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let k = r.round();
    if !(k >= 1.0 && (r - k).abs() <= 1e-9 * k) {
        return Err(Error::InvalidArgument(format!("{what} must be an integer multiple of the substep")));
    }
    Ok(k as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.duration, "duration"),
            (self.ts, "ts"),
            (self.substep, "substep"),
            (self.ps_lag, "ps_lag"),
            (self.saturation, "saturation"),
            (self.settle_threshold, "settle_threshold"),
            (self.divergence, "divergence"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite")));
            }
        }
        if !(self.ps_delay >= 0.0) {
            return Err(Error::InvalidArgument("ps_delay must be non-negative".into()));
        }
        if !(self.noise.actuator_power >= 0.0 && self.noise.measurement_power >= 0.0) {
            return Err(Error::InvalidArgument("noise powers must be non-negative".into()));
        }
        integer_ratio(self.ts, self.substep, "ts")?;
        if self.ps_delay > 0.0 {
            integer_ratio(self.ps_delay, self.substep, "ps_delay")?;
        }
        Ok(())
    }

    pub fn substeps_per_sample(&self) -> usize {
        (self.ts / self.substep).round() as usize
    }

    pub fn delay_substeps(&self) -> usize {
        (self.ps_delay / self.substep).round() as usize
    }

    /// Number of control periods simulated (`⌈duration / T_s⌉`).
    pub fn n_periods(&self) -> usize {
        (self.duration / self.ts - 1e-9).ceil() as usize
    }
}

/// Truth plant sampled at the substep, with its modal initial-state map.
#[derive(Debug, Clone)]
pub struct PlantSim {
    pub model: ContinuousModel,
    phi: Mat,
    gamma: Mat,
    /// Maps `(ξ₁, ξ₂)` to plant coordinates.
    unstable_basis: Mat,
}

impl PlantSim {
    pub fn new(model: &ContinuousModel, substep: f64) -> Result<Self> {
        let mm = modal_decompose(model)?;
        let d = zoh_discretize(model, substep)?;
        Ok(PlantSim {
            model: model.clone(),
            phi: d.a,
            gamma: d.b,
            unstable_basis: mm.t_m_inv.columns(0, 2).into_owned(),
        })
    }

    /// Plant state with the given unstable-mode amplitudes and stable modes at
    /// zero.
    pub fn initial_state(&self, xi: [f64; 2]) -> Vector {
        &self.unstable_basis * Vector::from_vec(xi.to_vec())
    }

    pub fn n_x(&self) -> usize {
        self.model.n_x()
    }
}

/// How the MPC QP is solved inside the loop.
#[derive(Debug, Clone)]
pub enum QpSolverChoice {
    Fgm(FgmOptions),
    /// Exact active-set solution.
    Oracle,
}

/// A controller ready to run: design, law and (for MPC) the condensed QP.
#[derive(Debug, Clone)]
pub struct ControlLaw {
    pub kind: ControllerKind,
    pub design: ControllerDesign,
    pub bounds: Bounds,
    pub qp: Option<CondensedQp>,
    solver: Option<FgmSolver>,
    pub solver_choice: Option<QpSolverChoice>,
}

impl ControlLaw {
    pub fn lqg(design: &ControllerDesign, saturation: f64, ewp: bool) -> Result<Self> {
        let nu = design.model.discrete.n_u();
        Ok(ControlLaw {
            kind: if ewp { ControllerKind::LqgEwp } else { ControllerKind::Lqg },
            design: design.clone(),
            bounds: Bounds::symmetric(nu, saturation)?,
            qp: None,
            solver: None,
            solver_choice: None,
        })
    }

    pub fn mpc(design: &ControllerDesign, saturation: f64, blocking: &BlockingMap, solver: QpSolverChoice) -> Result<Self> {
        let nu = design.model.discrete.n_u();
        let bounds = Bounds::symmetric(nu, saturation)?;
        let qp = design.mpc_qp(blocking, &bounds)?;
        let fgm = match &solver {
            QpSolverChoice::Fgm(opts) => Some(FgmSolver::new(&qp, FgmPlan::new(&qp.h, opts)?)?),
            QpSolverChoice::Oracle => None,
        };
        Ok(ControlLaw {
            kind: ControllerKind::Mpc,
            design: design.clone(),
            bounds,
            qp: Some(qp),
            solver: fgm,
            solver_choice: Some(solver),
        })
    }

    pub fn fgm_solver(&self) -> Option<&FgmSolver> {
        self.solver.as_ref()
    }
}

struct NoiseSource {
    rng: ChaCha8Rng,
    dist: Option<Normal<f64>>,
}

impl NoiseSource {
    fn new(seed: u64, stream: u64, power: f64, ts: f64, raw: bool) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let var = if raw { power } else { power / ts };
        let dist = if power > 0.0 {
            Some(Normal::new(0.0, var.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        } else {
            None
        };
        Ok(NoiseSource { rng, dist })
    }

    fn add_to(&mut self, v: &mut [f64]) {
        if let Some(d) = &self.dist {
            for x in v.iter_mut() {
                *x += d.sample(&mut self.rng);
            }
        }
    }
}

/// Extra per-run options.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the QP linear term of every sample (for solver benchmarking).
    pub record_qp: bool,
}

/// Runs one closed-loop simulation.
pub fn simulate(plant: &PlantSim, law: &ControlLaw, cfg: &SimConfig) -> Result<SimTrace> {
    simulate_with(plant, law, cfg, &RunOptions::default())
}

pub fn simulate_with(plant: &PlantSim, law: &ControlLaw, cfg: &SimConfig, opts: &RunOptions) -> Result<SimTrace> {
    cfg.validate()?;
    let design = &law.design;
    let model = &design.model.discrete;
    let (n_u, n_m) = (plant.model.n_u(), plant.model.n_y());
    if model.n_u() != n_u || design.reducer.t_out.ncols() != n_m {
        return Err(Error::Dimension("controller and plant interfaces differ".into()));
    }
    if (model.ts - cfg.ts).abs() > 1e-12 * cfg.ts {
        return Err(Error::InvalidArgument("controller sampling time differs from the simulation period".into()));
    }
    let steps = cfg.substeps_per_sample();
    let mut channels: Vec<PsChannel> = (0..n_u)
        .map(|_| PsChannel::new(cfg.ps_lag, cfg.delay_substeps(), cfg.saturation, cfg.substep))
        .collect::<Result<_>>()?;
    let mut act_noise = NoiseSource::new(cfg.seed, 1, cfg.noise.actuator_power, cfg.ts, cfg.noise.raw_variance)?;
    let mut meas_noise = NoiseSource::new(cfg.seed, 2, cfg.noise.measurement_power, cfg.ts, cfg.noise.raw_variance)?;

    let mut solver = law.solver.clone();
    let mut x = plant.initial_state(cfg.xi0);
    let mut est = EstimatorState::zeros(model.n_x());
    let mut u_est_prev = Vector::zeros(n_u);
    let mut trace = SimTrace::new(cfg.ts, n_u, n_m);
    let mut u_cmd_buf = vec![0.0; n_u];
    let mut u_elm_now = vec![0.0; n_u];
    let mut u_elm_next = vec![0.0; n_u];
    let mut u_held = Vector::zeros(n_u);
    let n_periods = cfg.n_periods();

    for k in 0..=n_periods {
        let t = k as f64 * cfg.ts;
        let mut y_m: Vector = &plant.model.c * &x;
        meas_noise.add_to(y_m.as_mut_slice());
        let y = design.reducer.reduce(&y_m);
        let i_elm: Vector = &plant.model.c_aux * &x;
        for (j, ch) in channels.iter().enumerate() {
            u_elm_now[j] = ch.output();
        }
        let power: f64 = u_elm_now.iter().zip(i_elm.iter()).map(|(u, i)| (u * i).abs()).sum();

        est = kf_step(&est, &u_est_prev, &y, model, &design.kalman.m)?;
        let started = Instant::now();
        let (u_cmd, u_est, iters, f_rec) = match law.kind {
            ControllerKind::Lqg | ControllerKind::LqgEwp => {
                let (u, ue) = lqg_control(&est.x_hat, &design.lq.k, law.kind == ControllerKind::LqgEwp, &law.bounds)?;
                (u, ue, 0, None)
            }
            ControllerKind::Mpc => {
                let qp = law.qp.as_ref().expect("MPC law carries its QP");
                let f = qp.linear_term(&est.x_hat)?;
                let (u, iters) = match solver.as_mut() {
                    Some(s) => {
                        let r = s.solve(&f, None)?;
                        (r.u, r.iterations)
                    }
                    None => {
                        let sol = oracle_solve(qp, &f)?;
                        (sol.u_star, sol.iterations)
                    }
                };
                let first = qp.first_move(&u);
                (first.clone(), first, iters, opts.record_qp.then_some(f))
            }
        };
        let solve_us = started.elapsed().as_secs_f64() * 1e6;

        trace.push(SampleRecord {
            t,
            y: y.iter().copied().collect(),
            y_m: y_m.iter().copied().collect(),
            u: u_cmd.iter().copied().collect(),
            u_elm: u_elm_now.clone(),
            i_elm: i_elm.iter().copied().collect(),
            power,
            iters,
            solve_us,
        });
        if let Some(f) = f_rec {
            trace.qp_linear_terms.push(f);
        }
        if k == n_periods {
            break;
        }

        // apply the command over one control period
        for (j, ch) in channels.iter().enumerate() {
            u_cmd_buf[j] = ch.clip(u_cmd[j]);
        }
        act_noise.add_to(&mut u_cmd_buf);
        for _ in 0..steps {
            for (j, ch) in channels.iter_mut().enumerate() {
                u_elm_now[j] = ch.output();
                ch.step(u_cmd_buf[j]);
                u_elm_next[j] = ch.output();
            }
            for j in 0..n_u {
                u_held[j] = 0.5 * (u_elm_now[j] + u_elm_next[j]);
            }
            x = &plant.phi * &x + &plant.gamma * &u_held;
        }
        u_est_prev = u_est;
        if !(x.norm() <= cfg.divergence) {
            trace.diverged = true;
            break;
        }
    }
    trace.settle_threshold = cfg.settle_threshold;
    trace.current_limit = cfg.current_limit;
    Ok(trace)
}
