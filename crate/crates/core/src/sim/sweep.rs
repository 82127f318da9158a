use rayon::prelude::*;

use super::{simulate, ControlLaw, PlantSim, SimConfig};
use crate::error::{Error, Result};
use crate::lti::{modal_decompose, ContinuousModel};

/// Power-integral cap (J) above which a stable BAP point is not counted.
pub const BAP_POWER_CAP: f64 = 5e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub stable: bool,
    pub settling: Option<f64>,
    pub power: f64,
    pub peak_current: f64,
}

impl Outcome {
    /// Stable and within the power cap.
    pub fn stabilizable(&self) -> bool {
        self.stable && self.power <= BAP_POWER_CAP
    }
}

/// One grid point with an outcome per controller, in the order the laws were
/// given.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: [f64; 2],
    pub outcomes: Vec<Outcome>,
}

pub type BapPoint = SweepRow;
pub type RobustnessPoint = SweepRow;

/// `n × n` grid over `[lo, hi]²`, ξ₁ varying slowest.
pub fn bap_grid(lo: f64, hi: f64, n: usize) -> Vec<[f64; 2]> {
    let at = |i: usize| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    (0..n).flat_map(|i| (0..n).map(move |j| [at(i), at(j)])).collect()
}

fn derived_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_point(plant: &PlantSim, laws: &[ControlLaw], cfg: &SimConfig, point: [f64; 2], xi: [f64; 2], index: usize) -> Result<SweepRow> {
    let cfg = SimConfig { xi0: xi, seed: derived_seed(cfg.seed, index), ..cfg.clone() };
    let mut outcomes = Vec::with_capacity(laws.len());
    for law in laws {
        let tr = simulate(plant, law, &cfg)?;
        let stable = tr.is_stable() && tr.all_finite();
        outcomes.push(Outcome {
            stable,
            settling: tr.settling_time(),
            power: if tr.diverged { f64::INFINITY } else { tr.power_integral(cfg.duration) },
            peak_current: tr.peak_current(),
        });
    }
    Ok(SweepRow { point, outcomes })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Closed-loop runs from each initial `(ξ₁, ξ₂)` for every law.
pub fn bap_sweep(plant: &PlantSim, laws: &[ControlLaw], grid: &[[f64; 2]], cfg: &SimConfig, workers: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    pool(workers)?.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, &xi)| run_point(plant, laws, cfg, xi, xi, i))
            .collect()
    })
}

/// Runs the fixed laws against plants whose unstable pair is replaced by each
/// `(γ, ω)`; points are `(γ, ω)` with γ varying slowest.
pub fn robustness_sweep(
    plant: &ContinuousModel,
    laws: &[ControlLaw],
    gammas: &[f64],
    omegas: &[f64],
    cfg: &SimConfig,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let modal = modal_decompose(plant)?;
    let points: Vec<[f64; 2]> = gammas.iter().flat_map(|&g| omegas.iter().map(move |&w| [g, w])).collect();
    pool(workers)?.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &[g, w])| {
                let modified = modal.with_unstable(g, w).reassemble()?;
                let sim = PlantSim::new(&modified, cfg.substep)?;
                run_point(&sim, laws, cfg, [g, w], cfg.xi0, i)
            })
            .collect()
    })
}

/// Wide sweep CSV: point columns, then stable/settling/power per controller.
pub fn sweep_csv(point_names: [&str; 2], controllers: &[&str], rows: &[SweepRow]) -> String {
    let mut out = format!("{},{}", point_names[0], point_names[1]);
    for c in controllers {
        out.push_str(&format!(",{c}_stable,{c}_settling_s,{c}_power_j"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:.6},{:.6}", r.point[0], r.point[1]));
        for o in &r.outcomes {
            let settle = o.settling.map(|s| format!("{s:.6e}")).unwrap_or_else(|| "nan".into());
            out.push_str(&format!(",{},{},{:.6e}", u8::from(o.stable), settle, o.power));
        }
        out.push('\n');
    }
    out
}
