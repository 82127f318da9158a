use std::path::Path;

use anyhow::{bail, Context, Result};

use rwm_mpc::bench::{record_instances, run_bench, verify as verify_instances, VerifyGates};
use rwm_mpc::design::{ControllerDesign, SensorReducer};
use rwm_mpc::fgm::Width;
use rwm_mpc::lti::{build_surrogate, ContinuousModel};
use rwm_mpc::matio::MatrixSet;
use rwm_mpc::mpc::BlockingMap;
use rwm_mpc::sim::{
    bap_grid, bap_sweep, robustness_sweep, simulate as run_sim, sweep_csv, ControlLaw, ControllerKind, PlantSim, QpSolverChoice, SweepRow,
};

use crate::config::{RunConfig, SolverKind, WidthName};
use crate::Common;

/// Reads the config file (or defaults) and applies command-line overrides.
pub fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(k) = common.controller {
        cfg.controller.kind = k;
    }
    if let Some(list) = &common.iters {
        if list.is_empty() {
            bail!("--iters needs at least one value");
        }
        cfg.solver.iters = list[0];
        cfg.bench.iters = list.clone();
        cfg.bench.verify_iters = list[0];
    }
    if let Some(w) = common.width {
        let name = match w {
            Width::Wide => WidthName::Wide,
            Width::Narrow => WidthName::Narrow,
        };
        cfg.solver.width = name;
        cfg.bench.widths = vec![name];
    }
    if let Some(n) = common.workers {
        cfg.sweep.workers = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Setup {
    plant: ContinuousModel,
    sim: PlantSim,
    design: ControllerDesign,
    blocking: BlockingMap,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let plant = match &cfg.plant_file {
        Some(p) => ContinuousModel::from_matrix_set(&MatrixSet::read_file(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => build_surrogate(&cfg.model)?,
    };
    let reducer = SensorReducer::new(&cfg.model.sensor_angles_deg)?;
    let design = ControllerDesign::new(&plant, reducer, &cfg.design).context("controller design")?;
    let sim = PlantSim::new(&plant, cfg.sim.substep)?;
    let blocking = BlockingMap::new(&cfg.controller.blocking)?;
    Ok(Setup { plant, sim, design, blocking })
}

fn law(cfg: &RunConfig, s: &Setup, kind: ControllerKind) -> Result<ControlLaw> {
    let sat = cfg.sim.saturation;
    Ok(match kind {
        ControllerKind::Mpc => {
            let solver = match cfg.solver.kind {
                SolverKind::Fgm => QpSolverChoice::Fgm(cfg.solver.fgm_options()),
                SolverKind::Oracle => QpSolverChoice::Oracle,
            };
            ControlLaw::mpc(&s.design, sat, &s.blocking, solver)?
        }
        ControllerKind::Lqg => ControlLaw::lqg(&s.design, sat, false)?,
        ControllerKind::LqgEwp => ControlLaw::lqg(&s.design, sat, true)?,
    })
}

fn write_out(cfg: &RunConfig, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", display(&path));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn fmt_settle(s: Option<f64>) -> String {
    s.map(|v| format!("{v:.5} s")).unwrap_or_else(|| "not settled".into())
}

pub fn simulate(cfg: &RunConfig) -> Result<bool> {
    let s = setup(cfg)?;
    let l = law(cfg, &s, cfg.controller.kind)?;
    let sc = cfg.sim_config();
    let tr = run_sim(&s.sim, &l, &sc)?;
    write_out(cfg, "trace.csv", &tr.to_csv(cfg.timing))?;
    let stable = tr.is_stable() && tr.all_finite();
    println!("controller        {}", cfg.controller.kind.name());
    println!("settling time     {}", fmt_settle(tr.settling_time()));
    println!("peak |u|          {:.3} V", tr.peak_u());
    println!("peak |I_ELM|      {:.3} A{}", tr.peak_current(), if tr.current_limit_exceeded() { " (above current limit)" } else { "" });
    println!("power integral    {:.6e} J", tr.power_integral(sc.duration));
    println!("result            {}", if stable { "stable" } else if tr.diverged { "unstable (diverged)" } else { "unstable" });
    Ok(stable)
}

fn area(rows: &[SweepRow], i: usize) -> usize {
    rows.iter().filter(|r| r.outcomes[i].stabilizable()).count()
}

pub fn sweep_bap(cfg: &RunConfig) -> Result<bool> {
    let s = setup(cfg)?;
    let laws = cfg.sweep.controllers.iter().map(|&k| law(cfg, &s, k)).collect::<Result<Vec<_>>>()?;
    let grid = bap_grid(cfg.sweep.bap_min, cfg.sweep.bap_max, cfg.sweep.bap_points);
    let rows = bap_sweep(&s.sim, &laws, &grid, &cfg.sim_config(), cfg.sweep.workers)?;
    let names: Vec<&str> = cfg.sweep.controllers.iter().map(|k| k.name()).collect();
    write_out(cfg, "bap.csv", &sweep_csv(["xi1", "xi2"], &names, &rows))?;
    for (i, n) in names.iter().enumerate() {
        println!("{n}: {} of {} points stabilizable", area(&rows, i), rows.len());
    }
    Ok(true)
}

pub fn sweep_robustness(cfg: &RunConfig) -> Result<bool> {
    let s = setup(cfg)?;
    let laws = cfg.sweep.controllers.iter().map(|&k| law(cfg, &s, k)).collect::<Result<Vec<_>>>()?;
    let rows = robustness_sweep(&s.plant, &laws, &cfg.sweep.gammas, &cfg.sweep.omegas, &cfg.sim_config(), cfg.sweep.workers)?;
    let names: Vec<&str> = cfg.sweep.controllers.iter().map(|k| k.name()).collect();
    write_out(cfg, "robustness.csv", &sweep_csv(["gamma", "omega"], &names, &rows))?;
    for r in &rows {
        let cols: Vec<String> = names
            .iter()
            .zip(&r.outcomes)
            .map(|(n, o)| format!("{n} {}", if o.stable { fmt_settle(o.settling) } else { "unstable".into() }))
            .collect();
        println!("gamma {:>6.2} omega {:>6.2}: {}", r.point[0], r.point[1], cols.join(", "));
    }
    Ok(true)
}

pub fn bench(cfg: &RunConfig) -> Result<bool> {
    let s = setup(cfg)?;
    let inst = record_instances(&s.sim, &s.design, &s.blocking, &cfg.sim_config())?;
    let widths: Vec<Width> = cfg.bench.widths.iter().map(|&w| w.into()).collect();
    let table = run_bench(&inst, &cfg.bench.iters, &widths, &cfg.solver.fgm_options())?;
    write_out(cfg, "bench.csv", &table.to_csv(cfg.timing))?;
    println!("{} QP instances, {} variables", inst.len(), inst.qp.n_vars());
    println!("{:>6} {:>6} {:>12} {:>12} {:>14} {:>14}", "width", "iters", "max_us", "mean_us", "worst_mse", "worst_gap");
    for r in &table.rows {
        println!(
            "{:>6} {:>6} {:>12.2} {:>12.2} {:>14.4e} {:>14.4e}",
            r.width.to_string(),
            r.iters,
            r.max_us,
            r.mean_us,
            r.worst_mse,
            r.worst_cost_gap
        );
    }
    Ok(true)
}

pub fn verify(cfg: &RunConfig) -> Result<bool> {
    let s = setup(cfg)?;
    let inst = record_instances(&s.sim, &s.design, &s.blocking, &cfg.sim_config())?;
    let opts = rwm_mpc::fgm::FgmOptions { i_max: cfg.bench.verify_iters, ..cfg.solver.fgm_options() };
    let gates = VerifyGates { max_mse: cfg.bench.max_mse, max_cost_gap: cfg.bench.max_cost_gap };
    let report = verify_instances(&inst, &opts, gates)?;
    write_out(cfg, "verify.csv", &report.to_csv())?;
    println!("{}", report.summary());
    Ok(report.passed())
}

pub fn reduce_model(cfg: &RunConfig) -> Result<bool> {
    let s = setup(cfg)?;
    let m = &s.design.model;
    write_out(cfg, "control_model.txt", &s.design.to_matrix_set().to_text())?;
    println!("plant order       {}", s.plant.n_x());
    println!("reduced order     {} ({} unstable)", m.discrete.n_x(), m.n_unstable);
    let hsv: Vec<String> = m.hankel_singular_values.iter().take(6).map(|v| format!("{v:.4e}")).collect();
    println!("leading HSVs      {}", hsv.join(" "));
    println!("truncation bound  {:.4e}", m.error_bound);
    println!("LQ radius         {:.6}", s.design.lq.closed_loop_radius(&m.discrete)?);
    println!("estimator radius  {:.6}", s.design.kalman.error_radius(&m.discrete)?);
    Ok(true)
}
