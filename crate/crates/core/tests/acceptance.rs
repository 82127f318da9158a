//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//! Runs as a plain binary (`harness = false`) and exits non-zero when any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rwm_mpc::bench::{mse_per_instance, record_instances, run_bench, QpInstances};
use rwm_mpc::bounds::Bounds;
use rwm_mpc::design::{control_model, ControllerDesign, DesignConfig, SensorReducer};
use rwm_mpc::fgm::{FgmOptions, Width};
use rwm_mpc::lti::{
    actuator_bank, build_surrogate, freq_response, log_grid, max_relative_deviation, series_compose, ContinuousModel, SurrogateConfig,
};
use rwm_mpc::mpc::BlockingMap;
use rwm_mpc::oracle::{kkt_check, kkt_tolerance, solve_box_qp};
use rwm_mpc::riccati::{dare_residual, solve_dare};
use rwm_mpc::sim::{bap_grid, bap_sweep, robustness_sweep, simulate, ControlLaw, NoiseConfig, PlantSim, QpSolverChoice, SimConfig, SimTrace};

type Mat = DMatrix<f64>;
type Vector = DVector<f64>;
type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Nominal {
    plant: ContinuousModel,
    design: ControllerDesign,
    sim: PlantSim,
    blocking: BlockingMap,
    cfg: SimConfig,
}

impl Nominal {
    fn new() -> Result<Self, Box<dyn std::error::Error>> {
        let sc = SurrogateConfig::default();
        let plant = build_surrogate(&sc)?;
        let design = ControllerDesign::new(&plant, SensorReducer::new(&sc.sensor_angles_deg)?, &DesignConfig::default())?;
        let sim = PlantSim::new(&plant, SimConfig::default().substep)?;
        Ok(Nominal { plant, design, sim, blocking: BlockingMap::new(&[2, 2, 76])?, cfg: SimConfig::default() })
    }

    fn mpc(&self, saturation: f64, blocking: &BlockingMap) -> Result<ControlLaw, rwm_mpc::Error> {
        ControlLaw::mpc(&self.design, saturation, blocking, QpSolverChoice::Fgm(FgmOptions::default()))
    }
}

fn settle(tr: &SimTrace) -> String {
    match tr.settling_time() {
        Some(t) if tr.is_stable() => format!("{t:.5} s"),
        _ => "unstable".into(),
    }
}

fn settled_within(tr: &SimTrace, limit: f64) -> Option<f64> {
    tr.settling_time().filter(|&t| tr.is_stable() && t <= limit)
}

fn unconstrained_equivalence(n: &Nominal) -> Outcome {
    let wide = Bounds::symmetric(27, 1e6)?;
    let qp = n.design.mpc_qp(&BlockingMap::unblocked(80)?, &wide)?;
    let chol = Cholesky::new(qp.h.clone()).ok_or("condensed Hessian is not positive definite")?;
    let k = &n.design.lq.k;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut worst_kkt, mut peak) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let x = Vector::from_fn(qp.n_x, |_, _| rng.random_range(-1.0..1.0));
        let f = qp.linear_term(&x)?;
        let u = -chol.solve(&f);
        peak = peak.max(u.amax());
        if !qp.bounds.contains(&u) {
            return Ok((false, format!("unconstrained minimizer leaves the ±1e6 box (|u| = {:.3e})", u.amax())));
        }
        worst_kkt = worst_kkt.max(kkt_check(&qp.h, &qp.bounds, &f, &u)? / kkt_tolerance(&f));
        let lq = k * &x;
        worst = worst.max((qp.first_move(&u) - &lq).amax() / lq.amax());
    }
    Ok((
        worst <= 1e-6 && worst_kkt <= 1.0,
        format!("worst rel. first-move error {worst:.2e}, worst KKT/tol {worst_kkt:.2e}, peak |u| {peak:.2e} V"),
    ))
}

/// Fixed-point Riccati recursion from `P = Q`.
fn riccati_recursion(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Mat {
    let mut p = q.clone();
    for _ in 0..200_000 {
        let btp = b.transpose() * &p;
        let gain = (r + &btp * b).lu().solve(&(&btp * a)).unwrap();
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        let next = (&next + next.transpose()) * 0.5;
        let change = (&next - &p).amax() / next.amax();
        p = next;
        if change < 1e-15 {
            break;
        }
    }
    p
}

fn dare_certification(n: &Nominal) -> Outcome {
    let m = &n.design.model.discrete;
    let lq = &n.design.lq;
    let nominal_res = dare_residual(&lq.p, &m.a, &m.b, &lq.q, &lq.r);
    let rec = riccati_recursion(&m.a, &m.b, &lq.q, &lq.r);
    let nominal_gap = (&rec - &lq.p).norm() / lq.p.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_res, mut worst_gap) = (nominal_res, nominal_gap);
    for _ in 0..50 {
        let nx = rng.random_range(5..=10);
        let nu = rng.random_range(1..=3);
        let a = Mat::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0)) * (1.3 / (nx as f64).sqrt());
        let b = Mat::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
        let g = Mat::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose() * 0.2 + Mat::identity(nx, nx) * 0.1;
        let h = Mat::from_fn(nu, nu, |_, _| rng.random_range(-1.0..1.0));
        let r = &h * h.transpose() + Mat::identity(nu, nu) * 0.1;
        let p = solve_dare(&a, &b, &q, &r)?;
        worst_res = worst_res.max(dare_residual(&p, &a, &b, &q, &r));
        worst_gap = worst_gap.max((&riccati_recursion(&a, &b, &q, &r) - &p).norm() / p.norm());
    }
    Ok((
        worst_res <= 1e-8 && worst_gap <= 1e-6,
        format!("nominal residual {nominal_res:.2e}, worst residual {worst_res:.2e} (x‖P‖), worst recursion gap {worst_gap:.2e}"),
    ))
}

fn solver_vs_oracle(inst: &QpInstances) -> Outcome {
    let iters = [10, 20, 30, 50, 100];
    let per_iter: Vec<Vec<f64>> = iters
        .iter()
        .map(|&i| mse_per_instance(inst, &FgmOptions { i_max: i, width: Width::Wide, ..FgmOptions::default() }))
        .collect::<Result<_, _>>()?;
    let worst = |k: usize| per_iter[k].iter().cloned().fold(0.0, f64::max);
    let (w50, w100) = (worst(3), worst(4));
    let mut rises = 0;
    for j in 0..inst.len() {
        for k in 1..iters.len() {
            if per_iter[k][j] > per_iter[k - 1][j].max(1e-12) {
                rises += 1;
            }
        }
    }
    let mut reach = None;
    for i in 1..=200 {
        let mse = mse_per_instance(inst, &FgmOptions { i_max: i, width: Width::Wide, ..FgmOptions::default() })?;
        if mse.iter().all(|&v| v <= 1e-4) {
            reach = Some(i);
            break;
        }
    }
    let table: Vec<String> = iters.iter().enumerate().map(|(k, i)| format!("{i}:{:.1e}", worst(k))).collect();
    Ok((
        w50 <= 1e-4 && w100 <= 1e-6 && rises == 0,
        format!(
            "{} instances, worst MSE [{}], increases {rises}, iterations to reach 1e-4: {}",
            inst.len(),
            table.join(" "),
            reach.map_or("none ≤ 200".into(), |i| i.to_string())
        ),
    ))
}

/// Global minimum by enumerating every lower/free/upper status assignment.
fn enumerate_box_qp(h: &Mat, lo: &Vector, hi: &Vector, f: &Vector) -> Vector {
    let n = f.len();
    let mut best: Option<(f64, Vector)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut status = vec![0u8; n];
        let mut c = code;
        for s in status.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut u = Vector::zeros(n);
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == 1).collect();
        for i in 0..n {
            match status[i] {
                0 => u[i] = lo[i],
                2 => u[i] = hi[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let hff = Mat::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = Vector::from_fn(free.len(), |a, _| {
                -(f[free[a]] + (0..n).filter(|&j| status[j] != 1).map(|j| h[(free[a], j)] * u[j]).sum::<f64>())
            });
            let Some(sol) = hff.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                u[i] = sol[a];
            }
        }
        if (0..n).any(|i| u[i] < lo[i] - 1e-12 || u[i] > hi[i] + 1e-12) {
            continue;
        }
        let cost = 0.5 * u.dot(&(h * &u)) + f.dot(&u);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, u));
        }
    }
    best.expect("the box always has a feasible vertex").1
}

fn oracle_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    let mut active = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &g * g.transpose() + Mat::identity(n, n) * 0.2;
        let lo = Vector::from_fn(n, |_, _| rng.random_range(-2.0..0.0));
        let hi = Vector::from_fn(n, |i, _| lo[i] + rng.random_range(0.1..3.0));
        let f = Vector::from_fn(n, |_, _| rng.random_range(-6.0..6.0));
        let bounds = Bounds::new(lo.clone(), hi.clone())?;
        let sol = solve_box_qp(&h, &bounds, &f)?;
        let brute = enumerate_box_qp(&h, &lo, &hi, &f);
        worst = worst.max((&sol.u_star - &brute).amax());
        active += (0..n).filter(|&i| brute[i] == lo[i] || brute[i] == hi[i]).count();
    }
    Ok((worst <= 1e-10, format!("worst |u_oracle − u_enum| {worst:.2e} over 200 QPs ({active} active bounds)")))
}

fn controller_ordering(n: &Nominal) -> Outcome {
    let mpc = simulate(&n.sim, &n.mpc(34.0, &n.blocking)?, &n.cfg)?;
    let ewp = simulate(&n.sim, &ControlLaw::lqg(&n.design, 34.0, true)?, &n.cfg)?;
    let lqg = simulate(&n.sim, &ControlLaw::lqg(&n.design, 34.0, false)?, &n.cfg)?;
    let pass = match (settled_within(&mpc, 0.5), settled_within(&ewp, 0.5), settled_within(&lqg, 0.5)) {
        (Some(a), Some(b), Some(c)) => a <= b && b <= c,
        _ => false,
    };
    Ok((pass, format!("MPC {}, LQG-EWP {}, LQG {}", settle(&mpc), settle(&ewp), settle(&lqg))))
}

fn relaxed_saturation(n: &Nominal) -> Outcome {
    let low = simulate(&n.sim, &n.mpc(34.0, &n.blocking)?, &n.cfg)?;
    let high_cfg = SimConfig { saturation: 144.0, ..n.cfg.clone() };
    let high = simulate(&n.sim, &n.mpc(144.0, &n.blocking)?, &high_cfg)?;
    let pass = match (settled_within(&high, f64::INFINITY), settled_within(&low, f64::INFINITY)) {
        (Some(h), Some(l)) => h < l && high.peak_u() > low.peak_u(),
        _ => false,
    };
    Ok((
        pass,
        format!(
            "144 V: {} peak |u| {:.1} V; 34 V: {} peak |u| {:.1} V",
            settle(&high),
            high.peak_u(),
            settle(&low),
            low.peak_u()
        ),
    ))
}

fn bap_inclusion(n: &Nominal) -> Outcome {
    let laws = [n.mpc(34.0, &n.blocking)?, ControlLaw::lqg(&n.design, 34.0, true)?];
    let rows = bap_sweep(&n.sim, &laws, &bap_grid(0.35, 0.65, 7), &n.cfg, 4)?;
    let mpc_area = rows.iter().filter(|r| r.outcomes[0].stabilizable()).count();
    let ewp_area = rows.iter().filter(|r| r.outcomes[1].stabilizable()).count();
    let missing = rows.iter().filter(|r| r.outcomes[1].stabilizable() && !r.outcomes[0].stabilizable()).count();
    let gain = if ewp_area > 0 { 100.0 * (mpc_area as f64 / ewp_area as f64 - 1.0) } else { f64::INFINITY };
    Ok((
        missing == 0 && mpc_area >= ewp_area,
        format!("MPC {mpc_area}/49, LQG-EWP {ewp_area}/49 ({gain:+.1}% area), EWP-only points {missing}"),
    ))
}

fn robustness(n: &Nominal) -> Outcome {
    let laws = [n.mpc(34.0, &n.blocking)?];
    let rows = robustness_sweep(&n.plant, &laws, &[0.1, 5.0, 10.0, 19.0], &[-15.0, 0.0, 15.0], &n.cfg, 4)?;
    let failed: Vec<String> = rows.iter().filter(|r| !r.outcomes[0].stable).map(|r| format!("({}, {})", r.point[0], r.point[1])).collect();
    let slowest = rows.iter().filter_map(|r| r.outcomes[0].settling).fold(0.0, f64::max);
    Ok((
        failed.is_empty(),
        format!("{} of {} plants stabilized, slowest settling {slowest:.5} s{}", rows.len() - failed.len(), rows.len(), if failed.is_empty() { String::new() } else { format!(", unstable at {}", failed.join(" ")) }),
    ))
}

fn noise_tolerance(n: &Nominal) -> Outcome {
    let law = n.mpc(34.0, &n.blocking)?;
    let clean = simulate(&n.sim, &law, &n.cfg)?;
    let Some(t0) = settled_within(&clean, f64::INFINITY) else {
        return Ok((false, "noiseless run does not settle".into()));
    };
    let mut pass = true;
    let mut parts = vec![format!("noiseless {t0:.5} s")];
    for (name, a, m) in [("actuator", 1e-2, 0.0), ("measurement", 0.0, 1e-7), ("both", 1e-2, 1e-7)] {
        let cfg = SimConfig {
            noise: NoiseConfig { actuator_power: a, measurement_power: m, ..NoiseConfig::default() },
            seed: 7,
            ..n.cfg.clone()
        };
        let tr = simulate(&n.sim, &law, &cfg)?;
        pass &= settled_within(&tr, 2.0 * t0).is_some();
        parts.push(format!("{name} {}", settle(&tr)));
    }
    Ok((pass, parts.join(", ")))
}

fn move_blocking(n: &Nominal) -> Outcome {
    let blocked = simulate(&n.sim, &n.mpc(34.0, &n.blocking)?, &n.cfg)?;
    let unblocked = simulate(&n.sim, &n.mpc(34.0, &BlockingMap::unblocked(80)?)?, &n.cfg)?;
    let pass = match (settled_within(&blocked, f64::INFINITY), settled_within(&unblocked, f64::INFINITY)) {
        (Some(a), Some(b)) => (a - b).abs() < 0.1 * a.min(b),
        _ => false,
    };
    Ok((pass, format!("blocked (2,2,76) {}, unblocked N=80 {}", settle(&blocked), settle(&unblocked))))
}

fn unstable_pair(m: &ContinuousModel) -> Result<Vec<(f64, f64)>, rwm_mpc::Error> {
    let mut up: Vec<(f64, f64)> = m.eigenvalues()?.iter().filter(|l| l.re > 0.0).map(|l| (l.re, l.im)).collect();
    up.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(up)
}

fn model_reduction() -> Outcome {
    let sc = SurrogateConfig::default().with_order(300)?;
    let plant = build_surrogate(&sc)?;
    let reducer = SensorReducer::new(&sc.sensor_angles_deg)?;
    let dc = DesignConfig::default();
    let cm = control_model(&plant, &reducer, &dc)?;
    let (full_up, red_up) = (unstable_pair(&plant)?, unstable_pair(&cm.continuous)?);
    let eig_err = if full_up.len() == red_up.len() && !full_up.is_empty() {
        full_up.iter().zip(&red_up).map(|(a, b)| ((a.0 - b.0).abs().max((a.1 - b.1).abs())) / a.0.hypot(a.1)).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let ps = actuator_bank(plant.n_u(), dc.ps_lag, dc.ps_delay, dc.pade_order)?;
    let full = series_compose(&ps, &plant.map_outputs(&reducer.t_out)?)?;
    let grid = log_grid(0.1, 100.0, 60);
    let dev = max_relative_deviation(&freq_response(&full, &grid)?, &freq_response(&cm.continuous, &grid)?);

    let design = ControllerDesign::new(&plant, reducer, &dc)?;
    let sim = PlantSim::new(&plant, SimConfig::default().substep)?;
    let law = ControlLaw::mpc(&design, 34.0, &BlockingMap::new(&[2, 2, 76])?, QpSolverChoice::Fgm(FgmOptions::default()))?;
    let tr = simulate(&sim, &law, &SimConfig::default())?;
    Ok((
        eig_err <= 1e-8 && dev < dc.freq_gate && settled_within(&tr, f64::INFINITY).is_some(),
        format!(
            "order {} → {}, unstable-pair rel. error {eig_err:.2e}, max freq. deviation {dev:.3e} (gate {}), MPC on full plant {}",
            plant.n_x(),
            cm.continuous.n_x(),
            dc.freq_gate,
            settle(&tr)
        ),
    ))
}

fn real_time_budget(inst: &QpInstances, ts: f64) -> Outcome {
    let table = run_bench(inst, &[20], &[Width::Wide], &FgmOptions::default())?;
    let row = table.row(Width::Wide, 20).ok_or("missing bench row")?;
    Ok((
        row.mean_us < ts * 1e6,
        format!("{} variables, mean {:.1} µs, max {:.1} µs at 20 iterations (budget {:.0} µs)", inst.qp.n_vars(), row.mean_us, row.max_us, ts * 1e6),
    ))
}

fn report(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let (ok, detail) = match f() {
        Ok((ok, d)) => (ok, d),
        Err(e) => (false, format!("error: {e}")),
    };
    let el = t0.elapsed();
    let in_time = el <= limit;
    let pass = ok && in_time;
    println!(
        "{} {id:>2} {name} [{:.1} s / {} s{}]: {detail}",
        if pass { "PASS" } else { "FAIL" },
        el.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    pass
}

fn main() -> ExitCode {
    let s = |v: u64| Duration::from_secs(v);
    let t0 = Instant::now();
    let nominal = match Nominal::new() {
        Ok(n) => n,
        Err(e) => {
            println!("FAIL nominal setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("nominal plant and controller design built in {:.1} s", t0.elapsed().as_secs_f64());
    let n = &nominal;
    let mut ok = true;
    ok &= report(1, "unconstrained equivalence", s(10), || unconstrained_equivalence(n));
    ok &= report(2, "DARE certification", s(30), || dare_certification(n));
    let t_rec = Instant::now();
    let instances = record_instances(&n.sim, &n.design, &n.blocking, &n.cfg);
    let rec_time = t_rec.elapsed();
    match &instances {
        Ok(inst) => {
            ok &= report(3, "solver vs oracle", s(120).saturating_sub(rec_time), || solver_vs_oracle(inst));
        }
        Err(e) => {
            println!("FAIL  3 solver vs oracle: recording QP instances failed: {e}");
            ok = false;
        }
    }
    ok &= report(4, "oracle self-certification", s(60), oracle_certification);
    ok &= report(5, "controller ordering", s(60), || controller_ordering(n));
    ok &= report(6, "relaxed saturation", s(30), || relaxed_saturation(n));
    ok &= report(7, "BAP inclusion", s(600), || bap_inclusion(n));
    ok &= report(8, "robustness", s(120), || robustness(n));
    ok &= report(9, "noise tolerance", s(60), || noise_tolerance(n));
    ok &= report(10, "move blocking", s(60), || move_blocking(n));
    ok &= report(11, "model reduction", s(120), model_reduction);
    match &instances {
        Ok(inst) => ok &= report(12, "real-time budget", s(60), || real_time_budget(inst, n.cfg.ts)),
        Err(_) => {
            println!("FAIL 12 real-time budget: no QP instances");
            ok = false;
        }
    }
    println!("acceptance: {}", if ok { "all criteria passed" } else { "FAILED" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
