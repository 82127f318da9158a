//! Solver latency/accuracy benchmark on QP instances recorded from a closed
//! loop, plus per-sample certification against the oracle.

use std::fmt::Write as _;
use std::time::Instant;

use crate::design::ControllerDesign;
use crate::error::{Error, Result};
use crate::fgm::{mse, FgmOptions, FgmPlan, FgmSolver, Width};
use crate::linalg::Vector;
use crate::mpc::{BlockingMap, CondensedQp};
use crate::oracle::{oracle_solve, OracleSolution};
use crate::sim::{simulate_with, ControlLaw, PlantSim, QpSolverChoice, RunOptions, SimConfig};

/// Iteration counts benchmarked by default.
pub const DEFAULT_ITERS: [usize; 5] = [10, 20, 30, 50, 100];

/// A fixed Hessian with one linear term per recorded sample and the oracle
/// optimum for each.
#[derive(Debug, Clone)]
pub struct QpInstances {
    pub qp: CondensedQp,
    pub linear_terms: Vec<Vector>,
    pub solutions: Vec<OracleSolution>,
}

impl QpInstances {
    pub fn new(qp: CondensedQp, linear_terms: Vec<Vector>) -> Result<Self> {
        let solutions = linear_terms.iter().map(|f| oracle_solve(&qp, f)).collect::<Result<Vec<_>>>()?;
        Ok(QpInstances { qp, linear_terms, solutions })
    }

    pub fn len(&self) -> usize {
        self.linear_terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear_terms.is_empty()
    }
}

/// Records every QP of an oracle-driven MPC run of `cfg`.
pub fn record_instances(plant: &PlantSim, design: &ControllerDesign, blocking: &BlockingMap, cfg: &SimConfig) -> Result<QpInstances> {
    let law = ControlLaw::mpc(design, cfg.saturation, blocking, QpSolverChoice::Oracle)?;
    let trace = simulate_with(plant, &law, cfg, &RunOptions { record_qp: true })?;
    let qp = law.qp.expect("MPC law carries its QP");
    QpInstances::new(qp, trace.qp_linear_terms)
}

/// `(J(u) − J(u*)) / max(|J(u*)|, 1)` with `J = ½uᵀHu + fᵀu`.
pub fn cost_gap(qp: &CondensedQp, f: &Vector, u: &Vector, u_star: &Vector) -> f64 {
    let j = qp.cost_with(u, f);
    let j_star = qp.cost_with(u_star, f);
    (j - j_star) / j_star.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub width: Width,
    pub iters: usize,
    pub max_us: f64,
    pub mean_us: f64,
    pub worst_mse: f64,
    pub worst_cost_gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    /// Without `timing` the time columns are written as 0.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = String::from("width,iters,max_us,mean_us,worst_mse,worst_cost_gap\n");
        for r in &self.rows {
            let (mx, mn) = if timing { (r.max_us, r.mean_us) } else { (0.0, 0.0) };
            let _ = writeln!(s, "{},{},{:.3},{:.3},{:.6e},{:.6e}", r.width, r.iters, mx, mn, r.worst_mse, r.worst_cost_gap);
        }
        s
    }

    pub fn row(&self, width: Width, iters: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.width == width && r.iters == iters)
    }
}

fn solver_for(inst: &QpInstances, opts: &FgmOptions) -> Result<FgmSolver> {
    FgmSolver::new(&inst.qp, FgmPlan::new(&inst.qp.h, opts)?)
}

/// Per-instance FGM solutions from a cold start.
pub fn solve_all(inst: &QpInstances, opts: &FgmOptions) -> Result<Vec<Vector>> {
    let mut s = solver_for(inst, opts)?;
    inst.linear_terms.iter().map(|f| s.solve(f, None).map(|r| r.u)).collect()
}

/// Per-instance MSE against the oracle.
pub fn mse_per_instance(inst: &QpInstances, opts: &FgmOptions) -> Result<Vec<f64>> {
    solve_all(inst, opts)?
        .iter()
        .zip(&inst.solutions)
        .map(|(u, sol)| mse(u, &sol.u_star, &inst.qp.bounds))
        .collect()
}

/// One row per `(width, iters)`. Timing is single-threaded wall clock over
/// all instances after an untimed warm-up pass.
pub fn run_bench(inst: &QpInstances, iters: &[usize], widths: &[Width], base: &FgmOptions) -> Result<BenchTable> {
    if inst.is_empty() {
        return Err(Error::InvalidArgument("no QP instances to benchmark".into()));
    }
    let mut rows = Vec::new();
    for &width in widths {
        for &i_max in iters {
            let opts = FgmOptions { i_max, width, ..base.clone() };
            let mut solver = solver_for(inst, &opts)?;
            let n = solver.n_vars();
            let mut out = vec![0.0; n];
            for f in &inst.linear_terms {
                solver.solve_into(f.as_slice(), None, &mut out)?;
            }
            let (mut max_us, mut total_us) = (0.0_f64, 0.0);
            let (mut worst_mse, mut worst_gap) = (0.0_f64, 0.0_f64);
            for (f, sol) in inst.linear_terms.iter().zip(&inst.solutions) {
                let t0 = Instant::now();
                solver.solve_into(f.as_slice(), None, &mut out)?;
                let us = t0.elapsed().as_secs_f64() * 1e6;
                max_us = max_us.max(us);
                total_us += us;
                let u = Vector::from_column_slice(&out);
                worst_mse = worst_mse.max(mse(&u, &sol.u_star, &inst.qp.bounds)?);
                worst_gap = worst_gap.max(cost_gap(&inst.qp, f, &u, &sol.u_star));
            }
            rows.push(BenchRow {
                width,
                iters: i_max,
                max_us,
                mean_us: total_us / inst.len() as f64,
                worst_mse,
                worst_cost_gap: worst_gap,
            });
        }
    }
    Ok(BenchTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyGates {
    pub max_mse: f64,
    pub max_cost_gap: f64,
}

impl Default for VerifyGates {
    fn default() -> Self {
        VerifyGates { max_mse: 1e-4, max_cost_gap: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub sample: usize,
    pub mse: f64,
    pub cost_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub iters: usize,
    pub width: Width,
    pub gates: VerifyGates,
    pub rows: Vec<VerifyRow>,
    pub worst_mse: f64,
    pub worst_cost_gap: f64,
    pub failures: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,mse,cost_gap,pass\n");
        for r in &self.rows {
            let ok = r.mse <= self.gates.max_mse && r.cost_gap <= self.gates.max_cost_gap;
            let _ = writeln!(s, "{},{:.6e},{:.6e},{}", r.sample, r.mse, r.cost_gap, u8::from(ok));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "verify {} width, {} iterations: {} samples, worst MSE {:.3e} (gate {:.1e}), worst cost gap {:.3e} (gate {:.1e}), {} failing: {}",
            self.width,
            self.iters,
            self.rows.len(),
            self.worst_mse,
            self.gates.max_mse,
            self.worst_cost_gap,
            self.gates.max_cost_gap,
            self.failures,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Per-sample accuracy at a fixed iteration count, checked against `gates`.
pub fn verify(inst: &QpInstances, opts: &FgmOptions, gates: VerifyGates) -> Result<VerifyReport> {
    let us = solve_all(inst, opts)?;
    let mut rows = Vec::with_capacity(us.len());
    for (k, ((u, sol), f)) in us.iter().zip(&inst.solutions).zip(&inst.linear_terms).enumerate() {
        rows.push(VerifyRow {
            sample: k,
            mse: mse(u, &sol.u_star, &inst.qp.bounds)?,
            cost_gap: cost_gap(&inst.qp, f, u, &sol.u_star),
        });
    }
    let worst_mse = rows.iter().fold(0.0_f64, |m, r| m.max(r.mse));
    let worst_cost_gap = rows.iter().fold(0.0_f64, |m, r| m.max(r.cost_gap));
    let failures = rows.iter().filter(|r| !(r.mse <= gates.max_mse && r.cost_gap <= gates.max_cost_gap)).count();
    Ok(VerifyReport { iters: opts.i_max, width: opts.width, gates, rows, worst_mse, worst_cost_gap, failures })
}
