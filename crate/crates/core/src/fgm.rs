//! Preconditioned primal fast gradient method for box-constrained QPs
//! `min ½uᵀHu + fᵀu` s.t. `lo ≤ u ≤ hi`.
//!
//! Every solve runs exactly `i_max` iterations (no early exit), so the
//! latency is fixed. The iteration is
//!
//! ```text
//! x   = v − L⁻¹(H v + f)
//! u⁺  = clip(x, lo, hi)
//! v⁺  = u⁺ + β (u⁺ − u)
//! if (v − u⁺)ᵀ(u⁺ − u) > 0: restart
//! ```

use std::fmt::Write as _;

use num_traits::Float;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Mat, Vector};
use crate::mpc::{BlockingMap, CondensedQp, StageData};

/// Arithmetic width of the solver hot loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Width {
    /// 64-bit floats.
    Wide,
    /// 32-bit floats.
    Narrow,
}

impl std::str::FromStr for Width {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wide" => Ok(Width::Wide),
            "narrow" => Ok(Width::Narrow),
            _ => Err(Error::InvalidArgument(format!("unknown width `{s}` (expected wide or narrow)"))),
        }
    }
}

impl std::fmt::Display for Width {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Width::Wide => "wide",
            Width::Narrow => "narrow",
        })
    }
}

/// What happens when the restart test fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restart {
    /// No restart test.
    Off,
    /// `v⁺ = u`, `u⁺ = u`: the new iterate is discarded and the next
    /// gradient step starts again from the previous one.
    AsWritten,
    /// `v⁺ = u⁺`: keep the new iterate, drop the momentum.
    MomentumReset,
}

/// Rule for the diagonal preconditioner `L ⪰ H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    /// `L_ii = Σ_j |H_ij|` (Gershgorin).
    RowSum,
    /// `L = λ_max(H) I`.
    Scalar,
}

#[derive(Debug, Clone)]
pub struct FgmOptions {
    pub i_max: usize,
    pub restart: Restart,
    pub width: Width,
    pub preconditioner: Preconditioner,
}

impl Default for FgmOptions {
    fn default() -> Self {
        FgmOptions {
            i_max: 50,
            restart: Restart::AsWritten,
            width: Width::Wide,
            preconditioner: Preconditioner::RowSum,
        }
    }
}

/// Diagonal of `L`.
pub fn precondition(h: &Mat, rule: Preconditioner) -> Result<Vector> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Dimension("Hessian must be square".into()));
    }
    if nalgebra::Cholesky::new(symmetrize(h)).is_none() {
        return Err(Error::NotPositiveDefinite("H_c".into()));
    }
    Ok(match rule {
        Preconditioner::RowSum => Vector::from_fn(n, |i, _| h.row(i).iter().map(|v| v.abs()).sum()),
        Preconditioner::Scalar => {
            let top = symmetrize(h).symmetric_eigenvalues().max();
            Vector::from_element(n, top)
        }
    })
}

/// Extreme eigenvalues `(μ, λ_max)` of `L^{-1/2} H L^{-1/2}`.
pub fn scaled_spectrum(h: &Mat, l: &Vector) -> (f64, f64) {
    let s = Vector::from_fn(l.len(), |i, _| 1.0 / l[i].sqrt());
    let scaled = Mat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * s[i] * s[j]);
    let ev = symmetrize(&scaled).symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Constant strongly-convex momentum `β = (1 − √μ)/(1 + √μ)`, repeated
/// `i_max` times.
pub fn beta_sequence(h: &Mat, l: &Vector, i_max: usize) -> Result<Vec<f64>> {
    let (mu, _) = scaled_spectrum(h, l);
    beta_from_mu(mu, i_max)
}

fn beta_from_mu(mu: f64, i_max: usize) -> Result<Vec<f64>> {
    if !(mu > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("preconditioned Hessian has μ = {mu}")));
    }
    let r = mu.min(1.0).sqrt();
    Ok(vec![(1.0 - r) / (1.0 + r); i_max])
}

/// Elementwise clamp.
pub fn prox_box<T: Float>(x: &mut [T], lo: &[T], hi: &[T]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.max(l).min(h);
    }
}

/// Normalized root-mean-square error between an iterate and the optimum,
/// each component scaled by its bound span.
pub fn mse(u: &Vector, u_star: &Vector, bounds: &Bounds) -> Result<f64> {
    if u.len() != u_star.len() || u.len() != bounds.len() {
        return Err(Error::Dimension("mse operands".into()));
    }
    if u.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..u.len() {
        let span = bounds.upper[i] - bounds.lower[i];
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::InvalidArgument(format!("bound span {span} at index {i}")));
        }
        let e = (u[i] - u_star[i]) / span;
        acc += e * e;
    }
    Ok((acc / u.len() as f64).sqrt())
}

/// Precomputed solver data for one Hessian.
#[derive(Debug, Clone)]
pub struct FgmPlan {
    pub l: Vector,
    pub l_inv: Vector,
    pub beta: Vec<f64>,
    pub i_max: usize,
    pub restart: Restart,
    pub width: Width,
    /// Smallest eigenvalue of `L^{-1/2} H L^{-1/2}`.
    pub mu: f64,
    /// Largest eigenvalue of `L^{-1/2} H L^{-1/2}` (certified ≤ 1).
    pub lambda_max: f64,
}

impl FgmPlan {
    pub fn new(h: &Mat, opts: &FgmOptions) -> Result<Self> {
        let l = precondition(h, opts.preconditioner)?;
        let (mu, lambda_max) = scaled_spectrum(h, &l);
        if lambda_max > 1.0 + 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "preconditioner does not dominate the Hessian (λ_max = {lambda_max})"
            )));
        }
        let beta = beta_from_mu(mu, opts.i_max)?;
        Ok(FgmPlan {
            l_inv: l.map(|v| 1.0 / v),
            l,
            beta,
            i_max: opts.i_max,
            restart: opts.restart,
            width: opts.width,
            mu,
            lambda_max,
        })
    }

    /// Condition number of the preconditioned Hessian.
    pub fn kappa(&self) -> f64 {
        self.lambda_max / self.mu
    }
}

#[derive(Debug, Clone)]
pub struct FgmResult {
    pub u: Vector,
    pub iterations: usize,
    pub restarts: usize,
    /// `‖L (u − clip(u − L⁻¹(Hu + f)))‖_∞` at the returned iterate.
    pub grad_map_norm: f64,
}

/// One row of the optional per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_map_norm: f64,
    pub restart: bool,
}

pub fn diagnostics_csv(records: &[IterRecord]) -> String {
    let mut s = String::from("iteration,cost,grad_map_norm,restart\n");
    for r in records {
        let _ = writeln!(s, "{},{:.12e},{:.12e},{}", r.iteration, r.cost, r.grad_map_norm, u8::from(r.restart));
    }
    s
}

/// Row-major dense `rows x cols` block in the solver width.
#[derive(Debug, Clone)]
struct Dense<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Float> Dense<T> {
    fn from_mat(m: &Mat) -> Self {
        let (rows, cols) = m.shape();
        Dense {
            rows,
            cols,
            data: (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| cast(m[(i, j)])).collect(),
        }
    }

    /// `out (+)= M v`.
    #[inline]
    fn gemv(&self, v: &[T], out: &mut [T], add: bool) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            let d = dot(&self.data[i * self.cols..(i + 1) * self.cols], v);
            *o = if add { *o + d } else { d };
        }
    }
}

#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    // independent partial sums so the loop vectorizes
    let mut acc = [T::zero(); LANES];
    let (ac, at) = a[..n].split_at(n - n % LANES);
    let (bc, bt) = b[..n].split_at(n - n % LANES);
    for (x, y) in ac.chunks_exact(LANES).zip(bc.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut sum = acc.iter().fold(T::zero(), |s, &x| s + x);
    for (x, y) in at.iter().zip(bt) {
        sum = sum + *x * *y;
    }
    sum
}

/// `H v` without forming `H`: a forward state rollout with `x_0 = 0`
/// followed by a backward adjoint sweep.
#[derive(Debug, Clone)]
struct Stagewise<T> {
    n_x: usize,
    n_u: usize,
    a: Dense<T>,
    a_t: Dense<T>,
    b: Dense<T>,
    b_t: Dense<T>,
    q: Dense<T>,
    r: Dense<T>,
    p: Dense<T>,
    block: Vec<usize>,
    xs: Vec<T>,
    lam: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Float> Stagewise<T> {
    fn new(st: &StageData, blocking: &BlockingMap) -> Self {
        let (n_x, n_u) = (st.b.nrows(), st.b.ncols());
        let n = blocking.horizon();
        Stagewise {
            n_x,
            n_u,
            a: Dense::from_mat(&st.a),
            a_t: Dense::from_mat(&st.a.transpose()),
            b: Dense::from_mat(&st.b),
            b_t: Dense::from_mat(&st.b.transpose()),
            q: Dense::from_mat(&symmetrize(&st.q)),
            r: Dense::from_mat(&symmetrize(&st.r)),
            p: Dense::from_mat(&symmetrize(&st.p)),
            block: (0..n).map(|k| blocking.block_of(k)).collect(),
            xs: vec![T::zero(); (n + 1) * n_x],
            lam: vec![T::zero(); n_x],
            tmp: vec![T::zero(); n_x],
        }
    }

    fn apply(&mut self, v: &[T], out: &mut [T]) {
        let (nx, nu, n) = (self.n_x, self.n_u, self.block.len());
        for o in out.iter_mut() {
            *o = T::zero();
        }
        for x in &mut self.xs[..nx] {
            *x = T::zero();
        }
        for k in 0..n {
            let vb = &v[self.block[k] * nu..(self.block[k] + 1) * nu];
            let (cur, next) = self.xs.split_at_mut((k + 1) * nx);
            let next = &mut next[..nx];
            self.a.gemv(&cur[k * nx..], next, false);
            self.b.gemv(vb, next, true);
            self.r.gemv(vb, &mut out[self.block[k] * nu..(self.block[k] + 1) * nu], true);
        }
        self.p.gemv(&self.xs[n * nx..], &mut self.lam, false);
        for k in (0..n).rev() {
            let b = self.block[k];
            self.b_t.gemv(&self.lam, &mut out[b * nu..(b + 1) * nu], true);
            if k > 0 {
                self.q.gemv(&self.xs[k * nx..(k + 1) * nx], &mut self.tmp, false);
                self.a_t.gemv(&self.lam, &mut self.tmp, true);
                std::mem::swap(&mut self.lam, &mut self.tmp);
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Hessian<T> {
    /// Symmetric, column-major; column `i` equals row `i`.
    Dense(Vec<T>),
    Stagewise(Box<Stagewise<T>>),
}

/// Solver state in a fixed float type; no allocation after construction.
#[derive(Debug, Clone)]
struct Core<T> {
    n: usize,
    h: Hessian<T>,
    l_inv: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    beta: Vec<T>,
    restart: Restart,
    f: Vec<T>,
    v: Vec<T>,
    u: Vec<T>,
    u_prev: Vec<T>,
    x: Vec<T>,
    g: Vec<T>,
}

fn cast<T: Float>(v: f64) -> T {
    T::from(v).expect("finite value representable in solver width")
}

impl<T: Float> Core<T> {
    fn new(h: &Mat, stages: Option<(&StageData, &BlockingMap)>, plan: &FgmPlan, bounds: &Bounds) -> Self {
        let n = h.nrows();
        // Bounds are rounded inward so the narrow box stays inside the wide one.
        let lo = bounds
            .lower
            .iter()
            .map(|&b| {
                let t: T = cast(b);
                if t.to_f64().unwrap() < b { next_up(t) } else { t }
            })
            .collect();
        let hi = bounds
            .upper
            .iter()
            .map(|&b| {
                let t: T = cast(b);
                if t.to_f64().unwrap() > b { next_down(t) } else { t }
            })
            .collect();
        Core {
            n,
            h: match stages {
                Some((st, blocking)) => Hessian::Stagewise(Box::new(Stagewise::new(st, blocking))),
                None => Hessian::Dense(symmetrize(h).iter().map(|&v| cast(v)).collect()),
            },
            l_inv: plan.l_inv.iter().map(|&v| cast(v)).collect(),
            lo,
            hi,
            beta: plan.beta.iter().map(|&v| cast(v)).collect(),
            restart: plan.restart,
            f: vec![T::zero(); n],
            v: vec![T::zero(); n],
            u: vec![T::zero(); n],
            u_prev: vec![T::zero(); n],
            x: vec![T::zero(); n],
            g: vec![T::zero(); n],
        }
    }

    fn hess_times(&mut self) {
        match &mut self.h {
            Hessian::Dense(h) => {
                let n = self.n;
                for (i, o) in self.g.iter_mut().enumerate() {
                    *o = dot(&h[i * n..(i + 1) * n], &self.v);
                }
            }
            Hessian::Stagewise(s) => s.apply(&self.v, &mut self.g),
        }
    }

    /// Runs the fixed iteration budget. `trace` receives
    /// `(iteration, iterate, restarted)` after every iteration.
    fn run(&mut self, f: &[f64], warm: Option<&[f64]>, mut trace: Option<&mut dyn FnMut(usize, &[T], bool)>) -> usize {
        let n = self.n;
        for i in 0..n {
            self.f[i] = cast(f[i]);
            let w = warm.map_or(T::zero(), |w| cast(w[i]));
            self.u[i] = w.max(self.lo[i]).min(self.hi[i]);
            self.v[i] = self.u[i];
        }
        let mut restarts = 0;
        for it in 0..self.beta.len() {
            self.hess_times();
            self.u_prev.copy_from_slice(&self.u);
            let mut test = T::zero();
            for k in 0..n {
                let x = self.v[k] - self.l_inv[k] * (self.g[k] + self.f[k]);
                self.x[k] = x;
                let u = x.max(self.lo[k]).min(self.hi[k]);
                test = test + (self.v[k] - u) * (u - self.u_prev[k]);
                self.u[k] = u;
            }
            let fire = self.restart != Restart::Off && test > T::zero();
            if fire {
                restarts += 1;
                match self.restart {
                    Restart::AsWritten => {
                        self.u.copy_from_slice(&self.u_prev);
                        self.v.copy_from_slice(&self.u_prev);
                    }
                    _ => self.v.copy_from_slice(&self.u),
                }
            } else {
                let b = self.beta[it];
                for k in 0..n {
                    self.v[k] = self.u[k] + b * (self.u[k] - self.u_prev[k]);
                }
            }
            if let Some(cb) = trace.as_mut() {
                cb(it + 1, &self.u, fire);
            }
        }
        restarts
    }
}

fn next_up<T: Float>(t: T) -> T {
    let step = t.abs().max(T::min_positive_value()) * T::epsilon();
    t + step
}

fn next_down<T: Float>(t: T) -> T {
    let step = t.abs().max(T::min_positive_value()) * T::epsilon();
    t - step
}

#[derive(Debug, Clone)]
enum Inner {
    Wide(Core<f64>),
    Narrow(Core<f32>),
}

/// Plan plus workspace for one QP; reusable across samples (only `f_c`
/// changes).
#[derive(Debug, Clone)]
pub struct FgmSolver {
    plan: FgmPlan,
    h: Mat,
    bounds: Bounds,
    inner: Inner,
}

impl FgmSolver {
    /// Uses the stagewise product when the QP carries its prediction data
    /// and that is cheaper than the dense one.
    pub fn new(qp: &CondensedQp, plan: FgmPlan) -> Result<Self> {
        let n = qp.n_vars();
        let stages = qp
            .stages
            .as_ref()
            .filter(|st| 2 * st.product_cost(qp.blocking.horizon()) < n * n)
            .map(|st| (st, &qp.blocking));
        Self::build(&qp.h, stages, &qp.bounds, plan)
    }

    /// Always applies `H` as a dense matrix.
    pub fn from_parts(h: &Mat, bounds: &Bounds, plan: FgmPlan) -> Result<Self> {
        Self::build(h, None, bounds, plan)
    }

    /// Always applies `H` stage by stage; fails when the QP has no stage data.
    pub fn stagewise(qp: &CondensedQp, plan: FgmPlan) -> Result<Self> {
        let st = qp.stages.as_ref().ok_or_else(|| Error::InvalidArgument("QP has no stage data".into()))?;
        Self::build(&qp.h, Some((st, &qp.blocking)), &qp.bounds, plan)
    }

    fn build(h: &Mat, stages: Option<(&StageData, &BlockingMap)>, bounds: &Bounds, plan: FgmPlan) -> Result<Self> {
        let n = h.nrows();
        if bounds.len() != n || plan.l.len() != n {
            return Err(Error::Dimension("solver plan, Hessian and bounds sizes differ".into()));
        }
        let inner = match plan.width {
            Width::Wide => Inner::Wide(Core::new(h, stages, &plan, bounds)),
            Width::Narrow => Inner::Narrow(Core::new(h, stages, &plan, bounds)),
        };
        Ok(FgmSolver {
            plan,
            h: h.clone(),
            bounds: bounds.clone(),
            inner,
        })
    }

    pub fn plan(&self) -> &FgmPlan {
        &self.plan
    }

    pub fn n_vars(&self) -> usize {
        self.h.nrows()
    }

    /// Solves into `out` without allocating; returns the restart count.
    pub fn solve_into(&mut self, f: &[f64], warm: Option<&[f64]>, out: &mut [f64]) -> Result<usize> {
        let n = self.n_vars();
        if f.len() != n || out.len() != n || warm.is_some_and(|w| w.len() != n) {
            return Err(Error::Dimension("FGM vector sizes".into()));
        }
        let restarts = match &mut self.inner {
            Inner::Wide(c) => {
                let r = c.run(f, warm, None);
                out.copy_from_slice(&c.u);
                r
            }
            Inner::Narrow(c) => {
                let r = c.run(f, warm, None);
                for (o, u) in out.iter_mut().zip(&c.u) {
                    *o = *u as f64;
                }
                r
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "FGM iterate ({} width); the problem is badly conditioned for this arithmetic",
                self.plan.width
            )));
        }
        Ok(restarts)
    }

    pub fn solve(&mut self, f: &Vector, warm: Option<&Vector>) -> Result<FgmResult> {
        let mut out = vec![0.0; self.n_vars()];
        let restarts = self.solve_into(f.as_slice(), warm.map(|w| w.as_slice()), &mut out)?;
        let u = Vector::from_vec(out);
        let grad_map_norm = self.grad_map_norm(&u, f);
        Ok(FgmResult {
            u,
            iterations: self.plan.i_max,
            restarts,
            grad_map_norm,
        })
    }

    /// Same iterates as [`FgmSolver::solve`], with one diagnostics record per
    /// iteration (cost excludes the constant term).
    pub fn solve_traced(&mut self, f: &Vector, warm: Option<&Vector>) -> Result<(FgmResult, Vec<IterRecord>)> {
        let n = self.n_vars();
        if f.len() != n || warm.is_some_and(|w| w.len() != n) {
            return Err(Error::Dimension("FGM vector sizes".into()));
        }
        let mut iterates: Vec<(usize, Vec<f64>, bool)> = Vec::with_capacity(self.plan.i_max);
        let restarts = match &mut self.inner {
            Inner::Wide(c) => {
                let mut cb = |i: usize, u: &[f64], r: bool| iterates.push((i, u.to_vec(), r));
                let r = c.run(f.as_slice(), warm.map(|w| w.as_slice()), Some(&mut cb));
                r
            }
            Inner::Narrow(c) => {
                let mut cb = |i: usize, u: &[f32], r: bool| iterates.push((i, u.iter().map(|&v| v as f64).collect(), r));
                let r = c.run(f.as_slice(), warm.map(|w| w.as_slice()), Some(&mut cb));
                r
            }
        };
        let records: Vec<IterRecord> = iterates
            .into_iter()
            .map(|(i, u, r)| {
                let u = Vector::from_vec(u);
                IterRecord {
                    iteration: i,
                    cost: 0.5 * u.dot(&(&self.h * &u)) + f.dot(&u),
                    grad_map_norm: self.grad_map_norm(&u, f),
                    restart: r,
                }
            })
            .collect();
        let mut out = vec![0.0; n];
        self.solve_into(f.as_slice(), warm.map(|w| w.as_slice()), &mut out)?;
        let u = Vector::from_vec(out);
        let grad_map_norm = self.grad_map_norm(&u, f);
        Ok((
            FgmResult {
                u,
                iterations: self.plan.i_max,
                restarts,
                grad_map_norm,
            },
            records,
        ))
    }

    fn grad_map_norm(&self, u: &Vector, f: &Vector) -> f64 {
        let g = &self.h * u + f;
        let mut worst = 0.0_f64;
        for i in 0..u.len() {
            let step = (u[i] - self.plan.l_inv[i] * g[i]).clamp(self.bounds.lower[i], self.bounds.upper[i]);
            worst = worst.max((self.plan.l[i] * (u[i] - step)).abs());
        }
        worst
    }
}

/// One-shot convenience wrapper: builds a workspace and solves once.
pub fn fgm_solve(qp: &CondensedQp, f_c: &Vector, warm: Option<&Vector>, plan: &FgmPlan) -> Result<FgmResult> {
    FgmSolver::new(qp, plan.clone())?.solve(f_c, warm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solver(h: Mat, bounds: Bounds, opts: FgmOptions) -> FgmSolver {
        let plan = FgmPlan::new(&h, &opts).unwrap();
        FgmSolver::from_parts(&h, &bounds, plan).unwrap()
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + Mat::identity(n, n) * 0.5
    }

    #[test]
    fn identity_hessian_needs_no_scaling() {
        let l = precondition(&Mat::identity(3, 3), Preconditioner::RowSum).unwrap();
        assert_eq!(l, Vector::from_element(3, 1.0));
        let beta = beta_sequence(&Mat::identity(3, 3), &l, 4).unwrap();
        assert_eq!(beta, vec![0.0; 4]);
    }

    #[test]
    fn two_by_two_row_sum() {
        let h = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let l = precondition(&h, Preconditioner::RowSum).unwrap();
        assert_eq!(l.as_slice(), &[3.0, 3.0]);
        let (mu, top) = scaled_spectrum(&h, &l);
        assert!((mu - 1.0 / 3.0).abs() < 1e-14 && (top - 1.0).abs() < 1e-14);
    }

    #[test]
    fn beta_for_mu_one_ninth() {
        let h = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 1.0 / 9.0]));
        let b = beta_sequence(&h, &Vector::from_element(2, 1.0), 3).unwrap();
        assert!(b.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn indefinite_hessian_rejected() {
        let h = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(precondition(&h, Preconditioner::RowSum).is_err());
    }

    #[test]
    fn prox_examples() {
        let (lo, hi) = ([-34.0; 3], [34.0; 3]);
        let mut x = [40.0, -50.0, 10.0];
        prox_box(&mut x, &lo, &hi);
        assert_eq!(x, [34.0, -34.0, 10.0]);
        let mut y = [1.0, -2.0, 33.9];
        prox_box(&mut y, &lo, &hi);
        assert_eq!(y, [1.0, -2.0, 33.9]);
    }

    proptest! {
        #[test]
        fn stagewise_product_matches_dense(seed in 0u64..2000, nx in 1usize..6, nu in 1usize..4,
                                           intervals in proptest::collection::vec(1usize..4, 1..6)) {
            use crate::lti::DiscreteModel;
            use crate::mpc::condense;
            use crate::riccati::solve_dare;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Mat::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0)) * (1.2 / (nx as f64).sqrt());
            let b = Mat::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
            let m = DiscreteModel::new(a, b, Mat::identity(nx, nx), Mat::zeros(nx, nu), 1e-3).unwrap();
            let q = random_spd(&mut rng, nx) * 0.1;
            let r = Mat::identity(nu, nu) * rng.random_range(0.05..2.0);
            let Ok(p) = solve_dare(&m.a, &m.b, &q, &r) else { return Ok(()) };
            let blocking = BlockingMap::new(&intervals).unwrap();
            let bounds = Bounds::symmetric(nu, 0.5).unwrap();
            let qp = condense(&m, &q, &r, &p, &blocking, &bounds).unwrap();
            let nv = qp.n_vars();
            let v: Vec<f64> = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut st = Stagewise::<f64>::new(qp.stages.as_ref().unwrap(), &blocking);
            let mut out = vec![0.0; nv];
            st.apply(&v, &mut out);
            let dense = &qp.h * Vector::from_column_slice(&v);
            let scale = dense.amax().max(1e-9);
            for i in 0..nv {
                prop_assert!((out[i] - dense[i]).abs() <= 1e-11 * scale, "{i}: {} vs {}", out[i], dense[i]);
            }

            let opts = FgmOptions { i_max: 30, ..FgmOptions::default() };
            let plan = FgmPlan::new(&qp.h, &opts).unwrap();
            let f = Vector::from_fn(nv, |_, _| rng.random_range(-5.0..5.0));
            let ud = FgmSolver::from_parts(&qp.h, &qp.bounds, plan.clone()).unwrap().solve(&f, None).unwrap().u;
            let us = FgmSolver::stagewise(&qp, plan).unwrap().solve(&f, None).unwrap().u;
            prop_assert!((ud - us).amax() <= 1e-9);
        }

        #[test]
        fn prox_is_idempotent(v in proptest::collection::vec(-100.0f64..100.0, 1..20)) {
            let lo = vec![-34.0; v.len()];
            let hi = vec![20.0; v.len()];
            let mut once = v.clone();
            prox_box(&mut once, &lo, &hi);
            let mut twice = once.clone();
            prox_box(&mut twice, &lo, &hi);
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn mse_examples() {
        let b = Bounds::symmetric(2, 1.0).unwrap();
        let z = Vector::zeros(2);
        assert_eq!(mse(&z, &z, &b).unwrap(), 0.0);
        let one = Bounds::symmetric(1, 1.0).unwrap();
        assert!((mse(&Vector::from_element(1, 1.0), &Vector::from_element(1, -1.0), &one).unwrap() - 1.0).abs() < 1e-15);
        let half = mse(&Vector::from_vec(vec![1.0, 0.0]), &z, &b).unwrap();
        assert!((half - (0.125f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_linear_term_stays_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_spd(&mut rng, 6);
        for restart in [Restart::Off, Restart::AsWritten, Restart::MomentumReset] {
            let mut s = solver(h.clone(), Bounds::symmetric(6, 2.0).unwrap(), FgmOptions { i_max: 17, restart, ..Default::default() });
            let r = s.solve(&Vector::zeros(6), None).unwrap();
            assert_eq!(r.u, Vector::zeros(6));
        }
    }

    #[test]
    fn one_dimensional_clip_after_first_projection() {
        let mut s = solver(Mat::from_element(1, 1, 2.0), Bounds::symmetric(1, 1.0).unwrap(), FgmOptions { i_max: 1, ..Default::default() });
        let r = s.solve(&Vector::from_element(1, -10.0), None).unwrap();
        assert_eq!(r.u[0], 1.0);
    }

    #[test]
    fn unconstrained_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let h = random_spd(&mut rng, 8);
            let f = Vector::from_fn(8, |_, _| rng.random_range(-5.0..5.0));
            let exact = -h.clone().cholesky().unwrap().solve(&f);
            let mut s = solver(h, Bounds::symmetric(8, 1e9).unwrap(), FgmOptions { i_max: 200, ..Default::default() });
            let r = s.solve(&f, None).unwrap();
            assert!((&r.u - &exact).amax() <= 1e-6 * exact.amax(), "{}", (&r.u - &exact).amax());
        }
    }

    #[test]
    fn narrow_width_stays_close_to_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_spd(&mut rng, 10);
        let f = Vector::from_fn(10, |_, _| rng.random_range(-5.0..5.0));
        let b = Bounds::symmetric(10, 1.0).unwrap();
        let opts = FgmOptions { i_max: 20, ..Default::default() };
        let wide = solver(h.clone(), b.clone(), opts.clone()).solve(&f, None).unwrap();
        let narrow = solver(h, b.clone(), FgmOptions { width: Width::Narrow, ..opts }).solve(&f, None).unwrap();
        assert!(b.contains(&narrow.u));
        assert!(mse(&wide.u, &narrow.u, &b).unwrap() <= 1e-3);
    }

    #[test]
    fn traced_solve_matches_plain_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_spd(&mut rng, 5);
        let f = Vector::from_fn(5, |_, _| rng.random_range(-5.0..5.0));
        let mut s = solver(h, Bounds::symmetric(5, 0.5).unwrap(), FgmOptions { i_max: 30, ..Default::default() });
        let plain = s.solve(&f, None).unwrap();
        let (traced, rec) = s.solve_traced(&f, None).unwrap();
        assert_eq!(plain.u, traced.u);
        assert_eq!(rec.len(), 30);
        assert_eq!(plain.restarts, rec.iter().filter(|r| r.restart).count());
        let csv = diagnostics_csv(&rec);
        assert!(csv.starts_with("iteration,cost,grad_map_norm,restart\n"));
        assert_eq!(csv.lines().count(), 31);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn iterates_are_feasible_and_deterministic(seed in 0u64..10_000, n in 1usize..12, i_max in 0usize..40,
                                                  narrow in proptest::bool::ANY) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_spd(&mut rng, n);
            let f = Vector::from_fn(n, |_, _| rng.random_range(-50.0..50.0));
            let lo = Vector::from_fn(n, |_, _| rng.random_range(-3.0..-0.1));
            let hi = Vector::from_fn(n, |_, _| rng.random_range(0.1..3.0));
            let b = Bounds::new(lo, hi).unwrap();
            let width = if narrow { Width::Narrow } else { Width::Wide };
            let opts = FgmOptions { i_max, width, ..Default::default() };
            let a = solver(h.clone(), b.clone(), opts.clone()).solve(&f, None).unwrap();
            let c = solver(h, b.clone(), opts).solve(&f, None).unwrap();
            prop_assert!(b.contains(&a.u));
            prop_assert_eq!(a.u, c.u);
        }
    }
}
