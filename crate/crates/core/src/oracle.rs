//! Reference solver for strictly convex box QPs: a primal-dual active-set
//! method, with a long projected-gradient run as fallback when the active
//! sets cycle. Always works in f64 and is never used inside the control loop.

use std::collections::HashSet;

use nalgebra::Cholesky;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Mat, Vector};
use crate::mpc::CondensedQp;

const MAX_ACTIVE_SET_ITERS: usize = 500;
const PG_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Lower,
    Upper,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    ActiveSet,
    ProjectedGradient,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub u_star: Vector,
    pub active_set: Vec<Status>,
    /// Bound multipliers: `−(H u + f)` on active components, zero on free ones.
    pub multipliers: Vector,
    pub kkt_residual: f64,
    pub method: OracleMethod,
    pub iterations: usize,
}

impl OracleSolution {
    pub fn cost(&self, h: &Mat, f: &Vector) -> f64 {
        0.5 * self.u_star.dot(&(h * &self.u_star)) + f.dot(&self.u_star)
    }
}

/// KKT tolerance used to accept a solution.
pub fn kkt_tolerance(f: &Vector) -> f64 {
    1e-10 * (1.0 + f.amax())
}

/// Largest component of the projected gradient (the gradient with the part
/// pointing out of an active bound removed).
pub fn kkt_check(h: &Mat, bounds: &Bounds, f: &Vector, u: &Vector) -> Result<f64> {
    if u.len() != h.nrows() || f.len() != u.len() || bounds.len() != u.len() {
        return Err(Error::Dimension("kkt_check operands".into()));
    }
    if !bounds.contains(u) {
        return Err(Error::InvalidArgument("kkt_check needs a feasible point".into()));
    }
    let g = h * u + f;
    Ok((0..u.len())
        .map(|i| {
            let pg = if u[i] <= bounds.lower[i] {
                g[i].min(0.0)
            } else if u[i] >= bounds.upper[i] {
                g[i].max(0.0)
            } else {
                g[i]
            };
            pg.abs()
        })
        .fold(0.0, f64::max))
}

/// Solves the QP for the condensed MPC problem with linear term `f_c`.
pub fn oracle_solve(qp: &CondensedQp, f_c: &Vector) -> Result<OracleSolution> {
    solve_box_qp(&qp.h, &qp.bounds, f_c)
}

pub fn solve_box_qp(h: &Mat, bounds: &Bounds, f: &Vector) -> Result<OracleSolution> {
    let n = h.nrows();
    if h.ncols() != n || f.len() != n || bounds.len() != n {
        return Err(Error::Dimension("oracle operands".into()));
    }
    let h = symmetrize(h);
    if Cholesky::new(h.clone()).is_none() {
        return Err(Error::NotPositiveDefinite("H_c".into()));
    }
    match active_set(&h, bounds, f)? {
        Some(sol) => Ok(sol),
        None => projected_gradient(&h, bounds, f),
    }
}

/// Solves the equality-constrained problem with the given statuses fixed.
fn solve_fixed(h: &Mat, bounds: &Bounds, f: &Vector, status: &[Status]) -> Result<Vector> {
    let n = h.nrows();
    let mut u = Vector::zeros(n);
    let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();
    for i in 0..n {
        match status[i] {
            Status::Lower => u[i] = bounds.lower[i],
            Status::Upper => u[i] = bounds.upper[i],
            Status::Free => {}
        }
    }
    if free.is_empty() {
        return Ok(u);
    }
    let m = free.len();
    let hff = Mat::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let rhs0 = -(f + h * &u);
    let rhs = Vector::from_fn(m, |a, _| rhs0[free[a]]);
    let ch = Cholesky::new(hff.clone()).ok_or_else(|| Error::NotPositiveDefinite("reduced Hessian".into()))?;
    let mut x = ch.solve(&rhs);
    // one step of iterative refinement
    let r = &rhs - &hff * &x;
    x += ch.solve(&r);
    for (a, &i) in free.iter().enumerate() {
        u[i] = x[a];
    }
    Ok(u)
}

fn finish(h: &Mat, bounds: &Bounds, f: &Vector, u: Vector, status: Vec<Status>, method: OracleMethod, iterations: usize) -> Result<OracleSolution> {
    let g = h * &u + f;
    let multipliers = Vector::from_fn(u.len(), |i, _| if status[i] == Status::Free { 0.0 } else { -g[i] });
    let kkt_residual = kkt_check(h, bounds, f, &u)?;
    Ok(OracleSolution {
        u_star: u,
        active_set: status,
        multipliers,
        kkt_residual,
        method,
        iterations,
    })
}

/// Primal-dual active-set iteration. Returns `None` when the active sets
/// cycle or the iteration budget runs out.
fn active_set(h: &Mat, bounds: &Bounds, f: &Vector) -> Result<Option<OracleSolution>> {
    let n = h.nrows();
    let c = Vector::from_fn(n, |i, _| 1.0 / h[(i, i)]);
    let mut status = vec![Status::Free; n];
    let mut seen: HashSet<Vec<Status>> = HashSet::new();
    for it in 0..MAX_ACTIVE_SET_ITERS {
        if !seen.insert(status.clone()) {
            return Ok(None);
        }
        let u = solve_fixed(h, bounds, f, &status)?;
        let lam = -(h * &u + f);
        let next: Vec<Status> = (0..n)
            .map(|i| {
                let l = if status[i] == Status::Free { 0.0 } else { lam[i] };
                let probe = u[i] + c[i] * l;
                if probe > bounds.upper[i] {
                    Status::Upper
                } else if probe < bounds.lower[i] {
                    Status::Lower
                } else {
                    Status::Free
                }
            })
            .collect();
        if next == status {
            let tol = kkt_tolerance(f);
            // The fixed point satisfies KKT up to rounding; clip for exact feasibility.
            let u = bounds.clip(&u);
            let sol = finish(h, bounds, f, u, status, OracleMethod::ActiveSet, it + 1)?;
            if sol.kkt_residual <= tol.max(1e-12 * h.amax() * sol.u_star.amax()) {
                return Ok(Some(sol));
            }
            return Ok(None);
        }
        status = next;
    }
    Ok(None)
}

/// Long projected-gradient run (accelerated, with adaptive restart), then a
/// polish on the identified active set.
pub fn projected_gradient(h: &Mat, bounds: &Bounds, f: &Vector) -> Result<OracleSolution> {
    let n = h.nrows();
    let h = symmetrize(h);
    let lmax = nalgebra::SymmetricEigen::new(h.clone()).eigenvalues.max();
    let step = 1.0 / lmax;
    let tol = kkt_tolerance(f);
    let mut u = bounds.clip(&Vector::zeros(n));
    let mut y = u.clone();
    let mut t = 1.0_f64;
    let mut iterations = 0;
    for it in 0..PG_MAX_ITERS {
        iterations = it + 1;
        let g = &h * &y + f;
        let next = bounds.clip(&(&y - g * step));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let restart = (&y - &next).dot(&(&next - &u)) > 0.0;
        if restart {
            y = next.clone();
            t = 1.0;
        } else {
            y = &next + (&next - &u) * ((t - 1.0) / t_next);
            t = t_next;
        }
        u = next;
        if it % 50 == 0 && kkt_check(&h, bounds, f, &u)? <= 1e-3 * tol {
            break;
        }
    }
    let status: Vec<Status> = (0..n)
        .map(|i| {
            if u[i] <= bounds.lower[i] {
                Status::Lower
            } else if u[i] >= bounds.upper[i] {
                Status::Upper
            } else {
                Status::Free
            }
        })
        .collect();
    let polished = bounds.clip(&solve_fixed(&h, bounds, f, &status)?);
    let pol_res = kkt_check(&h, bounds, f, &polished)?;
    let raw_res = kkt_check(&h, bounds, f, &u)?;
    let best = if pol_res <= raw_res { polished } else { u };
    let sol = finish(&h, bounds, f, best, status, OracleMethod::ProjectedGradient, iterations)?;
    if !(sol.kkt_residual <= 1e3 * tol) {
        return Err(Error::Convergence(format!(
            "projected gradient stopped at KKT residual {:.3e}",
            sol.kkt_residual
        )));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inactive_bounds_give_newton_step() {
        let h = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = Vector::from_vec(vec![1.0, 2.0]);
        let sol = solve_box_qp(&h, &Bounds::symmetric(2, 100.0).unwrap(), &f).unwrap();
        let exact = -h.clone().cholesky().unwrap().solve(&f);
        assert!((sol.u_star - exact).amax() < 1e-14);
        assert!(sol.active_set.iter().all(|s| *s == Status::Free));
    }

    #[test]
    fn one_dimensional_upper_bound() {
        let sol = solve_box_qp(&Mat::from_element(1, 1, 2.0), &Bounds::symmetric(1, 1.0).unwrap(), &Vector::from_element(1, -10.0)).unwrap();
        assert_eq!(sol.u_star[0], 1.0);
        assert_eq!(sol.active_set, vec![Status::Upper]);
        assert!((sol.multipliers[0] - 8.0).abs() < 1e-14);
    }

    #[test]
    fn kkt_check_examples() {
        let h = Mat::identity(3, 3);
        let b = Bounds::symmetric(3, 1.0).unwrap();
        let f = Vector::from_vec(vec![0.2, -0.7, 0.1]);
        assert!((kkt_check(&h, &b, &f, &Vector::zeros(3)).unwrap() - 0.7).abs() < 1e-15);
        assert!(kkt_check(&h, &b, &f, &Vector::from_element(3, 2.0)).is_err());
    }

    /// Tries every lower/upper/free assignment; the unique KKT point is the
    /// minimizer.
    fn enumerate(h: &Mat, b: &Bounds, f: &Vector) -> Vector {
        let n = h.nrows();
        let mut best: Option<(f64, Vector)> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let status: Vec<Status> = (0..n)
                .map(|_| {
                    let s = [Status::Lower, Status::Upper, Status::Free][c % 3];
                    c /= 3;
                    s
                })
                .collect();
            let u = solve_fixed(h, b, f, &status).unwrap();
            let g = h * &u + f;
            let ok = (0..n).all(|i| match status[i] {
                Status::Free => u[i] >= b.lower[i] - 1e-12 && u[i] <= b.upper[i] + 1e-12,
                Status::Lower => g[i] >= -1e-12,
                Status::Upper => g[i] <= 1e-12,
            });
            if ok {
                let j = 0.5 * u.dot(&(h * &u)) + f.dot(&u);
                if best.as_ref().is_none_or(|(bj, _)| j < *bj) {
                    best = Some((j, u));
                }
            }
        }
        best.unwrap().1
    }

    pub(crate) fn random_qp(rng: &mut ChaCha8Rng, n: usize) -> (Mat, Bounds, Vector) {
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &g * g.transpose() + Mat::identity(n, n) * 0.1;
        let f = Vector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
        let lo = Vector::from_fn(n, |_, _| rng.random_range(-2.0..0.0));
        let hi = Vector::from_fn(n, |_, _| rng.random_range(0.01..2.0));
        (h, Bounds::new(lo, hi).unwrap(), f)
    }

    #[test]
    fn matches_enumeration_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..60 {
            let n = 1 + k % 6;
            let (h, b, f) = random_qp(&mut rng, n);
            let sol = solve_box_qp(&h, &b, &f).unwrap();
            let brute = enumerate(&h, &b, &f);
            assert!((&sol.u_star - &brute).amax() <= 1e-10, "n={n}");
            assert!(sol.kkt_residual <= kkt_tolerance(&f));
        }
    }

    #[test]
    fn projected_gradient_agrees_with_active_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let (h, b, f) = random_qp(&mut rng, 12);
            let a = solve_box_qp(&h, &b, &f).unwrap();
            let p = projected_gradient(&h, &b, &f).unwrap();
            assert!((&a.u_star - &p.u_star).amax() <= 1e-8);
        }
    }
}
