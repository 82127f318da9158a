//! Condensed infinite-horizon MPC: states are eliminated through the
//! prediction model, the terminal Riccati cost closes the horizon, and move
//! blocking compresses the decision vector.

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Mat, Vector};
use crate::lti::DiscreteModel;
use crate::matio::MatrixSet;
use crate::riccati::{dare_residual, DARE_TOL};

/// Move-blocking pattern: the horizon is cut into intervals over which the
/// input is held constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingMap {
    intervals: Vec<usize>,
    /// Block index of every horizon sample.
    block_of: Vec<usize>,
}

impl BlockingMap {
    pub fn new(intervals: &[usize]) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidArgument("blocking needs at least one interval (horizon N ≥ 1)".into()));
        }
        if intervals.contains(&0) {
            return Err(Error::InvalidArgument("blocking intervals must have length ≥ 1".into()));
        }
        let block_of = intervals
            .iter()
            .enumerate()
            .flat_map(|(b, &len)| std::iter::repeat_n(b, len))
            .collect();
        Ok(BlockingMap {
            intervals: intervals.to_vec(),
            block_of,
        })
    }

    /// No blocking: `n` intervals of length one.
    pub fn unblocked(n: usize) -> Result<Self> {
        Self::new(&vec![1; n])
    }

    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    /// Horizon length `N`.
    pub fn horizon(&self) -> usize {
        self.block_of.len()
    }

    /// Number of free blocks `N_u`.
    pub fn n_blocks(&self) -> usize {
        self.intervals.len()
    }

    pub fn block_of(&self, k: usize) -> usize {
        self.block_of[k]
    }

    /// Repeats each `n_u`-sized block of `blocked` over its interval.
    pub fn expand(&self, blocked: &Vector, n_u: usize) -> Result<Vector> {
        if blocked.len() != n_u * self.n_blocks() {
            return Err(Error::Dimension(format!(
                "blocked vector has {} entries, expected {}",
                blocked.len(),
                n_u * self.n_blocks()
            )));
        }
        let n = self.horizon();
        Ok(Vector::from_fn(n * n_u, |i, _| {
            let (k, j) = (i / n_u, i % n_u);
            blocked[self.block_of[k] * n_u + j]
        }))
    }

    /// Expansion operator `M` (`N·n_u × N_u·n_u`).
    pub fn expansion_matrix(&self, n_u: usize) -> Mat {
        let n = self.horizon();
        let mut m = Mat::zeros(n * n_u, self.n_blocks() * n_u);
        for k in 0..n {
            let b = self.block_of[k];
            for j in 0..n_u {
                m[(k * n_u + j, b * n_u + j)] = 1.0;
            }
        }
        m
    }
}

/// Condensed box QP `min ½ũᵀHũ + f_cᵀũ + c_c` s.t. `ũ_min ≤ ũ ≤ ũ_max`, with
/// `f_c = F x̂` and `c_c = ½ x̂ᵀ C x̂`.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub h: Mat,
    pub f_map: Mat,
    pub c_map: Mat,
    pub bounds: Bounds,
    pub blocking: BlockingMap,
    pub n_u: usize,
    pub n_x: usize,
    /// Prediction data behind `h`, when known; lets solvers apply `H`
    /// stage by stage instead of through the dense matrix.
    pub stages: Option<StageData>,
}

/// `(A, B, Q, R, P)` of the prediction model.
#[derive(Debug, Clone)]
pub struct StageData {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    pub p: Mat,
}

impl StageData {
    /// Multiply-adds of one stagewise product `H v` over `horizon` samples.
    pub fn product_cost(&self, horizon: usize) -> usize {
        let (n, m) = (self.b.nrows(), self.b.ncols());
        horizon * (3 * n * n + 2 * n * m + m * m)
    }
}

/// Builds the condensed QP. `p` must solve the DARE for `(A, B, Q_C, R_C)`.
pub fn condense(model: &DiscreteModel, q: &Mat, r: &Mat, p: &Mat, blocking: &BlockingMap, bounds: &Bounds) -> Result<CondensedQp> {
    let (n_x, n_u) = (model.n_x(), model.n_u());
    for (m, rows, cols, what) in [(q, n_x, n_x, "Q_C"), (p, n_x, n_x, "P"), (r, n_u, n_u, "R_C")] {
        if m.nrows() != rows || m.ncols() != cols {
            return Err(Error::Dimension(format!("{what} is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())));
        }
    }
    if bounds.len() != n_u {
        return Err(Error::Dimension(format!("bounds have {} entries, model has {n_u} inputs", bounds.len())));
    }
    let res = dare_residual(p, &model.a, &model.b, q, r);
    if !(res <= DARE_TOL) {
        return Err(Error::Riccati {
            reason: "terminal cost does not solve the DARE for this model".into(),
            residual: res,
        });
    }

    let n = blocking.horizon();
    let nv = n_u * blocking.n_blocks();
    let mut h = Mat::zeros(nv, nv);
    let mut f_map = Mat::zeros(nv, n_x);
    let mut c_map = q.clone();
    // s = ∂x_k/∂ũ, t = ∂x_k/∂x_0 = A^k
    let mut s = Mat::zeros(n_x, nv);
    let mut t = Mat::identity(n_x, n_x);
    for k in 0..n {
        let b = blocking.block_of(k);
        {
            let mut hb = h.view_mut((b * n_u, b * n_u), (n_u, n_u));
            hb += r;
        }
        let mut s_next = &model.a * &s;
        {
            let mut col = s_next.view_mut((0, b * n_u), (n_x, n_u));
            col += &model.b;
        }
        s = s_next;
        t = &model.a * &t;
        let w = if k + 1 == n { p } else { q };
        let ws = w * &s;
        h += s.transpose() * &ws;
        f_map += ws.transpose() * &t;
        c_map += t.transpose() * w * &t;
    }
    Ok(CondensedQp {
        h: symmetrize(&h),
        f_map,
        c_map: symmetrize(&c_map),
        bounds: bounds.repeat(blocking.n_blocks()),
        blocking: blocking.clone(),
        n_u,
        n_x,
        stages: Some(StageData {
            a: model.a.clone(),
            b: model.b.clone(),
            q: q.clone(),
            r: r.clone(),
            p: p.clone(),
        }),
    })
}

impl CondensedQp {
    pub fn n_vars(&self) -> usize {
        self.h.nrows()
    }

    /// `f_c = F x̂`.
    pub fn linear_term(&self, x_hat: &Vector) -> Result<Vector> {
        if x_hat.len() != self.n_x {
            return Err(Error::Dimension(format!("state has {} entries, expected {}", x_hat.len(), self.n_x)));
        }
        Ok(&self.f_map * x_hat)
    }

    /// `c_c = ½ x̂ᵀ C x̂`.
    pub fn constant_term(&self, x_hat: &Vector) -> f64 {
        0.5 * x_hat.dot(&(&self.c_map * x_hat))
    }

    /// Full cost `½ũᵀHũ + f_cᵀũ + c_c`.
    pub fn cost(&self, u: &Vector, x_hat: &Vector) -> Result<f64> {
        let f = self.linear_term(x_hat)?;
        Ok(self.cost_with(u, &f) + self.constant_term(x_hat))
    }

    /// `½ũᵀHũ + f_cᵀũ` (no constant).
    pub fn cost_with(&self, u: &Vector, f: &Vector) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + f.dot(u)
    }

    /// First applied move `u(k)` from a (blocked) QP solution.
    pub fn first_move(&self, u: &Vector) -> Vector {
        u.rows(0, self.n_u).into_owned()
    }

    /// Minimizer with the bounds ignored, `−H⁻¹ f_c`.
    pub fn unconstrained_minimizer(&self, f: &Vector) -> Result<Vector> {
        let ch = nalgebra::Cholesky::new(self.h.clone()).ok_or_else(|| Error::NotPositiveDefinite("H_c".into()))?;
        Ok(-ch.solve(f))
    }

    /// Matrices for external cross-checking. With `x_hat` the instance's
    /// `f_c` and `c_c` are included.
    pub fn to_matrix_set(&self, x_hat: Option<&Vector>) -> Result<MatrixSet> {
        let mut s = MatrixSet::new();
        s.insert("H_c", self.h.clone());
        s.insert("F", self.f_map.clone());
        s.insert("C_c", self.c_map.clone());
        s.insert("u_min", Mat::from_column_slice(self.n_vars(), 1, self.bounds.lower.as_slice()));
        s.insert("u_max", Mat::from_column_slice(self.n_vars(), 1, self.bounds.upper.as_slice()));
        let iv: Vec<f64> = self.blocking.intervals().iter().map(|&v| v as f64).collect();
        s.insert("intervals", Mat::from_row_slice(1, iv.len(), &iv));
        if let Some(x) = x_hat {
            let f = self.linear_term(x)?;
            s.insert("x_hat", Mat::from_column_slice(x.len(), 1, x.as_slice()));
            s.insert("f_c", Mat::from_column_slice(f.len(), 1, f.as_slice()));
            s.insert("c_c", Mat::from_element(1, 1, self.constant_term(x)));
        }
        Ok(s)
    }

    pub fn from_matrix_set(set: &MatrixSet) -> Result<Self> {
        let h = set.require("H_c")?.clone();
        let f_map = set.require("F")?.clone();
        let c_map = set.require("C_c")?.clone();
        let col = |name: &str| -> Result<Vector> {
            let m = set.require(name)?;
            Ok(Vector::from_column_slice(m.as_slice()))
        };
        let bounds = Bounds::new(col("u_min")?, col("u_max")?)?;
        let intervals: Vec<usize> = set
            .require("intervals")?
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidArgument(format!("bad blocking interval {v}")))
                }
            })
            .collect::<Result<_>>()?;
        let blocking = BlockingMap::new(&intervals)?;
        let n_v = h.nrows();
        if h.ncols() != n_v || f_map.nrows() != n_v || bounds.len() != n_v || n_v % blocking.n_blocks() != 0 {
            return Err(Error::Dimension("inconsistent QP matrices".into()));
        }
        let n_x = f_map.ncols();
        if c_map.shape() != (n_x, n_x) {
            return Err(Error::Dimension("C_c shape".into()));
        }
        Ok(CondensedQp {
            n_u: n_v / blocking.n_blocks(),
            n_x,
            h,
            f_map,
            c_map,
            bounds,
            blocking,
            stages: None,
        })
    }
}
