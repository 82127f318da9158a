//! Linear time-invariant state-space models: construction, discretization,
//! modal decomposition and order reduction.

mod discretize;
mod freq;
mod modal;
mod pade;
mod reduce;
mod surrogate;

pub use discretize::zoh_discretize;
pub use freq::{freq_response, log_grid, max_relative_deviation, FreqPoint};
pub use modal::{modal_decompose, ModalModel};
pub use pade::{actuator_bank, first_order_lag, pade_delay, parallel_compose, series_compose};
pub use reduce::{balanced_truncate, davison_reduce, BalancedReduction};
pub use surrogate::{build_surrogate, SurrogateConfig};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Mat};
use crate::matio::MatrixSet;

/// Continuous-time model `ẋ = A x + B u`, `y = C x + D u`, with an auxiliary
/// output `z = C_aux x + D_aux u` (coil currents for the surrogate plant).
///
/// `D` and `D_aux` are zero for physical plants; they become nonzero after
/// residualizing order reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub c_aux: Mat,
    pub d_aux: Mat,
}

impl ContinuousModel {
    /// Model without feedthrough and without auxiliary outputs.
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let (ny, nu, nx) = (c.nrows(), b.ncols(), a.nrows());
        Self::from_parts(a, b, c, Mat::zeros(ny, nu), Mat::zeros(0, nx), Mat::zeros(0, nu))
    }

    pub fn from_parts(a: Mat, b: Mat, c: Mat, d: Mat, c_aux: Mat, d_aux: Mat) -> Result<Self> {
        let m = ContinuousModel {
            a,
            b,
            c,
            d,
            c_aux,
            d_aux,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_aux(mut self, c_aux: Mat, d_aux: Mat) -> Result<Self> {
        self.c_aux = c_aux;
        self.d_aux = d_aux;
        self.validate()?;
        Ok(self)
    }

    pub fn with_feedthrough(mut self, d: Mat) -> Result<Self> {
        self.d = d;
        self.validate()?;
        Ok(self)
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_aux(&self) -> usize {
        self.c_aux.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(&self.a, &self.b, &self.c, &self.d)?;
        let (nx, nu) = (self.n_x(), self.n_u());
        if self.c_aux.ncols() != nx || self.d_aux.ncols() != nu || self.d_aux.nrows() != self.c_aux.nrows() {
            return Err(Error::Dimension(format!(
                "auxiliary output {}x{} / {}x{} for n_x={nx}, n_u={nu}",
                self.c_aux.nrows(),
                self.c_aux.ncols(),
                self.d_aux.nrows(),
                self.d_aux.ncols()
            )));
        }
        for (m, name) in [
            (&self.a, "A"),
            (&self.b, "B"),
            (&self.c, "C"),
            (&self.d, "D"),
            (&self.c_aux, "C_aux"),
            (&self.d_aux, "D_aux"),
        ] {
            ensure_finite(m, name)?;
        }
        Ok(())
    }

    /// Applies a state transformation `x = T z` given `T` and `T⁻¹`.
    pub fn transform(&self, t: &Mat, t_inv: &Mat) -> Result<Self> {
        Self::from_parts(
            t_inv * &self.a * t,
            t_inv * &self.b,
            &self.c * t,
            self.d.clone(),
            &self.c_aux * t,
            self.d_aux.clone(),
        )
    }

    /// Premultiplies the outputs: `y' = M y`.
    pub fn map_outputs(&self, m: &Mat) -> Result<Self> {
        if m.ncols() != self.n_y() {
            return Err(Error::Dimension(format!(
                "output map has {} columns, model has {} outputs",
                m.ncols(),
                self.n_y()
            )));
        }
        Self::from_parts(
            self.a.clone(),
            self.b.clone(),
            m * &self.c,
            m * &self.d,
            self.c_aux.clone(),
            self.d_aux.clone(),
        )
    }

    pub fn eigenvalues(&self) -> Result<Vec<crate::linalg::C64>> {
        crate::linalg::eigenvalues(&self.a)
    }

    pub fn to_matrix_set(&self) -> MatrixSet {
        let mut set = MatrixSet::new();
        set.insert("A", self.a.clone());
        set.insert("B", self.b.clone());
        set.insert("C", self.c.clone());
        set.insert("D", self.d.clone());
        set.insert("C_aux", self.c_aux.clone());
        set.insert("D_aux", self.d_aux.clone());
        set
    }

    pub fn from_matrix_set(set: &MatrixSet) -> Result<Self> {
        let a = set.require("A")?.clone();
        let b = set.require("B")?.clone();
        let c = set.require("C")?.clone();
        let (ny, nu, nx) = (c.nrows(), b.ncols(), a.nrows());
        let d = set.get("D").cloned().unwrap_or_else(|| Mat::zeros(ny, nu));
        let c_aux = set.get("C_aux").cloned().unwrap_or_else(|| Mat::zeros(0, nx));
        let d_aux = set
            .get("D_aux")
            .cloned()
            .unwrap_or_else(|| Mat::zeros(c_aux.nrows(), nu));
        Self::from_parts(a, b, c, d, c_aux, d_aux)
    }
}

/// Discrete-time model `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k) + D u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub ts: f64,
}

impl DiscreteModel {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat, ts: f64) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::InvalidArgument(format!("sampling time must be positive, got {ts}")));
        }
        check_dims(&a, &b, &c, &d)?;
        for (m, name) in [(&a, "A"), (&b, "B"), (&c, "C"), (&d, "D")] {
            ensure_finite(m, name)?;
        }
        Ok(DiscreteModel { a, b, c, d, ts })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_matrix_set(&self) -> MatrixSet {
        let mut set = MatrixSet::new();
        set.insert("A", self.a.clone());
        set.insert("B", self.b.clone());
        set.insert("C", self.c.clone());
        set.insert("D", self.d.clone());
        set.insert("Ts", Mat::from_element(1, 1, self.ts));
        set
    }

    pub fn from_matrix_set(set: &MatrixSet) -> Result<Self> {
        let a = set.require("A")?.clone();
        let b = set.require("B")?.clone();
        let c = set.require("C")?.clone();
        let d = set
            .get("D")
            .cloned()
            .unwrap_or_else(|| Mat::zeros(c.nrows(), b.ncols()));
        let ts = set.scalar("Ts")?;
        Self::new(a, b, c, d, ts)
    }
}

fn check_dims(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<()> {
    let nx = a.nrows();
    if a.ncols() != nx {
        return Err(Error::Dimension(format!("A is {}x{}, must be square", a.nrows(), a.ncols())));
    }
    if b.nrows() != nx {
        return Err(Error::Dimension(format!("B has {} rows, expected {nx}", b.nrows())));
    }
    if c.ncols() != nx {
        return Err(Error::Dimension(format!("C has {} columns, expected {nx}", c.ncols())));
    }
    if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "D is {}x{}, expected {}x{}",
            d.nrows(),
            d.ncols(),
            c.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}
