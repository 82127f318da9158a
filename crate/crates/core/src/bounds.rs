use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Elementwise box `lower ≤ u ≤ upper` on an input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vector,
    pub upper: Vector,
}

impl Bounds {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "bounds have {} lower and {} upper entries",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
            return Err(Error::NonFinite("bounds".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument("every lower bound must be below its upper bound".into()));
        }
        Ok(Bounds { lower, upper })
    }

    /// `|u_j| ≤ limit` on `n` channels.
    pub fn symmetric(n: usize, limit: f64) -> Result<Self> {
        Self::new(Vector::from_element(n, -limit), Vector::from_element(n, limit))
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(self.upper.iter()).all(|v| v.is_finite())
    }

    pub fn contains(&self, u: &Vector) -> bool {
        u.len() == self.len() && u.iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn clip(&self, u: &Vector) -> Vector {
        Vector::from_fn(u.len(), |i, _| u[i].clamp(self.lower[i], self.upper[i]))
    }

    /// The same box repeated `times` times (one copy per horizon block).
    pub fn repeat(&self, times: usize) -> Bounds {
        let n = self.len();
        Bounds {
            lower: Vector::from_fn(n * times, |i, _| self.lower[i % n]),
            upper: Vector::from_fn(n * times, |i, _| self.upper[i % n]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_box() {
        assert!(Bounds::new(Vector::from_vec(vec![1.0]), Vector::from_vec(vec![0.0])).is_err());
        assert!(Bounds::symmetric(3, 0.0).is_err());
    }

    #[test]
    fn repeat_tiles_in_order() {
        let b = Bounds::new(Vector::from_vec(vec![-1.0, -2.0]), Vector::from_vec(vec![1.0, 2.0])).unwrap();
        let r = b.repeat(3);
        assert_eq!(r.lower.as_slice(), &[-1.0, -2.0, -1.0, -2.0, -1.0, -2.0]);
    }
}
