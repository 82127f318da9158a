use super::ContinuousModel;
use crate::error::Result;
use crate::linalg::{CMat, C64};

/// Frequency-response sample. `gain` is `None` when `jω` sits on (or within
/// 1e-12 of) an eigenvalue of `A`, where the resolvent is singular.
#[derive(Debug, Clone)]
pub struct FreqPoint {
    pub omega: f64,
    pub gain: Option<CMat>,
}

impl FreqPoint {
    /// Magnitude of entry (i, j); NaN when the resolvent was singular.
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.gain.as_ref().map_or(f64::NAN, |g| g[(i, j)].norm())
    }
}

/// Evaluates `C (jωI − A)⁻¹ B + D` on every grid frequency (rad/s).
pub fn freq_response(m: &ContinuousModel, omega_grid: &[f64]) -> Result<Vec<FreqPoint>> {
    let eig = m.eigenvalues()?;
    let n = m.n_x();
    let ac: CMat = m.a.map(|v| C64::new(v, 0.0));
    let bc: CMat = m.b.map(|v| C64::new(v, 0.0));
    let cc: CMat = m.c.map(|v| C64::new(v, 0.0));
    let dc: CMat = m.d.map(|v| C64::new(v, 0.0));
    let out = omega_grid
        .iter()
        .map(|&w| {
            let jw = C64::new(0.0, w);
            let near = eig.iter().any(|l| (l - jw).norm() <= 1e-12 * w.abs().max(1.0));
            let gain = if near {
                None
            } else if n == 0 {
                Some(dc.clone())
            } else {
                let res = CMat::from_diagonal_element(n, n, jw) - &ac;
                res.lu()
                    .solve(&bc)
                    .map(|x| &cc * x + &dc)
                    .filter(|g| g.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
            };
            FreqPoint { omega: w, gain }
        })
        .collect();
    Ok(out)
}

/// Logarithmically spaced grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

/// Largest entrywise `|G₁(jω) − G₂(jω)| / max(|G₁(jω)|_max, floor)` over the
/// grid, where `floor` guards frequencies at which the reference is tiny.
pub fn max_relative_deviation(a: &[FreqPoint], b: &[FreqPoint]) -> f64 {
    let mut worst = 0.0_f64;
    for (pa, pb) in a.iter().zip(b) {
        let (Some(ga), Some(gb)) = (&pa.gain, &pb.gain) else {
            return f64::INFINITY;
        };
        let scale = ga.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())).max(1e-300);
        let dev = ga
            .iter()
            .zip(gb.iter())
            .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()));
        worst = worst.max(dev / scale);
    }
    worst
}
