use std::fmt::Write as _;

use crate::linalg::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub y: Vec<f64>,
    pub y_m: Vec<f64>,
    /// Controller command, before the supply clips it.
    pub u: Vec<f64>,
    /// Voltage at the coils.
    pub u_elm: Vec<f64>,
    pub i_elm: Vec<f64>,
    /// Σ|u_ELM·I_ELM| (W).
    pub power: f64,
    pub iters: usize,
    pub solve_us: f64,
}

/// Per-control-sample record of one run.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub ts: f64,
    pub n_u: usize,
    pub n_m: usize,
    pub samples: Vec<SampleRecord>,
    /// State norm exceeded the divergence bound; the trace stops there.
    pub diverged: bool,
    pub settle_threshold: f64,
    pub current_limit: f64,
    /// QP linear terms per sample, when recording was requested.
    pub qp_linear_terms: Vec<Vector>,
}

/// First time after which `max(|y_A|, |y_B|) < threshold` for the rest of the
/// series. `None` if the last sample is still outside the band.
pub fn settling_time(t: &[f64], y: &[[f64; 2]], threshold: f64) -> Option<f64> {
    let outside = |v: &[f64; 2]| !(v[0].abs().max(v[1].abs()) < threshold);
    match y.iter().rposition(outside) {
        None => t.first().copied(),
        Some(k) if k + 1 < y.len() => Some(t[k + 1]),
        Some(_) => None,
    }
}

/// Trapezoid integral of `power` sampled at `t`, up to `t_end`.
pub fn power_integral(t: &[f64], power: &[f64], t_end: f64) -> f64 {
    let mut e = 0.0;
    for k in 1..t.len() {
        if t[k] > t_end + 1e-12 {
            break;
        }
        e += 0.5 * (t[k] - t[k - 1]) * (power[k] + power[k - 1]);
    }
    e
}

impl SimTrace {
    pub fn new(ts: f64, n_u: usize, n_m: usize) -> Self {
        SimTrace {
            ts,
            n_u,
            n_m,
            samples: Vec::new(),
            diverged: false,
            settle_threshold: 0.1,
            current_limit: f64::INFINITY,
            qp_linear_terms: Vec::new(),
        }
    }

    pub fn push(&mut self, s: SampleRecord) {
        self.samples.push(s);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn outputs(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|s| [s.y[0], s.y[1]]).collect()
    }

    pub fn settling_time(&self) -> Option<f64> {
        if self.diverged {
            return None;
        }
        settling_time(&self.times(), &self.outputs(), self.settle_threshold)
    }

    /// Not diverged and settled before the end of the trace.
    pub fn is_stable(&self) -> bool {
        !self.diverged && self.settling_time().is_some()
    }

    pub fn power_integral(&self, t_end: f64) -> f64 {
        let p: Vec<f64> = self.samples.iter().map(|s| s.power).collect();
        power_integral(&self.times(), &p, t_end)
    }

    pub fn peak_u(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.u.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn peak_u_elm(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.u_elm.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn peak_current(&self) -> f64 {
        self.samples.iter().flat_map(|s| s.i_elm.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn current_limit_exceeded(&self) -> bool {
        self.peak_current() > self.current_limit
    }

    pub fn all_finite(&self) -> bool {
        self.samples.iter().all(|s| {
            s.t.is_finite()
                && s.power.is_finite()
                && [&s.y, &s.y_m, &s.u, &s.u_elm, &s.i_elm].iter().all(|v| v.iter().all(|x| x.is_finite()))
        })
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string(), "yA".into(), "yB".into()];
        cols.extend((1..=self.n_m).map(|i| format!("ym{i}")));
        cols.extend((1..=self.n_u).map(|i| format!("u{i}")));
        cols.extend((1..=self.n_u).map(|i| format!("uelm{i}")));
        cols.extend((1..=self.n_u).map(|i| format!("ielm{i}")));
        cols.extend(["power_w".into(), "iters".into(), "solve_us".into()]);
        cols.join(",")
    }

    /// CSV with one row per control sample. Without `timing` the `solve_us`
    /// column is written as 0 so reruns are byte-identical.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{:.6e}", s.t);
            for v in s.y.iter().chain(&s.y_m).chain(&s.u).chain(&s.u_elm).chain(&s.i_elm) {
                let _ = write!(out, ",{v:.9e}");
            }
            let _ = write!(out, ",{:.9e},{}", s.power, s.iters);
            if timing {
                let _ = writeln!(out, ",{:.3}", s.solve_us);
            } else {
                out.push_str(",0\n");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settling_of_zero_trace_is_zero() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(settling_time(&t, &[[0.0, 0.0]; 3], 0.1), Some(0.0));
    }

    #[test]
    fn settling_at_last_crossing() {
        let t: Vec<f64> = (0..6).map(|k| k as f64 * 0.5).collect();
        let y = [[0.5, 0.0], [0.05, 0.0], [0.0, -0.2], [0.0, 0.09], [0.0, 0.0], [0.01, 0.0]];
        assert_eq!(settling_time(&t, &y, 0.1), Some(1.5));
        let y_end = [[0.5, 0.0], [0.0, 0.0], [0.0, 0.3]];
        assert_eq!(settling_time(&t[..3], &y_end, 0.1), None);
        // exactly on the threshold counts as outside
        assert_eq!(settling_time(&t[..2], &[[0.1, 0.0], [0.0, 0.0]], 0.1), Some(0.5));
    }

    #[test]
    fn power_integral_examples() {
        let t: Vec<f64> = (0..=400).map(|k| k as f64 * 1.25e-3).collect();
        assert_eq!(power_integral(&t, &vec![0.0; t.len()], 0.5), 0.0);
        assert!((power_integral(&t, &vec![1.0; t.len()], 0.5) - 0.5).abs() < 1e-12);
        assert!((power_integral(&t, &vec![1.0; t.len()], 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn csv_header_columns() {
        let tr = SimTrace::new(0.75e-3, 27, 6);
        let h = tr.csv_header();
        let cols: Vec<&str> = h.split(',').collect();
        assert_eq!(cols.len(), 3 + 6 + 81 + 3);
        assert_eq!(&cols[..4], &["t", "yA", "yB", "ym1"]);
        assert_eq!(cols[9], "u1");
        assert_eq!(cols[36], "uelm1");
        assert_eq!(cols[63], "ielm1");
        assert_eq!(&cols[90..], &["power_w", "iters", "solve_us"]);
    }
}
