use std::collections::VecDeque;

use crate::error::{Error, Result};

/// One power supply: saturation, pure delay on a substep ring buffer, then a
/// first-order lag with unit DC gain integrated exactly per substep.
#[derive(Debug, Clone)]
pub struct PsChannel {
    pub tau: f64,
    pub limit: f64,
    alpha: f64,
    line: VecDeque<f64>,
    state: f64,
}

impl PsChannel {
    pub fn new(tau: f64, delay_substeps: usize, limit: f64, substep: f64) -> Result<Self> {
        if !(tau > 0.0 && substep > 0.0 && limit > 0.0) {
            return Err(Error::InvalidArgument("lag, substep and limit must be positive".into()));
        }
        Ok(PsChannel {
            tau,
            limit,
            alpha: (-substep / tau).exp(),
            line: std::iter::repeat_n(0.0, delay_substeps).collect(),
            state: 0.0,
        })
    }

    pub fn delay_len(&self) -> usize {
        self.line.len()
    }

    pub fn clip(&self, u: f64) -> f64 {
        u.clamp(-self.limit, self.limit)
    }

    /// Current output voltage.
    pub fn output(&self) -> f64 {
        self.state
    }

    /// Advances one substep with `input` entering the delay line. The input
    /// is taken as-is (callers clip first).
    pub fn step(&mut self, input: f64) {
        let delayed = match self.line.pop_front() {
            Some(v) => {
                self.line.push_back(input);
                v
            }
            None => input,
        };
        let next = self.alpha * self.state + (1.0 - self.alpha) * delayed;
        // keep the convex-combination bound exact under rounding
        self.state = next.clamp(self.state.min(delayed), self.state.max(delayed));
    }

    /// Clips `u_cmd` and runs `substeps` substeps, returning the output after
    /// each one.
    pub fn ps_step(&mut self, u_cmd: f64, substeps: usize) -> Vec<f64> {
        let u = self.clip(u_cmd);
        (0..substeps)
            .map(|_| {
                self.step(u);
                self.state
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: f64 = 5e-5;

    #[test]
    fn unit_dc_gain() {
        let mut ch = PsChannel::new(7.5e-3, 50, 144.0, H).unwrap();
        let out = ch.ps_step(12.0, 20_000);
        assert!((out.last().unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn step_response_delay_and_lag() {
        let mut ch = PsChannel::new(7.5e-3, 50, 144.0, H).unwrap();
        assert_eq!(ch.delay_len(), 50);
        let out = ch.ps_step(1.0, 400);
        // out[k] is the value at t = (k+1)h
        assert!(out[..50].iter().all(|&v| v == 0.0));
        for (k, v) in out.iter().enumerate().skip(50) {
            let t = (k + 1) as f64 * H - 2.5e-3;
            assert!((v - (1.0 - (-t / 7.5e-3).exp())).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn saturates_at_limit() {
        let mut ch = PsChannel::new(7.5e-3, 50, 144.0, H).unwrap();
        let out = ch.ps_step(200.0, 20_000);
        assert!((out.last().unwrap() - 144.0).abs() < 1e-9);
        assert!(out.iter().all(|v| v.abs() <= 144.0));
    }

    #[test]
    fn zero_delay_passes_through_lag() {
        let mut ch = PsChannel::new(1e-3, 0, 10.0, H).unwrap();
        let out = ch.ps_step(1.0, 1);
        assert!((out[0] - (1.0 - (-H / 1e-3f64).exp())).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn output_never_exceeds_limit(cmds in proptest::collection::vec(-500.0f64..500.0, 1..60), limit in 1.0f64..150.0) {
            let mut ch = PsChannel::new(7.5e-3, 50, limit, H).unwrap();
            for u in cmds {
                for v in ch.ps_step(u, 15) {
                    prop_assert!(v.abs() <= limit);
                }
            }
        }
    }
}
