//! First-order exponential smoothing of a scalar stream:
//! `x_s[k] = alpha * x[k] + (1 - alpha) * x_s[k-1]`.
//!
//! The first sample passes through unchanged and seeds the carry. One state
//! per stream; a state must not be updated concurrently.

use crate::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct SmoothingState {
    alpha: f64,
    carry: Option<f64>,
}

impl SmoothingState {
    /// `alpha` must lie in `(0, 1]`; `alpha = 1` disables smoothing.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CoreError::BadAlpha { alpha });
        }
        Ok(Self { alpha, carry: None })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn initialized(&self) -> bool {
        self.carry.is_some()
    }

    /// Reset to the uninitialised state (start of a new recording).
    pub fn reset(&mut self) {
        self.carry = None;
    }

    /// Feed one sample, returning the smoothed value.
    pub fn update(&mut self, x: f64) -> f64 {
        debug_assert!(x.is_finite());
        let smoothed = match self.carry {
            None => x,
            Some(prev) => self.alpha * x + (1.0 - self.alpha) * prev,
        };
        self.carry = Some(smoothed);
        smoothed
    }
}

/// Functional form of one smoothing step, returning the updated state.
pub fn es_update(mut state: SmoothingState, x: f64) -> (SmoothingState, f64) {
    let v = state.update(x);
    (state, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_alpha() {
        assert!(SmoothingState::new(0.0).is_err());
        assert!(SmoothingState::new(1.5).is_err());
        assert!(SmoothingState::new(-0.1).is_err());
        assert!(SmoothingState::new(1.0).is_ok());
    }

    #[test]
    fn alpha_one_is_identity() {
        let mut s = SmoothingState::new(1.0).unwrap();
        for &x in &[3.0, -1.0, 0.5, 100.0] {
            assert_eq!(s.update(x), x);
        }
    }

    #[test]
    fn direct_substitution() {
        let mut s = SmoothingState::new(0.5).unwrap();
        s.update(0.0); // seeds carry with 0
        assert_eq!(s.update(2.0), 1.0);
    }

    #[test]
    fn constant_stream_converges_monotonically() {
        let mut s = SmoothingState::new(0.2).unwrap();
        s.update(0.0);
        let mut prev = 0.0;
        let mut last = 0.0;
        for _ in 0..50 {
            last = s.update(3.0);
            assert!(last >= prev, "convergence must be monotone from below");
            prev = last;
        }
        assert!((last - 3.0).abs() < 1e-3);
        // closed form: error decays by (1 - alpha) each step
        assert!(((3.0 - last) - 3.0 * 0.8f64.powi(50)).abs() < 1e-12);
    }

    #[test]
    fn output_is_convex_combination() {
        let mut s = SmoothingState::new(0.3).unwrap();
        s.update(1.0);
        let carry = 1.0_f64;
        let x = 4.0_f64;
        let out = s.update(x);
        assert!(out >= carry.min(x) && out <= carry.max(x));
    }

    #[test]
    fn constant_input_is_fixed_point() {
        let mut s = SmoothingState::new(0.7).unwrap();
        let first = s.update(2.5);
        assert_eq!(first, 2.5);
        for _ in 0..10 {
            assert_eq!(s.update(2.5), 2.5);
        }
    }

    #[test]
    fn step_response_closed_form() {
        for &alpha in &[0.1, 0.3, 0.5] {
            let mut s = SmoothingState::new(alpha).unwrap();
            let x0 = 0.0;
            let target = 1.0;
            s.update(x0);
            let initial_error = target - x0;
            for k in 1..=60 {
                let out = s.update(target);
                let expected_error = (1.0 - alpha).powi(k) * initial_error;
                assert!(
                    ((target - out) - expected_error).abs() < 1e-12,
                    "alpha={alpha} k={k}"
                );
            }
        }
    }

    #[test]
    fn functional_update_threads_state() {
        let s = SmoothingState::new(0.5).unwrap();
        let (s, v0) = es_update(s, 4.0);
        assert_eq!(v0, 4.0);
        let (_, v1) = es_update(s, 0.0);
        assert_eq!(v1, 2.0);
    }
}
