/// Optimal MALA acceptance rate used as the default adaptation target.
pub const DEFAULT_TARGET_ACCEPT: f64 = 0.547;

/// Step-size controller with a Robbins–Monro update on `log τ`.
///
/// After the `k`-th observed accept/reject indicator `a_k`,
/// `log τ ← log τ + k^(−0.6) (a_k − target)`. The gains sum to infinity while
/// their squares do not, so the step size settles where the average
/// acceptance equals the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeState {
    tau: f64,
    target_accept: f64,
    iteration: u64,
    adapting: bool,
}

const GAIN_EXPONENT: f64 = 0.6;

impl StepSizeState {
    pub fn new(tau: f64, target_accept: f64) -> Self {
        assert!(tau > 0.0 && tau.is_finite(), "step size must be positive");
        assert!(
            target_accept > 0.0 && target_accept < 1.0,
            "target acceptance must lie in (0, 1)"
        );
        Self {
            tau,
            target_accept,
            iteration: 0,
            adapting: true,
        }
    }

    /// Non-adapting controller holding `tau`.
    pub fn fixed(tau: f64) -> Self {
        let mut s = Self::new(tau, DEFAULT_TARGET_ACCEPT);
        s.adapting = false;
        s
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn target_accept(&self) -> f64 {
        self.target_accept
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_adapting(&self) -> bool {
        self.adapting
    }

    pub fn freeze(&mut self) {
        self.adapting = false;
    }

    pub fn adapt(&mut self, observed_alpha: f64) {
        if !self.adapting {
            return;
        }
        self.iteration += 1;
        let gain = (self.iteration as f64).powf(-GAIN_EXPONENT);
        self.tau *= (gain * (observed_alpha - self.target_accept)).exp();
    }
}
