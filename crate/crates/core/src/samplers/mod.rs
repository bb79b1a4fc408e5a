//! MALA and MALA-within-Gibbs samplers for the smoothed TV posterior.

mod mala;
mod run;
mod schedule;
mod step;

pub use mala::{log_proposal_density, mala_propose, mala_step, mh_accept, mh_log_ratio, Transition};
pub use run::{run_chains, run_mala, run_mlwg_parallel, run_mlwg_sequential, RunSettings, SamplerKind};
pub use schedule::ColorSchedule;
pub use step::{StepSizeState, DEFAULT_TARGET_ACCEPT};

use crate::potentials::PosteriorSpec;

/// A differentiable log density known up to an additive constant.
pub trait LogDensity {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    fn log_density_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl LogDensity for PosteriorSpec {
    fn dim(&self) -> usize {
        PosteriorSpec::dim(self)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        crate::potentials::log_posterior_unnorm(self, x).unwrap_or(f64::NAN)
    }

    fn log_density_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (potential, mut grad) = self.potential_and_grad(x);
        for g in grad.iter_mut() {
            *g = -*g;
        }
        (-potential, grad)
    }
}
