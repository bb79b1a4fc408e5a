use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LogDensity;
use crate::error::{check_len, Error, Result};

/// `z = x + τ g + sqrt(2τ) ξ` with `ξ ~ N(0, I)`.
pub fn mala_propose<R: Rng + ?Sized>(
    x: &[f64],
    grad: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_len(x.len(), grad.len())?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("step size must be positive, got {tau}")));
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient component {k} is {} in MALA proposal",
            grad[k]
        )));
    }
    let scale = (2.0 * tau).sqrt();
    Ok(x.iter()
        .zip(grad)
        .map(|(xi, gi)| {
            let xi_noise: f64 = StandardNormal.sample(rng);
            xi + tau * gi + scale * xi_noise
        })
        .collect())
}

/// `log q(to | from) = −‖to − from − τ ∇log π(from)‖² / (4τ)`.
pub fn log_proposal_density(to: &[f64], from: &[f64], grad_from: &[f64], tau: f64) -> f64 {
    let sq: f64 = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((t, f), g)| {
            let d = t - f - tau * g;
            d * d
        })
        .sum();
    -sq / (4.0 * tau)
}

/// Log Metropolis–Hastings ratio for the move `x → z`.
#[allow(clippy::too_many_arguments)]
pub fn mh_log_ratio(
    x: &[f64],
    logp_x: f64,
    grad_x: &[f64],
    z: &[f64],
    logp_z: f64,
    grad_z: &[f64],
    tau: f64,
) -> f64 {
    (logp_z - logp_x) + log_proposal_density(x, z, grad_z, tau)
        - log_proposal_density(z, x, grad_x, tau)
}

/// Accept/reject `z` from `x`; returns `(accepted, alpha)`.
pub fn mh_accept<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x: &[f64],
    z: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<(bool, f64)> {
    check_len(target.dim(), x.len())?;
    check_len(target.dim(), z.len())?;
    let (logp_x, grad_x) = target.log_density_and_grad(x);
    let (logp_z, grad_z) = target.log_density_and_grad(z);
    Ok(decide(x, logp_x, &grad_x, z, logp_z, &grad_z, tau, rng))
}

#[allow(clippy::too_many_arguments)]
fn decide<R: Rng + ?Sized>(
    x: &[f64],
    logp_x: f64,
    grad_x: &[f64],
    z: &[f64],
    logp_z: f64,
    grad_z: &[f64],
    tau: f64,
    rng: &mut R,
) -> (bool, f64) {
    let u: f64 = rng.random();
    if !logp_z.is_finite() || grad_z.iter().any(|g| !g.is_finite()) {
        return (false, 0.0);
    }
    let log_alpha = mh_log_ratio(x, logp_x, grad_x, z, logp_z, grad_z, tau).min(0.0);
    let alpha = log_alpha.exp();
    (u.ln() < log_alpha, alpha)
}

/// Outcome of one MALA transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub accepted: bool,
    pub alpha: f64,
    /// The candidate; the new state when `accepted`.
    pub candidate: Vec<f64>,
}

/// One full MALA step: propose from `x`, then accept or reject.
///
/// Draws the `dim` proposal normals first and the acceptance uniform last,
/// whether or not the move is accepted.
pub fn mala_step<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    x: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<Transition> {
    check_len(target.dim(), x.len())?;
    let (logp_x, grad_x) = target.log_density_and_grad(x);
    if !logp_x.is_finite() {
        return Err(Error::NonFinite("log density at the current state".into()));
    }
    let candidate = mala_propose(x, &grad_x, tau, rng)?;
    let (logp_z, grad_z) = target.log_density_and_grad(&candidate);
    let (accepted, alpha) = decide(x, logp_x, &grad_x, &candidate, logp_z, &grad_z, tau, rng);
    Ok(Transition {
        accepted,
        alpha,
        candidate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    struct StdGaussian(usize);

    impl LogDensity for StdGaussian {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
        fn log_density_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
            (self.log_density(x), x.iter().map(|v| -v).collect())
        }
    }

    #[test]
    fn identity_proposal_has_alpha_one() {
        let t = StdGaussian(3);
        let x = [0.3, -1.0, 2.0];
        let (_, alpha) = mh_accept(&t, &x, &x, 0.1, &mut stream(0, 0, 0, 0)).unwrap();
        assert_eq!(alpha, 1.0);
    }

    #[test]
    fn log_ratio_is_antisymmetric() {
        let t = StdGaussian(4);
        let x = [0.1, 0.2, -0.3, 1.1];
        let z = [0.5, -0.2, 0.0, 0.9];
        let (lx, gx) = t.log_density_and_grad(&x);
        let (lz, gz) = t.log_density_and_grad(&z);
        let forward = mh_log_ratio(&x, lx, &gx, &z, lz, &gz, 0.3);
        let backward = mh_log_ratio(&z, lz, &gz, &x, lx, &gx, 0.3);
        assert!((forward + backward).abs() < 1e-15);
    }

    #[test]
    fn small_steps_stay_close() {
        let x = vec![1.0; 100];
        let g = vec![-1.0; 100];
        for tau in [1e-2, 1e-4, 1e-6] {
            let z = mala_propose(&x, &g, tau, &mut stream(1, 0, 0, 0)).unwrap();
            let dist = x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // ‖z − x‖ ≈ sqrt(2τ · dim) ± a few standard deviations.
            assert!(dist < 4.0 * (2.0 * tau * 100.0).sqrt());
        }
    }

    #[test]
    fn proposal_is_reproducible_and_checked() {
        let x = [0.0; 5];
        let g = [1.0; 5];
        let a = mala_propose(&x, &g, 0.1, &mut stream(9, 1, 2, 3)).unwrap();
        let b = mala_propose(&x, &g, 0.1, &mut stream(9, 1, 2, 3)).unwrap();
        assert_eq!(a, b);
        assert!(mala_propose(&x, &[f64::NAN; 5], 0.1, &mut stream(0, 0, 0, 0)).is_err());
        assert!(mala_propose(&x, &g, 0.0, &mut stream(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn non_finite_candidate_is_rejected() {
        struct Cliff;
        impl LogDensity for Cliff {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, x: &[f64]) -> f64 {
                if x[0] > 0.5 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            }
            fn log_density_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
                (self.log_density(x), vec![0.0])
            }
        }
        let (accepted, alpha) = mh_accept(&Cliff, &[0.0], &[1.0], 0.1, &mut stream(0, 0, 0, 0)).unwrap();
        assert!(!accepted);
        assert_eq!(alpha, 0.0);
    }

    #[test]
    fn high_acceptance_at_small_step() {
        let t = StdGaussian(10);
        let mut x = vec![0.0; 10];
        let mut accepted = 0;
        for k in 0..1000 {
            let tr = mala_step(&t, &x, 1e-3, &mut stream(5, 0, 0, k)).unwrap();
            if tr.accepted {
                accepted += 1;
                x = tr.candidate;
            }
        }
        assert!(accepted > 950, "accepted {accepted}");
    }
}
