//! Global potentials of the smoothed TV posterior.
//!
//! With `l(x) = λ/2 ‖y − A x‖²` and
//! `φ_ε(x) = δ Σ_α sqrt((D_v x)_α² + (D_h x)_α² + ε)` the target is
//! `log π_ε(x) = −l(x) − φ_ε(x) + const`.

use crate::error::{check_len, Error, Result};
use crate::forward::ConvOperator;
use crate::grid::Image;
use crate::sum::{norm_sq, pairwise_sum};

/// Forward differences with a zero boundary on an `n × n` grid.
///
/// Row `α = (row, col)` of `D_v` gives `x(row + 1, col) − x(row, col)` and of
/// `D_h` gives `x(row, col + 1) − x(row, col)`; a neighbour beyond the last
/// row or column counts as zero, so the last row of each direction is
/// `−x_α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOps {
    n: usize,
}

impl DiffOps {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertical(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for col in 0..n {
            let c = &x[col * n..(col + 1) * n];
            let o = &mut out[col * n..(col + 1) * n];
            for row in 0..n - 1 {
                o[row] = c[row + 1] - c[row];
            }
            o[n - 1] = -c[n - 1];
        }
        out
    }

    pub fn horizontal(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for k in 0..n * (n - 1) {
            out[k] = x[k + n] - x[k];
        }
        for k in n * (n - 1)..n * n {
            out[k] = -x[k];
        }
        out
    }

    pub fn vertical_adjoint(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for col in 0..n {
            let c = &u[col * n..(col + 1) * n];
            let o = &mut out[col * n..(col + 1) * n];
            o[0] = -c[0];
            for row in 1..n {
                o[row] = c[row - 1] - c[row];
            }
        }
        out
    }

    pub fn horizontal_adjoint(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for k in 0..n {
            out[k] = -u[k];
        }
        for k in n..n * n {
            out[k] = u[k - n] - u[k];
        }
        out
    }

    /// Per-row `sqrt(v² + h² + ε)`.
    pub fn magnitudes(&self, x: &[f64], epsilon: f64) -> Vec<f64> {
        let v = self.vertical(x);
        let h = self.horizontal(x);
        v.iter()
            .zip(&h)
            .map(|(a, b)| (a * a + b * b + epsilon).sqrt())
            .collect()
    }
}

/// Exact total variation `Σ_α sqrt((D_v x)_α² + (D_h x)_α²)`.
pub fn tv(diff: &DiffOps, x: &[f64]) -> Result<f64> {
    check_len(diff.n * diff.n, x.len())?;
    Ok(pairwise_sum(&diff.magnitudes(x, 0.0)))
}

/// Smoothed TV potential `δ Σ_α sqrt((D_v x)_α² + (D_h x)_α² + ε)`.
pub fn smoothed_tv(diff: &DiffOps, x: &[f64], delta: f64, epsilon: f64) -> Result<f64> {
    check_len(diff.n * diff.n, x.len())?;
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", format!("must be non-negative, got {epsilon}")));
    }
    Ok(delta * pairwise_sum(&diff.magnitudes(x, epsilon)))
}

/// Parameters and data defining the smoothed posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSpec {
    pub lambda: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub y: Image,
    pub conv: ConvOperator,
    pub diff: DiffOps,
}

impl PosteriorSpec {
    /// `delta = 0` is accepted: it drops the prior and leaves a Gaussian
    /// likelihood, which the conjugate test instances rely on.
    pub fn new(lambda: f64, delta: f64, epsilon: f64, y: Image, conv: ConvOperator) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::param("lambda", format!("must be positive and finite, got {lambda}")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::param("delta", format!("must be non-negative, got {delta}")));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::param("epsilon", format!("must be non-negative, got {epsilon}")));
        }
        check_len(conv.n(), y.n())?;
        let diff = DiffOps::new(y.n());
        Ok(Self {
            lambda,
            delta,
            epsilon,
            y,
            conv,
            diff,
        })
    }

    pub fn n(&self) -> usize {
        self.y.n()
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.conv.apply(x);
        self.y.data().iter().zip(ax).map(|(y, a)| y - a).collect()
    }

    /// Negative log posterior and its gradient in one pass.
    pub(crate) fn potential_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let residual = self.residual(x);
        let like = 0.5 * self.lambda * norm_sq(&residual);
        let mut grad: Vec<f64> = self
            .conv
            .apply_adjoint(&residual)
            .into_iter()
            .map(|g| -self.lambda * g)
            .collect();
        if self.delta == 0.0 {
            return (like, grad);
        }
        let v = self.diff.vertical(x);
        let h = self.diff.horizontal(x);
        let mags: Vec<f64> = v
            .iter()
            .zip(&h)
            .map(|(a, b)| (a * a + b * b + self.epsilon).sqrt())
            .collect();
        let prior = self.delta * pairwise_sum(&mags);
        let wv: Vec<f64> = v.iter().zip(&mags).map(|(a, s)| self.delta * a / s).collect();
        let wh: Vec<f64> = h.iter().zip(&mags).map(|(a, s)| self.delta * a / s).collect();
        let gv = self.diff.vertical_adjoint(&wv);
        let gh = self.diff.horizontal_adjoint(&wh);
        for ((g, a), b) in grad.iter_mut().zip(gv).zip(gh) {
            *g += a + b;
        }
        (like + prior, grad)
    }
}

pub fn likelihood_potential(spec: &PosteriorSpec, x: &[f64]) -> Result<f64> {
    check_len(spec.dim(), x.len())?;
    Ok(0.5 * spec.lambda * norm_sq(&spec.residual(x)))
}

/// `∇ log π_ε(x) = λ Aᵀ(y − A x) − ∇φ_ε(x)`.
pub fn grad_log_posterior(spec: &PosteriorSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_len(spec.dim(), x.len())?;
    if spec.epsilon == 0.0 && spec.delta > 0.0 {
        return Err(Error::param(
            "epsilon",
            "the exact TV potential has no gradient; use epsilon > 0",
        ));
    }
    let (_, grad) = spec.potential_and_grad(x);
    Ok(grad.into_iter().map(|g| -g).collect())
}

/// `−l(x) − φ_ε(x)`, the log posterior up to its normalizing constant.
pub fn log_posterior_unnorm(spec: &PosteriorSpec, x: &[f64]) -> Result<f64> {
    let like = likelihood_potential(spec, x)?;
    let prior = smoothed_tv(&spec.diff, x, spec.delta, spec.epsilon)?;
    Ok(-like - prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::Psf;
    use approx::assert_relative_eq;

    fn image(n: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        Image::from_fn(n, f).into_data()
    }

    #[test]
    fn two_by_two_tv_by_hand() {
        // [[0, 1], [0, 1]]: column 0 is zero, column 1 is one.
        // Rows (row, col): v = x(r+1,c) − x(r,c), h = x(r,c+1) − x(r,c).
        // (0,0): v=0, h=1 → 1; (1,0): v=0, h=1 → 1;
        // (0,1): v=0, h=−1 → 1; (1,1): v=−1, h=−1 → √2.
        let x = image(2, |_, c| c as f64);
        let d = DiffOps::new(2);
        assert_relative_eq!(tv(&d, &x).unwrap(), 3.0 + 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn tv_zero_image_and_symmetry() {
        let d = DiffOps::new(5);
        assert_eq!(tv(&d, &[0.0; 25]).unwrap(), 0.0);
        let x = image(5, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(tv(&d, &x).unwrap(), tv(&d, &neg).unwrap());
    }

    #[test]
    fn constant_image_tv_comes_from_the_boundary() {
        // Only the last row and last column see the zero exterior.
        let d = DiffOps::new(4);
        let x = vec![0.5; 16];
        // 3 pixels with |v| = 0.5 (last row, cols 0..3), 3 with |h| = 0.5, and
        // the corner with sqrt(0.5² + 0.5²).
        let expected = 6.0 * 0.5 + (0.5f64).hypot(0.5);
        assert_relative_eq!(tv(&d, &x).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn smoothed_tv_limits() {
        let d = DiffOps::new(4);
        let zero = vec![0.0; 16];
        assert_relative_eq!(
            smoothed_tv(&d, &zero, 2.0, 1e-4).unwrap(),
            2.0 * 16.0 * 1e-2,
            epsilon = 1e-15
        );
        let x = image(4, |r, c| (r as f64 - c as f64).sin());
        assert_eq!(
            smoothed_tv(&d, &x, 3.0, 0.0).unwrap(),
            3.0 * tv(&d, &x).unwrap()
        );
        assert!(smoothed_tv(&d, &x, 3.0, -1.0).is_err());
    }

    #[test]
    fn adjoints_match_inner_products() {
        let d = DiffOps::new(6);
        let x = image(6, |r, c| ((r * 13 + c * 7) % 9) as f64 * 0.3);
        let u = image(6, |r, c| ((r * 5 + c * 11) % 7) as f64 - 3.0);
        let lhs: f64 = d.vertical(&x).iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(d.vertical_adjoint(&u)).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        let lhs: f64 = d.horizontal(&x).iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(d.horizontal_adjoint(&u)).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_closed_forms() {
        let n = 4;
        let conv = ConvOperator::new(Psf::delta(), n);
        let spec = PosteriorSpec::new(2.0, 0.0, 0.0, Image::zeros(n), conv).unwrap();
        assert_relative_eq!(
            likelihood_potential(&spec, &[1.0; 16]).unwrap(),
            16.0,
            epsilon = 1e-15
        );
        let conv = ConvOperator::new(Psf::gaussian(1, 0.8).unwrap(), n);
        let x = image(n, |r, c| (r + 2 * c) as f64 * 0.1);
        let y = conv.convolve(&Image::new(n, x.clone()).unwrap()).unwrap();
        let spec = PosteriorSpec::new(5.0, 1.0, 1e-3, y, conv).unwrap();
        assert!(likelihood_potential(&spec, &x).unwrap() < 1e-28);
    }

    #[test]
    fn gradient_vanishes_at_zero() {
        let n = 5;
        let conv = ConvOperator::new(Psf::gaussian(1, 1.0).unwrap(), n);
        let spec = PosteriorSpec::new(10.0, 2.0, 1e-3, Image::zeros(n), conv).unwrap();
        let g = grad_log_posterior(&spec, &[0.0; 25]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exact_tv_gradient_is_refused() {
        let n = 4;
        let conv = ConvOperator::new(Psf::delta(), n);
        let spec = PosteriorSpec::new(1.0, 1.0, 0.0, Image::zeros(n), conv).unwrap();
        assert!(grad_log_posterior(&spec, &[0.0; 16]).is_err());
    }

    #[test]
    fn gaussian_log_density_form() {
        let n = 3;
        let y = Image::from_fn(n, |r, c| (r * 3 + c) as f64 * 0.1);
        let conv = ConvOperator::new(Psf::delta(), n);
        let spec = PosteriorSpec::new(4.0, 0.0, 1e-3, y.clone(), conv).unwrap();
        let x = vec![0.2; 9];
        let expected: f64 = -2.0
            * y.data()
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        assert_relative_eq!(log_posterior_unnorm(&spec, &x).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let conv = ConvOperator::new(Psf::delta(), 2);
        assert!(PosteriorSpec::new(0.0, 1.0, 1e-3, Image::zeros(2), conv.clone()).is_err());
        assert!(PosteriorSpec::new(1.0, -1.0, 1e-3, Image::zeros(2), conv.clone()).is_err());
        assert!(PosteriorSpec::new(1.0, 1.0, -1e-3, Image::zeros(2), conv.clone()).is_err());
        assert!(PosteriorSpec::new(1.0, 1.0, 1e-3, Image::zeros(3), conv).is_err());
    }
}
