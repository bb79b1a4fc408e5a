//! Block conditionals evaluated from the block's neighbourhood only.
//!
//! For block `i` with core pixels `x_i`, the full conditional is
//!
//! ```text
//! π_ε(x_i | rest) ∝ exp(−λ/2 ‖y_eff − A_i x_i‖² − δ Σ_α sqrt((D_v x)_α² + (D_h x)_α² + ε))
//! ```
//!
//! where `A_i` maps the block to the observations within distance `r` of it,
//! `y_eff` is the data with the contribution of the fixed `2r` frame removed,
//! and the TV sum runs over the difference rows whose stencil reads a core
//! pixel. Both contexts are rebuilt from the current state before every
//! block update; they read nothing outside the `2r` frame.

use crate::error::{check_len, Error, Result};
use crate::forward::{accumulate_stencil, apply_stencil, Psf};
use crate::grid::{BlockPartition, FrameKind, Rect};
use crate::potentials::PosteriorSpec;
use crate::samplers::LogDensity;
use crate::sum::{norm_sq, pairwise_sum};

/// Local block likelihood `λ/2 ‖y_eff − A_i x_i‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLikelihoodCtx<'a> {
    pub block_id: usize,
    psf: &'a Psf,
    lambda: f64,
    core: Rect,
    /// Observation pixels within distance `r` of the block (clipped).
    frame: Rect,
    y_eff: Vec<f64>,
}

impl<'a> LocalLikelihoodCtx<'a> {
    pub fn build(
        spec: &'a PosteriorSpec,
        partition: &BlockPartition,
        x: &[f64],
        block_id: usize,
    ) -> Result<Self> {
        let n = spec.n();
        check_len(n * n, x.len())?;
        check_len(n, partition.n())?;
        let psf = spec.conv.psf();
        if psf.radius() != partition.radius() {
            return Err(Error::param(
                "partition",
                "PSF radius differs from the partition radius",
            ));
        }
        let r = psf.radius();
        let core = partition.block_rect(block_id)?;
        let frame = core.grow_clipped(r, n);
        let outer = partition.extended_block(block_id, FrameKind::DoubleRadius)?.rect;

        // P x^{+rr}: the 2r frame with the core zeroed.
        let mut fixed = outer.extract(x, n);
        for col in core.col0..core.col1 {
            for row in core.row0..core.row1 {
                fixed[outer.local_index(row, col)] = 0.0;
            }
        }
        let mut y_eff = frame.extract(spec.y.data(), n);
        let a_fixed = apply_stencil(psf, &fixed, outer, frame, false);
        for (y, a) in y_eff.iter_mut().zip(a_fixed) {
            *y -= a;
        }
        Ok(Self {
            block_id,
            psf,
            lambda: spec.lambda,
            core,
            frame,
            y_eff,
        })
    }

    pub fn y_eff(&self) -> &[f64] {
        &self.y_eff
    }

    pub fn block_len(&self) -> usize {
        self.core.len()
    }

    fn residual(&self, x_block: &[f64]) -> Vec<f64> {
        let mut res = self.y_eff.clone();
        let mut ax = vec![0.0; self.frame.len()];
        accumulate_stencil(self.psf, x_block, self.core, self.frame, false, &mut ax);
        for (r, a) in res.iter_mut().zip(ax) {
            *r -= a;
        }
        res
    }

    pub fn potential(&self, x_block: &[f64]) -> Result<f64> {
        check_len(self.block_len(), x_block.len())?;
        Ok(0.5 * self.lambda * norm_sq(&self.residual(x_block)))
    }

    /// `−λ A_iᵀ (y_eff − A_i x_i)`.
    pub fn grad(&self, x_block: &[f64]) -> Result<Vec<f64>> {
        check_len(self.block_len(), x_block.len())?;
        Ok(self.potential_and_grad(x_block).1)
    }

    pub(crate) fn potential_and_grad(&self, x_block: &[f64]) -> (f64, Vec<f64>) {
        let res = self.residual(x_block);
        let value = 0.5 * self.lambda * norm_sq(&res);
        let grad = apply_stencil(self.psf, &res, self.frame, self.core, true)
            .into_iter()
            .map(|g| -self.lambda * g)
            .collect();
        (value, grad)
    }
}

/// One TV row `α` written as an affine function of the block:
/// `v = x[v_plus] − x[v_minus] + b_v` and likewise for `h`, where a missing
/// index means the pixel is fixed (or outside the image) and already folded
/// into the offset.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PriorRow {
    v_plus: Option<usize>,
    v_minus: Option<usize>,
    h_plus: Option<usize>,
    h_minus: Option<usize>,
    b_v: f64,
    b_h: f64,
}

impl PriorRow {
    fn differences(&self, x: &[f64]) -> (f64, f64) {
        let pick = |k: Option<usize>| k.map_or(0.0, |k| x[k]);
        (
            pick(self.v_plus) - pick(self.v_minus) + self.b_v,
            pick(self.h_plus) - pick(self.h_minus) + self.b_h,
        )
    }
}

/// Local block prior `δ Σ_α sqrt((D_i^v x_i + b_v)_α² + (D_i^h x_i + b_h)_α² + ε)`
/// over the rows whose stencil touches the block.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPriorCtx {
    pub block_id: usize,
    delta: f64,
    epsilon: f64,
    block_len: usize,
    rows: Vec<PriorRow>,
}

impl LocalPriorCtx {
    pub fn build(
        spec: &PosteriorSpec,
        partition: &BlockPartition,
        x: &[f64],
        block_id: usize,
    ) -> Result<Self> {
        let n = spec.n();
        check_len(n * n, x.len())?;
        let core = partition.block_rect(block_id)?;
        let frame = partition.extended_block(block_id, FrameKind::One)?.rect;

        // Splits pixel (row, col) into a block index or a fixed value; pixels
        // beyond the image are zero.
        let term = |row: usize, col: usize| -> (Option<usize>, f64) {
            if row >= n || col >= n {
                (None, 0.0)
            } else if core.contains(row, col) {
                (Some(core.local_index(row, col)), 0.0)
            } else {
                (None, x[col * n + row])
            }
        };

        let mut rows = Vec::new();
        for col in frame.col0..frame.col1 {
            for row in frame.row0..frame.row1 {
                let touches = core.contains(row, col)
                    || core.contains(row + 1, col)
                    || core.contains(row, col + 1);
                if !touches {
                    continue;
                }
                let (own, own_fixed) = term(row, col);
                let (below, below_fixed) = term(row + 1, col);
                let (right, right_fixed) = term(row, col + 1);
                rows.push(PriorRow {
                    v_plus: below,
                    v_minus: own,
                    h_plus: right,
                    h_minus: own,
                    b_v: below_fixed - own_fixed,
                    b_h: right_fixed - own_fixed,
                });
            }
        }
        Ok(Self {
            block_id,
            delta: spec.delta,
            epsilon: spec.epsilon,
            block_len: core.len(),
            rows,
        })
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Fixed offsets `(b_v, b_h)` of every local row, in row order.
    pub fn offsets(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.b_v, r.b_h)).collect()
    }

    pub fn potential(&self, x_block: &[f64]) -> Result<f64> {
        check_len(self.block_len, x_block.len())?;
        let terms: Vec<f64> = self
            .rows
            .iter()
            .map(|row| {
                let (v, h) = row.differences(x_block);
                (v * v + h * h + self.epsilon).sqrt()
            })
            .collect();
        Ok(self.delta * pairwise_sum(&terms))
    }

    pub fn grad(&self, x_block: &[f64]) -> Result<Vec<f64>> {
        check_len(self.block_len, x_block.len())?;
        if self.epsilon == 0.0 && self.delta > 0.0 {
            return Err(Error::param(
                "epsilon",
                "the exact TV potential has no gradient; use epsilon > 0",
            ));
        }
        Ok(self.potential_and_grad(x_block).1)
    }

    pub(crate) fn potential_and_grad(&self, x_block: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.block_len];
        if self.delta == 0.0 {
            return (0.0, grad);
        }
        let mut terms = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let (v, h) = row.differences(x_block);
            let s = (v * v + h * h + self.epsilon).sqrt();
            terms.push(s);
            let (gv, gh) = (self.delta * v / s, self.delta * h / s);
            if let Some(k) = row.v_plus {
                grad[k] += gv;
            }
            if let Some(k) = row.v_minus {
                grad[k] -= gv;
            }
            if let Some(k) = row.h_plus {
                grad[k] += gh;
            }
            if let Some(k) = row.h_minus {
                grad[k] -= gh;
            }
        }
        (self.delta * pairwise_sum(&terms), grad)
    }
}

pub fn build_contexts<'a>(
    spec: &'a PosteriorSpec,
    partition: &BlockPartition,
    x: &[f64],
    block_id: usize,
) -> Result<(LocalLikelihoodCtx<'a>, LocalPriorCtx)> {
    Ok((
        LocalLikelihoodCtx::build(spec, partition, x, block_id)?,
        LocalPriorCtx::build(spec, partition, x, block_id)?,
    ))
}

/// Log full conditional of one block (up to a constant) and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTarget<'a> {
    pub likelihood: LocalLikelihoodCtx<'a>,
    pub prior: LocalPriorCtx,
}

impl<'a> LocalTarget<'a> {
    pub fn build(
        spec: &'a PosteriorSpec,
        partition: &BlockPartition,
        x: &[f64],
        block_id: usize,
    ) -> Result<Self> {
        let (likelihood, prior) = build_contexts(spec, partition, x, block_id)?;
        Ok(Self { likelihood, prior })
    }
}

impl LogDensity for LocalTarget<'_> {
    fn dim(&self) -> usize {
        self.likelihood.block_len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let like = 0.5 * self.likelihood.lambda * norm_sq(&self.likelihood.residual(x));
        -like - self.prior.potential(x).unwrap_or(f64::NAN)
    }

    fn log_density_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (lv, mut lg) = self.likelihood.potential_and_grad(x);
        let (pv, pg) = self.prior.potential_and_grad(x);
        for (a, b) in lg.iter_mut().zip(pg) {
            *a = -(*a + b);
        }
        (-(lv + pv), lg)
    }
}

/// Sum of the two local potentials, negated, with the summed gradients.
pub fn local_logdensity_and_grad(
    likelihood: &LocalLikelihoodCtx<'_>,
    prior: &LocalPriorCtx,
    x_block: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_len(likelihood.block_len(), x_block.len())?;
    if prior.epsilon == 0.0 && prior.delta > 0.0 {
        return Err(Error::param(
            "epsilon",
            "the exact TV potential has no gradient; use epsilon > 0",
        ));
    }
    let (lv, lg) = likelihood.potential_and_grad(x_block);
    let (pv, pg) = prior.potential_and_grad(x_block);
    Ok((
        -(lv + pv),
        lg.iter().zip(&pg).map(|(a, b)| -(a + b)).collect(),
    ))
}
