//! Point spread functions, matrix-free convolution with zero padding, and the
//! block-dominance certificate for `AᵀA`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::grid::{BlockPartition, Image, Rect};
use crate::par;

/// Discrete convolution kernel of radius `r`.
///
/// `weights[(mu + r) * (2r + 1) + (nu + r)]` holds `w(mu, nu)`, the weight of
/// the source pixel at row offset `mu` and column offset `nu`:
/// `(A x)(row, col) = Σ w(mu, nu) x(row + mu, col + nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    radius: usize,
    weights: Vec<f64>,
}

impl Psf {
    pub fn new(radius: usize, weights: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        check_len(side * side, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("PSF weight".into()));
        }
        Ok(Self { radius, weights })
    }

    /// The identity kernel.
    pub fn delta() -> Self {
        Self {
            radius: 0,
            weights: vec![1.0],
        }
    }

    /// Normalized isotropic Gaussian, `w ∝ exp(-(mu² + nu²) / (2 sigma²))`.
    pub fn gaussian(radius: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        let r = radius as isize;
        let mut weights = Vec::with_capacity((2 * radius + 1).pow(2));
        for mu in -r..=r {
            for nu in -r..=r {
                let d2 = (mu * mu + nu * nu) as f64;
                weights.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        normalize(&mut weights);
        Psf::new(radius, weights)
    }

    /// Uniform `(2r + 1)²` box kernel.
    pub fn uniform(radius: usize) -> Self {
        let count = (2 * radius + 1).pow(2);
        Self {
            radius,
            weights: vec![1.0 / count as f64; count],
        }
    }

    /// Linear motion blur: `length` samples along a segment at `angle_deg`
    /// (counter-clockwise from the column axis), stepped one pixel at a time
    /// along the dominant axis, each carrying mass `1 / length`.
    pub fn motion(length: usize, angle_deg: f64) -> Result<Self> {
        if length < 1 {
            return Err(Error::param("length", "motion length must be at least 1"));
        }
        if !angle_deg.is_finite() {
            return Err(Error::param("angle", "must be finite"));
        }
        let theta = angle_deg.to_radians();
        // Direction in (row, col) coordinates; rows grow downwards.
        let (dr, dc) = (-theta.sin(), theta.cos());
        let major = dr.abs().max(dc.abs());
        let (sr, sc) = (dr / major, dc / major);
        let half = (length as f64 - 1.0) / 2.0;
        let offsets: Vec<(isize, isize)> = (0..length)
            .map(|k| {
                let t = k as f64 - half;
                ((t * sr).round() as isize, (t * sc).round() as isize)
            })
            .collect();
        let radius = offsets
            .iter()
            .map(|&(mu, nu)| mu.unsigned_abs().max(nu.unsigned_abs()))
            .max()
            .unwrap_or(0);
        let side = 2 * radius + 1;
        let mut weights = vec![0.0; side * side];
        for (mu, nu) in offsets {
            let k = (mu + radius as isize) as usize * side + (nu + radius as isize) as usize;
            weights[k] += 1.0;
        }
        normalize(&mut weights);
        Psf::new(radius, weights)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, mu: isize, nu: isize) -> f64 {
        let r = self.radius as isize;
        if mu.abs() > r || nu.abs() > r {
            return 0.0;
        }
        self.weights[((mu + r) * (2 * r + 1) + (nu + r)) as usize]
    }

    /// `Σ |w|`, an upper bound on the spectral norm of the convolution.
    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Convex combination `(1 - t) · self + t · delta`.
    pub fn blend_with_delta(&self, t: f64) -> Psf {
        let mut weights: Vec<f64> = self.weights.iter().map(|w| (1.0 - t) * w).collect();
        let centre = self.radius * self.side() + self.radius;
        weights[centre] += t;
        Psf {
            radius: self.radius,
            weights,
        }
    }
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// Applies the kernel between two rectangles of the same image.
///
/// `src` is a column-major buffer over `src_rect`; pixels outside `src_rect`
/// are treated as zero. The result covers `dst_rect`. With `adjoint` the
/// kernel is flipped, which realises the transpose of the forward map
/// between the same two rectangles.
pub(crate) fn apply_stencil(
    psf: &Psf,
    src: &[f64],
    src_rect: Rect,
    dst_rect: Rect,
    adjoint: bool,
) -> Vec<f64> {
    let mut out = vec![0.0; dst_rect.len()];
    accumulate_stencil(psf, src, src_rect, dst_rect, adjoint, &mut out);
    out
}

pub(crate) fn accumulate_stencil(
    psf: &Psf,
    src: &[f64],
    src_rect: Rect,
    dst_rect: Rect,
    adjoint: bool,
    out: &mut [f64],
) {
    debug_assert_eq!(src.len(), src_rect.len());
    debug_assert_eq!(out.len(), dst_rect.len());
    let r = psf.radius as isize;
    let side = psf.side();
    let sign: isize = if adjoint { -1 } else { 1 };
    let src_rows = src_rect.rows();
    let dst_rows = dst_rect.rows();
    let (s_r0, s_r1) = (src_rect.row0 as isize, src_rect.row1 as isize);
    let (d_r0, d_r1) = (dst_rect.row0 as isize, dst_rect.row1 as isize);

    for col in dst_rect.col0..dst_rect.col1 {
        let dst_col = &mut out[(col - dst_rect.col0) * dst_rows..][..dst_rows];
        for nu in -r..=r {
            let src_col_idx = col as isize + sign * nu;
            if src_col_idx < src_rect.col0 as isize || src_col_idx >= src_rect.col1 as isize {
                continue;
            }
            let src_col = &src[(src_col_idx as usize - src_rect.col0) * src_rows..][..src_rows];
            for mu in -r..=r {
                let w = psf.weights[((mu + r) as usize) * side + (nu + r) as usize];
                if w == 0.0 {
                    continue;
                }
                let shift = sign * mu;
                let lo = d_r0.max(s_r0 - shift);
                let hi = d_r1.min(s_r1 - shift);
                if lo >= hi {
                    continue;
                }
                let len = (hi - lo) as usize;
                let d_off = (lo - d_r0) as usize;
                let s_off = (lo + shift - s_r0) as usize;
                for (o, s) in dst_col[d_off..d_off + len]
                    .iter_mut()
                    .zip(&src_col[s_off..s_off + len])
                {
                    *o += w * s;
                }
            }
        }
    }
}

/// Matrix-free convolution `A` on an `n × n` grid with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvOperator {
    psf: Psf,
    n: usize,
}

impl ConvOperator {
    pub fn new(psf: Psf, n: usize) -> Self {
        Self { psf, n }
    }

    pub fn psf(&self) -> &Psf {
        &self.psf
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn convolve(&self, image: &Image) -> Result<Image> {
        check_len(self.n, image.n())?;
        Ok(Image::from_parts(self.n, self.apply(image.data())))
    }

    pub fn convolve_adjoint(&self, image: &Image) -> Result<Image> {
        check_len(self.n, image.n())?;
        Ok(Image::from_parts(self.n, self.apply_adjoint(image.data())))
    }

    /// `A x` on a raw column-major buffer of length `n²`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let full = Rect::square(self.n);
        apply_stencil(&self.psf, x, full, full, false)
    }

    /// `Aᵀ y` on a raw column-major buffer of length `n²`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let full = Rect::square(self.n);
        apply_stencil(&self.psf, y, full, full, true)
    }
}

/// Observation drawn from `y = A x_true + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Image,
    /// Noise precision `1 / noise_std²` (infinite for noiseless data).
    pub lambda: f64,
}

pub fn generate_data(
    op: &ConvOperator,
    x_true: &Image,
    noise_std: f64,
    seed: u64,
) -> Result<Observation> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::param(
            "noise_std",
            format!("must be non-negative, got {noise_std}"),
        ));
    }
    let mut y = op.convolve(x_true)?.into_data();
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in y.iter_mut() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *v += noise_std * xi;
        }
    }
    Ok(Observation {
        y: Image::from_parts(op.n, y),
        lambda: 1.0 / (noise_std * noise_std),
    })
}

/// Scalar bounds certifying (or refuting) diagonal block dominance of `AᵀA`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceCertificate {
    pub block_count: usize,
    /// Row-major `b × b`: smallest eigenvalue of `(AᵀA)_ii` on the diagonal,
    /// spectral norm of `(AᵀA)_ij` off it.
    pub m_matrix: Vec<f64>,
    /// `min_i (M_ii − Σ_{j≠i} M_ij)`.
    pub c: f64,
    pub dominant: bool,
}

impl DominanceCertificate {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m_matrix[i * self.block_count + j]
    }

    /// Whether `lambda / delta ≥ 64 m / (c sqrt(eps))`, the sufficient
    /// condition for a dimension-free marginal smoothing error.
    pub fn smoothing_condition(&self, lambda: f64, delta: f64, epsilon: f64, m: usize) -> bool {
        self.dominant && lambda / delta >= 64.0 * m as f64 / (self.c * epsilon.sqrt())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// `(AᵀA)_ij v` for `v` living on block `j`, result on block `i`.
fn gram_block_apply(psf: &Psf, n: usize, rect_i: Rect, rect_j: Rect, v: &[f64]) -> Vec<f64> {
    let mid = rect_j.grow_clipped(psf.radius(), n);
    let av = apply_stencil(psf, v, rect_j, mid, false);
    apply_stencil(psf, &av, mid, rect_i, true)
}

fn normalize_vec(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
fn power_iteration(
    dim: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
    scale: f64,
    opts: PowerIteration,
    seed: u64,
    what: impl FnOnce() -> String,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize_vec(&mut v);
    let mut estimate = f64::NAN;
    for _ in 0..opts.max_iter {
        let mut w = apply(&v);
        let rayleigh: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if normalize_vec(&mut w) == 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - estimate).abs() <= opts.tol * scale {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
        v = w;
    }
    Err(Error::NonConvergence {
        what: what(),
        iterations: opts.max_iter,
    })
}

/// Builds the scalar matrix `M` and the slack `c` for the partition.
///
/// Only pairs of blocks at block distance ≤ 1 are evaluated: since `m > 2r`,
/// every other pair has `(AᵀA)_ij = 0`.
pub fn dominance_check(
    op: &ConvOperator,
    partition: &BlockPartition,
    opts: PowerIteration,
) -> Result<DominanceCertificate> {
    check_len(op.n(), partition.n())?;
    if op.psf().radius() != partition.radius() {
        return Err(Error::param(
            "partition",
            "PSF radius differs from the partition radius",
        ));
    }
    let b = partition.block_count();
    let q = partition.block_size();
    let n = op.n();
    let psf = op.psf();
    let bound = psf.l1_norm().powi(2);

    let mut pairs = Vec::new();
    for i in 0..b {
        for j in i..b {
            if partition.block_distance(i, j) <= 1 {
                pairs.push((i, j));
            }
        }
    }

    let values = par::map_indexed(pairs.len(), |k| -> Result<f64> {
        let (i, j) = pairs[k];
        let rect_i = partition.block_rect(i)?;
        let rect_j = partition.block_rect(j)?;
        let seed = (i * b + j) as u64;
        if i == j {
            // Smallest eigenvalue via the top of bound·I − C_ii.
            let top = power_iteration(
                q,
                |v| {
                    let cv = gram_block_apply(psf, n, rect_i, rect_i, v);
                    v.iter().zip(cv).map(|(a, c)| bound * a - c).collect()
                },
                bound,
                opts,
                seed,
                || format!("smallest eigenvalue of diagonal block {i}"),
            )?;
            Ok(bound - top)
        } else {
            let top = power_iteration(
                q,
                |v| {
                    let cv = gram_block_apply(psf, n, rect_i, rect_j, v);
                    gram_block_apply(psf, n, rect_j, rect_i, &cv)
                },
                bound * bound,
                opts,
                seed,
                || format!("norm of off-diagonal block ({i}, {j})"),
            )?;
            Ok(top.max(0.0).sqrt())
        }
    });

    let mut m_matrix = vec![0.0; b * b];
    for (&(i, j), value) in pairs.iter().zip(values) {
        let value = value?;
        m_matrix[i * b + j] = value;
        m_matrix[j * b + i] = value;
    }
    let c = (0..b)
        .map(|i| {
            let off: f64 = (0..b).filter(|&j| j != i).map(|j| m_matrix[i * b + j]).sum();
            m_matrix[i * b + i] - off
        })
        .fold(f64::INFINITY, f64::min);
    Ok(DominanceCertificate {
        block_count: b,
        m_matrix,
        c,
        dominant: c > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_operator(op: &ConvOperator) -> Vec<Vec<f64>> {
        let d = op.n() * op.n();
        (0..d)
            .map(|k| {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                op.apply(&e)
            })
            .collect()
    }

    fn box3() -> Psf {
        Psf::uniform(1)
    }

    #[test]
    fn delta_psf_is_identity() {
        let op = ConvOperator::new(Psf::delta(), 5);
        let x = Image::from_fn(5, |r, c| (r * 3 + c * 7) as f64 * 0.1);
        assert_eq!(op.convolve(&x).unwrap(), x);
        assert_eq!(op.convolve_adjoint(&x).unwrap(), x);
    }

    #[test]
    fn constant_interior_pixel_preserved() {
        let op = ConvOperator::new(Psf::gaussian(2, 1.3).unwrap(), 9);
        let out = op.convolve(&Image::filled(9, 0.7)).unwrap();
        assert_relative_eq!(out.get(4, 4), 0.7, epsilon = 1e-14);
        // Corner loses mass to the zero padding.
        assert!(out.get(0, 0) < 0.7);
    }

    #[test]
    fn matches_dense_matrix_box_kernel() {
        let n = 5;
        let psf = box3();
        let op = ConvOperator::new(psf.clone(), n);
        // Dense matrix assembled from the definition, not from `apply`.
        let d = n * n;
        let mut dense = vec![vec![0.0; d]; d];
        for col in 0..n {
            for row in 0..n {
                for mu in -1isize..=1 {
                    for nu in -1isize..=1 {
                        let (sr, sc) = (row as isize + mu, col as isize + nu);
                        if sr >= 0 && sc >= 0 && (sr as usize) < n && (sc as usize) < n {
                            dense[col * n + row][sc as usize * n + sr as usize] +=
                                psf.weight(mu, nu);
                        }
                    }
                }
            }
        }
        let x: Vec<f64> = (0..d).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let expected: Vec<f64> = dense
            .iter()
            .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        let got = op.apply(&x);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn adjoint_is_transpose_of_dense() {
        let op = ConvOperator::new(Psf::motion(5, 30.0).unwrap(), 7);
        let cols = dense_operator(&op); // cols[k] = A e_k
        let d = 49;
        let y: Vec<f64> = (0..d).map(|k| (k as f64 * 0.37).sin()).collect();
        let aty = op.apply_adjoint(&y);
        for k in 0..d {
            let expected: f64 = cols[k].iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((aty[k] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn gaussian_kernel_properties() {
        let psf = Psf::gaussian(0, 2.0).unwrap();
        assert_eq!(psf.weights(), &[1.0]);
        let psf = Psf::gaussian(8, 8.0).unwrap();
        assert_eq!(psf.side(), 17);
        assert_relative_eq!(psf.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        let max = psf.weights().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(psf.weight(0, 0), max);
        for mu in -8..=8 {
            for nu in -8..=8 {
                assert_eq!(psf.weight(mu, nu), psf.weight(-mu, -nu));
                assert_eq!(psf.weight(mu, nu), psf.weight(nu, mu));
            }
        }
        assert!(Psf::gaussian(2, 0.0).is_err());
        assert!(Psf::gaussian(2, -1.0).is_err());
    }

    #[test]
    fn motion_kernel_shapes() {
        assert_eq!(Psf::motion(1, 45.0).unwrap(), Psf::delta());
        let psf = Psf::motion(17, 45.0).unwrap();
        assert_eq!(psf.radius(), 8);
        let nonzero: Vec<(isize, isize)> = (-8..=8)
            .flat_map(|mu| (-8..=8).map(move |nu| (mu, nu)))
            .filter(|&(mu, nu)| psf.weight(mu, nu) != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 17);
        for &(mu, nu) in &nonzero {
            assert_eq!(mu, -nu);
            assert_relative_eq!(psf.weight(mu, nu), 1.0 / 17.0, epsilon = 1e-15);
        }
        for (len, angle) in [(2, 0.0), (9, 10.0), (12, 100.0), (17, 45.0), (30, -73.0)] {
            let psf = Psf::motion(len, angle).unwrap();
            assert_relative_eq!(psf.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
        assert!(Psf::motion(0, 0.0).is_err());
    }

    #[test]
    fn generated_data_is_reproducible() {
        let op = ConvOperator::new(Psf::gaussian(1, 1.0).unwrap(), 8);
        let x = Image::from_fn(8, |r, c| ((r + c) % 3) as f64 / 2.0);
        let clean = generate_data(&op, &x, 0.0, 1).unwrap();
        assert_eq!(clean.y, op.convolve(&x).unwrap());
        assert!(clean.lambda.is_infinite());
        let a = generate_data(&op, &x, 0.01, 42).unwrap();
        let b = generate_data(&op, &x, 0.01, 42).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a.lambda, 1e4, epsilon = 1e-6);
        let c = generate_data(&op, &x, 0.01, 43).unwrap();
        assert_ne!(a.y, c.y);
        assert!(generate_data(&op, &x, -1.0, 0).is_err());
    }

    #[test]
    fn delta_psf_dominance() {
        let op = ConvOperator::new(Psf::delta(), 8);
        let p = BlockPartition::new(8, 4, 0).unwrap();
        let cert = dominance_check(&op, &p, PowerIteration::default()).unwrap();
        assert_relative_eq!(cert.c, 1.0, epsilon = 1e-12);
        assert!(cert.dominant);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(cert.entry(i, j), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn far_blocks_have_zero_coupling() {
        let op = ConvOperator::new(box3(), 12);
        let p = BlockPartition::new(12, 3, 1).unwrap();
        let cert = dominance_check(&op, &p, PowerIteration::default()).unwrap();
        for i in 0..p.block_count() {
            for j in 0..p.block_count() {
                if p.block_distance(i, j) > 1 {
                    assert_eq!(cert.entry(i, j), 0.0);
                } else if i != j {
                    assert!(cert.entry(i, j) >= 0.0);
                }
                assert_eq!(cert.entry(i, j), cert.entry(j, i));
            }
        }
    }

    #[test]
    fn psf_and_partition_must_agree() {
        let op = ConvOperator::new(box3(), 8);
        let p = BlockPartition::new(8, 4, 0).unwrap();
        assert!(dominance_check(&op, &p, PowerIteration::default()).is_err());
    }
}
