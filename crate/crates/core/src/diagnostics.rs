//! Chain storage and convergence statistics.
//!
//! Samples are kept per chain as one flat vector, sample-major: sample `s`
//! of chain `c` occupies `samples[c][s * d .. (s + 1) * d]`.

use crate::error::{Error, Result};
use crate::grid::Image;
use crate::par;

/// Saved states of one or more chains plus per-block sampler statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStore {
    pub n: usize,
    pub n_saved: usize,
    pub thin: usize,
    pub chain_ids: Vec<u64>,
    pub samples: Vec<Vec<f64>>,
    /// Per chain, per block: acceptance rate after burn-in (over all
    /// updates when there was no post-burn-in phase).
    pub block_acceptance: Vec<Vec<f64>>,
    /// Per chain, per block: step size at the end of the run.
    pub block_tau: Vec<Vec<f64>>,
    pub final_states: Vec<Vec<f64>>,
}

impl ChainStore {
    pub fn d(&self) -> usize {
        self.n * self.n
    }

    pub fn n_chains(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, chain: usize, s: usize) -> &[f64] {
        let d = self.d();
        &self.samples[chain][s * d..(s + 1) * d]
    }

    /// Trace of pixel `p` in chain `c`.
    pub fn pixel_series(&self, chain: usize, p: usize) -> Vec<f64> {
        let d = self.d();
        (0..self.n_saved).map(|s| self.samples[chain][s * d + p]).collect()
    }

    /// Concatenates the chains of several compatible stores.
    pub fn merge(stores: Vec<ChainStore>) -> Result<ChainStore> {
        let mut iter = stores.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::Diagnostics("no stores to merge".into()))?;
        for s in iter {
            if s.n != out.n || s.n_saved != out.n_saved || s.thin != out.thin {
                return Err(Error::Diagnostics(format!(
                    "incompatible stores: (n, n_saved, thin) = ({}, {}, {}) vs ({}, {}, {})",
                    out.n, out.n_saved, out.thin, s.n, s.n_saved, s.thin
                )));
            }
            out.chain_ids.extend(s.chain_ids);
            out.samples.extend(s.samples);
            out.block_acceptance.extend(s.block_acceptance);
            out.block_tau.extend(s.block_tau);
            out.final_states.extend(s.final_states);
        }
        Ok(out)
    }

    pub fn mean_acceptance(&self) -> f64 {
        mean(self.block_acceptance.iter().flatten().copied())
    }

    pub fn mean_tau(&self) -> f64 {
        mean(self.block_tau.iter().flatten().copied())
    }

    fn check_samples(&self, min_chains: usize, min_saved: usize) -> Result<()> {
        if self.n_chains() < min_chains || self.n_saved < min_saved {
            return Err(Error::Diagnostics(format!(
                "need at least {min_chains} chains of {min_saved} samples, have {} of {}",
                self.n_chains(),
                self.n_saved
            )));
        }
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn variance(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Split-R̂ of a set of scalar chains of equal length.
///
/// Returns 1 when every chain half is constant at the same value and
/// infinity when the halves are constant at different values.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = len / 2;
    if half < 2 {
        return f64::NAN;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[len - half..len]);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h.iter().copied())).collect();
    let w = mean(halves.iter().zip(&means).map(|(h, &m)| variance(h, m)));
    let grand = mean(means.iter().copied());
    let b = half as f64 * variance(&means, grand);
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    (var_plus / w).sqrt()
}

/// Effective sample size of one chain by Geyer's initial monotone sequence.
///
/// The integrated autocorrelation time is floored at `1 / log10(N)`, so the
/// result is always positive and at most `N log10 N`. A constant chain
/// returns `N`.
pub fn ess_single(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let m = mean(x.iter().copied());
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    let autocov = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let c0 = autocov(0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| if lag < n { autocov(lag) / c0 } else { 0.0 };
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        k += 1;
    }
    let nf = n as f64;
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / nf.log10());
    nf / tau
}

/// Per-pixel split-R̂.
pub fn psrf(store: &ChainStore) -> Result<Image> {
    store.check_samples(2, 4)?;
    let values = par::map_indexed(store.d(), |p| {
        let chains: Vec<Vec<f64>> = (0..store.n_chains())
            .map(|c| store.pixel_series(c, p))
            .collect();
        split_rhat(&chains)
    });
    Ok(Image::from_parts(store.n, values))
}

/// Per-pixel normalized effective sample size in percent of the saved
/// samples, averaged over chains.
pub fn ness(store: &ChainStore) -> Result<Image> {
    store.check_samples(1, 2)?;
    let values = par::map_indexed(store.d(), |p| {
        let ess = mean((0..store.n_chains()).map(|c| ess_single(&store.pixel_series(c, p))));
        100.0 * ess / store.n_saved as f64
    });
    Ok(Image::from_parts(store.n, values))
}

/// Linear interpolation between order statistics at position `(N − 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval width at level `ci_level`.
pub fn ci_width(values: &[f64], ci_level: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - ci_level);
    quantile_sorted(&sorted, 1.0 - tail) - quantile_sorted(&sorted, tail)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryImages {
    pub mean: Image,
    pub std: Image,
    pub ci_width: Image,
}

/// Pooled per-pixel mean, standard deviation and credible-interval width.
pub fn summary_images(store: &ChainStore, ci_level: f64) -> Result<SummaryImages> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::param("ci_level", format!("must lie in (0, 1), got {ci_level}")));
    }
    store.check_samples(1, 1)?;
    let stats = par::map_indexed(store.d(), |p| {
        let pooled: Vec<f64> = (0..store.n_chains())
            .flat_map(|c| store.pixel_series(c, p))
            .collect();
        let m = mean(pooled.iter().copied());
        (m, variance(&pooled, m).sqrt(), ci_width(&pooled, ci_level))
    });
    let n = store.n;
    Ok(SummaryImages {
        mean: Image::from_parts(n, stats.iter().map(|s| s.0).collect()),
        std: Image::from_parts(n, stats.iter().map(|s| s.1).collect()),
        ci_width: Image::from_parts(n, stats.iter().map(|s| s.2).collect()),
    })
}

/// The scalar columns reported per run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub min_ness: f64,
    pub mean_tau: f64,
    pub mean_accept: f64,
    pub max_psrf: f64,
    pub median_psrf: f64,
    pub converged: bool,
}

/// Chains count as converged when the largest pixel PSRF is below this.
pub const PSRF_THRESHOLD: f64 = 1.1;

pub fn summarize(store: &ChainStore) -> Result<Summary> {
    let ness_img = ness(store)?;
    let psrf_img = psrf(store)?;
    let mut rhat = psrf_img.data().to_vec();
    rhat.sort_by(f64::total_cmp);
    let max_psrf = rhat.last().copied().unwrap_or(f64::NAN);
    Ok(Summary {
        min_ness: ness_img.data().iter().copied().fold(f64::INFINITY, f64::min),
        mean_tau: store.mean_tau(),
        mean_accept: store.mean_acceptance(),
        max_psrf,
        median_psrf: quantile_sorted(&rhat, 0.5),
        converged: max_psrf < PSRF_THRESHOLD,
    })
}
