use std::panic::{catch_unwind, AssertUnwindSafe};

use super::mala::{mala_step, Transition};
use super::schedule::ColorSchedule;
use super::step::{StepSizeState, DEFAULT_TARGET_ACCEPT};
use crate::diagnostics::ChainStore;
use crate::error::{check_len, Error, Result};
use crate::grid::{BlockPartition, Image};
use crate::local::LocalTarget;
use crate::par;
use crate::potentials::PosteriorSpec;
use crate::rng::stream;

/// Length and bookkeeping of a run.
///
/// A run performs `burn_in + n_saved * thin` cycles. Step sizes adapt only
/// during the first `burn_in` cycles (and only when `adapt` is set); after
/// burn-in every `thin`-th state is saved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub burn_in: u64,
    pub n_saved: usize,
    pub thin: usize,
    pub initial_tau: f64,
    pub target_accept: f64,
    pub adapt: bool,
    pub seed: u64,
    pub chain: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            n_saved: 2000,
            thin: 200,
            initial_tau: 1e-4,
            target_accept: DEFAULT_TARGET_ACCEPT,
            adapt: true,
            seed: 0,
            chain: 0,
        }
    }
}

impl RunSettings {
    pub fn total_cycles(&self) -> u64 {
        self.burn_in + (self.n_saved * self.thin) as u64
    }

    fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::param("thin", "must be at least 1"));
        }
        if !(self.initial_tau > 0.0) || !self.initial_tau.is_finite() {
            return Err(Error::param("initial_tau", "must be positive and finite"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::param("target_accept", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Mala,
    MlwgSequential,
    /// Chromatic parallel sweep on a pool of `workers` threads.
    MlwgParallel { workers: usize },
}

fn check_target(spec: &PosteriorSpec) -> Result<()> {
    if spec.epsilon == 0.0 && spec.delta > 0.0 {
        return Err(Error::param(
            "epsilon",
            "sampling needs the smoothed posterior (epsilon > 0)",
        ));
    }
    Ok(())
}

/// Runs the cycle loop. `sweep(cycle, x, taus)` performs one cycle in place
/// and reports, per block, whether its proposal was accepted.
fn drive<F>(
    spec: &PosteriorSpec,
    init: &Image,
    settings: &RunSettings,
    n_blocks: usize,
    mut sweep: F,
) -> Result<ChainStore>
where
    F: FnMut(u64, &mut Vec<f64>, &[f64]) -> Result<Vec<bool>>,
{
    settings.validate()?;
    check_target(spec)?;
    check_len(spec.dim(), init.len())?;
    let d = init.len();
    let mut x = init.data().to_vec();
    let mut steps = vec![StepSizeState::new(settings.initial_tau, settings.target_accept); n_blocks];
    if !settings.adapt || settings.burn_in == 0 {
        steps.iter_mut().for_each(StepSizeState::freeze);
    }
    let mut accepted_all = vec![0u64; n_blocks];
    let mut accepted_post = vec![0u64; n_blocks];
    let mut samples = Vec::with_capacity(settings.n_saved * d);

    for cycle in 0..settings.total_cycles() {
        if cycle == settings.burn_in {
            steps.iter_mut().for_each(StepSizeState::freeze);
        }
        let taus: Vec<f64> = steps.iter().map(StepSizeState::tau).collect();
        let accepted = sweep(cycle, &mut x, &taus)?;
        let post = cycle >= settings.burn_in;
        for (b, &a) in accepted.iter().enumerate() {
            steps[b].adapt(if a { 1.0 } else { 0.0 });
            accepted_all[b] += a as u64;
            if post {
                accepted_post[b] += a as u64;
            }
        }
        if post && (cycle - settings.burn_in + 1).is_multiple_of(settings.thin as u64) {
            samples.extend_from_slice(&x);
        }
    }

    let post_cycles = settings.total_cycles() - settings.burn_in;
    let block_acceptance = if post_cycles > 0 {
        accepted_post.iter().map(|&a| a as f64 / post_cycles as f64).collect()
    } else {
        let total = settings.total_cycles().max(1) as f64;
        accepted_all.iter().map(|&a| a as f64 / total).collect()
    };
    Ok(ChainStore {
        n: init.n(),
        n_saved: settings.n_saved,
        thin: settings.thin,
        chain_ids: vec![settings.chain],
        samples: vec![samples],
        block_acceptance: vec![block_acceptance],
        block_tau: vec![steps.iter().map(StepSizeState::tau).collect()],
        final_states: vec![x],
    })
}

/// Global MALA on the full posterior. Uses the random stream of block 0.
pub fn run_mala(spec: &PosteriorSpec, init: &Image, settings: &RunSettings) -> Result<ChainStore> {
    drive(spec, init, settings, 1, |cycle, x, taus| {
        let mut rng = stream(settings.seed, settings.chain, 0, cycle);
        let tr = mala_step(spec, x, taus[0], &mut rng)?;
        if tr.accepted {
            *x = tr.candidate;
        }
        Ok(vec![tr.accepted])
    })
}

fn propose_block(
    spec: &PosteriorSpec,
    partition: &BlockPartition,
    x: &[f64],
    id: usize,
    tau: f64,
    settings: &RunSettings,
    cycle: u64,
) -> Result<Transition> {
    let target = LocalTarget::build(spec, partition, x, id)?;
    let core = partition.block_rect(id)?;
    let x_block = core.extract(x, partition.n());
    let mut rng = stream(settings.seed, settings.chain, id as u64, cycle);
    mala_step(&target, &x_block, tau, &mut rng)
}

fn check_partition(spec: &PosteriorSpec, partition: &BlockPartition) -> Result<()> {
    check_len(spec.n(), partition.n())?;
    if spec.conv.psf().radius() != partition.radius() {
        return Err(Error::param(
            "partition",
            "PSF radius differs from the partition radius",
        ));
    }
    Ok(())
}

/// MALA-within-Gibbs with blocks updated one after another in ascending id.
pub fn run_mlwg_sequential(
    spec: &PosteriorSpec,
    partition: &BlockPartition,
    init: &Image,
    settings: &RunSettings,
) -> Result<ChainStore> {
    check_partition(spec, partition)?;
    let n = partition.n();
    drive(spec, init, settings, partition.block_count(), |cycle, x, taus| {
        let mut accepted = vec![false; taus.len()];
        for id in 0..taus.len() {
            let tr = propose_block(spec, partition, x, id, taus[id], settings, cycle)?;
            if tr.accepted {
                partition.block_rect(id)?.insert(&tr.candidate, x, n);
            }
            accepted[id] = tr.accepted;
        }
        Ok(accepted)
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_string()
    }
}

fn parallel_chain(
    spec: &PosteriorSpec,
    partition: &BlockPartition,
    init: &Image,
    settings: &RunSettings,
) -> Result<ChainStore> {
    check_partition(spec, partition)?;
    let n = partition.n();
    let schedule = ColorSchedule::new(partition);
    drive(spec, init, settings, partition.block_count(), |cycle, x, taus| {
        let mut accepted = vec![false; taus.len()];
        for class in schedule.classes() {
            let frozen: &[f64] = x;
            let results = catch_unwind(AssertUnwindSafe(|| {
                par::map_indexed(class.len(), |k| {
                    let id = class[k];
                    propose_block(spec, partition, frozen, id, taus[id], settings, cycle)
                })
            }))
            .map_err(|payload| Error::ChainAborted {
                cycle,
                reason: panic_message(payload),
                state: frozen.to_vec(),
            })?;
            for (&id, result) in class.iter().zip(results) {
                let tr = result?;
                if tr.accepted {
                    partition.block_rect(id)?.insert(&tr.candidate, x, n);
                }
                accepted[id] = tr.accepted;
            }
        }
        Ok(accepted)
    })
}

/// Local and parallel MALA-within-Gibbs.
///
/// Within each of the four colour classes all block proposals are computed
/// concurrently against the same frozen state and written back afterwards.
/// Every block draws from its own keyed stream, so the chain does not
/// depend on `workers`.
pub fn run_mlwg_parallel(
    spec: &PosteriorSpec,
    partition: &BlockPartition,
    init: &Image,
    settings: &RunSettings,
    workers: usize,
) -> Result<ChainStore> {
    if workers == 0 {
        return Err(Error::param("workers", "must be at least 1"));
    }
    par::with_workers(workers, || parallel_chain(spec, partition, init, settings))
}

/// Runs one chain per entry of `inits`, chain ids `settings.chain + k`, and
/// merges the results in chain order.
pub fn run_chains(
    kind: SamplerKind,
    spec: &PosteriorSpec,
    partition: Option<&BlockPartition>,
    inits: &[Image],
    settings: &RunSettings,
) -> Result<ChainStore> {
    if inits.is_empty() {
        return Err(Error::param("inits", "need at least one chain"));
    }
    let need_partition = || {
        partition.ok_or_else(|| Error::param("partition", "block samplers need a partition"))
    };
    let one = |k: usize| -> Result<ChainStore> {
        let s = RunSettings {
            chain: settings.chain + k as u64,
            ..settings.clone()
        };
        match kind {
            SamplerKind::Mala => run_mala(spec, &inits[k], &s),
            SamplerKind::MlwgSequential => run_mlwg_sequential(spec, need_partition()?, &inits[k], &s),
            SamplerKind::MlwgParallel { .. } => parallel_chain(spec, need_partition()?, &inits[k], &s),
        }
    };
    let workers = match kind {
        SamplerKind::MlwgParallel { workers: 0 } => {
            return Err(Error::param("workers", "must be at least 1"))
        }
        SamplerKind::MlwgParallel { workers } => workers,
        _ => 0,
    };
    let stores = par::with_workers(workers, || par::map_indexed(inits.len(), one));
    ChainStore::merge(stores.into_iter().collect::<Result<Vec<_>>>()?)
}
