use std::fs;
use std::path::{Path, PathBuf};

use mlwg_core::diagnostics::{ness, psrf, summarize, summary_images, ChainStore};
use mlwg_core::forward::{dominance_check, generate_data, PowerIteration};
use mlwg_core::map::{solve_map, MapOptions};
use mlwg_core::phantom::{center_crop, phantom};
use mlwg_core::samplers::{run_chains, RunSettings, SamplerKind};
use mlwg_core::{BlockPartition, ConvOperator, Image, PosteriorSpec};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SamplerChoice};
use crate::error::CliError;
use crate::io;

/// Side used for the built-in phantom when `n` is not given.
const DEFAULT_PHANTOM_SIDE: usize = 128;

fn crop_to(cfg: &RunConfig, image: Image) -> Result<Image, CliError> {
    match cfg.n {
        Some(n) if n > image.n() => Err(CliError::Validation(format!(
            "`n` = {n} exceeds the image side {}",
            image.n()
        ))),
        Some(n) if n < image.n() => Ok(center_crop(&image, n)?),
        _ => Ok(image),
    }
}

fn load_observation(cfg: &RunConfig) -> Result<Image, CliError> {
    let path = cfg
        .observation
        .as_ref()
        .ok_or_else(|| CliError::Validation("`observation` is required".into()))?;
    crop_to(cfg, io::load_image(path)?)
}

fn posterior(cfg: &RunConfig, y: Image, sampling: bool) -> Result<(PosteriorSpec, BlockPartition), CliError> {
    let psf = cfg.validate_geometry(y.n())?;
    cfg.validate_posterior(sampling)?;
    let n = y.n();
    let partition = BlockPartition::new(n, cfg.m, psf.radius())?;
    let spec = PosteriorSpec::new(cfg.lambda(), cfg.delta, cfg.epsilon, y, ConvOperator::new(psf, n))?;
    Ok((spec, partition))
}

/// Collects the files written into one output directory.
struct Emitter {
    dir: PathBuf,
    png: bool,
    files: Vec<String>,
}

impl Emitter {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.output).map_err(|e| {
            CliError::Runtime(format!("cannot create {}: {e}", cfg.output.display()))
        })?;
        Ok(Self {
            dir: cfg.output.clone(),
            png: cfg.png,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    /// `<stem>.bin` at full precision, `<stem>.pgm` (and optionally
    /// `<stem>.png`) for viewing.
    fn image(&mut self, stem: &str, image: &Image, scale: f64) -> Result<(), CliError> {
        io::write_dump(&self.path(&format!("{stem}.bin")), image.n(), 1, 0, image.data())?;
        io::save_pgm(&self.path(&format!("{stem}.pgm")), image, scale)?;
        if self.png {
            io::save_png(&self.path(&format!("{stem}.png")), image, scale)?;
        }
        Ok(())
    }

    fn finish(self, command: &'static str, cfg: &RunConfig) -> Result<(), CliError> {
        let mut config = cfg.canonical();
        for key in ["output", "workers", "png"] {
            config.remove(key);
        }
        io::write_manifest(&self.dir, command, cfg.hash(), cfg.seed, config, &self.files)
    }
}

#[derive(Serialize)]
struct Provenance {
    seed: u64,
    psf: String,
    psf_radius: usize,
    psf_weights_l1: f64,
    noise_std: f64,
    /// `null` for noiseless data.
    lambda: Option<f64>,
    n: usize,
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate_noise()?;
    let truth_key = cfg
        .truth
        .as_deref()
        .ok_or_else(|| CliError::Validation("`truth` is required (an image path or `phantom`)".into()))?;
    let truth = if truth_key == "phantom" {
        phantom(cfg.n.unwrap_or(DEFAULT_PHANTOM_SIDE))
    } else {
        crop_to(cfg, io::load_image(Path::new(truth_key))?)?
    };
    let psf = cfg
        .build_psf()
        .map_err(|e| CliError::Validation(format!("invalid psf: {e}")))?;
    let n = truth.n();
    let conv = ConvOperator::new(psf, n);
    let obs = generate_data(&conv, &truth, cfg.noise_std, cfg.seed)?;

    let mut out = Emitter::new(cfg)?;
    out.image("truth", &truth, 1.0)?;
    out.image("observation", &obs.y, 1.0)?;
    let provenance = Provenance {
        seed: cfg.seed,
        psf: cfg.psf.to_string(),
        psf_radius: conv.psf().radius(),
        psf_weights_l1: conv.psf().l1_norm(),
        noise_std: cfg.noise_std,
        lambda: obs.lambda.is_finite().then_some(obs.lambda),
        n,
    };
    let mut text = serde_json::to_string_pretty(&provenance)?;
    text.push('\n');
    fs::write(out.path("observation.json"), text)?;
    out.finish("generate", cfg)?;
    println!("wrote {n}×{n} observation to {}", cfg.output.display());
    Ok(())
}

/// One row of `block_stats.csv`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct BlockRow {
    pub chain: u64,
    pub block: usize,
    pub acceptance: f64,
    pub tau: f64,
}

pub fn sample(cfg: &RunConfig) -> Result<(), CliError> {
    let y = load_observation(cfg)?;
    let (spec, partition) = posterior(cfg, y, true)?;
    cfg.validate_sampling()?;
    let settings = RunSettings {
        burn_in: cfg.burn_in,
        n_saved: cfg.n_saved,
        thin: cfg.thin,
        initial_tau: cfg.initial_tau,
        target_accept: cfg.target_accept,
        adapt: true,
        seed: cfg.seed,
        chain: 0,
    };
    let kind = match cfg.sampler {
        SamplerChoice::Mala => SamplerKind::Mala,
        SamplerChoice::Mlwg => SamplerKind::MlwgSequential,
        SamplerChoice::MlwgParallel => SamplerKind::MlwgParallel {
            workers: cfg.effective_workers(),
        },
    };
    let inits = vec![spec.y.clone(); cfg.n_chains];
    let mut out = Emitter::new(cfg)?;
    let store = match run_chains(kind, &spec, Some(&partition), &inits, &settings) {
        Ok(store) => store,
        Err(mlwg_core::Error::ChainAborted { cycle, reason, state }) => {
            let path = cfg.output.join("aborted_state.bin");
            io::write_dump(&path, spec.n(), 1, 0, &state)?;
            return Err(CliError::Runtime(format!(
                "chain aborted in cycle {cycle}: {reason}; state written to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    for (k, chain) in store.chain_ids.iter().enumerate() {
        let path = out.path(&format!("chain_{chain}.bin"));
        io::write_dump(&path, store.n, store.n_saved, *chain, &store.samples[k])?;
    }
    let mut rows = Vec::new();
    for (k, chain) in store.chain_ids.iter().enumerate() {
        for (block, (a, t)) in store.block_acceptance[k].iter().zip(&store.block_tau[k]).enumerate() {
            rows.push(BlockRow {
                chain: *chain,
                block,
                acceptance: *a,
                tau: *t,
            });
        }
    }
    io::write_csv(&out.path("block_stats.csv"), &rows)?;
    if store.n_saved > 0 {
        let s = summary_images(&store, cfg.ci_level)?;
        out.image("mean", &s.mean, 1.0)?;
        out.image("std", &s.std, io::display_scale(&s.std))?;
        out.image("ci_width", &s.ci_width, io::display_scale(&s.ci_width))?;
    }
    out.finish("sample", cfg)?;

    let accept = store.mean_acceptance();
    if (accept - cfg.target_accept).abs() > 0.1 {
        eprintln!(
            "warning: mean acceptance {accept:.3} is far from the target {:.3}; consider a longer burn-in",
            cfg.target_accept
        );
    }
    println!(
        "{} chains × {} samples, mean acceptance {accept:.3}, mean tau {:.3e}",
        store.n_chains(),
        store.n_saved,
        store.mean_tau()
    );
    Ok(())
}

/// One row of `summary.csv`.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SummaryRow {
    pub min_ness: f64,
    pub tau: f64,
    pub alpha: f64,
    pub max_psrf: f64,
    pub median_psrf: f64,
    pub converged: bool,
}

fn collect_dumps(paths: &[PathBuf]) -> Result<(Vec<PathBuf>, Option<PathBuf>), CliError> {
    let mut dumps = Vec::new();
    let mut stats = None;
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.file_name()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| s.starts_with("chain_") && s.ends_with(".bin"))
                })
                .collect();
            found.sort();
            dumps.extend(found);
            let candidate = p.join("block_stats.csv");
            if candidate.exists() {
                stats = Some(candidate);
            }
        } else {
            dumps.push(p.clone());
        }
    }
    if dumps.is_empty() {
        return Err(CliError::Validation("no sample dumps given".into()));
    }
    Ok((dumps, stats))
}

pub fn diagnose(cfg: &RunConfig, paths: &[PathBuf]) -> Result<(), CliError> {
    let (dump_paths, stats_path) = collect_dumps(paths)?;
    let mut dumps = Vec::new();
    for p in &dump_paths {
        dumps.push(io::read_dump(p)?);
    }
    let (n, count) = (dumps[0].n, dumps[0].count);
    if let Some((p, d)) = dump_paths.iter().zip(&dumps).find(|(_, d)| d.n != n || d.count != count) {
        return Err(CliError::Validation(format!(
            "incompatible dumps: {} has side {} and {} samples, expected {n} and {count}",
            p.display(),
            d.n,
            d.count
        )));
    }
    let (mut acceptance, mut taus) = (Vec::new(), Vec::new());
    if let Some(p) = &stats_path {
        let mut rdr = csv::Reader::from_path(p)?;
        let rows: Vec<BlockRow> = rdr.deserialize().collect::<Result<_, _>>()?;
        acceptance.push(rows.iter().map(|r| r.acceptance).collect());
        taus.push(rows.iter().map(|r| r.tau).collect());
    }
    let k = dumps.len();
    let store = ChainStore {
        n,
        n_saved: count,
        thin: 1,
        chain_ids: dumps.iter().map(|d| d.chain).collect(),
        final_states: vec![Vec::new(); k],
        samples: dumps.into_iter().map(|d| d.data).collect(),
        block_acceptance: acceptance,
        block_tau: taus,
    };
    let summary = summarize(&store)?;
    let mut out = Emitter::new(cfg)?;
    out.image("psrf", &psrf(&store)?, 0.5)?;
    out.image("ness", &ness(&store)?, 0.01)?;
    let row = SummaryRow {
        min_ness: summary.min_ness,
        tau: summary.mean_tau,
        alpha: summary.mean_accept,
        max_psrf: summary.max_psrf,
        median_psrf: summary.median_psrf,
        converged: summary.converged,
    };
    io::write_csv(&out.path("summary.csv"), &[&row])?;
    out.finish("diagnose", cfg)?;
    println!(
        "min nESS {:.2}%  max PSRF {:.3}  median PSRF {:.3}  converged {}",
        row.min_ness, row.max_psrf, row.median_psrf, row.converged
    );
    Ok(())
}

pub fn dominance(cfg: &RunConfig) -> Result<(), CliError> {
    let n = match (cfg.n, &cfg.observation) {
        (Some(n), _) => n,
        (None, Some(p)) => io::load_image(p)?.n(),
        (None, None) => {
            return Err(CliError::Validation(
                "`n` or `observation` is required to size the operator".into(),
            ))
        }
    };
    let psf = cfg.validate_geometry(n)?;
    cfg.validate_posterior(false)?;
    let partition = BlockPartition::new(n, cfg.m, psf.radius())?;
    let cert = dominance_check(&ConvOperator::new(psf, n), &partition, PowerIteration::default())?;

    let b = cert.block_count;
    let min_diag = (0..b).map(|i| cert.entry(i, i)).fold(f64::INFINITY, f64::min);
    let max_off = (0..b)
        .map(|i| (0..b).filter(|&j| j != i).map(|j| cert.entry(i, j)).sum::<f64>())
        .fold(0.0f64, f64::max);
    let ratio = cfg.lambda() / cfg.delta;
    let required = 64.0 * cfg.m as f64 / (cert.c * cfg.epsilon.sqrt());
    let report = format!(
        "blocks = {b}\n\
         min_diagonal = {min_diag:.12e}\n\
         max_offdiagonal_row_sum = {max_off:.12e}\n\
         c = {:.12e}\n\
         dominant = {}\n\
         lambda_over_delta = {ratio:.6e}\n\
         required_lambda_over_delta = {}\n\
         smoothing_condition = {}\n",
        cert.c,
        cert.dominant,
        if cert.dominant { format!("{required:.6e}") } else { "n/a".into() },
        cert.smoothing_condition(cfg.lambda(), cfg.delta, cfg.epsilon, cfg.m),
    );
    let mut out = Emitter::new(cfg)?;
    fs::write(out.path("dominance.txt"), &report)?;
    out.finish("dominance", cfg)?;
    print!("{report}");
    if cert.dominant {
        Ok(())
    } else {
        Err(CliError::NonDominant)
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ObjectiveRow {
    pub iteration: usize,
    pub objective: f64,
}

pub fn map(cfg: &RunConfig) -> Result<(), CliError> {
    let y = load_observation(cfg)?;
    let (spec, _) = posterior(cfg, y, false)?;
    if spec.delta > 0.0 && spec.epsilon == 0.0 {
        return Err(CliError::Validation("`epsilon` must be positive for the MAP solver".into()));
    }
    let opts = MapOptions {
        tol: cfg.map_tol,
        max_outer: cfg.map_max_outer,
        max_cg: cfg.map_max_cg,
        ..MapOptions::default()
    };
    let result = solve_map(&spec, &spec.y, &opts)?;
    let mut out = Emitter::new(cfg)?;
    out.image("map", &result.x_map, 1.0)?;
    let rows: Vec<ObjectiveRow> = result
        .objective
        .iter()
        .enumerate()
        .map(|(iteration, &objective)| ObjectiveRow { iteration, objective })
        .collect();
    io::write_csv(&out.path("objective.csv"), &rows)?;
    out.finish("map", cfg)?;
    println!(
        "MAP after {} outer iterations (converged: {}, CG restarts: {}), objective {:.6e}",
        result.iterations,
        result.converged,
        result.cg_restarts,
        result.objective.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
