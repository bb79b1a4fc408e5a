//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags. Every key has a default; a config file only needs the keys it
//! changes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mlwg_core::{Psf, Result as CoreResult};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsfKind {
    Gaussian,
    Motion,
    Uniform,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerChoice {
    Mala,
    Mlwg,
    MlwgParallel,
}

impl fmt::Display for PsfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PsfKind::Gaussian => "gaussian",
            PsfKind::Motion => "motion",
            PsfKind::Uniform => "uniform",
            PsfKind::Delta => "delta",
        })
    }
}

impl fmt::Display for SamplerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerChoice::Mala => "mala",
            SamplerChoice::Mlwg => "mlwg",
            SamplerChoice::MlwgParallel => "mlwg-parallel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Ground-truth image path, or `phantom` for the built-in test image.
    pub truth: Option<String>,
    pub observation: Option<PathBuf>,
    pub output: PathBuf,
    /// Side of the centred section to use; the whole image when unset.
    pub n: Option<usize>,
    pub m: usize,
    pub psf: PsfKind,
    pub psf_radius: usize,
    pub psf_sigma: f64,
    pub motion_length: usize,
    pub motion_angle: f64,
    pub noise_std: f64,
    /// Noise precision; `1 / noise_std²` when unset.
    pub lambda: Option<f64>,
    pub delta: f64,
    pub epsilon: f64,
    pub sampler: SamplerChoice,
    pub n_chains: usize,
    pub n_saved: usize,
    pub thin: usize,
    pub burn_in: u64,
    pub target_accept: f64,
    pub initial_tau: f64,
    pub seed: u64,
    /// Worker threads; 0 picks the number of available cores.
    pub workers: usize,
    pub ci_level: f64,
    pub map_tol: f64,
    pub map_max_outer: usize,
    pub map_max_cg: usize,
    /// Also write PNG copies of every emitted image.
    pub png: bool,
    origins: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            truth: None,
            observation: None,
            output: PathBuf::from("out"),
            n: None,
            m: 32,
            psf: PsfKind::Gaussian,
            psf_radius: 8,
            psf_sigma: 8.0,
            motion_length: 17,
            motion_angle: 45.0,
            noise_std: 0.01,
            lambda: None,
            delta: 35.80,
            epsilon: 1e-5,
            sampler: SamplerChoice::MlwgParallel,
            n_chains: 5,
            n_saved: 2000,
            thin: 200,
            burn_in: 1000,
            target_accept: 0.547,
            initial_tau: 1e-4,
            seed: 0,
            workers: 0,
            ci_level: 0.9,
            map_tol: 1e-8,
            map_max_outer: 200,
            map_max_cg: 500,
            png: false,
            origins: BTreeMap::new(),
        }
    }
}

/// Every recognised key, in the order used by [`RunConfig::canonical`].
pub const KEYS: &[&str] = &[
    "truth",
    "observation",
    "output",
    "n",
    "m",
    "psf",
    "psf_radius",
    "psf_sigma",
    "motion_length",
    "motion_angle",
    "noise_std",
    "lambda",
    "delta",
    "epsilon",
    "sampler",
    "n_chains",
    "n_saved",
    "thin",
    "burn_in",
    "target_accept",
    "initial_tau",
    "seed",
    "workers",
    "ci_level",
    "map_tol",
    "map_max_outer",
    "map_max_cg",
    "png",
];

/// Keys that do not change results and are left out of the config hash.
const UNHASHED: &[&str] = &["output", "workers", "png"];

fn parse<T: FromStr>(key: &str, value: &str, origin: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        CliError::Validation(format!("{origin}: cannot parse `{value}` as a value for `{key}`"))
    })
}

impl RunConfig {
    /// Reads a config file. Blank lines and lines starting with `#` are
    /// ignored; every other line must be `key = value`.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, name: &str) -> Result<(), CliError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let origin = format!("{name}:{}", k + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("{origin}: expected `key = value`, found `{line}`"))
            })?;
            self.set(key.trim(), value.trim(), &origin)?;
        }
        Ok(())
    }

    /// Sets one key; `origin` names where the value came from and is
    /// quoted by later validation errors.
    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), CliError> {
        match key {
            "truth" => self.truth = Some(value.to_string()),
            "observation" => self.observation = Some(PathBuf::from(value)),
            "output" => self.output = PathBuf::from(value),
            "n" => self.n = Some(parse(key, value, origin)?),
            "m" => self.m = parse(key, value, origin)?,
            "psf" => {
                self.psf = match value {
                    "gaussian" => PsfKind::Gaussian,
                    "motion" => PsfKind::Motion,
                    "uniform" => PsfKind::Uniform,
                    "delta" => PsfKind::Delta,
                    _ => {
                        return Err(CliError::Validation(format!(
                            "{origin}: unknown psf `{value}` (gaussian | motion | uniform | delta)"
                        )))
                    }
                }
            }
            "psf_radius" => self.psf_radius = parse(key, value, origin)?,
            "psf_sigma" => self.psf_sigma = parse(key, value, origin)?,
            "motion_length" => self.motion_length = parse(key, value, origin)?,
            "motion_angle" => self.motion_angle = parse(key, value, origin)?,
            "noise_std" => self.noise_std = parse(key, value, origin)?,
            "lambda" => self.lambda = Some(parse(key, value, origin)?),
            "delta" => self.delta = parse(key, value, origin)?,
            "epsilon" => self.epsilon = parse(key, value, origin)?,
            "sampler" => {
                self.sampler = match value {
                    "mala" => SamplerChoice::Mala,
                    "mlwg" => SamplerChoice::Mlwg,
                    "mlwg-parallel" => SamplerChoice::MlwgParallel,
                    _ => {
                        return Err(CliError::Validation(format!(
                            "{origin}: unknown sampler `{value}` (mala | mlwg | mlwg-parallel)"
                        )))
                    }
                }
            }
            "n_chains" => self.n_chains = parse(key, value, origin)?,
            "n_saved" => self.n_saved = parse(key, value, origin)?,
            "thin" => self.thin = parse(key, value, origin)?,
            "burn_in" => self.burn_in = parse(key, value, origin)?,
            "target_accept" => self.target_accept = parse(key, value, origin)?,
            "initial_tau" => self.initial_tau = parse(key, value, origin)?,
            "seed" => self.seed = parse(key, value, origin)?,
            "workers" => self.workers = parse(key, value, origin)?,
            "ci_level" => self.ci_level = parse(key, value, origin)?,
            "map_tol" => self.map_tol = parse(key, value, origin)?,
            "map_max_outer" => self.map_max_outer = parse(key, value, origin)?,
            "map_max_cg" => self.map_max_cg = parse(key, value, origin)?,
            "png" => self.png = parse(key, value, origin)?,
            _ => return Err(CliError::Validation(format!("{origin}: unknown key `{key}`"))),
        }
        let slot = KEYS.iter().find(|k| **k == key).copied().unwrap_or("");
        self.origins.insert(slot, origin.to_string());
        Ok(())
    }

    fn origin(&self, key: &str) -> String {
        self.origins
            .get(key)
            .cloned()
            .unwrap_or_else(|| "default".to_string())
    }

    fn invalid(&self, key: &str, reason: impl fmt::Display) -> CliError {
        CliError::Validation(format!("{}: `{key}` {reason}", self.origin(key)))
    }

    pub fn build_psf(&self) -> CoreResult<Psf> {
        match self.psf {
            PsfKind::Gaussian => Psf::gaussian(self.psf_radius, self.psf_sigma),
            PsfKind::Motion => Psf::motion(self.motion_length, self.motion_angle),
            PsfKind::Uniform => Ok(Psf::uniform(self.psf_radius)),
            PsfKind::Delta => Ok(Psf::delta()),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
            .unwrap_or_else(|| 1.0 / (self.noise_std * self.noise_std))
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |p| p.get())
        }
    }

    /// Checks the operator-level keys against an image of side `n`.
    pub fn validate_geometry(&self, n: usize) -> Result<Psf, CliError> {
        let psf = self
            .build_psf()
            .map_err(|e| self.invalid("psf", format!("is invalid: {e}")))?;
        if n == 0 || !n.is_multiple_of(self.m) {
            return Err(self.invalid("m", format!("= {} does not divide n = {n}", self.m)));
        }
        if self.m <= 2 * psf.radius() {
            return Err(self.invalid(
                "m",
                format!("= {} must exceed twice the PSF radius {}", self.m, psf.radius()),
            ));
        }
        Ok(psf)
    }

    pub fn validate_noise(&self) -> Result<(), CliError> {
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(self.invalid("noise_std", "must be non-negative"));
        }
        Ok(())
    }

    /// Checks the posterior keys; `sampling` additionally requires `ε > 0`.
    pub fn validate_posterior(&self, sampling: bool) -> Result<(), CliError> {
        let lambda = self.lambda();
        if !(lambda > 0.0) || !lambda.is_finite() {
            let key = if self.lambda.is_some() { "lambda" } else { "noise_std" };
            return Err(self.invalid(key, "must give a positive finite noise precision"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(self.invalid("delta", "must be non-negative"));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(self.invalid("epsilon", "must be non-negative"));
        }
        if sampling && self.epsilon == 0.0 && self.delta > 0.0 {
            return Err(self.invalid("epsilon", "must be positive for sampling"));
        }
        Ok(())
    }

    pub fn validate_sampling(&self) -> Result<(), CliError> {
        self.validate_posterior(true)?;
        if self.n_chains == 0 {
            return Err(self.invalid("n_chains", "must be at least 1"));
        }
        if self.thin == 0 {
            return Err(self.invalid("thin", "must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(self.invalid("target_accept", "must lie in (0, 1)"));
        }
        if !(self.initial_tau > 0.0) || !self.initial_tau.is_finite() {
            return Err(self.invalid("initial_tau", "must be positive"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(self.invalid("ci_level", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let opt = |v: &Option<String>| v.clone().unwrap_or_default();
        match key {
            "truth" => opt(&self.truth),
            "observation" => self
                .observation
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "output" => self.output.display().to_string(),
            "n" => self.n.map(|v| v.to_string()).unwrap_or_default(),
            "m" => self.m.to_string(),
            "psf" => self.psf.to_string(),
            "psf_radius" => self.psf_radius.to_string(),
            "psf_sigma" => self.psf_sigma.to_string(),
            "motion_length" => self.motion_length.to_string(),
            "motion_angle" => self.motion_angle.to_string(),
            "noise_std" => self.noise_std.to_string(),
            "lambda" => self.lambda.map(|v| v.to_string()).unwrap_or_default(),
            "delta" => self.delta.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "sampler" => self.sampler.to_string(),
            "n_chains" => self.n_chains.to_string(),
            "n_saved" => self.n_saved.to_string(),
            "thin" => self.thin.to_string(),
            "burn_in" => self.burn_in.to_string(),
            "target_accept" => self.target_accept.to_string(),
            "initial_tau" => self.initial_tau.to_string(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "ci_level" => self.ci_level.to_string(),
            "map_tol" => self.map_tol.to_string(),
            "map_max_outer" => self.map_max_outer.to_string(),
            "map_max_cg" => self.map_max_cg.to_string(),
            "png" => self.png.to_string(),
            _ => String::new(),
        }
    }

    /// All keys with their effective values.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|k| (k.to_string(), self.value_of(k)))
            .collect()
    }

    /// SHA-256 over the result-relevant keys, one `key=value` line each.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for key in KEYS.iter().filter(|k| !UNHASHED.contains(k)) {
            h.update(format!("{key}={}\n", self.value_of(key)).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_protocol() {
        let c = RunConfig::default();
        assert_eq!((c.thin, c.n_chains, c.n_saved), (200, 5, 2000));
        assert_eq!(c.target_accept, 0.547);
        assert_eq!(c.delta, 35.80);
        assert_eq!(c.lambda(), 1e4);
    }

    #[test]
    fn text_parsing_and_line_numbers() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\n\nm = 16\nsampler = mala\n", "cfg").unwrap();
        assert_eq!(c.m, 16);
        assert_eq!(c.sampler, SamplerChoice::Mala);
        let err = c.apply_text("m = 8\nbogus = 1\n", "cfg").unwrap_err();
        assert!(err.to_string().starts_with("cfg:2:"), "{err}");
        let err = c.apply_text("thin = many\n", "cfg").unwrap_err();
        assert!(err.to_string().starts_with("cfg:1:"), "{err}");
    }

    #[test]
    fn geometry_errors_point_at_the_setting() {
        let mut c = RunConfig::default();
        c.apply_text("psf_radius = 4\nm = 24\n", "cfg").unwrap();
        let err = c.validate_geometry(64).unwrap_err();
        assert!(err.to_string().starts_with("cfg:2:"), "{err}");
        c.set("m", "8", "--m").unwrap();
        let err = c.validate_geometry(64).unwrap_err();
        assert!(err.to_string().contains("twice the PSF radius"), "{err}");
        c.set("m", "16", "--m").unwrap();
        assert!(c.validate_geometry(64).is_ok());
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.set("workers", "7", "x").unwrap();
        b.set("output", "elsewhere", "x").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "1", "x").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn sampling_needs_smoothing() {
        let mut c = RunConfig::default();
        c.set("epsilon", "0", "x").unwrap();
        assert!(c.validate_sampling().is_err());
        assert!(c.validate_posterior(false).is_ok());
    }
}
