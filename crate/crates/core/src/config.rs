//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default (see [`ExperimentConfig::default`] and [`KEYS`]); unknown keys and
//! repeated keys are errors. Sizes given as `0` for `sgd_lr_t0`, `c_size`,
//! `w_size`, `w_step` and `svm_max_passes` mean "derive from the data".

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::featurestore::{SplitConfig, SynthConfig};
use crate::linear_sgd::SgdParams;
use crate::rbf_svm::{SmoParams, DEFAULT_GAMMA};
use crate::stream::{StreamEvalConfig, UpdatePolicy};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; run r uses derive(seed, [RUN, r])"),
    ("run_count", "independent runs"),
    ("output_dir", "directory for run outputs and reports"),
    ("dataset", "feature file to load; empty means synthesize"),
    ("svg", "write chart.svg with the report"),
    ("frozen_sgd", "also score the stream with the initial SGD model, never updated"),
    ("synth_writers", "synthetic writer count"),
    ("synth_genuine", "genuine signatures per synthetic writer"),
    ("synth_skilled", "skilled forgeries per synthetic writer"),
    ("synth_dim", "synthetic feature dimension"),
    ("synth_genuine_sigma", "genuine noise scale"),
    ("synth_skilled_offset", "length of the per-writer skilled forgery offset"),
    ("synth_skilled_sigma", "skilled forgery noise scale"),
    ("synth_drift_sigma", "std of the per-session log noise-scale drift per coordinate"),
    ("synth_dim_spread", "std of the per-coordinate log noise scale"),
    ("synth_writer_spread", "std of the per-writer, per-coordinate log noise scale"),
    ("synth_unstable_dims", "unstable coordinates per writer"),
    ("synth_unstable_factor", "noise multiplier of unstable coordinates"),
    ("synth_style_dims", "style coordinates per writer"),
    ("synth_style_scale", "mean offset of a writer on its style coordinates"),
    ("dev_users", "development users"),
    ("dev_genuine", "genuine signatures per development user (even)"),
    ("exploit_users", "exploitation users"),
    ("refs_per_user", "reference signatures per exploitation user"),
    ("claims_per_user", "claims of each kind per exploitation user (stream chunks)"),
    ("selection", "record selection: random or chronological"),
    ("svm_c", "SVM box constraint"),
    ("svm_gamma", "RBF kernel coefficient"),
    ("svm_tol", "SMO KKT tolerance"),
    ("svm_max_passes", "SMO pass limit, 0 for 10 * N"),
    ("svm_cache_mb", "kernel row cache budget in MiB"),
    ("sgd_c", "SGD regularization constant"),
    ("sgd_lr0", "SGD initial learning rate"),
    ("sgd_lr_t0", "SGD learning-rate decay constant, 0 for 10 * development set size"),
    ("sgd_epochs", "SGD passes over the development set"),
    ("sgd_center", "step the SGD bias on inputs centered at the development mean"),
    ("c_size", "claims tested between updates, 0 for 3 * exploit_users"),
    ("w_size", "window size in claims, 0 for 3 * exploit_users"),
    ("w_step", "window step in claims, 0 for exploit_users"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub run_count: usize,
    pub output_dir: PathBuf,
    pub dataset: Option<PathBuf>,
    pub svg: bool,
    pub frozen_sgd: bool,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub svm_c: f64,
    pub svm_gamma: f64,
    pub svm_tol: f64,
    pub svm_max_passes: usize,
    pub svm_cache_mb: usize,
    pub sgd_c: f64,
    pub sgd_lr0: f64,
    pub sgd_lr_t0: f64,
    pub sgd_epochs: usize,
    pub sgd_center: bool,
    pub c_size: usize,
    pub w_size: usize,
    pub w_step: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            run_count: 5,
            output_dir: PathBuf::from("shsv_out"),
            dataset: None,
            svg: true,
            frozen_sgd: false,
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            svm_c: 1.0,
            svm_gamma: DEFAULT_GAMMA,
            svm_tol: 1e-3,
            svm_max_passes: 0,
            svm_cache_mb: 256,
            sgd_c: 1e-4,
            sgd_lr0: 1e-2,
            sgd_lr_t0: 0.0,
            sgd_epochs: 5,
            sgd_center: true,
            c_size: 0,
            w_size: 0,
            w_step: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "run_count" => self.run_count = parse(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "svg" => self.svg = parse_bool(key, v)?,
            "frozen_sgd" => self.frozen_sgd = parse_bool(key, v)?,
            "synth_writers" => self.synth.writer_count = parse(key, v)?,
            "synth_genuine" => self.synth.genuine_per_writer = parse(key, v)?,
            "synth_skilled" => self.synth.skilled_per_writer = parse(key, v)?,
            "synth_dim" => self.synth.dim = parse(key, v)?,
            "synth_genuine_sigma" => self.synth.genuine_noise_sigma = parse(key, v)?,
            "synth_skilled_offset" => self.synth.skilled_offset_scale = parse(key, v)?,
            "synth_skilled_sigma" => self.synth.skilled_noise_sigma = parse(key, v)?,
            "synth_drift_sigma" => self.synth.drift_velocity_sigma = parse(key, v)?,
            "synth_dim_spread" => self.synth.dim_noise_spread = parse(key, v)?,
            "synth_writer_spread" => self.synth.writer_noise_spread = parse(key, v)?,
            "synth_unstable_dims" => self.synth.unstable_dims_per_writer = parse(key, v)?,
            "synth_unstable_factor" => self.synth.unstable_dim_factor = parse(key, v)?,
            "synth_style_dims" => self.synth.style_dims_per_writer = parse(key, v)?,
            "synth_style_scale" => self.synth.style_scale = parse(key, v)?,
            "dev_users" => self.split.dev_user_count = parse(key, v)?,
            "dev_genuine" => self.split.dev_genuine_per_user = parse(key, v)?,
            "exploit_users" => self.split.exploit_user_count = parse(key, v)?,
            "refs_per_user" => self.split.refs_per_user = parse(key, v)?,
            "claims_per_user" => self.split.claims_per_user = parse(key, v)?,
            "selection" => self.split.selection = v.parse()?,
            "svm_c" => self.svm_c = parse(key, v)?,
            "svm_gamma" => self.svm_gamma = parse(key, v)?,
            "svm_tol" => self.svm_tol = parse(key, v)?,
            "svm_max_passes" => self.svm_max_passes = parse(key, v)?,
            "svm_cache_mb" => self.svm_cache_mb = parse(key, v)?,
            "sgd_c" => self.sgd_c = parse(key, v)?,
            "sgd_lr0" => self.sgd_lr0 = parse(key, v)?,
            "sgd_lr_t0" => self.sgd_lr_t0 = parse(key, v)?,
            "sgd_epochs" => self.sgd_epochs = parse(key, v)?,
            "sgd_center" => self.sgd_center = parse_bool(key, v)?,
            "c_size" => self.c_size = parse(key, v)?,
            "w_size" => self.w_size = parse(key, v)?,
            "w_step" => self.w_step = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parse config text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_count == 0 {
            return Err(Error::Config("run_count must be >= 1".into()));
        }
        if self.sgd_lr_t0 < 0.0 || !self.sgd_lr_t0.is_finite() {
            return Err(Error::Config("sgd_lr_t0 must be >= 0".into()));
        }
        if self.dataset.is_none() {
            self.synth.validate()?;
        }
        self.split.validate()?;
        self.sgd_params(1)?;
        self.smo_params().validate()?;
        if self.w_step > 0 && self.w_step > self.window_size() {
            return Err(Error::Config(format!(
                "w_step ({}) must not exceed w_size ({})",
                self.w_step,
                self.window_size()
            )));
        }
        Ok(())
    }

    /// SGD parameters for a development set of `dev_len` samples.
    pub fn sgd_params(&self, dev_len: usize) -> Result<SgdParams> {
        let p = SgdParams {
            c: self.sgd_c,
            lr0: self.sgd_lr0,
            lr_t0: if self.sgd_lr_t0 > 0.0 {
                self.sgd_lr_t0
            } else {
                10.0 * dev_len.max(1) as f64
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn smo_params(&self) -> SmoParams {
        SmoParams {
            c: self.svm_c,
            gamma: self.svm_gamma,
            tol: self.svm_tol,
            max_passes: (self.svm_max_passes > 0).then_some(self.svm_max_passes),
            cache_bytes: self.svm_cache_mb << 20,
            record_dual: false,
        }
    }

    fn chunk_len(&self) -> usize {
        3 * self.split.exploit_user_count.max(1)
    }

    fn window_size(&self) -> usize {
        if self.w_size > 0 {
            self.w_size
        } else {
            self.chunk_len()
        }
    }

    pub fn stream_config(&self, seed: u64, policy: UpdatePolicy) -> StreamEvalConfig {
        let defaults = StreamEvalConfig::for_users(self.split.exploit_user_count);
        StreamEvalConfig {
            c_size: if self.c_size > 0 { self.c_size } else { defaults.c_size },
            w_size: self.window_size(),
            w_step: if self.w_step > 0 { self.w_step } else { defaults.w_step },
            run_count: self.run_count,
            seed,
            policy,
            history_limit: 0,
        }
    }

    /// The configuration as text, every key present.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, doc) in KEYS {
            let value = self.get(key);
            writeln!(out, "# {doc}\n{key} = {value}").unwrap();
        }
        out
    }

    fn get(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "run_count" => self.run_count.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "dataset" => self
                .dataset
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "svg" => self.svg.to_string(),
            "frozen_sgd" => self.frozen_sgd.to_string(),
            "synth_writers" => self.synth.writer_count.to_string(),
            "synth_genuine" => self.synth.genuine_per_writer.to_string(),
            "synth_skilled" => self.synth.skilled_per_writer.to_string(),
            "synth_dim" => self.synth.dim.to_string(),
            "synth_genuine_sigma" => self.synth.genuine_noise_sigma.to_string(),
            "synth_skilled_offset" => self.synth.skilled_offset_scale.to_string(),
            "synth_skilled_sigma" => self.synth.skilled_noise_sigma.to_string(),
            "synth_drift_sigma" => self.synth.drift_velocity_sigma.to_string(),
            "synth_dim_spread" => self.synth.dim_noise_spread.to_string(),
            "synth_writer_spread" => self.synth.writer_noise_spread.to_string(),
            "synth_unstable_dims" => self.synth.unstable_dims_per_writer.to_string(),
            "synth_unstable_factor" => self.synth.unstable_dim_factor.to_string(),
            "synth_style_dims" => self.synth.style_dims_per_writer.to_string(),
            "synth_style_scale" => self.synth.style_scale.to_string(),
            "dev_users" => self.split.dev_user_count.to_string(),
            "dev_genuine" => self.split.dev_genuine_per_user.to_string(),
            "exploit_users" => self.split.exploit_user_count.to_string(),
            "refs_per_user" => self.split.refs_per_user.to_string(),
            "claims_per_user" => self.split.claims_per_user.to_string(),
            "selection" => self.split.selection.to_string(),
            "svm_c" => self.svm_c.to_string(),
            "svm_gamma" => self.svm_gamma.to_string(),
            "svm_tol" => self.svm_tol.to_string(),
            "svm_max_passes" => self.svm_max_passes.to_string(),
            "svm_cache_mb" => self.svm_cache_mb.to_string(),
            "sgd_c" => self.sgd_c.to_string(),
            "sgd_lr0" => self.sgd_lr0.to_string(),
            "sgd_lr_t0" => self.sgd_lr_t0.to_string(),
            "sgd_epochs" => self.sgd_epochs.to_string(),
            "sgd_center" => self.sgd_center.to_string(),
            "c_size" => self.c_size.to_string(),
            "w_size" => self.w_size.to_string(),
            "w_step" => self.w_step.to_string(),
            _ => unreachable!("key list and getter out of sync: {key}"),
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
