//! Run configuration: a flat key=value view over model choice, training
//! hyperparameters, data paths and synthesis parameters.
//!
//! Files hold one `key=value` per line; blank lines and `#` comments are
//! skipped. An empty value clears an optional field. [`RunConfig::render`]
//! writes every key so an echoed file is enough to rerun a command.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::Split;
use crate::error::{Error, Result};
pub use crate::model::DEFAULT_STRIDE;
use crate::model::{Arch, ModelSpec, Scale, TemporalMode};
use crate::synth::SynthConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Arch,
    pub s: Option<usize>,
    pub mode: Option<TemporalMode>,
    pub tiny: bool,
    pub seed: u64,
    pub threads: Option<usize>,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub max_halvings: usize,
    pub shuffle: bool,

    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub split: Split,

    pub s_values: Vec<usize>,
    pub parallel: bool,

    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub frames: usize,
    pub blob_sigma: Option<f64>,
    pub smoothing: usize,
    pub noise_std: f64,
    pub velocity_weight: f64,
    pub fps: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let g = SynthConfig::default();
        RunConfig {
            model: Arch::Cnn3d,
            s: None,
            mode: None,
            tiny: false,
            seed: 0,
            threads: None,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience_epochs: t.patience_epochs,
            max_halvings: t.max_halvings,
            shuffle: t.shuffle,
            manifest: None,
            out: None,
            checkpoint: None,
            stats: None,
            split: Split::Dev,
            s_values: vec![1, 2, 3],
            parallel: false,
            n_train: g.n_train,
            n_dev: g.n_dev,
            n_test: g.n_test,
            frames: g.frames,
            blob_sigma: None,
            smoothing: g.smoothing,
            noise_std: g.noise_std,
            velocity_weight: g.velocity_weight,
            fps: g.fps,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Usage(format!("config key `{key}`: cannot parse `{value}`: {e}")))
}

fn parse_opt<V: FromStr>(key: &str, value: &str) -> Result<Option<V>>
where
    V::Err: Display,
{
    if value.is_empty() {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn opt_str<V: Display>(v: &Option<V>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|x| x.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn scale(&self) -> Scale {
        if self.tiny {
            Scale::Tiny
        } else {
            Scale::Full
        }
    }

    /// Sets one key. Unknown keys are usage errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = parse_value(key, v)?,
            "s" => self.s = parse_opt(key, v)?,
            "mode" => self.mode = parse_opt(key, v)?,
            "tiny" => self.tiny = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "threads" => self.threads = parse_opt(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "max_epochs" => self.max_epochs = parse_value(key, v)?,
            "patience_epochs" => self.patience_epochs = parse_value(key, v)?,
            "max_halvings" => self.max_halvings = parse_value(key, v)?,
            "shuffle" => self.shuffle = parse_value(key, v)?,
            "manifest" => self.manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            "checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            "stats" => self.stats = (!v.is_empty()).then(|| PathBuf::from(v)),
            "split" => self.split = parse_value(key, v)?,
            "s_values" => self.s_values = parse_list(key, v)?,
            "parallel" => self.parallel = parse_value(key, v)?,
            "n_train" => self.n_train = parse_value(key, v)?,
            "n_dev" => self.n_dev = parse_value(key, v)?,
            "n_test" => self.n_test = parse_value(key, v)?,
            "frames" => self.frames = parse_value(key, v)?,
            "blob_sigma" => self.blob_sigma = parse_opt(key, v)?,
            "smoothing" => self.smoothing = parse_value(key, v)?,
            "noise_std" => self.noise_std = parse_value(key, v)?,
            "velocity_weight" => self.velocity_weight = parse_value(key, v)?,
            "fps" => self.fps = parse_value(key, v)?,
            _ => return Err(Error::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Usage(format!(
                    "config line {}: expected key=value, got `{line}`",
                    lineno + 1
                ))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        let s_values: Vec<String> = self.s_values.iter().map(|s| s.to_string()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("model", self.model.to_string()),
            ("s", opt_str(&self.s)),
            ("mode", opt_str(&self.mode)),
            ("tiny", self.tiny.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", opt_str(&self.threads)),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience_epochs", self.patience_epochs.to_string()),
            ("max_halvings", self.max_halvings.to_string()),
            ("shuffle", self.shuffle.to_string()),
            ("manifest", opt_path(&self.manifest)),
            ("out", opt_path(&self.out)),
            ("checkpoint", opt_path(&self.checkpoint)),
            ("stats", opt_path(&self.stats)),
            ("split", self.split.to_string()),
            ("s_values", s_values.join(",")),
            ("parallel", self.parallel.to_string()),
            ("n_train", self.n_train.to_string()),
            ("n_dev", self.n_dev.to_string()),
            ("n_test", self.n_test.to_string()),
            ("frames", self.frames.to_string()),
            (
                "blob_sigma",
                self.blob_sigma
                    .map(|x| format!("{x:?}"))
                    .unwrap_or_default(),
            ),
            ("smoothing", self.smoothing.to_string()),
            ("noise_std", format!("{:?}", self.noise_std)),
            ("velocity_weight", format!("{:?}", self.velocity_weight)),
            ("fps", format!("{:?}", self.fps)),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// Builds the model spec, rejecting stride/mode for architectures without
    /// a temporal axis.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let (s, mode) = match self.model {
            Arch::Cnn3d => (
                Some(self.s.unwrap_or(DEFAULT_STRIDE)),
                Some(self.mode.unwrap_or(TemporalMode::Sampled)),
            ),
            _ => (self.s, self.mode),
        };
        ModelSpec::for_arch(self.model, self.scale(), s, mode)
    }

    /// Spec for a cnn3d with stride `s`, all other choices as configured.
    pub fn cnn3d_spec(&self, s: usize) -> Result<ModelSpec> {
        ModelSpec::cnn3d(self.scale(), s, self.mode.unwrap_or(TemporalMode::Sampled))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience_epochs: self.patience_epochs,
            max_halvings: self.max_halvings,
            max_epochs: self.max_epochs,
            seed: self.seed,
            shuffle: self.shuffle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let base = if self.tiny {
            SynthConfig::tiny()
        } else {
            SynthConfig::default()
        };
        let cfg = SynthConfig {
            seed: self.seed,
            n_train: self.n_train,
            n_dev: self.n_dev,
            n_test: self.n_test,
            frames: self.frames,
            blob_sigma: self.blob_sigma.unwrap_or(base.blob_sigma),
            smoothing: self.smoothing,
            noise_std: self.noise_std,
            velocity_weight: self.velocity_weight,
            fps: self.fps,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| {
            Error::Usage("a dataset manifest is required (--data or manifest=)".into())
        })
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Usage("an output directory is required (--out or out=)".into()))
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|x| parse_value(key, x.trim()))
        .collect()
}
