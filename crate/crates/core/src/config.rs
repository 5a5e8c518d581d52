//! Run configuration: flat `key = value` files with `#` comments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::data::{load_corpus, subsample, synth_generate, ImageCorpus, SynthDomain, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{ArchConfig, Head, ModelPartition};
use crate::modulation::Scheme;

/// Training/transfer regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Tailored head, everything trainable, random init.
    Scratch,
    /// Source architecture initialized from the checkpoint, all trainable.
    FinetuneAll,
    /// Source-shaped head reinitialized, general part frozen.
    GpHead,
    /// Tailored head, general part frozen, no modulation.
    SmallHead,
    /// Tailored head, general part frozen and AdaFM-modulated.
    AdaFm,
    /// As `AdaFm` with rank-one filter selection.
    Fs,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Scratch, Mode::FinetuneAll, Mode::GpHead, Mode::SmallHead, Mode::AdaFm, Mode::Fs];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Scratch => "scratch",
            Mode::FinetuneAll => "finetune_all",
            Mode::GpHead => "gphead",
            Mode::SmallHead => "smallhead",
            Mode::AdaFm => "adafm",
            Mode::Fs => "fs",
        }
    }

    pub fn head(self) -> Head {
        match self {
            Mode::FinetuneAll | Mode::GpHead => Head::Large,
            _ => Head::Tailored,
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            Mode::AdaFm => Scheme::AdaFm,
            Mode::Fs => Scheme::Fs,
            _ => Scheme::None,
        }
    }

    /// Whether the general part is frozen (the partition applies).
    pub fn freezes(self) -> bool {
        matches!(self, Mode::GpHead | Mode::SmallHead | Mode::AdaFm | Mode::Fs)
    }

    /// Whether parameters are copied from a source checkpoint.
    pub fn uses_source(self) -> bool {
        self != Mode::Scratch
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected one of scratch, finetune_all, gphead, smallhead, adafm, fs)")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpMode {
    /// R1 on real samples only.
    RealOnly,
    /// Penalty on both real and generated samples (extreme-limited regime).
    RealAndFake,
}

impl FromStr for GpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_only" => Ok(GpMode::RealOnly),
            "real_and_fake" => Ok(GpMode::RealAndFake),
            _ => Err(Error::Config(format!("unknown gp_mode {s:?}"))),
        }
    }
}

impl fmt::Display for GpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GpMode::RealOnly => "real_only",
            GpMode::RealAndFake => "real_and_fake",
        })
    }
}

/// Where training images come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synthetic { domain: SynthDomain, count: usize, seed: u64 },
    Directory(String),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic { domain, .. } => write!(f, "synthetic:{}", domain.name()),
            DataSource::Directory(d) => write!(f, "dir:{d}"),
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(d) = s.strip_prefix("synthetic:") {
            Ok(DataSource::Synthetic { domain: d.parse()?, count: 5000, seed: 0 })
        } else if let Some(d) = s.strip_prefix("dir:") {
            Ok(DataSource::Directory(d.to_string()))
        } else {
            Err(Error::Config(format!("data must be synthetic:<domain> or dir:<path>, got {s:?}")))
        }
    }
}

/// All hyperparameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub r1_gamma: f64,
    pub gp_mode: GpMode,
    pub gp_gamma_extreme: f64,
    pub total_iters: usize,
    /// `None` means `total_iters / 6`.
    pub warmup_iters: Option<usize>,
    pub gm: usize,
    pub dn: usize,
    pub arch: ArchConfig,
    pub grayscale: bool,
    pub data: DataSource,
    pub limit_n: Option<usize>,
    pub subsample_seed: u64,
    pub pfid_every: usize,
    pub pfid_samples: usize,
    pub eval_seed: u64,
    pub monitor_window: usize,
    pub sample_every: usize,
    pub checkpoint_every: usize,
    /// Fill the wall_ms metrics column; off keeps metrics byte-reproducible.
    pub record_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::AdaFm,
            seed: 0,
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.99,
            adam_eps: 1e-8,
            batch: 16,
            r1_gamma: 10.0,
            gp_mode: GpMode::RealOnly,
            gp_gamma_extreme: 20.0,
            total_iters: 6000,
            warmup_iters: None,
            gm: 4,
            dn: 2,
            arch: ArchConfig::default(),
            grayscale: false,
            data: DataSource::Synthetic { domain: SynthDomain::TargetShapes, count: 5000, seed: 0 },
            limit_n: None,
            subsample_seed: 0,
            pfid_every: 500,
            pfid_samples: 2000,
            eval_seed: 0xE7A1,
            monitor_window: 100,
            sample_every: 0,
            checkpoint_every: 0,
            record_time: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

impl RunConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_iters.unwrap_or(self.total_iters / 6)
    }

    pub fn partition(&self) -> ModelPartition {
        ModelPartition::new(self.gm, self.dn)
    }

    /// Architecture with the channel count implied by `grayscale`.
    pub fn arch(&self) -> ArchConfig {
        ArchConfig { image_channels: if self.grayscale { 1 } else { 3 }, ..self.arch.clone() }
    }

    /// Loads or renders the configured corpus at the model resolution, then
    /// applies the grayscale variant and the `limit_n` subsample.
    pub fn load_data(&self) -> Result<ImageCorpus> {
        let size = self.arch.resolution;
        let corpus = match &self.data {
            DataSource::Synthetic { domain, count, seed } => {
                let c = synth_generate(&SyntheticSpec { domain: *domain, count: *count, seed: *seed, size })?;
                if self.grayscale { c.to_grayscale() } else { c }
            }
            DataSource::Directory(dir) => load_corpus(Path::new(dir), size, self.grayscale)?,
        };
        match self.limit_n {
            Some(n) => subsample(&corpus, n, self.subsample_seed),
            None => Ok(corpus),
        }
    }

    /// Extreme-limited regime: 25 images, 4-D latent, both-sides GP at γ = 20.
    pub fn extreme25(mut self) -> Self {
        self.limit_n = Some(25);
        self.arch.latent_dim = 4;
        self.gp_mode = GpMode::RealAndFake;
        self
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "mode" => self.mode = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "r1_gamma" => self.r1_gamma = parse(key, v)?,
            "gp_mode" => self.gp_mode = v.parse()?,
            "gp_gamma_extreme" => self.gp_gamma_extreme = parse(key, v)?,
            "total_iters" => self.total_iters = parse(key, v)?,
            "warmup_iters" => self.warmup_iters = if v == "auto" { None } else { Some(parse(key, v)?) },
            "gm" => self.gm = parse(key, v)?,
            "dn" => self.dn = parse(key, v)?,
            "resolution" => self.arch.resolution = parse(key, v)?,
            "latent_dim" => self.arch.latent_dim = parse(key, v)?,
            "style_dim" => self.arch.style_dim = parse(key, v)?,
            "mapping_depth" => self.arch.mapping_depth = parse(key, v)?,
            "base_width" => self.arch.base_width = parse(key, v)?,
            "max_width" => self.arch.max_width = parse(key, v)?,
            "blocks_per_group" => self.arch.blocks_per_group = parse(key, v)?,
            "grayscale" => self.grayscale = parse_bool(key, v)?,
            "data" => {
                let (count, seed) = match &self.data {
                    DataSource::Synthetic { count, seed, .. } => (*count, *seed),
                    DataSource::Directory(_) => (5000, 0),
                };
                self.data = match v.parse()? {
                    DataSource::Synthetic { domain, .. } => DataSource::Synthetic { domain, count, seed },
                    d => d,
                };
            }
            "synth_count" | "synth_seed" => match &mut self.data {
                DataSource::Synthetic { count, seed, .. } => {
                    if key == "synth_count" {
                        *count = parse(key, v)?;
                    } else {
                        *seed = parse(key, v)?;
                    }
                }
                DataSource::Directory(_) => return Err(Error::Config(format!("{key} only applies to synthetic data"))),
            },
            "limit_n" => self.limit_n = if v == "none" { None } else { Some(parse(key, v)?) },
            "subsample_seed" => self.subsample_seed = parse(key, v)?,
            "pfid_every" => self.pfid_every = parse(key, v)?,
            "pfid_samples" => self.pfid_samples = parse(key, v)?,
            "eval_seed" => self.eval_seed = parse(key, v)?,
            "monitor_window" => self.monitor_window = parse(key, v)?,
            "sample_every" => self.sample_every = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "record_time" => self.record_time = parse_bool(key, v)?,
            "regime" => match v {
                "extreme25" => *self = self.clone().extreme25(),
                "standard" => {}
                _ => return Err(Error::Config(format!("unknown regime {v:?}"))),
            },
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch().validate()?;
        let pos = [("lr", self.lr), ("r1_gamma", self.r1_gamma), ("gp_gamma_extreme", self.gp_gamma_extreme), ("adam_eps", self.adam_eps)];
        if let Some((k, _)) = pos.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch == 0 || self.total_iters == 0 || self.monitor_window == 0 {
            return Err(Error::Config("batch, total_iters and monitor_window must be positive".into()));
        }
        if self.warmup() > self.total_iters {
            return Err(Error::Config(format!("warmup_iters {} exceeds total_iters {}", self.warmup(), self.total_iters)));
        }
        if self.limit_n == Some(0) {
            return Err(Error::Config("limit_n must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces this configuration.
    pub fn to_text(&self) -> String {
        let a = &self.arch;
        let mut lines = vec![
            format!("mode = {}", self.mode),
            format!("seed = {}", self.seed),
            format!("lr = {:?}", self.lr),
            format!("beta1 = {:?}", self.beta1),
            format!("beta2 = {:?}", self.beta2),
            format!("adam_eps = {:?}", self.adam_eps),
            format!("batch = {}", self.batch),
            format!("r1_gamma = {:?}", self.r1_gamma),
            format!("gp_mode = {}", self.gp_mode),
            format!("gp_gamma_extreme = {:?}", self.gp_gamma_extreme),
            format!("total_iters = {}", self.total_iters),
            format!("warmup_iters = {}", self.warmup()),
            format!("gm = {}", self.gm),
            format!("dn = {}", self.dn),
            format!("resolution = {}", a.resolution),
            format!("latent_dim = {}", a.latent_dim),
            format!("style_dim = {}", a.style_dim),
            format!("mapping_depth = {}", a.mapping_depth),
            format!("base_width = {}", a.base_width),
            format!("max_width = {}", a.max_width),
            format!("blocks_per_group = {}", a.blocks_per_group),
            format!("grayscale = {}", self.grayscale),
            format!("data = {}", self.data),
        ];
        if let DataSource::Synthetic { count, seed, .. } = &self.data {
            lines.push(format!("synth_count = {count}"));
            lines.push(format!("synth_seed = {seed}"));
        }
        lines.extend([
            format!("limit_n = {}", self.limit_n.map_or("none".to_string(), |n| n.to_string())),
            format!("subsample_seed = {}", self.subsample_seed),
            format!("pfid_every = {}", self.pfid_every),
            format!("pfid_samples = {}", self.pfid_samples),
            format!("eval_seed = {}", self.eval_seed),
            format!("monitor_window = {}", self.monitor_window),
            format!("sample_every = {}", self.sample_every),
            format!("checkpoint_every = {}", self.checkpoint_every),
            format!("record_time = {}", self.record_time),
        ]);
        lines.join("\n") + "\n"
    }
}
