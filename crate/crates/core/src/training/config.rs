use std::fmt;
use std::path::{Path, PathBuf};

use crate::data::{AugmentConfig, FlipAxis, Interp, SynthConfig};
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossKind, SimvaeMode};
use crate::numerics::DType;

/// Which data a run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Synth,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion_mnist",
            DatasetKind::Synth => "synth",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion_mnist" => Ok(DatasetKind::FashionMnist),
            "synth" => Ok(DatasetKind::Synth),
            _ => Err(Error::Config(format!("unknown dataset `{s}` (mnist, fashion_mnist or synth)"))),
        }
    }
}

/// Every setting of a training run. Written and read as flat
/// `key = value` text; see [`TrainConfig::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub mode: SimvaeMode,
    pub lr: f64,
    /// Sources per batch; each contributes `views` rows.
    pub batch_size: usize,
    pub epochs: usize,
    pub views: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them. Empty picks the
    /// dataset default.
    pub hidden: Vec<usize>,
    pub prior_var: f64,
    pub gamma2: f64,
    pub likelihood_var: f64,
    pub beta: f64,
    pub tau: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub dtype: DType,
    pub dataset: DatasetKind,
    /// IDX directory or synthetic container; empty uses the defaults.
    pub data_path: String,
    /// Keep only the first `n` training images (0 keeps all).
    pub train_subset: usize,
    pub binarize: bool,
    /// Lower bound of the crop area fraction; 1 disables cropping.
    pub crop_scale: f64,
    pub crop_ratio: (f64, f64),
    pub flip_p: f64,
    pub flip_axis: FlipAxis,
    pub interp: Interp,
    pub synth: SynthConfig,
    /// Run the kNN probe every `n` epochs (0 disables).
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Upper bound on `batch_size × views`; larger batches are shrunk.
    pub max_batch_rows: usize,
    /// Fill the metrics `seconds` column (breaks byte-identical reruns).
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Simvae,
            mode: SimvaeMode::ExactElbo,
            lr: 8e-5,
            batch_size: 128,
            epochs: 10,
            views: 10,
            latent_dim: 10,
            hidden: Vec::new(),
            prior_var: 0.15,
            gamma2: f64::INFINITY,
            likelihood_var: 0.02,
            beta: 1.0,
            tau: 0.7,
            mc_samples: 1,
            seed: 0,
            dtype: DType::F32,
            dataset: DatasetKind::Mnist,
            data_path: String::new(),
            train_subset: 0,
            binarize: true,
            crop_scale: 0.4,
            crop_ratio: (0.75, 1.3),
            flip_p: 0.5,
            flip_axis: FlipAxis::Horizontal,
            interp: Interp::Bilinear,
            synth: SynthConfig::default(),
            eval_every: 0,
            checkpoint_every: 1,
            max_batch_rows: 4096,
            log_wall_time: false,
        }
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => parse_num(key, v),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        v.to_string()
    }
}

impl TrainConfig {
    /// Keys in file order.
    pub const KEYS: [&'static str; 38] = [
        "loss",
        "mode",
        "lr",
        "batch_size",
        "epochs",
        "views",
        "latent_dim",
        "hidden",
        "prior_var",
        "gamma2",
        "likelihood_var",
        "beta",
        "tau",
        "mc_samples",
        "seed",
        "dtype",
        "dataset",
        "data_path",
        "train_subset",
        "binarize",
        "crop_scale",
        "crop_ratio",
        "flip_p",
        "flip_axis",
        "interp",
        "synth_classes",
        "synth_per_class",
        "synth_gamma",
        "synth_sigma",
        "synth_dz",
        "synth_dx",
        "synth_sigma_x",
        "synth_seed",
        "eval_every",
        "checkpoint_every",
        "max_batch_rows",
        "log_wall_time",
        "synth_views",
    ];

    /// Keys that may differ between a checkpoint and the run resuming it.
    pub const RESUMABLE: [&'static str; 5] = ["epochs", "eval_every", "checkpoint_every", "log_wall_time", "data_path"];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "loss" => self.loss = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "lr" => self.lr = parse_f64(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "views" => self.views = parse_num(key, v)?,
            "latent_dim" => self.latent_dim = parse_num(key, v)?,
            "hidden" => {
                self.hidden = if v.is_empty() || v == "default" {
                    Vec::new()
                } else {
                    v.split(',').map(|t| parse_num(key, t.trim())).collect::<Result<_>>()?
                }
            }
            "prior_var" => self.prior_var = parse_f64(key, v)?,
            "gamma2" => self.gamma2 = parse_f64(key, v)?,
            "likelihood_var" => self.likelihood_var = parse_f64(key, v)?,
            "beta" => self.beta = parse_f64(key, v)?,
            "tau" => self.tau = parse_f64(key, v)?,
            "mc_samples" => self.mc_samples = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "dtype" => {
                self.dtype = match v {
                    "f32" => DType::F32,
                    "f64" => DType::F64,
                    _ => return Err(Error::Config(format!("`dtype`: expected f32 or f64, got `{v}`"))),
                }
            }
            "dataset" => self.dataset = v.parse()?,
            "data_path" => self.data_path = v.to_string(),
            "train_subset" => self.train_subset = parse_num(key, v)?,
            "binarize" => self.binarize = parse_bool(key, v)?,
            "crop_scale" => self.crop_scale = parse_f64(key, v)?,
            "crop_ratio" => {
                let (a, b) = v
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("`crop_ratio`: expected lo,hi, got `{v}`")))?;
                self.crop_ratio = (parse_f64(key, a.trim())?, parse_f64(key, b.trim())?);
            }
            "flip_p" => self.flip_p = parse_f64(key, v)?,
            "flip_axis" => self.flip_axis = v.parse()?,
            "interp" => self.interp = v.parse()?,
            "synth_classes" => self.synth.c = parse_num(key, v)?,
            "synth_per_class" => self.synth.n_per_class = parse_num(key, v)?,
            "synth_gamma" => self.synth.gamma = parse_f64(key, v)?,
            "synth_sigma" => self.synth.sigma = parse_f64(key, v)?,
            "synth_dz" => self.synth.d_z = parse_num(key, v)?,
            "synth_dx" => self.synth.d_x = parse_num(key, v)?,
            "synth_sigma_x" => self.synth.sigma_x = parse_f64(key, v)?,
            "synth_seed" => self.synth.seed = parse_num(key, v)?,
            "synth_views" => self.synth.j = parse_num(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "max_batch_rows" => self.max_batch_rows = parse_num(key, v)?,
            "log_wall_time" => self.log_wall_time = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "loss" => self.loss.to_string(),
            "mode" => self.mode.to_string(),
            "lr" => fmt_f64(self.lr),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "views" => self.views.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "hidden" => {
                if self.hidden.is_empty() {
                    "default".into()
                } else {
                    self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
                }
            }
            "prior_var" => fmt_f64(self.prior_var),
            "gamma2" => fmt_f64(self.gamma2),
            "likelihood_var" => fmt_f64(self.likelihood_var),
            "beta" => fmt_f64(self.beta),
            "tau" => fmt_f64(self.tau),
            "mc_samples" => self.mc_samples.to_string(),
            "seed" => self.seed.to_string(),
            "dtype" => self.dtype.name().into(),
            "dataset" => self.dataset.name().into(),
            "data_path" => self.data_path.clone(),
            "train_subset" => self.train_subset.to_string(),
            "binarize" => self.binarize.to_string(),
            "crop_scale" => fmt_f64(self.crop_scale),
            "crop_ratio" => format!("{},{}", fmt_f64(self.crop_ratio.0), fmt_f64(self.crop_ratio.1)),
            "flip_p" => fmt_f64(self.flip_p),
            "flip_axis" => self.flip_axis.to_string(),
            "interp" => self.interp.to_string(),
            "synth_classes" => self.synth.c.to_string(),
            "synth_per_class" => self.synth.n_per_class.to_string(),
            "synth_gamma" => fmt_f64(self.synth.gamma),
            "synth_sigma" => fmt_f64(self.synth.sigma),
            "synth_dz" => self.synth.d_z.to_string(),
            "synth_dx" => self.synth.d_x.to_string(),
            "synth_sigma_x" => fmt_f64(self.synth.sigma_x),
            "synth_seed" => self.synth.seed.to_string(),
            "synth_views" => self.synth.j.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "max_batch_rows" => self.max_batch_rows.to_string(),
            "log_wall_time" => self.log_wall_time.to_string(),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        })
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("every listed key is known")))
            .collect()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: key `{k}` given twice", n + 1)));
            }
            c.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            kind: self.loss,
            mode: self.mode,
            prior_var: self.prior_var,
            gamma2: self.gamma2,
            likelihood_var: self.likelihood_var,
            beta: self.beta,
            tau: self.tau,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            crop_scale: (self.crop_scale < 1.0).then_some(self.crop_scale),
            crop_ratio: self.crop_ratio,
            flip_p: self.flip_p,
            flip_axis: self.flip_axis,
            interp: self.interp,
            binarize: self.binarize.then_some(0.5),
        }
    }

    /// Synthetic generator settings with one stored view per training view.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            j: self.synth.j.max(self.views),
            ..self.synth
        }
    }

    pub fn data_path(&self) -> Option<PathBuf> {
        (!self.data_path.is_empty()).then(|| PathBuf::from(&self.data_path))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("lr", self.lr),
            ("prior_var", self.prior_var),
            ("gamma2", self.gamma2),
            ("likelihood_var", self.likelihood_var),
            ("beta", self.beta),
            ("tau", self.tau),
        ];
        for (k, v) in pos {
            if !(v > 0.0) || v.is_nan() || (k != "gamma2" && !v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be positive, got {v}")));
            }
        }
        for (k, v) in [
            ("batch_size", self.batch_size),
            ("views", self.views),
            ("latent_dim", self.latent_dim),
            ("mc_samples", self.mc_samples),
            ("checkpoint_every", self.checkpoint_every),
            ("max_batch_rows", self.max_batch_rows),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be >= 1")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("`hidden` widths must be >= 1".into()));
        }
        if !(self.crop_scale > 0.0 && self.crop_scale <= 1.0) {
            return Err(Error::Config(format!("`crop_scale` must be in (0, 1], got {}", self.crop_scale)));
        }
        if !(self.crop_ratio.0 > 0.0 && self.crop_ratio.0 <= self.crop_ratio.1) {
            return Err(Error::Config(format!("`crop_ratio` {:?} is invalid", self.crop_ratio)));
        }
        if !(0.0..=1.0).contains(&self.flip_p) {
            return Err(Error::Config(format!("`flip_p` must be in [0, 1], got {}", self.flip_p)));
        }
        self.synth.validate()?;
        self.loss_config().validate(self.views)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
