//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors.
//! Keys not given keep their defaults.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// global gradient-norm limit
    pub grad_clip: Option<f64>,
    pub augment: bool,
    /// probability threshold for validation masks
    pub threshold: f64,
    /// stop after this many optimizer steps
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            lr: 1e-3,
            weight_decay: 0.01,
            plateau_patience: 5,
            plateau_factor: 0.5,
            early_stop_patience: 50,
            grad_clip: None,
            augment: true,
            threshold: 0.5,
            max_steps: None,
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patiences must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must be in (0, 1)");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must be in (0, 1)");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

/// Model and training settings of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse_bool(k: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{k}: expected a boolean, got {v:?}"))),
    }
}

fn parse_num<N: std::str::FromStr>(k: &str, v: &str) -> Result<N> {
    v.parse()
        .map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
}

fn parse_list<N: std::str::FromStr + Copy, const K: usize>(k: &str, v: &str) -> Result<[N; K]> {
    let items: Vec<N> = v
        .split(',')
        .map(|s| parse_num(k, s.trim()))
        .collect::<Result<_>>()?;
    items
        .try_into()
        .map_err(|_| Error::Config(format!("{k}: expected {K} comma-separated values")))
}

fn parse_opt<N: std::str::FromStr>(k: &str, v: &str) -> Result<Option<N>> {
    if v == "none" {
        Ok(None)
    } else {
        parse_num(k, v).map(Some)
    }
}

fn join<N: ToString>(xs: &[N]) -> String {
    xs.iter().map(N::to_string).collect::<Vec<_>>().join(",")
}

fn opt<N: ToString>(x: &Option<N>) -> String {
    x.as_ref().map_or("none".into(), N::to_string)
}

impl RunConfig {
    /// Apply one `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, v) = (key.trim(), value.trim());
        let m = &mut self.model;
        let t = &mut self.train;
        match k {
            "c0" => m.c0 = parse_num(k, v)?,
            "height" => m.height = parse_num(k, v)?,
            "width" => m.width = parse_num(k, v)?,
            "in_channels" => m.in_channels = parse_num(k, v)?,
            "num_classes" => m.num_classes = parse_num(k, v)?,
            "use_mdb" => m.use_mdb = parse_bool(k, v)?,
            "use_mub" => m.use_mub = parse_bool(k, v)?,
            "use_mab" => m.use_mab = parse_bool(k, v)?,
            "gam_dilations" => m.gam_dilations = parse_list(k, v)?,
            "ghpa_grid" => m.ghpa_grid = parse_num(k, v)?,
            "lambda" => m.lambda = parse_list(k, v)?,
            "model_seed" => m.seed = parse_num(k, v)?,
            "epochs" => t.epochs = parse_num(k, v)?,
            "batch_size" => t.batch_size = parse_num(k, v)?,
            "lr" => t.lr = parse_num(k, v)?,
            "weight_decay" => t.weight_decay = parse_num(k, v)?,
            "plateau_patience" => t.plateau_patience = parse_num(k, v)?,
            "plateau_factor" => t.plateau_factor = parse_num(k, v)?,
            "early_stop_patience" => t.early_stop_patience = parse_num(k, v)?,
            "grad_clip" => t.grad_clip = parse_opt(k, v)?,
            "augment" => t.augment = parse_bool(k, v)?,
            "threshold" => t.threshold = parse_num(k, v)?,
            "max_steps" => t.max_steps = parse_opt(k, v)?,
            "train_seed" => t.seed = parse_num(k, v)?,
            "checkpoint_dir" => t.checkpoint_dir = (v != "none").then(|| PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown config key {k:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the lines of `text`, then validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1))
            })?;
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn model_text(&self) -> String {
        let m = &self.model;
        format!(
            "c0={}\nheight={}\nwidth={}\nin_channels={}\nnum_classes={}\nuse_mdb={}\nuse_mub={}\nuse_mab={}\ngam_dilations={}\nghpa_grid={}\nlambda={}\nmodel_seed={}\n",
            m.c0,
            m.height,
            m.width,
            m.in_channels,
            m.num_classes,
            m.use_mdb,
            m.use_mub,
            m.use_mab,
            join(&m.gam_dilations),
            m.ghpa_grid,
            join(&m.lambda),
            m.seed
        )
    }

    /// Every key, one per line; [`RunConfig::parse`] inverts it.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        format!(
            "{}epochs={}\nbatch_size={}\nlr={}\nweight_decay={}\nplateau_patience={}\nplateau_factor={}\nearly_stop_patience={}\ngrad_clip={}\naugment={}\nthreshold={}\nmax_steps={}\ntrain_seed={}\ncheckpoint_dir={}\n",
            self.model_text(),
            t.epochs,
            t.batch_size,
            t.lr,
            t.weight_decay,
            t.plateau_patience,
            t.plateau_factor,
            t.early_stop_patience,
            opt(&t.grad_clip),
            t.augment,
            t.threshold,
            opt(&t.max_steps),
            t.seed,
            t.checkpoint_dir.as_ref().map_or("none".into(), |p| p.display().to_string()),
        )
    }

    /// SHA-256 of the architecture settings; checkpoints are only loadable
    /// into a model with the same fingerprint.
    pub fn fingerprint(&self) -> String {
        model_fingerprint(&self.model)
    }
}

pub fn model_fingerprint(model: &ModelConfig) -> String {
    let text = RunConfig {
        model: model.clone(),
        train: TrainConfig::default(),
    }
    .model_text();
    hex::encode(Sha256::digest(text.as_bytes()))
}
