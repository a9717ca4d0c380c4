//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [model]
//! preset = desk
//! mode = binary
//!
//! [train]
//! lr = 0.05
//! ```
//!
//! `#` starts a comment. Unknown sections or keys are rejected with their
//! line number. Command-line overrides use the same `section.key` names.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interpret::DEFAULT_PRM_LAYER;
use crate::metrics::JaccardMode;
use crate::model::{ArchConfig, Mode};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub mode: Mode,
    pub n_pfms: usize,
    pub train: TrainConfig,
    /// Validation share of the single train/validation split is `1 / holdout_folds`.
    pub holdout_folds: usize,
    pub prm_layer: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::desk(),
            mode: Mode::Binary,
            n_pfms: 4,
            train: TrainConfig::default(),
            holdout_folds: 5,
            prm_layer: DEFAULT_PRM_LAYER,
            output_dir: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "model.preset",
    "model.blocks",
    "model.kernel_size",
    "model.fc_width",
    "model.bn_momentum",
    "model.bn_epsilon",
    "model.mode",
    "model.n_pfms",
    "train.batch_size",
    "train.lr",
    "train.epochs",
    "train.seed",
    "train.augment",
    "train.folds",
    "train.holdout_folds",
    "train.jaccard",
    "pfm.side",
    "explain.prm_layer",
    "output.dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(format!("invalid value {value:?} for `{key}`, expected true or false"))),
    }
}

impl RunConfig {
    /// Applies one `section.key` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model.preset" => {
                self.arch = ArchConfig::preset(v)?;
                self.train.pfm_side = self.arch.input_side;
            }
            "model.blocks" => self.arch.blocks = ArchConfig::parse_blocks(v)?,
            "model.kernel_size" => self.arch.kernel_size = parse(key, v)?,
            "model.fc_width" => self.arch.fc_width = parse(key, v)?,
            "model.bn_momentum" => self.arch.bn_momentum = parse(key, v)?,
            "model.bn_epsilon" => self.arch.bn_epsilon = parse(key, v)?,
            "model.mode" => self.mode = v.parse().map_err(|e: Error| Error::config(e.to_string()))?,
            "model.n_pfms" => self.n_pfms = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.augment" => self.train.augment = parse_bool(key, v)?,
            "train.folds" => self.train.folds = parse(key, v)?,
            "train.holdout_folds" => self.holdout_folds = parse(key, v)?,
            "train.jaccard" => {
                self.train.jaccard = match v {
                    "token" => JaccardMode::Token,
                    "match-rate" => JaccardMode::MatchRate,
                    _ => return Err(Error::config(format!("`{key}` must be token or match-rate, got {v:?}"))),
                }
            }
            "pfm.side" => {
                let side = parse(key, v)?;
                self.arch.input_side = side;
                self.train.pfm_side = side;
            }
            "explain.prm_layer" => self.prm_layer = parse(key, v)?,
            "output.dir" => self.output_dir = Some(PathBuf::from(v)),
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `section.key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {assignment:?} is not `section.key=value`")))?;
        self.set(k.trim(), v)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !KEYS.iter().any(|k| k.split('.').next() == Some(name)) {
                    return Err(Error::config(format!("line {n}: unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {n}: expected `key = value`")))?;
            if section.is_empty() {
                return Err(Error::config(format!("line {n}: key outside of any section")));
            }
            let key = format!("{section}.{}", k.trim());
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(format!("line {n}: unknown key `{}` in [{section}]", k.trim())));
            }
            cfg.set(&key, v).map_err(|e| match e {
                Error::Config(m) => Error::config(format!("line {n}: {m}")),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        if self.arch.input_side != self.train.pfm_side {
            return Err(Error::config("model input side and feature-map side differ"));
        }
        if self.holdout_folds < 2 {
            return Err(Error::config("train.holdout_folds must be at least 2"));
        }
        if self.prm_layer == 0 || self.prm_layer > self.arch.conv_layers() {
            return Err(Error::config(format!(
                "explain.prm_layer must lie in 1..={}, got {}",
                self.arch.conv_layers(),
                self.prm_layer
            )));
        }
        Ok(())
    }

    /// The resolved configuration in file syntax.
    pub fn to_text(&self) -> String {
        let jaccard = match self.train.jaccard {
            JaccardMode::Token => "token",
            JaccardMode::MatchRate => "match-rate",
        };
        let mut s = format!(
            "[model]\npreset = {}\nblocks = {}\nkernel_size = {}\nfc_width = {}\nbn_momentum = {}\nbn_epsilon = {}\nmode = {}\nn_pfms = {}\n\n",
            self.arch.preset,
            self.arch.blocks_string(),
            self.arch.kernel_size,
            self.arch.fc_width,
            self.arch.bn_momentum,
            self.arch.bn_epsilon,
            self.mode,
            self.n_pfms
        );
        s += &format!(
            "[train]\nbatch_size = {}\nlr = {}\nepochs = {}\nseed = {}\naugment = {}\nfolds = {}\nholdout_folds = {}\njaccard = {jaccard}\n\n",
            self.train.batch_size,
            self.train.lr,
            self.train.epochs,
            self.train.seed,
            self.train.augment,
            self.train.folds,
            self.holdout_folds
        );
        s += &format!("[pfm]\nside = {}\n\n[explain]\nprm_layer = {}\n", self.arch.input_side, self.prm_layer);
        if let Some(dir) = &self.output_dir {
            s += &format!("\n[output]\ndir = {}\n", dir.display());
        }
        s
    }
}
