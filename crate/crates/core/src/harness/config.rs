//! `key=value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::config::{parse, NedbConfig};

/// Where training reads edge targets from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeSource {
    /// The manifest's edge column, falling back to the mask when absent.
    Manifest,
    /// Always derive edges from the region mask with the configured element.
    Mask,
}

impl std::str::FromStr for EdgeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manifest" => Ok(EdgeSource::Manifest),
            "mask" => Ok(EdgeSource::Mask),
            other => Err(Error::Config(format!("edge_source must be manifest or mask, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for EdgeSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EdgeSource::Manifest => "manifest",
            EdgeSource::Mask => "mask",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: NedbConfig,
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rates after each milestone.
    pub lr_decay: Vec<f64>,
    /// Milestones as fractions of `steps`.
    pub lr_milestones: Vec<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Retention factor of batch-norm running statistics.
    pub bn_momentum: f64,
    pub augment: bool,
    pub edge_source: EdgeSource,
    pub threshold: f64,
    pub pooled_metrics: bool,
    /// Check the constrained-kernel invariants every this many steps.
    pub check_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: NedbConfig { input_size: 64, ..NedbConfig::desk() },
            train_manifest: None,
            val_manifest: None,
            steps: 300,
            batch_size: 4,
            lr: 0.01,
            lr_decay: vec![0.0075, 0.005, 0.0025],
            lr_milestones: vec![5.0 / 12.0, 7.5 / 12.0, 10.0 / 12.0],
            momentum: 0.9,
            weight_decay: 0.0,
            bn_momentum: 0.9,
            augment: true,
            edge_source: EdgeSource::Manifest,
            threshold: 0.5,
            pooled_metrics: false,
            check_every: 10,
        }
    }
}

fn floats(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Learning rate in effect at 0-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let mut lr = self.lr;
        for (frac, next) in self.lr_milestones.iter().zip(&self.lr_decay) {
            if step as f64 >= (frac * self.steps as f64).round() {
                lr = *next;
            }
        }
        lr
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| Some(base.join(v.trim()));
        match key {
            "train_manifest" => self.train_manifest = path(value),
            "val_manifest" => self.val_manifest = path(value),
            "steps" => self.steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_decay" => self.lr_decay = floats(key, value)?,
            "lr_milestones" => self.lr_milestones = floats(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "bn_momentum" => self.bn_momentum = parse(key, value)?,
            "augment" => self.augment = parse(key, value)?,
            "edge_source" => self.edge_source = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "pooled_metrics" => self.pooled_metrics = parse(key, value)?,
            "check_every" => self.check_every = parse(key, value)?,
            _ => {
                if !self.model.set(key, value)? {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Parse `key=value` lines; `#` starts a comment. Relative paths resolve
    /// against `base`.
    pub fn parse_text(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
            cfg.set(k.trim(), v.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.lr_decay.len() != self.lr_milestones.len() {
            return Err(Error::Config("lr_decay and lr_milestones need the same length".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Config("momentum values must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.model.to_pairs() {
            out.push_str(&format!("{k}={v}\n"));
        }
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let rest = [
            ("train_manifest", p(&self.train_manifest)),
            ("val_manifest", p(&self.val_manifest)),
            ("steps", self.steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", format!("{}", self.lr)),
            ("lr_decay", join(&self.lr_decay)),
            ("lr_milestones", join(&self.lr_milestones)),
            ("momentum", format!("{}", self.momentum)),
            ("weight_decay", format!("{}", self.weight_decay)),
            ("bn_momentum", format!("{}", self.bn_momentum)),
            ("augment", self.augment.to_string()),
            ("edge_source", self.edge_source.to_string()),
            ("threshold", format!("{}", self.threshold)),
            ("pooled_metrics", self.pooled_metrics.to_string()),
            ("check_every", self.check_every.to_string()),
        ];
        for (k, v) in rest {
            if k.ends_with("_manifest") && v.is_empty() {
                continue;
            }
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn write_resolved(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("resolved_config.txt");
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
