//! Configuration families trained and scored side by side.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::info;

use crate::constrained::{InitScheme, ProjectionMode};
use crate::data::morphology::SeShape;
use crate::data::Manifest;
use crate::error::{Error, Result};

use super::config::{EdgeSource, RunConfig};
use super::dataset::load_samples;
use super::eval::evaluate;
use super::train::Trainer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    DualBranch,
    Init,
    KernelSize,
    EdgeKernel,
    Attention,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::DualBranch, Suite::Init, Suite::KernelSize, Suite::EdgeKernel, Suite::Attention];

    pub fn name(self) -> &'static str {
        match self {
            Suite::DualBranch => "dual-branch",
            Suite::Init => "init",
            Suite::KernelSize => "kernel-size",
            Suite::EdgeKernel => "edge-kernel",
            Suite::Attention => "attention",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct Variant {
    pub name: String,
    pub config: RunConfig,
}

fn variant(name: impl Into<String>, base: &RunConfig, edit: impl FnOnce(&mut RunConfig)) -> Variant {
    let mut config = base.clone();
    edit(&mut config);
    Variant { name: name.into(), config }
}

/// The single-/dual-branch ladder from a bare backbone up to distance
/// attention.
fn dual_branch(base: &RunConfig) -> Vec<Variant> {
    let bare = |c: &mut RunConfig| {
        let m = &mut c.model;
        m.use_constrained = false;
        m.use_edge = false;
        m.use_nonlocal = false;
        m.use_high_res = true;
    };
    vec![
        variant("SB", base, |c| {
            bare(c);
            c.model.use_high_res = false;
        }),
        variant("DB", base, bare),
        variant("DB+origin-CC", base, |c| {
            bare(c);
            c.model.use_constrained = true;
            c.model.cc_mode = ProjectionMode::Original;
        }),
        variant("DB+CC", base, |c| {
            bare(c);
            c.model.use_constrained = true;
        }),
        variant("DB+CC+Edge", base, |c| {
            bare(c);
            c.model.use_constrained = true;
            c.model.use_edge = true;
        }),
        variant("DB+CC+Edge+NL", base, |c| {
            bare(c);
            c.model.use_constrained = true;
            c.model.use_edge = true;
            c.model.use_nonlocal = true;
            c.model.use_distance = false;
        }),
        variant("DB+CC+Edge+NL-D", base, |c| {
            bare(c);
            c.model.use_constrained = true;
            c.model.use_edge = true;
            c.model.use_nonlocal = true;
            c.model.use_distance = true;
        }),
    ]
}

pub fn variants(suite: Suite, base: &RunConfig) -> Vec<Variant> {
    match suite {
        Suite::DualBranch => dual_branch(base),
        Suite::Init => InitScheme::ALL
            .into_iter()
            .map(|s| variant(s.name(), base, |c| c.model.cc_scheme = s))
            .collect(),
        Suite::KernelSize => {
            let sizes: [&[usize]; 8] = [&[3], &[5], &[7], &[9], &[11], &[3, 5, 7], &[5, 7, 9], &[5, 5, 5]];
            sizes
                .into_iter()
                .map(|s| {
                    let name = s.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
                    variant(name, base, |c| c.model.cc_sizes = s.to_vec())
                })
                .collect()
        }
        Suite::EdgeKernel => SeShape::ALL
            .into_iter()
            .flat_map(|shape| [3, 5, 7, 9].map(|k| (shape, k)))
            .map(|(shape, k)| {
                variant(format!("{}_{k}x{k}", shape.name().to_uppercase()), base, |c| {
                    c.edge_source = EdgeSource::Mask;
                    c.model.edge_shape = shape;
                    c.model.edge_size = k;
                })
            })
            .collect(),
        Suite::Attention => vec![
            variant("no-attention", base, |c| c.model.use_nonlocal = false),
            variant("NL", base, |c| {
                c.model.use_nonlocal = true;
                c.model.use_distance = false;
            }),
            variant("NL-D", base, |c| {
                c.model.use_nonlocal = true;
                c.model.use_distance = true;
            }),
        ],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    /// Mean total loss over the last 20 steps.
    pub final_loss: f64,
}

pub fn rows_csv(suite: Suite, rows: &[AblationRow]) -> String {
    let mut out = String::from("suite,variant,seed,precision,recall,f1,auc,final_loss\n");
    for r in rows {
        let auc = r.auc.map(|a| format!("{a:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{suite},\"{}\",{},{:.6},{:.6},{:.6},{auc},{:.6}\n",
            r.variant, r.seed, r.precision, r.recall, r.f1, r.final_loss
        ));
    }
    out
}

/// Train one configuration and score it on the validation manifest.
pub fn run_variant(v: &Variant) -> Result<AblationRow> {
    let cfg = &v.config;
    let need = |p: &Option<std::path::PathBuf>, key: &str| {
        p.clone().ok_or_else(|| Error::Config(format!("{key} is required for ablation")))
    };
    let train = Manifest::read(&need(&cfg.train_manifest, "train_manifest")?)?;
    let val = Manifest::read(&need(&cfg.val_manifest, "val_manifest")?)?;
    let samples = load_samples(&train, &cfg.model, cfg.edge_source)?;
    let val_samples = load_samples(&val, &cfg.model, cfg.edge_source)?;
    let mut trainer = Trainer::new(cfg, samples)?;
    let log = trainer.run()?;
    let tail = &log[log.len().saturating_sub(20)..];
    let final_loss = tail.iter().map(|r| r.total).sum::<f64>() / tail.len().max(1) as f64;
    let (report, _) = evaluate(&trainer.model, &val_samples, cfg.threshold, cfg.pooled_metrics)?;
    info!("{}: f1 {:.4}", v.name, report.mean_f1);
    Ok(AblationRow {
        variant: v.name.clone(),
        seed: cfg.model.seed,
        precision: report.mean_precision,
        recall: report.mean_recall,
        f1: report.mean_f1,
        auc: (report.auc_excluded < report.images.len()).then_some(report.mean_auc),
        final_loss,
    })
}

/// Every variant of `suite` for every seed, in variant-major order.
pub fn run_suite(suite: Suite, base: &RunConfig, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for v in variants(suite, base) {
        for &seed in seeds {
            let mut v = v.clone();
            v.config.model.seed = seed;
            rows.push(run_variant(&v)?);
        }
    }
    Ok(rows)
}

/// Run a suite and write `ablation_<suite>.csv` plus the resolved base
/// config under `out`.
pub fn ablate(suite: Suite, base: &RunConfig, seeds: &[u64], out: &Path) -> Result<Vec<AblationRow>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    base.write_resolved(out)?;
    let rows = run_suite(suite, base, seeds)?;
    let path = out.join(format!("ablation_{suite}.csv"));
    fs::write(&path, rows_csv(suite, &rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_sizes() {
        let base = RunConfig::default();
        let n: Vec<usize> = Suite::ALL.iter().map(|&s| variants(s, &base).len()).collect();
        assert_eq!(n, [7, 4, 8, 12, 3]);
        for s in Suite::ALL {
            for v in variants(s, &base) {
                v.config.validate().unwrap();
            }
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}
