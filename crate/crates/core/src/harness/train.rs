//! SGD training with per-step projection of the constrained kernels.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constrained::{ProjectionMode, MIN_WEIGHT};
use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::loss::combined_loss_on_tape;
use crate::nn::{checkpoint, NedbModel, ParamId};
use crate::tensor::Tensor;

use super::config::RunConfig;
use super::dataset::{flip, load_samples, Sample};

/// Tolerance on the kernel sum when checking the constraint during training.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    /// 1-based.
    pub step: usize,
    pub lr: f64,
    pub region: f64,
    pub edge: f64,
    pub total: f64,
}

pub fn loss_log_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("step,lr,loss_region,loss_edge,loss_total\n");
    for r in rows {
        out.push_str(&format!("{},{:.6},{:.6},{:.6},{:.6}\n", r.step, r.lr, r.region, r.edge, r.total));
    }
    out
}

/// SGD with momentum: `v ← μv + g + λp`, `p ← p − lr·v`.
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Option<Vec<f64>>>,
}

impl Sgd {
    pub fn new(num_params: usize, momentum: f64, weight_decay: f64) -> Self {
        Sgd { momentum, weight_decay, velocity: vec![None; num_params] }
    }

    pub fn step(&mut self, model: &mut NedbModel, grads: &[(ParamId, Tensor)], lr: f64) -> Result<()> {
        for (id, g) in grads {
            let p = model.store.get(*id);
            let v = self.velocity[id.index()].get_or_insert_with(|| vec![0.0; g.data().len()]);
            let data: Vec<f64> = p
                .data()
                .iter()
                .zip(g.data())
                .zip(v.iter_mut())
                .map(|((&w, &gw), vw)| {
                    *vw = self.momentum * *vw + gw + self.weight_decay * w;
                    w - lr * *vw
                })
                .collect();
            let t = Tensor::new(p.shape(), data)?;
            model.store.set(*id, t)?;
        }
        Ok(())
    }
}

/// Verify the constrained kernels sit on the constraint set.
pub fn check_bank(model: &NedbModel) -> Result<()> {
    let Some(bank) = model.bank() else { return Ok(()) };
    if bank.mode() == ProjectionMode::Original {
        return Ok(());
    }
    for (i, k) in bank.kernels().iter().enumerate() {
        let min = k.surround().fold(f64::INFINITY, f64::min);
        if min < MIN_WEIGHT - 1e-12 || k.sum().abs() >= SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "constrained kernel {i} left the constraint set (min surround {min}, sum {})",
                k.sum()
            )));
        }
    }
    Ok(())
}

pub struct Trainer<'a> {
    pub cfg: &'a RunConfig,
    pub model: NedbModel,
    samples: Vec<Sample>,
    sgd: Sgd,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a RunConfig, samples: Vec<Sample>) -> Result<Self> {
        cfg.validate()?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no training samples".into()));
        }
        let mut model = NedbModel::new(cfg.model.clone())?;
        model.project()?;
        let sgd = Sgd::new(model.store.len(), cfg.momentum, cfg.weight_decay);
        let rng = ChaCha8Rng::seed_from_u64(cfg.model.seed ^ 0x7261_696e);
        Ok(Trainer { cfg, model, samples, sgd, rng, order: Vec::new(), cursor: 0 })
    }

    fn next_batch(&mut self) -> Result<(Tensor, Tensor, Tensor)> {
        let mut imgs = Vec::with_capacity(self.cfg.batch_size);
        let mut masks = Vec::with_capacity(self.cfg.batch_size);
        let mut edges = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            if self.cursor == self.order.len() {
                self.order = (0..self.samples.len()).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let s = &self.samples[self.order[self.cursor]];
            self.cursor += 1;
            let (v, h) = if self.cfg.augment { (self.rng.gen_bool(0.5), self.rng.gen_bool(0.5)) } else { (false, false) };
            imgs.push(flip(&s.image, v, h));
            masks.push(flip(&s.mask, v, h));
            edges.push(flip(&s.edge, v, h));
        }
        Ok((Tensor::stack(&imgs)?, Tensor::stack(&masks)?, Tensor::stack(&edges)?))
    }

    /// One optimizer step at 0-based `step`.
    pub fn step(&mut self, step: usize) -> Result<LossRow> {
        let lr = self.cfg.lr_at(step);
        let (x, mask_gt, edge_gt) = self.next_batch()?;
        let alpha = self.cfg.model.region_weight();
        let (row, grads, updates) = {
            let mut ctx = self.model.ctx(true, true);
            let xv = ctx.tape.constant(x);
            let out = self.model.forward(&mut ctx, xv)?;
            let l = combined_loss_on_tape(&mut ctx.tape, out.mask, &mask_gt, out.edge, &edge_gt, alpha)?;
            let grads = ctx.tape.backward(l.total)?;
            let row = LossRow {
                step: step + 1,
                lr,
                region: ctx.tape.value(l.region).item(),
                edge: ctx.tape.value(l.edge).item(),
                total: ctx.tape.value(l.total).item(),
            };
            (row, ctx.param_grads(&grads), ctx.bn_updates)
        };
        self.sgd.step(&mut self.model, &grads, lr)?;
        self.model.store.apply_bn_updates(&updates, self.cfg.bn_momentum)?;
        self.model.project()?;
        if self.cfg.check_every > 0 && (step + 1) % self.cfg.check_every == 0 {
            check_bank(&self.model)?;
        }
        Ok(row)
    }

    pub fn run(&mut self) -> Result<Vec<LossRow>> {
        let mut rows = Vec::with_capacity(self.cfg.steps);
        for step in 0..self.cfg.steps {
            let row = self.step(step)?;
            if (step + 1) % 25 == 0 || step + 1 == self.cfg.steps {
                info!("step {} lr {:.4} loss {:.4} (region {:.4}, edge {:.4})", row.step, row.lr, row.total, row.region, row.edge);
            }
            rows.push(row);
        }
        Ok(rows)
    }
}

pub struct TrainOutcome {
    pub model: NedbModel,
    pub log: Vec<LossRow>,
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

/// Train from `cfg.train_manifest` and write `checkpoint.nedb`,
/// `loss_log.csv` and `resolved_config.txt` under `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let manifest_path = cfg
        .train_manifest
        .as_ref()
        .ok_or_else(|| Error::Config("train_manifest is required for training".into()))?;
    let manifest = Manifest::read(manifest_path)?;
    let samples = load_samples(&manifest, &cfg.model, cfg.edge_source)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.write_resolved(out)?;
    let mut trainer = Trainer::new(cfg, samples)?;
    let log = trainer.run()?;
    let loss_log = out.join("loss_log.csv");
    fs::write(&loss_log, loss_log_csv(&log)).map_err(|e| Error::io(&loss_log, e))?;
    let checkpoint = out.join("checkpoint.nedb");
    checkpoint::save(&trainer.model, &checkpoint)?;
    Ok(TrainOutcome { model: trainer.model, log, checkpoint, loss_log })
}
