//! The dual-branch detector.
//!
//! ```text
//! image ─ constrained conv ─ stem (1/4) ─ layer1 (1/4) ─ layer2 (1/8) ─┬─ layer3h (1/8) ─ layer4h (1/8)
//!                                                                      └─ layer3l (1/16) ─ layer4l (1/32)
//! f3l, f4l ─ ARM ─ non-local ─┐
//! f4h ────────────────────────┴─ FFM ─ ff (1/8) ─ mask head (1/1)
//! six taps ─ EEB each ─ upsample to 1/4 ─ concat ─ 3×3 conv ─ edge (1/4)
//! ```

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{DistanceCache, NonLocalBlock};
use crate::constrained::{ConstrainedKernelBank, ProjectionReport};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor, Var};

use super::blocks::{Arm, EdgeHead, Ffm, MaskHead};
use super::config::NedbConfig;
use super::layers::{Conv, ConvBn, Stage};
use super::params::{Ctx, ParamId, ParamStore};

/// Per-channel means of B, G, R on the 0..1 scale.
pub const BGR_MEAN: [f64; 3] = [0.406, 0.456, 0.485];
/// Per-channel divisors of B, G, R.
pub const BGR_DIV: [f64; 3] = [0.225, 0.224, 0.229];

/// Inputs beyond this magnitude were probably not normalized.
const PLAUSIBLE_INPUT: f64 = 10.0;

/// Raw BGR byte values (`N×3×H×W`, 0..255) to network input.
pub fn normalize_input(raw: &Tensor) -> Result<Tensor> {
    let s = raw.shape();
    if s.c != 3 {
        return Err(Error::shape("normalize_input", format!("expected 3 channels, got {s}")));
    }
    let mut data = raw.to_vec();
    for (i, v) in data.iter_mut().enumerate() {
        let c = (i / s.plane()) % 3;
        *v = (*v / 255.0 - BGR_MEAN[c]) / BGR_DIV[c];
    }
    Tensor::new(s, data)
}

/// Inverse of [`normalize_input`].
pub fn denormalize(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.c != 3 {
        return Err(Error::shape("denormalize", format!("expected 3 channels, got {s}")));
    }
    let mut data = x.to_vec();
    for (i, v) in data.iter_mut().enumerate() {
        let c = (i / s.plane()) % 3;
        *v = (*v * BGR_DIV[c] + BGR_MEAN[c]) * 255.0;
    }
    Tensor::new(s, data)
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct Outputs {
    /// `N×1×H×W` manipulation probability.
    pub mask: Var,
    /// `N×1×H/4×W/4` edge probability.
    pub edge: Var,
    pub ff: Var,
    /// Features fed to the edge head, in head order.
    pub taps: Vec<Var>,
}

#[derive(Clone, Debug)]
struct HighRes {
    layer3: Stage,
    layer4: Stage,
    /// 1×1 projection of f4h to the width of f3l.
    proj: Conv,
}

pub struct NedbModel {
    pub config: NedbConfig,
    pub store: ParamStore,
    bank: Option<(ConstrainedKernelBank, Vec<ParamId>)>,
    stem: ConvBn,
    layer1: Stage,
    layer2: Stage,
    high: Option<HighRes>,
    layer3l: Stage,
    layer4l: Stage,
    arm3: Arm,
    arm4: Arm,
    nonlocal: Option<(NonLocalBlock, NonLocalBlock)>,
    ffm: Ffm,
    mask_head: MaskHead,
    edge_head: EdgeHead,
    distances: DistanceCache,
}

impl NedbModel {
    pub fn new(config: NedbConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let w = config.base_width;
        let d = config.depths;

        let bank = if config.use_constrained {
            let bank = if config.cc_sizes.len() == 1 {
                ConstrainedKernelBank::uniform(config.cc_sizes[0], config.cc_scheme, config.cc_mode, config.cc_mapping, config.seed)?
            } else {
                ConstrainedKernelBank::with_sizes(&config.cc_sizes, config.cc_scheme, config.cc_mode, config.cc_mapping, config.seed)?
            };
            let ids = bank
                .weight_tensors()
                .into_iter()
                .enumerate()
                .map(|(i, t)| store.add(format!("constrained.{i}"), t, true))
                .collect();
            Some((bank, ids))
        } else {
            None
        };

        let stem = ConvBn::new(&mut store, "stem", 3, w, 7, 2, true, &mut rng);
        let layer1 = Stage::new(&mut store, "layer1", w, w, d[0], 1, &mut rng);
        let layer2 = Stage::new(&mut store, "layer2", w, 2 * w, d[1], 2, &mut rng);
        let high = config.use_high_res.then(|| HighRes {
            layer3: Stage::new(&mut store, "layer3h", 2 * w, 4 * w, d[2], 1, &mut rng),
            layer4: Stage::new(&mut store, "layer4h", 4 * w, 8 * w, d[3], 1, &mut rng),
            proj: Conv::new(&mut store, "proj4h", 8 * w, 4 * w, 1, 1, true, &mut rng),
        });
        let layer3l = Stage::new(&mut store, "layer3l", 2 * w, 4 * w, d[2], 2, &mut rng);
        let layer4l = Stage::new(&mut store, "layer4l", 4 * w, 8 * w, d[3], 2, &mut rng);
        let arm3 = Arm::new(&mut store, "arm3", 4 * w, &mut rng);
        let arm4 = Arm::new(&mut store, "arm4", 8 * w, &mut rng);
        let nonlocal = if config.use_nonlocal {
            Some((
                NonLocalBlock::new(&mut store, "nl3", 4 * w, &mut rng)?,
                NonLocalBlock::new(&mut store, "nl4", 8 * w, &mut rng)?,
            ))
        } else {
            None
        };
        let ffm = Ffm::new(&mut store, "ffm", 12 * w, config.fusion_width, &mut rng);
        let mask_head = MaskHead::new(&mut store, "mask", config.fusion_width, &mut rng);
        let taps: Vec<(usize, usize)> = if config.use_high_res {
            vec![(w, 1), (2 * w, 2), (4 * w, 2), (4 * w, 4), (8 * w, 2), (8 * w, 8)]
        } else {
            vec![(w, 1), (2 * w, 2), (4 * w, 4), (8 * w, 8)]
        };
        let edge_head = EdgeHead::new(&mut store, "edge", &taps, &mut rng);

        Ok(NedbModel {
            config,
            store,
            bank,
            stem,
            layer1,
            layer2,
            high,
            layer3l,
            layer4l,
            arm3,
            arm4,
            nonlocal,
            ffm,
            mask_head,
            edge_head,
            distances: DistanceCache::default(),
        })
    }

    pub fn bank(&self) -> Option<&ConstrainedKernelBank> {
        self.bank.as_ref().map(|(b, _)| b)
    }

    pub fn bank_param_ids(&self) -> &[ParamId] {
        self.bank.as_ref().map_or(&[], |(_, ids)| ids)
    }

    pub fn mask_head(&self) -> &MaskHead {
        &self.mask_head
    }

    pub fn ctx(&self, train: bool, grad: bool) -> Ctx<'_> {
        Ctx::new(&self.store, train, grad)
    }

    /// Copy the stored constrained weights into the bank, project them and
    /// write the result back.
    pub fn project(&mut self) -> Result<ProjectionReport> {
        let Some((bank, ids)) = self.bank.as_mut() else {
            return Ok(ProjectionReport::default());
        };
        let current: Vec<Tensor> = ids.iter().map(|&id| self.store.get(id).clone()).collect();
        bank.set_weight_tensors(&current)?;
        let report = bank.project();
        for (&id, t) in ids.iter().zip(bank.weight_tensors()) {
            self.store.set(id, t)?;
        }
        Ok(report)
    }

    /// Refresh the bank from the store without projecting.
    pub fn sync_bank(&mut self) -> Result<()> {
        if let Some((bank, ids)) = self.bank.as_mut() {
            let current: Vec<Tensor> = ids.iter().map(|&id| self.store.get(id).clone()).collect();
            bank.set_weight_tensors(&current)?;
        }
        Ok(())
    }

    fn check_scale(ctx: &Ctx, v: Var, what: &str, input: Shape, div: usize) -> Result<()> {
        let s = ctx.tape.shape(v);
        if s.h * div != input.h || s.w * div != input.w {
            return Err(Error::Topology(format!(
                "{what} is {}x{}, expected 1/{div} of {}x{}",
                s.h, s.w, input.h, input.w
            )));
        }
        Ok(())
    }

    /// Fuse the two context features with the high-resolution one.
    pub fn fuse_branches(&self, ctx: &mut Ctx, f3l: Var, f4l: Var, f4h: Option<Var>) -> Result<Var> {
        let a3 = self.arm3.forward(ctx, f3l)?;
        let a4 = self.arm4.forward(ctx, f4l)?;
        let dist = self.config.use_distance.then_some(&self.distances);
        let (n3, n4) = match &self.nonlocal {
            Some((nl3, nl4)) => (nl3.forward(ctx, a3, dist)?, nl4.forward(ctx, a4, dist)?),
            None => (a3, a4),
        };
        let up3 = ctx.tape.upsample(n3, 2)?;
        let up4 = ctx.tape.upsample(n4, 4)?;
        match (f4h, &self.high) {
            (Some(f4h), Some(high)) => {
                let p = high.proj.forward(ctx, f4h)?;
                let a = ctx.tape.add(up3, p)?;
                let b = ctx.tape.add(up4, f4h)?;
                self.ffm.forward(ctx, a, b)
            }
            (None, None) => self.ffm.forward(ctx, up3, up4),
            _ => Err(Error::Topology("high-resolution feature does not match the configured topology".into())),
        }
    }

    /// Full forward pass on a normalized `N×3×H×W` input.
    pub fn forward(&self, ctx: &mut Ctx, image: Var) -> Result<Outputs> {
        let s = ctx.tape.shape(image);
        if s.c != 3 {
            return Err(Error::shape("forward", format!("expected a 3-channel image, got {s}")));
        }
        if s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0 {
            return Err(Error::shape("forward", format!("image extents must be multiples of 32, got {s}")));
        }
        if ctx.tape.value(image).max_abs() > PLAUSIBLE_INPUT {
            warn!("input magnitude exceeds {PLAUSIBLE_INPUT}; was the image normalized?");
        }

        let x = match &self.bank {
            Some((bank, ids)) => {
                let ws: Vec<Var> = ids.iter().map(|&id| ctx.param(id)).collect();
                bank.extract_on_tape(&mut ctx.tape, image, &ws)?
            }
            None => image,
        };
        let x = self.stem.forward(ctx, x)?;
        let x = ctx.tape.maxpool2d(x, 3, 2, 1)?;
        let f1 = self.layer1.forward(ctx, x)?;
        let f2 = self.layer2.forward(ctx, f1)?;
        let f3l = self.layer3l.forward(ctx, f2)?;
        let f4l = self.layer4l.forward(ctx, f3l)?;
        let (f3h, f4h) = match &self.high {
            Some(h) => {
                let f3h = h.layer3.forward(ctx, f2)?;
                let f4h = h.layer4.forward(ctx, f3h)?;
                (Some(f3h), Some(f4h))
            }
            None => (None, None),
        };

        let mut ledger: Vec<(Var, &str, usize)> = vec![(f1, "layer1", 4), (f2, "layer2", 8)];
        if let (Some(a), Some(b)) = (f3h, f4h) {
            ledger.push((a, "layer3h", 8));
            ledger.push((b, "layer4h", 8));
        }
        ledger.push((f3l, "layer3l", 16));
        ledger.push((f4l, "layer4l", 32));
        for &(v, what, div) in &ledger {
            Self::check_scale(ctx, v, what, s, div)?;
        }

        let ff = self.fuse_branches(ctx, f3l, f4l, f4h)?;
        Self::check_scale(ctx, ff, "ff", s, 8)?;
        let mask = self.mask_head.forward(ctx, ff)?;
        let taps = match (f3h, f4h) {
            (Some(f3h), Some(f4h)) => vec![f1, f2, f3h, f3l, f4h, f4l],
            _ => vec![f1, f2, f3l, f4l],
        };
        let edge = self.edge_head.forward(ctx, &taps)?;
        Self::check_scale(ctx, mask, "mask", s, 1)?;
        Self::check_scale(ctx, edge, "edge", s, 4)?;
        Ok(Outputs { mask, edge, ff, taps })
    }

    /// Evaluation-mode prediction: `(mask, edge)` probabilities.
    pub fn predict(&self, image: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut ctx = self.ctx(false, false);
        let x = ctx.tape.constant(image.clone());
        let out = self.forward(&mut ctx, x)?;
        Ok((ctx.tape.value(out.mask).clone(), ctx.tape.value(out.edge).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let raw = Tensor::from_fn(Shape::new(1, 3, 1, 2), |_, c, _, w| if w == 0 { 255.0 * BGR_MEAN[c] } else { 0.0 }).unwrap();
        let x = normalize_input(&raw).unwrap();
        for c in 0..3 {
            assert!(x.at(0, c, 0, 0).abs() < 1e-12);
            assert!((x.at(0, c, 0, 1) + BGR_MEAN[c] / BGR_DIV[c]).abs() < 1e-12);
        }
        let back = denormalize(&x).unwrap();
        for (a, b) in back.data().iter().zip(raw.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn desk_shapes() {
        let cfg = NedbConfig { input_size: 64, ..NedbConfig::desk() };
        let model = NedbModel::new(cfg).unwrap();
        let mut ctx = model.ctx(true, true);
        let x = ctx.tape.constant(Tensor::full(Shape::new(2, 3, 64, 64), 0.1));
        let out = model.forward(&mut ctx, x).unwrap();
        assert_eq!(ctx.tape.shape(out.mask), Shape::new(2, 1, 64, 64));
        assert_eq!(ctx.tape.shape(out.edge), Shape::new(2, 1, 16, 16));
        assert_eq!(ctx.tape.shape(out.ff), Shape::new(2, 64, 8, 8));
        assert_eq!(out.taps.len(), 6);
    }

    #[test]
    fn single_branch_keeps_output_shapes() {
        let cfg = NedbConfig { input_size: 64, use_high_res: false, ..NedbConfig::desk() };
        let model = NedbModel::new(cfg).unwrap();
        let mut ctx = model.ctx(false, false);
        let x = ctx.tape.constant(Tensor::full(Shape::new(1, 3, 64, 64), 0.1));
        let out = model.forward(&mut ctx, x).unwrap();
        assert_eq!(ctx.tape.shape(out.mask), Shape::new(1, 1, 64, 64));
        assert_eq!(ctx.tape.shape(out.edge), Shape::new(1, 1, 16, 16));
        assert_eq!(out.taps.len(), 4);
    }

    #[test]
    fn bad_extent_rejected() {
        let model = NedbModel::new(NedbConfig::desk()).unwrap();
        let mut ctx = model.ctx(false, false);
        let x = ctx.tape.constant(Tensor::zeros(Shape::new(1, 3, 48, 48)));
        assert!(model.forward(&mut ctx, x).is_err());
    }
}
