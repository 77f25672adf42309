//! Attention refinement, feature fusion, edge extraction and the two heads.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Var;

use super::layers::{BatchNorm, Conv, ConvBn};
use super::params::{Ctx, ParamStore};

/// Channel gate `f · sigmoid(BN(conv1×1(gap f)))`.
#[derive(Clone, Debug)]
pub struct Arm {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl Arm {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        Arm {
            conv: Conv::new(store, &format!("{name}.conv"), c, c, 1, 1, false, rng),
            bn: BatchNorm::new(store, &format!("{name}.bn"), c),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, f: Var) -> Result<Var> {
        let g = ctx.tape.global_avgpool(f)?;
        let g = self.conv.forward(ctx, g)?;
        let g = self.bn.forward(ctx, g)?;
        let s = ctx.tape.sigmoid(g)?;
        ctx.tape.mul_channel(f, s)
    }
}

/// `h = relu(bn(conv1×1(cat(a, b))))`, `out = h + h·sigmoid(conv(relu(conv(gap h))))`.
#[derive(Clone, Debug)]
pub struct Ffm {
    pub fuse: ConvBn,
    pub att1: Conv,
    pub att2: Conv,
    pub width: usize,
}

impl Ffm {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        Ffm {
            fuse: ConvBn::new(store, &format!("{name}.fuse"), c_in, width, 1, 1, true, rng),
            att1: Conv::new(store, &format!("{name}.att1"), width, width, 1, 1, true, rng),
            att2: Conv::new(store, &format!("{name}.att2"), width, width, 1, 1, true, rng),
            width,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (ctx.tape.shape(a), ctx.tape.shape(b));
        if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
            return Err(Error::shape("ffm", format!("{sa} and {sb} differ spatially")));
        }
        let cat = ctx.tape.concat_channels(&[a, b])?;
        let h = self.fuse.forward(ctx, cat)?;
        let g = ctx.tape.global_avgpool(h)?;
        let g = self.att1.forward(ctx, g)?;
        let g = ctx.tape.relu(g)?;
        let g = self.att2.forward(ctx, g)?;
        let g = ctx.tape.sigmoid(g)?;
        let gated = ctx.tape.mul_channel(h, g)?;
        ctx.tape.add(h, gated)
    }
}

/// Edge extraction block: 1×1 down to C/4, a two-conv residual body, 1×1 to
/// a single edge logit.
#[derive(Clone, Debug)]
pub struct Eeb {
    pub entry: Conv,
    pub body1: Conv,
    pub body2: Conv,
    pub exit: Conv,
}

impl Eeb {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = (c / 4).max(1);
        Eeb {
            entry: Conv::new(store, &format!("{name}.entry"), c, r, 1, 1, true, rng),
            body1: Conv::new(store, &format!("{name}.body1"), r, r, 3, 1, true, rng),
            body2: Conv::new(store, &format!("{name}.body2"), r, r, 3, 1, true, rng),
            exit: Conv::new(store, &format!("{name}.exit"), r, 1, 1, 1, true, rng),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let e = self.entry.forward(ctx, x)?;
        let b = self.body1.forward(ctx, e)?;
        let b = ctx.tape.relu(b)?;
        let b = self.body2.forward(ctx, b)?;
        let e = ctx.tape.add(e, b)?;
        let e = ctx.tape.relu(e)?;
        self.exit.forward(ctx, e)
    }
}

/// Three rounds of bilinear ×2 and a 3×3 conv, channels F → F/4 → F/16 → 1,
/// then a sigmoid.
#[derive(Clone, Debug)]
pub struct MaskHead {
    pub stage1: ConvBn,
    pub stage2: ConvBn,
    pub out: Conv,
}

impl MaskHead {
    pub fn new(store: &mut ParamStore, name: &str, f: usize, rng: &mut ChaCha8Rng) -> Self {
        let (c1, c2) = ((f / 4).max(1), (f / 16).max(1));
        MaskHead {
            stage1: ConvBn::new(store, &format!("{name}.up1"), f, c1, 3, 1, true, rng),
            stage2: ConvBn::new(store, &format!("{name}.up2"), c1, c2, 3, 1, true, rng),
            out: Conv::new(store, &format!("{name}.up3"), c2, 1, 3, 1, true, rng),
        }
    }

    pub fn channel_trace(&self, ctx: &Ctx) -> [usize; 4] {
        let s = ctx.store();
        [
            s.get(self.stage1.conv.weight).shape().c,
            s.get(self.stage2.conv.weight).shape().c,
            s.get(self.out.weight).shape().c,
            s.get(self.out.weight).shape().n,
        ]
    }

    pub fn forward(&self, ctx: &mut Ctx, ff: Var) -> Result<Var> {
        let x = ctx.tape.upsample(ff, 2)?;
        let x = self.stage1.forward(ctx, x)?;
        let x = ctx.tape.upsample(x, 2)?;
        let x = self.stage2.forward(ctx, x)?;
        let x = ctx.tape.upsample(x, 2)?;
        let x = self.out.forward(ctx, x)?;
        ctx.tape.sigmoid(x)
    }
}

/// One EEB per tapped feature, each upsampled to 1/4 scale, concatenated and
/// fused by a 3×3 conv and a sigmoid.
#[derive(Clone, Debug)]
pub struct EdgeHead {
    pub eebs: Vec<(Eeb, usize)>,
    pub fuse: Conv,
}

impl EdgeHead {
    /// `taps` lists `(channels, upsampling factor)` per feature.
    pub fn new(store: &mut ParamStore, name: &str, taps: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Self {
        let eebs = taps
            .iter()
            .enumerate()
            .map(|(i, &(c, up))| (Eeb::new(store, &format!("{name}.eeb{i}"), c, rng), up))
            .collect();
        EdgeHead { eebs, fuse: Conv::new(store, &format!("{name}.fuse"), taps.len(), 1, 3, 1, true, rng) }
    }

    pub fn forward(&self, ctx: &mut Ctx, features: &[Var]) -> Result<Var> {
        if features.len() != self.eebs.len() {
            return Err(Error::Topology(format!("edge head expects {} features, got {}", self.eebs.len(), features.len())));
        }
        let mut maps = Vec::with_capacity(features.len());
        for (&f, (eeb, up)) in features.iter().zip(&self.eebs) {
            let e = eeb.forward(ctx, f)?;
            maps.push(if *up == 1 { e } else { ctx.tape.upsample(e, *up)? });
        }
        let cat = ctx.tape.concat_channels(&maps)?;
        let y = self.fuse.forward(ctx, cat)?;
        ctx.tape.sigmoid(y)
    }
}
