use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Shape, Tensor, Var};

use super::params::{BnUpdate, Ctx, ParamId, ParamStore};

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.add_conv_weight(format!("{name}.weight"), Shape::new(c_out, c_in, k, k), rng);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(Shape::new(c_out, 1, 1, 1)), true));
        Conv { weight, bias, stride, pad: k / 2 }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, c: usize) -> Self {
        let s = Shape::new(c, 1, 1, 1);
        BatchNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(s, 1.0), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(s), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(s), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(s, 1.0), false),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let g = ctx.param(self.gamma);
        let b = ctx.param(self.beta);
        if ctx.train {
            let (y, stats) = ctx.tape.batchnorm_train(x, g, b, BN_EPS)?;
            ctx.bn_updates.push(BnUpdate { mean: self.running_mean, var: self.running_var, stats });
            Ok(y)
        } else {
            let mean = ctx.store().get(self.running_mean).data().to_vec();
            let var = ctx.store().get(self.running_var).data().to_vec();
            ctx.tape.batchnorm_eval(x, g, b, &mean, &var, BN_EPS)
        }
    }
}

/// Convolution without bias followed by batch norm and an optional ReLU.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub relu: bool,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        relu: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ConvBn {
            conv: Conv::new(store, &format!("{name}.conv"), c_in, c_out, k, stride, false, rng),
            bn: BatchNorm::new(store, &format!("{name}.bn"), c_out),
            relu,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = self.conv.forward(ctx, x)?;
        let y = self.bn.forward(ctx, y)?;
        if self.relu {
            ctx.tape.relu(y)
        } else {
            Ok(y)
        }
    }
}

/// ResNet basic block: two 3×3 conv-bn pairs with an identity or projected skip.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub conv1: ConvBn,
    pub conv2: ConvBn,
    pub shortcut: Option<ConvBn>,
}

impl BasicBlock {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let shortcut = (stride != 1 || c_in != c_out)
            .then(|| ConvBn::new(store, &format!("{name}.shortcut"), c_in, c_out, 1, stride, false, rng));
        BasicBlock {
            conv1: ConvBn::new(store, &format!("{name}.conv1"), c_in, c_out, 3, stride, true, rng),
            conv2: ConvBn::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, false, rng),
            shortcut,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = self.conv1.forward(ctx, x)?;
        let y = self.conv2.forward(ctx, y)?;
        let skip = match &self.shortcut {
            Some(s) => s.forward(ctx, x)?,
            None => x,
        };
        let y = ctx.tape.add(y, skip)?;
        ctx.tape.relu(y)
    }
}

/// A sequence of basic blocks; only the first may change stride or width.
#[derive(Clone, Debug)]
pub struct Stage {
    pub blocks: Vec<BasicBlock>,
}

impl Stage {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        depth: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let blocks = (0..depth.max(1))
            .map(|i| {
                let (ci, s) = if i == 0 { (c_in, stride) } else { (c_out, 1) };
                BasicBlock::new(store, &format!("{name}.{i}"), ci, c_out, s, rng)
            })
            .collect();
        Stage { blocks }
    }

    pub fn forward(&self, ctx: &mut Ctx, mut x: Var) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(ctx, x)?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn basic_block_shapes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stage = Stage::new(&mut store, "s", 4, 8, 2, 2, &mut rng);
        assert!(stage.blocks[0].shortcut.is_some());
        assert!(stage.blocks[1].shortcut.is_none());
        let x = Tensor::full(Shape::new(2, 4, 8, 8), 0.5);
        let mut ctx = Ctx::new(&store, true, true);
        let xv = ctx.tape.constant(x);
        let y = stage.forward(&mut ctx, xv).unwrap();
        assert_eq!(ctx.tape.shape(y), Shape::new(2, 8, 4, 4));
        // two conv-bn per block plus one shortcut bn
        assert_eq!(ctx.bn_updates.len(), 5);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1);
        let mut ctx = Ctx::new(&store, true, true);
        let x = ctx.tape.constant(Tensor::new(Shape::new(1, 1, 1, 2), vec![0.0, 2.0]).unwrap());
        bn.forward(&mut ctx, x).unwrap();
        let updates = ctx.bn_updates.clone();
        drop(ctx);
        store.apply_bn_updates(&updates, 0.9).unwrap();
        assert!((store.get(bn.running_mean).data()[0] - 0.1).abs() < 1e-15);
        // unbiased variance of [0, 2] is 2
        assert!((store.get(bn.running_var).data()[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-15);
    }
}
