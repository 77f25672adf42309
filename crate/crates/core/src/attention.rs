//! Non-local self-attention with a Euclidean distance prior.
//!
//! Pixel correlations `QᵀK` are divided element-wise by `D + 1`, where `D` is
//! the pairwise distance between pixel coordinates, before the row softmax.
//! Nearby pixels therefore keep more of their correlation, whichever its sign.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::Conv;
use crate::nn::params::{Ctx, ParamStore};
use crate::tensor::{Shape, Tape, Tensor, Var};

/// Default cap on `H·W` for a distance matrix (64×64 feature maps).
pub const DEFAULT_PIXEL_CAP: usize = 4096;

/// Channel reduction of the query/key projections.
pub const REDUCTION: usize = 8;

/// `(H·W)×(H·W)` matrix of pixel distances plus one, pixel index `r·W + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    h: usize,
    w: usize,
    values: Arc<Tensor>,
}

impl DistanceMatrix {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        Self::with_cap(h, w, DEFAULT_PIXEL_CAP)
    }

    pub fn with_cap(h: usize, w: usize, cap: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!("distance matrix of empty {h}x{w} map")));
        }
        let n = h * w;
        if n > cap {
            return Err(Error::TooLarge { h, w, cap });
        }
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            let (ri, ci) = ((i / w) as f64, (i % w) as f64);
            for j in 0..n {
                let (rj, cj) = ((j / w) as f64, (j % w) as f64);
                data.push(((ri - rj).powi(2) + (ci - cj).powi(2)).sqrt() + 1.0);
            }
        }
        Ok(DistanceMatrix { h, w, values: Arc::new(Tensor::from_parts(Shape::new(1, 1, n, n), data)) })
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.data()[i * self.pixels() + j]
    }

    pub fn tensor(&self) -> Arc<Tensor> {
        Arc::clone(&self.values)
    }
}

/// Distance matrices built once per feature extent and shared afterwards.
#[derive(Debug)]
pub struct DistanceCache {
    cap: usize,
    map: Mutex<HashMap<(usize, usize), DistanceMatrix>>,
}

impl Default for DistanceCache {
    fn default() -> Self {
        DistanceCache::new(DEFAULT_PIXEL_CAP)
    }
}

impl DistanceCache {
    pub fn new(cap: usize) -> Self {
        DistanceCache { cap, map: Mutex::new(HashMap::new()) }
    }

    pub fn get(&self, h: usize, w: usize) -> Result<DistanceMatrix> {
        let mut map = self.map.lock().expect("distance cache poisoned");
        if let Some(d) = map.get(&(h, w)) {
            return Ok(d.clone());
        }
        let d = DistanceMatrix::with_cap(h, w, self.cap)?;
        map.insert((h, w), d.clone());
        Ok(d)
    }
}

/// Row-softmax attention from a correlation tensor `N×1×P×P`, optionally
/// divided by a distance matrix first.
pub fn attention_on_tape(tape: &mut Tape, cor: Var, distance: Option<&DistanceMatrix>) -> Result<Var> {
    let cor = match distance {
        Some(d) => tape.div_const(cor, d.tensor())?,
        None => cor,
    };
    tape.softmax_rows(cor)
}

/// Attention weights for a raw correlation matrix (no scaling applied here).
pub fn attention_weights(cor: &Tensor, distance: Option<&DistanceMatrix>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let c = tape.constant(cor.clone());
    let a = attention_on_tape(&mut tape, c, distance)?;
    Ok(tape.value(a).clone())
}

/// Query/key (C→C/8), value (C→C) and output (C→C) 1×1 projections.
#[derive(Clone, Debug)]
pub struct NonLocalBlock {
    pub query: Conv,
    pub key: Conv,
    pub value: Conv,
    pub out: Conv,
    channels: usize,
}

impl NonLocalBlock {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if channels == 0 || channels % REDUCTION != 0 {
            return Err(Error::InvalidArgument(format!("non-local channels must be a multiple of {REDUCTION}, got {channels}")));
        }
        let r = channels / REDUCTION;
        let block = NonLocalBlock {
            query: Conv::new(store, &format!("{name}.query"), channels, r, 1, 1, true, rng),
            key: Conv::new(store, &format!("{name}.key"), channels, r, 1, 1, true, rng),
            value: Conv::new(store, &format!("{name}.value"), channels, channels, 1, 1, true, rng),
            out: Conv::new(store, &format!("{name}.out"), channels, channels, 1, 1, true, rng),
            channels,
        };
        // The block starts as an identity map.
        store.set(block.out.weight, Tensor::zeros(Shape::new(channels, channels, 1, 1)))?;
        Ok(block)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var, distance: Option<&DistanceCache>) -> Result<Var> {
        self.forward_with_attention(ctx, x, distance).map(|(y, _)| y)
    }

    /// Output and the `N×1×HW×HW` attention matrix.
    pub fn forward_with_attention(&self, ctx: &mut Ctx, x: Var, distance: Option<&DistanceCache>) -> Result<(Var, Var)> {
        let s = ctx.tape.shape(x);
        if s.c != self.channels {
            return Err(Error::shape("non_local", format!("block built for {} channels, input {}", self.channels, s)));
        }
        let dist = distance.map(|c| c.get(s.h, s.w)).transpose()?;
        let mut vars = Vec::with_capacity(8);
        for conv in [&self.query, &self.key, &self.value, &self.out] {
            vars.push(ctx.param(conv.weight));
            vars.push(ctx.param(conv.bias.expect("non-local projections carry a bias")));
        }
        let w = NonLocalVars {
            query: (vars[0], vars[1]),
            key: (vars[2], vars[3]),
            value: (vars[4], vars[5]),
            out: (vars[6], vars[7]),
        };
        non_local_on_tape(&mut ctx.tape, x, &w, dist.as_ref())
    }
}

/// `(weight, bias)` handles of the four 1×1 projections.
#[derive(Clone, Copy, Debug)]
pub struct NonLocalVars {
    pub query: (Var, Var),
    pub key: (Var, Var),
    pub value: (Var, Var),
    pub out: (Var, Var),
}

/// `x + out(V·Aᵀ)` with `A = softmax_rows(QᵀK / √(C/8) ⊘ (D+1))`, the division
/// applied only when `distance` is given. Returns the output and `A`.
pub fn non_local_on_tape(tape: &mut Tape, x: Var, w: &NonLocalVars, distance: Option<&DistanceMatrix>) -> Result<(Var, Var)> {
    let s = tape.shape(x);
    let r = tape.shape(w.query.0).n;
    if s.c % REDUCTION != 0 || r != s.c / REDUCTION {
        return Err(Error::shape("non_local", format!("input {s} with {r} query channels")));
    }
    if let Some(d) = distance {
        if d.extent() != (s.h, s.w) {
            return Err(Error::shape("non_local", format!("distance matrix for {:?}, input {s}", d.extent())));
        }
    }
    let p = s.plane();
    let q = tape.conv2d(x, w.query.0, Some(w.query.1), 1, 0)?;
    let q = tape.reshape(q, Shape::new(s.n, 1, r, p))?;
    let qt = tape.transpose_last(q)?;
    let k = tape.conv2d(x, w.key.0, Some(w.key.1), 1, 0)?;
    let k = tape.reshape(k, Shape::new(s.n, 1, r, p))?;
    let cor = tape.matmul(qt, k)?;
    let cor = tape.scale(cor, 1.0 / (r as f64).sqrt())?;
    let attn = attention_on_tape(tape, cor, distance)?;

    let v = tape.conv2d(x, w.value.0, Some(w.value.1), 1, 0)?;
    let v = tape.reshape(v, Shape::new(s.n, 1, s.c, p))?;
    let at = tape.transpose_last(attn)?;
    let y = tape.matmul(v, at)?;
    let y = tape.reshape(y, s)?;
    let y = tape.conv2d(y, w.out.0, Some(w.out.1), 1, 0)?;
    let out = tape.add(x, y)?;
    Ok((out, attn))
}
