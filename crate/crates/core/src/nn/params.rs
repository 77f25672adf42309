use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{BatchStats, Gradients, Shape, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Running statistics and other buffers are stored but not trained.
    pub trainable: bool,
}

/// Named parameters and buffers in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, value, trainable });
        ParamId(self.params.len() - 1)
    }

    /// Kaiming-uniform conv weight `k×c×kh×kw`.
    pub fn add_conv_weight(&mut self, name: impl Into<String>, shape: Shape, rng: &mut ChaCha8Rng) -> ParamId {
        let fan_in = (shape.c * shape.h * shape.w) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let data = (0..shape.numel()).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::from_parts(shape, data), true)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape("param", format!("{}: {} vs {}", p.name, p.value.shape(), value.shape())));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.shape().numel()).sum()
    }
}

/// A pending running-statistics update from a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats,
}

/// One forward pass: a tape plus the mapping from parameters to tape leaves.
pub struct Ctx<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    vars: Vec<Option<Var>>,
    pub train: bool,
    /// Record parameters as differentiable leaves.
    pub grad: bool,
    pub bn_updates: Vec<BnUpdate>,
}

impl<'a> Ctx<'a> {
    pub fn new(store: &'a ParamStore, train: bool, grad: bool) -> Self {
        Ctx { tape: Tape::new(), store, vars: vec![None; store.len()], train, grad, bn_updates: Vec::new() }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let p = self.store.param(id);
        let v = self.tape.leaf(p.value.clone(), self.grad && p.trainable);
        self.vars[id.0] = Some(v);
        v
    }

    pub fn var_of(&self, id: ParamId) -> Option<Var> {
        self.vars[id.0]
    }

    /// Gradients of every parameter that took part in the pass.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Tensor)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.and_then(|v| grads.get(v)).map(|g| (ParamId(i), g.clone())))
            .collect()
    }
}

impl ParamStore {
    /// `running = momentum·running + (1 − momentum)·batch`, with the unbiased
    /// batch variance.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate], momentum: f64) -> Result<()> {
        for u in updates {
            let m = u.stats.count as f64;
            let correction = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            let rm = self.get(u.mean);
            let mean = rm
                .data()
                .iter()
                .zip(&u.stats.mean)
                .map(|(r, b)| momentum * r + (1.0 - momentum) * b)
                .collect();
            let mean = Tensor::new(rm.shape(), mean)?;
            let rv = self.get(u.var);
            let var = rv
                .data()
                .iter()
                .zip(&u.stats.var)
                .map(|(r, b)| momentum * r + (1.0 - momentum) * b * correction)
                .collect();
            let var = Tensor::new(rv.shape(), var)?;
            self.set(u.mean, mean)?;
            self.set(u.var, var)?;
        }
        Ok(())
    }
}
