//! Registry of finite-difference checks: every tape op, the attention block,
//! the constrained front end and the assembled model.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{non_local_on_tape, DistanceMatrix, NonLocalVars};
use crate::constrained::{ChannelMapping, ConstrainedKernelBank, InitScheme, ProjectionMode};
use crate::error::Result;
use crate::loss::combined_loss_on_tape;
use crate::nn::{NedbConfig, NedbModel};
use crate::tensor::gradcheck::{check_gradients, relative_error, CheckConfig, CheckReport};
use crate::tensor::{OpKind, Shape, Tape, Tensor, Var};

/// Relative tolerance of the whole-model check.
pub const MODEL_TOLERANCE: f64 = 1e-2;
/// Central-difference step of the whole-model check. The network is full of
/// ReLU and max-pool kinks; a step this small keeps each probe on one linear
/// piece for almost every coordinate.
pub const MODEL_STEP: f64 = 1e-5;
/// Parameters sampled by the whole-model check.
pub const MODEL_COORDS: usize = 10;

type CaseFn = fn(&mut ChaCha8Rng, &CheckConfig) -> Result<CheckReport>;

pub struct Case {
    pub name: &'static str,
    /// Tape op this case isolates, if it isolates one.
    pub op: Option<OpKind>,
    run: CaseFn,
}

impl Case {
    pub fn check(&self, rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
        (self.run)(rng, cfg)
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: &'static str,
    pub report: CheckReport,
    pub tolerance: f64,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor {
    let data = (0..shape.numel()).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape, data).expect("finite")
}

/// Values with magnitude in [0.1, 1] and random sign, clear of ReLU's kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    let data = (0..shape.numel())
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("finite")
}

/// Distinct values 0.01 apart in random order, so max-pool winners are stable.
fn distinct(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    let mut data: Vec<f64> = (0..shape.numel()).map(|i| i as f64 * 0.01 - 0.3).collect();
    data.shuffle(rng);
    Tensor::new(shape, data).expect("finite")
}

/// `Σ y ⊙ R` for a fixed random `R`, so every output element matters.
fn weighted_sum(tape: &mut Tape, y: Var, r: &Tensor) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let p = tape.mul(y, rv)?;
    tape.sum(p)
}

fn probe(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    uniform(rng, shape, -1.0, 1.0)
}

macro_rules! unary_case {
    ($rng:ident, $cfg:ident, $input:expr, $out:expr, |$t:ident, $x:ident| $body:expr) => {{
        let x = $input;
        let r = probe($rng, $out);
        check_gradients(
            &[x],
            |$t: &mut Tape, v: &[Var]| {
                let $x = v[0];
                let y = $body?;
                weighted_sum($t, y, &r)
            },
            $cfg,
        )
    }};
}

fn conv2d(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let x = uniform(rng, Shape::new(2, 2, 5, 5), -1.0, 1.0);
    let w = uniform(rng, Shape::new(3, 2, 3, 3), -1.0, 1.0);
    let b = uniform(rng, Shape::new(3, 1, 1, 1), -1.0, 1.0);
    let r1 = probe(rng, Shape::new(2, 3, 5, 5));
    let r2 = probe(rng, Shape::new(2, 3, 3, 3));
    check_gradients(
        &[x, w, b],
        |t: &mut Tape, v: &[Var]| {
            let y1 = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            let y2 = t.conv2d(v[0], v[1], None, 2, 1)?;
            let a = weighted_sum(t, y1, &r1)?;
            let b = weighted_sum(t, y2, &r2)?;
            t.add(a, b)
        },
        cfg,
    )
}

fn batchnorm_train(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let x = uniform(rng, Shape::new(3, 2, 2, 2), -1.0, 1.0);
    let g = uniform(rng, Shape::new(2, 1, 1, 1), 0.5, 1.5);
    let b = uniform(rng, Shape::new(2, 1, 1, 1), -0.5, 0.5);
    let r = probe(rng, Shape::new(3, 2, 2, 2));
    check_gradients(
        &[x, g, b],
        |t: &mut Tape, v: &[Var]| {
            let (y, _) = t.batchnorm_train(v[0], v[1], v[2], 1e-5)?;
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn batchnorm_eval(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let x = uniform(rng, Shape::new(2, 2, 2, 2), -1.0, 1.0);
    let g = uniform(rng, Shape::new(2, 1, 1, 1), 0.5, 1.5);
    let b = uniform(rng, Shape::new(2, 1, 1, 1), -0.5, 0.5);
    let r = probe(rng, Shape::new(2, 2, 2, 2));
    let mean = [0.1, -0.2];
    let var = [0.5, 2.0];
    check_gradients(
        &[x, g, b],
        |t: &mut Tape, v: &[Var]| {
            let y = t.batchnorm_eval(v[0], v[1], v[2], &mean, &var, 1e-5)?;
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn relu(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let s = Shape::new(2, 2, 3, 3);
    unary_case!(rng, cfg, away_from_zero(rng, s), s, |t, x| t.relu(x))
}

fn sigmoid(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let s = Shape::new(2, 2, 3, 3);
    unary_case!(rng, cfg, uniform(rng, s, -3.0, 3.0), s, |t, x| t.sigmoid(x))
}

fn binary(rng: &mut ChaCha8Rng, cfg: &CheckConfig, mul: bool) -> Result<CheckReport> {
    let s = Shape::new(2, 2, 2, 3);
    let a = uniform(rng, s, -1.0, 1.0);
    let b = uniform(rng, s, -1.0, 1.0);
    let r = probe(rng, s);
    check_gradients(
        &[a, b],
        |t: &mut Tape, v: &[Var]| {
            let y = if mul { t.mul(v[0], v[1])? } else { t.add(v[0], v[1])? };
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn add(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    binary(rng, cfg, false)
}

fn mul(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    binary(rng, cfg, true)
}

fn mul_channel(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let x = uniform(rng, Shape::new(2, 3, 2, 2), -1.0, 1.0);
    let s = uniform(rng, Shape::new(2, 3, 1, 1), -1.0, 1.0);
    let r = probe(rng, Shape::new(2, 3, 2, 2));
    check_gradients(
        &[x, s],
        |t: &mut Tape, v: &[Var]| {
            let y = t.mul_channel(v[0], v[1])?;
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn concat(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let a = uniform(rng, Shape::new(2, 1, 2, 2), -1.0, 1.0);
    let b = uniform(rng, Shape::new(2, 3, 2, 2), -1.0, 1.0);
    let r = probe(rng, Shape::new(2, 4, 2, 2));
    check_gradients(
        &[a, b],
        |t: &mut Tape, v: &[Var]| {
            let y = t.concat_channels(&[v[0], v[1]])?;
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn slice(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    unary_case!(rng, cfg, uniform(rng, Shape::new(2, 4, 2, 2), -1.0, 1.0), Shape::new(2, 2, 2, 2), |t, x| t
        .slice_channels(x, 1, 2))
}

fn upsample(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let x = uniform(rng, Shape::new(1, 2, 3, 2), -1.0, 1.0);
    let r2 = probe(rng, Shape::new(1, 2, 6, 4));
    let r4 = probe(rng, Shape::new(1, 2, 12, 8));
    check_gradients(
        &[x],
        |t: &mut Tape, v: &[Var]| {
            let a = t.upsample(v[0], 2)?;
            let b = t.upsample(v[0], 4)?;
            let a = weighted_sum(t, a, &r2)?;
            let b = weighted_sum(t, b, &r4)?;
            t.add(a, b)
        },
        cfg,
    )
}

fn maxpool(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    unary_case!(rng, cfg, distinct(rng, Shape::new(1, 2, 6, 6)), Shape::new(1, 2, 3, 3), |t, x| t
        .maxpool2d(x, 3, 2, 1))
}

fn global_avgpool(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    unary_case!(rng, cfg, uniform(rng, Shape::new(2, 3, 3, 2), -1.0, 1.0), Shape::new(2, 3, 1, 1), |t, x| t
        .global_avgpool(x))
}

fn matmul(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let a = uniform(rng, Shape::new(2, 1, 3, 4), -1.0, 1.0);
    let b = uniform(rng, Shape::new(2, 1, 4, 2), -1.0, 1.0);
    let r = probe(rng, Shape::new(2, 1, 3, 2));
    check_gradients(
        &[a, b],
        |t: &mut Tape, v: &[Var]| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn softmax(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let s = Shape::new(2, 1, 3, 4);
    unary_case!(rng, cfg, uniform(rng, s, -2.0, 2.0), s, |t, x| t.softmax_rows(x))
}

fn transpose(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    unary_case!(rng, cfg, uniform(rng, Shape::new(2, 1, 3, 4), -1.0, 1.0), Shape::new(2, 1, 4, 3), |t, x| t
        .transpose_last(x))
}

fn reshape(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    unary_case!(rng, cfg, uniform(rng, Shape::new(2, 3, 2, 2), -1.0, 1.0), Shape::new(2, 1, 3, 4), |t, x| t
        .reshape(x, Shape::new(2, 1, 3, 4)))
}

fn scale(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let s = Shape::new(1, 2, 2, 2);
    unary_case!(rng, cfg, uniform(rng, s, -1.0, 1.0), s, |t, x| t.scale(x, -1.7))
}

fn div_const(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let d = Arc::new(uniform(rng, Shape::new(1, 1, 3, 3), 1.0, 3.0));
    let s = Shape::new(2, 2, 3, 3);
    unary_case!(rng, cfg, uniform(rng, s, -1.0, 1.0), s, |t, x| t.div_const(x, Arc::clone(&d)))
}

fn sum(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let x = uniform(rng, Shape::new(2, 2, 2, 2), -1.0, 1.0);
    check_gradients(&[x], |t: &mut Tape, v: &[Var]| {
        let sq = t.mul(v[0], v[0])?;
        t.sum(sq)
    }, cfg)
}

fn dice(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let s = Shape::new(2, 1, 3, 3);
    let p = uniform(rng, s, 0.05, 0.95);
    let g = Tensor::new(s, (0..s.numel()).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect())?;
    check_gradients(&[p], |t: &mut Tape, v: &[Var]| t.dice_loss(v[0], &g, 1.0), cfg)
}

fn non_local(rng: &mut ChaCha8Rng, cfg: &CheckConfig, distance: bool) -> Result<CheckReport> {
    let (c, r) = (8, 1);
    let s = Shape::new(1, c, 3, 3);
    let x = uniform(rng, s, -1.0, 1.0);
    let mut w = |o: usize, i: usize| uniform(rng, Shape::new(o, i, 1, 1), -0.8, 0.8);
    let mut inputs = vec![x, w(r, c), w(r, 1), w(r, c), w(r, 1), w(c, c), w(c, 1), w(c, c), w(c, 1)];
    // Without the distance division the key bias adds a per-row constant that
    // softmax cancels: its gradient is identically zero and a finite
    // difference only sees round-off. Hold it fixed in that case.
    let key_bias = (!distance).then(|| inputs.remove(4));
    let probe_t = probe(rng, s);
    let d = distance.then(|| DistanceMatrix::new(3, 3)).transpose()?;
    check_gradients(
        &inputs,
        |t: &mut Tape, v: &[Var]| {
            let mut v = v.to_vec();
            if let Some(kb) = &key_bias {
                let kb = t.constant(kb.clone());
                v.insert(4, kb);
            }
            let vars = NonLocalVars { query: (v[1], v[2]), key: (v[3], v[4]), value: (v[5], v[6]), out: (v[7], v[8]) };
            let (y, _) = non_local_on_tape(t, v[0], &vars, d.as_ref())?;
            weighted_sum(t, y, &probe_t)
        },
        cfg,
    )
}

fn attention_distance(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    non_local(rng, cfg, true)
}

fn attention_vanilla(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    non_local(rng, cfg, false)
}

fn constrained_front_end(rng: &mut ChaCha8Rng, cfg: &CheckConfig) -> Result<CheckReport> {
    let bank = ConstrainedKernelBank::uniform(3, InitScheme::LaplaceLikeD, ProjectionMode::Improved, ChannelMapping::Diagonal, 0)?;
    let img = uniform(rng, Shape::new(1, 3, 5, 5), -1.0, 1.0);
    let mut inputs = vec![img];
    for w in bank.weight_tensors() {
        let jitter = uniform(rng, w.shape(), -0.05, 0.05);
        inputs.push(Tensor::new(w.shape(), w.data().iter().zip(jitter.data()).map(|(a, b)| a + b).collect())?);
    }
    let r = probe(rng, Shape::new(1, 3, 5, 5));
    check_gradients(
        &inputs,
        |t: &mut Tape, v: &[Var]| {
            let y = bank.extract_on_tape(t, v[0], &v[1..])?;
            weighted_sum(t, y, &r)
        },
        cfg,
    )
}

fn model_loss(model: &NedbModel, x: &Tensor, mask: &Tensor, edge: &Tensor, alpha: f64) -> Result<f64> {
    let mut ctx = model.ctx(true, false);
    let xv = ctx.tape.constant(x.clone());
    let out = model.forward(&mut ctx, xv)?;
    let l = combined_loss_on_tape(&mut ctx.tape, out.mask, mask, out.edge, edge, alpha)?;
    Ok(ctx.tape.value(l.total).item())
}

/// Whole model at width 8 on 32×32 inputs: analytic against central
/// differences on randomly chosen parameter coordinates.
pub fn check_model(seed: u64, cfg: &CheckConfig) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6465_6c);
    let mut model = NedbModel::new(NedbConfig { input_size: 32, seed, ..NedbConfig::desk() })?;
    // give the zero-initialized attention outputs some weight so their
    // upstream parameters receive gradient
    for name in ["nl3.out.weight", "nl4.out.weight"] {
        if let Some(id) = model.store.id(name) {
            let s = model.store.get(id).shape();
            model.store.set(id, uniform(&mut rng, s, -0.2, 0.2))?;
        }
    }
    let x = uniform(&mut rng, Shape::new(2, 3, 32, 32), -2.0, 2.0);
    let bin = |rng: &mut ChaCha8Rng, s: Shape| {
        Tensor::new(s, (0..s.numel()).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect()).expect("finite")
    };
    let mask = bin(&mut rng, Shape::new(2, 1, 32, 32));
    let edge = bin(&mut rng, Shape::new(2, 1, 8, 8));
    let alpha = 0.3;

    let grads = {
        let mut ctx = model.ctx(true, true);
        ctx.tape.set_corruption(cfg.corrupt);
        let xv = ctx.tape.constant(x.clone());
        let out = model.forward(&mut ctx, xv)?;
        let l = combined_loss_on_tape(&mut ctx.tape, out.mask, &mask, out.edge, &edge, alpha)?;
        let g = ctx.tape.backward(l.total)?;
        ctx.param_grads(&g)
    };
    let mut candidates = model.store.trainable_ids();
    candidates.shuffle(&mut rng);

    let mut report =
        CheckReport { max_rel_err: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0, checked: 0, passed: true };
    let mut skipped = 0;
    let base_loss = model_loss(&model, &x, &mask, &edge, alpha)?;
    for id in candidates {
        if report.checked == MODEL_COORDS {
            break;
        }
        let base = model.store.get(id).clone();
        let e = rng.gen_range(0..base.shape().numel());
        let analytic = grads.iter().find(|(g, _)| *g == id).map_or(0.0, |(_, t)| t.data()[e]);
        let mut eval = |delta: f64| -> Result<f64> {
            let mut d = base.to_vec();
            d[e] += delta;
            model.store.set(id, Tensor::new(base.shape(), d)?)?;
            let l = model_loss(&model, &x, &mask, &edge, alpha);
            model.store.set(id, base.clone())?;
            l
        };
        let (up, down) = (eval(MODEL_STEP)?, eval(-MODEL_STEP)?);
        // A coordinate whose one-sided slopes disagree straddles a ReLU or
        // max-pool switch; its derivative is undefined there, so draw another.
        let (fwd, bwd) = ((up - base_loss) / MODEL_STEP, (base_loss - down) / MODEL_STEP);
        if relative_error(fwd, bwd, cfg.floor) > MODEL_TOLERANCE {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * MODEL_STEP);
        let err = relative_error(analytic, numeric, cfg.floor);
        if err > report.max_rel_err || report.checked == 0 {
            report.max_rel_err = err;
            report.worst = (id.index(), e);
            report.analytic = analytic;
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    log::debug!("model gradcheck skipped {skipped} non-smooth coordinates");
    if report.checked < MODEL_COORDS {
        return Err(crate::error::Error::InvalidArgument(format!(
            "only {} smooth coordinates found for the model check",
            report.checked
        )));
    }
    report.passed = report.max_rel_err < MODEL_TOLERANCE;
    Ok(report)
}

pub fn registry() -> Vec<Case> {
    macro_rules! cases {
        ($($name:literal => $f:ident $(: $op:ident)?),* $(,)?) => {
            vec![$(Case { name: $name, op: None $(.or(Some(OpKind::$op)))?, run: $f }),*]
        };
    }
    cases![
        "conv2d" => conv2d: Conv2d,
        "batchnorm_train" => batchnorm_train: BatchNormTrain,
        "batchnorm_eval" => batchnorm_eval: BatchNormEval,
        "relu" => relu: Relu,
        "sigmoid" => sigmoid: Sigmoid,
        "add" => add: Add,
        "mul" => mul: Mul,
        "mul_channel" => mul_channel: MulChannel,
        "concat_channels" => concat: Concat,
        "slice_channels" => slice: SliceChannels,
        "upsample" => upsample: Upsample,
        "maxpool2d" => maxpool: MaxPool,
        "global_avgpool" => global_avgpool: GlobalAvgPool,
        "matmul" => matmul: MatMul,
        "softmax_rows" => softmax: Softmax,
        "transpose_last" => transpose: Transpose,
        "reshape" => reshape: Reshape,
        "scale" => scale: Scale,
        "div_const" => div_const: DivConst,
        "sum" => sum: Sum,
        "dice_loss" => dice: Dice,
        "attention_distance" => attention_distance,
        "attention_vanilla" => attention_vanilla,
        "constrained_front_end" => constrained_front_end,
    ]
}

/// Tape op named like its registry case, e.g. `conv2d`.
pub fn parse_op(name: &str) -> Option<OpKind> {
    registry().into_iter().find(|c| c.name == name).and_then(|c| c.op)
}

/// Run every registered check, then the whole-model check.
pub fn run_all(seed: u64, cfg: &CheckConfig) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for (i, case) in registry().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let report = (case.run)(&mut rng, cfg)?;
        out.push(CaseResult { name: case.name, report, tolerance: cfg.tolerance });
    }
    out.push(CaseResult { name: "model", report: check_model(seed, cfg)?, tolerance: MODEL_TOLERANCE });
    Ok(out)
}

/// `op,checked,max_rel_err,tolerance,status` table.
pub fn table(results: &[CaseResult]) -> String {
    let mut out = String::from("op,checked,max_rel_err,tolerance,status\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{:.6e},{:.0e},{}\n",
            r.name,
            r.report.checked,
            r.report.max_rel_err,
            r.tolerance,
            if r.report.passed { "pass" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_is_registered() {
        let reg = registry();
        assert!(reg.len() > 20);
        assert_eq!(parse_op("maxpool2d"), Some(OpKind::MaxPool));
        assert_eq!(parse_op("attention_distance"), None);
        let covered: Vec<OpKind> = reg.iter().filter_map(|c| c.op).collect();
        assert_eq!(covered.len(), 21);
    }

    #[test]
    fn registry_passes_and_corruption_is_caught() {
        let cfg = CheckConfig::default();
        for (i, case) in registry().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let r = (case.run)(&mut rng, &cfg).unwrap();
            assert!(r.passed, "{}: {:?}", case.name, r);
            assert!(r.checked > 0);
            if let Some(op) = case.op {
                let bad = CheckConfig { corrupt: Some(op), ..cfg };
                let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                assert!(!(case.run)(&mut rng, &bad).unwrap().passed, "{} corruption slipped through", case.name);
            }
        }
    }

    #[test]
    fn model_check_passes_and_flags_corruption() {
        let cfg = CheckConfig::default();
        let r = check_model(3, &cfg).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, MODEL_COORDS);
        let bad = check_model(3, &CheckConfig { corrupt: Some(OpKind::Conv2d), ..cfg }).unwrap();
        assert!(!bad.passed);
    }
}
