//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates forward values, so it is independent
//! of every adjoint in `tape.rs`.

use crate::error::Result;

use super::{OpKind, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Lower clamp for the relative-error denominator.
    pub floor: f64,
    pub corrupt: Option<OpKind>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { step: 1e-4, tolerance: 1e-3, floor: 1e-8, corrupt: None }
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub max_rel_err: f64,
    /// `(input, element)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Check every coordinate of every input.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, cfg: &CheckConfig) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.shape().numel()).map(move |e| (i, e)))
        .collect();
    check_coordinates(inputs, f, &coords, cfg)
}

/// Check only the listed `(input, element)` coordinates.
pub fn check_coordinates<F>(inputs: &[Tensor], f: F, coords: &[(usize, usize)], cfg: &CheckConfig) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    tape.set_corruption(cfg.corrupt);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |which: usize, elem: usize, delta: f64| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if i == which {
                    let mut d = x.to_vec();
                    d[elem] += delta;
                    t.leaf(Tensor::from_parts(x.shape(), d), false)
                } else {
                    t.leaf(x.clone(), false)
                }
            })
            .collect();
        let l = f(&mut t, &vars)?;
        Ok(t.value(l).item())
    };

    let mut report = CheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        passed: true,
    };
    for &(i, e) in coords {
        let analytic = grads.get(vars[i]).map_or(0.0, |g| g.data()[e]);
        let numeric = (eval(i, e, cfg.step)? - eval(i, e, -cfg.step)?) / (2.0 * cfg.step);
        let err = relative_error(analytic, numeric, cfg.floor);
        if err > report.max_rel_err || report.checked == 0 {
            report.max_rel_err = err;
            report.worst = (i, e);
            report.analytic = analytic;
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    report.passed = report.max_rel_err < cfg.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn quadratic_passes_and_corruption_is_caught() {
        let x = Tensor::new(Shape::new(1, 1, 1, 3), vec![0.3, -1.2, 2.0]).unwrap();
        let f = |t: &mut Tape, v: &[Var]| {
            let sq = t.mul(v[0], v[0])?;
            t.sum(sq)
        };
        let ok = check_gradients(&[x.clone()], f, &CheckConfig::default()).unwrap();
        assert!(ok.passed, "{ok:?}");
        let cfg = CheckConfig { corrupt: Some(OpKind::Mul), ..Default::default() };
        let bad = check_gradients(&[x], f, &cfg).unwrap();
        assert!(!bad.passed);
    }
}
