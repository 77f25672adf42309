//! Soft Dice and the weighted region/edge objective.

use crate::error::{Error, Result};
use crate::tensor::{ops, Tape, Tensor, Var};

/// Smoothing term of the Dice ratio.
pub const DICE_EPS: f64 = 1.0;

/// `1 − (2Σpg + ε) / (Σp² + Σg² + ε)`.
pub fn dice_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape("dice_loss", format!("{} predictions vs {} targets", pred.len(), gt.len())));
    }
    Ok(ops::dice_loss(pred, gt, DICE_EPS))
}

/// `α·region + (1 − α)·edge`.
pub fn combined_loss(region: f64, edge: f64, alpha: f64) -> f64 {
    alpha * region + (1.0 - alpha) * edge
}

/// Region, edge and total loss nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub region: Var,
    pub edge: Var,
    pub total: Var,
}

pub fn combined_loss_on_tape(
    tape: &mut Tape,
    mask: Var,
    mask_gt: &Tensor,
    edge: Var,
    edge_gt: &Tensor,
    alpha: f64,
) -> Result<LossVars> {
    let region = tape.dice_loss(mask, mask_gt, DICE_EPS)?;
    let edge = tape.dice_loss(edge, edge_gt, DICE_EPS)?;
    let a = tape.scale(region, alpha)?;
    let b = tape.scale(edge, 1.0 - alpha)?;
    let total = tape.add(a, b)?;
    Ok(LossVars { region, edge, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn examples() {
        assert_eq!(dice_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap(), 0.0);
        let mut p = vec![0.0; 200];
        let mut g = vec![0.0; 200];
        p[..100].fill(1.0);
        g[100..].fill(1.0);
        assert!((dice_loss(&p, &g).unwrap() - (1.0 - 1.0 / 201.0)).abs() < 1e-15);
        assert_eq!(dice_loss(&[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
        assert!(dice_loss(&[0.0; 3], &[0.0; 4]).is_err());
        assert!((combined_loss(0.5, 0.1, 0.3) - 0.22).abs() < 1e-15);
        assert_eq!(combined_loss(0.5, 0.1, 1.0), 0.5);
    }

    #[test]
    fn tape_matches_plain() {
        let s = Shape::new(1, 1, 2, 2);
        let mut t = Tape::new();
        let m = t.leaf(Tensor::new(s, vec![0.9, 0.2, 0.4, 0.1]).unwrap(), true);
        let e = t.leaf(Tensor::new(s, vec![0.3, 0.6, 0.5, 0.8]).unwrap(), true);
        let mg = Tensor::new(s, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let eg = Tensor::new(s, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        let l = combined_loss_on_tape(&mut t, m, &mg, e, &eg, 0.3).unwrap();
        let r = dice_loss(t.value(m).data(), mg.data()).unwrap();
        let ed = dice_loss(t.value(e).data(), eg.data()).unwrap();
        assert!((t.value(l.total).item() - combined_loss(r, ed, 0.3)).abs() < 1e-15);
    }
}
