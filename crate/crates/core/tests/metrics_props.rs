use nedb::loss::{combined_loss, dice_loss};
use nedb::metrics::{auc, image_metrics, prf1, MetricReport};
use proptest::prelude::*;

fn scored_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..=64).prop_flat_map(|n| {
        // coarse scores make ties common
        (prop::collection::vec((0u8..=20).prop_map(|v| v as f64 / 20.0), n), prop::collection::vec(any::<bool>(), n))
    })
}

fn brute_prf1(pred: &[f64], gt: &[bool], thr: f64) -> (f64, f64, f64) {
    let tp = pred.iter().zip(gt).filter(|(p, g)| **p >= thr && **g).count() as f64;
    let predicted = pred.iter().filter(|p| **p >= thr).count() as f64;
    let actual = gt.iter().filter(|g| **g).count() as f64;
    let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let r = if actual > 0.0 { tp / actual } else { 0.0 };
    let f = if tp > 0.0 { 2.0 * tp / (predicted + actual) } else { 0.0 };
    (p, r, f)
}

fn brute_auc(s: &[f64], gt: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = s.iter().zip(gt).filter(|(_, g)| **g).map(|(v, _)| *v).collect();
    let neg: Vec<f64> = s.iter().zip(gt).filter(|(_, g)| !**g).map(|(v, _)| *v).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

proptest! {
    #[test]
    fn dice_is_bounded(p in prop::collection::vec(0.0f64..1.0, 1..50), seed in any::<u64>()) {
        let g: Vec<f64> = p.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as f64).collect();
        let l = dice_loss(&p, &g).unwrap();
        prop_assert!((0.0..1.0).contains(&l));
    }

    /// Raising a prediction on a positive pixel never increases the loss.
    #[test]
    fn dice_rewards_true_positives((p, g) in scored_mask(), bump in 0.0f64..1.0) {
        let g: Vec<f64> = g.iter().map(|&b| b as u8 as f64).collect();
        let base = dice_loss(&p, &g).unwrap();
        for i in 0..p.len() {
            if g[i] == 1.0 {
                let mut q = p.clone();
                q[i] = (q[i] + bump).min(1.0);
                prop_assert!(dice_loss(&q, &g).unwrap() <= base + 1e-12);
            }
        }
    }

    #[test]
    fn combined_is_an_affine_mix(r in 0.0f64..1.0, e in 0.0f64..1.0, a in 0.0f64..=1.0) {
        let l = combined_loss(r, e, a);
        prop_assert!((l - (a * r + (1.0 - a) * e)).abs() < 1e-15);
        prop_assert!(l >= r.min(e) - 1e-15 && l <= r.max(e) + 1e-15);
    }

    #[test]
    fn metrics_match_brute_force((s, g) in scored_mask(), thr in 0.0f64..1.0) {
        let (p, r, f) = prf1(&s, &g, thr).unwrap();
        let (bp, br, bf) = brute_prf1(&s, &g, thr);
        prop_assert!((p - bp).abs() < 1e-12 && (r - br).abs() < 1e-12 && (f - bf).abs() < 1e-12);
        match (auc(&s, &g).unwrap(), brute_auc(&s, &g)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn auc_ignores_monotone_rescaling((s, g) in scored_mask(), k in 0.1f64..10.0, c in -5.0f64..5.0) {
        let t: Vec<f64> = s.iter().map(|v| (k * v + c).exp()).collect();
        prop_assert_eq!(auc(&s, &g).unwrap(), auc(&t, &g).unwrap());
    }

    #[test]
    fn report_means_are_per_image_averages(items in prop::collection::vec(scored_mask(), 1..6)) {
        let rows: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, (s, g))| image_metrics(format!("img{i}"), s, g, 0.5).unwrap())
            .collect();
        let rep = MetricReport::new(rows.clone(), 0.5, false);
        let mean_f1 = rows.iter().map(|r| r.f1).sum::<f64>() / rows.len() as f64;
        prop_assert!((rep.mean_f1 - mean_f1).abs() < 1e-12);
        let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
        prop_assert_eq!(rep.auc_excluded, rows.len() - aucs.len());
        let csv = rep.to_csv();
        prop_assert_eq!(csv.lines().count(), rows.len() + 2);
        prop_assert!(csv.lines().last().unwrap().starts_with("MEAN,"));
    }
}
