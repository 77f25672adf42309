//! Pixel-level precision, recall, F1 and AUC.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn from_scores(pred: &[f64], gt: &[bool], threshold: f64) -> Self {
        let mut c = Counts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            match (p >= threshold, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }

    /// `(precision, recall, f1)`; empty denominators give 0.
    pub fn prf1(&self) -> (f64, f64, f64) {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

pub fn prf1(pred: &[f64], gt: &[bool], threshold: f64) -> Result<(f64, f64, f64)> {
    check_len(pred, gt)?;
    Ok(Counts::from_scores(pred, gt, threshold).prf1())
}

/// Mann–Whitney estimate of `P(score⁺ > score⁻)` with ties counted as one
/// half. `None` when either class is empty.
pub fn auc(scores: &[f64], gt: &[bool]) -> Result<Option<f64>> {
    check_len(scores, gt)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("auc scores contain NaN".into()));
    }
    let pos = gt.iter().filter(|&&g| g).count();
    let neg = gt.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * idx[i..=j].iter().filter(|&&k| gt[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

fn check_len(a: &[f64], b: &[bool]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape("metrics", format!("{} scores vs {} labels", a.len(), b.len())));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub image_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the image has only one class.
    pub auc: Option<f64>,
    pub counts: Counts,
}

pub fn image_metrics(image_id: impl Into<String>, pred: &[f64], gt: &[bool], threshold: f64) -> Result<ImageMetrics> {
    check_len(pred, gt)?;
    let counts = Counts::from_scores(pred, gt, threshold);
    let (precision, recall, f1) = counts.prf1();
    Ok(ImageMetrics { image_id: image_id.into(), precision, recall, f1, auc: auc(pred, gt)?, counts })
}

/// Per-image rows plus their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub threshold: f64,
    pub images: Vec<ImageMetrics>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    /// Mean over images with both classes present.
    pub mean_auc: f64,
    /// Images left out of the AUC mean.
    pub auc_excluded: usize,
    /// Whether the mean row pools confusion counts across images instead of
    /// averaging per-image values.
    pub pooled: bool,
}

impl MetricReport {
    pub fn new(images: Vec<ImageMetrics>, threshold: f64, pooled: bool) -> Self {
        let n = images.len().max(1) as f64;
        let (mut mp, mut mr, mut mf) = if pooled {
            let mut total = Counts::default();
            images.iter().for_each(|m| total.add(&m.counts));
            total.prf1()
        } else {
            (0.0, 0.0, 0.0)
        };
        if !pooled {
            for m in &images {
                mp += m.precision / n;
                mr += m.recall / n;
                mf += m.f1 / n;
            }
        }
        let aucs: Vec<f64> = images.iter().filter_map(|m| m.auc).collect();
        let mean_auc = if aucs.is_empty() { 0.0 } else { aucs.iter().sum::<f64>() / aucs.len() as f64 };
        let auc_excluded = images.len() - aucs.len();
        MetricReport {
            threshold,
            images,
            mean_precision: mp,
            mean_recall: mr,
            mean_f1: mf,
            mean_auc,
            auc_excluded,
            pooled,
        }
    }

    /// `image_id,precision,recall,f1,auc` rows with six decimals and a final
    /// `MEAN` row. Single-class images leave the AUC cell empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,precision,recall,f1,auc\n");
        let auc = |a: Option<f64>| a.map(|v| format!("{v:.6}")).unwrap_or_default();
        for m in &self.images {
            out.push_str(&format!("{},{:.6},{:.6},{:.6},{}\n", m.image_id, m.precision, m.recall, m.f1, auc(m.auc)));
        }
        out.push_str(&format!(
            "MEAN,{:.6},{:.6},{:.6},{:.6}\n",
            self.mean_precision, self.mean_recall, self.mean_f1, self.mean_auc
        ));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf1_examples() {
        // TP=2, FP=1, FN=1
        let pred = [0.9, 0.8, 0.7, 0.1, 0.2];
        let gt = [true, true, false, true, false];
        let (p, r, f) = prf1(&pred, &gt, 0.5).unwrap();
        for v in [p, r, f] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(prf1(&[1.0, 0.0], &[true, false], 0.5).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(prf1(&[0.0, 0.0], &[true, false], 0.5).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap(), Some(1.0));
        assert_eq!(auc(&[0.9, 0.6, 0.4, 0.1], &[true, false, true, false]).unwrap(), Some(0.75));
        assert_eq!(auc(&[0.5; 4], &[true, false, true, false]).unwrap(), Some(0.5));
        assert_eq!(auc(&[0.5; 2], &[true, true]).unwrap(), None);
    }

    #[test]
    fn csv_has_mean_row() {
        let a = image_metrics("a", &[0.9, 0.1], &[true, false], 0.5).unwrap();
        let b = image_metrics("b", &[0.9, 0.9], &[true, true], 0.5).unwrap();
        let r = MetricReport::new(vec![a, b], 0.5, false);
        assert_eq!(r.auc_excluded, 1);
        let csv = r.to_csv();
        assert!(csv.ends_with("MEAN,1.000000,1.000000,1.000000,1.000000\n"), "{csv}");
        assert!(csv.contains("\nb,1.000000,1.000000,1.000000,\n"));
    }
}
