//! Metric reports and prediction overlays.

use std::fs;
use std::path::Path;

use crate::data::image_io::{write_image, Image};
use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::metrics::{image_metrics, MetricReport};
use crate::nn::{checkpoint, NedbModel};
use crate::par;
use crate::tensor::Tensor;

use super::config::EdgeSource;
use super::dataset::{load_samples, Sample};

/// Predicted mask of one sample.
pub fn predict_mask(model: &NedbModel, sample: &Sample) -> Result<Tensor> {
    Ok(model.predict(&sample.image)?.0)
}

/// Per-image metrics, computed independently and collected in input order.
pub fn evaluate(model: &NedbModel, samples: &[Sample], threshold: f64, pooled: bool) -> Result<(MetricReport, Vec<Tensor>)> {
    let results = par::map_slice(samples, |s| -> Result<_> {
        let pred = predict_mask(model, s)?;
        let gt: Vec<bool> = s.mask.data().iter().map(|&v| v >= 0.5).collect();
        Ok((image_metrics(s.id.clone(), pred.data(), &gt, threshold)?, pred))
    });
    let mut rows = Vec::with_capacity(samples.len());
    let mut preds = Vec::with_capacity(samples.len());
    for r in results {
        let (m, p) = r?;
        rows.push(m);
        preds.push(p);
    }
    Ok((MetricReport::new(rows, threshold, pooled), preds))
}

/// Input with the positive prediction tinted red.
pub fn overlay(sample: &Sample, pred: &Tensor, threshold: f64) -> Result<Image> {
    let mut img = Image::from_bgr_tensor(&sample.raw, 0)?;
    let w = img.width;
    for (i, &p) in pred.data().iter().enumerate() {
        if p >= threshold {
            let (r, c) = (i / w, i % w);
            for (ch, tint) in [255.0, 0.0, 0.0].into_iter().enumerate() {
                let v = 0.5 * img.get(r, c, ch) as f64 + 0.5 * tint;
                img.set(r, c, ch, v.round() as u8);
            }
        }
    }
    Ok(img)
}

/// Evaluate a checkpoint on a manifest; writes `metrics.csv` and, when
/// asked, `overlays/<id>.ppm` under `out`.
pub fn eval_checkpoint(
    checkpoint_path: &Path,
    manifest_path: &Path,
    out: &Path,
    threshold: f64,
    pooled: bool,
    overlays: bool,
) -> Result<MetricReport> {
    let model = checkpoint::load(checkpoint_path)?;
    let manifest = Manifest::read(manifest_path)?;
    let samples = load_samples(&manifest, &model.config, EdgeSource::Manifest)?;
    let (report, preds) = evaluate(&model, &samples, threshold, pooled)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.write_csv(&out.join("metrics.csv"))?;
    if overlays {
        let dir = out.join("overlays");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (s, p) in samples.iter().zip(&preds) {
            write_image(&dir.join(format!("{}.ppm", s.id)), &overlay(s, p, threshold)?)?;
        }
    }
    Ok(report)
}
