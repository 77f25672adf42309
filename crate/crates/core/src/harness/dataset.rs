//! Manifest rows turned into network-ready tensors.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::image_io::{read_image, read_mask, write_mask};
use crate::data::morphology::{edge_gt, BinaryMask, StructuringElement};
use crate::data::{Image, Manifest, SampleRecord};
use crate::error::{Error, Result};
use crate::nn::{normalize_input, NedbConfig};
use crate::par;
use crate::tensor::{ops, Shape, Tensor};

use super::config::EdgeSource;

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    /// Input image at network resolution, as read (BGR byte values).
    pub raw: Tensor,
    /// Normalized `1×3×S×S` input.
    pub image: Tensor,
    /// `1×1×S×S` region target.
    pub mask: Tensor,
    /// `1×1×S/4×S/4` edge target.
    pub edge: Tensor,
}

fn mask_tensor(m: &BinaryMask) -> Tensor {
    Tensor::from_parts(Shape::new(1, 1, m.height(), m.width()), m.to_f64())
}

/// Bilinear resize of a 0/1 map, thresholded at 0.5.
fn resize_binary(t: &Tensor, size: usize) -> Result<Tensor> {
    if t.shape().h == size && t.shape().w == size {
        return Ok(t.clone());
    }
    ops::resize_bilinear(t, size, size)?.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
}

/// Full-resolution edge map pooled to 1/4 with a 4×4, stride-4 max.
pub fn edge_target(full: &Tensor) -> Result<Tensor> {
    Ok(ops::maxpool2d(full, 4, 4, 0)?.0)
}

pub fn sample_from_parts(id: String, img: &Image, mask: &BinaryMask, edge: &BinaryMask, size: usize) -> Result<Sample> {
    if (img.height, img.width) != (mask.height(), mask.width()) {
        return Err(Error::shape("sample", format!("{id}: image and mask extents differ")));
    }
    let mut raw = img.to_bgr_tensor()?;
    if img.height != size || img.width != size {
        raw = ops::resize_bilinear(&raw, size, size)?;
    }
    let image = normalize_input(&raw)?;
    let mask = resize_binary(&mask_tensor(mask), size)?;
    let edge = edge_target(&resize_binary(&mask_tensor(edge), size)?)?;
    Ok(Sample { id, raw, image, mask, edge })
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string()
}

pub fn load_samples(manifest: &Manifest, cfg: &NedbConfig, source: EdgeSource) -> Result<Vec<Sample>> {
    if manifest.is_empty() {
        return Err(Error::InvalidArgument(format!("manifest in {} has no rows", manifest.dir.display())));
    }
    let se = StructuringElement::new(cfg.edge_shape, cfg.edge_size)?;
    let loaded = par::map_slice(&manifest.records, |r| -> Result<Sample> {
        let img = read_image(&manifest.resolve(&r.image))?;
        let mask = read_mask(&manifest.resolve(&r.mask))?;
        let edge = match (&r.edge, source) {
            (Some(e), EdgeSource::Manifest) => read_mask(&manifest.resolve(e))?,
            _ => edge_gt(&mask, &se),
        };
        sample_from_parts(stem(&r.image), &img, &mask, &edge, cfg.input_size)
    });
    loaded.into_iter().collect()
}

/// Derive edge targets for every row of `manifest_path` with `se`, writing
/// `edges/<row>.pgm` and a manifest pointing at them under `out`. Image and
/// mask paths are rewritten as absolute paths.
pub fn write_edge_gt(manifest_path: &Path, se: &StructuringElement, out: &Path) -> Result<Manifest> {
    let manifest = Manifest::read(manifest_path)?;
    let edges_dir = out.join("edges");
    fs::create_dir_all(&edges_dir).map_err(|e| Error::io(&edges_dir, e))?;
    let absolute = |p: PathBuf| std::path::absolute(&p).map_err(|e| Error::io(&p, e));
    let mut records = Vec::with_capacity(manifest.len());
    for (i, r) in manifest.records.iter().enumerate() {
        let mask_path = manifest.resolve(&r.mask);
        let mask = read_mask(&mask_path).map_err(|e| {
            Error::InvalidArgument(format!("manifest row {} ({}): {e}", i + 1, r.mask.display()))
        })?;
        let edge = PathBuf::from(format!("edges/{i:05}.pgm"));
        write_mask(&out.join(&edge), &edge_gt(&mask, se))?;
        records.push(SampleRecord { image: absolute(manifest.resolve(&r.image))?, mask: absolute(mask_path)?, edge: Some(edge) });
    }
    let m = Manifest { dir: out.to_path_buf(), records };
    m.write(&out.join("manifest.csv"))?;
    Ok(m)
}

/// Flip rows (`vertical`) and/or columns (`horizontal`) of every plane.
pub fn flip(t: &Tensor, vertical: bool, horizontal: bool) -> Tensor {
    if !vertical && !horizontal {
        return t.clone();
    }
    let s = t.shape();
    Tensor::from_fn(s, |n, c, h, w| {
        let hh = if vertical { s.h - 1 - h } else { h };
        let ww = if horizontal { s.w - 1 - w } else { w };
        t.at(n, c, hh, ww)
    })
    .expect("finite input")
}
