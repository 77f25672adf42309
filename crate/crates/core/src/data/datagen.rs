//! Synthetic copy-move and splice forgeries.
//!
//! An object is cut from a source image by its mask, rotated and scaled about
//! its bounding-box center with bilinear resampling, and pasted so that the
//! center lands on the requested point. Sources can be supplied as files or
//! drawn procedurally: smooth color fields with per-image sensor noise, so
//! that resampling and noise mismatch leave a detectable trace.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::par;

use super::image_io::{read_image, read_mask, to_byte, write_image, write_mask, Image};
use super::imgproc::{blur_plane, gaussian_kernel};
use super::manifest::{Manifest, SampleRecord};
use super::morphology::{edge_gt, BinaryMask, SeShape, StructuringElement};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForgeryKind {
    CopyMove,
    Splice,
}

impl fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForgeryKind::CopyMove => "copy-move",
            ForgeryKind::Splice => "splice",
        })
    }
}

impl FromStr for ForgeryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy-move" => Ok(ForgeryKind::CopyMove),
            "splice" => Ok(ForgeryKind::Splice),
            other => Err(Error::Parse(format!("unknown forgery kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForgeryParams {
    pub rotation_deg: f64,
    pub scale: f64,
    /// Destination `(x, y)` of the object's bounding-box center.
    pub paste: (f64, f64),
    /// Blur of the composite inside the boundary band; 0 disables it.
    pub blur_sigma: f64,
    pub kind: ForgeryKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forgery {
    pub image: Image,
    pub mask: BinaryMask,
}

/// Bounding-box center `(x, y)` of the set pixels.
pub fn object_center(mask: &BinaryMask) -> Option<(f64, f64)> {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    (r0 != usize::MAX).then(|| ((c0 + c1) as f64 / 2.0, (r0 + r1) as f64 / 2.0))
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-12 {
        r
    } else {
        v
    }
}

/// Destination-to-source coordinate map of the object transform.
#[derive(Clone, Copy, Debug)]
pub struct ObjectTransform {
    cos: f64,
    sin: f64,
    inv_scale: f64,
    center: (f64, f64),
    paste: (f64, f64),
}

impl ObjectTransform {
    pub fn new(center: (f64, f64), params: &ForgeryParams) -> Result<Self> {
        if !(params.scale > 0.0 && params.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {}", params.scale)));
        }
        let theta = params.rotation_deg.to_radians();
        Ok(ObjectTransform {
            cos: snap(theta.cos()),
            sin: snap(theta.sin()),
            inv_scale: 1.0 / params.scale,
            center,
            paste: params.paste,
        })
    }

    /// Source `(x, y)` sampled for destination pixel `(x, y)`.
    pub fn source_of(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = ((x - self.paste.0) * self.inv_scale, (y - self.paste.1) * self.inv_scale);
        // inverse rotation
        let sx = self.cos * dx + self.sin * dy;
        let sy = -self.sin * dx + self.cos * dy;
        (snap(sx + self.center.0), snap(sy + self.center.1))
    }
}

/// Bilinear sample with zero outside the plane.
fn sample_zero(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    let mut v = 0.0;
    for (yy, wy) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
        for (xx, wx) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
            if wy * wx != 0.0 {
                v += wy * wx * at(yy, xx);
            }
        }
    }
    v
}

/// Bilinear sample with edge-clamped coordinates.
fn sample_clamped(img: &Image, ch: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (img.width - 1) as f64);
    let y = y.clamp(0.0, (img.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let g = |r: usize, c: usize| img.get(r, c, ch) as f64;
    (1.0 - fy) * ((1.0 - fx) * g(y0, x0) + fx * g(y0, x1)) + fy * ((1.0 - fx) * g(y1, x0) + fx * g(y1, x1))
}

/// Paste the transformed object from `source` into `dest`.
pub fn generate_forgery(source: &Image, object: &BinaryMask, dest: &Image, params: &ForgeryParams) -> Result<Forgery> {
    if (object.height(), object.width()) != (source.height, source.width) {
        return Err(Error::shape("generate_forgery", "object mask and source image extents differ"));
    }
    if source.channels != dest.channels {
        return Err(Error::shape("generate_forgery", "source and destination channel counts differ"));
    }
    if params.kind == ForgeryKind::CopyMove && source != dest {
        return Err(Error::InvalidArgument("copy-move needs the same source and destination image".into()));
    }
    let center = object_center(object).ok_or_else(|| Error::InvalidArgument("object mask is empty".into()))?;
    let t = ObjectTransform::new(center, params)?;
    let alpha = object.to_f64();
    let (h, w) = (dest.height, dest.width);

    let mut image = dest.clone();
    let mut mask = BinaryMask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let (sx, sy) = t.source_of(c as f64, r as f64);
            if sample_zero(&alpha, object.height(), object.width(), sx, sy) >= 0.5 {
                mask.set(r, c, true);
                for ch in 0..dest.channels {
                    image.set(r, c, ch, to_byte(sample_clamped(source, ch, sx, sy)));
                }
            }
        }
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("pasted object falls entirely outside the canvas".into()));
    }
    if params.blur_sigma > 0.0 {
        blur_band(&mut image, &mask, params.blur_sigma);
    }
    Ok(Forgery { image, mask })
}

/// Replace pixels in the 5×5 elliptical boundary band by their blurred values.
fn blur_band(image: &mut Image, mask: &BinaryMask, sigma: f64) {
    let se = StructuringElement::new(SeShape::Ellipse, 5).expect("odd size");
    let band = edge_gt(mask, &se);
    let k = gaussian_kernel(sigma);
    let (h, w, nc) = (image.height, image.width, image.channels);
    for ch in 0..nc {
        let plane: Vec<f64> = (0..h * w).map(|i| image.data[i * nc + ch] as f64).collect();
        let blurred = blur_plane(&plane, h, w, &k);
        for (i, &inside) in band.data().iter().enumerate() {
            if inside {
                image.data[i * nc + ch] = to_byte(blurred[i]);
            }
        }
    }
}

/// Sampling ranges for forgery parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub count: usize,
    pub seed: u64,
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    pub blur_sigma: (f64, f64),
    /// Probability of a splice when more than one source is available.
    pub splice_prob: f64,
    /// Side of procedural sources.
    pub size: usize,
    /// Structuring element for the emitted edge masks.
    pub edge_shape: SeShape,
    pub edge_size: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            count: 200,
            seed: 0,
            rotation_deg: (-30.0, 30.0),
            scale: (0.5, 1.5),
            blur_sigma: (0.0, 1.5),
            splice_prob: 0.5,
            size: 64,
            edge_shape: SeShape::Ellipse,
            edge_size: 5,
        }
    }
}

/// A source image with candidate objects.
#[derive(Clone, Debug)]
pub struct Source {
    pub name: String,
    pub image: Image,
    pub objects: Vec<BinaryMask>,
}

/// Smooth color field plus Gaussian sensor noise of a per-image strength.
pub fn procedural_image(size: usize, rng: &mut ChaCha8Rng) -> Image {
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(40.0..215.0));
    let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let fx = rng.gen_range(0.5..2.5) * std::f64::consts::TAU / size as f64;
            let fy = rng.gen_range(0.5..2.5) * std::f64::consts::TAU / size as f64;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (fx, fy, phase, std::array::from_fn(|_| rng.gen_range(-25.0..25.0)))
        })
        .collect();
    let sigma = rng.gen_range(6.0..14.0);
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let mut img = Image::new(size, size, 3);
    for r in 0..size {
        for c in 0..size {
            for ch in 0..3 {
                let smooth: f64 = waves
                    .iter()
                    .map(|(fx, fy, ph, amp)| amp[ch] * (fx * c as f64 + fy * r as f64 + ph).sin())
                    .sum();
                img.set(r, c, ch, to_byte(base[ch] + smooth + noise.sample(rng)));
            }
        }
    }
    img
}

/// Random ellipse or convex polygon covering roughly 5–20% of the canvas.
pub fn procedural_object(size: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    let s = size as f64;
    let (cx, cy) = (rng.gen_range(0.3 * s..0.7 * s), rng.gen_range(0.3 * s..0.7 * s));
    if rng.gen_bool(0.5) {
        let (a, b) = (rng.gen_range(0.12 * s..0.25 * s), rng.gen_range(0.12 * s..0.25 * s));
        let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        BinaryMask::from_fn(size, size, |r, c| {
            let (dx, dy) = (c as f64 - cx, r as f64 - cy);
            let (u, v) = (dx * th.cos() + dy * th.sin(), -dx * th.sin() + dy * th.cos());
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        })
    } else {
        let n = rng.gen_range(3..7);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let verts: Vec<(f64, f64)> = angles
            .iter()
            .map(|t| {
                let rad = rng.gen_range(0.15 * s..0.28 * s);
                (cx + rad * t.cos(), cy + rad * t.sin())
            })
            .collect();
        BinaryMask::from_fn(size, size, |r, c| point_in_polygon(c as f64, r as f64, &verts))
    }
}

fn point_in_polygon(x: f64, y: f64, verts: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = verts.len() - 1;
    for i in 0..verts.len() {
        let (xi, yi) = verts[i];
        let (xj, yj) = verts[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Load `<stem>.ppm` images and `<stem>*.pgm` object masks from two
/// directories. Every image needs at least one object.
pub fn load_sources(images: &Path, objects: &Path) -> Result<Vec<Source>> {
    let mut names = list_files(images, "ppm")?;
    names.sort();
    let mut masks = list_files(objects, "pgm")?;
    masks.sort();
    if masks.is_empty() {
        return Err(Error::InvalidArgument(format!("no object masks (*.pgm) in {}", objects.display())));
    }
    let mut sources = Vec::new();
    for path in names {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let image = read_image(&path)?;
        let mut objs = Vec::new();
        for m in &masks {
            let mstem = m.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if mstem == stem || mstem.starts_with(&format!("{stem}_")) {
                let mask = read_mask(m)?;
                if (mask.height(), mask.width()) != (image.height, image.width) {
                    return Err(Error::shape("load_sources", format!("{} does not match {}", m.display(), path.display())));
                }
                if !mask.is_empty() {
                    objs.push(mask);
                }
            }
        }
        if objs.is_empty() {
            return Err(Error::InvalidArgument(format!("image {} has no non-empty object mask", path.display())));
        }
        sources.push(Source { name: stem, image, objects: objs });
    }
    if sources.is_empty() {
        return Err(Error::InvalidArgument(format!("no images (*.ppm) in {}", images.display())));
    }
    Ok(sources)
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().and_then(|s| s.to_str()) == Some(ext) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Per-sample log row.
#[derive(Clone, Debug, PartialEq)]
pub struct GenRecord {
    pub index: usize,
    pub seed: u64,
    pub source: String,
    pub dest: String,
    pub params: ForgeryParams,
    pub area: usize,
}

fn sample_params(rng: &mut ChaCha8Rng, cfg: &GenConfig, kind: ForgeryKind, center: (f64, f64), h: usize, w: usize) -> ForgeryParams {
    let range = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let rotation_deg = range(rng, cfg.rotation_deg);
    let scale = range(rng, cfg.scale);
    let blur_sigma = range(rng, cfg.blur_sigma);
    // integer paste points keep the bounding-box parity of the source
    let jitter = |rng: &mut ChaCha8Rng, c: f64, n: usize| {
        let lo = (0.25 * n as f64).max(0.0);
        let hi = 0.75 * n as f64;
        (c - c.floor()) + rng.gen_range(lo..hi).floor()
    };
    let paste = (jitter(rng, center.0, w), jitter(rng, center.1, h));
    ForgeryParams { rotation_deg, scale, paste, blur_sigma, kind }
}

/// One sample from file sources, or from fresh procedural sources when
/// `sources` is empty.
fn make_sample(index: usize, sources: &[Source], cfg: &GenConfig) -> Result<(Forgery, GenRecord)> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = if sources.len() == 1 {
        ForgeryKind::CopyMove
    } else if rng.gen_bool(cfg.splice_prob.clamp(0.0, 1.0)) {
        ForgeryKind::Splice
    } else {
        ForgeryKind::CopyMove
    };
    let (src_img, obj, dst_img, src_name, dst_name) = if sources.is_empty() {
        let dst = procedural_image(cfg.size, &mut rng);
        let (src, sname) = match kind {
            ForgeryKind::Splice => (procedural_image(cfg.size, &mut rng), format!("procedural:{seed}:b")),
            ForgeryKind::CopyMove => (dst.clone(), format!("procedural:{seed}:a")),
        };
        let obj = procedural_object(cfg.size, &mut rng);
        (src, obj, dst, sname, format!("procedural:{seed}:a"))
    } else {
        let d = rng.gen_range(0..sources.len());
        let s = match kind {
            ForgeryKind::CopyMove => d,
            ForgeryKind::Splice => (d + rng.gen_range(1..sources.len())) % sources.len(),
        };
        let obj = sources[s].objects[rng.gen_range(0..sources[s].objects.len())].clone();
        (sources[s].image.clone(), obj, sources[d].image.clone(), sources[s].name.clone(), sources[d].name.clone())
    };
    if (src_img.height, src_img.width) != (dst_img.height, dst_img.width) {
        return Err(Error::shape("gen-forgery", format!("{src_name} and {dst_name} have different extents")));
    }
    let center = object_center(&obj).ok_or_else(|| Error::InvalidArgument("empty object".into()))?;
    let mut last = None;
    // a few retries in case the object lands outside the canvas
    for _ in 0..8 {
        let params = sample_params(&mut rng, cfg, kind, center, dst_img.height, dst_img.width);
        match generate_forgery(&src_img, &obj, &dst_img, &params) {
            Ok(f) => {
                let area = f.mask.area();
                let rec = GenRecord { index, seed, source: src_name, dest: dst_name, params, area };
                return Ok((f, rec));
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Write `count` samples under `out`: `images/`, `masks/`, `edges/`,
/// `manifest.csv` and `gen_params.csv`.
pub fn generate_dataset(sources: &[Source], cfg: &GenConfig, out: &Path) -> Result<Manifest> {
    let se = StructuringElement::new(cfg.edge_shape, cfg.edge_size)?;
    let samples = par::map_range(cfg.count, |i| make_sample(i, sources, cfg));
    for sub in ["images", "masks", "edges"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut records = Vec::with_capacity(cfg.count);
    let mut log = Vec::with_capacity(cfg.count);
    for s in samples {
        let (f, rec) = s?;
        let name = format!("{:05}", rec.index);
        let image = PathBuf::from(format!("images/{name}.ppm"));
        let mask = PathBuf::from(format!("masks/{name}.pgm"));
        let edge = PathBuf::from(format!("edges/{name}.pgm"));
        write_image(&out.join(&image), &f.image)?;
        write_mask(&out.join(&mask), &f.mask)?;
        write_mask(&out.join(&edge), &edge_gt(&f.mask, &se))?;
        records.push(SampleRecord { image, mask, edge: Some(edge) });
        log.push(rec);
    }
    let manifest = Manifest { dir: out.to_path_buf(), records };
    manifest.write(&out.join("manifest.csv"))?;
    write_gen_params(&out.join("gen_params.csv"), &log)?;
    Ok(manifest)
}

pub fn write_gen_params(path: &Path, rows: &[GenRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "seed", "kind", "source", "dest", "rotation_deg", "scale", "paste_x", "paste_y", "blur_sigma", "area"])?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.params.kind.to_string(),
            r.source.clone(),
            r.dest.clone(),
            format!("{:.6}", r.params.rotation_deg),
            format!("{:.6}", r.params.scale),
            format!("{:.6}", r.params.paste.0),
            format!("{:.6}", r.params.paste.1),
            format!("{:.6}", r.params.blur_sigma),
            r.area.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
