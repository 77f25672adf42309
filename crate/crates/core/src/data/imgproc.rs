//! Gaussian blur and uniform quantization of 8-bit images.

use crate::error::{Error, Result};

use super::image_io::{to_byte, Image};

/// Sampled Gaussian of side `2·ceil(3σ)+1`, normalized to sum 1.
/// `σ ≤ 0` gives the identity kernel `[1]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius).map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable convolution of one `h×w` plane with edge-replicate padding.
pub fn blur_plane(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * plane[y * w + clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn planes(img: &Image) -> Vec<Vec<f64>> {
    (0..img.channels)
        .map(|c| (0..img.height * img.width).map(|i| img.data[i * img.channels + c] as f64).collect())
        .collect()
}

fn from_planes(like: &Image, planes: &[Vec<f64>]) -> Image {
    let mut out = like.clone();
    for (c, p) in planes.iter().enumerate() {
        for (i, v) in p.iter().enumerate() {
            out.data[i * like.channels + c] = to_byte(*v);
        }
    }
    out
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel(sigma);
    if k.len() == 1 {
        return img.clone();
    }
    let blurred: Vec<Vec<f64>> = planes(img).iter().map(|p| blur_plane(p, img.height, img.width, &k)).collect();
    from_planes(img, &blurred)
}

/// Map every sample to the center of one of `levels` equal-width bins over
/// `0..=255`. 256 levels is the identity.
pub fn quantize(img: &Image, levels: usize) -> Result<Image> {
    if !(2..=256).contains(&levels) {
        return Err(Error::InvalidArgument(format!("quantization levels must be in 2..=256, got {levels}")));
    }
    let width = 256.0 / levels as f64;
    let mut out = img.clone();
    for v in &mut out.data {
        let bin = (*v as f64 / width).floor();
        *v = to_byte(((bin + 0.5) * width - 0.5).min(255.0));
    }
    Ok(out)
}
