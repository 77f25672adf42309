//! Oracles shared by the property tests and the acceptance run. Each one is
//! written with plain loops and none calls into the code it checks.
#![allow(dead_code)]

use nedb::data::{BinaryMask, StructuringElement};
use nedb::tensor::{Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, shape: Shape, scale: f64) -> Tensor {
    Tensor::new(shape, (0..shape.numel()).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Exhaustive scan of the footprint; pixels outside the canvas count as
/// background for both operations.
pub fn brute_morph(m: &BinaryMask, se: &StructuringElement, dilation: bool) -> BinaryMask {
    let k = se.size() as isize;
    let mid = k / 2;
    BinaryMask::from_fn(m.height(), m.width(), |r, c| {
        let mut any = false;
        let mut all = true;
        for i in 0..k {
            for j in 0..k {
                if !se.contains(i as usize, j as usize) {
                    continue;
                }
                let (rr, cc) = (r as isize + i - mid, c as isize + j - mid);
                let v = rr >= 0 && cc >= 0 && (rr as usize) < m.height() && (cc as usize) < m.width() && m.get(rr as usize, cc as usize);
                any |= v;
                all &= v;
            }
        }
        if dilation {
            any
        } else {
            all
        }
    })
}

/// Dilation minus erosion, by brute force.
pub fn brute_edge(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let d = brute_morph(m, se, true);
    let e = brute_morph(m, se, false);
    BinaryMask::from_fn(m.height(), m.width(), |r, c| d.get(r, c) && !e.get(r, c))
}

/// Textbook non-local block for a single image. `ws` holds
/// query, key, value and output (weight, bias) pairs as 1×1 convolutions.
pub fn vanilla_non_local(x: &Tensor, ws: &[Tensor]) -> Vec<f64> {
    let s = x.shape();
    let (c, p) = (s.c, s.h * s.w);
    let r = ws[0].shape().n;
    let proj = |w: &Tensor, b: &Tensor, pix: usize| -> Vec<f64> {
        (0..w.shape().n)
            .map(|o| b.data()[o] + (0..c).map(|i| w.at(o, i, 0, 0) * x.data()[i * p + pix]).sum::<f64>())
            .collect()
    };
    let q: Vec<Vec<f64>> = (0..p).map(|i| proj(&ws[0], &ws[1], i)).collect();
    let k: Vec<Vec<f64>> = (0..p).map(|i| proj(&ws[2], &ws[3], i)).collect();
    let v: Vec<Vec<f64>> = (0..p).map(|i| proj(&ws[4], &ws[5], i)).collect();
    let mut out = vec![0.0; c * p];
    for i in 0..p {
        let logits: Vec<f64> =
            (0..p).map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / (r as f64).sqrt()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let y: Vec<f64> = (0..c).map(|ch| (0..p).map(|j| e[j] / z * v[j][ch]).sum()).collect();
        for o in 0..c {
            let proj: f64 = ws[7].data()[o] + (0..c).map(|ch| ws[6].at(o, ch, 0, 0) * y[ch]).sum::<f64>();
            out[o * p + i] = x.data()[o * p + i] + proj;
        }
    }
    out
}

/// Weight shapes for [`vanilla_non_local`] with `c` channels reduced to `r`.
pub fn non_local_shapes(c: usize, r: usize) -> [Shape; 8] {
    [(r, c), (r, 1), (r, c), (r, 1), (c, c), (c, 1), (c, c), (c, 1)].map(|(o, i)| Shape::new(o, i, 1, 1))
}

/// Pick `p` pixels and two distinct keys at different distances from the
/// query; returns `(h, w, query, near, far)`.
pub fn monotonicity_instance(rng: &mut ChaCha8Rng, dist: impl Fn(usize, usize, usize) -> f64) -> Option<(usize, usize, usize, usize, usize)> {
    let (h, w) = (rng.gen_range(2..7), rng.gen_range(2..7));
    let p = h * w;
    let (q, j1, j2) = (rng.gen_range(0..p), rng.gen_range(0..p), rng.gen_range(0..p));
    let (d1, d2) = (dist(w, q, j1), dist(w, q, j2));
    if j1 == j2 || d1 == d2 {
        return None;
    }
    Some(if d1 < d2 { (h, w, q, j1, j2) } else { (h, w, q, j2, j1) })
}

/// Euclidean pixel distance on a grid of width `w`.
pub fn grid_distance(w: usize, i: usize, j: usize) -> f64 {
    let (dr, dc) = ((i / w) as f64 - (j / w) as f64, (i % w) as f64 - (j % w) as f64);
    (dr * dr + dc * dc).sqrt()
}
