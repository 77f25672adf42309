//! Binary PPM (P6) and PGM (P5) files with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

use super::morphology::BinaryMask;

/// Interleaved 8-bit image, `channels` is 1 (gray) or 3 (RGB).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Image { height, width, channels, data: vec![0; height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(Error::InvalidArgument(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape("image", format!("{} bytes for {height}x{width}x{channels}", data.len())));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn get(&self, r: usize, c: usize, ch: usize) -> u8 {
        self.data[(r * self.width + c) * self.channels + ch]
    }

    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: u8) {
        self.data[(r * self.width + c) * self.channels + ch] = v;
    }

    /// 0/255 grayscale rendering of a mask.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let data = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
        Image { height: mask.height(), width: mask.width(), channels: 1, data }
    }

    /// Threshold at 128.
    pub fn to_mask(&self) -> BinaryMask {
        let data = (0..self.height * self.width).map(|i| self.data[i * self.channels] >= 128).collect();
        BinaryMask::from_vec(self.height, self.width, data).expect("extent")
    }

    /// Raw byte values in a `1×3×H×W` tensor with channels in B, G, R order.
    pub fn to_bgr_tensor(&self) -> Result<Tensor> {
        if self.channels != 3 {
            return Err(Error::InvalidArgument("BGR tensor needs a color image".into()));
        }
        Tensor::from_fn(Shape::new(1, 3, self.height, self.width), |_, c, h, w| self.get(h, w, 2 - c) as f64)
    }

    /// Inverse of [`Image::to_bgr_tensor`] for batch item `n`, rounding and
    /// clamping to 0..=255.
    pub fn from_bgr_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 || n >= s.n {
            return Err(Error::shape("image", format!("cannot take item {n} of {s} as BGR")));
        }
        let mut img = Image::new(s.h, s.w, 3);
        for c in 0..3 {
            for h in 0..s.h {
                for w in 0..s.w {
                    img.set(h, w, 2 - c, to_byte(t.at(n, c, h, w)));
                }
            }
        }
        Ok(img)
    }
}

pub fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_path_buf(), pos: self.pos, msg: msg.into() }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Format { path: self.path.to_path_buf(), pos: start, msg: format!("{what} out of range") })
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0, path };
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(cur.fail("bad magic number, expected P5 or P6")),
    };
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(cur.fail(format!("only maxval 255 is supported, got {maxval}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.fail("expected a single whitespace before pixel data")),
    }
    let need = width * height * channels;
    let data = &bytes[cur.pos..];
    if data.len() < need {
        cur.pos = bytes.len();
        return Err(cur.fail(format!("truncated pixel data, need {need} bytes, have {}", data.len())));
    }
    Image::from_vec(height, width, channels, data[..need].to_vec())
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    Ok(read_image(path)?.to_mask())
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_image(path, &Image::from_mask(mask))
}
