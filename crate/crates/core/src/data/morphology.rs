//! Binary masks, structuring elements, dilation and erosion.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeShape {
    Ellipse,
    Rect,
    Cross,
}

impl SeShape {
    pub const ALL: [SeShape; 3] = [SeShape::Ellipse, SeShape::Rect, SeShape::Cross];

    pub fn name(self) -> &'static str {
        match self {
            SeShape::Ellipse => "ellipse",
            SeShape::Rect => "rect",
            SeShape::Cross => "cross",
        }
    }
}

impl fmt::Display for SeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SeShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ellipse" => Ok(SeShape::Ellipse),
            "rect" => Ok(SeShape::Rect),
            "cross" => Ok(SeShape::Cross),
            other => Err(Error::Parse(format!("unknown structuring element shape {other:?}"))),
        }
    }
}

/// A square boolean footprint with odd side, anchored at its center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    shape: SeShape,
    size: usize,
    footprint: Vec<bool>,
}

impl StructuringElement {
    pub fn new(shape: SeShape, size: usize) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::InvalidArgument(format!("structuring element size must be odd, got {size}")));
        }
        let mid = size / 2;
        let mut footprint = Vec::with_capacity(size * size);
        for i in 0..size {
            // ellipse rows span the rounded half-width of a circle of radius `mid`
            let half = {
                let dy = i as f64 - mid as f64;
                let r = mid as f64;
                (r * (1.0 - dy * dy / (r * r).max(1.0)).max(0.0).sqrt()).round_ties_even() as usize
            };
            for j in 0..size {
                footprint.push(match shape {
                    SeShape::Rect => true,
                    SeShape::Cross => i == mid || j == mid,
                    SeShape::Ellipse => j.abs_diff(mid) <= half,
                });
            }
        }
        Ok(StructuringElement { shape, size, footprint })
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.footprint[i * self.size + j]
    }

    /// Offsets `(di, dj)` from the center covered by the footprint.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let mid = (self.size / 2) as isize;
        (0..self.size)
            .flat_map(|i| (0..self.size).map(move |j| (i, j)))
            .filter(|&(i, j)| self.contains(i, j))
            .map(|(i, j)| (i as isize - mid, j as isize - mid))
            .collect()
    }

    /// Point reflection through the center.
    pub fn reflect(&self) -> Self {
        let n = self.footprint.len();
        let footprint = (0..n).map(|i| self.footprint[n - 1 - i]).collect();
        StructuringElement { shape: self.shape, size: self.size, footprint }
    }

    /// Rows of `0`/`1` characters.
    pub fn render(&self) -> String {
        self.footprint
            .chunks(self.size)
            .map(|row| row.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        BinaryMask { height, width, data: vec![false; height * width] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        BinaryMask { height, width, data: vec![true; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape("mask", format!("{} values for {height}x{width}", data.len())));
        }
        Ok(BinaryMask { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        BinaryMask { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.width + c] = v;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn complement(&self) -> Self {
        BinaryMask { height: self.height, width: self.width, data: self.data.iter().map(|b| !b).collect() }
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<Self> {
        self.check_same(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && !b).collect();
        Ok(BinaryMask { height: self.height, width: self.width, data })
    }

    pub fn union(&self, other: &BinaryMask) -> Result<Self> {
        self.check_same(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect();
        Ok(BinaryMask { height: self.height, width: self.width, data })
    }

    /// 0.0 / 1.0 values in row-major order.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    fn check_same(&self, other: &BinaryMask) -> Result<()> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(
                "mask",
                format!("{}x{} vs {}x{}", self.height, self.width, other.height, other.width),
            ));
        }
        Ok(())
    }
}

/// Dilation: a pixel is set when the footprint anchored there, reflected,
/// hits any set pixel. Outside the image counts as background.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offsets = se.offsets();
    let (h, w) = (mask.height as isize, mask.width as isize);
    BinaryMask::from_fn(mask.height, mask.width, |r, c| {
        offsets.iter().any(|&(di, dj)| {
            let (rr, cc) = (r as isize - di, c as isize - dj);
            rr >= 0 && cc >= 0 && rr < h && cc < w && mask.get(rr as usize, cc as usize)
        })
    })
}

/// Erosion: a pixel survives when every footprint position lies on a set
/// pixel inside the image.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offsets = se.offsets();
    let (h, w) = (mask.height as isize, mask.width as isize);
    BinaryMask::from_fn(mask.height, mask.width, |r, c| {
        offsets.iter().all(|&(di, dj)| {
            let (rr, cc) = (r as isize + di, c as isize + dj);
            rr >= 0 && cc >= 0 && rr < h && cc < w && mask.get(rr as usize, cc as usize)
        })
    })
}

/// Boundary band `dilate(mask) \ erode(mask)`.
pub fn edge_gt(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(mask, se).difference(&erode(mask, se)).expect("same extents")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> BinaryMask {
        BinaryMask::from_fn(8, 8, |r, c| (2..6).contains(&r) && (2..6).contains(&c))
    }

    #[test]
    fn ellipse_five_is_frozen() {
        let se = StructuringElement::new(SeShape::Ellipse, 5).unwrap();
        assert_eq!(se.render(), "00100\n11111\n11111\n11111\n00100");
    }

    #[test]
    fn ellipse_three_is_cross() {
        let e = StructuringElement::new(SeShape::Ellipse, 3).unwrap();
        let c = StructuringElement::new(SeShape::Cross, 3).unwrap();
        assert_eq!(e.render(), c.render());
    }

    #[test]
    fn even_size_rejected() {
        assert!(StructuringElement::new(SeShape::Rect, 4).is_err());
    }

    #[test]
    fn square_fixture() {
        for shape in [SeShape::Cross, SeShape::Ellipse] {
            let se = StructuringElement::new(shape, 3).unwrap();
            assert_eq!(dilate(&square(), &se).area(), 32);
            assert_eq!(erode(&square(), &se).area(), 4);
            assert_eq!(edge_gt(&square(), &se).area(), 28);
        }
    }

    #[test]
    fn trivial_cases() {
        let se = StructuringElement::new(SeShape::Rect, 3).unwrap();
        assert!(dilate(&BinaryMask::new(5, 5), &se).is_empty());
        let e = erode(&BinaryMask::full(5, 5), &se);
        assert_eq!(e.area(), 9);
        assert!(!e.get(0, 0) && e.get(1, 1));
        assert!(edge_gt(&BinaryMask::new(5, 5), &se).is_empty());
    }
}
