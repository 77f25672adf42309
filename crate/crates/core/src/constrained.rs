//! Constrained convolution: a learnable high-pass front end.
//!
//! Each kernel keeps a negative center and non-negative surround that sum to
//! zero, so the layer suppresses image content and passes the noise residual.
//! After every optimizer step the weights are pulled back onto that
//! constraint set by [`ConstrainedKernelBank::project`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tape, Tensor, Var};

/// Floor applied to non-center weights by the improved projection.
pub const MIN_WEIGHT: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitScheme {
    Random,
    RandomSum,
    LaplaceLike,
    LaplaceLikeD,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] =
        [InitScheme::Random, InitScheme::RandomSum, InitScheme::LaplaceLike, InitScheme::LaplaceLikeD];

    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Random => "random",
            InitScheme::RandomSum => "random-sum",
            InitScheme::LaplaceLike => "laplace-like",
            InitScheme::LaplaceLikeD => "laplace-like-d",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InitScheme::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown init scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProjectionMode {
    /// Divide the surround by its signed sum, center = −1.
    Original,
    /// Absolute-sum normalization, floor at [`MIN_WEIGHT`], center = −(surround sum).
    Improved,
    /// As `Improved` but center = −S where S is the pre-division absolute sum.
    ImprovedLiteral,
}

impl ProjectionMode {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionMode::Original => "original",
            ProjectionMode::Improved => "improved",
            ProjectionMode::ImprovedLiteral => "improved-literal",
        }
    }
}

impl fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProjectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(ProjectionMode::Original),
            "improved" => Ok(ProjectionMode::Improved),
            "improved-literal" => Ok(ProjectionMode::ImprovedLiteral),
            _ => Err(Error::Parse(format!("unknown projection mode `{s}`"))),
        }
    }
}

/// How the three noise channels are formed from the three image channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChannelMapping {
    /// Noise channel i is filtered from image channel i only (3 kernels).
    Diagonal,
    /// Every noise channel sums a filtered copy of every image channel (9 kernels).
    Dense,
}

impl FromStr for ChannelMapping {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(ChannelMapping::Diagonal),
            "dense" => Ok(ChannelMapping::Dense),
            _ => Err(Error::Parse(format!("unknown channel mapping `{s}`"))),
        }
    }
}

impl fmt::Display for ChannelMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMapping::Diagonal => "diagonal",
            ChannelMapping::Dense => "dense",
        })
    }
}

/// One square kernel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

fn check_size(k: usize) -> Result<()> {
    if k < 3 || k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel size must be odd and at least 3, got {k}")));
    }
    Ok(())
}

impl Kernel {
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        check_size(size)?;
        if weights.len() != size * size {
            return Err(Error::InvalidArgument(format!("{} weights for a {size}x{size} kernel", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite { op: "kernel" });
        }
        Ok(Kernel { size, weights })
    }

    /// Build a kernel from its surround values in row-major order (skipping the center).
    pub fn from_surround(size: usize, center: f64, surround: &[f64]) -> Result<Self> {
        check_size(size)?;
        if surround.len() != size * size - 1 {
            return Err(Error::InvalidArgument(format!("{} surround values for size {size}", surround.len())));
        }
        let c = size * size / 2;
        let mut w = surround.to_vec();
        w.insert(c, center);
        Kernel::from_weights(size, w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center_index(&self) -> usize {
        self.size * self.size / 2
    }

    pub fn center(&self) -> f64 {
        self.weights[self.center_index()]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn surround(&self) -> impl Iterator<Item = f64> + '_ {
        let c = self.center_index();
        self.weights.iter().enumerate().filter(move |(i, _)| *i != c).map(|(_, &w)| w)
    }

    pub fn surround_sum(&self) -> f64 {
        self.surround().sum()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    fn surround_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        let c = self.center_index();
        self.weights.iter_mut().enumerate().filter(move |(i, _)| *i != c).map(|(_, w)| w)
    }

    /// Euclidean distance of position `i` from the center.
    fn distance(&self, i: usize) -> f64 {
        let c = (self.size / 2) as f64;
        let (r, col) = ((i / self.size) as f64, (i % self.size) as f64);
        ((r - c).powi(2) + (col - c).powi(2)).sqrt()
    }
}

/// Center −1, every surround weight `1/(k²−1)`.
pub fn init_laplace_like(k: usize) -> Result<Kernel> {
    check_size(k)?;
    let v = 1.0 / (k * k - 1) as f64;
    Kernel::from_surround(k, -1.0, &vec![v; k * k - 1])
}

/// Center −1, surround weight `x/d` at distance `d`, with `x` chosen so the
/// surround sums to one.
pub fn init_laplace_like_d(k: usize) -> Result<Kernel> {
    check_size(k)?;
    let mut kernel = init_laplace_like(k)?;
    let c = kernel.center_index();
    let inv_d: Vec<f64> = (0..k * k).map(|i| if i == c { 0.0 } else { 1.0 / kernel.distance(i) }).collect();
    let x = 1.0 / inv_d.iter().sum::<f64>();
    for (i, w) in kernel.weights.iter_mut().enumerate() {
        if i != c {
            *w = x * inv_d[i];
        }
    }
    Ok(kernel)
}

fn random_kernel(k: usize, rng: &mut ChaCha8Rng, normalize: bool) -> Result<Kernel> {
    check_size(k)?;
    let mut surround: Vec<f64> = (0..k * k - 1)
        .map(|_| loop {
            // open interval (0, 1)
            let v: f64 = rng.gen();
            if v > 0.0 {
                break v;
            }
        })
        .collect();
    if normalize {
        let s: f64 = surround.iter().sum();
        surround.iter_mut().for_each(|v| *v /= s);
    }
    Kernel::from_surround(k, -1.0, &surround)
}

/// Center −1, surround uniform on (0, 1).
pub fn init_random(k: usize, seed: u64) -> Result<Kernel> {
    random_kernel(k, &mut ChaCha8Rng::seed_from_u64(seed), false)
}

/// As [`init_random`], then the surround is rescaled to sum to one.
pub fn init_random_sum(k: usize, seed: u64) -> Result<Kernel> {
    random_kernel(k, &mut ChaCha8Rng::seed_from_u64(seed), true)
}

/// What a projection pass did, per kernel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProjectionReport {
    pub reinitialized: Vec<usize>,
    pub skipped: Vec<usize>,
}

/// Improved projection of one kernel. Returns `false` when the surround is
/// entirely zero and the kernel was left untouched.
pub fn project_improved(kernel: &mut Kernel, literal_center: bool) -> bool {
    let c = kernel.center_index();
    kernel.weights[c] = 0.0;
    let s: f64 = kernel.surround().map(f64::abs).sum();
    if s == 0.0 {
        return false;
    }
    for w in kernel.surround_mut() {
        *w /= s;
        if *w <= MIN_WEIGHT {
            *w = MIN_WEIGHT;
        }
    }
    kernel.weights[c] = if literal_center { -s } else { -kernel.surround_sum() };
    true
}

/// Original projection of one kernel. Returns `false` when the signed surround
/// sum is exactly zero and the kernel was left untouched.
pub fn project_original(kernel: &mut Kernel) -> bool {
    let s = kernel.surround_sum();
    if s == 0.0 {
        return false;
    }
    for w in kernel.surround_mut() {
        *w /= s;
    }
    let c = kernel.center_index();
    kernel.weights[c] = -1.0;
    true
}

/// The learnable kernels of the constrained layer plus the rules that keep
/// them on the constraint set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedKernelBank {
    kernels: Vec<Kernel>,
    scheme: InitScheme,
    mode: ProjectionMode,
    mapping: ChannelMapping,
    seed: u64,
    reinits: u64,
}

pub const NOISE_CHANNELS: usize = 3;

impl ConstrainedKernelBank {
    /// All kernels of size `k`.
    pub fn uniform(k: usize, scheme: InitScheme, mode: ProjectionMode, mapping: ChannelMapping, seed: u64) -> Result<Self> {
        let count = match mapping {
            ChannelMapping::Diagonal => NOISE_CHANNELS,
            ChannelMapping::Dense => NOISE_CHANNELS * NOISE_CHANNELS,
        };
        Self::with_sizes(&vec![k; count], scheme, mode, mapping, seed)
    }

    /// Per-kernel sizes; mixed sizes are only valid with the diagonal mapping.
    pub fn with_sizes(
        sizes: &[usize],
        scheme: InitScheme,
        mode: ProjectionMode,
        mapping: ChannelMapping,
        seed: u64,
    ) -> Result<Self> {
        let expected = match mapping {
            ChannelMapping::Diagonal => NOISE_CHANNELS,
            ChannelMapping::Dense => NOISE_CHANNELS * NOISE_CHANNELS,
        };
        if sizes.len() != expected {
            return Err(Error::InvalidArgument(format!("{mapping} mapping needs {expected} kernels, got {}", sizes.len())));
        }
        if mapping == ChannelMapping::Dense && sizes.iter().any(|&s| s != sizes[0]) {
            return Err(Error::InvalidArgument("dense mapping requires a single kernel size".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernels = sizes
            .iter()
            .map(|&k| init_kernel(k, scheme, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConstrainedKernelBank { kernels, scheme, mode, mapping, seed, reinits: 0 })
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn scheme(&self) -> InitScheme {
        self.scheme
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ProjectionMode) {
        self.mode = mode;
    }

    pub fn mapping(&self) -> ChannelMapping {
        self.mapping
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.kernels.iter().map(Kernel::size).collect()
    }

    /// Pull every kernel back onto the constraint set of the current mode.
    pub fn project(&mut self) -> ProjectionReport {
        let mut report = ProjectionReport::default();
        for i in 0..self.kernels.len() {
            let k = &mut self.kernels[i];
            let ok = match self.mode {
                ProjectionMode::Original => project_original(k),
                ProjectionMode::Improved => project_improved(k, false),
                ProjectionMode::ImprovedLiteral => project_improved(k, true),
            };
            if ok {
                continue;
            }
            match self.mode {
                ProjectionMode::Original => {
                    warn!("constrained kernel {i}: surround sums to zero, projection skipped");
                    report.skipped.push(i);
                }
                _ => {
                    warn!("constrained kernel {i}: surround is all zero, reinitializing from {}", self.scheme);
                    self.reinits += 1;
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.reinits.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let size = self.kernels[i].size;
                    self.kernels[i] = init_kernel(size, self.scheme, &mut rng).expect("size validated at construction");
                    report.reinitialized.push(i);
                }
            }
        }
        report
    }

    /// One weight tensor per noise channel: `1×1×k×k` (diagonal) or `1×3×k×k` (dense).
    pub fn weight_tensors(&self) -> Vec<Tensor> {
        match self.mapping {
            ChannelMapping::Diagonal => self
                .kernels
                .iter()
                .map(|k| Tensor::from_parts(Shape::new(1, 1, k.size, k.size), k.weights.clone()))
                .collect(),
            ChannelMapping::Dense => self
                .kernels
                .chunks(NOISE_CHANNELS)
                .map(|ks| {
                    let s = ks[0].size;
                    let data = ks.iter().flat_map(|k| k.weights.iter().copied()).collect();
                    Tensor::from_parts(Shape::new(1, NOISE_CHANNELS, s, s), data)
                })
                .collect(),
        }
    }

    /// Overwrite the weights from tensors laid out as in [`Self::weight_tensors`].
    pub fn set_weight_tensors(&mut self, tensors: &[Tensor]) -> Result<()> {
        let expected = self.weight_tensors();
        if tensors.len() != expected.len() || tensors.iter().zip(&expected).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::shape("constrained bank", "weight tensors do not match the bank layout"));
        }
        let flat: Vec<f64> = tensors.iter().flat_map(|t| t.data().iter().copied()).collect();
        let mut off = 0;
        for k in &mut self.kernels {
            let n = k.size * k.size;
            k.weights.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Record the noise extraction on `tape` using `weights` (see [`Self::weight_tensors`]).
    pub fn extract_on_tape(&self, tape: &mut Tape, image: Var, weights: &[Var]) -> Result<Var> {
        let s = tape.shape(image);
        if s.c != NOISE_CHANNELS {
            return Err(Error::shape("extract_noise", format!("expected 3-channel image, got {s}")));
        }
        let mut outs = Vec::with_capacity(NOISE_CHANNELS);
        for (o, &w) in weights.iter().enumerate() {
            let k = tape.shape(w).h;
            let input = match self.mapping {
                ChannelMapping::Diagonal => tape.slice_channels(image, o, 1)?,
                ChannelMapping::Dense => image,
            };
            outs.push(tape.conv2d(input, w, None, 1, k / 2)?);
        }
        tape.concat_channels(&outs)
    }

    /// Noise residual of `image` (N×3×H×W), same shape as the input.
    pub fn extract_noise(&self, image: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(image.clone());
        let ws: Vec<Var> = self.weight_tensors().into_iter().map(|t| tape.constant(t)).collect();
        let y = self.extract_on_tape(&mut tape, x, &ws)?;
        Ok(tape.value(y).clone())
    }

    /// Plain-text form: a `k K scheme mode seed reinits` header, then K blocks of
    /// k rows. The seed and reinit counter are optional when reading.
    /// Mixed sizes write the header size as a comma list.
    pub fn to_text(&self) -> String {
        let sizes = self.sizes();
        let k = if sizes.iter().all(|&s| s == sizes[0]) {
            sizes[0].to_string()
        } else {
            sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        let mut out = format!("{k} {} {} {} {} {}\n", self.kernels.len(), self.scheme, self.mode, self.seed, self.reinits);
        for kernel in &self.kernels {
            for row in kernel.weights.chunks(kernel.size) {
                let line: Vec<String> = row.iter().map(|w| format!("{w:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty kernel bank file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 6 {
            return Err(Error::Parse(format!("line 1: expected `k K scheme mode [seed reinits]`, got `{header}`")));
        }
        let counter = |i: usize| -> Result<u64> {
            fields.get(i).map_or(Ok(0), |v| v.parse().map_err(|_| Error::Parse(format!("line 1: bad counter `{v}`"))))
        };
        let (seed, reinits) = (counter(4)?, counter(5)?);
        let count: usize = fields[1].parse().map_err(|_| Error::Parse(format!("line 1: bad kernel count `{}`", fields[1])))?;
        let sizes: Vec<usize> = if fields[0].contains(',') {
            fields[0]
                .split(',')
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("line 1: bad size `{s}`"))))
                .collect::<Result<_>>()?
        } else {
            let k = fields[0].parse().map_err(|_| Error::Parse(format!("line 1: bad size `{}`", fields[0])))?;
            vec![k; count]
        };
        if sizes.len() != count {
            return Err(Error::Parse(format!("line 1: {} sizes for {count} kernels", sizes.len())));
        }
        let scheme: InitScheme = fields[2].parse()?;
        let mode: ProjectionMode = fields[3].parse()?;
        let mapping = match count {
            NOISE_CHANNELS => ChannelMapping::Diagonal,
            9 => ChannelMapping::Dense,
            _ => return Err(Error::Parse(format!("line 1: unsupported kernel count {count}"))),
        };
        let mut kernels = Vec::with_capacity(count);
        for &k in &sizes {
            let mut w = Vec::with_capacity(k * k);
            for _ in 0..k {
                let (ln, line) = lines.next().ok_or_else(|| Error::Parse("unexpected end of kernel bank".into()))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad weight `{v}`", ln + 1))))
                    .collect::<Result<_>>()?;
                if row.len() != k {
                    return Err(Error::Parse(format!("line {}: expected {k} weights, got {}", ln + 1, row.len())));
                }
                w.extend(row);
            }
            kernels.push(Kernel::from_weights(k, w)?);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse(format!("line {}: trailing data after last kernel", ln + 1)));
        }
        Ok(ConstrainedKernelBank { kernels, scheme, mode, mapping, seed, reinits })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn init_kernel(k: usize, scheme: InitScheme, rng: &mut ChaCha8Rng) -> Result<Kernel> {
    match scheme {
        InitScheme::Random => random_kernel(k, rng, false),
        InitScheme::RandomSum => random_kernel(k, rng, true),
        InitScheme::LaplaceLike => init_laplace_like(k),
        InitScheme::LaplaceLikeD => init_laplace_like_d(k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_like_values() {
        let k3 = init_laplace_like(3).unwrap();
        assert_eq!(k3.center(), -1.0);
        assert!(k3.surround().all(|w| w == 0.125));
        let k5 = init_laplace_like(5).unwrap();
        assert!(k5.surround().all(|w| (w - 1.0 / 24.0).abs() < 1e-15));
        for k in [3, 5, 7, 9, 11] {
            assert!(init_laplace_like(k).unwrap().sum().abs() < 1e-12);
        }
        assert!(init_laplace_like(4).is_err());
        assert!(init_laplace_like_d(6).is_err());
    }

    #[test]
    fn laplace_like_d_solves_distance_equation() {
        let k = init_laplace_like_d(3).unwrap();
        let x = 1.0 / (4.0 + 4.0 / 2f64.sqrt());
        assert!((k.at(0, 1) - x).abs() < 1e-15);
        assert!((k.at(0, 0) - x / 2f64.sqrt()).abs() < 1e-15);
        assert!((k.at(0, 1) - 0.14645).abs() < 5e-5);
        assert!((k.at(2, 2) - 0.10355).abs() < 5e-5);
        assert_eq!(k.center(), -1.0);
        for size in [3, 5, 7, 9, 11] {
            assert!((init_laplace_like_d(size).unwrap().surround_sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_schemes() {
        let a = init_random(5, 42).unwrap();
        assert_eq!(a, init_random(5, 42).unwrap());
        assert_eq!(a.center(), -1.0);
        assert!(a.surround().all(|w| w > 0.0 && w < 1.0));
        let b = init_random_sum(5, 42).unwrap();
        assert!((b.surround_sum() - 1.0).abs() < 1e-12);
        assert_eq!(b.center(), -1.0);
    }

    #[test]
    fn improved_projection_worked_example() {
        let surround = [0.2, -0.1, 0.3, -0.2, 0.1, 0.05, -0.05, 0.2];
        let mut k = Kernel::from_surround(3, 0.7, &surround).unwrap();
        assert!(project_improved(&mut k, false));
        let got: Vec<f64> = k.surround().collect();
        let want = [0.2 / 1.2, 0.001, 0.25, 0.001, 0.1 / 1.2, 0.05 / 1.2, 0.001, 0.2 / 1.2];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
        assert!((k.center() + (0.85 / 1.2 + 0.003)).abs() < 1e-12);
        assert!(k.sum().abs() < 1e-12);
    }

    #[test]
    fn improved_projection_fixed_point_and_clamp() {
        let mut k = init_laplace_like(3).unwrap();
        let before = k.clone();
        project_improved(&mut k, false);
        for (a, b) in k.weights().iter().zip(before.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut k = Kernel::from_surround(3, -1.0, &[0.1, 0.2, -5.0, 0.1, 0.1, 0.3, 0.2, 0.1]).unwrap();
        project_improved(&mut k, false);
        assert_eq!(k.at(0, 2), MIN_WEIGHT);
    }

    #[test]
    fn literal_center_uses_absolute_sum() {
        let mut k = Kernel::from_surround(3, 0.0, &[0.2, -0.1, 0.3, -0.2, 0.1, 0.05, -0.05, 0.2]).unwrap();
        project_improved(&mut k, true);
        assert!((k.center() + 1.2).abs() < 1e-15);
    }

    #[test]
    fn original_projection_examples() {
        let mut k = Kernel::from_surround(3, 0.3, &[0.5, 0.5, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let before: Vec<f64> = k.surround().collect();
        assert!(project_original(&mut k));
        assert_eq!(k.surround().collect::<Vec<_>>(), before);
        assert_eq!(k.center(), -1.0);

        let mut flat = Kernel::from_surround(3, 0.3, &[0.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let snapshot = flat.clone();
        assert!(!project_original(&mut flat));
        assert_eq!(flat, snapshot);
    }

    #[test]
    fn zero_surround_reinitializes_in_improved_mode() {
        let mut bank =
            ConstrainedKernelBank::uniform(3, InitScheme::LaplaceLike, ProjectionMode::Improved, ChannelMapping::Diagonal, 1)
                .unwrap();
        bank.kernels[1] = Kernel::from_surround(3, 2.0, &[0.0; 8]).unwrap();
        let report = bank.project();
        assert_eq!(report.reinitialized, vec![1]);
        assert_eq!(bank.kernels[1], init_laplace_like(3).unwrap());
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let mut bank =
            ConstrainedKernelBank::uniform(5, InitScheme::Random, ProjectionMode::Improved, ChannelMapping::Diagonal, 9).unwrap();
        bank.project();
        let parsed = ConstrainedKernelBank::from_text(&bank.to_text()).unwrap();
        assert_eq!(parsed.kernels(), bank.kernels());
        assert_eq!(parsed.to_text(), bank.to_text());

        let mixed = ConstrainedKernelBank::with_sizes(
            &[3, 5, 7],
            InitScheme::LaplaceLikeD,
            ProjectionMode::Improved,
            ChannelMapping::Diagonal,
            0,
        )
        .unwrap();
        assert!(mixed.to_text().starts_with("3,5,7 3 laplace-like-d improved 0 0\n"));
        assert_eq!(ConstrainedKernelBank::from_text(&mixed.to_text()).unwrap().sizes(), vec![3, 5, 7]);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(ConstrainedKernelBank::from_text("").is_err());
        assert!(ConstrainedKernelBank::from_text("3 3 laplace-like\n").is_err());
        assert!(ConstrainedKernelBank::from_text("3 3 bogus improved\n").is_err());
        let bank =
            ConstrainedKernelBank::uniform(3, InitScheme::LaplaceLike, ProjectionMode::Improved, ChannelMapping::Diagonal, 0)
                .unwrap();
        let mut text = bank.to_text();
        text.push_str("1 2 3\n");
        assert!(ConstrainedKernelBank::from_text(&text).is_err());
    }

    #[test]
    fn noise_of_constant_image_vanishes() {
        for mapping in [ChannelMapping::Diagonal, ChannelMapping::Dense] {
            let mut bank =
                ConstrainedKernelBank::uniform(5, InitScheme::RandomSum, ProjectionMode::Improved, mapping, 3).unwrap();
            bank.project();
            let img = Tensor::full(Shape::new(1, 3, 12, 12), 0.37);
            let noise = bank.extract_noise(&img).unwrap();
            assert_eq!(noise.shape(), img.shape());
            for c in 0..3 {
                for h in 2..10 {
                    for w in 2..10 {
                        assert!(noise.at(0, c, h, w).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn ramp_is_annihilated_by_laplace_like() {
        let bank =
            ConstrainedKernelBank::uniform(3, InitScheme::LaplaceLike, ProjectionMode::Improved, ChannelMapping::Diagonal, 0)
                .unwrap();
        let img = Tensor::from_fn(Shape::new(1, 3, 8, 8), |_, c, h, w| 0.1 * h as f64 - 0.3 * w as f64 + c as f64).unwrap();
        let noise = bank.extract_noise(&img).unwrap();
        for c in 0..3 {
            for h in 1..7 {
                for w in 1..7 {
                    assert!(noise.at(0, c, h, w).abs() < 1e-12);
                }
            }
        }
    }
}
