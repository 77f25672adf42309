use std::fmt::Display;
use std::str::FromStr;

use crate::constrained::{ChannelMapping, InitScheme, ProjectionMode};
use crate::data::SeShape;
use crate::error::{Error, Result};

/// Architecture and loss settings of the detector.
#[derive(Clone, Debug, PartialEq)]
pub struct NedbConfig {
    /// Stage widths are `w, 2w, 4w, 8w`.
    pub base_width: usize,
    /// Channels of the fused feature `ff`.
    pub fusion_width: usize,
    /// Basic blocks in stages 1 to 4.
    pub depths: [usize; 4],
    pub input_size: usize,
    pub cc_scheme: InitScheme,
    /// One size for every noise channel, or one size per channel.
    pub cc_sizes: Vec<usize>,
    pub cc_mode: ProjectionMode,
    pub cc_mapping: ChannelMapping,
    pub use_constrained: bool,
    pub use_high_res: bool,
    pub use_nonlocal: bool,
    pub use_distance: bool,
    /// Without edge supervision the edge head is still built but `alpha` is
    /// treated as 1.
    pub use_edge: bool,
    pub edge_shape: SeShape,
    pub edge_size: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for NedbConfig {
    fn default() -> Self {
        NedbConfig::desk()
    }
}

impl NedbConfig {
    /// Small widths and depths that train in minutes on one core.
    pub fn desk() -> Self {
        NedbConfig {
            base_width: 8,
            fusion_width: 64,
            depths: [1, 1, 1, 1],
            input_size: 512,
            cc_scheme: InitScheme::LaplaceLikeD,
            cc_sizes: vec![5],
            cc_mode: ProjectionMode::Improved,
            cc_mapping: ChannelMapping::Diagonal,
            use_constrained: true,
            use_high_res: true,
            use_nonlocal: true,
            use_distance: true,
            use_edge: true,
            edge_shape: SeShape::Ellipse,
            edge_size: 5,
            alpha: 0.3,
            seed: 0,
        }
    }

    /// ResNet-34 widths and depths with a 256-channel fused feature.
    pub fn paper() -> Self {
        NedbConfig { base_width: 64, fusion_width: 256, depths: [3, 4, 6, 3], ..NedbConfig::desk() }
    }

    /// Effective region weight: 1 when edge supervision is off.
    pub fn region_weight(&self) -> f64 {
        if self.use_edge {
            self.alpha
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.base_width == 0 || self.base_width % 8 != 0 {
            return bad(format!("base_width must be a positive multiple of 8, got {}", self.base_width));
        }
        if self.fusion_width == 0 {
            return bad("fusion_width must be positive".into());
        }
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return bad(format!("input_size must be a positive multiple of 32, got {}", self.input_size));
        }
        if self.depths.contains(&0) {
            return bad("stage depths must be at least 1".into());
        }
        if !(self.cc_sizes.len() == 1 || self.cc_sizes.len() == 3) {
            return bad("cc_size takes one size or three comma-separated sizes".into());
        }
        if self.cc_sizes.iter().any(|&k| k == 0 || k % 2 == 0) {
            return bad(format!("constrained kernel sizes must be odd, got {:?}", self.cc_sizes));
        }
        if self.cc_sizes.len() == 3 && self.cc_mapping == ChannelMapping::Dense {
            return bad("mixed constrained kernel sizes need the diagonal mapping".into());
        }
        if self.edge_size == 0 || self.edge_size % 2 == 0 {
            return bad(format!("edge_size must be odd, got {}", self.edge_size));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        Ok(())
    }

    /// Key/value pairs in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("base_width", self.base_width.to_string()),
            ("fusion_width", self.fusion_width.to_string()),
            ("depths", list(&self.depths)),
            ("input_size", self.input_size.to_string()),
            ("cc_scheme", self.cc_scheme.to_string()),
            ("cc_size", list(&self.cc_sizes)),
            ("cc_mode", self.cc_mode.to_string()),
            ("cc_mapping", self.cc_mapping.to_string()),
            ("use_constrained", self.use_constrained.to_string()),
            ("use_high_res", self.use_high_res.to_string()),
            ("use_nonlocal", self.use_nonlocal.to_string()),
            ("use_distance", self.use_distance.to_string()),
            ("use_edge", self.use_edge.to_string()),
            ("edge_shape", self.edge_shape.to_string()),
            ("edge_size", self.edge_size.to_string()),
            ("alpha", format!("{}", self.alpha)),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Set one field from text. Returns `Ok(false)` for keys this config does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "base_width" => self.base_width = parse(key, value)?,
            "fusion_width" => self.fusion_width = parse(key, value)?,
            "depths" => {
                let v = parse_list(key, value)?;
                self.depths = v
                    .try_into()
                    .map_err(|_| Error::Config(format!("depths needs four comma-separated values, got {value:?}")))?;
            }
            "input_size" => self.input_size = parse(key, value)?,
            "cc_scheme" => self.cc_scheme = parse(key, value)?,
            "cc_size" => self.cc_sizes = parse_list(key, value)?,
            "cc_mode" => self.cc_mode = parse(key, value)?,
            "cc_mapping" => self.cc_mapping = parse(key, value)?,
            "use_constrained" => self.use_constrained = parse(key, value)?,
            "use_high_res" => self.use_high_res = parse(key, value)?,
            "use_nonlocal" => self.use_nonlocal = parse(key, value)?,
            "use_distance" => self.use_distance = parse(key, value)?,
            "use_edge" => self.use_edge = parse(key, value)?,
            "edge_shape" => self.edge_shape = parse(key, value)?,
            "edge_size" => self.edge_size = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.trim().parse().map_err(|e| Error::Config(format!("{key}={value}: {e}")))
}

pub(crate) fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v)).collect()
}
