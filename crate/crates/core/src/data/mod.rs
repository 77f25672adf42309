//! Images, masks, morphology and synthetic forgery generation.

pub mod datagen;
pub mod image_io;
pub mod imgproc;
pub mod manifest;
pub mod morphology;

pub use image_io::Image;
pub use manifest::{Manifest, SampleRecord};
pub use morphology::{BinaryMask, SeShape, StructuringElement};
