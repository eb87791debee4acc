//! Balanced "most of the dots are blue" stimulus datasets.
//!
//! A [`DotScene`] is an abstract arrangement of two dot classes; it is
//! rasterized to a 128x128 8-bit grayscale image and persisted as PNG
//! together with a CSV manifest row ([`StimulusRecord`]).

mod dataset;
mod raster;
mod scene;
mod types;

pub use dataset::{
    generate_dataset, read_png, record_seed, write_png, DatasetConfig, DatasetInfo,
    DatasetManifest, SplitCounts, MANIFEST_CSV, MANIFEST_INFO,
};
pub use raster::{rasterize, rasterize_with, GrayImage, GrayLevels, RasterOptions};
pub use scene::{choose_set_sizes, generate_scene, SceneGeometry, SetSizes};
pub use types::{Dot, DotClass, DotScene, ImageType, RatioPair, Split, StimulusRecord};

/// Canvas side length in pixels.
pub const CANVAS: usize = 128;
/// Upper bound on blue + yellow dots in one image.
pub const MAX_TOTAL_DOTS: u32 = 22;
/// Cells per split: 9 ratios x 4 image types x 2 truth values.
pub const CELLS_PER_SPLIT: usize = 72;
