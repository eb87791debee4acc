use serde::{Deserialize, Serialize};

use super::{DotClass, DotScene, CANVAS};

/// 8-bit single-channel image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayLevels {
    pub background: u8,
    pub yellow: u8,
    pub blue: u8,
}

impl Default for GrayLevels {
    fn default() -> Self {
        GrayLevels {
            background: 0,
            yellow: 128,
            blue: 255,
        }
    }
}

impl GrayLevels {
    pub fn of(&self, class: DotClass) -> u8 {
        match class {
            DotClass::Blue => self.blue,
            DotClass::Yellow => self.yellow,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RasterOptions {
    pub levels: GrayLevels,
    /// 4x4 supersampled edge coverage instead of flat discs.
    pub antialias: bool,
}

/// Flat-disc rendering with the default gray levels.
pub fn rasterize(scene: &DotScene) -> GrayImage {
    rasterize_with(scene, &RasterOptions::default())
}

/// A pixel belongs to a dot when its centre lies within the dot radius.
pub fn rasterize_with(scene: &DotScene, options: &RasterOptions) -> GrayImage {
    let levels = options.levels;
    let mut img = GrayImage::filled(CANVAS, CANVAS, levels.background);
    for dot in &scene.dots {
        let r = dot.radius;
        let x0 = (dot.x - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((dot.x + r + 1.0).ceil() as usize).min(CANVAS - 1);
        let y0 = (dot.y - r - 1.0).floor().max(0.0) as usize;
        let y1 = ((dot.y + r + 1.0).ceil() as usize).min(CANVAS - 1);
        let level = levels.of(dot.class);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let idx = py * CANVAS + px;
                if options.antialias {
                    let mut inside = 0u32;
                    for sy in 0..4 {
                        for sx in 0..4 {
                            let dx = px as f64 - 0.375 + 0.25 * sx as f64 - dot.x;
                            let dy = py as f64 - 0.375 + 0.25 * sy as f64 - dot.y;
                            if dx * dx + dy * dy <= r * r {
                                inside += 1;
                            }
                        }
                    }
                    if inside > 0 {
                        let cover = inside as f64 / 16.0;
                        let base = img.pixels[idx] as f64;
                        img.pixels[idx] = (base + cover * (level as f64 - base)).round() as u8;
                    }
                } else {
                    let dx = px as f64 - dot.x;
                    let dy = py as f64 - dot.y;
                    if dx * dx + dy * dy <= r * r {
                        img.pixels[idx] = level;
                    }
                }
            }
        }
    }
    img
}
