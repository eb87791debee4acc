use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    generate_scene, rasterize_with, GrayImage, ImageType, RasterOptions, RatioPair, SceneGeometry,
    Split, StimulusRecord, CANVAS, CELLS_PER_SPLIT,
};
use crate::{Error, Result};

pub const MANIFEST_CSV: &str = "manifest.csv";
pub const MANIFEST_INFO: &str = "dataset.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const FULL: SplitCounts = SplitCounts {
        train: 18000,
        val: 3600,
        test: 3600,
    };

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    /// Shrinks every cell by `factor`, keeping at least one image per cell.
    pub fn scaled(&self, factor: f64) -> SplitCounts {
        let cell = |n: usize| {
            let per_cell = n as f64 / CELLS_PER_SPLIT as f64 * factor;
            (per_cell.round() as usize).max(1) * CELLS_PER_SPLIT
        };
        SplitCounts {
            train: cell(self.train),
            val: cell(self.val),
            test: cell(self.test),
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn validate(&self) -> Result<()> {
        for split in Split::ALL {
            let n = self.get(split);
            if n == 0 || n % CELLS_PER_SPLIT != 0 {
                return Err(Error::Config(format!(
                    "{split} count {n} is not a positive multiple of {CELLS_PER_SPLIT}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub counts: SplitCounts,
    pub seed: u64,
    pub geometry: SceneGeometry,
    pub raster: RasterOptions,
}

impl DatasetConfig {
    pub fn new(counts: SplitCounts, seed: u64) -> Self {
        DatasetConfig {
            counts,
            seed,
            geometry: SceneGeometry::default(),
            raster: RasterOptions::default(),
        }
    }
}

/// Sidecar metadata stored next to the CSV manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub format_version: u32,
    pub canvas: usize,
    pub seed: u64,
    pub counts: SplitCounts,
    pub geometry: SceneGeometry,
    pub raster: RasterOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub info: DatasetInfo,
    pub records: Vec<StimulusRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    image_path: String,
    split: Split,
    image_type: ImageType,
    ratio_small: u32,
    ratio_large: u32,
    multiplier: u32,
    n_blue: u32,
    n_yellow: u32,
    total_dots: u32,
    abs_diff: u32,
    truth: bool,
    seed: u64,
}

impl From<&StimulusRecord> for ManifestRow {
    fn from(r: &StimulusRecord) -> Self {
        ManifestRow {
            image_path: r.image_path.clone(),
            split: r.split,
            image_type: r.image_type,
            ratio_small: r.ratio.small(),
            ratio_large: r.ratio.large(),
            multiplier: r.multiplier,
            n_blue: r.n_blue,
            n_yellow: r.n_yellow,
            total_dots: r.total_dots,
            abs_diff: r.abs_diff,
            truth: r.truth,
            seed: r.seed,
        }
    }
}

impl TryFrom<ManifestRow> for StimulusRecord {
    type Error = Error;

    fn try_from(r: ManifestRow) -> Result<Self> {
        let record = StimulusRecord {
            ratio: RatioPair::new(r.ratio_small, r.ratio_large)?,
            image_path: r.image_path,
            split: r.split,
            image_type: r.image_type,
            multiplier: r.multiplier,
            n_blue: r.n_blue,
            n_yellow: r.n_yellow,
            total_dots: r.total_dots,
            abs_diff: r.abs_diff,
            truth: r.truth,
            seed: r.seed,
        };
        record.validate()?;
        Ok(record)
    }
}

type Cell = (RatioPair, ImageType, bool);

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &StimulusRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn cell_counts(&self, split: Split) -> BTreeMap<Cell, usize> {
        let mut counts = BTreeMap::new();
        for r in self.split(split) {
            *counts.entry((r.ratio, r.image_type, r.truth)).or_insert(0) += 1;
        }
        counts
    }

    /// Checks row consistency and the per-cell balance of every split.
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            r.validate()?;
        }
        for split in Split::ALL {
            let want = self.info.counts.get(split);
            let counts = self.cell_counts(split);
            let per_cell = want / CELLS_PER_SPLIT;
            if counts.len() != CELLS_PER_SPLIT || counts.values().any(|&c| c != per_cell) {
                return Err(Error::Data(format!(
                    "{split} split is not balanced: expected {per_cell} per cell over {CELLS_PER_SPLIT} cells"
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let csv_path = dir.join(MANIFEST_CSV);
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        for r in &self.records {
            w.serialize(ManifestRow::from(r))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let info_path = dir.join(MANIFEST_INFO);
        let json = serde_json::to_string_pretty(&self.info)?;
        fs::write(&info_path, json + "\n").map_err(|e| Error::io(&info_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let info_path = dir.join(MANIFEST_INFO);
        let info_text = fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
        let info: DatasetInfo = serde_json::from_str(&info_text)?;
        if info.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "dataset format version {} is not supported",
                info.format_version
            )));
        }
        let csv_path = dir.join(MANIFEST_CSV);
        let file = File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(file));
        let records = rdr
            .deserialize::<ManifestRow>()
            .map(|row| StimulusRecord::try_from(row?))
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetManifest { info, records })
    }
}

/// Per-image seed derived from the global seed and the image's position.
pub fn record_seed(global: u64, split: Split, cell: usize, index: usize) -> u64 {
    let mut z = global
        ^ (split as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (cell as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (index as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders every split into `dir` and writes the manifest. Output is a pure
/// function of `config`.
pub fn generate_dataset(config: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    config.counts.validate()?;
    config.geometry.validate()?;
    let mut records = Vec::with_capacity(config.counts.total());
    for split in Split::ALL {
        for t in ImageType::ALL {
            let sub = dir.join(split.as_str()).join(t.as_str());
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        let per_cell = config.counts.get(split) / CELLS_PER_SPLIT;
        let mut cell = 0;
        for ratio in RatioPair::ALL {
            for image_type in ImageType::ALL {
                for truth in [true, false] {
                    for index in 0..per_cell {
                        let seed = record_seed(config.seed, split, cell, index);
                        let (scene, sizes) =
                            generate_scene(&config.geometry, ratio, image_type, truth, seed)?;
                        let image = rasterize_with(&scene, &config.raster);
                        let rel = format!(
                            "{}/{}/{}-{}_{}_{}.png",
                            split,
                            image_type,
                            ratio.small(),
                            ratio.large(),
                            truth,
                            index
                        );
                        write_png(&dir.join(&rel), &image)?;
                        records.push(StimulusRecord::from_scene(
                            rel,
                            split,
                            ratio,
                            sizes.multiplier,
                            &scene,
                        ));
                    }
                    cell += 1;
                }
            }
        }
    }
    let manifest = DatasetManifest {
        info: DatasetInfo {
            format_version: FORMAT_VERSION,
            canvas: CANVAS,
            seed: config.seed,
            counts: config.counts,
            geometry: config.geometry,
            raster: config.raster,
        },
        records,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

pub fn write_png(path: &Path, image: &GrayImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(
        BufWriter::new(file),
        image.width as u32,
        image.height as u32,
    );
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&image.pixels)?;
    writer.finish()?;
    Ok(())
}

/// Reads an 8-bit single-channel PNG.
pub fn read_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Data(format!(
            "{} is not 8-bit grayscale ({:?}, {:?})",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(GrayImage {
        width: info.width as usize,
        height: info.height as usize,
        pixels: buf,
    })
}
