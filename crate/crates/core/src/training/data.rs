use std::path::Path;

use crate::stimuli::{read_png, DatasetManifest, Split, StimulusRecord, CANVAS};
use crate::{Error, Result};

/// The records of one split with their decoded pixels, in manifest order.
#[derive(Clone, Debug)]
pub struct LoadedSplit {
    pub split: Split,
    pub records: Vec<StimulusRecord>,
    pub images: Vec<Vec<u8>>,
}

impl LoadedSplit {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn image_refs(&self, idx: &[usize]) -> Vec<&[u8]> {
        idx.iter().map(|&i| self.images[i].as_slice()).collect()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter()
            .map(|&i| crate::models::label_of(self.records[i].truth))
            .collect()
    }
}

pub fn load_split(root: &Path, manifest: &DatasetManifest, split: Split) -> Result<LoadedSplit> {
    let records: Vec<StimulusRecord> = manifest.split(split).cloned().collect();
    if records.is_empty() {
        return Err(Error::Data(format!(
            "manifest has no {} records",
            split.as_str()
        )));
    }
    let mut images = Vec::with_capacity(records.len());
    for r in &records {
        let path = root.join(&r.image_path);
        if !path.is_file() {
            return Err(Error::Data(format!(
                "manifest lists {} but the file is missing",
                path.display()
            )));
        }
        let img = read_png(&path)?;
        if img.width != CANVAS || img.height != CANVAS {
            return Err(Error::Data(format!(
                "{} is {}x{}, expected {CANVAS}x{CANVAS}",
                path.display(),
                img.width,
                img.height
            )));
        }
        images.push(img.pixels);
    }
    Ok(LoadedSplit {
        split,
        records,
        images,
    })
}
