use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Numerosity ratio `small:large` with `large = small + 1`, from 1:2 to 9:10.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatioPair {
    small: u32,
    large: u32,
}

impl RatioPair {
    /// The nine ratios, least balanced first.
    pub const ALL: [RatioPair; 9] = [
        RatioPair { small: 1, large: 2 },
        RatioPair { small: 2, large: 3 },
        RatioPair { small: 3, large: 4 },
        RatioPair { small: 4, large: 5 },
        RatioPair { small: 5, large: 6 },
        RatioPair { small: 6, large: 7 },
        RatioPair { small: 7, large: 8 },
        RatioPair { small: 8, large: 9 },
        RatioPair {
            small: 9,
            large: 10,
        },
    ];

    pub fn new(small: u32, large: u32) -> Result<Self> {
        if small == 0 || small > 9 || large != small + 1 {
            return Err(Error::Domain(format!(
                "ratio {small}:{large} is not one of 1:2 .. 9:10"
            )));
        }
        Ok(RatioPair { small, large })
    }

    pub fn small(&self) -> u32 {
        self.small
    }

    pub fn large(&self) -> u32 {
        self.large
    }

    /// `small / large`, in (0, 1); larger means harder.
    pub fn balance(&self) -> f64 {
        self.small as f64 / self.large as f64
    }

    /// `large / small`, in (1, 2].
    pub fn weber_ratio(&self) -> f64 {
        self.large as f64 / self.small as f64
    }

    /// Position in [`RatioPair::ALL`].
    pub fn index(&self) -> usize {
        self.small as usize - 1
    }
}

impl fmt::Display for RatioPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.small, self.large)
    }
}

/// Spatial arrangement of the two dot sets, most organised first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageType {
    ColumnPairsSorted,
    ColumnPairsMixed,
    ScatteredPairs,
    ScatteredRandom,
}

impl ImageType {
    pub const ALL: [ImageType; 4] = [
        ImageType::ColumnPairsSorted,
        ImageType::ColumnPairsMixed,
        ImageType::ScatteredPairs,
        ImageType::ScatteredRandom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ImageType::ColumnPairsSorted => "column_pairs_sorted",
            ImageType::ColumnPairsMixed => "column_pairs_mixed",
            ImageType::ScatteredPairs => "scattered_pairs",
            ImageType::ScatteredRandom => "scattered_random",
        }
    }

    pub fn is_column(&self) -> bool {
        matches!(
            self,
            ImageType::ColumnPairsSorted | ImageType::ColumnPairsMixed
        )
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for ImageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ImageType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown image type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DotClass {
    Blue,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dot {
    /// Column coordinate of the centre, pixels.
    pub x: f64,
    /// Row coordinate of the centre, pixels.
    pub y: f64,
    pub radius: f64,
    pub class: DotClass,
}

impl Dot {
    pub fn distance(&self, other: &Dot) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotScene {
    pub dots: Vec<Dot>,
    pub image_type: ImageType,
    pub n_blue: u32,
    pub n_yellow: u32,
    pub seed: u64,
}

impl DotScene {
    /// Truth value of "most of the dots are blue".
    pub fn truth(&self) -> bool {
        self.n_blue > self.n_yellow
    }

    pub fn count(&self, class: DotClass) -> u32 {
        self.dots.iter().filter(|d| d.class == class).count() as u32
    }
}

/// One stimulus as listed in the dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusRecord {
    /// Relative to the dataset root, `/`-separated.
    pub image_path: String,
    pub split: Split,
    pub image_type: ImageType,
    pub ratio: RatioPair,
    pub multiplier: u32,
    pub n_blue: u32,
    pub n_yellow: u32,
    pub total_dots: u32,
    pub abs_diff: u32,
    pub truth: bool,
    pub seed: u64,
}

impl StimulusRecord {
    pub fn from_scene(
        image_path: String,
        split: Split,
        ratio: RatioPair,
        multiplier: u32,
        scene: &DotScene,
    ) -> Self {
        StimulusRecord {
            image_path,
            split,
            image_type: scene.image_type,
            ratio,
            multiplier,
            n_blue: scene.n_blue,
            n_yellow: scene.n_yellow,
            total_dots: scene.n_blue + scene.n_yellow,
            abs_diff: scene.n_blue.abs_diff(scene.n_yellow),
            truth: scene.truth(),
            seed: scene.seed,
        }
    }

    /// Checks the derived columns against the counts.
    pub fn validate(&self) -> Result<()> {
        let ok = self.truth == (self.n_blue > self.n_yellow)
            && self.total_dots == self.n_blue + self.n_yellow
            && self.abs_diff == self.n_blue.abs_diff(self.n_yellow)
            && self.n_blue.max(self.n_yellow) == self.multiplier * self.ratio.large()
            && self.n_blue.min(self.n_yellow) == self.multiplier * self.ratio.small();
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "inconsistent manifest row for {}",
                self.image_path
            )))
        }
    }
}
