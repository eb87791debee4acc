use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dot, DotClass, DotScene, ImageType, RatioPair, CANVAS, MAX_TOTAL_DOTS};
use crate::{Error, Result};

/// Pixel geometry shared by all scenes of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub radius: f64,
    /// Extra clearance between any two dots beyond touching.
    pub margin: f64,
    /// Horizontal distance between the two column centre lines.
    pub column_gap: f64,
    /// Vertical distance between consecutive dots in a column.
    pub column_pitch: f64,
    /// Centre distance between the two dots of a scattered contrast pair.
    pub pair_offset: f64,
    /// Rejection-sampling attempts allowed per scene.
    pub placement_budget: usize,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        SceneGeometry {
            radius: 3.0,
            margin: 1.0,
            column_gap: 10.0,
            column_pitch: 9.0,
            pair_offset: 8.0,
            placement_budget: 1000,
        }
    }
}

impl SceneGeometry {
    fn min_separation(&self) -> f64 {
        2.0 * self.radius + self.margin
    }

    /// Separation between dots of different scattered units; keeps contrast
    /// pairs unambiguous.
    fn unit_separation(&self) -> f64 {
        self.min_separation().max(self.pair_offset + self.margin)
    }

    pub fn validate(&self) -> Result<()> {
        let tallest = RatioPair::ALL
            .iter()
            .map(|r| MAX_TOTAL_DOTS / (r.large() + r.small()) * r.large())
            .max()
            .unwrap_or(1) as f64;
        let column_height = (tallest - 1.0) * self.column_pitch + 2.0 * self.radius;
        let checks = [
            (self.radius > 0.0, "radius must be positive"),
            (self.margin >= 0.0, "margin must be non-negative"),
            (
                self.column_pitch > self.min_separation(),
                "column pitch must exceed 2 * radius + margin",
            ),
            (
                self.column_gap > self.min_separation(),
                "column gap must exceed 2 * radius + margin",
            ),
            (
                self.pair_offset > self.min_separation(),
                "pair offset must exceed 2 * radius + margin",
            ),
            (
                column_height <= CANVAS as f64,
                "longest column does not fit the canvas",
            ),
            (
                self.placement_budget > 0,
                "placement budget must be positive",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(format!("scene geometry: {msg}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SetSizes {
    pub majority: u32,
    pub minority: u32,
    pub multiplier: u32,
}

/// Picks `k` uniformly among multipliers with `k * (large + small) <= 22`.
pub fn choose_set_sizes<R: Rng + ?Sized>(ratio: RatioPair, rng: &mut R) -> SetSizes {
    let max_k = MAX_TOTAL_DOTS / (ratio.large() + ratio.small());
    let k = rng.gen_range(1..=max_k);
    SetSizes {
        majority: k * ratio.large(),
        minority: k * ratio.small(),
        multiplier: k,
    }
}

/// Draws a scene for one manifest cell. All randomness comes from `seed`.
pub fn generate_scene(
    geometry: &SceneGeometry,
    ratio: RatioPair,
    image_type: ImageType,
    truth: bool,
    seed: u64,
) -> Result<(DotScene, SetSizes)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = choose_set_sizes(ratio, &mut rng);
    let (majority, minority) = if truth {
        (DotClass::Blue, DotClass::Yellow)
    } else {
        (DotClass::Yellow, DotClass::Blue)
    };
    let dots = match image_type {
        ImageType::ColumnPairsSorted | ImageType::ColumnPairsMixed => columns(
            geometry,
            sizes,
            majority,
            minority,
            image_type == ImageType::ColumnPairsMixed,
            &mut rng,
        ),
        ImageType::ScatteredPairs => {
            scattered_pairs(geometry, sizes, majority, minority, &mut rng)?
        }
        ImageType::ScatteredRandom => {
            scattered_random(geometry, sizes, majority, minority, &mut rng)?
        }
    };
    let (n_blue, n_yellow) = if truth {
        (sizes.majority, sizes.minority)
    } else {
        (sizes.minority, sizes.majority)
    };
    Ok((
        DotScene {
            dots,
            image_type,
            n_blue,
            n_yellow,
            seed,
        },
        sizes,
    ))
}

/// Two vertical columns about the canvas centre, rows aligned from the top of
/// a vertically centred block. The majority column side is random.
fn columns<R: Rng + ?Sized>(
    g: &SceneGeometry,
    sizes: SetSizes,
    majority: DotClass,
    minority: DotClass,
    mixed: bool,
    rng: &mut R,
) -> Vec<Dot> {
    let centre = (CANVAS as f64 - 1.0) / 2.0;
    let rows = sizes.majority;
    let top = centre - (rows as f64 - 1.0) * g.column_pitch / 2.0;
    let left_x = centre - g.column_gap / 2.0;
    let right_x = centre + g.column_gap / 2.0;
    let (major_x, minor_x) = if rng.gen_bool(0.5) {
        (left_x, right_x)
    } else {
        (right_x, left_x)
    };
    let mut slots = Vec::with_capacity((sizes.majority + sizes.minority) as usize);
    for (x, n) in [(major_x, sizes.majority), (minor_x, sizes.minority)] {
        for row in 0..n {
            slots.push((x, top + row as f64 * g.column_pitch));
        }
    }
    let mut classes: Vec<DotClass> = std::iter::repeat(majority)
        .take(sizes.majority as usize)
        .chain(std::iter::repeat(minority).take(sizes.minority as usize))
        .collect();
    if mixed {
        classes.shuffle(rng);
    }
    slots
        .into_iter()
        .zip(classes)
        .map(|((x, y), class)| Dot {
            x,
            y,
            radius: g.radius,
            class,
        })
        .collect()
}

struct Placer<'a> {
    geometry: &'a SceneGeometry,
    placed: Vec<Dot>,
    attempts: usize,
    target: usize,
}

impl<'a> Placer<'a> {
    fn new(geometry: &'a SceneGeometry, target: usize) -> Self {
        Placer {
            geometry,
            placed: Vec::with_capacity(target),
            attempts: 0,
            target,
        }
    }

    fn lo(&self) -> f64 {
        self.geometry.radius
    }

    fn hi(&self) -> f64 {
        CANVAS as f64 - 1.0 - self.geometry.radius
    }

    fn fits(&self, candidate: &[Dot], separation: f64) -> bool {
        candidate.iter().all(|c| {
            c.x >= self.lo()
                && c.x <= self.hi()
                && c.y >= self.lo()
                && c.y <= self.hi()
                && self.placed.iter().all(|p| p.distance(c) > separation)
        })
    }

    /// Samples candidate units until one fits or the budget runs out.
    fn place<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        separation: f64,
        mut make: impl FnMut(&mut R, f64, f64) -> Vec<Dot>,
    ) -> Result<()> {
        loop {
            if self.attempts >= self.geometry.placement_budget {
                return Err(Error::PlacementFailure {
                    placed: self.placed.len(),
                    placed_target: self.target,
                    budget: self.geometry.placement_budget,
                });
            }
            self.attempts += 1;
            let x = rng.gen_range(self.lo()..=self.hi());
            let y = rng.gen_range(self.lo()..=self.hi());
            let unit = make(rng, x, y);
            if self.fits(&unit, separation) {
                self.placed.extend(unit);
                return Ok(());
            }
        }
    }
}

fn scattered_pairs<R: Rng + ?Sized>(
    g: &SceneGeometry,
    sizes: SetSizes,
    majority: DotClass,
    minority: DotClass,
    rng: &mut R,
) -> Result<Vec<Dot>> {
    let mut placer = Placer::new(g, (sizes.majority + sizes.minority) as usize);
    let separation = g.unit_separation();
    let dot = |x, y, class| Dot {
        x,
        y,
        radius: g.radius,
        class,
    };
    for _ in 0..sizes.minority {
        placer.place(rng, separation, |rng, x, y| {
            let (first, second) = if rng.gen_bool(0.5) {
                (majority, minority)
            } else {
                (minority, majority)
            };
            vec![dot(x, y, first), dot(x + g.pair_offset, y, second)]
        })?;
    }
    for _ in 0..sizes.majority - sizes.minority {
        placer.place(rng, separation, |_, x, y| vec![dot(x, y, majority)])?;
    }
    Ok(placer.placed)
}

fn scattered_random<R: Rng + ?Sized>(
    g: &SceneGeometry,
    sizes: SetSizes,
    majority: DotClass,
    minority: DotClass,
    rng: &mut R,
) -> Result<Vec<Dot>> {
    let mut placer = Placer::new(g, (sizes.majority + sizes.minority) as usize);
    let classes = std::iter::repeat(majority)
        .take(sizes.majority as usize)
        .chain(std::iter::repeat(minority).take(sizes.minority as usize));
    for class in classes {
        placer.place(rng, g.min_separation(), |_, x, y| {
            vec![Dot {
                x,
                y,
                radius: g.radius,
                class,
            }]
        })?;
    }
    Ok(placer.placed)
}
