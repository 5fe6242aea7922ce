//! Occupancy grid containers and three-class thresholding.
//!
//! Cell values use a canonical encoding: free `0.0`, occluded `0.5`,
//! occupied `1.0`. Grids are row-major with the origin at the top-left cell;
//! row index grows downwards (towards negative world `y`).

mod codec;

pub use codec::{encoded_len, read_sequence, write_sequence, decode_sequence, encode_sequence};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FREE_VALUE: f32 = 0.0;
pub const OCCLUDED_VALUE: f32 = 0.5;
pub const OCCUPIED_VALUE: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f32,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, resolution: f32) -> Result<Self> {
        let spec = GridSpec {
            width,
            height,
            resolution,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 64×64 cells at 1/3 m.
    pub fn desk() -> Self {
        GridSpec {
            width: 64,
            height: 64,
            resolution: 1.0 / 3.0,
        }
    }

    /// 128×128 cells at 1/3 m (42.7 m square).
    pub fn full() -> Self {
        GridSpec {
            width: 128,
            height: 128,
            resolution: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config(format!(
                "grid must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }
}

/// Occupancy class of a thresholded cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Free = 0,
    Occluded = 1,
    Occupied = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Free, Class::Occluded, Class::Occupied];

    pub fn value(self) -> f32 {
        match self {
            Class::Free => FREE_VALUE,
            Class::Occluded => OCCLUDED_VALUE,
            Class::Occupied => OCCUPIED_VALUE,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Threshold pair separating free / occluded / occupied values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub free: f32,
    pub occupied: f32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            free: 0.25,
            occupied: 0.75,
        }
    }
}

impl Thresholds {
    pub fn new(free: f32, occupied: f32) -> Result<Self> {
        let t = Thresholds { free, occupied };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.free && self.free < self.occupied && self.occupied < 1.0) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < free < occupied < 1, got ({}, {})",
                self.free, self.occupied
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn class_of(&self, value: f32) -> Class {
        if value < self.free {
            Class::Free
        } else if value > self.occupied {
            Class::Occupied
        } else {
            Class::Occluded
        }
    }
}

/// A single ego-centric occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ogm {
    spec: GridSpec,
    values: Vec<f32>,
}

impl Ogm {
    pub fn new(spec: GridSpec, values: Vec<f32>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.cells() {
            return Err(Error::Shape(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.cells(),
                spec.width,
                spec.height,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "occupancy value {bad} outside [0, 1]"
            )));
        }
        Ok(Ogm { spec, values })
    }

    pub fn filled(spec: GridSpec, value: f32) -> Result<Self> {
        Ogm::new(spec, vec![value; spec.cells()])
    }

    pub fn from_classes(grid: &ClassGrid) -> Self {
        Ogm {
            spec: grid.spec,
            values: grid.classes.iter().map(|c| c.value()).collect(),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.spec.width + col]
    }

    pub fn classify(&self, thresholds: Thresholds) -> Result<ClassGrid> {
        classify(self, thresholds)
    }
}

/// Per-cell occupancy classes of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGrid {
    pub spec: GridSpec,
    pub classes: Vec<Class>,
}

impl ClassGrid {
    pub fn get(&self, row: usize, col: usize) -> Class {
        self.classes[row * self.spec.width + col]
    }

    /// Cell counts indexed by [`Class::index`].
    pub fn histogram(&self) -> [usize; 3] {
        let mut h = [0; 3];
        for c in &self.classes {
            h[c.index()] += 1;
        }
        h
    }

    /// Mean (row, col) of the cells of `class`, or `None` if there are none.
    pub fn centroid(&self, class: Class) -> Option<(f64, f64)> {
        let (mut r, mut c, mut n) = (0.0, 0.0, 0usize);
        for (i, &k) in self.classes.iter().enumerate() {
            if k == class {
                r += (i / self.spec.width) as f64;
                c += (i % self.spec.width) as f64;
                n += 1;
            }
        }
        (n > 0).then(|| (r / n as f64, c / n as f64))
    }
}

/// Thresholds every cell: `< free` is FREE, `> occupied` is OCCUPIED, anything else OCCLUDED.
pub fn classify(ogm: &Ogm, thresholds: Thresholds) -> Result<ClassGrid> {
    thresholds.validate()?;
    Ok(ClassGrid {
        spec: ogm.spec,
        classes: ogm.values.iter().map(|&v| thresholds.class_of(v)).collect(),
    })
}

/// Ego pose in world coordinates: x, y in meters and heading in radians.
pub type EgoPose = [f32; 3];

/// Ordered OGM frames of one scene with per-frame ego poses and windowing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSequence {
    spec: GridSpec,
    frames: Vec<Ogm>,
    ego_poses: Vec<EgoPose>,
    history: usize,
    horizon: usize,
}

impl ScenarioSequence {
    pub fn new(
        spec: GridSpec,
        frames: Vec<Ogm>,
        ego_poses: Vec<EgoPose>,
        history: usize,
        horizon: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if frames.len() < history + horizon {
            return Err(Error::Shape(format!(
                "sequence has {} frames, needs at least H + P = {}",
                frames.len(),
                history + horizon
            )));
        }
        if ego_poses.len() != frames.len() {
            return Err(Error::Shape(format!(
                "{} ego poses for {} frames",
                ego_poses.len(),
                frames.len()
            )));
        }
        if let Some(f) = frames.iter().find(|f| f.spec != spec) {
            return Err(Error::Shape(format!(
                "frame spec {:?} differs from sequence spec {:?}",
                f.spec, spec
            )));
        }
        Ok(ScenarioSequence {
            spec,
            frames,
            ego_poses,
            history,
            horizon,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn frames(&self) -> &[Ogm] {
        &self.frames
    }

    pub fn ego_poses(&self) -> &[EgoPose] {
        &self.ego_poses
    }

    /// Number of observed frames (H).
    pub fn history(&self) -> usize {
        self.history
    }

    /// Number of predicted frames (P).
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec8() -> GridSpec {
        GridSpec::new(8, 8, 0.5).unwrap()
    }

    #[test]
    fn canonical_values_classify_to_their_classes() {
        let mut values = vec![0.0; 64];
        values[1] = 0.5;
        values[2] = 1.0;
        let g = classify(&Ogm::new(spec8(), values).unwrap(), Thresholds::default()).unwrap();
        assert_eq!(g.classes[0], Class::Free);
        assert_eq!(g.classes[1], Class::Occluded);
        assert_eq!(g.classes[2], Class::Occupied);
    }

    #[test]
    fn all_zero_grid_is_free() {
        let g = Ogm::filled(spec8(), 0.0)
            .unwrap()
            .classify(Thresholds::default())
            .unwrap();
        assert_eq!(g.histogram(), [64, 0, 0]);
    }

    #[test]
    fn histogram_matches_recount() {
        let mut rng = crate::rng::stream_rng(3, 0);
        let values: Vec<f32> = (0..64 * 64).map(|_| rng.random::<f32>()).collect();
        let spec = GridSpec::new(64, 64, 0.25).unwrap();
        let t = Thresholds::default();
        let g = classify(&Ogm::new(spec, values.clone()).unwrap(), t).unwrap();
        let mut expect = [0usize; 3];
        for v in values {
            let k = if v < 0.25 {
                0
            } else if v > 0.75 {
                2
            } else {
                1
            };
            expect[k] += 1;
        }
        assert_eq!(g.histogram(), expect);
    }

    #[test]
    fn threshold_order_is_enforced() {
        assert!(Thresholds::new(0.75, 0.25).is_err());
        assert!(Thresholds::new(0.0, 0.5).is_err());
        assert!(Thresholds::new(0.5, 1.0).is_err());
        let ogm = Ogm::filled(spec8(), 0.0).unwrap();
        let bad = Thresholds {
            free: 0.6,
            occupied: 0.4,
        };
        assert!(matches!(classify(&ogm, bad), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(4, 8, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 0.0).is_err());
        assert!(Ogm::new(spec8(), vec![0.0; 10]).is_err());
        assert!(Ogm::new(spec8(), vec![1.5; 64]).is_err());
        assert!(Ogm::new(spec8(), vec![f32::NAN; 64]).is_err());
    }

    #[test]
    fn sequence_requires_enough_frames() {
        let f = Ogm::filled(spec8(), 0.0).unwrap();
        let err = ScenarioSequence::new(spec8(), vec![f.clone(); 3], vec![[0.0; 3]; 3], 2, 2);
        assert!(err.is_err());
        let ok = ScenarioSequence::new(spec8(), vec![f; 4], vec![[0.0; 3]; 4], 2, 2).unwrap();
        assert_eq!(ok.len(), 4);
    }
}
