use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::geometry::ray_direction;
use super::world::World;
use crate::{Error, Result};

/// A planar 360° range scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub origin: [f64; 2],
    /// Radians, `2π·i/n` for `i in 0..n`.
    pub angles: Vec<f64>,
    /// Meters, one per angle, each in `(0, max_range]`.
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

impl LidarScan {
    pub fn new(origin: [f64; 2], angles: Vec<f64>, ranges: Vec<f64>, max_range: f64) -> Result<Self> {
        if angles.len() != ranges.len() {
            return Err(Error::Shape(format!(
                "{} angles but {} ranges",
                angles.len(),
                ranges.len()
            )));
        }
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::InvalidInput(format!("max_range must be positive, got {max_range}")));
        }
        if let Some(r) = ranges.iter().find(|r| !(**r > 0.0 && **r <= max_range)) {
            return Err(Error::InvalidInput(format!(
                "range {r} outside (0, {max_range}]"
            )));
        }
        if angles.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("scan angles must be strictly increasing".into()));
        }
        Ok(LidarScan {
            origin,
            angles,
            ranges,
            max_range,
        })
    }

    /// Whether ray `i` stopped on a surface before reaching `max_range`.
    pub fn is_hit(&self, i: usize) -> bool {
        self.ranges[i] < self.max_range
    }
}

/// Uniform ray angles over `[0, 2π)`.
pub fn scan_angles(n_rays: usize) -> Vec<f64> {
    (0..n_rays).map(|i| TAU * i as f64 / n_rays as f64).collect()
}

/// Casts `n_rays` uniformly spaced rays from `origin` against every static
/// obstacle and agent footprint in `world` (the ego footprint is transparent).
/// Each range is the distance to the first rectangle boundary, clamped to `max_range`.
pub fn cast_rays(world: &World, origin: [f64; 2], n_rays: usize, max_range: f64) -> Result<LidarScan> {
    if n_rays < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 rays, got {n_rays}")));
    }
    if !(max_range.is_finite() && max_range > 0.0) {
        return Err(Error::InvalidInput(format!("max_range must be positive, got {max_range}")));
    }
    let rects: Vec<_> = world.rectangles().collect();
    if let Some(r) = rects.iter().find(|r| r.contains(origin)) {
        return Err(Error::InvalidInput(format!(
            "scan origin {origin:?} lies inside rectangle {r:?}"
        )));
    }
    let angles = scan_angles(n_rays);
    let ranges = angles
        .iter()
        .map(|&a| {
            let dir = ray_direction(a);
            rects
                .iter()
                .filter_map(|r| r.ray_entry(origin, dir))
                .fold(max_range, f64::min)
        })
        .collect();
    LidarScan::new(origin, angles, ranges, max_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Aabb, Agent};
    use rand::Rng;

    fn empty_world() -> World {
        World::new(
            Aabb::new([-50.0, -50.0], [50.0, 50.0]),
            vec![],
            vec![],
            Agent::new([0.0, 0.0], [0.0, 0.0], [1.0, 1.0]),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn empty_world_reads_max_range() {
        let scan = cast_rays(&empty_world(), [0.0, 0.0], 16, 12.5).unwrap();
        assert!(scan.ranges.iter().all(|&r| r == 12.5));
        assert_eq!(scan.angles.len(), 16);
        assert_eq!(scan.angles[0], 0.0);
    }

    #[test]
    fn wall_ahead_on_positive_x() {
        let w = World::new(
            Aabb::new([-50.0, -50.0], [50.0, 50.0]),
            vec![Aabb::new([5.0, -10.0], [5.2, 10.0])],
            vec![],
            Agent::new([0.0, 0.0], [0.0, 0.0], [1.0, 1.0]),
            10.0,
        )
        .unwrap();
        let scan = cast_rays(&w, [0.0, 0.0], 8, 30.0).unwrap();
        assert_eq!(scan.ranges[0], 5.0);
        assert_eq!(scan.ranges[4], 30.0);
    }

    #[test]
    fn origin_inside_agent_is_rejected() {
        let mut w = empty_world();
        w = World::new(
            w.bounds(),
            vec![],
            vec![Agent::new([0.5, 0.0], [0.0, 0.0], [1.0, 1.0])],
            *w.ego(),
            10.0,
        )
        .unwrap();
        assert!(matches!(
            cast_rays(&w, [0.0, 0.0], 8, 10.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(cast_rays(&empty_world(), [0.0, 0.0], 3, 10.0).is_err());
    }

    /// Marches along the ray in 1 mm steps until a sample lands inside a rectangle.
    pub(crate) fn ray_march(rects: &[Aabb], origin: [f64; 2], angle: f64, max_range: f64) -> f64 {
        let (s, c) = angle.sin_cos();
        let step = 1e-3;
        let mut k = 0usize;
        loop {
            let t = k as f64 * step;
            if t >= max_range {
                return max_range;
            }
            let p = [origin[0] + t * c, origin[1] + t * s];
            if rects.iter().any(|r| r.contains(p)) {
                return t;
            }
            k += 1;
        }
    }

    pub(crate) fn random_world(rng: &mut impl Rng, n_rects: usize) -> World {
        let mut obstacles = Vec::new();
        while obstacles.len() < n_rects {
            let c = [rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)];
            let h = [rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)];
            let r = Aabb::from_center(c, h);
            if !r.contains([0.0, 0.0]) && !r.intersects(&Aabb::from_center([0.0, 0.0], [0.2, 0.2])) {
                obstacles.push(r);
            }
        }
        World::new(
            Aabb::new([-20.0, -20.0], [20.0, 20.0]),
            obstacles,
            vec![],
            Agent::new([0.0, 0.0], [0.0, 0.0], [0.1, 0.1]),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn matches_ray_march_oracle_on_random_worlds() {
        let mut rng = crate::rng::stream_rng(11, 0);
        let mut checked = 0;
        while checked < 1000 {
            let w = random_world(&mut rng, 3);
            let rects: Vec<_> = w.rectangles().collect();
            let scan = cast_rays(&w, [0.0, 0.0], 64, 20.0).unwrap();
            for _ in 0..64 {
                let i = rng.random_range(0..64);
                let oracle = ray_march(&rects, scan.origin, scan.angles[i], 20.0);
                assert!(
                    (scan.ranges[i] - oracle).abs() <= 2e-3,
                    "ray {i}: {} vs oracle {}",
                    scan.ranges[i],
                    oracle
                );
                checked += 1;
            }
        }
    }
}
