use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Aabb { min, max }
    }

    pub fn from_center(center: [f64; 2], half: [f64; 2]) -> Self {
        Aabb {
            min: [center[0] - half[0], center[1] - half[1]],
            max: [center[0] + half[0], center[1] + half[1]],
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..2).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i])
    }

    /// Closed containment: boundary points count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..2).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    /// Distance along the ray `origin + t·dir` (t ≥ 0) to the first boundary
    /// point of the rectangle, using the slab method. `dir` need not be unit
    /// length; `t` is in units of `dir`.
    pub fn ray_entry(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..2 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
            } else {
                let a = (self.min[i] - origin[i]) / dir[i];
                let b = (self.max[i] - origin[i]) / dir[i];
                t_near = t_near.max(a.min(b));
                t_far = t_far.min(a.max(b));
            }
        }
        (t_near <= t_far && t_far >= 0.0).then(|| t_near.max(0.0))
    }
}

/// Unit direction for a ray angle. Components below 1e-12 in magnitude are
/// flushed to zero so axis-aligned rays stay exactly axis-aligned.
pub fn ray_direction(angle: f64) -> [f64; 2] {
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    [snap(angle.cos()), snap(angle.sin())]
}
