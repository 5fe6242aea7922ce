//! Single-shot inverse sensor model: a LiDAR scan becomes a three-class grid.
//!
//! The grid is centered on the scan origin and aligned with the world axes.
//! Grid coordinates are `gx = x / res + W/2` and `gy = H/2 - y / res`, so cell
//! `(row, col)` covers the half-open square `[col, col+1) × [row, row+1)`.
//!
//! Each ray is cut at every grid line it crosses. A piece longer than
//! [`MIN_OVERLAP`] cells marks its cell FREE when it lies before the hit and
//! SHADOW when it lies beyond it; the cell containing the hit point is
//! OCCUPIED. Labels merge across rays with priority
//! OCCUPIED > SHADOW > FREE, and any cell no ray reaches, as well as every
//! shadowed cell, is reported OCCLUDED.

use super::geometry::ray_direction;
use super::lidar::LidarScan;
use crate::ogm::{Class, GridSpec, Ogm};

/// Pieces of a ray shorter than this (in cells) do not mark a cell.
pub const MIN_OVERLAP: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Label {
    Untouched,
    Free,
    Shadow,
    Occupied,
}

pub fn render_ogm(scan: &LidarScan, spec: GridSpec) -> Ogm {
    let (w, h) = (spec.width, spec.height);
    let res = spec.resolution as f64;
    let mut labels = vec![Label::Untouched; w * h];
    let mut mark = |row: usize, col: usize, l: Label| {
        let cell = &mut labels[row * w + col];
        if l > *cell {
            *cell = l;
        }
    };

    for (i, &angle) in scan.angles.iter().enumerate() {
        let d = ray_direction(angle);
        // Direction in grid units per meter.
        let dg = [d[0] / res, -d[1] / res];
        let g0 = [w as f64 / 2.0, h as f64 / 2.0];
        let hit = scan.is_hit(i);
        let range = scan.ranges[i];
        let t_exit = grid_exit(g0, dg, w as f64, h as f64);
        let t_end = if hit { t_exit } else { range.min(t_exit) };

        let mut cuts = vec![0.0, t_end];
        if hit && range < t_end {
            cuts.push(range);
        }
        for (axis, n) in [(0usize, w), (1, h)] {
            if dg[axis] != 0.0 {
                for k in 0..=n {
                    let t = (k as f64 - g0[axis]) / dg[axis];
                    if t > 0.0 && t < t_end {
                        cuts.push(t);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);

        let min_len = MIN_OVERLAP * res;
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= min_len {
                continue;
            }
            let mid = 0.5 * (a + b);
            if let Some((row, col)) = cell_at([g0[0] + mid * dg[0], g0[1] + mid * dg[1]], w, h) {
                let label = if hit && a >= range {
                    Label::Shadow
                } else {
                    Label::Free
                };
                mark(row, col, label);
            }
        }
        if hit {
            let p = [g0[0] + range * dg[0], g0[1] + range * dg[1]];
            if let Some((row, col)) = cell_at(p, w, h) {
                mark(row, col, Label::Occupied);
            }
        }
    }

    let values = labels
        .into_iter()
        .map(|l| match l {
            Label::Free => Class::Free.value(),
            Label::Occupied => Class::Occupied.value(),
            Label::Shadow | Label::Untouched => Class::Occluded.value(),
        })
        .collect();
    Ogm::new(spec, values).expect("canonical values form a valid grid")
}

/// Cell containing grid point `g`, if it lies on the grid.
pub(crate) fn cell_at(g: [f64; 2], w: usize, h: usize) -> Option<(usize, usize)> {
    let (col, row) = (g[0].floor(), g[1].floor());
    (col >= 0.0 && row >= 0.0 && col < w as f64 && row < h as f64).then(|| (row as usize, col as usize))
}

/// Ray parameter at which `g0 + t·dg` leaves the box `[0, w] × [0, h]`.
fn grid_exit(g0: [f64; 2], dg: [f64; 2], w: f64, h: f64) -> f64 {
    let mut t = f64::INFINITY;
    for (axis, size) in [(0usize, w), (1, h)] {
        if dg[axis] > 0.0 {
            t = t.min((size - g0[axis]) / dg[axis]);
        } else if dg[axis] < 0.0 {
            t = t.min(-g0[axis] / dg[axis]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::lidar::scan_angles;
    use crate::ogm::{ClassGrid, Thresholds};
    use rand::Rng;

    fn classes(ogm: &Ogm) -> ClassGrid {
        ogm.classify(Thresholds::default()).unwrap()
    }

    #[test]
    fn no_hits_leaves_only_free_and_untraversed_cells() {
        let spec = GridSpec::new(32, 32, 0.5).unwrap();
        // 8 m reaches the edge midpoints (8 m away) but not the corners (11.3 m).
        let scan = LidarScan::new([0.0, 0.0], scan_angles(720), vec![8.0; 720], 8.0).unwrap();
        let g = classes(&render_ogm(&scan, spec));
        assert_eq!(g.get(16, 16), Class::Free);
        assert_eq!(g.get(16, 31), Class::Free);
        assert_eq!(g.get(0, 0), Class::Occluded);
        assert_eq!(g.get(31, 31), Class::Occluded);
        assert_eq!(g.histogram()[Class::Occupied.index()], 0);
    }

    #[test]
    fn single_hit_casts_a_shadow() {
        let spec = GridSpec::new(32, 32, 0.5).unwrap();
        let n = 8;
        let mut ranges = vec![20.0; n];
        ranges[0] = 3.2;
        let scan = LidarScan::new([0.0, 0.0], scan_angles(n), ranges, 20.0).unwrap();
        let g = classes(&render_ogm(&scan, spec));
        // (3.2, 0) -> gx = 22.4, gy = 16
        assert_eq!(g.get(16, 22), Class::Occupied);
        for col in 16..22 {
            assert_eq!(g.get(16, col), Class::Free, "col {col}");
        }
        for col in 23..32 {
            assert_eq!(g.get(16, col), Class::Occluded, "col {col}");
        }
        assert_eq!(g.get(16, 5), Class::Free);
    }

    /// Per-cell line-of-sight labelling: for every (cell, ray) pair the ray's
    /// overlap with the cell square is computed directly with a slab test.
    pub(crate) fn los_oracle(scan: &LidarScan, spec: GridSpec) -> ClassGrid {
        let (w, h) = (spec.width, spec.height);
        let res = spec.resolution as f64;
        let mut out = Vec::with_capacity(w * h);
        let rays: Vec<_> = scan
            .angles
            .iter()
            .zip(&scan.ranges)
            .map(|(&a, &r)| {
                let d = ray_direction(a);
                ([d[0] / res, -d[1] / res], r, r < scan.max_range)
            })
            .collect();
        let g0 = [w as f64 / 2.0, h as f64 / 2.0];
        for row in 0..h {
            for col in 0..w {
                let lo = [col as f64, row as f64];
                let mut occupied = false;
                let mut shadow = false;
                let mut free = false;
                for &(dg, range, hit) in &rays {
                    // overlap [t0, t1] of the ray line with the half-open cell
                    let mut t0 = f64::NEG_INFINITY;
                    let mut t1 = f64::INFINITY;
                    let mut inside = true;
                    for axis in 0..2 {
                        if dg[axis] == 0.0 {
                            inside &= lo[axis] <= g0[axis] && g0[axis] < lo[axis] + 1.0;
                        } else {
                            let a = (lo[axis] - g0[axis]) / dg[axis];
                            let b = (lo[axis] + 1.0 - g0[axis]) / dg[axis];
                            t0 = t0.max(a.min(b));
                            t1 = t1.min(a.max(b));
                        }
                    }
                    if !inside {
                        continue;
                    }
                    let min_len = MIN_OVERLAP * res;
                    let t0 = t0.max(0.0);
                    if hit {
                        let p = [g0[0] + range * dg[0], g0[1] + range * dg[1]];
                        if p[0].floor() == lo[0] && p[1].floor() == lo[1] {
                            occupied = true;
                        }
                        if t1.min(range) - t0 > min_len {
                            free = true;
                        }
                        if t1 - t0.max(range) > min_len {
                            shadow = true;
                        }
                    } else if t1.min(range) - t0 > min_len {
                        free = true;
                    }
                }
                out.push(if occupied {
                    Class::Occupied
                } else if shadow {
                    Class::Occluded
                } else if free {
                    Class::Free
                } else {
                    Class::Occluded
                });
            }
        }
        ClassGrid {
            spec,
            classes: out,
        }
    }

    #[test]
    fn random_scans_match_per_cell_oracle() {
        let spec = GridSpec::new(32, 32, 0.5).unwrap();
        let mut rng = crate::rng::stream_rng(5, 0);
        for _ in 0..20 {
            let n = rng.random_range(16..200);
            let max_range = rng.random_range(5.0..15.0);
            let ranges = (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        max_range
                    } else {
                        rng.random_range(0.2..max_range)
                    }
                })
                .collect();
            let scan = LidarScan::new([0.0, 0.0], scan_angles(n), ranges, max_range).unwrap();
            assert_eq!(classes(&render_ogm(&scan, spec)), los_oracle(&scan, spec));
        }
    }
}
