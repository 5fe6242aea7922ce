//! Image Similarity (IS) between occupancy grids.
//!
//! For each class `c` present in both grids,
//! `d(a→b, c)` is the mean over class-`c` cells of `a` of the Manhattan
//! distance (in cells) to the nearest class-`c` cell of `b`, and the class
//! contributes `½·(d(a→b, c) + d(b→a, c))`. A class present in only one grid
//! contributes `width + height`; a class absent from both contributes 0.
//! IS is the sum over the three classes. Lower is better; identical class
//! grids score 0.

use std::collections::VecDeque;

use crate::ogm::{Class, ClassGrid, Ogm, Thresholds};
use crate::{Error, Result};

/// Largest grid side the all-pairs oracle accepts.
pub const ORACLE_MAX_SIDE: usize = 32;

pub fn is_metric(a: &Ogm, b: &Ogm, thresholds: Thresholds) -> Result<f64> {
    check_specs(a, b)?;
    Ok(is_metric_classes(
        &a.classify(thresholds)?,
        &b.classify(thresholds)?,
    ))
}

/// IS on already-thresholded grids of the same spec.
pub fn is_metric_classes(a: &ClassGrid, b: &ClassGrid) -> f64 {
    debug_assert_eq!(a.spec, b.spec);
    let (w, h) = (a.spec.width, a.spec.height);
    let mut total = 0.0;
    let mut dist = vec![u32::MAX; w * h];
    let mut queue = VecDeque::with_capacity(w * h);
    for class in Class::ALL {
        let in_a = a.classes.iter().any(|&c| c == class);
        let in_b = b.classes.iter().any(|&c| c == class);
        total += match (in_a, in_b) {
            (false, false) => 0.0,
            (true, true) => {
                let ab = directed_mean(a, b, class, &mut dist, &mut queue);
                let ba = directed_mean(b, a, class, &mut dist, &mut queue);
                0.5 * (ab + ba)
            }
            _ => (w + h) as f64,
        };
    }
    total
}

/// Mean distance from class cells of `from` to the nearest class cell of `to`.
fn directed_mean(
    from: &ClassGrid,
    to: &ClassGrid,
    class: Class,
    dist: &mut [u32],
    queue: &mut VecDeque<usize>,
) -> f64 {
    manhattan_transform(to, class, dist, queue);
    let (mut sum, mut n) = (0u64, 0u64);
    for (i, &c) in from.classes.iter().enumerate() {
        if c == class {
            sum += dist[i] as u64;
            n += 1;
        }
    }
    sum as f64 / n as f64
}

/// Exact L1 distance transform to the cells of `class`: multi-source BFS over
/// the 4-neighbourhood, which on an obstacle-free grid yields Manhattan distance.
fn manhattan_transform(grid: &ClassGrid, class: Class, dist: &mut [u32], queue: &mut VecDeque<usize>) {
    let (w, h) = (grid.spec.width, grid.spec.height);
    queue.clear();
    for (i, &c) in grid.classes.iter().enumerate() {
        if c == class {
            dist[i] = 0;
            queue.push_back(i);
        } else {
            dist[i] = u32::MAX;
        }
    }
    while let Some(i) = queue.pop_front() {
        let (row, col) = (i / w, i % w);
        let next = dist[i] + 1;
        let mut visit = |j: usize| {
            if dist[j] > next {
                dist[j] = next;
                queue.push_back(j);
            }
        };
        if col > 0 {
            visit(i - 1);
        }
        if col + 1 < w {
            visit(i + 1);
        }
        if row > 0 {
            visit(i - w);
        }
        if row + 1 < h {
            visit(i + w);
        }
    }
}

/// The IS definition evaluated by exhaustive all-pairs minimisation. Quadratic
/// in the number of cells, so inputs are limited to 32×32.
pub fn is_metric_oracle(a: &Ogm, b: &Ogm, thresholds: Thresholds) -> Result<f64> {
    check_specs(a, b)?;
    let spec = a.spec();
    if spec.width > ORACLE_MAX_SIDE || spec.height > ORACLE_MAX_SIDE {
        return Err(Error::InvalidInput(format!(
            "oracle limited to {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE} grids, got {}x{}",
            spec.width, spec.height
        )));
    }
    Ok(oracle_classes(&a.classify(thresholds)?, &b.classify(thresholds)?))
}

pub(crate) fn oracle_classes(ca: &ClassGrid, cb: &ClassGrid) -> f64 {
    let spec = ca.spec;
    let w = spec.width;
    let cells = |g: &ClassGrid, class: Class| -> Vec<(i64, i64)> {
        g.classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| ((i / w) as i64, (i % w) as i64))
            .collect()
    };
    let directed = |from: &[(i64, i64)], to: &[(i64, i64)]| -> f64 {
        let sum: u64 = from
            .iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p.0 - q.0).abs() + (p.1 - q.1).abs()) as u64)
                    .min()
                    .unwrap()
            })
            .sum();
        sum as f64 / from.len() as f64
    };
    let mut total = 0.0;
    for class in Class::ALL {
        let (pa, pb) = (cells(ca, class), cells(cb, class));
        total += match (pa.is_empty(), pb.is_empty()) {
            (true, true) => 0.0,
            (false, false) => 0.5 * (directed(&pa, &pb) + directed(&pb, &pa)),
            _ => (spec.width + spec.height) as f64,
        };
    }
    total
}

/// Mean squared per-cell difference of the raw values.
pub fn mse(a: &Ogm, b: &Ogm) -> Result<f64> {
    check_specs(a, b)?;
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.values().len() as f64)
}

fn check_specs(a: &Ogm, b: &Ogm) -> Result<()> {
    if a.spec() != b.spec() {
        return Err(Error::Shape(format!(
            "grid specs differ: {:?} vs {:?}",
            a.spec(),
            b.spec()
        )));
    }
    Ok(())
}
