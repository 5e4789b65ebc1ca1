//! Point-domain reference machinery: farthest point sampling, ball query and
//! k-nearest inverse-distance interpolation, all without any projection.
//!
//! These are the oracles for the projected operators and the slow side of
//! the benchmarks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Greedy max-min selection seeded at index 0; ties go to the lowest index.
pub fn fps(points: &[[f64; 3]], m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > points.len() {
        return Err(Error::usage(format!("fps needs 1 <= m <= n, got m={m}, n={}", points.len())));
    }
    let mut picked = Vec::with_capacity(m);
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut cur = 0;
    picked.push(cur);
    // Picked points sit below every real distance so duplicates never repeat.
    nearest[cur] = -1.0;
    for _ in 1..m {
        let pc = points[cur];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = dist2(*p, pc);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        cur = best.1;
        nearest[cur] = -1.0;
        picked.push(cur);
    }
    Ok(picked)
}

/// Every index within `radius` of `center`, in ascending order.
pub fn ball_query(points: &[[f64; 3]], center: [f64; 3], radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| dist2(**p, center) <= r2)
        .map(|(i, _)| i)
        .collect()
}

/// Ball queries over a uniform voxel hash with cell side `radius`.
#[derive(Clone, Debug)]
pub struct VoxelIndex<'a> {
    points: &'a [[f64; 3]],
    radius: f64,
    cells: BTreeMap<[i64; 3], Vec<usize>>,
}

impl<'a> VoxelIndex<'a> {
    pub fn new(points: &'a [[f64; 3]], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::config("ball query radius must be positive"));
        }
        let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(cell_of(p, radius)).or_default().push(i);
        }
        Ok(Self { points, radius, cells })
    }

    /// Same set as [`ball_query`] with this index's radius.
    pub fn query(&self, center: [f64; 3]) -> Vec<usize> {
        let c = cell_of(center, self.radius);
        let r2 = self.radius * self.radius;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        out.extend(ids.iter().copied().filter(|&i| dist2(self.points[i], center) <= r2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn cell_of(p: [f64; 3], side: f64) -> [i64; 3] {
    [
        math::floor(p[0] / side) as i64,
        math::floor(p[1] / side) as i64,
        math::floor(p[2] / side) as i64,
    ]
}

/// Inverse-distance interpolation from the `k` nearest known points.
///
/// `features` is row-major `[known.len(), c]`. A query that coincides with a
/// known point copies it (the first one if several coincide).
pub fn interpolate_knn(
    known: &[[f64; 3]],
    features: &[f64],
    c: usize,
    queries: &[[f64; 3]],
    k: usize,
    p: f64,
) -> Result<Vec<f64>> {
    if known.is_empty() || k == 0 || features.len() != known.len() * c {
        return Err(Error::dim("interpolate_knn", &[known.len(), c], &[features.len(), k]));
    }
    let k = k.min(known.len());
    let mut out = vec![0.0; queries.len() * c];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(known.len());
    for (q, row) in queries.iter().zip(out.chunks_mut(c)) {
        order.clear();
        order.extend(known.iter().enumerate().map(|(i, &x)| (math::sqrt(dist2(x, *q)), i)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if order[0].0 == 0.0 {
            let i = order[0].1;
            row.copy_from_slice(&features[i * c..(i + 1) * c]);
            continue;
        }
        let mut total = 0.0;
        for &(d, i) in &order[..k] {
            let w = 1.0 / math::powf(d, p);
            total += w;
            for (o, f) in row.iter_mut().zip(&features[i * c..(i + 1) * c]) {
                *o += w * f;
            }
        }
        row.iter_mut().for_each(|o| *o /= total);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fps_on_a_line() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        assert_eq!(fps(&pts, 2).unwrap(), vec![0, 2]);
        assert_eq!(fps(&pts, 3).unwrap(), vec![0, 2, 1]);
        assert_eq!(fps(&pts, 1).unwrap(), vec![0]);
        assert!(matches!(fps(&pts, 4), Err(Error::Usage(_))));
    }

    #[test]
    fn fps_ties_take_lowest_index() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        assert_eq!(fps(&pts, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn ball_query_edges() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 3.0, 0.0]];
        assert_eq!(ball_query(&pts, pts[1], 1e-12), vec![1]);
        assert_eq!(ball_query(&pts, pts[0], 10.0), vec![0, 1, 2]);
        assert_eq!(ball_query(&pts, pts[0], 1.0), vec![0, 1]);
    }

    #[test]
    fn voxel_index_matches_brute_force() {
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|i| {
                let t = i as f64;
                [math::sin(t * 0.37) * 3.0, math::cos(t * 0.91) * 3.0, math::sin(t * 1.3)]
            })
            .collect();
        let idx = VoxelIndex::new(&pts, 0.8).unwrap();
        for c in pts.iter().step_by(7) {
            assert_eq!(idx.query(*c), ball_query(&pts, *c, 0.8));
        }
    }

    #[test]
    fn interpolation_hand_case() {
        let known = [[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let out = interpolate_knn(&known, &[0.0, 8.0], 1, &[[0.0; 3]], 2, 2.0).unwrap();
        assert!((out[0] - 0.8).abs() < 1e-12);
        let out = interpolate_knn(&known, &[0.0, 8.0], 1, &[[3.0, 0.0, 0.0]], 2, 2.0).unwrap();
        assert_eq!(out, vec![8.0]);
    }
}
