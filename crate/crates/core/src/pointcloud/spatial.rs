//! Uniform spatial hash grid for neighbor queries over 3D point sets.

use std::collections::HashMap;

use nalgebra::Point3;

/// Hash grid with cubic cells. Queries run over expanding Chebyshev shells
/// of cells, so results are exact regardless of the cell size chosen.
pub struct SpatialHash {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<Point3<f64>>,
    max_shell: i64,
}

impl SpatialHash {
    pub fn new(points: &[Point3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut map: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let k = Self::key_for(p, cell);
            lo = (lo.0.min(k.0), lo.1.min(k.1), lo.2.min(k.2));
            hi = (hi.0.max(k.0), hi.1.max(k.1), hi.2.max(k.2));
            map.entry(k).or_default().push(i as u32);
        }
        let max_shell = if points.is_empty() {
            0
        } else {
            (hi.0 - lo.0).max(hi.1 - lo.1).max(hi.2 - lo.2) + 1
        };
        Self { cell, map, points: points.to_vec(), max_shell }
    }

    /// Picks a cell size from the cloud's bounding box so occupancy stays
    /// around a handful of points per cell.
    pub fn auto_cell(points: &[Point3<f64>]) -> f64 {
        if points.len() < 2 {
            return 1.0;
        }
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let diag = (max - min).norm();
        if diag <= f64::EPSILON {
            return 1.0;
        }
        diag / (points.len() as f64).cbrt().max(1.0)
    }

    fn key_for(p: &Point3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    fn scan_shell<F: FnMut(usize, f64)>(&self, center: (i64, i64, i64), shell: i64, visit: &mut F) {
        let q_cells = |s: &Self, k: (i64, i64, i64), visit: &mut F| {
            if let Some(v) = s.map.get(&k) {
                for &i in v {
                    visit(i as usize, 0.0);
                }
            }
        };
        if shell == 0 {
            q_cells(self, center, visit);
            return;
        }
        for dx in -shell..=shell {
            for dy in -shell..=shell {
                for dz in -shell..=shell {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != shell {
                        continue;
                    }
                    q_cells(self, (center.0 + dx, center.1 + dy, center.2 + dz), visit);
                }
            }
        }
    }

    /// Nearest point to `query`, optionally excluding one index (for
    /// self-queries). Ties resolve to the smallest index.
    pub fn nearest(&self, query: &Point3<f64>, exclude: Option<usize>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let center = Self::key_for(query, self.cell);
        let mut best: Option<(usize, f64)> = None;
        for shell in 0..=self.max_shell + 1 {
            let mut visit = |i: usize, _| {
                if exclude == Some(i) {
                    return;
                }
                let d2 = (self.points[i] - query).norm_squared();
                match best {
                    Some((bi, bd)) if d2 > bd || (d2 == bd && i > bi) => {}
                    _ => best = Some((i, d2)),
                }
            };
            self.scan_shell(center, shell, &mut visit);
            if let Some((_, bd)) = best {
                // Points beyond shell `s` are at least `s * cell` away.
                let lower = shell as f64 * self.cell;
                if bd.sqrt() <= lower {
                    break;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// All points with distance <= `radius`, sorted by (distance, index).
    pub fn within_radius(&self, query: &Point3<f64>, radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if self.points.is_empty() || radius < 0.0 {
            return out;
        }
        let center = Self::key_for(query, self.cell);
        let shells = ((radius / self.cell).ceil() as i64 + 1).min(self.max_shell + 1);
        let r2 = radius * radius;
        for shell in 0..=shells {
            let mut visit = |i: usize, _| {
                let d2 = (self.points[i] - query).norm_squared();
                if d2 <= r2 {
                    out.push((i, d2.sqrt()));
                }
            };
            self.scan_shell(center, shell, &mut visit);
        }
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    /// The `k` nearest points (excluding `exclude`), sorted by distance.
    pub fn knn(&self, query: &Point3<f64>, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut candidates: Vec<(usize, f64)> = Vec::new();
        if self.points.is_empty() || k == 0 {
            return candidates;
        }
        let center = Self::key_for(query, self.cell);
        for shell in 0..=self.max_shell + 1 {
            let mut visit = |i: usize, _| {
                if exclude == Some(i) {
                    return;
                }
                candidates.push((i, (self.points[i] - query).norm_squared()));
            };
            self.scan_shell(center, shell, &mut visit);
            if candidates.len() >= k {
                candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                candidates.truncate(k);
                let lower = shell as f64 * self.cell;
                if candidates[k - 1].1.sqrt() <= lower {
                    break;
                }
            }
        }
        candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        candidates.truncate(k);
        for c in &mut candidates {
            c.1 = c.1.sqrt();
        }
        candidates
    }
}
