//! Weighted A* search over the 26-connected voxel graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{AStarWeights, MissionError, VoxelGrid};

/// Cost of one move to a neighbor offset `(k, l, m)`, each in {-1, 0, 1}:
/// `a1 k^2 + a2 l^2 + a3 m^2`.
pub fn step_cost(k: i32, l: i32, m: i32, w: &AStarWeights) -> Result<f64, MissionError> {
    if !((-1..=1).contains(&k) && (-1..=1).contains(&l) && (-1..=1).contains(&m)) {
        return Err(MissionError::InvalidMove { k, l, m });
    }
    if k == 0 && l == 0 && m == 0 {
        return Err(MissionError::InvalidMove { k, l, m });
    }
    Ok(w.a1 * (k * k) as f64 + w.a2 * (l * l) as f64 + w.a3 * (m * m) as f64)
}

#[derive(Debug, Clone)]
pub struct VoxelPath {
    /// Start and goal inclusive; empty when start == goal.
    pub voxels: Vec<[i64; 3]>,
    pub cost: f64,
}

/// Heap entry ordered by (f, h, voxel) ascending.
struct Open {
    f: f64,
    h: f64,
    voxel: [i64; 3],
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap on (f, h, voxel).
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.voxel.cmp(&self.voxel))
    }
}

fn chebyshev(a: [i64; 3], b: [i64; 3]) -> i64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs()).max((a[2] - b[2]).abs())
}

/// Minimum-total-cost 26-connected path between two free voxels.
///
/// The heuristic `min(a1, a2, a3) * chebyshev(n, goal)` is admissible: every
/// move costs at least the smallest weight and reduces the Chebyshev
/// distance by at most one. Ties break on smaller h, then lexicographic
/// voxel order.
pub fn astar(
    grid: &VoxelGrid,
    start: [i64; 3],
    goal: [i64; 3],
    w: &AStarWeights,
) -> Result<VoxelPath, MissionError> {
    for (name, v) in [("start", start), ("goal", goal)] {
        if !grid.in_bounds(v) {
            return Err(MissionError::InvalidEndpoint(format!("{name} voxel {v:?} out of bounds")));
        }
        if grid.occupied(v) {
            return Err(MissionError::InvalidEndpoint(format!("{name} voxel {v:?} is occupied")));
        }
    }
    if !w.valid() {
        return Err(MissionError::InvalidParameter(
            "weights must be nonnegative with at least one positive".into(),
        ));
    }
    if start == goal {
        return Ok(VoxelPath { voxels: Vec::new(), cost: 0.0 });
    }

    let min_w = w.a1.min(w.a2).min(w.a3);
    let h = |v: [i64; 3]| min_w * chebyshev(v, goal) as f64;

    let idx = |v: [i64; 3]| grid.linear_index(v);
    let mut g = vec![f64::INFINITY; grid.voxel_count()];
    let mut parent: Vec<u32> = vec![u32::MAX; grid.voxel_count()];
    let mut closed = vec![false; grid.voxel_count()];

    let mut open = BinaryHeap::new();
    g[idx(start)] = 0.0;
    open.push(Open { f: h(start), h: h(start), voxel: start });

    while let Some(Open { voxel, .. }) = open.pop() {
        let vi = idx(voxel);
        if closed[vi] {
            continue;
        }
        closed[vi] = true;
        if voxel == goal {
            let mut path = vec![goal];
            let mut cur = vi;
            while parent[cur] != u32::MAX {
                cur = parent[cur] as usize;
                path.push(grid.voxel_at(cur));
            }
            path.reverse();
            return Ok(VoxelPath { voxels: path, cost: g[vi] });
        }
        for dk in -1..=1i32 {
            for dl in -1..=1i32 {
                for dm in -1..=1i32 {
                    if dk == 0 && dl == 0 && dm == 0 {
                        continue;
                    }
                    let n = [voxel[0] + dk as i64, voxel[1] + dl as i64, voxel[2] + dm as i64];
                    if !grid.in_bounds(n) || grid.occupied(n) {
                        continue;
                    }
                    let ni = idx(n);
                    if closed[ni] {
                        continue;
                    }
                    let cost = step_cost(dk, dl, dm, w).expect("nonzero move");
                    let cand = g[vi] + cost;
                    if cand < g[ni] {
                        g[ni] = cand;
                        parent[ni] = vi as u32;
                        open.push(Open { f: cand + h(n), h: h(n), voxel: n });
                    }
                }
            }
        }
    }
    Err(MissionError::Unreachable(format!("no path from {start:?} to {goal:?}")))
}
