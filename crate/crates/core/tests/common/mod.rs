//! Independent oracles used by the acceptance suite. These deliberately
//! take the slow, obviously-correct route so they share no code with the
//! implementations they check.

use std::collections::BinaryHeap;

use crackscan::crack::BinaryMask;
use crackscan::imaging::RasterImage;
use crackscan::mission::{step_cost, AStarWeights, VoxelGrid};
use nalgebra::Point3;

/// Naive windowed mean/stdev double loop (clamped borders, true divisor).
pub fn naive_local_stats(img: &RasterImage, n: u32) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let half = (n / 2) as i64;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut vals = Vec::new();
            for dy in -half..=half {
                for dx in -half..=half {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h {
                        vals.push(img.gray(nx as u32, ny as u32) as f64);
                    }
                }
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (m - v) * (m - v)).sum::<f64>() / vals.len() as f64;
            means.push(m);
            stds.push(var.sqrt());
        }
    }
    (means, stds)
}

/// Plain Dijkstra over the 26-connected free-voxel graph, using the same
/// step-cost function as the search under test.
pub fn dijkstra_cost(
    grid: &VoxelGrid,
    start: [i64; 3],
    goal: [i64; 3],
    w: &AStarWeights,
) -> Option<f64> {
    #[derive(PartialEq)]
    struct Entry(f64, [i64; 3]);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
        }
    }

    let mut dist = vec![f64::INFINITY; grid.voxel_count()];
    let mut heap = BinaryHeap::new();
    dist[grid.linear_index(start)] = 0.0;
    heap.push(Entry(0.0, start));
    while let Some(Entry(d, v)) = heap.pop() {
        if d > dist[grid.linear_index(v)] {
            continue;
        }
        if v == goal {
            return Some(d);
        }
        for dk in -1..=1i32 {
            for dl in -1..=1i32 {
                for dm in -1..=1i32 {
                    if dk == 0 && dl == 0 && dm == 0 {
                        continue;
                    }
                    let n = [v[0] + dk as i64, v[1] + dl as i64, v[2] + dm as i64];
                    if !grid.in_bounds(n) || grid.occupied(n) {
                        continue;
                    }
                    let cand = d + step_cost(dk, dl, dm, w).unwrap();
                    let ni = grid.linear_index(n);
                    if cand < dist[ni] {
                        dist[ni] = cand;
                        heap.push(Entry(cand, n));
                    }
                }
            }
        }
    }
    None
}

/// O(n^3) hull oracle: (a, b) is a hull edge iff every other point lies
/// strictly to its left; the hull is the set of edge endpoints.
pub fn brute_force_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let mut verts: Vec<[f64; 2]> = Vec::new();
    for (i, &a) in points.iter().enumerate() {
        for (j, &b) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let is_edge = points
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i && *k != j)
                .all(|(_, &c)| cross(a, b, c) > 0.0);
            if is_edge {
                for v in [a, b] {
                    if !verts.contains(&v) {
                        verts.push(v);
                    }
                }
            }
        }
    }
    verts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    verts
}

/// Union-find over all point pairs within epsilon, as cluster sets of
/// sorted indices ordered by smallest member.
pub fn brute_force_clusters(points: &[Point3<f64>], epsilon: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= epsilon {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = (ri.min(rj), ri.max(rj));
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Recursive flood fill (via explicit queue) for 8-connected components,
/// each component a sorted pixel list, ordered by first pixel.
pub fn flood_fill_components(mask: &BinaryMask) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut components = Vec::new();
    for start_y in 0..h {
        for start_x in 0..w {
            let si = (start_y * w + start_x) as usize;
            if seen[si] || !mask.get(start_x as u32, start_y as u32) {
                continue;
            }
            let mut queue = std::collections::VecDeque::new();
            queue.push_back((start_x, start_y));
            seen[si] = true;
            let mut pixels = Vec::new();
            while let Some((x, y)) = queue.pop_front() {
                pixels.push((x as u32, y as u32));
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let ni = (ny * w + nx) as usize;
                        if !seen[ni] && mask.get(nx as u32, ny as u32) {
                            seen[ni] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            pixels.sort_unstable_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
            components.push(pixels);
        }
    }
    components
}

/// Exhaustive overlap-pair scan: nearest qualifying partner per point, ties
/// to the smallest index.
pub fn exhaustive_overlap(
    pa: &[Point3<f64>],
    a_origin: Point3<f64>,
    pb: &[Point3<f64>],
    b_origin: Point3<f64>,
    tau: f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, p) in pa.iter().enumerate() {
        let ra = p - a_origin;
        let mut best: Option<(usize, f64)> = None;
        for (j, q) in pb.iter().enumerate() {
            let d = (ra - (q - b_origin)).norm();
            if d < tau && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            pairs.push((i, j));
        }
    }
    pairs
}
