//! Voxel occupancy grid, camera shooting-point generation over surface
//! patches, and weighted A* waypoint planning.

mod astar;

use std::path::Path;

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::SurfacePatch;

pub use astar::{astar, step_cost, VoxelPath};

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("point {point:?} outside grid bounds")]
    OutOfBounds { point: [f64; 3] },
    #[error("invalid move ({k}, {l}, {m}): components must be in {{-1, 0, 1}} and not all zero")]
    InvalidMove { k: i32, l: i32, m: i32 },
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Uniform occupancy grid over an axis-aligned volume.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    origin: Point3<f64>,
    resolution: f64,
    dims: [usize; 3],
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(origin: Point3<f64>, resolution: f64, dims: [usize; 3]) -> Self {
        assert!(resolution > 0.0 && dims.iter().all(|&d| d > 0));
        Self { origin, resolution, dims, occupancy: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.occupancy.len()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|o| **o).count()
    }

    #[inline]
    pub fn in_bounds(&self, v: [i64; 3]) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    #[inline]
    pub fn linear_index(&self, v: [i64; 3]) -> usize {
        debug_assert!(self.in_bounds(v));
        (v[2] as usize * self.dims[1] + v[1] as usize) * self.dims[0] + v[0] as usize
    }

    pub fn voxel_at(&self, index: usize) -> [i64; 3] {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        let z = index / (self.dims[0] * self.dims[1]);
        [x as i64, y as i64, z as i64]
    }

    #[inline]
    pub fn occupied(&self, v: [i64; 3]) -> bool {
        self.occupancy[self.linear_index(v)]
    }

    pub fn set_occupied(&mut self, v: [i64; 3]) {
        let i = self.linear_index(v);
        self.occupancy[i] = true;
    }

    /// Voxel containing a point; points exactly on the upper boundary fall
    /// into the last voxel of that axis.
    pub fn voxel_of(&self, p: &Point3<f64>) -> Option<[i64; 3]> {
        let mut v = [0i64; 3];
        for a in 0..3 {
            let rel = (p[a] - self.origin[a]) / self.resolution;
            let mut idx = rel.floor() as i64;
            if idx == self.dims[a] as i64 && (rel - rel.floor()).abs() < 1e-9 {
                idx -= 1; // upper boundary
            }
            if idx < 0 || idx >= self.dims[a] as i64 {
                return None;
            }
            v[a] = idx;
        }
        Some(v)
    }

    /// World-space center of a voxel.
    pub fn center(&self, v: [i64; 3]) -> Point3<f64> {
        Point3::new(
            self.origin.x + (v[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (v[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (v[2] as f64 + 0.5) * self.resolution,
        )
    }
}

/// Grid construction parameters: bounds of the operating volume, voxel edge
/// length, and the obstacle inflation radius in voxels (a stand-in for the
/// vehicle radius). Missing bounds are derived from the scene with a safety
/// margin.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub min: Option<[f64; 3]>,
    pub max: Option<[f64; 3]>,
    pub resolution: f64,
    pub inflation: u32,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { min: None, max: None, resolution: 0.25, inflation: 1 }
    }
}

impl GridParams {
    pub fn with_bounds(min: [f64; 3], max: [f64; 3], resolution: f64, inflation: u32) -> Self {
        Self { min: Some(min), max: Some(max), resolution, inflation }
    }

    /// Configured bounds, or the bounding box of the given scene points
    /// padded by `margin` on every side.
    fn resolve_bounds<'a>(
        &self,
        scene: impl Iterator<Item = &'a Point3<f64>>,
        margin: f64,
    ) -> Result<([f64; 3], [f64; 3]), MissionError> {
        if let (Some(min), Some(max)) = (self.min, self.max) {
            return Ok((min, max));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for p in scene {
            any = true;
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !any {
            return Err(MissionError::InvalidParameter(
                "cannot derive grid bounds from an empty scene".into(),
            ));
        }
        for a in 0..3 {
            lo[a] -= margin;
            hi[a] += margin;
        }
        Ok((self.min.unwrap_or(lo), self.max.unwrap_or(hi)))
    }
}

/// Builds the occupancy grid: a voxel is occupied iff it contains an
/// obstacle point or lies within `inflation` Chebyshev voxels of one.
/// Bounds not fixed in `params` come from the obstacle bounding box plus a
/// one-meter margin.
pub fn build_voxel_grid(
    obstacle_points: &[Point3<f64>],
    params: &GridParams,
) -> Result<VoxelGrid, MissionError> {
    if params.resolution <= 0.0 {
        return Err(MissionError::InvalidParameter("resolution must be positive".into()));
    }
    let (bmin, bmax) = params.resolve_bounds(obstacle_points.iter(), 1.0)?;
    let origin = Point3::new(bmin[0], bmin[1], bmin[2]);
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let span = bmax[a] - bmin[a];
        if span <= 0.0 {
            return Err(MissionError::InvalidParameter(format!("empty bounds on axis {a}")));
        }
        dims[a] = (span / params.resolution).ceil().max(1.0) as usize;
    }
    let mut grid = VoxelGrid::empty(origin, params.resolution, dims);
    let r = params.inflation as i64;
    for p in obstacle_points {
        let v = grid.voxel_of(p).ok_or(MissionError::OutOfBounds { point: [p.x, p.y, p.z] })?;
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let n = [v[0] + dx, v[1] + dy, v[2] + dz];
                    if grid.in_bounds(n) {
                        grid.set_occupied(n);
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Camera intrinsics in millimeters and pixels.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    pub focal_mm: f64,
    pub sensor_width_mm: f64,
    pub sensor_height_mm: f64,
    pub pixel_cols: u32,
    pub pixel_rows: u32,
}

impl Default for CameraModel {
    fn default() -> Self {
        // Action camera at 12 MP.
        Self {
            focal_mm: 34.4,
            sensor_width_mm: 6.17,
            sensor_height_mm: 4.63,
            pixel_cols: 4000,
            pixel_rows: 3000,
        }
    }
}

impl CameraModel {
    pub fn valid(&self) -> bool {
        self.focal_mm > 0.0
            && self.sensor_width_mm > 0.0
            && self.sensor_height_mm > 0.0
            && self.pixel_cols > 0
            && self.pixel_rows > 0
    }

    /// Standoff distance (meters) at which one pixel images `gsd_mm_per_px`
    /// millimeters: `d = gsd * f * cols / sensor_width`.
    pub fn standoff_m(&self, gsd_mm_per_px: f64) -> f64 {
        gsd_mm_per_px * self.focal_mm * self.pixel_cols as f64 / self.sensor_width_mm / 1000.0
    }

    /// Image footprint (width, height) in meters at a standoff distance.
    pub fn footprint_m(&self, standoff_m: f64) -> (f64, f64) {
        (
            standoff_m * self.sensor_width_mm / self.focal_mm,
            standoff_m * self.sensor_height_mm / self.focal_mm,
        )
    }
}

/// Per-axis direction weights of the A* step cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AStarWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for AStarWeights {
    fn default() -> Self {
        Self { a1: 1.0, a2: 1.0, a3: 1.0 }
    }
}

impl AStarWeights {
    pub fn valid(&self) -> bool {
        let ws = [self.a1, self.a2, self.a3];
        ws.iter().all(|w| *w >= 0.0 && w.is_finite()) && ws.iter().any(|w| *w > 0.0)
    }
}

/// Camera pose for one exposure: position, yaw facing the surface, and the
/// in-plane coordinates it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingPose {
    pub position: Point3<f64>,
    pub yaw: f64,
    pub uv: [f64; 2],
}

/// Lays shooting poses on a boustrophedon grid over the patch so that the
/// union of image footprints covers the boundary polygon. Poses stand off
/// the surface along the patch normal at the distance where the requested
/// ground sample distance is reached, facing the surface.
pub fn generate_shooting_points(
    patch: &SurfacePatch,
    cam: &CameraModel,
    gsd_max_mm_per_px: f64,
    overlap: f64,
) -> Result<Vec<ShootingPose>, MissionError> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(MissionError::InvalidParameter(format!("overlap {overlap} not in [0, 1)")));
    }
    if gsd_max_mm_per_px <= 0.0 {
        return Err(MissionError::InvalidParameter("gsd_max must be positive".into()));
    }
    if !cam.valid() {
        return Err(MissionError::InvalidParameter("camera parameters must be positive".into()));
    }
    if crate::pointcloud::polygon_area(&patch.boundary).abs() < 1e-12 {
        return Err(MissionError::DegenerateGeometry("patch has zero area".into()));
    }

    let standoff = cam.standoff_m(gsd_max_mm_per_px);
    let (fw, fh) = cam.footprint_m(standoff);
    let ([lo_u, lo_v], [hi_u, hi_v]) = patch.extent();

    let axis_count = |span: f64, footprint: f64, step: f64| -> usize {
        if span <= footprint {
            1
        } else {
            ((span - footprint) / step).ceil() as usize + 1
        }
    };
    let step_u = fw * (1.0 - overlap);
    let step_v = fh * (1.0 - overlap);
    let n_u = axis_count(hi_u - lo_u, fw, step_u);
    let n_v = axis_count(hi_v - lo_v, fh, step_v);

    // Center the pose lattice on the patch bounding box.
    let start_u = (lo_u + hi_u) / 2.0 - (n_u - 1) as f64 * step_u / 2.0;
    let start_v = (lo_v + hi_v) / 2.0 - (n_v - 1) as f64 * step_v / 2.0;

    let view = -patch.frame.normal_vec();
    let yaw = view.y.atan2(view.x);

    let mut poses = Vec::with_capacity(n_u * n_v);
    for row in 0..n_v {
        let v = start_v + row as f64 * step_v;
        // Serpentine sweep: rows run along the first frame axis.
        let cols: Vec<usize> =
            if row % 2 == 0 { (0..n_u).collect() } else { (0..n_u).rev().collect() };
        for col in cols {
            let u = start_u + col as f64 * step_u;
            poses.push(ShootingPose { position: patch.point_at(u, v, standoff), yaw, uv: [u, v] });
        }
    }
    Ok(poses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaypointKind {
    Shooting,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub kind: WaypointKind,
}

impl Waypoint {
    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z)
    }
}

/// Ordered flight plan: shooting waypoints joined by intermediate waypoints
/// along collision-free voxel paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightPath {
    pub waypoints: Vec<Waypoint>,
    pub total_cost: f64,
}

/// Everything the planner needs besides the geometry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MissionParams {
    pub camera: CameraModel,
    pub gsd_max_mm_per_px: f64,
    pub overlap: f64,
    pub weights: AStarWeights,
    pub grid: GridParams,
}

impl Default for MissionParams {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            gsd_max_mm_per_px: 0.5,
            overlap: 0.3,
            weights: AStarWeights::default(),
            grid: GridParams::default(),
        }
    }
}

/// Plans the full mission: shooting poses per patch in boustrophedon order,
/// consecutive poses connected by A* through the inflated occupancy grid,
/// interior path voxels emitted as intermediate waypoints.
pub fn plan_mission(
    patches: &[SurfacePatch],
    obstacle_points: &[Point3<f64>],
    params: &MissionParams,
) -> Result<FlightPath, MissionError> {
    if patches.is_empty() {
        return Err(MissionError::InvalidParameter("at least one patch required".into()));
    }

    let mut poses = Vec::new();
    for patch in patches {
        poses.extend(generate_shooting_points(
            patch,
            &params.camera,
            params.gsd_max_mm_per_px,
            params.overlap,
        )?);
    }

    // Auto-derived bounds must enclose the poses and the surfaces as well
    // as the obstacles, with room to route around them.
    let pose_positions: Vec<Point3<f64>> = poses.iter().map(|p| p.position).collect();
    let corner_points: Vec<Point3<f64>> = patches
        .iter()
        .flat_map(|p| p.boundary.iter().map(|&[u, v]| p.point_at(u, v, 0.0)))
        .collect();
    let (bmin, bmax) = params.grid.resolve_bounds(
        obstacle_points.iter().chain(pose_positions.iter()).chain(corner_points.iter()),
        1.0,
    )?;
    let grid_params = GridParams {
        min: Some(bmin),
        max: Some(bmax),
        resolution: params.grid.resolution,
        inflation: params.grid.inflation,
    };
    let grid = build_voxel_grid(obstacle_points, &grid_params)?;

    let pose_voxel = |i: usize, pose: &ShootingPose| -> Result<[i64; 3], MissionError> {
        grid.voxel_of(&pose.position).ok_or_else(|| {
            MissionError::Unreachable(format!(
                "shooting pose {i} at {:?} lies outside the planning volume",
                (pose.position.x, pose.position.y, pose.position.z)
            ))
        })
    };

    let mut waypoints = Vec::new();
    let mut total_cost = 0.0;
    let first = &poses[0];
    let first_voxel = pose_voxel(0, first)?;
    if grid.occupied(first_voxel) {
        return Err(MissionError::Unreachable("shooting pose 0 voxel is occupied".into()));
    }
    waypoints.push(Waypoint {
        x: first.position.x,
        y: first.position.y,
        z: first.position.z,
        yaw: first.yaw,
        kind: WaypointKind::Shooting,
    });

    let mut prev_voxel = first_voxel;
    for (i, pose) in poses.iter().enumerate().skip(1) {
        let voxel = pose_voxel(i, pose)?;
        let segment = astar(&grid, prev_voxel, voxel, &params.weights).map_err(|e| {
            MissionError::Unreachable(format!("shooting pose {i}: {e}"))
        })?;
        total_cost += segment.cost;
        if segment.voxels.len() > 2 {
            for v in &segment.voxels[1..segment.voxels.len() - 1] {
                let c = grid.center(*v);
                waypoints.push(Waypoint {
                    x: c.x,
                    y: c.y,
                    z: c.z,
                    yaw: pose.yaw,
                    kind: WaypointKind::Intermediate,
                });
            }
        }
        waypoints.push(Waypoint {
            x: pose.position.x,
            y: pose.position.y,
            z: pose.position.z,
            yaw: pose.yaw,
            kind: WaypointKind::Shooting,
        });
        prev_voxel = voxel;
    }

    Ok(FlightPath { waypoints, total_cost })
}

/// Writes waypoints as a JSON array of `{x, y, z, yaw, kind}` objects.
pub fn export_waypoints(path: &FlightPath, file: impl AsRef<Path>) -> Result<(), MissionError> {
    let json = serde_json::to_string_pretty(&path.waypoints)?;
    std::fs::write(file, json)?;
    Ok(())
}

/// Reads a waypoint array written by [`export_waypoints`].
pub fn import_waypoints(file: impl AsRef<Path>) -> Result<Vec<Waypoint>, MissionError> {
    let json = std::fs::read_to_string(file)?;
    Ok(serde_json::from_str(&json)?)
}

/// Applies a per-waypoint Gaussian position perturbation, clipped per axis,
/// to emulate GPS error in robustness experiments.
pub fn perturb_waypoints(path: &FlightPath, sigma: f64, clip: f64, seed: u64) -> FlightPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let waypoints = path
        .waypoints
        .iter()
        .map(|w| {
            let mut jitter = || normal.sample(&mut rng).clamp(-clip, clip);
            Waypoint { x: w.x + jitter(), y: w.y + jitter(), z: w.z + jitter(), ..w.clone() }
        })
        .collect();
    FlightPath { waypoints, total_cost: path.total_cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{PlaneModel, PointCloud, SurfacePatch};

    /// Rectangular wall patch in the y = 0 plane, normal +y, `w` along x
    /// and `h` along z, lower-left corner at the origin.
    fn wall_patch(w: f64, h: f64) -> SurfacePatch {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(w, 0.0, 0.0),
            Point3::new(0.0, 0.0, h),
            Point3::new(w, 0.0, h),
        ];
        let cloud = PointCloud::new(pts).with_origin(Point3::new(w / 2.0, 5.0, h / 2.0));
        let model = PlaneModel::new([0.0, -1.0, 0.0, 0.0], vec![0, 1, 2, 3]);
        SurfacePatch::from_plane(&cloud, &model).unwrap()
    }

    #[test]
    fn grid_with_no_obstacles_is_free() {
        let params = GridParams::with_bounds([0.0; 3], [2.0; 3], 0.5, 1);
        let grid = build_voxel_grid(&[], &params).unwrap();
        assert_eq!(grid.occupied_count(), 0);
        assert_eq!(grid.dims(), [4, 4, 4]);
    }

    #[test]
    fn single_point_occupancy_and_inflation() {
        let params = GridParams::with_bounds([0.0; 3], [5.0; 3], 1.0, 0);
        let grid = build_voxel_grid(&[Point3::new(2.5, 2.5, 2.5)], &params).unwrap();
        assert_eq!(grid.occupied_count(), 1);
        assert!(grid.occupied([2, 2, 2]));

        let params = GridParams { inflation: 1, ..params };
        let grid = build_voxel_grid(&[Point3::new(2.5, 2.5, 2.5)], &params).unwrap();
        assert_eq!(grid.occupied_count(), 27); // Chebyshev ball, interior case
    }

    #[test]
    fn out_of_bounds_point_rejected() {
        let params = GridParams::with_bounds([0.0; 3], [1.0; 3], 0.5, 0);
        assert!(matches!(
            build_voxel_grid(&[Point3::new(2.0, 0.0, 0.0)], &params),
            Err(MissionError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn single_footprint_patch_gets_one_pose() {
        let cam = CameraModel::default();
        let standoff = cam.standoff_m(0.5);
        let (fw, fh) = cam.footprint_m(standoff);
        let patch = wall_patch(fw * 0.9, fh * 0.9);
        let poses = generate_shooting_points(&patch, &cam, 0.5, 0.0).unwrap();
        assert_eq!(poses.len(), 1);
        // Standoff along the normal (+y side, where the scan origin is).
        assert!((poses[0].position.y - standoff).abs() < 1e-9);
    }

    #[test]
    fn two_footprint_patch_tiles_exactly() {
        let cam = CameraModel::default();
        let standoff = cam.standoff_m(0.5);
        let (fw, fh) = cam.footprint_m(standoff);
        let patch = wall_patch(fw * 2.0, fh * 0.9);
        let poses = generate_shooting_points(&patch, &cam, 0.5, 0.0).unwrap();
        assert_eq!(poses.len(), 2);
    }

    /// Closed-form tiling oracle for the full-size panel wall.
    #[test]
    fn panel_wall_pose_count_matches_tiling_oracle() {
        let cam = CameraModel {
            focal_mm: 34.4,
            sensor_width_mm: 6.17,
            sensor_height_mm: 4.63,
            pixel_cols: 4000,
            pixel_rows: 3000,
        };
        let gsd = 0.5;
        let overlap = 0.3;
        let (wall_w, wall_h) = (1.8, 2.7); // 3x3 panels of 0.6 x 0.9 m
        let patch = wall_patch(wall_w, wall_h);
        let poses = generate_shooting_points(&patch, &cam, gsd, overlap).unwrap();

        let d = gsd * cam.focal_mm * cam.pixel_cols as f64 / cam.sensor_width_mm / 1000.0;
        let fw = d * cam.sensor_width_mm / cam.focal_mm;
        let fh = d * cam.sensor_height_mm / cam.focal_mm;
        let count = |span: f64, fp: f64| -> usize {
            if span <= fp {
                1
            } else {
                ((span - fp) / (fp * (1.0 - overlap))).ceil() as usize + 1
            }
        };
        let expected = count(wall_w, fw) * count(wall_h, fh);
        assert_eq!(poses.len(), expected);
        assert_eq!(poses.len(), 3);
    }

    #[test]
    fn footprints_cover_the_patch_boundary() {
        let cam = CameraModel::default();
        let patch = wall_patch(3.1, 4.4);
        let overlap = 0.25;
        let gsd = 0.5;
        let poses = generate_shooting_points(&patch, &cam, gsd, overlap).unwrap();
        let standoff = cam.standoff_m(gsd);
        let (fw, fh) = cam.footprint_m(standoff);

        // Rasterized coverage check at 1 cm sampling over the bounding box,
        // restricted to the polygon.
        let ([lo_u, lo_v], [hi_u, hi_v]) = patch.extent();
        let mut u = lo_u;
        while u <= hi_u {
            let mut v = lo_v;
            while v <= hi_v {
                if patch.contains([u, v], 1e-9) {
                    let covered = poses.iter().any(|p| {
                        (u - p.uv[0]).abs() <= fw / 2.0 + 1e-9
                            && (v - p.uv[1]).abs() <= fh / 2.0 + 1e-9
                    });
                    assert!(covered, "uncovered sample ({u}, {v})");
                }
                v += 0.01;
            }
            u += 0.01;
        }
    }

    #[test]
    fn poses_are_in_boustrophedon_order() {
        let cam = CameraModel::default();
        let patch = wall_patch(5.0, 4.0);
        let poses = generate_shooting_points(&patch, &cam, 0.5, 0.2).unwrap();
        assert!(poses.len() > 2);
        // v must be non-decreasing, u alternating in direction per row.
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut last_v = f64::NEG_INFINITY;
        for p in &poses {
            if p.uv[1] > last_v + 1e-9 {
                rows.push(vec![p.uv[0]]);
                last_v = p.uv[1];
            } else {
                assert!((p.uv[1] - last_v).abs() < 1e-9, "v went backwards");
                rows.last_mut().unwrap().push(p.uv[0]);
            }
        }
        for (r, row) in rows.iter().enumerate() {
            let ascending = row.windows(2).all(|w| w[1] > w[0]);
            let descending = row.windows(2).all(|w| w[1] < w[0]);
            if r % 2 == 0 {
                assert!(ascending, "row {r} not ascending: {row:?}");
            } else {
                assert!(descending, "row {r} not descending: {row:?}");
            }
        }
    }

    #[test]
    fn mission_single_pose_is_one_waypoint() {
        let cam = CameraModel::default();
        let standoff = cam.standoff_m(0.5);
        let (fw, fh) = cam.footprint_m(standoff);
        let patch = wall_patch(fw * 0.5, fh * 0.5);
        let params = MissionParams {
            grid: GridParams::with_bounds([-5.0; 3], [15.0; 3], 0.5, 1),
            ..Default::default()
        };
        let path = plan_mission(&[patch], &[], &params).unwrap();
        assert_eq!(path.waypoints.len(), 1);
        assert_eq!(path.waypoints[0].kind, WaypointKind::Shooting);
        assert_eq!(path.total_cost, 0.0);
    }

    #[test]
    fn mission_connects_poses_with_free_corridor() {
        let patch = wall_patch(4.2, 1.0);
        let params = MissionParams {
            grid: GridParams::with_bounds([-5.0; 3], [15.0; 3], 0.5, 1),
            ..Default::default()
        };
        let path = plan_mission(&[patch], &[], &params).unwrap();
        let shooting: Vec<&Waypoint> =
            path.waypoints.iter().filter(|w| w.kind == WaypointKind::Shooting).collect();
        assert!(shooting.len() >= 2);

        // Consecutive waypoints occupy identical or 26-adjacent free voxels.
        let grid = build_voxel_grid(&[], &params.grid).unwrap();
        for pair in path.waypoints.windows(2) {
            let a = grid.voxel_of(&pair[0].position()).unwrap();
            let b = grid.voxel_of(&pair[1].position()).unwrap();
            let d = (0..3).map(|k| (a[k] - b[k]).abs()).max().unwrap();
            assert!(d <= 1, "waypoints not adjacent: {a:?} -> {b:?}");
        }
    }

    #[test]
    fn mission_avoids_obstacles_between_poses() {
        let patch = wall_patch(3.0, 1.0);
        let params = MissionParams {
            grid: GridParams::with_bounds([-5.0; 3], [15.0; 3], 0.25, 1),
            ..Default::default()
        };
        // A pillar of obstacle points between the two shooting poses.
        let poses = generate_shooting_points(
            &patch,
            &params.camera,
            params.gsd_max_mm_per_px,
            params.overlap,
        )
        .unwrap();
        assert_eq!(poses.len(), 2);
        let mid = Point3::from((poses[0].position.coords + poses[1].position.coords) / 2.0);
        let pillar: Vec<Point3<f64>> = (0..95)
            .map(|i| Point3::new(mid.x, mid.y, -4.8 + i as f64 * 0.2))
            .filter(|p| p.z < 15.0)
            .collect();

        let path = plan_mission(&[patch], &pillar, &params).unwrap();
        let grid = build_voxel_grid(&pillar, &params.grid).unwrap();
        for w in &path.waypoints {
            let v = grid.voxel_of(&w.position()).unwrap();
            assert!(!grid.occupied(v), "waypoint in occupied voxel {v:?}");
        }
        assert!(path.total_cost > 0.0);
    }

    #[test]
    fn unreachable_pose_is_reported() {
        let patch = wall_patch(3.0, 1.0);
        let params = MissionParams {
            grid: GridParams::with_bounds([-5.0; 3], [15.0; 3], 0.5, 1),
            ..Default::default()
        };
        // An obstacle point on the second pose makes its voxel occupied.
        let poses = generate_shooting_points(
            &patch,
            &params.camera,
            params.gsd_max_mm_per_px,
            params.overlap,
        )
        .unwrap();
        let err = plan_mission(&[patch], &[poses[1].position], &params).unwrap_err();
        match err {
            MissionError::Unreachable(msg) => assert!(msg.contains("pose 1"), "{msg}"),
            other => panic!("expected Unreachable, got {other}"),
        }
    }

    #[test]
    fn waypoint_json_roundtrip() {
        let path = FlightPath {
            waypoints: (0..50)
                .map(|i| Waypoint {
                    x: i as f64 * 0.31,
                    y: (i as f64).sin(),
                    z: 2.0 + i as f64 / 7.0,
                    yaw: (i as f64) * 0.1 - 1.5,
                    kind: if i % 5 == 0 { WaypointKind::Shooting } else { WaypointKind::Intermediate },
                })
                .collect(),
            total_cost: 123.456,
        };
        let file = std::env::temp_dir().join("crackscan_waypoints.json");
        export_waypoints(&path, &file).unwrap();
        let back = import_waypoints(&file).unwrap();
        assert_eq!(path.waypoints, back);

        let empty = FlightPath { waypoints: vec![], total_cost: 0.0 };
        export_waypoints(&empty, &file).unwrap();
        assert_eq!(std::fs::read_to_string(&file).unwrap().trim(), "[]");
        assert!(import_waypoints(&file).unwrap().is_empty());
    }

    #[test]
    fn single_waypoint_export_has_all_keys() {
        let path = FlightPath {
            waypoints: vec![Waypoint { x: 1.0, y: 2.0, z: 3.0, yaw: 0.5, kind: WaypointKind::Shooting }],
            total_cost: 0.0,
        };
        let file = std::env::temp_dir().join("crackscan_wp_one.json");
        export_waypoints(&path, &file).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
        let obj = &value.as_array().unwrap()[0];
        for key in ["x", "y", "z", "yaw", "kind"] {
            assert!(obj.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(obj["kind"], "shooting");
    }

    #[test]
    fn perturbation_is_clipped_and_seeded() {
        let path = FlightPath {
            waypoints: (0..200)
                .map(|i| Waypoint {
                    x: i as f64,
                    y: 0.0,
                    z: 0.0,
                    yaw: 0.0,
                    kind: WaypointKind::Intermediate,
                })
                .collect(),
            total_cost: 0.0,
        };
        let a = perturb_waypoints(&path, 0.5, 1.5, 9);
        let b = perturb_waypoints(&path, 0.5, 1.5, 9);
        assert_eq!(a, b);
        for (orig, moved) in path.waypoints.iter().zip(&a.waypoints) {
            assert!((orig.x - moved.x).abs() <= 1.5 + 1e-12);
            assert!((orig.y - moved.y).abs() <= 1.5 + 1e-12);
            assert!((orig.z - moved.z).abs() <= 1.5 + 1e-12);
        }
        let moved_any = path.waypoints.iter().zip(&a.waypoints).any(|(o, m)| o.x != m.x);
        assert!(moved_any);
    }
}
