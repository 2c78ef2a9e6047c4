//! Point-cloud registration, filtering, planar-surface extraction, boundary
//! computation, and obstacle clustering.

mod hull;
mod icp;
mod ransac;
mod spatial;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hull::{convex_hull_2d, cross2, polygon_area, polygon_contains};
pub use icp::{fit_rigid, icp_register, IcpResult};
pub use ransac::ransac_plane;
pub use spatial::SpatialHash;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("point cloud is missing its scan origin")]
    MissingOrigin,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("too few points: have {have}, need {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A set of 3D points in meters, optionally tagged with the scanner position
/// it was recorded from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    scan_origin: Option<Point3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self { points, scan_origin: None }
    }

    pub fn with_origin(mut self, origin: Point3<f64>) -> Self {
        self.scan_origin = Some(origin);
        self
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn scan_origin(&self) -> Option<Point3<f64>> {
        self.scan_origin
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.points.first()?;
        let mut min = first;
        let mut max = first;
        for p in &self.points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Some((min, max))
    }
}

/// Rigid body transform: `p -> R p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        let points = cloud.points.iter().map(|p| self.apply(p)).collect();
        PointCloud { points, scan_origin: cloud.scan_origin.map(|o| self.apply(&o)) }
    }

    /// Checks R^T R = I and det R = +1 within `tol`.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        (gram - Matrix3::identity()).norm() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

/// Plane `a x + b y + c z + d = 0` with unit normal `(a, b, c)`, plus the
/// indices of the source points that support it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub coefficients: [f64; 4],
    pub inlier_indices: Vec<usize>,
}

impl PlaneModel {
    pub fn new(coefficients: [f64; 4], inlier_indices: Vec<usize>) -> Self {
        Self { coefficients, inlier_indices }
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.coefficients[0], self.coefficients[1], self.coefficients[2])
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal().dot(&p.coords) + self.coefficients[3]
    }

    #[inline]
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }

    fn flipped(&self) -> Self {
        let [a, b, c, d] = self.coefficients;
        Self { coefficients: [-a, -b, -c, -d], inlier_indices: self.inlier_indices.clone() }
    }
}

/// Orthonormal in-plane coordinate frame of a surface patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFrame {
    pub origin: [f64; 3],
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    pub normal: [f64; 3],
}

impl PatchFrame {
    pub fn origin_point(&self) -> Point3<f64> {
        Point3::new(self.origin[0], self.origin[1], self.origin[2])
    }

    pub fn axis_u_vec(&self) -> Vector3<f64> {
        Vector3::from(self.axis_u)
    }

    pub fn axis_v_vec(&self) -> Vector3<f64> {
        Vector3::from(self.axis_v)
    }

    pub fn normal_vec(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }
}

/// A planar surface extracted from a point cloud: the plane model, an
/// in-plane frame, and the convex boundary polygon in frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePatch {
    pub plane: PlaneModel,
    pub frame: PatchFrame,
    pub boundary: Vec<[f64; 2]>,
}

impl SurfacePatch {
    /// Builds frame and boundary for a fitted plane. The normal is flipped
    /// toward the cloud's scan origin when one is present, so patches face
    /// the side they were observed from.
    pub fn from_plane(cloud: &PointCloud, plane: &PlaneModel) -> Result<Self, GeometryError> {
        if plane.inlier_indices.len() < 3 {
            return Err(GeometryError::TooFewPoints { have: plane.inlier_indices.len(), need: 3 });
        }
        let centroid: Vector3<f64> = plane
            .inlier_indices
            .iter()
            .map(|&i| cloud.points[i].coords)
            .sum::<Vector3<f64>>()
            / plane.inlier_indices.len() as f64;

        let mut plane = plane.clone();
        if let Some(origin) = cloud.scan_origin {
            if plane.normal().dot(&(origin.coords - centroid)) < 0.0 {
                plane = plane.flipped();
            }
        }
        let normal = plane.normal();

        // Project the centroid onto the plane to anchor the frame.
        let origin = centroid - plane.signed_distance(&Point3::from(centroid)) * normal;

        // First axis: global x projected into the plane; fall back to global
        // y when the plane is nearly perpendicular to x.
        let reference = if normal.x.abs() > 0.9 { Vector3::y() } else { Vector3::x() };
        let axis_u = (reference - normal.dot(&reference) * normal).normalize();
        let axis_v = normal.cross(&axis_u);

        let frame = PatchFrame {
            origin: [origin.x, origin.y, origin.z],
            axis_u: [axis_u.x, axis_u.y, axis_u.z],
            axis_v: [axis_v.x, axis_v.y, axis_v.z],
            normal: [normal.x, normal.y, normal.z],
        };

        let projected: Vec<[f64; 2]> = plane
            .inlier_indices
            .iter()
            .map(|&i| project_to_frame(&frame, &cloud.points[i]))
            .collect();
        let boundary = convex_hull_2d(&projected)?;

        Ok(Self { plane, frame, boundary })
    }

    /// In-plane (u, v) coordinates of a 3D point.
    pub fn project(&self, p: &Point3<f64>) -> [f64; 2] {
        project_to_frame(&self.frame, p)
    }

    /// 3D position of in-plane coordinates, offset along the normal.
    pub fn point_at(&self, u: f64, v: f64, standoff: f64) -> Point3<f64> {
        self.frame.origin_point()
            + self.frame.axis_u_vec() * u
            + self.frame.axis_v_vec() * v
            + self.frame.normal_vec() * standoff
    }

    pub fn contains(&self, uv: [f64; 2], tol: f64) -> bool {
        polygon_contains(&self.boundary, uv, tol)
    }

    /// Bounding box of the boundary polygon in frame coordinates.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.boundary {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }
}

fn project_to_frame(frame: &PatchFrame, p: &Point3<f64>) -> [f64; 2] {
    let rel = p - frame.origin_point();
    [rel.dot(&frame.axis_u_vec()), rel.dot(&frame.axis_v_vec())]
}

/// Disjoint single-linkage clusters of point indices under the relation
/// "distance <= epsilon".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub epsilon: f64,
    pub clusters: Vec<Vec<usize>>,
}

/// Reads an ASCII XYZ file: one `x y z` triple per line, `#` comments and
/// blank lines skipped.
pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud, GeometryError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut points = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(GeometryError::ParseError {
                line: lineno + 1,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let mut coords = [0.0f64; 3];
        for (k, field) in fields.iter().enumerate() {
            coords[k] = field.parse::<f64>().map_err(|e| GeometryError::ParseError {
                line: lineno + 1,
                message: format!("bad number {field:?}: {e}"),
            })?;
            if !coords[k].is_finite() {
                return Err(GeometryError::ParseError {
                    line: lineno + 1,
                    message: format!("non-finite coordinate {field:?}"),
                });
            }
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    Ok(PointCloud::new(points))
}

pub fn save_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in cloud.points() {
        writeln!(file, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// Finds overlapping points of two scans in scanner-relative coordinates:
/// all pairs `(i, j)` with `|| (x_i - a) - (x_j - b) || < tau`, each `i`
/// matched to its nearest qualifying `j` (ties to the smallest `j`).
pub fn find_overlap(
    pa: &PointCloud,
    pb: &PointCloud,
    tau: f64,
) -> Result<Vec<(usize, usize)>, GeometryError> {
    let a = pa.scan_origin.ok_or(GeometryError::MissingOrigin)?;
    let b = pb.scan_origin.ok_or(GeometryError::MissingOrigin)?;
    if tau <= 0.0 {
        return Err(GeometryError::InvalidParameter("tau must be positive".into()));
    }
    let rel_b: Vec<Point3<f64>> = pb.points.iter().map(|p| Point3::from(p - b.coords)).collect();
    let hash = SpatialHash::new(&rel_b, tau);
    let mut pairs = Vec::new();
    for (i, p) in pa.points.iter().enumerate() {
        let rel_a = Point3::from(p - a.coords);
        // within_radius sorts by (distance, index), so the first strict hit
        // is the wanted match.
        if let Some(&(j, _)) =
            hash.within_radius(&rel_a, tau).iter().find(|(_, d)| *d < tau)
        {
            pairs.push((i, j));
        }
    }
    Ok(pairs)
}

/// Removes sparse outliers: points whose mean distance to their `k` nearest
/// neighbors exceeds `mean + alpha * stddev` of that statistic's population.
pub fn remove_outliers(
    cloud: &PointCloud,
    k: usize,
    alpha: f64,
) -> Result<PointCloud, GeometryError> {
    if k == 0 {
        return Err(GeometryError::InvalidParameter("k must be >= 1".into()));
    }
    if cloud.len() <= k {
        return Err(GeometryError::TooFewPoints { have: cloud.len(), need: k + 1 });
    }
    let hash = SpatialHash::new(&cloud.points, SpatialHash::auto_cell(&cloud.points));
    let means: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = hash.knn(p, k, Some(i));
            nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len() as f64
        })
        .collect();
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / means.len() as f64;
    let cutoff = mu + alpha * var.sqrt();

    let points: Vec<Point3<f64>> = cloud
        .points
        .iter()
        .zip(&means)
        .filter(|(_, m)| **m <= cutoff)
        .map(|(p, _)| *p)
        .collect();
    Ok(PointCloud { points, scan_origin: cloud.scan_origin })
}

/// Downsamples to one point per occupied voxel, each the centroid of its
/// members. Output is ordered by voxel key, so it is deterministic.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud, GeometryError> {
    if leaf <= 0.0 || !leaf.is_finite() {
        return Err(GeometryError::InvalidParameter(format!("leaf size {leaf} must be positive")));
    }
    let mut cells: BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let key = (
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        );
        let entry = cells.entry(key).or_insert((Vector3::zeros(), 0));
        entry.0 += p.coords;
        entry.1 += 1;
    }
    let points = cells.values().map(|(sum, n)| Point3::from(sum / *n as f64)).collect();
    Ok(PointCloud { points, scan_origin: cloud.scan_origin })
}

/// Single-linkage clustering: connected components of the graph whose edges
/// join points at distance <= epsilon.
pub fn euclidean_cluster(cloud: &PointCloud, epsilon: f64) -> Result<ClusterSet, GeometryError> {
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(GeometryError::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let n = cloud.len();
    let mut dsu = Dsu::new(n);
    if n > 0 {
        let hash = SpatialHash::new(&cloud.points, epsilon);
        for (i, p) in cloud.points.iter().enumerate() {
            for (j, _) in hash.within_radius(p, epsilon) {
                dsu.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(dsu.find(i)).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|c| c[0]);
    Ok(ClusterSet { epsilon, clusters })
}

pub(crate) struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Parameters for iterative plane extraction.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceExtraction {
    pub min_inliers: usize,
    pub max_planes: usize,
    pub dist_tol: f64,
    pub ransac_iters: usize,
    pub seed: u64,
}

impl Default for SurfaceExtraction {
    fn default() -> Self {
        Self { min_inliers: 200, max_planes: 4, dist_tol: 0.02, ransac_iters: 500, seed: 0 }
    }
}

/// Repeatedly fits planes with RANSAC and removes their inliers until the
/// support falls under `min_inliers` or `max_planes` is reached. Returns the
/// extracted patches (inlier indices refer to the input cloud) plus the
/// residual cloud of unexplained points, which the mission planner clusters
/// into obstacles.
pub fn extract_surfaces(
    cloud: &PointCloud,
    params: &SurfaceExtraction,
) -> Result<(Vec<SurfacePatch>, PointCloud), GeometryError> {
    let mut remaining: Vec<usize> = (0..cloud.len()).collect();
    let mut patches = Vec::new();

    for round in 0..params.max_planes {
        if remaining.len() < params.min_inliers.max(3) {
            break;
        }
        let sub = PointCloud {
            points: remaining.iter().map(|&i| cloud.points[i]).collect(),
            scan_origin: cloud.scan_origin,
        };
        let model = ransac_plane(
            &sub,
            params.ransac_iters,
            params.dist_tol,
            params.seed.wrapping_add(round as u64),
        )?;
        if model.inlier_indices.len() < params.min_inliers {
            break;
        }
        // Map sub-cloud indices back to the input cloud.
        let global = PlaneModel::new(
            model.coefficients,
            model.inlier_indices.iter().map(|&i| remaining[i]).collect(),
        );
        patches.push(SurfacePatch::from_plane(cloud, &global)?);

        let taken: std::collections::HashSet<usize> = model.inlier_indices.iter().copied().collect();
        remaining = remaining
            .iter()
            .enumerate()
            .filter(|(sub_idx, _)| !taken.contains(sub_idx))
            .map(|(_, &orig)| orig)
            .collect();
    }

    let residual = PointCloud {
        points: remaining.iter().map(|&i| cloud.points[i]).collect(),
        scan_origin: cloud.scan_origin,
    };
    Ok((patches, residual))
}
