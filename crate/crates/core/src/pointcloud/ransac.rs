//! RANSAC plane fitting with least-squares refinement.

use nalgebra::{Matrix3, Point3, UnitVector3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GeometryError, PlaneModel, PointCloud};

/// Fits a plane by random sample consensus: 3 non-collinear points per
/// iteration, inliers counted within `dist_tol`, and the winning model
/// refined by least squares (smallest eigenvector of the inlier covariance).
/// The returned inlier set is recomputed against the refined plane so the
/// model invariant holds exactly. Deterministic for a fixed seed.
pub fn ransac_plane(
    cloud: &PointCloud,
    iters: usize,
    dist_tol: f64,
    seed: u64,
) -> Result<PlaneModel, GeometryError> {
    let points = cloud.points();
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints { have: points.len(), need: 3 });
    }
    if dist_tol < 0.0 || iters == 0 {
        return Err(GeometryError::InvalidParameter("iters > 0 and dist_tol >= 0 required".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;

    for _ in 0..iters {
        let idx = rand::seq::index::sample(&mut rng, points.len(), 3);
        let (a, b, c) = (points[idx.index(0)], points[idx.index(1)], points[idx.index(2)]);
        let normal = (b - a).cross(&(c - a));
        let span = (b - a).norm().max((c - a).norm());
        if normal.norm() <= 1e-12 * span * span.max(1.0) {
            continue; // collinear sample
        }
        let normal = normal.normalize();
        let d = -normal.dot(&a.coords);
        let inliers = points.iter().filter(|p| (normal.dot(&p.coords) + d).abs() <= dist_tol).count();
        if best.as_ref().map_or(true, |(n, _, _)| inliers > *n) {
            best = Some((inliers, normal, d));
        }
    }

    let (_, normal, d) = best.ok_or_else(|| {
        GeometryError::DegenerateGeometry("every RANSAC sample was collinear".into())
    })?;

    let inlier_indices: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| (normal.dot(&p.coords) + d).abs() <= dist_tol)
        .map(|(i, _)| i)
        .collect();

    let (normal, d) = refine_plane(points, &inlier_indices).unwrap_or((UnitVector3::new_normalize(normal), d));
    // Rebuild the inlier set against the refined model.
    let inlier_indices: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| (normal.dot(&p.coords) + d).abs() <= dist_tol)
        .map(|(i, _)| i)
        .collect();

    Ok(PlaneModel::new(canonical_coefficients(&normal, d), inlier_indices))
}

/// Least-squares plane through the given subset: the normal is the smallest
/// eigenvector of the centered covariance.
fn refine_plane(
    points: &[Point3<f64>],
    indices: &[usize],
) -> Option<(UnitVector3<f64>, f64)> {
    if indices.len() < 3 {
        return None;
    }
    let n = indices.len() as f64;
    let centroid: Vector3<f64> = indices.iter().map(|&i| points[i].coords).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::<f64>::zeros();
    for &i in indices {
        let d = points[i].coords - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut min_idx = 0;
    for k in 1..3 {
        if eig.eigenvalues[k] < eig.eigenvalues[min_idx] {
            min_idx = k;
        }
    }
    let normal: Vector3<f64> = eig.eigenvectors.column(min_idx).into();
    if normal.norm() <= 1e-12 {
        return None;
    }
    let normal = UnitVector3::new_normalize(normal);
    let d = -normal.dot(&centroid);
    Some((normal, d))
}

/// Flips the plane sign so the normal component of largest magnitude is
/// positive, giving a stable representative of the +-M ambiguity.
fn canonical_coefficients(normal: &UnitVector3<f64>, d: f64) -> [f64; 4] {
    let n = normal.into_inner();
    let mut dominant = 0;
    for k in 1..3 {
        if n[k].abs() > n[dominant].abs() {
            dominant = k;
        }
    }
    if n[dominant] < 0.0 {
        [-n.x, -n.y, -n.z, -d]
    } else {
        [n.x, n.y, n.z, d]
    }
}
