//! Point-to-point iterative closest point registration.

use nalgebra::{Matrix3, Point3, Vector3};

use super::spatial::SpatialHash;
use super::{GeometryError, PointCloud, RigidTransform};

/// Outcome of an ICP run. `rms_history` holds the post-fit residual of each
/// iteration; it is non-increasing by construction of the algorithm.
#[derive(Debug, Clone)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub rms: f64,
    pub rms_history: Vec<f64>,
    pub iterations: usize,
}

/// Aligns `source` onto `target` by alternating nearest-neighbor
/// correspondence search with a closed-form rigid fit (cross-covariance SVD,
/// reflection-corrected). Stops when the RMS improvement drops below `tol`
/// or after `max_iter` iterations. Clouds must be roughly pre-aligned for
/// the first correspondence set to be meaningful.
pub fn icp_register(
    source: &PointCloud,
    target: &PointCloud,
    max_iter: usize,
    tol: f64,
) -> Result<IcpResult, GeometryError> {
    if source.is_empty() || target.is_empty() {
        return Err(GeometryError::TooFewPoints { have: source.len().min(target.len()), need: 1 });
    }
    let hash = SpatialHash::new(target.points(), SpatialHash::auto_cell(target.points()));

    let mut transform = RigidTransform::identity();
    let mut rms_history = Vec::new();
    let mut prev_rms = f64::INFINITY;

    for _ in 0..max_iter {
        // Correspondences under the current transform.
        let pairs: Vec<(Point3<f64>, Point3<f64>)> = source
            .points()
            .iter()
            .map(|p| {
                let moved = transform.apply(p);
                let (j, _) = hash.nearest(&moved, None).expect("target is non-empty");
                (*p, target.points()[j])
            })
            .collect();

        transform = fit_rigid(&pairs)?;

        let rms = (pairs
            .iter()
            .map(|(p, q)| (transform.apply(p) - q).norm_squared())
            .sum::<f64>()
            / pairs.len() as f64)
            .sqrt();
        rms_history.push(rms);

        if prev_rms - rms < tol {
            break;
        }
        prev_rms = rms;
    }

    let rms = *rms_history.last().expect("at least one iteration");
    Ok(IcpResult { transform, rms, iterations: rms_history.len(), rms_history })
}

/// Least-squares rigid transform mapping the first element of each pair onto
/// the second (Kabsch / Umeyama without scale).
pub fn fit_rigid(pairs: &[(Point3<f64>, Point3<f64>)]) -> Result<RigidTransform, GeometryError> {
    if pairs.is_empty() {
        return Err(GeometryError::TooFewPoints { have: 0, need: 1 });
    }
    let n = pairs.len() as f64;
    let centroid_p: Vector3<f64> = pairs.iter().map(|(p, _)| p.coords).sum::<Vector3<f64>>() / n;
    let centroid_q: Vector3<f64> = pairs.iter().map(|(_, q)| q.coords).sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::<f64>::zeros();
    for (p, q) in pairs {
        cov += (q.coords - centroid_q) * (p.coords - centroid_p).transpose();
    }

    let svd = cov.svd(true, true);
    let sv = svd.singular_values;
    // Rank < 2 leaves the rotation underdetermined.
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return Err(GeometryError::DegenerateGeometry(
            "correspondence covariance has rank < 2".into(),
        ));
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");

    let mut rotation = u * v_t;
    if rotation.determinant() < 0.0 {
        // Flip the least-significant singular direction to stay in SO(3).
        let mut u_fixed = u;
        u_fixed.set_column(2, &(-u.column(2)));
        rotation = u_fixed * v_t;
    }
    let translation = centroid_q - rotation * centroid_p;
    Ok(RigidTransform { rotation, translation })
}
