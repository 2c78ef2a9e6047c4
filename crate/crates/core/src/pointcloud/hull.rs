//! 2D convex hull (Andrew monotone chain).

use super::GeometryError;

/// Cross product of (b - a) x (c - a); positive when the turn is
/// counter-clockwise.
#[inline]
pub fn cross2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

const COLLINEAR_EPS: f64 = 1e-12;

/// Counter-clockwise convex hull of a planar point set. Collinear points on
/// hull edges are dropped, so no three retained vertices are collinear.
///
/// Fails with [`GeometryError::DegenerateGeometry`] if fewer than 3 distinct
/// points remain or all points are collinear.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, GeometryError> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "convex hull needs >= 3 distinct points, got {}",
            pts.len()
        )));
    }

    let build = |iter: &mut dyn Iterator<Item = &[f64; 2]>| -> Vec<[f64; 2]> {
        let mut chain: Vec<[f64; 2]> = Vec::new();
        for &p in iter {
            while chain.len() >= 2
                && cross2(chain[chain.len() - 2], chain[chain.len() - 1], p) <= COLLINEAR_EPS
            {
                chain.pop();
            }
            chain.push(p);
        }
        chain
    };

    let lower = build(&mut pts.iter());
    let upper = build(&mut pts.iter().rev());

    let mut hull = lower;
    hull.pop();
    hull.extend(upper);
    hull.pop();

    if hull.len() < 3 {
        return Err(GeometryError::DegenerateGeometry("all points collinear".into()));
    }
    Ok(hull)
}

/// True when `(x, y)` lies inside or on the CCW polygon within `tol`.
pub fn polygon_contains(polygon: &[[f64; 2]], point: [f64; 2], tol: f64) -> bool {
    if polygon.len() < 3 {
        return false;
    }
    for i in 0..polygon.len() {
        let a = polygon[i];
        let b = polygon[(i + 1) % polygon.len()];
        if cross2(a, b, point) < -tol {
            return false;
        }
    }
    true
}

/// Signed area of a polygon; positive for counter-clockwise orientation.
pub fn polygon_area(polygon: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for i in 0..polygon.len() {
        let a = polygon[i];
        let b = polygon[(i + 1) % polygon.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}
