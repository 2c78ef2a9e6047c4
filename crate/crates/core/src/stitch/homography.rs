//! Homography estimation: normalized DLT inside a RANSAC loop, scored by
//! symmetric transfer error.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StitchError;

/// 3x3 projective map between two images of a planar scene, normalized so
/// the bottom-right entry is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    /// Row-major coefficients.
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self::from_matrix(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let m = if m[(2, 2)].abs() > 1e-12 { m / m[(2, 2)] } else { m / m.norm() };
        Self { m: [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]] }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }

    /// Maps a point; panics never, returns non-finite coords if the point
    /// lies on the line at infinity.
    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.matrix() * Vector3::new(p[0], p[1], 1.0);
        [v.x / v.z, v.y / v.z]
    }

    pub fn inverse(&self) -> Result<Homography, StitchError> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| StitchError::DegenerateGeometry("homography not invertible".into()))?;
        Ok(Self::from_matrix(inv))
    }

    pub fn compose(&self, other: &Homography) -> Homography {
        Self::from_matrix(self.matrix() * other.matrix())
    }
}

/// Direct linear transform on point pairs with Hartley normalization
/// (translate centroids to the origin, scale mean distance to sqrt(2)).
pub fn fit_homography_dlt(
    src: &[[f64; 2]],
    dst: &[[f64; 2]],
) -> Result<Homography, StitchError> {
    assert_eq!(src.len(), dst.len());
    if src.len() < 4 {
        return Err(StitchError::TooFewMatches { have: src.len(), need: 4 });
    }
    let t_src = normalizing_transform(src)?;
    let t_dst = normalizing_transform(dst)?;
    let norm = |t: &Matrix3<f64>, p: [f64; 2]| -> [f64; 2] {
        let v = t * Vector3::new(p[0], p[1], 1.0);
        [v.x, v.y]
    };

    let n = src.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for i in 0..n {
        let [x, y] = norm(&t_src, src[i]);
        let [u, v] = norm(&t_dst, dst[i]);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(i * 2, c)] = r0[c];
            a[(i * 2 + 1, c)] = r1[c];
        }
    }

    // Null vector of A as the smallest eigenvector of A^T A (the thin SVD
    // of the 2n x 9 system does not expose it).
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let mut min_idx = 0;
    for k in 1..9 {
        if eig.eigenvalues[k] < eig.eigenvalues[min_idx] {
            min_idx = k;
        }
    }
    let h_vec = eig.eigenvectors.column(min_idx);
    let h_norm = Matrix3::new(
        h_vec[0], h_vec[1], h_vec[2], h_vec[3], h_vec[4], h_vec[5], h_vec[6], h_vec[7], h_vec[8],
    );
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| StitchError::DegenerateGeometry("normalization not invertible".into()))?;
    Ok(Homography::from_matrix(t_dst_inv * h_norm * t_src))
}

fn normalizing_transform(pts: &[[f64; 2]]) -> Result<Matrix3<f64>, StitchError> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_dist =
        pts.iter().map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if mean_dist < 1e-12 {
        return Err(StitchError::DegenerateGeometry("all points coincide".into()));
    }
    let s = 2f64.sqrt() / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Sum of forward and inverse reprojection distances.
pub fn symmetric_transfer_error(
    h: &Homography,
    h_inv: &Homography,
    src: [f64; 2],
    dst: [f64; 2],
) -> f64 {
    let fwd = h.apply(src);
    let bwd = h_inv.apply(dst);
    let d_fwd = ((fwd[0] - dst[0]).powi(2) + (fwd[1] - dst[1]).powi(2)).sqrt();
    let d_bwd = ((bwd[0] - src[0]).powi(2) + (bwd[1] - src[1]).powi(2)).sqrt();
    d_fwd + d_bwd
}

fn triple_collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).hypot(b[1] - a[1])) * ((c[0] - a[0]).hypot(c[1] - a[1]));
    cross.abs() <= 1e-9 * scale.max(1.0)
}

fn sample_degenerate(pts: &[[f64; 2]; 4]) -> bool {
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in (j + 1)..4 {
                if triple_collinear(pts[i], pts[j], pts[k]) {
                    return true;
                }
            }
        }
    }
    false
}

/// RANSAC homography from point correspondences: 4-point normalized DLT
/// hypotheses, symmetric-transfer-error inliers, least-squares refit on the
/// best consensus set, and a final inlier re-flag against the refit model.
/// Deterministic for a fixed seed.
pub fn estimate_homography_ransac(
    src: &[[f64; 2]],
    dst: &[[f64; 2]],
    iters: usize,
    inlier_tol: f64,
    seed: u64,
) -> Result<(Homography, Vec<bool>), StitchError> {
    assert_eq!(src.len(), dst.len());
    let n = src.len();
    if n < 4 {
        return Err(StitchError::TooFewMatches { have: n, need: 4 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Homography)> = None;

    for _ in 0..iters {
        let idx = rand::seq::index::sample(&mut rng, n, 4);
        let s = [src[idx.index(0)], src[idx.index(1)], src[idx.index(2)], src[idx.index(3)]];
        let d = [dst[idx.index(0)], dst[idx.index(1)], dst[idx.index(2)], dst[idx.index(3)]];
        if sample_degenerate(&s) || sample_degenerate(&d) {
            continue;
        }
        let Ok(h) = fit_homography_dlt(&s, &d) else { continue };
        let Ok(h_inv) = h.inverse() else { continue };
        let inliers = (0..n)
            .filter(|&i| symmetric_transfer_error(&h, &h_inv, src[i], dst[i]) <= inlier_tol)
            .count();
        if best.as_ref().map_or(true, |(b, _)| inliers > *b) {
            best = Some((inliers, h));
        }
    }

    let (_, hypothesis) = best.ok_or_else(|| {
        StitchError::DegenerateGeometry("all RANSAC samples were degenerate".into())
    })?;

    // Locally optimized refits with a shrinking tolerance: narrow overlaps
    // make the projective fit ill-conditioned, so the final model should
    // rest on the most accurate correspondences only. Each round keeps the
    // model unless too few matches survive the tighter gate.
    let mut model = hypothesis;
    let mut baseline = 0usize;
    for (round, shrink) in [1.0, 0.25, 0.0625].into_iter().enumerate() {
        let tol = (inlier_tol * shrink).max(1e-3);
        let inv = model.inverse()?;
        let consensus: Vec<usize> = (0..n)
            .filter(|&i| symmetric_transfer_error(&model, &inv, src[i], dst[i]) <= tol)
            .collect();
        if round == 0 {
            baseline = consensus.len();
        }
        if consensus.len() < 8.min(baseline).max(4) || consensus.len() * 4 < baseline {
            break;
        }
        let s: Vec<[f64; 2]> = consensus.iter().map(|&i| src[i]).collect();
        let d: Vec<[f64; 2]> = consensus.iter().map(|&i| dst[i]).collect();
        match fit_homography_dlt(&s, &d) {
            Ok(refit) => model = refit,
            Err(_) => break,
        }
    }
    let inv = model.inverse()?;
    let flags: Vec<bool> = (0..n)
        .map(|i| symmetric_transfer_error(&model, &inv, src[i], dst[i]) <= inlier_tol)
        .collect();
    Ok((model, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn max_abs_diff(a: &Homography, b: &Homography) -> f64 {
        let mut worst = 0f64;
        for r in 0..3 {
            for c in 0..3 {
                worst = worst.max((a.m[r][c] - b.m[r][c]).abs());
            }
        }
        worst
    }

    fn known_h() -> Homography {
        Homography::from_matrix(Matrix3::new(
            0.95, 0.08, 12.0, -0.05, 1.02, -7.0, 1.0e-4, -5.0e-5, 1.0,
        ))
    }

    #[test]
    fn four_exact_points_recover_h() {
        let h = known_h();
        let src = [[10.0, 20.0], [180.0, 15.0], [25.0, 160.0], [170.0, 170.0]];
        let dst: Vec<[f64; 2]> = src.iter().map(|&p| h.apply(p)).collect();
        let fit = fit_homography_dlt(&src, &dst).unwrap();
        assert!(max_abs_diff(&fit, &h) < 1e-6, "diff {}", max_abs_diff(&fit, &h));
    }

    #[test]
    fn identity_correspondences_give_identity() {
        let src = [[0.0, 0.0], [100.0, 3.0], [7.0, 90.0], [110.0, 95.0], [55.0, 40.0]];
        let fit = fit_homography_dlt(&src, &src).unwrap();
        assert!(max_abs_diff(&fit, &Homography::identity()) < 1e-9);
    }

    #[test]
    fn inverse_roundtrip_is_identity() {
        let h = known_h();
        let prod = h.compose(&h.inverse().unwrap());
        assert!(max_abs_diff(&prod, &Homography::identity()) < 1e-9);
    }

    #[test]
    fn ransac_rejects_outliers_and_recovers_warp() {
        let h = known_h();
        let mut medians = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut src = Vec::new();
            let mut dst = Vec::new();
            for _ in 0..100 {
                let p = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
                src.push(p);
                dst.push(h.apply(p));
            }
            for _ in 0..50 {
                src.push([rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)]);
                dst.push([rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)]);
            }
            let (fit, flags) =
                estimate_homography_ransac(&src, &dst, 500, 2.0, seed).unwrap();
            let inliers_on_true: usize = flags[..100].iter().filter(|f| **f).count();
            assert!(inliers_on_true >= 95, "seed {seed}: {inliers_on_true} true inliers kept");

            let mut errs: Vec<f64> = (0..100)
                .map(|i| {
                    let p = fit.apply(src[i]);
                    ((p[0] - dst[i][0]).powi(2) + (p[1] - dst[i][1]).powi(2)).sqrt()
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(errs[50]);
        }
        assert!(medians.iter().all(|m| *m < 1.0), "medians {medians:?}");
    }

    #[test]
    fn flagged_inliers_satisfy_the_tolerance() {
        let h = known_h();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for _ in 0..80 {
            let p = [rng.random_range(0.0..400.0), rng.random_range(0.0..400.0)];
            src.push(p);
            let q = h.apply(p);
            dst.push([q[0] + rng.random_range(-0.5..0.5), q[1] + rng.random_range(-0.5..0.5)]);
        }
        let tol = 2.0;
        let (fit, flags) = estimate_homography_ransac(&src, &dst, 300, tol, 3).unwrap();
        let fit_inv = fit.inverse().unwrap();
        for (i, flag) in flags.iter().enumerate() {
            let err = symmetric_transfer_error(&fit, &fit_inv, src[i], dst[i]);
            if *flag {
                assert!(err <= tol);
            } else {
                assert!(err > tol);
            }
        }
    }

    #[test]
    fn too_few_matches_error() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            estimate_homography_ransac(&pts, &pts, 10, 1.0, 0),
            Err(StitchError::TooFewMatches { have: 3, need: 4 })
        ));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let src: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let dst = src.clone();
        assert!(matches!(
            estimate_homography_ransac(&src, &dst, 50, 1.0, 0),
            Err(StitchError::DegenerateGeometry(_))
        ));
    }
}
