//! Invariant-feature panorama stitching: keypoint detection, descriptor
//! matching, RANSAC homographies, pair verification, and compositing.

mod homography;
mod matching;
mod sift;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BinaryMask, RasterImage};

pub use homography::{
    estimate_homography_ransac, fit_homography_dlt, symmetric_transfer_error, Homography,
};
pub use matching::{match_descriptors, PutativeMatch};
pub use sift::{detect_keypoints, SiftParams, DESCRIPTOR_LEN};

#[derive(Debug, Error)]
pub enum StitchError {
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("too few matches: have {have}, need {need}")]
    TooFewMatches { have: usize, need: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("stitch graph is disconnected; components: {0:?}")]
    StitchGraphDisconnected(Vec<Vec<usize>>),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

/// A scale-space keypoint with its unit-norm descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Blur level in pixels of the base image.
    pub scale: f64,
    pub orientation: f64,
    /// Absolute interpolated DoG response; used to rank keypoints.
    pub response: f64,
    pub descriptor: Vec<f32>,
}

/// Correspondences between one image pair. The homography maps image-`a`
/// coordinates into image-`b` coordinates; `inliers` flags the matches
/// whose symmetric transfer error is within the estimation tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchSet {
    pub image_a: usize,
    pub image_b: usize,
    pub matches: Vec<PutativeMatch>,
    pub inliers: Vec<bool>,
    pub homography: Homography,
}

impl MatchSet {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|f| **f).count()
    }
}

/// Probabilistic match verification: accept the pair when
/// `inliers > alpha + beta_v * putative_count`.
pub fn verify_match(ms: &MatchSet, alpha: f64, beta_v: f64) -> bool {
    (ms.inlier_count() as f64) > alpha + beta_v * ms.matches.len() as f64
}

/// Stitching stage tuning; defaults follow common practice for the
/// underlying feature pipeline.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StitchParams {
    pub sift: SiftParams,
    pub ratio: f64,
    pub ransac_iters: usize,
    pub inlier_tol: f64,
    pub verify_alpha: f64,
    pub verify_beta: f64,
    pub blank_fill: u8,
}

impl Default for StitchParams {
    fn default() -> Self {
        Self {
            sift: SiftParams::default(),
            ratio: 0.8,
            ransac_iters: 2000,
            inlier_tol: 2.0,
            verify_alpha: 8.0,
            verify_beta: 0.3,
            blank_fill: 0,
        }
    }
}

/// Output of the full stitching stage.
#[derive(Debug, Clone)]
pub struct StitchResult {
    pub mosaic: RasterImage,
    pub valid_mask: BinaryMask,
    /// Index of the reference image (highest verified-match degree).
    pub reference: usize,
    /// Homography into the mosaic frame per image (mosaic offset applied).
    pub to_mosaic: Vec<Homography>,
    /// Every estimated pair, verified or not.
    pub pairs: Vec<MatchSet>,
}

fn to_rgb(img: &RasterImage) -> RasterImage {
    if img.channels() == 3 {
        return img.clone();
    }
    let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
    RasterImage::new(img.width(), img.height(), 3, data).expect("same dims")
}

/// Connected components of the verified match graph, each sorted.
fn graph_components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut dsu: Vec<usize> = (0..n).collect();
    fn find(dsu: &mut Vec<usize>, mut x: usize) -> usize {
        while dsu[x] != x {
            dsu[x] = dsu[dsu[x]];
            x = dsu[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut dsu, a), find(&mut dsu, b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            dsu[hi] = lo;
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut dsu, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Composites verified image pairs into one mosaic.
///
/// The reference frame is the image with the highest verified-match degree;
/// homographies are chained along a maximum-inlier spanning tree. The canvas
/// covers the union of warped extents; pixels are inverse-warped with
/// bilinear sampling, overlaps resolved last-writer in ascending image id,
/// and unmapped pixels take `blank_fill` and are cleared in the valid mask.
pub fn compose_mosaic(
    images: &[RasterImage],
    verified: &[MatchSet],
    blank_fill: u8,
) -> Result<(RasterImage, BinaryMask, usize, Vec<Homography>), StitchError> {
    if images.is_empty() {
        return Err(StitchError::InvalidParameter("no images to compose".into()));
    }
    let n = images.len();
    if n == 1 {
        let mosaic = to_rgb(&images[0]);
        let mask = BinaryMask::filled(mosaic.width(), mosaic.height(), true);
        return Ok((mosaic, mask, 0, vec![Homography::identity()]));
    }

    let edges: Vec<(usize, usize)> = verified.iter().map(|m| (m.image_a, m.image_b)).collect();
    let components = graph_components(n, &edges);
    if components.len() > 1 {
        return Err(StitchError::StitchGraphDisconnected(components));
    }

    // Reference: maximum degree, ties to the smaller id.
    let mut degree = vec![0usize; n];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let reference = (0..n).max_by_key(|&i| (degree[i], n - i)).expect("n >= 1");

    // Maximum-inlier spanning tree grown from the reference (Prim).
    let mut to_ref: Vec<Option<Homography>> = vec![None; n];
    to_ref[reference] = Some(Homography::identity());
    loop {
        let mut best: Option<(usize, usize, bool, &MatchSet)> = None; // (inliers, new, ..)
        for ms in verified {
            let (a, b) = (ms.image_a, ms.image_b);
            let (done_a, done_b) = (to_ref[a].is_some(), to_ref[b].is_some());
            if done_a == done_b {
                continue;
            }
            let count = ms.inlier_count();
            let candidate_new = if done_a { b } else { a };
            if best.as_ref().map_or(true, |(bc, bn, ..)| {
                count > *bc || (count == *bc && candidate_new < *bn)
            }) {
                best = Some((count, candidate_new, done_a, ms));
            }
        }
        match best {
            None => break,
            Some((_, new_idx, a_is_done, ms)) => {
                let h = if a_is_done {
                    // new is b: H_b->ref = H_a->ref * H_ab^-1
                    to_ref[ms.image_a].as_ref().unwrap().compose(&ms.homography.inverse()?)
                } else {
                    // new is a: H_a->ref = H_b->ref * H_ab
                    to_ref[ms.image_b].as_ref().unwrap().compose(&ms.homography)
                };
                to_ref[new_idx] = Some(h);
            }
        }
    }
    let to_ref: Vec<Homography> =
        to_ref.into_iter().map(|h| h.expect("graph is connected")).collect();

    // Canvas bounds from warped image corners.
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (img, h) in images.iter().zip(&to_ref) {
        let (w, h_px) = (img.width() as f64, img.height() as f64);
        for corner in [[0.0, 0.0], [w - 1.0, 0.0], [0.0, h_px - 1.0], [w - 1.0, h_px - 1.0]] {
            let p = h.apply(corner);
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(StitchError::DegenerateGeometry("corner maps to infinity".into()));
            }
            min_x = min_x.min(p[0]);
            min_y = min_y.min(p[1]);
            max_x = max_x.max(p[0]);
            max_y = max_y.max(p[1]);
        }
    }
    // Snap near-integer extents so almost-exact translations produce tight
    // canvases instead of a one-pixel border of numerical noise.
    let snap = |v: f64| if (v - v.round()).abs() < 2e-2 { v.round() } else { v };
    let (min_x, min_y) = (snap(min_x), snap(min_y));
    let (max_x, max_y) = (snap(max_x), snap(max_y));
    let canvas_w = (max_x - min_x).ceil() as i64 + 1;
    let canvas_h = (max_y - min_y).ceil() as i64 + 1;
    if canvas_w <= 0 || canvas_h <= 0 || canvas_w > 20_000 || canvas_h > 20_000 {
        return Err(StitchError::DegenerateGeometry(format!(
            "implausible canvas {canvas_w}x{canvas_h}"
        )));
    }
    let (canvas_w, canvas_h) = (canvas_w as u32, canvas_h as u32);

    let offset = Homography::from_matrix(nalgebra::Matrix3::new(
        1.0, 0.0, -min_x, 0.0, 1.0, -min_y, 0.0, 0.0, 1.0,
    ));
    let to_mosaic: Vec<Homography> = to_ref.iter().map(|h| offset.compose(h)).collect();

    let mut mosaic = RasterImage::filled(canvas_w, canvas_h, &[blank_fill; 3])
        .expect("canvas dims validated");
    let mut mask = BinaryMask::new(canvas_w, canvas_h);

    // Ascending image id: later images overwrite earlier ones.
    for (idx, img) in images.iter().enumerate() {
        let rgb = to_rgb(img);
        let h_inv = to_mosaic[idx].inverse()?;
        // Bounding box of this image on the canvas.
        let (w, h_px) = (rgb.width() as f64, rgb.height() as f64);
        let mut bb_min = [f64::INFINITY; 2];
        let mut bb_max = [f64::NEG_INFINITY; 2];
        for corner in [[0.0, 0.0], [w - 1.0, 0.0], [0.0, h_px - 1.0], [w - 1.0, h_px - 1.0]] {
            let p = to_mosaic[idx].apply(corner);
            bb_min[0] = bb_min[0].min(p[0]);
            bb_min[1] = bb_min[1].min(p[1]);
            bb_max[0] = bb_max[0].max(p[0]);
            bb_max[1] = bb_max[1].max(p[1]);
        }
        let x0 = bb_min[0].floor().max(0.0) as u32;
        let y0 = bb_min[1].floor().max(0.0) as u32;
        let x1 = (bb_max[0].ceil() as u32 + 1).min(canvas_w);
        let y1 = (bb_max[1].ceil() as u32 + 1).min(canvas_h);

        for cy in y0..y1 {
            for cx in x0..x1 {
                let src = h_inv.apply([cx as f64, cy as f64]);
                if src[0] < 0.0 || src[1] < 0.0 || src[0] > w - 1.0 || src[1] > h_px - 1.0 {
                    continue;
                }
                let px0 = src[0].floor() as u32;
                let py0 = src[1].floor() as u32;
                let px1 = (px0 + 1).min(rgb.width() - 1);
                let py1 = (py0 + 1).min(rgb.height() - 1);
                let ax = src[0] - px0 as f64;
                let ay = src[1] - py0 as f64;
                let mut value = [0u8; 3];
                for c in 0..3 {
                    let v00 = rgb.pixel(px0, py0)[c] as f64;
                    let v10 = rgb.pixel(px1, py0)[c] as f64;
                    let v01 = rgb.pixel(px0, py1)[c] as f64;
                    let v11 = rgb.pixel(px1, py1)[c] as f64;
                    let v = v00 * (1.0 - ax) * (1.0 - ay)
                        + v10 * ax * (1.0 - ay)
                        + v01 * (1.0 - ax) * ay
                        + v11 * ax * ay;
                    value[c] = v.round().clamp(0.0, 255.0) as u8;
                }
                mosaic.set_pixel(cx, cy, &value);
                mask.set(cx, cy, true);
            }
        }
    }

    Ok((mosaic, mask, reference, to_mosaic))
}

/// Full stitching stage: keypoints per image, exhaustive pairwise matching
/// with verification, and mosaic composition over the verified pairs.
pub fn stitch_images(
    images: &[RasterImage],
    params: &StitchParams,
    seed: u64,
) -> Result<StitchResult, StitchError> {
    if images.is_empty() {
        return Err(StitchError::InvalidParameter("no input images".into()));
    }
    if images.len() == 1 {
        let (mosaic, mask, reference, to_mosaic) = compose_mosaic(images, &[], params.blank_fill)?;
        return Ok(StitchResult { mosaic, valid_mask: mask, reference, to_mosaic, pairs: vec![] });
    }

    let keypoints: Vec<Vec<Keypoint>> = images
        .iter()
        .map(|img| detect_keypoints(img, &params.sift))
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    let mut verified = Vec::new();
    for a in 0..images.len() {
        for b in (a + 1)..images.len() {
            let putative = match_descriptors(&keypoints[a], &keypoints[b], params.ratio)?;
            // Fewer matches than the verification floor can never pass.
            if (putative.len() as f64) <= params.verify_alpha || putative.len() < 4 {
                continue;
            }
            let src: Vec<[f64; 2]> =
                putative.iter().map(|m| [keypoints[a][m.a].x, keypoints[a][m.a].y]).collect();
            let dst: Vec<[f64; 2]> =
                putative.iter().map(|m| [keypoints[b][m.b].x, keypoints[b][m.b].y]).collect();
            let pair_seed = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((a * images.len() + b) as u64);
            let Ok((h, inliers)) =
                estimate_homography_ransac(&src, &dst, params.ransac_iters, params.inlier_tol, pair_seed)
            else {
                continue;
            };
            let ms = MatchSet { image_a: a, image_b: b, matches: putative, inliers, homography: h };
            if verify_match(&ms, params.verify_alpha, params.verify_beta) {
                verified.push(ms.clone());
            }
            pairs.push(ms);
        }
    }

    let (mosaic, valid_mask, reference, to_mosaic) =
        compose_mosaic(images, &verified, params.blank_fill)?;
    Ok(StitchResult { mosaic, valid_mask, reference, to_mosaic, pairs })
}
