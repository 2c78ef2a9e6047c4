//! Scale-invariant keypoint detection: difference-of-Gaussians extrema with
//! subpixel refinement, gradient orientation assignment, and 4x4x8
//! gradient-histogram descriptors.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Keypoint, StitchError};
use crate::imaging::RasterImage;

pub const DESCRIPTOR_LEN: usize = 128;
const SPATIAL_BINS: usize = 4;
const ORIENT_BINS: usize = 8;
const ORI_HIST_BINS: usize = 36;

/// Detector tuning. Contrast is measured on intensities normalized to
/// [0, 1]; the edge ratio is the principal-curvature bound.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SiftParams {
    pub scales_per_octave: usize,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub base_sigma: f64,
    /// Double the image before building the pyramid; catches fine-grain
    /// features at the cost of a 4x larger first octave.
    pub initial_upsample: bool,
    /// Drop keypoints closer than this to the image border, where blur
    /// context is truncated and localization degrades.
    pub border_margin: f64,
    /// Keep only the strongest keypoints when set.
    pub max_keypoints: Option<usize>,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            base_sigma: 1.6,
            initial_upsample: true,
            border_margin: 8.0,
            max_keypoints: Some(1500),
        }
    }
}

/// Grayscale float image used inside the scale-space pyramid.
#[derive(Clone)]
struct Img {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Img {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn from_raster(img: &RasterImage) -> Self {
        let data = img.data().iter().map(|&v| v as f32 / 255.0).collect();
        Self { w: img.width() as usize, h: img.height() as usize, data }
    }

    fn halved(&self) -> Self {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(x * 2, y * 2));
            }
        }
        Self { w, h, data }
    }

    /// Bilinear 2x upsampling.
    fn doubled(&self) -> Self {
        let (w, h) = (self.w * 2, self.h * 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let fx = (x as f32 / 2.0).min(self.w as f32 - 1.0);
                let fy = (y as f32 / 2.0).min(self.h as f32 - 1.0);
                let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                let x1 = (x0 + 1).min(self.w - 1);
                let y1 = (y0 + 1).min(self.h - 1);
                let (ax, ay) = (fx - x0 as f32, fy - y0 as f32);
                let v = self.at(x0, y0) * (1.0 - ax) * (1.0 - ay)
                    + self.at(x1, y0) * ax * (1.0 - ay)
                    + self.at(x0, y1) * (1.0 - ax) * ay
                    + self.at(x1, y1) * ax * ay;
                data.push(v);
            }
        }
        Self { w, h, data }
    }

    /// Separable Gaussian blur with replicated borders.
    fn blurred(&self, sigma: f64) -> Self {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil().max(1.0) as i64;
        let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
        let denom = 2.0 * sigma * sigma;
        for i in -radius..=radius {
            kernel.push((-((i * i) as f64) / denom).exp() as f32);
        }
        let norm: f32 = kernel.iter().sum();
        for k in &mut kernel {
            *k /= norm;
        }

        let (w, h) = (self.w as i64, self.h as i64);
        let mut horiz = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sx = (x + ki as i64 - radius).clamp(0, w - 1);
                    acc += k * self.at(sx as usize, y as usize);
                }
                horiz[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sy = (y + ki as i64 - radius).clamp(0, h - 1);
                    acc += k * horiz[(sy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Self { w: self.w, h: self.h, data: out }
    }
}

struct Octave {
    gaussians: Vec<Img>,
    dogs: Vec<Img>,
}

fn build_pyramid(base: &Img, n_octaves: usize, params: &SiftParams, input_sigma: f64) -> Vec<Octave> {
    let s = params.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let mut sigmas = vec![params.base_sigma];
    for i in 1..s + 3 {
        sigmas.push(params.base_sigma * k.powi(i as i32));
    }

    let mut octaves = Vec::with_capacity(n_octaves);
    let mut current =
        base.blurred((params.base_sigma.powi(2) - input_sigma.powi(2)).max(0.0).sqrt());
    for _ in 0..n_octaves {
        let mut gaussians = vec![current.clone()];
        for i in 1..s + 3 {
            let inc = (sigmas[i].powi(2) - sigmas[i - 1].powi(2)).sqrt();
            gaussians.push(gaussians[i - 1].blurred(inc));
        }
        let dogs = (0..s + 2)
            .map(|i| {
                let a = &gaussians[i];
                let b = &gaussians[i + 1];
                let data = a.data.iter().zip(&b.data).map(|(x, y)| y - x).collect();
                Img { w: a.w, h: a.h, data }
            })
            .collect();
        // The next octave starts from the layer with twice the base blur.
        current = gaussians[s].halved();
        octaves.push(Octave { gaussians, dogs });
    }
    octaves
}

/// Quadratic subpixel refinement of a DoG extremum. Returns the refined
/// offset, interpolated response, and the 2x2 spatial Hessian entries.
fn refine(
    dogs: &[Img],
    mut layer: usize,
    mut x: usize,
    mut y: usize,
) -> Option<(f64, f64, f64, f64, (f64, f64, f64))> {
    let (w, h) = (dogs[0].w, dogs[0].h);
    for _attempt in 0..5 {
        let d = |l: usize, xx: usize, yy: usize| dogs[l].at(xx, yy) as f64;
        let v = d(layer, x, y);
        let gx = (d(layer, x + 1, y) - d(layer, x - 1, y)) / 2.0;
        let gy = (d(layer, x, y + 1) - d(layer, x, y - 1)) / 2.0;
        let gs = (d(layer + 1, x, y) - d(layer - 1, x, y)) / 2.0;
        let hxx = d(layer, x + 1, y) + d(layer, x - 1, y) - 2.0 * v;
        let hyy = d(layer, x, y + 1) + d(layer, x, y - 1) - 2.0 * v;
        let hss = d(layer + 1, x, y) + d(layer - 1, x, y) - 2.0 * v;
        let hxy = (d(layer, x + 1, y + 1) - d(layer, x - 1, y + 1) - d(layer, x + 1, y - 1)
            + d(layer, x - 1, y - 1))
            / 4.0;
        let hxs = (d(layer + 1, x + 1, y) - d(layer + 1, x - 1, y) - d(layer - 1, x + 1, y)
            + d(layer - 1, x - 1, y))
            / 4.0;
        let hys = (d(layer + 1, x, y + 1) - d(layer + 1, x, y - 1) - d(layer - 1, x, y + 1)
            + d(layer - 1, x, y - 1))
            / 4.0;

        let hessian = Matrix3::new(hxx, hxy, hxs, hxy, hyy, hys, hxs, hys, hss);
        let grad = Vector3::new(gx, gy, gs);
        let offset = hessian.lu().solve(&(-grad))?;

        if offset.x.abs() < 0.5 && offset.y.abs() < 0.5 && offset.z.abs() < 0.5 {
            let response = v + 0.5 * grad.dot(&offset);
            return Some((offset.x, offset.y, offset.z, response, (hxx, hyy, hxy)));
        }
        let nx = x as i64 + offset.x.round() as i64;
        let ny = y as i64 + offset.y.round() as i64;
        let nl = layer as i64 + offset.z.round() as i64;
        if nx < 1 || ny < 1 || nl < 1 || nx >= w as i64 - 1 || ny >= h as i64 - 1 || nl as usize >= dogs.len() - 1
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

fn orientation_histogram(img: &Img, x: f64, y: f64, sigma: f64) -> Option<Vec<f64>> {
    let radius = (3.0 * 1.5 * sigma).round() as i64;
    let (w, h) = (img.w as i64, img.h as i64);
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    if cx < 1 || cy < 1 || cx >= w - 1 || cy >= h - 1 {
        return None;
    }
    let denom = 2.0 * (1.5 * sigma).powi(2);
    let mut hist = vec![0f64; ORI_HIST_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px < 1 || py < 1 || px >= w - 1 || py >= h - 1 {
                continue;
            }
            let gx = (img.at((px + 1) as usize, py as usize)
                - img.at((px - 1) as usize, py as usize)) as f64;
            let gy = (img.at(px as usize, (py + 1) as usize)
                - img.at(px as usize, (py - 1) as usize)) as f64;
            let mag = (gx * gx + gy * gy).sqrt();
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let bin = (angle / std::f64::consts::TAU * ORI_HIST_BINS as f64) as usize % ORI_HIST_BINS;
            hist[bin] += weight * mag;
        }
    }
    // Two passes of circular 3-tap smoothing.
    for _ in 0..2 {
        let prev = hist.clone();
        for i in 0..ORI_HIST_BINS {
            let l = prev[(i + ORI_HIST_BINS - 1) % ORI_HIST_BINS];
            let r = prev[(i + 1) % ORI_HIST_BINS];
            hist[i] = (l + prev[i] + r) / 3.0;
        }
    }
    Some(hist)
}

fn dominant_orientations(hist: &[f64]) -> Vec<f64> {
    let max = hist.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let n = hist.len();
    let mut out = Vec::new();
    for i in 0..n {
        let l = hist[(i + n - 1) % n];
        let r = hist[(i + 1) % n];
        if hist[i] > l && hist[i] > r && hist[i] >= 0.8 * max {
            // Parabolic peak interpolation.
            let denom = l - 2.0 * hist[i] + r;
            let delta = if denom.abs() < 1e-12 { 0.0 } else { 0.5 * (l - r) / denom };
            let angle =
                ((i as f64 + delta) / n as f64 * std::f64::consts::TAU).rem_euclid(std::f64::consts::TAU);
            out.push(angle);
        }
    }
    out
}

fn descriptor(img: &Img, x: f64, y: f64, sigma: f64, orientation: f64) -> Option<Vec<f32>> {
    let hist_width = 3.0 * sigma;
    let radius =
        (hist_width * (2f64).sqrt() * (SPATIAL_BINS as f64 + 1.0) * 0.5).round() as i64;
    let (w, h) = (img.w as i64, img.h as i64);
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    if cx < 1 || cy < 1 || cx >= w - 1 || cy >= h - 1 {
        return None;
    }
    let (sin_o, cos_o) = orientation.sin_cos();
    let mut hist = vec![0f64; SPATIAL_BINS * SPATIAL_BINS * ORIENT_BINS];
    let bins_f = SPATIAL_BINS as f64;

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (cx + dx, cy + dy);
            if px < 1 || py < 1 || px >= w - 1 || py >= h - 1 {
                continue;
            }
            // Rotate into the keypoint frame.
            let rx = (dx as f64 * cos_o + dy as f64 * sin_o) / hist_width;
            let ry = (-(dx as f64) * sin_o + dy as f64 * cos_o) / hist_width;
            let ubin = rx + bins_f / 2.0 - 0.5;
            let vbin = ry + bins_f / 2.0 - 0.5;
            if ubin <= -1.0 || ubin >= bins_f || vbin <= -1.0 || vbin >= bins_f {
                continue;
            }
            let gx = (img.at((px + 1) as usize, py as usize)
                - img.at((px - 1) as usize, py as usize)) as f64;
            let gy = (img.at(px as usize, (py + 1) as usize)
                - img.at(px as usize, (py - 1) as usize)) as f64;
            let mag = (gx * gx + gy * gy).sqrt();
            let angle = (gy.atan2(gx) - orientation).rem_euclid(std::f64::consts::TAU);
            let obin = angle / std::f64::consts::TAU * ORIENT_BINS as f64;
            let weight = (-(rx * rx + ry * ry) / (2.0 * (0.5 * bins_f).powi(2))).exp();

            // Trilinear scatter.
            let u0 = ubin.floor();
            let v0 = vbin.floor();
            let o0 = obin.floor();
            let (du, dv, dob) = (ubin - u0, vbin - v0, obin - o0);
            for (ui, uw) in [(u0 as i64, 1.0 - du), (u0 as i64 + 1, du)] {
                if ui < 0 || ui >= SPATIAL_BINS as i64 {
                    continue;
                }
                for (vi, vw) in [(v0 as i64, 1.0 - dv), (v0 as i64 + 1, dv)] {
                    if vi < 0 || vi >= SPATIAL_BINS as i64 {
                        continue;
                    }
                    for (oi, ow) in [(o0 as i64, 1.0 - dob), (o0 as i64 + 1, dob)] {
                        let oi = (oi as usize) % ORIENT_BINS;
                        let idx = (vi as usize * SPATIAL_BINS + ui as usize) * ORIENT_BINS + oi;
                        hist[idx] += weight * mag * uw * vw * ow;
                    }
                }
            }
        }
    }

    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return None;
    }
    let mut desc: Vec<f64> = hist.iter().map(|v| (v / norm).min(0.2)).collect();
    let norm2 = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut desc {
        *v /= norm2;
    }
    Some(desc.into_iter().map(|v| v as f32).collect())
}

/// Detects scale-space keypoints and computes their descriptors.
pub fn detect_keypoints(
    img: &RasterImage,
    params: &SiftParams,
) -> Result<Vec<Keypoint>, StitchError> {
    if img.width() < 32 || img.height() < 32 {
        return Err(StitchError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: 32,
        });
    }
    let gray = if img.channels() == 1 { img.clone() } else { crate::imaging::to_gray(img)? };
    let loaded = Img::from_raster(&gray);
    // The sensor image is assumed to carry sigma = 0.5 of blur; doubling it
    // doubles that.
    let (base, base_scale, input_sigma) = if params.initial_upsample {
        (loaded.doubled(), 0.5, 1.0)
    } else {
        (loaded, 1.0, 0.5)
    };

    let min_dim = base.w.min(base.h) as f64;
    let n_octaves = ((min_dim.log2().floor() as i64) - 3).max(1) as usize;
    let octaves = build_pyramid(&base, n_octaves, params, input_sigma);

    let s = params.scales_per_octave;
    let edge_bound =
        (params.edge_ratio + 1.0).powi(2) / params.edge_ratio;
    let mut keypoints = Vec::new();

    for (oct_idx, octave) in octaves.iter().enumerate() {
        let scale_factor = (1usize << oct_idx) as f64 * base_scale;
        let (w, h) = (octave.dogs[0].w, octave.dogs[0].h);
        if w < 8 || h < 8 {
            break;
        }
        for layer in 1..=s {
            let dog = &octave.dogs[layer];
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = dog.at(x, y);
                    // Cheap pre-gate; the refined response is gated below.
                    if (v.abs() as f64) < 0.5 * params.contrast_threshold / s as f64 {
                        continue;
                    }
                    let mut is_max = true;
                    let mut is_min = true;
                    'neigh: for dl in -1..=1i64 {
                        let plane = &octave.dogs[(layer as i64 + dl) as usize];
                        for dy in -1..=1i64 {
                            for dx in -1..=1i64 {
                                if dl == 0 && dx == 0 && dy == 0 {
                                    continue;
                                }
                                let n = plane.at((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                                if v <= n {
                                    is_max = false;
                                }
                                if v >= n {
                                    is_min = false;
                                }
                                if !is_max && !is_min {
                                    break 'neigh;
                                }
                            }
                        }
                    }
                    if !is_max && !is_min {
                        continue;
                    }
                    let Some((ox, oy, os, response, (hxx, hyy, hxy))) =
                        refine(&octave.dogs, layer, x, y)
                    else {
                        continue;
                    };
                    if response.abs() < params.contrast_threshold {
                        continue;
                    }
                    // Principal-curvature (edge) rejection.
                    let tr = hxx + hyy;
                    let det = hxx * hyy - hxy * hxy;
                    if det <= 0.0 || tr * tr / det >= edge_bound {
                        continue;
                    }

                    let refined_layer = (layer as f64 + os).clamp(0.0, (s + 2) as f64);
                    let sigma = params.base_sigma
                        * 2f64.powf(refined_layer / s as f64);
                    let gauss = &octave.gaussians[layer];
                    let (fx, fy) = (x as f64 + ox, y as f64 + oy);

                    let Some(hist) = orientation_histogram(gauss, fx, fy, sigma) else {
                        continue;
                    };
                    let (bx, by) = (fx * scale_factor, fy * scale_factor);
                    // Keypoints hugging the border have truncated blur
                    // context and localize poorly relative to other views.
                    if bx < params.border_margin
                        || by < params.border_margin
                        || bx > img.width() as f64 - 1.0 - params.border_margin
                        || by > img.height() as f64 - 1.0 - params.border_margin
                    {
                        continue;
                    }
                    for orientation in dominant_orientations(&hist) {
                        let Some(desc) = descriptor(gauss, fx, fy, sigma, orientation) else {
                            continue;
                        };
                        keypoints.push(Keypoint {
                            x: bx,
                            y: by,
                            scale: sigma * scale_factor,
                            orientation,
                            response: response.abs(),
                            descriptor: desc,
                        });
                    }
                }
            }
        }
    }

    // Strongest first, deterministic tie-break on position.
    keypoints.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
    });
    if let Some(cap) = params.max_keypoints {
        keypoints.truncate(cap);
    }
    Ok(keypoints)
}
