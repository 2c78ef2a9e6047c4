//! Locally adaptive (Sauvola) thresholding, global-threshold baseline,
//! connected-component extraction, and geometric crack filtering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{build_integral, RasterImage};

pub use crate::imaging::BinaryMask;

#[derive(Debug, Error)]
pub enum CrackError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

/// Which side of the local threshold counts as crack foreground.
///
/// Cracks are darker than the surrounding surface, so `DarkForeground` is
/// the default; `BrightForeground` mirrors the test by thresholding the
/// inverted image, making the two polarities exact complements of each
/// other under intensity inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    DarkForeground,
    BrightForeground,
}

/// Sauvola threshold parameters: odd window size `N`, standard-deviation
/// influence `k`, dynamic range `R`, and foreground polarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SauvolaParams {
    #[serde(rename = "N")]
    pub window: u32,
    pub k: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub polarity: Polarity,
}

impl Default for SauvolaParams {
    fn default() -> Self {
        Self { window: 31, k: 0.5, r: 128.0, polarity: Polarity::DarkForeground }
    }
}

impl SauvolaParams {
    pub fn validate(&self) -> Result<(), CrackError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(CrackError::InvalidParameter(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.r > 0.0) {
            return Err(CrackError::InvalidParameter(format!("R must be positive, got {}", self.r)));
        }
        if !(0.0..=1.0).contains(&self.k) {
            return Err(CrackError::InvalidParameter(format!("k must be in [0, 1], got {}", self.k)));
        }
        Ok(())
    }
}

/// Per-pixel window mean and standard deviation.
#[derive(Debug, Clone)]
pub struct LocalStats {
    pub width: u32,
    pub height: u32,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

/// Window mean and standard deviation around every pixel, computed from
/// integral images. Windows are clamped at the borders and the divisor is
/// the actual pixel count, so no phantom padding enters the statistics.
pub fn local_stats(img: &RasterImage, n: u32) -> Result<LocalStats, CrackError> {
    if n < 3 || n % 2 == 0 {
        return Err(CrackError::InvalidParameter(format!("window must be odd and >= 3, got {n}")));
    }
    let integral = build_integral(img)?;
    let (w, h) = (img.width(), img.height());
    let half = n / 2;
    let mut mean = Vec::with_capacity(w as usize * h as usize);
    let mut stdev = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        let y0 = y.saturating_sub(half);
        let y1 = (y + half + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(half);
            let x1 = (x + half + 1).min(w);
            let count = ((x1 - x0) as u64 * (y1 - y0) as u64) as f64;
            let sum = integral.rect_sum(x0, y0, x1, y1) as f64;
            let sum_sq = integral.rect_sum_sq(x0, y0, x1, y1) as f64;
            let m = sum / count;
            let var = (sum_sq / count - m * m).max(0.0);
            mean.push(m);
            stdev.push(var.sqrt());
        }
    }
    Ok(LocalStats { width: w, height: h, mean, stdev })
}

/// The Sauvola threshold for one pixel: `T = m * (1 + k * (s / R - 1))`.
#[inline]
pub fn sauvola_threshold(m: f64, s: f64, k: f64, r: f64) -> f64 {
    m * (1.0 + k * (s / r - 1.0))
}

/// Per-pixel threshold map `T(x, y)` from the window statistics.
pub fn sauvola_map(img: &RasterImage, p: &SauvolaParams) -> Result<Vec<f64>, CrackError> {
    p.validate()?;
    let stats = local_stats(img, p.window)?;
    Ok(stats
        .mean
        .iter()
        .zip(&stats.stdev)
        .map(|(&m, &s)| sauvola_threshold(m, s, p.k, p.r))
        .collect())
}

fn invert(img: &RasterImage) -> RasterImage {
    let data = img.data().iter().map(|&v| 255 - v).collect();
    RasterImage::new(img.width(), img.height(), 1, data).expect("same dims")
}

/// Locally adaptive binarization. With `DarkForeground` a pixel is
/// foreground iff its intensity is strictly below its Sauvola threshold;
/// `BrightForeground` applies the same rule to the inverted image.
pub fn binarize_local(img: &RasterImage, p: &SauvolaParams) -> Result<BinaryMask, CrackError> {
    p.validate()?;
    let work;
    let src = match p.polarity {
        Polarity::DarkForeground => img,
        Polarity::BrightForeground => {
            work = invert(img);
            &work
        }
    };
    let thresholds = sauvola_map(src, p)?;
    let mut mask = BinaryMask::new(img.width(), img.height());
    let w = img.width() as usize;
    for (i, &t) in thresholds.iter().enumerate() {
        if (src.data()[i] as f64) < t {
            mask.set((i % w) as u32, (i / w) as u32, true);
        }
    }
    Ok(mask)
}

/// Global-threshold baseline: foreground iff intensity is strictly below
/// `t` (dark-foreground convention).
pub fn binarize_global(img: &RasterImage, t: f64) -> Result<BinaryMask, CrackError> {
    if !(0.0..=255.0).contains(&t) {
        return Err(CrackError::InvalidParameter(format!("threshold {t} outside [0, 255]")));
    }
    if img.channels() != 1 {
        return Err(CrackError::Image(crate::imaging::ImageError::InvalidChannelCount {
            expected: 1,
            got: img.channels(),
        }));
    }
    let mut mask = BinaryMask::new(img.width(), img.height());
    let w = img.width() as usize;
    for (i, &v) in img.data().iter().enumerate() {
        if (v as f64) < t {
            mask.set((i % w) as u32, (i / w) as u32, true);
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    Eight,
}

/// A labeled foreground component with its geometry. Elongation is
/// `sqrt(lambda1 / lambda2)` of the second-central-moment eigenvalues
/// (pixels modeled as unit squares, so a single pixel has elongation 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackComponent {
    #[serde(skip)]
    pub pixels: Vec<(u32, u32)>,
    pub area_px: usize,
    /// x, y, width, height.
    pub bbox: [u32; 4],
    pub centroid: [f64; 2],
    pub elongation: f64,
    pub orientation_rad: f64,
}

impl CrackComponent {
    fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Self {
        pixels.sort_unstable_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let n = pixels.len() as f64;
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut cx = 0.0;
        let mut cy = 0.0;
        for &(x, y) in &pixels {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            cx += x as f64;
            cy += y as f64;
        }
        cx /= n;
        cy /= n;
        // Second central moments with the unit-square pixel term.
        let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
        for &(x, y) in &pixels {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            mxx += dx * dx;
            myy += dy * dy;
            mxy += dx * dy;
        }
        mxx = mxx / n + 1.0 / 12.0;
        myy = myy / n + 1.0 / 12.0;
        mxy /= n;
        let trace = mxx + myy;
        let gap = ((mxx - myy) * (mxx - myy) + 4.0 * mxy * mxy).sqrt();
        let l1 = (trace + gap) / 2.0;
        let l2 = ((trace - gap) / 2.0).max(1e-12);
        let elongation = (l1 / l2).sqrt();
        let orientation = 0.5 * (2.0 * mxy).atan2(mxx - myy);

        Self {
            area_px: pixels.len(),
            bbox: [min_x, min_y, max_x - min_x + 1, max_y - min_y + 1],
            centroid: [cx, cy],
            elongation,
            orientation_rad: orientation,
            pixels,
        }
    }
}

/// Maximal connected foreground components in scan order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<CrackComponent> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let offsets: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => {
            &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
        }
    };
    let mut visited = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if visited[idx] || !mask.get(x as u32, y as u32) {
                continue;
            }
            let mut pixels = Vec::new();
            let mut stack = vec![(x, y)];
            visited[idx] = true;
            while let Some((px, py)) = stack.pop() {
                pixels.push((px as u32, py as u32));
                for (dx, dy) in offsets {
                    let (nx, ny) = (px + dx, py + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let nidx = (ny * w + nx) as usize;
                    if !visited[nidx] && mask.get(nx as u32, ny as u32) {
                        visited[nidx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            out.push(CrackComponent::from_pixels(pixels));
        }
    }
    out
}

/// Keeps components that are large enough and line-like enough to be crack
/// candidates.
pub fn filter_candidates(
    components: &[CrackComponent],
    min_area: usize,
    min_elongation: f64,
) -> Vec<CrackComponent> {
    components
        .iter()
        .filter(|c| c.area_px >= min_area && c.elongation >= min_elongation)
        .cloned()
        .collect()
}

/// Candidate-filter parameters used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub min_area: usize,
    pub min_elongation: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { min_area: 30, min_elongation: 3.0 }
    }
}

/// Detection result for one image: parameters used, surviving components,
/// and an optional path to the emitted mask raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackReport {
    pub image: String,
    pub params: SauvolaParams,
    pub components: Vec<CrackComponent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

impl CrackReport {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
