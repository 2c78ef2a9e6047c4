//! Histogram computation, dominant-peak detection, threshold derivation,
//! and stitching-pattern / blank removal.
//!
//! A stitched survey image has three dominant intensity populations: blank
//! or dark areas, the inspected surface, and the bright stitching patterns.
//! The two segmentation thresholds are the midpoints between the three
//! corresponding histogram peaks; pixels outside the `[t1, t2]` band of the
//! red channel are repainted with `beta` so only the surface (and anything
//! on it) survives into crack detection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{to_gray, BinaryMask, RasterImage};

#[derive(Debug, Error)]
pub enum HistoError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("found only {found} qualifying peaks, need 3")]
    PeaksNotFound { found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn from_counts(bins: Vec<u64>) -> Self {
        assert_eq!(bins.len(), 256);
        let total = bins.iter().sum();
        Self { bins, total }
    }
}

/// Intensities of the three dominant peaks, ascending: blank/dark areas,
/// surface, stitching patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakSet {
    pub i_b: u32,
    pub i_w: u32,
    pub i_p: u32,
}

impl PeakSet {
    pub fn new(i_b: u32, i_w: u32, i_p: u32) -> Result<Self, HistoError> {
        if !(i_b < i_w && i_w < i_p && i_p <= 255) {
            return Err(HistoError::InvalidParameter(format!(
                "peaks must be strictly increasing and <= 255, got ({i_b}, {i_w}, {i_p})"
            )));
        }
        Ok(Self { i_b, i_w, i_p })
    }
}

/// Segmentation thresholds: midpoints between adjacent peaks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub t1: f64,
    pub t2: f64,
}

/// Peak-detection tuning; defaults match the pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PeakParams {
    pub smooth_window: usize,
    pub min_prominence: f64,
    pub min_separation: usize,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self { smooth_window: 5, min_prominence: 0.05, min_separation: 10 }
    }
}

/// Histogram of a grayscale channel; with a mask, only mask-valid pixels
/// are counted.
pub fn compute_histogram(
    channel: &RasterImage,
    mask: Option<&BinaryMask>,
) -> Result<Histogram, HistoError> {
    if channel.channels() != 1 {
        return Err(HistoError::Image(crate::imaging::ImageError::InvalidChannelCount {
            expected: 1,
            got: channel.channels(),
        }));
    }
    if let Some(m) = mask {
        if m.width() != channel.width() || m.height() != channel.height() {
            return Err(HistoError::DimensionMismatch(format!(
                "mask {}x{} vs image {}x{}",
                m.width(),
                m.height(),
                channel.width(),
                channel.height()
            )));
        }
    }
    let mut bins = vec![0u64; 256];
    match mask {
        None => {
            for &v in channel.data() {
                bins[v as usize] += 1;
            }
        }
        Some(m) => {
            for y in 0..channel.height() {
                for x in 0..channel.width() {
                    if m.get(x, y) {
                        bins[channel.gray(x, y) as usize] += 1;
                    }
                }
            }
        }
    }
    Ok(Histogram::from_counts(bins))
}

/// Moving-average smoothing with reflective boundaries.
fn smooth(bins: &[u64], window: usize) -> Vec<f64> {
    let n = bins.len() as i64;
    let half = (window / 2) as i64;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for k in -half..=half {
                let mut m = i + k;
                if m < 0 {
                    m = -m - 1;
                }
                if m >= n {
                    m = 2 * n - 1 - m;
                }
                acc += bins[m as usize] as f64;
            }
            acc / (2 * half + 1) as f64
        })
        .collect()
}

struct Candidate {
    index: usize,
    prominence: f64,
}

/// Plateau-aware local maxima with their prominences (height above the
/// higher of the two flanking minima).
fn local_maxima(values: &[f64]) -> Vec<Candidate> {
    let n = values.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let v = values[i];
        let mut j = i;
        while j + 1 < n && values[j + 1] == v {
            j += 1;
        }
        let left_lower = i == 0 || values[i - 1] < v;
        let right_lower = j + 1 == n || values[j + 1] < v;
        if left_lower && right_lower && v > 0.0 {
            // Walk outward to the nearest higher ground on each side,
            // tracking the minimum along the way.
            let mut left_min = v;
            let mut k = i;
            while k > 0 {
                k -= 1;
                if values[k] > v {
                    break;
                }
                left_min = left_min.min(values[k]);
            }
            let mut right_min = v;
            let mut k = j;
            while k + 1 < n {
                k += 1;
                if values[k] > v {
                    break;
                }
                right_min = right_min.min(values[k]);
            }
            out.push(Candidate { index: (i + j) / 2, prominence: v - left_min.max(right_min) });
        }
        i = j + 1;
    }
    out
}

/// Detects the three dominant histogram peaks: smoothing, prominence
/// filtering relative to the tallest smoothed bin, and a minimum pairwise
/// separation, keeping the most prominent maxima. Returns them sorted
/// ascending as (i_b, i_w, i_p).
pub fn detect_peaks(h: &Histogram, params: &PeakParams) -> Result<PeakSet, HistoError> {
    if h.total == 0 {
        return Err(HistoError::InvalidParameter("histogram is empty".into()));
    }
    if params.smooth_window == 0 {
        return Err(HistoError::InvalidParameter("smooth_window must be >= 1".into()));
    }
    let smoothed = smooth(&h.bins, params.smooth_window);
    let max_bin = smoothed.iter().cloned().fold(0.0, f64::max);
    let mut candidates: Vec<Candidate> = local_maxima(&smoothed)
        .into_iter()
        .filter(|c| c.prominence >= params.min_prominence * max_bin)
        .collect();
    // Most prominent first; ties resolve to the lower intensity.
    candidates.sort_by(|a, b| {
        b.prominence.partial_cmp(&a.prominence).unwrap().then(a.index.cmp(&b.index))
    });

    let mut accepted: Vec<Candidate> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|a| a.index.abs_diff(c.index) >= params.min_separation) {
            accepted.push(c);
        }
    }
    if accepted.len() < 3 {
        return Err(HistoError::PeaksNotFound { found: accepted.len() });
    }
    let mut top: Vec<usize> = accepted[..3].iter().map(|c| c.index).collect();
    top.sort_unstable();
    PeakSet::new(top[0] as u32, top[1] as u32, top[2] as u32)
}

/// Midpoint thresholds between adjacent peaks: `t1 = (i_b + i_w) / 2`,
/// `t2 = (i_w + i_p) / 2`.
pub fn compute_thresholds(p: &PeakSet) -> ThresholdPair {
    ThresholdPair {
        t1: (p.i_b as f64 + p.i_w as f64) / 2.0,
        t2: (p.i_w as f64 + p.i_p as f64) / 2.0,
    }
}

/// Repaints every pixel whose red intensity falls strictly below `t1` or
/// strictly above `t2` with `beta`; all other pixels become their gray
/// value. Comparisons are strict, so boundary pixels pass through.
pub fn remove_patterns(
    mosaic: &RasterImage,
    t: &ThresholdPair,
    beta: u8,
) -> Result<RasterImage, HistoError> {
    let gray = to_gray(mosaic)?;
    let mut data = gray.data().to_vec();
    for (i, px) in mosaic.data().chunks_exact(3).enumerate() {
        let red = px[0] as f64;
        if red < t.t1 || red > t.t2 {
            data[i] = beta;
        }
    }
    Ok(RasterImage::new(mosaic.width(), mosaic.height(), 1, data)?)
}
