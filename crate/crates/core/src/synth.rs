//! Synthetic panel-wall generator: a ground-truthed reproduction of the
//! survey experiment at desk scale.
//!
//! The wall is a grid of wooden panels with dark joint seams, pink
//! stitching patterns stuck on the surface, and a configurable number of
//! impact cracks rendered as directional random-walk polylines. The
//! generator emits the full wall render, overlapping camera tiles with
//! ground-truth homographies, pattern and crack masks, per-crack skeleton
//! traces, and a laser-scan point cloud of the wall plus its support frame.
//! Everything is deterministic for a fixed seed.

use nalgebra::{Matrix3, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BinaryMask, RasterImage};
use crate::pointcloud::PointCloud;
use crate::stitch::Homography;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthWallSpec {
    pub panel_rows: u32,
    pub panel_cols: u32,
    pub panel_width_mm: f64,
    pub panel_height_mm: f64,
    /// Raster scale of the wall render.
    pub mm_per_px: f64,
    /// Red-channel mean of the surface; segmentation thresholds derive
    /// from this peak.
    pub surface_gray: u8,
    /// Swing of the smooth green/blue wood-texture field. The red channel
    /// stays flat so the texture feeds feature matching without disturbing
    /// the red-channel histogram.
    pub texture_amplitude: f64,
    /// Standard deviation of the red-channel grain; green and blue carry
    /// 0.7x of it.
    pub grain_sigma: f64,
    pub seam_width_px: u32,
    pub seam_intensity: u8,
    pub pattern_count: u32,
    pub pattern_rgb: [u8; 3],
    pub pattern_size_px: [u32; 2],
    pub crack_count: u32,
    pub crack_width_px: u32,
    /// Red value of crack pixels; must sit inside the segmentation band so
    /// pattern removal leaves cracks untouched.
    pub crack_intensity: u8,
    /// Green/blue value of crack pixels; pushes the crack's gray level well
    /// below the surface for the adaptive thresholding stage.
    pub crack_secondary: u8,
    pub tile_size_px: [u32; 2],
    pub tile_overlap: f64,
    /// Multiplicative linear illumination gradient along x: brightness
    /// ranges over `1 +- illumination_gradient`. Zero disables it.
    pub illumination_gradient: f64,
    pub seed: u64,
}

impl Default for SynthWallSpec {
    fn default() -> Self {
        Self {
            panel_rows: 3,
            panel_cols: 3,
            panel_width_mm: 600.0,
            panel_height_mm: 900.0,
            mm_per_px: 2.0,
            surface_gray: 200,
            texture_amplitude: 40.0,
            grain_sigma: 7.0,
            seam_width_px: 8,
            seam_intensity: 10,
            pattern_count: 18,
            pattern_rgb: [235, 120, 150],
            pattern_size_px: [70, 50],
            crack_count: 2,
            crack_width_px: 3,
            crack_intensity: 110,
            crack_secondary: 60,
            tile_size_px: [480, 480],
            tile_overlap: 0.3,
            illumination_gradient: 0.0,
            seed: 42,
        }
    }
}

impl SynthWallSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.panel_rows == 0 || self.panel_cols == 0 {
            return Err(SynthError::InvalidParameter("panel grid must be non-empty".into()));
        }
        if !(0.1..=0.9).contains(&self.tile_overlap) {
            return Err(SynthError::InvalidParameter(format!(
                "tile overlap {} outside [0.1, 0.9]",
                self.tile_overlap
            )));
        }
        if self.mm_per_px <= 0.0 || self.panel_width_mm <= 0.0 || self.panel_height_mm <= 0.0 {
            return Err(SynthError::InvalidParameter("geometry must be positive".into()));
        }
        if !(self.crack_intensity < self.surface_gray && self.surface_gray < self.pattern_rgb[0]) {
            return Err(SynthError::InvalidParameter(
                "need crack intensity < surface intensity < pattern red intensity".into(),
            ));
        }
        if self.crack_width_px == 0 || self.tile_size_px.iter().any(|&t| t == 0) {
            return Err(SynthError::InvalidParameter("sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn wall_size_px(&self) -> (u32, u32) {
        let w = (self.panel_cols as f64 * self.panel_width_mm / self.mm_per_px).round() as u32;
        let h = (self.panel_rows as f64 * self.panel_height_mm / self.mm_per_px).round() as u32;
        (w, h)
    }
}

/// Everything the generator knows about one wall instance.
#[derive(Debug, Clone)]
pub struct SynthWall {
    pub spec: SynthWallSpec,
    pub wall: RasterImage,
    pub tiles: Vec<RasterImage>,
    /// Ground-truth map from tile coordinates into wall coordinates.
    pub tile_homographies: Vec<Homography>,
    pub pattern_mask: BinaryMask,
    pub crack_mask: BinaryMask,
    /// Center-line pixels of each crack.
    pub crack_skeletons: Vec<Vec<(u32, u32)>>,
    /// Wall surface scan plus support-frame obstacle points; the scan
    /// origin sits in front of the wall.
    pub cloud: PointCloud,
}

fn smooth_noise_field(w: u32, h: u32, cell: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cw = (w / cell + 2) as usize;
    let ch = (h / cell + 2) as usize;
    let coarse: Vec<f64> = (0..cw * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let gx = x as f64 / cell as f64;
            let gy = y as f64 / cell as f64;
            let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx.fract(), gy.fract());
            let v = coarse[y0 * cw + x0] * (1.0 - fx) * (1.0 - fy)
                + coarse[y0 * cw + x0 + 1] * fx * (1.0 - fy)
                + coarse[(y0 + 1) * cw + x0] * (1.0 - fx) * fy
                + coarse[(y0 + 1) * cw + x0 + 1] * fx * fy;
            out.push(v);
        }
    }
    out
}


/// Renders the wall and returns it with the ground-truth masks and crack
/// skeletons.
fn render_wall(
    spec: &SynthWallSpec,
    rng: &mut ChaCha8Rng,
) -> (RasterImage, BinaryMask, BinaryMask, Vec<Vec<(u32, u32)>>) {
    let (w, h) = spec.wall_size_px();
    let panel_w = w as f64 / spec.panel_cols as f64;
    let panel_h = h as f64 / spec.panel_rows as f64;

    // Wood texture. The red channel is a flat mean plus grain, which keeps
    // the red histogram a single narrow surface peak; the green/blue
    // channels carry a dense high-contrast blob field that shows up in the
    // luminance, giving the feature detector plenty to work with.
    // `texture_amplitude` is the upward luminance swing; downward
    // excursions are softened so the surface gray never sinks into reach
    // of the locally adaptive threshold next to repainted beta regions.
    let blotch = smooth_noise_field(w, h, 5, rng);
    let grain_r = Normal::new(0.0, spec.grain_sigma).unwrap();
    let grain_gb = Normal::new(0.0, 0.7 * spec.grain_sigma).unwrap();
    let red_base = spec.surface_gray as f64;
    let gb_base = (red_base - 20.0 - 0.299 * red_base) / 0.701;
    let mut data: Vec<u8> = Vec::with_capacity((w * h) as usize * 3);
    for &t in blotch.iter().take((w * h) as usize) {
        let t = if t < 0.0 { 0.45 * t } else { t };
        let r = red_base + grain_r.sample(rng);
        let g = gb_base + 1.45 * spec.texture_amplitude * t + grain_gb.sample(rng);
        let b = gb_base + 1.30 * spec.texture_amplitude * t + grain_gb.sample(rng);
        data.push(r.round().clamp(0.0, 255.0) as u8);
        data.push(g.round().clamp(0.0, 255.0) as u8);
        data.push(b.round().clamp(0.0, 255.0) as u8);
    }

    let idx = |x: u32, y: u32| -> usize { (y as usize * w as usize + x as usize) * 3 };

    // Speckle dots: pores and resin spots. Each is a crisp little blob with
    // full contrast, which is what the keypoint detector keys on; they are
    // far too small and round to survive the crack candidate filter.
    let n_dots = (w as usize * h as usize) / 140;
    for _ in 0..n_dots {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let radius: f64 = rng.random_range(1.4..2.6);
        let amp: f64 = rng.random_range(32.0..50.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let r_ceil = radius.ceil() as i64 + 1;
        for dy in -r_ceil..=r_ceil {
            for dx in -r_ceil..=r_ceil {
                let (px, py) = (cx as i64 + dx, cy as i64 + dy);
                if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                    continue;
                }
                let dist2 = ((px as f64 - cx).powi(2) + (py as f64 - cy).powi(2)) / (radius * radius);
                let fall = (1.0 - dist2).max(0.0);
                if fall <= 0.0 {
                    continue;
                }
                let i = idx(px as u32, py as u32);
                let g = data[i + 1] as f64 + 1.45 * amp * fall;
                let b = data[i + 2] as f64 + 1.30 * amp * fall;
                data[i + 1] = g.round().clamp(0.0, 255.0) as u8;
                data[i + 2] = b.round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    // Panel joint seams.
    let half_seam = spec.seam_width_px as i64 / 2;
    let seam = spec.seam_intensity;
    for c in 1..spec.panel_cols {
        let sx = (c as f64 * panel_w).round() as i64;
        for y in 0..h {
            for dx in -half_seam..(spec.seam_width_px as i64 - half_seam) {
                let x = sx + dx;
                if x >= 0 && (x as u32) < w {
                    let i = idx(x as u32, y);
                    data[i] = seam;
                    data[i + 1] = seam;
                    data[i + 2] = seam;
                }
            }
        }
    }
    for r in 1..spec.panel_rows {
        let sy = (r as f64 * panel_h).round() as i64;
        for dy in -half_seam..(spec.seam_width_px as i64 - half_seam) {
            let y = sy + dy;
            if y >= 0 && (y as u32) < h {
                for x in 0..w {
                    let i = idx(x, y as u32);
                    data[i] = seam;
                    data[i + 1] = seam;
                    data[i + 2] = seam;
                }
            }
        }
    }

    // Stitching patterns: distributed round-robin over panels, placed at a
    // seeded position inside each panel with a safety margin.
    let mut pattern_mask = BinaryMask::new(w, h);
    let (pw, ph) = (spec.pattern_size_px[0], spec.pattern_size_px[1]);
    for p in 0..spec.pattern_count {
        let panel = p % (spec.panel_rows * spec.panel_cols);
        let (pr, pc) = (panel / spec.panel_cols, panel % spec.panel_cols);
        let margin_x = (pw / 2 + spec.seam_width_px + 8) as f64;
        let margin_y = (ph / 2 + spec.seam_width_px + 8) as f64;
        let x0 = pc as f64 * panel_w + margin_x;
        let x1 = (pc + 1) as f64 * panel_w - margin_x - pw as f64;
        let y0 = pr as f64 * panel_h + margin_y;
        let y1 = (pr + 1) as f64 * panel_h - margin_y - ph as f64;
        if x1 <= x0 || y1 <= y0 {
            continue; // panel too small for a pattern
        }
        let px = rng.random_range(x0..x1).round() as u32;
        let py = rng.random_range(y0..y1).round() as u32;
        for y in py..(py + ph).min(h) {
            for x in px..(px + pw).min(w) {
                let i = idx(x, y);
                data[i] = spec.pattern_rgb[0];
                data[i + 1] = spec.pattern_rgb[1];
                data[i + 2] = spec.pattern_rgb[2];
                pattern_mask.set(x, y, true);
            }
        }
    }

    // Cracks: directional random walks, drawn as solid dark disks along the
    // path so each crack is one 8-connected component. The first two go to
    // the middle and bottom-right panels, matching the survey layout.
    let mut crack_mask = BinaryMask::new(w, h);
    let mut skeletons = Vec::new();
    for c in 0..spec.crack_count {
        let panel = match c {
            0 => (spec.panel_rows / 2, spec.panel_cols / 2),
            1 => (spec.panel_rows - 1, spec.panel_cols - 1),
            _ => (rng.random_range(0..spec.panel_rows), rng.random_range(0..spec.panel_cols)),
        };
        let margin = (spec.seam_width_px + spec.crack_width_px + 10) as f64;
        let bx0 = panel.1 as f64 * panel_w + margin;
        let bx1 = (panel.1 + 1) as f64 * panel_w - margin;
        let by0 = panel.0 as f64 * panel_h + margin;
        let by1 = (panel.0 + 1) as f64 * panel_h - margin;

        let mut x = rng.random_range((bx0 + (bx1 - bx0) * 0.25)..(bx0 + (bx1 - bx0) * 0.75));
        let mut y = by0 + (by1 - by0) * rng.random_range(0.1..0.3);
        let base_heading = std::f64::consts::FRAC_PI_2 + rng.random_range(-0.4..0.4);
        let mut heading = base_heading;
        let steps = ((by1 - by0) * 0.8 / 2.0) as usize;
        let radius = spec.crack_width_px as f64 / 2.0;
        let mut skeleton = Vec::new();

        for _ in 0..steps {
            // Stamp a disk at the current position.
            let (cx, cy) = (x.round() as i64, y.round() as i64);
            if cx >= 0 && cy >= 0 && (cx as u32) < w && (cy as u32) < h {
                skeleton.push((cx as u32, cy as u32));
            }
            let r_ceil = radius.ceil() as i64;
            for dy in -r_ceil..=r_ceil {
                for dx in -r_ceil..=r_ceil {
                    if (dx * dx + dy * dy) as f64 > radius * radius + 0.25 {
                        continue;
                    }
                    let (px, py) = (cx + dx, cy + dy);
                    if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                        let i = idx(px as u32, py as u32);
                        data[i] = spec.crack_intensity;
                        data[i + 1] = spec.crack_secondary;
                        data[i + 2] = spec.crack_secondary;
                        crack_mask.set(px as u32, py as u32, true);
                        pattern_mask.set(px as u32, py as u32, false);
                    }
                }
            }
            heading += rng.random_range(-0.25..0.25);
            heading = heading.clamp(base_heading - 0.5, base_heading + 0.5);
            x = (x + 2.0 * heading.cos()).clamp(bx0, bx1);
            y = (y + 2.0 * heading.sin()).clamp(by0, by1);
        }
        skeleton.dedup();
        skeletons.push(skeleton);
    }

    // Multiplicative illumination gradient along x.
    if spec.illumination_gradient != 0.0 {
        let a = spec.illumination_gradient;
        for y in 0..h {
            for x in 0..w {
                let g = 1.0 + a * (2.0 * x as f64 / (w.saturating_sub(1)).max(1) as f64 - 1.0);
                let i = idx(x, y);
                for c in 0..3 {
                    data[i + c] = (data[i + c] as f64 * g).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    let wall = RasterImage::new(w, h, 3, data).expect("wall dims are valid");
    (wall, pattern_mask, crack_mask, skeletons)
}

/// Axis-aligned tile positions covering `span` with the given overlap.
fn tile_positions(span: u32, tile: u32, overlap: f64) -> Vec<u32> {
    if span <= tile {
        return vec![0];
    }
    let step = (tile as f64 * (1.0 - overlap)).max(1.0);
    let count = (((span - tile) as f64) / step).ceil() as u32 + 1;
    (0..count)
        .map(|i| ((i as f64 * step).round() as u32).min(span - tile))
        .collect()
}

fn cut_tiles(wall: &RasterImage, spec: &SynthWallSpec) -> (Vec<RasterImage>, Vec<Homography>) {
    let (tw, th) = (spec.tile_size_px[0].min(wall.width()), spec.tile_size_px[1].min(wall.height()));
    let xs = tile_positions(wall.width(), tw, spec.tile_overlap);
    let ys = tile_positions(wall.height(), th, spec.tile_overlap);
    let mut tiles = Vec::new();
    let mut homographies = Vec::new();
    for &ty in &ys {
        for &tx in &xs {
            let mut data = Vec::with_capacity((tw * th) as usize * 3);
            for y in ty..ty + th {
                for x in tx..tx + tw {
                    data.extend_from_slice(wall.pixel(x, y));
                }
            }
            tiles.push(RasterImage::new(tw, th, 3, data).expect("tile dims"));
            homographies.push(Homography::from_matrix(Matrix3::new(
                1.0, 0.0, tx as f64, 0.0, 1.0, ty as f64, 0.0, 0.0, 1.0,
            )));
        }
    }
    (tiles, homographies)
}

/// Scan of the wall plane (y = 0, normal +y) plus support-frame obstacles:
/// two side posts and a top crossbar standing proud of the wall.
fn scan_cloud(spec: &SynthWallSpec, rng: &mut ChaCha8Rng) -> PointCloud {
    let wall_w = spec.panel_cols as f64 * spec.panel_width_mm / 1000.0;
    let wall_h = spec.panel_rows as f64 * spec.panel_height_mm / 1000.0;
    let noise = Normal::new(0.0, 0.002).unwrap();
    let mut points = Vec::new();
    let step = 0.05;
    let mut x = 0.0;
    while x <= wall_w {
        let mut z = 0.0;
        while z <= wall_h {
            points.push(Point3::new(
                x + noise.sample(rng),
                noise.sample(rng),
                z + noise.sample(rng),
            ));
            z += step;
        }
        x += step;
    }
    // Side posts and crossbar, clearly separated from the wall plane.
    for post_x in [-0.2, wall_w + 0.2] {
        let mut z = 0.0;
        while z <= wall_h {
            for y in [0.1, 0.15, 0.2] {
                points.push(Point3::new(
                    post_x + noise.sample(rng),
                    y + noise.sample(rng),
                    z + noise.sample(rng),
                ));
            }
            z += step;
        }
    }
    let mut bx = -0.2;
    while bx <= wall_w + 0.2 {
        for y in [0.1, 0.15, 0.2] {
            points.push(Point3::new(
                bx + noise.sample(rng),
                y + noise.sample(rng),
                wall_h + 0.25 + noise.sample(rng),
            ));
        }
        bx += step;
    }
    PointCloud::new(points).with_origin(Point3::new(wall_w / 2.0, 3.0, wall_h / 2.0))
}

/// Generates the full synthetic wall: render, tiles with ground-truth
/// homographies, masks, skeletons, and the scan cloud.
pub fn synth_wall(spec: &SynthWallSpec) -> Result<SynthWall, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (wall, pattern_mask, crack_mask, crack_skeletons) = render_wall(spec, &mut rng);
    let (tiles, tile_homographies) = cut_tiles(&wall, spec);
    let cloud = scan_cloud(spec, &mut rng);
    Ok(SynthWall {
        spec: spec.clone(),
        wall,
        tiles,
        tile_homographies,
        pattern_mask,
        crack_mask,
        crack_skeletons,
        cloud,
    })
}
