//! Python bindings: the main raster, geometry, and pipeline operations.

use nalgebra::Point3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use crackscan::config::PipelineConfig;
use crackscan::crack::{self, Connectivity, Polarity, SauvolaParams};
use crackscan::histoseg;
use crackscan::imaging::{self, BinaryMask, RasterImage};
use crackscan::mission::{self, AStarWeights, GridParams, VoxelGrid};
use crackscan::pointcloud::{self, PointCloud};
use crackscan::stitch::{self, StitchParams};
use crackscan::synth::{self, SynthWallSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn points_from(py_points: Vec<[f64; 3]>) -> Vec<Point3<f64>> {
    py_points.into_iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
}

/// 8-bit raster image with 1 (grayscale) or 3 (RGB) channels, row-major.
#[pyclass(name = "Image", from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: RasterImage,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> PyResult<Self> {
        Ok(Self { inner: RasterImage::new(width, height, channels, data).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: RasterImage::load(path).map_err(value_err)? })
    }

    fn save_png(&self, path: &str) -> PyResult<()> {
        self.inner.save_png(path).map_err(runtime_err)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> u8 {
        self.inner.channels()
    }

    fn data(&self) -> Vec<u8> {
        self.inner.data().to_vec()
    }

    fn pixel(&self, x: u32, y: u32) -> Vec<u8> {
        self.inner.pixel(x, y).to_vec()
    }

    fn to_gray(&self) -> PyResult<Self> {
        Ok(Self { inner: imaging::to_gray(&self.inner).map_err(value_err)? })
    }

    fn red_channel(&self) -> PyResult<Self> {
        Ok(Self { inner: imaging::red_channel(&self.inner).map_err(value_err)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}, {} channel{})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels(),
            if self.inner.channels() == 1 { "" } else { "s" }
        )
    }
}

fn mask_to_image(mask: &BinaryMask) -> PyImage {
    PyImage { inner: mask.to_raster() }
}

fn image_to_mask(img: &PyImage) -> PyResult<BinaryMask> {
    BinaryMask::from_raster(&img.inner).map_err(value_err)
}

/// Sauvola threshold for one pixel: `m * (1 + k * (s / r - 1))`.
#[pyfunction]
fn sauvola_threshold(m: f64, s: f64, k: f64, r: f64) -> f64 {
    crack::sauvola_threshold(m, s, k, r)
}

/// Per-pixel window mean and standard deviation of a grayscale image.
#[pyfunction]
fn local_stats(img: &PyImage, window: u32) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let stats = crack::local_stats(&img.inner, window).map_err(value_err)?;
    Ok((stats.mean, stats.stdev))
}

/// Locally adaptive binarization; returns the mask as a 0/255 image.
#[pyfunction]
#[pyo3(signature = (img, window = 31, k = 0.5, r = 128.0, bright_foreground = false))]
fn binarize_local(
    img: &PyImage,
    window: u32,
    k: f64,
    r: f64,
    bright_foreground: bool,
) -> PyResult<PyImage> {
    let params = SauvolaParams {
        window,
        k,
        r,
        polarity: if bright_foreground { Polarity::BrightForeground } else { Polarity::DarkForeground },
    };
    let mask = crack::binarize_local(&img.inner, &params).map_err(value_err)?;
    Ok(mask_to_image(&mask))
}

/// Global-threshold baseline (dark foreground).
#[pyfunction]
fn binarize_global(img: &PyImage, threshold: f64) -> PyResult<PyImage> {
    let mask = crack::binarize_global(&img.inner, threshold).map_err(value_err)?;
    Ok(mask_to_image(&mask))
}

/// Connected components of a 0/255 mask image after the line-likeness
/// filter; each component is a dict of its geometry.
#[pyfunction]
#[pyo3(signature = (mask, min_area = 30, min_elongation = 3.0))]
fn crack_components(
    py: Python<'_>,
    mask: &PyImage,
    min_area: usize,
    min_elongation: f64,
) -> PyResult<Vec<Py<PyDict>>> {
    let mask = image_to_mask(mask)?;
    let components = crack::connected_components(&mask, Connectivity::Eight);
    let kept = crack::filter_candidates(&components, min_area, min_elongation);
    kept.into_iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("area_px", c.area_px)?;
            d.set_item("bbox", c.bbox.to_vec())?;
            d.set_item("centroid", c.centroid.to_vec())?;
            d.set_item("elongation", c.elongation)?;
            d.set_item("orientation_rad", c.orientation_rad)?;
            Ok(d.unbind())
        })
        .collect()
}

/// 256-bin histogram of a grayscale image.
#[pyfunction]
fn compute_histogram(img: &PyImage) -> PyResult<Vec<u64>> {
    Ok(histoseg::compute_histogram(&img.inner, None).map_err(value_err)?.bins)
}

/// The three dominant peaks of a 256-bin histogram, ascending.
#[pyfunction]
#[pyo3(signature = (bins, smooth_window = 5, min_prominence = 0.05, min_separation = 10))]
fn detect_peaks(
    bins: Vec<u64>,
    smooth_window: usize,
    min_prominence: f64,
    min_separation: usize,
) -> PyResult<(u32, u32, u32)> {
    if bins.len() != 256 {
        return Err(value_err("histogram must have 256 bins"));
    }
    let h = histoseg::Histogram::from_counts(bins);
    let params = histoseg::PeakParams { smooth_window, min_prominence, min_separation };
    let p = histoseg::detect_peaks(&h, &params).map_err(value_err)?;
    Ok((p.i_b, p.i_w, p.i_p))
}

/// Midpoint segmentation thresholds for a peak triple.
#[pyfunction]
fn compute_thresholds(i_b: u32, i_w: u32, i_p: u32) -> PyResult<(f64, f64)> {
    let p = histoseg::PeakSet::new(i_b, i_w, i_p).map_err(value_err)?;
    let t = histoseg::compute_thresholds(&p);
    Ok((t.t1, t.t2))
}

/// Repaints pixels whose red value falls outside (t1, t2) with beta and
/// grays out the rest.
#[pyfunction]
#[pyo3(signature = (img, t1, t2, beta = 255))]
fn remove_patterns(img: &PyImage, t1: f64, t2: f64, beta: u8) -> PyResult<PyImage> {
    let t = histoseg::ThresholdPair { t1, t2 };
    Ok(PyImage { inner: histoseg::remove_patterns(&img.inner, &t, beta).map_err(value_err)? })
}

/// RANSAC plane fit; returns ([a, b, c, d], inlier_indices).
#[pyfunction]
#[pyo3(signature = (points, iters = 500, dist_tol = 0.02, seed = 0))]
fn ransac_plane(
    points: Vec<[f64; 3]>,
    iters: usize,
    dist_tol: f64,
    seed: u64,
) -> PyResult<([f64; 4], Vec<usize>)> {
    let cloud = PointCloud::new(points_from(points));
    let model = pointcloud::ransac_plane(&cloud, iters, dist_tol, seed).map_err(value_err)?;
    Ok((model.coefficients, model.inlier_indices))
}

/// Point-to-point ICP; returns (rotation rows, translation, rms).
#[pyfunction]
#[pyo3(signature = (source, target, max_iter = 50, tol = 1e-9))]
fn icp_register(
    source: Vec<[f64; 3]>,
    target: Vec<[f64; 3]>,
    max_iter: usize,
    tol: f64,
) -> PyResult<([[f64; 3]; 3], [f64; 3], f64)> {
    let src = PointCloud::new(points_from(source));
    let dst = PointCloud::new(points_from(target));
    let result = pointcloud::icp_register(&src, &dst, max_iter, tol).map_err(value_err)?;
    let r = result.transform.rotation;
    let t = result.transform.translation;
    Ok((
        [[r[(0, 0)], r[(0, 1)], r[(0, 2)]], [r[(1, 0)], r[(1, 1)], r[(1, 2)]], [r[(2, 0)], r[(2, 1)], r[(2, 2)]]],
        [t.x, t.y, t.z],
        result.rms,
    ))
}

/// Single-linkage clustering of 3D points; returns index lists.
#[pyfunction]
fn euclidean_cluster(points: Vec<[f64; 3]>, epsilon: f64) -> PyResult<Vec<Vec<usize>>> {
    let cloud = PointCloud::new(points_from(points));
    Ok(pointcloud::euclidean_cluster(&cloud, epsilon).map_err(value_err)?.clusters)
}

/// Counter-clockwise convex hull of 2D points.
#[pyfunction]
fn convex_hull_2d(points: Vec<[f64; 2]>) -> PyResult<Vec<[f64; 2]>> {
    pointcloud::convex_hull_2d(&points).map_err(value_err)
}

/// Centroid-per-voxel downsampling.
#[pyfunction]
fn voxel_downsample(points: Vec<[f64; 3]>, leaf: f64) -> PyResult<Vec<[f64; 3]>> {
    let cloud = PointCloud::new(points_from(points));
    let down = pointcloud::voxel_downsample(&cloud, leaf).map_err(value_err)?;
    Ok(down.points().iter().map(|p| [p.x, p.y, p.z]).collect())
}

/// Weighted A* step cost for one 26-neighborhood move.
#[pyfunction]
#[pyo3(signature = (k, l, m, a1 = 1.0, a2 = 1.0, a3 = 1.0))]
fn step_cost(k: i32, l: i32, m: i32, a1: f64, a2: f64, a3: f64) -> PyResult<f64> {
    mission::step_cost(k, l, m, &AStarWeights { a1, a2, a3 }).map_err(value_err)
}

/// Weighted A* over a dense voxel grid; returns (path, cost). Occupied
/// voxels are given as integer coordinates.
#[pyfunction]
#[pyo3(signature = (dims, occupied, start, goal, weights = (1.0, 1.0, 1.0)))]
fn astar(
    dims: [usize; 3],
    occupied: Vec<[i64; 3]>,
    start: [i64; 3],
    goal: [i64; 3],
    weights: (f64, f64, f64),
) -> PyResult<(Vec<[i64; 3]>, f64)> {
    let mut grid = VoxelGrid::empty(Point3::origin(), 1.0, dims);
    for v in occupied {
        if !grid.in_bounds(v) {
            return Err(value_err(format!("occupied voxel {v:?} out of bounds")));
        }
        grid.set_occupied(v);
    }
    let w = AStarWeights { a1: weights.0, a2: weights.1, a3: weights.2 };
    let path = mission::astar(&grid, start, goal, &w).map_err(value_err)?;
    Ok((path.voxels, path.cost))
}

/// Plans a coverage flight over a planar surface scan: extracts the
/// dominant planes, clusters the residual into obstacles, and returns the
/// waypoint list as dicts.
#[pyfunction]
#[pyo3(signature = (points, scan_origin = None, gsd_mm_per_px = 0.5, overlap = 0.3, resolution = 0.25))]
fn plan_mission(
    py: Python<'_>,
    points: Vec<[f64; 3]>,
    scan_origin: Option<[f64; 3]>,
    gsd_mm_per_px: f64,
    overlap: f64,
    resolution: f64,
) -> PyResult<Vec<Py<PyDict>>> {
    let mut cloud = PointCloud::new(points_from(points));
    if let Some(o) = scan_origin {
        cloud = cloud.with_origin(Point3::new(o[0], o[1], o[2]));
    }
    let (patches, residual) =
        pointcloud::extract_surfaces(&cloud, &Default::default()).map_err(value_err)?;
    if patches.is_empty() {
        return Err(runtime_err("no planar surfaces found"));
    }
    let params = mission::MissionParams {
        gsd_max_mm_per_px: gsd_mm_per_px,
        overlap,
        grid: GridParams { resolution, ..Default::default() },
        ..Default::default()
    };
    let path = mission::plan_mission(&patches, residual.points(), &params).map_err(runtime_err)?;
    path.waypoints
        .iter()
        .map(|w| {
            let d = PyDict::new(py);
            d.set_item("x", w.x)?;
            d.set_item("y", w.y)?;
            d.set_item("z", w.z)?;
            d.set_item("yaw", w.yaw)?;
            d.set_item(
                "kind",
                match w.kind {
                    mission::WaypointKind::Shooting => "shooting",
                    mission::WaypointKind::Intermediate => "intermediate",
                },
            )?;
            Ok(d.unbind())
        })
        .collect()
}

/// Stitches a list of images; returns (mosaic, valid_mask) images.
#[pyfunction]
#[pyo3(signature = (images, seed = 0))]
fn stitch_images(images: Vec<PyImage>, seed: u64) -> PyResult<(PyImage, PyImage)> {
    let rasters: Vec<RasterImage> = images.into_iter().map(|i| i.inner).collect();
    let result = stitch::stitch_images(&rasters, &StitchParams::default(), seed)
        .map_err(runtime_err)?;
    Ok((PyImage { inner: result.mosaic }, mask_to_image(&result.valid_mask)))
}

/// Generated synthetic wall: render, tiles, ground-truth masks, and the
/// scan cloud.
#[pyclass(name = "SynthWall")]
struct PySynthWall {
    #[pyo3(get)]
    wall: PyImage,
    #[pyo3(get)]
    tiles: Vec<PyImage>,
    #[pyo3(get)]
    pattern_mask: PyImage,
    #[pyo3(get)]
    crack_mask: PyImage,
    #[pyo3(get)]
    crack_skeletons: Vec<Vec<(u32, u32)>>,
    #[pyo3(get)]
    cloud: Vec<[f64; 3]>,
}

/// Builds the synthetic panel wall. `spec_json` overrides individual
/// fields of the default wall layout.
#[pyfunction]
#[pyo3(signature = (spec_json = None))]
fn synth_wall(spec_json: Option<&str>) -> PyResult<PySynthWall> {
    let spec: SynthWallSpec = match spec_json {
        Some(json) => serde_json::from_str(json).map_err(value_err)?,
        None => SynthWallSpec::default(),
    };
    let wall = synth::synth_wall(&spec).map_err(value_err)?;
    Ok(PySynthWall {
        wall: PyImage { inner: wall.wall },
        tiles: wall.tiles.into_iter().map(|t| PyImage { inner: t }).collect(),
        pattern_mask: mask_to_image(&wall.pattern_mask),
        crack_mask: mask_to_image(&wall.crack_mask),
        crack_skeletons: wall.crack_skeletons,
        cloud: wall.cloud.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
    })
}

/// Runs the configured pipeline; returns the crack report as a JSON
/// string (or None for plan-only runs).
#[pyfunction]
fn run_pipeline(config_json: &str) -> PyResult<Option<String>> {
    let config = PipelineConfig::from_json(config_json).map_err(value_err)?;
    let output = crackscan::pipeline::run_pipeline(&config).map_err(runtime_err)?;
    match output.report {
        Some(report) => Ok(Some(report.to_json().map_err(runtime_err)?)),
        None => Ok(None),
    }
}

#[pymodule]
fn crackscan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PySynthWall>()?;
    m.add_function(wrap_pyfunction!(sauvola_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(local_stats, m)?)?;
    m.add_function(wrap_pyfunction!(binarize_local, m)?)?;
    m.add_function(wrap_pyfunction!(binarize_global, m)?)?;
    m.add_function(wrap_pyfunction!(crack_components, m)?)?;
    m.add_function(wrap_pyfunction!(compute_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(detect_peaks, m)?)?;
    m.add_function(wrap_pyfunction!(compute_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(remove_patterns, m)?)?;
    m.add_function(wrap_pyfunction!(ransac_plane, m)?)?;
    m.add_function(wrap_pyfunction!(icp_register, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(convex_hull_2d, m)?)?;
    m.add_function(wrap_pyfunction!(voxel_downsample, m)?)?;
    m.add_function(wrap_pyfunction!(step_cost, m)?)?;
    m.add_function(wrap_pyfunction!(astar, m)?)?;
    m.add_function(wrap_pyfunction!(plan_mission, m)?)?;
    m.add_function(wrap_pyfunction!(stitch_images, m)?)?;
    m.add_function(wrap_pyfunction!(synth_wall, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
