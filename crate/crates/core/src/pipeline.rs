//! Pipeline orchestration: runs the survey stages in flowchart order and
//! writes their artifacts.
//!
//! Stage order is stitch, pattern removal, crack detection, optionally
//! preceded by point-cloud processing and mission planning when a scan is
//! configured. Each stage is gated on its inputs, so a pre-stitched mosaic
//! skips stitching and a plan-only run touches no imagery.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::Point3;
use serde::Serialize;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::crack::{
    binarize_local, connected_components, filter_candidates, Connectivity, CrackReport,
};
use crate::histoseg::{compute_histogram, compute_thresholds, detect_peaks, remove_patterns};
use crate::imaging::{red_channel, BinaryMask, RasterImage};
use crate::mission::{export_waypoints, plan_mission, FlightPath};
use crate::pointcloud::{
    euclidean_cluster, extract_surfaces, load_xyz, remove_outliers, voxel_downsample, ClusterSet,
    SurfacePatch,
};
use crate::stitch::stitch_images;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        Self::Stage { stage, message: err.to_string() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Artifacts produced by a pipeline run.
#[derive(Debug, Default)]
pub struct PipelineOutput {
    pub patches: Vec<SurfacePatch>,
    pub obstacles: Option<ClusterSet>,
    pub flight_path: Option<FlightPath>,
    pub waypoints_path: Option<PathBuf>,
    pub mosaic_path: Option<PathBuf>,
    pub mask_path: Option<PathBuf>,
    pub cleaned_path: Option<PathBuf>,
    pub report: Option<CrackReport>,
    pub report_path: Option<PathBuf>,
    pub timings: Vec<StageTiming>,
}

fn list_images(dir: &std::path::Path) -> Result<Vec<PathBuf>, String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("cannot read {}: {e}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("png") | Some("pgm") | Some("ppm")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("no raster images in {}", dir.display()));
    }
    Ok(files)
}

/// Runs all configured stages. Artifacts land in `io.output_dir`; stage
/// timings are collected for the log.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let out_dir = &config.io.output_dir;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut output = PipelineOutput::default();
    let clock = |output: &mut PipelineOutput, stage: &str, start: Instant| {
        output.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    // Geometry stages: cloud -> surfaces -> obstacles -> flight plan.
    if let Some(cloud_path) = &config.io.input_cloud {
        let start = Instant::now();
        let mut cloud = load_xyz(cloud_path).map_err(|e| PipelineError::stage("pointcloud", e))?;
        if let Some(origin) = config.io.scan_origin {
            cloud = cloud.with_origin(Point3::new(origin[0], origin[1], origin[2]));
        }
        let pc = &config.pointcloud;
        if pc.outlier_k > 0 {
            cloud = remove_outliers(&cloud, pc.outlier_k, pc.outlier_alpha)
                .map_err(|e| PipelineError::stage("pointcloud", e))?;
        }
        if pc.voxel_leaf > 0.0 {
            cloud = voxel_downsample(&cloud, pc.voxel_leaf)
                .map_err(|e| PipelineError::stage("pointcloud", e))?;
        }
        let (patches, residual) = extract_surfaces(&cloud, &pc.extraction)
            .map_err(|e| PipelineError::stage("pointcloud", e))?;
        if patches.is_empty() {
            return Err(PipelineError::stage("pointcloud", "no planar surfaces found"));
        }
        let clusters = euclidean_cluster(&residual, pc.cluster_epsilon)
            .map_err(|e| PipelineError::stage("pointcloud", e))?;

        write_json(out_dir.join("surfaces.json"), &patches, "pointcloud")?;
        write_json(out_dir.join("obstacles.json"), &clusters, "pointcloud")?;
        clock(&mut output, "pointcloud", start);

        let start = Instant::now();
        let path = plan_mission(&patches, residual.points(), &config.mission)
            .map_err(|e| PipelineError::stage("mission", e))?;
        let wp_path = out_dir.join("waypoints.json");
        export_waypoints(&path, &wp_path).map_err(|e| PipelineError::stage("mission", e))?;
        clock(&mut output, "mission", start);

        output.patches = patches;
        output.obstacles = Some(clusters);
        output.flight_path = Some(path);
        output.waypoints_path = Some(wp_path);
    }

    // Imaging stages: mosaic -> pattern removal -> crack detection.
    let mosaic_and_mask: Option<(RasterImage, Option<BinaryMask>, String)> =
        if let Some(mosaic_path) = &config.io.input_mosaic {
            let img = RasterImage::load(mosaic_path)
                .map_err(|e| PipelineError::stage("histoseg", e))?;
            let img = if img.channels() == 3 {
                img
            } else {
                let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
                RasterImage::new(img.width(), img.height(), 3, data)
                    .map_err(|e| PipelineError::stage("histoseg", e))?
            };
            let name = mosaic_path.file_name().map(|s| s.to_string_lossy().into_owned());
            Some((img, None, name.unwrap_or_else(|| "mosaic".into())))
        } else if let Some(image_dir) = &config.io.input_images {
            let start = Instant::now();
            let files =
                list_images(image_dir).map_err(|e| PipelineError::stage("stitch", e))?;
            let images: Vec<RasterImage> = files
                .iter()
                .map(RasterImage::load)
                .collect::<Result<_, _>>()
                .map_err(|e| PipelineError::stage("stitch", e))?;
            let result = stitch_images(&images, &config.stitch, config.seed)
                .map_err(|e| PipelineError::stage("stitch", e))?;

            let mosaic_path = out_dir.join("mosaic.png");
            let mask_path = out_dir.join("mosaic_mask.png");
            result
                .mosaic
                .save_png(&mosaic_path)
                .and_then(|_| result.valid_mask.to_raster().save_png(&mask_path))
                .map_err(|e| PipelineError::stage("stitch", e))?;
            #[derive(Serialize)]
            struct PairDump<'a> {
                image_a: usize,
                image_b: usize,
                putative: usize,
                inliers: usize,
                homography: &'a crate::stitch::Homography,
            }
            let dump: Vec<PairDump> = result
                .pairs
                .iter()
                .map(|p| PairDump {
                    image_a: p.image_a,
                    image_b: p.image_b,
                    putative: p.matches.len(),
                    inliers: p.inlier_count(),
                    homography: &p.homography,
                })
                .collect();
            write_json(out_dir.join("homographies.json"), &dump, "stitch")?;
            clock(&mut output, "stitch", start);

            output.mosaic_path = Some(mosaic_path);
            output.mask_path = Some(mask_path);
            Some((result.mosaic, Some(result.valid_mask), "mosaic.png".into()))
        } else {
            None
        };

    if let Some((mosaic, valid_mask, image_name)) = mosaic_and_mask {
        // Pattern removal.
        let start = Instant::now();
        let red = red_channel(&mosaic).map_err(|e| PipelineError::stage("histoseg", e))?;
        let histogram = compute_histogram(&red, valid_mask.as_ref())
            .map_err(|e| PipelineError::stage("histoseg", e))?;
        let peaks = detect_peaks(&histogram, &config.histoseg.peaks)
            .map_err(|e| PipelineError::stage("histoseg", e))?;
        let thresholds = compute_thresholds(&peaks);
        let cleaned = remove_patterns(&mosaic, &thresholds, config.histoseg.beta)
            .map_err(|e| PipelineError::stage("histoseg", e))?;

        let cleaned_path = out_dir.join("cleaned.png");
        cleaned.save_png(&cleaned_path).map_err(|e| PipelineError::stage("histoseg", e))?;
        #[derive(Serialize)]
        struct HistosegDump {
            peaks: crate::histoseg::PeakSet,
            thresholds: crate::histoseg::ThresholdPair,
            histogram: crate::histoseg::Histogram,
        }
        write_json(
            out_dir.join("histoseg.json"),
            &HistosegDump { peaks, thresholds, histogram },
            "histoseg",
        )?;
        clock(&mut output, "histoseg", start);
        output.cleaned_path = Some(cleaned_path);

        // Crack detection.
        let start = Instant::now();
        let mask = binarize_local(&cleaned, &config.crack.sauvola)
            .map_err(|e| PipelineError::stage("crack", e))?;
        let components = connected_components(&mask, Connectivity::Eight);
        let kept = filter_candidates(
            &components,
            config.crack.filter.min_area,
            config.crack.filter.min_elongation,
        );
        let mask_png = out_dir.join("crack_mask.png");
        mask.to_raster().save_png(&mask_png).map_err(|e| PipelineError::stage("crack", e))?;
        if let Some(t) = config.crack.global_threshold {
            let global = crate::crack::binarize_global(&cleaned, t)
                .map_err(|e| PipelineError::stage("crack", e))?;
            global
                .to_raster()
                .save_png(out_dir.join("global_mask.png"))
                .map_err(|e| PipelineError::stage("crack", e))?;
        }
        let report = CrackReport {
            image: image_name,
            params: config.crack.sauvola,
            components: kept,
            mask: Some("crack_mask.png".into()),
        };
        let report_path = out_dir.join("crack_report.json");
        std::fs::write(&report_path, report.to_json().map_err(|e| PipelineError::stage("crack", e))?)
            .map_err(|e| PipelineError::stage("crack", e))?;
        clock(&mut output, "crack", start);

        output.report = Some(report);
        output.report_path = Some(report_path);
    }

    write_json(out_dir.join("timings.json"), &output.timings, "pipeline")?;
    Ok(output)
}

fn write_json<T: Serialize>(
    path: PathBuf,
    value: &T,
    stage: &'static str,
) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| PipelineError::stage(stage, e))?;
    std::fs::write(&path, json).map_err(|e| PipelineError::stage(stage, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_wall, SynthWallSpec};

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("crackscan_pipe_{tag}_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn missing_image_dir_names_the_stitch_stage() {
        let dir = temp_dir("missing");
        let mut cfg = PipelineConfig::default();
        cfg.io.input_images = Some(dir.join("nonexistent"));
        cfg.io.output_dir = dir.join("out");
        match run_pipeline(&cfg) {
            Err(PipelineError::Stage { stage: "stitch", .. }) => {}
            other => panic!("expected stitch stage error, got {other:?}"),
        }
    }

    #[test]
    fn detect_only_run_skips_stitch() {
        let dir = temp_dir("detect_only");
        // A small pre-stitched wall image: 2x2 panels keep the seams (the
        // dark histogram population) while staying fast.
        let spec = SynthWallSpec {
            panel_rows: 2,
            panel_cols: 2,
            pattern_count: 8,
            crack_count: 1,
            seed: 5,
            ..Default::default()
        };
        let wall = synth_wall(&spec).unwrap();
        let mosaic_path = dir.join("wall.png");
        wall.wall.save_png(&mosaic_path).unwrap();

        let mut cfg = PipelineConfig::default();
        cfg.io.input_mosaic = Some(mosaic_path);
        cfg.io.output_dir = dir.join("out");
        let out = run_pipeline(&cfg).unwrap();
        assert!(out.mosaic_path.is_none(), "stitch must be skipped");
        assert!(out.report.is_some());
        assert!(out.timings.iter().all(|t| t.stage != "stitch"));
        assert!(out.report_path.as_ref().unwrap().exists());
        assert!(out.cleaned_path.as_ref().unwrap().exists());
    }

    #[test]
    fn plan_only_run_writes_waypoints() {
        let dir = temp_dir("plan_only");
        let wall = synth_wall(&SynthWallSpec::default()).unwrap();
        let cloud_path = dir.join("scan.xyz");
        crate::pointcloud::save_xyz(&wall.cloud, &cloud_path).unwrap();

        let mut cfg = PipelineConfig::default();
        cfg.io.input_cloud = Some(cloud_path);
        cfg.io.scan_origin = Some([0.9, 3.0, 1.35]);
        cfg.io.output_dir = dir.join("out");
        cfg.pointcloud.extraction.min_inliers = 500;
        cfg.pointcloud.extraction.dist_tol = 0.02;
        cfg.mission.gsd_max_mm_per_px = 0.2;
        cfg.mission.grid =
            crate::mission::GridParams::with_bounds([-2.0, -1.0, -0.5], [4.0, 6.0, 4.5], 0.25, 1);

        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.patches.len(), 1, "one wall plane expected");
        let path = out.flight_path.as_ref().unwrap();
        assert!(path.waypoints.len() > 5);
        assert!(out.waypoints_path.as_ref().unwrap().exists());
        assert!(out.report.is_none());

        let clusters = out.obstacles.as_ref().unwrap();
        assert!(
            clusters.clusters.len() >= 2,
            "frame should cluster into posts/crossbar, got {}",
            clusters.clusters.len()
        );
    }
}
