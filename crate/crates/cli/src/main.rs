//! Command-line front end for the inspection pipeline.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 when a
//! pipeline stage fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crackscan::config::PipelineConfig;
use crackscan::pipeline::{run_pipeline, PipelineError};
use crackscan::stitch::stitch_images;
use crackscan::synth::{synth_wall, SynthWallSpec};

#[derive(Parser)]
#[command(name = "crackscan", version, about = "UAV surface-inspection pipeline: coverage planning, image stitching, and crack detection")]
struct Cli {
    /// Pipeline configuration file (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel wall with full ground truth.
    SynthWall {
        /// Wall specification file (JSON); defaults reproduce the 3x3
        /// panel survey wall.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Extract surfaces from a point cloud and plan the coverage flight.
    Plan {
        /// ASCII XYZ scan (overrides io.input_cloud).
        #[arg(long)]
        cloud: Option<PathBuf>,
    },
    /// Stitch a directory of survey images into a mosaic.
    Stitch {
        /// Image directory (overrides io.input_images).
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Detect cracks on a pre-stitched mosaic.
    Detect {
        /// Mosaic raster (overrides io.input_mosaic).
        #[arg(long)]
        mosaic: Option<PathBuf>,
    },
    /// Run every configured stage in order.
    Pipeline,
}

enum AppError {
    Config(String),
    Stage(String),
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(msg) => AppError::Config(msg),
            PipelineError::Stage { .. } => AppError::Stage(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, AppError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| AppError::Config(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.output {
        config.io.output_dir = out.clone();
    }
    Ok(config)
}

fn cmd_synth_wall(config: &PipelineConfig, spec_path: Option<&PathBuf>, seed: Option<u64>) -> Result<(), AppError> {
    let mut spec = match spec_path {
        Some(path) => {
            let json = std::fs::read_to_string(path)
                .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SynthWallSpec>(&json)
                .map_err(|e| AppError::Config(format!("bad wall spec: {e}")))?
        }
        None => SynthWallSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let wall = synth_wall(&spec).map_err(|e| AppError::Config(e.to_string()))?;

    let out = &config.io.output_dir;
    let tiles_dir = out.join("tiles");
    let truth_dir = out.join("truth");
    std::fs::create_dir_all(&tiles_dir)
        .and_then(|_| std::fs::create_dir_all(&truth_dir))
        .map_err(|e| AppError::Stage(format!("cannot create output dirs: {e}")))?;

    let save = |r: Result<(), crackscan::imaging::ImageError>| {
        r.map_err(|e| AppError::Stage(format!("write failed: {e}")))
    };
    save(wall.wall.save_png(out.join("wall.png")))?;
    for (i, tile) in wall.tiles.iter().enumerate() {
        save(tile.save_png(tiles_dir.join(format!("tile_{i:03}.png"))))?;
    }
    save(wall.pattern_mask.to_raster().save_png(truth_dir.join("pattern_mask.png")))?;
    save(wall.crack_mask.to_raster().save_png(truth_dir.join("crack_mask.png")))?;
    crackscan::pointcloud::save_xyz(&wall.cloud, out.join("scan.xyz"))
        .map_err(|e| AppError::Stage(format!("write failed: {e}")))?;

    let dump = |name: &str, json: String| -> Result<(), AppError> {
        std::fs::write(truth_dir.join(name), json)
            .map_err(|e| AppError::Stage(format!("write failed: {e}")))
    };
    dump("homographies.json", serde_json::to_string_pretty(&wall.tile_homographies).unwrap())?;
    dump("skeletons.json", serde_json::to_string_pretty(&wall.crack_skeletons).unwrap())?;
    std::fs::write(out.join("wall_spec.json"), serde_json::to_string_pretty(&spec).unwrap())
        .map_err(|e| AppError::Stage(format!("write failed: {e}")))?;

    println!(
        "synth-wall: {} tiles, {} pattern px, {} crack px -> {}",
        wall.tiles.len(),
        wall.pattern_mask.count_set(),
        wall.crack_mask.count_set(),
        out.display()
    );
    Ok(())
}

fn cmd_stitch(config: &PipelineConfig) -> Result<(), AppError> {
    let dir = config
        .io
        .input_images
        .as_ref()
        .ok_or_else(|| AppError::Config("stitch needs io.input_images (or --images)".into()))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| AppError::Stage(format!("stage stitch failed: cannot read {}: {e}", dir.display())))?
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
        return Err(AppError::Stage(format!("stage stitch failed: no images in {}", dir.display())));
    }
    let images: Vec<crackscan::RasterImage> = files
        .iter()
        .map(crackscan::RasterImage::load)
        .collect::<Result<_, _>>()
        .map_err(|e| AppError::Stage(format!("stage stitch failed: {e}")))?;

    let result = stitch_images(&images, &config.stitch, config.seed)
        .map_err(|e| AppError::Stage(format!("stage stitch failed: {e}")))?;

    let out = &config.io.output_dir;
    std::fs::create_dir_all(out).map_err(|e| AppError::Stage(format!("stage stitch failed: {e}")))?;
    result
        .mosaic
        .save_png(out.join("mosaic.png"))
        .and_then(|_| result.valid_mask.to_raster().save_png(out.join("mosaic_mask.png")))
        .map_err(|e| AppError::Stage(format!("stage stitch failed: {e}")))?;
    println!(
        "stitch: {} images, reference {}, {} verified pairs -> {}",
        images.len(),
        result.reference,
        result.pairs.len(),
        out.join("mosaic.png").display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mut config = load_config(&cli)?;

    if cli.dump_config {
        println!("{}", config.to_json());
        return Ok(());
    }

    let command = match cli.command {
        Some(c) => c,
        None => {
            return Err(AppError::Config(
                "no subcommand given; try synth-wall, plan, stitch, detect, or pipeline".into(),
            ))
        }
    };

    match command {
        Command::SynthWall { spec } => cmd_synth_wall(&config, spec.as_ref(), cli.seed),
        Command::Plan { cloud } => {
            if let Some(cloud) = cloud {
                config.io.input_cloud = Some(cloud);
            }
            if config.io.input_cloud.is_none() {
                return Err(AppError::Config("plan needs io.input_cloud (or --cloud)".into()));
            }
            // Planning only: detach the imaging inputs.
            config.io.input_images = None;
            config.io.input_mosaic = None;
            let out = run_pipeline(&config)?;
            let path = out.flight_path.expect("plan produces a path");
            println!(
                "plan: {} patches, {} waypoints, total cost {:.3} -> {}",
                out.patches.len(),
                path.waypoints.len(),
                path.total_cost,
                out.waypoints_path.expect("written").display()
            );
            Ok(())
        }
        Command::Stitch { images } => {
            if let Some(images) = images {
                config.io.input_images = Some(images);
            }
            cmd_stitch(&config)
        }
        Command::Detect { mosaic } => {
            if let Some(mosaic) = mosaic {
                config.io.input_mosaic = Some(mosaic);
            }
            if config.io.input_mosaic.is_none() {
                return Err(AppError::Config("detect needs io.input_mosaic (or --mosaic)".into()));
            }
            config.io.input_images = None;
            config.io.input_cloud = None;
            let out = run_pipeline(&config)?;
            let report = out.report.expect("detect produces a report");
            println!(
                "detect: {} crack candidates -> {}",
                report.components.len(),
                out.report_path.expect("written").display()
            );
            Ok(())
        }
        Command::Pipeline => {
            let out = run_pipeline(&config)?;
            for t in &out.timings {
                println!("stage {:<10} {:8.3} s", t.stage, t.seconds);
            }
            if let Some(report) = &out.report {
                println!("pipeline: {} crack candidates", report.components.len());
            }
            if let Some(path) = &out.flight_path {
                println!("pipeline: {} waypoints planned", path.waypoints.len());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Stage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}
