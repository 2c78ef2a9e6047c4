//! UAV infrastructure-inspection pipeline.
//!
//! The crate covers the full data path of a survey mission: registering and
//! filtering laser point clouds, extracting planar surfaces, planning a
//! coverage flight path over those surfaces, stitching the captured images
//! into a mosaic, removing stitching patterns by histogram segmentation, and
//! finally detecting crack candidates with locally adaptive thresholding.
//!
//! Each stage is usable on its own; [`pipeline`] wires them together and
//! [`synth`] generates a fully ground-truthed synthetic panel wall for
//! end-to-end evaluation.

pub mod config;
pub mod crack;
pub mod histoseg;
pub mod imaging;
pub mod mission;
pub mod pipeline;
pub mod pointcloud;
pub mod stitch;
pub mod synth;

pub use config::PipelineConfig;
pub use crack::{CrackComponent, CrackReport, SauvolaParams};
pub use imaging::{BinaryMask, IntegralImage, RasterImage};
pub use mission::{AStarWeights, CameraModel, FlightPath, VoxelGrid};
pub use pointcloud::{ClusterSet, PlaneModel, PointCloud, RigidTransform, SurfacePatch};
pub use stitch::{Homography, Keypoint, MatchSet};
pub use synth::{SynthWall, SynthWallSpec};
