//! Evaluation metrics: paired quality scores, temporal consistency, optical
//! flow, and boundary sharpness.

pub mod boundary;
pub mod flow;
pub mod paired;
pub mod plane;
pub mod report;
pub mod temporal;

pub use boundary::{boundary_quality, BoundaryScores};
pub use flow::{estimate_flow, estimate_video_flow, motion_preservation, FlowField};
pub use paired::{perceptual_dist, psnr, rmse, ssim};
pub use plane::Plane;
pub use report::{MetricConfig, MetricReport, MetricValue};
pub use temporal::{flicker_score, frame_similarity, frame_similarity_with, FrameEmbedder};
