//! Procedural paired-data synthesis: lit scenes, 3D LUT relighting and
//! flicker, per-frame color-statistics harmonization, and inpainting-based
//! foreground removal.

pub mod dataset;
pub mod harmonize;
pub mod inpaint;
pub mod lut;
pub mod pairs;
pub mod scene;

pub use dataset::{derive_seed, DatasetConfig, Split, StageOneSample};
pub use harmonize::{per_frame_harmonize, per_frame_harmonize_with};
pub use inpaint::inpaint_remove;
pub use lut::{apply_lut, apply_luts_masked, Lut3d};
pub use pairs::{
    make_flicker_video, make_flicker_video_with, make_single_lut_pair, make_single_lut_pair_with, LutConfig,
    PairedSample, PathTag, DEFAULT_FEATHER,
};
pub use scene::{render_scene, Light, RenderedScene, SceneSpec, Trajectory};
