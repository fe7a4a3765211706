//! Building blocks for relightable video harmonization with latent
//! diffusion: video containers and compositing, procedural paired-data
//! synthesis, a small space-time diffusion transformer, the deflickering and
//! harmonization models built on it, temporal window fusion, and the
//! evaluation metrics.

pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod multidiffusion;
pub mod stages;
pub mod synthesis;
pub mod video;

pub use error::{Error, Result};
pub use video::{AlphaVideo, Dims, MaskVideo, Matte, VideoTensor};
