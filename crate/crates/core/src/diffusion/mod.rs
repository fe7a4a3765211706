//! Latent diffusion machinery: codec, schedule, conditioning, denoiser,
//! samplers and training.

pub mod checkpoint;
pub mod codec;
pub mod layout;
pub mod net;
pub mod nn;
pub mod real;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use codec::{decode, encode, encode_matte, encode_with, LatentShape, LatentVideo, DEFAULT_PATCH};
pub use layout::{ChannelGroup, Conditioning, ConditioningLayout, GroupKind};
pub use net::{DenoiserNet, NetConfig};
pub use real::Real;
pub use schedule::NoiseSchedule;
pub use sampler::{add_noise, denoise_step, predict_x0, sample, step_from_epsilon, NoisePredictor, SampleOptions, Sampler};
pub use train::{loss_and_gradient, train_epsilon, Adam, AdamConfig, NoiseDraw, TrainExample};
