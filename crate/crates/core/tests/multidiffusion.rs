use harmovid_core::diffusion::sampler::gaussian;
use harmovid_core::diffusion::{
    decode, sample, Conditioning, LatentShape, LatentVideo, NetConfig, NoisePredictor, NoiseSchedule,
};
use harmovid_core::multidiffusion::{frame_changes, plan_windows, OverlapWeighting, WindowedPredictor};
use harmovid_core::stages::{harmonize, HarmonizerModel, InferenceOptions, MaskCondition};
use harmovid_core::synthesis::{DatasetConfig, StageOneSample};
use harmovid_core::{Result, VideoTensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn latent(shape: LatentShape, seed: u64) -> LatentVideo {
    LatentVideo::new(shape, gaussian(shape.len(), &mut ChaCha8Rng::seed_from_u64(seed))).unwrap()
}

fn cond(shape: LatentShape, seed: u64) -> Conditioning {
    Conditioning {
        input: latent(shape, seed),
        background: None,
        mask: latent(shape.with_channels(1), seed + 1),
    }
}

/// Noise estimate that only looks at each frame on its own.
struct FrameLocal(NoiseSchedule);

impl NoisePredictor for FrameLocal {
    fn schedule(&self) -> &NoiseSchedule {
        &self.0
    }

    fn predict(&self, z_t: &LatentVideo, cond: &Conditioning, t: usize) -> Result<LatentVideo> {
        let k = t as f64 / 100.0;
        let data = z_t
            .data()
            .iter()
            .zip(cond.input.data())
            .map(|(z, c)| k * z - 0.5 * c)
            .collect();
        LatentVideo::new(z_t.shape(), data)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_is_exact_for_frame_local_predictors(
        frames in 1usize..40,
        window in 2usize..20,
        stride_frac in 0.1f64..0.95,
        triangular in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let stride = ((window as f64 * stride_frac) as usize).clamp(1, window - 1);
        let shape = LatentShape { frames, height: 1, width: 2, channels: 3 };
        let weighting = if triangular { OverlapWeighting::Triangular } else { OverlapWeighting::Uniform };
        let inner = FrameLocal(NoiseSchedule::default());
        let fused = WindowedPredictor::new(&inner, frames, window, stride, weighting).unwrap();
        let (z, c) = (latent(shape, seed), cond(shape, seed ^ 1));
        let direct = inner.predict(&z, &c, 33).unwrap();
        let windowed = fused.predict(&z, &c, 33).unwrap();
        for (a, b) in direct.data().iter().zip(windowed.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

fn toy_model() -> HarmonizerModel {
    let config = NetConfig {
        width: 24,
        heads: 2,
        blocks: 2,
        ..Default::default()
    };
    let mut model = HarmonizerModel::new(config, NoiseSchedule::default(), 4, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let jitter = Normal::new(0.0f32, 0.05).unwrap();
    for p in model.net.params_mut() {
        *p += jitter.sample(&mut rng);
    }
    model
}

fn toy_clip(frames: usize) -> StageOneSample {
    let cfg = DatasetConfig {
        count: 1,
        test_count: 0,
        frames,
        height: 16,
        width: 16,
        ..DatasetConfig::default()
    };
    cfg.generate(0).unwrap()
}

fn run(model: &HarmonizerModel, s: &StageOneSample, window: usize) -> VideoTensor {
    let opts = InferenceOptions {
        window,
        ..InferenceOptions::deterministic(5)
    };
    let mask = MaskCondition::Binary(s.mask.clone());
    harmonize(model, &s.real, &s.synthetic_bg, &mask, &opts).unwrap()
}

#[test]
fn short_clips_bypass_windowing() {
    let model = toy_model();
    for frames in [8, 16] {
        let s = toy_clip(frames);
        let mask = MaskCondition::Binary(s.mask.clone());
        let c = model.conditioning(&s.real_on_synthetic().unwrap(), &s.synthetic_bg, &mask).unwrap();
        let shape = c.input.shape();
        let opts = InferenceOptions::deterministic(5);
        let plain = sample(&model.net, &c, shape, &opts.sample).unwrap();
        let fused = WindowedPredictor::new(&model.net, frames, 16, 8, OverlapWeighting::Uniform).unwrap();
        assert_eq!(sample(&fused, &c, shape, &opts.sample).unwrap(), plain);
        assert_eq!(
            run(&model, &s, 16),
            decode(&plain).unwrap().with_frame_rate(s.real.frame_rate())
        );
    }
}

#[test]
fn window_seams_are_no_rougher_than_the_interior() {
    let model = toy_model();
    let s = toy_clip(24);
    let out = run(&model, &s, 16);
    let plan = plan_windows(24, 16, 8).unwrap();
    let seams = plan.seam_transitions();
    let changes = frame_changes(&out);
    let at_seams = seams.iter().map(|&i| changes[i]).fold(0.0, f64::max);
    let inside = changes
        .iter()
        .enumerate()
        .filter(|(i, _)| !seams.contains(i))
        .map(|(_, &c)| c)
        .fold(0.0, f64::max);
    assert!(at_seams <= 1.5 * inside, "seam {at_seams} vs interior {inside}");
}
