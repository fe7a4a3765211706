//! Dual-path harmonization model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::training::{MaskPolicy, TrainRecipe};
use super::{run_inference, InferenceOptions};
use crate::diffusion::{
    decode, encode_matte, encode_with, Conditioning, ConditioningLayout, DenoiserNet, LatentShape, NetConfig,
    NoiseSchedule, TrainExample,
};
use crate::error::{Error, Result};
use crate::synthesis::{derive_seed, PathTag, StageOneSample};
use crate::video::{composite, AlphaVideo, Dims, MaskVideo, Matte, VideoTensor};

const BATCH_STREAM: u64 = 0xBA7C;

/// The foreground matte fed to the harmonizer.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskCondition {
    Binary(MaskVideo),
    Alpha(AlphaVideo),
}

impl MaskCondition {
    pub fn is_binary(&self) -> bool {
        match self {
            MaskCondition::Binary(_) => true,
            MaskCondition::Alpha(a) => a.is_binary(),
        }
    }

    /// True when some weight lies strictly between 0 and 1.
    pub fn is_feathered(&self) -> bool {
        match self {
            MaskCondition::Binary(_) => false,
            MaskCondition::Alpha(a) => a.data().iter().any(|&v| v > 0.0 && v < 1.0),
        }
    }

    /// Binary mask (alpha thresholded at 0.5).
    pub fn binary(&self) -> MaskVideo {
        match self {
            MaskCondition::Binary(m) => m.clone(),
            MaskCondition::Alpha(a) => a.threshold(),
        }
    }
}

impl Matte for MaskCondition {
    fn dims(&self) -> Dims {
        match self {
            MaskCondition::Binary(m) => m.dims(),
            MaskCondition::Alpha(a) => a.dims(),
        }
    }

    fn weight(&self, pixel: usize) -> f32 {
        match self {
            MaskCondition::Binary(m) => m.weight(pixel),
            MaskCondition::Alpha(a) => a.weight(pixel),
        }
    }
}

/// One harmonizer training sample. The constructor enforces the mask policy,
/// so a sample with the wrong kind of matte for its path cannot exist.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    path: PathTag,
    policy: MaskPolicy,
    input: VideoTensor,
    background: VideoTensor,
    target: VideoTensor,
    condition: MaskCondition,
}

impl PathSample {
    pub fn new(
        path: PathTag,
        policy: MaskPolicy,
        input: VideoTensor,
        background: VideoTensor,
        target: VideoTensor,
        condition: MaskCondition,
    ) -> Result<Self> {
        input.dims().ensure_same(&background.dims())?;
        input.dims().ensure_same(&target.dims())?;
        input.dims().ensure_same(&condition.dims())?;
        let wants_alpha = path == PathTag::SynthToReal && policy == MaskPolicy::Asymmetric;
        if wants_alpha && !condition.is_feathered() {
            return Err(Error::MaskPolicy(format!(
                "{} samples need a feathered alpha under the {policy:?} policy",
                path.as_str()
            )));
        }
        if !wants_alpha && !condition.is_binary() {
            return Err(Error::MaskPolicy(format!(
                "{} samples need a binary mask under the {policy:?} policy",
                path.as_str()
            )));
        }
        Ok(Self {
            path,
            policy,
            input,
            background,
            target,
            condition,
        })
    }

    /// Real foreground over the synthetic background; `target` is the
    /// (deflickered) Stage-1 video.
    pub fn real_to_synth(sample: &StageOneSample, target: &VideoTensor, policy: MaskPolicy) -> Result<Self> {
        let condition = MaskCondition::Binary(sample.mask.clone());
        Self::new(
            PathTag::RealToSynth,
            policy,
            composite(&sample.real, &sample.synthetic_bg, &condition)?,
            sample.synthetic_bg.clone(),
            target.clone(),
            condition,
        )
    }

    /// Synthetic foreground over the inpainted real background; the target is
    /// the real video.
    pub fn synth_to_real(sample: &StageOneSample, synthetic: &VideoTensor, policy: MaskPolicy) -> Result<Self> {
        let condition = match policy {
            MaskPolicy::Asymmetric => MaskCondition::Alpha(sample.alpha.clone()),
            MaskPolicy::BinaryOnly => MaskCondition::Binary(sample.mask.clone()),
        };
        Self::new(
            PathTag::SynthToReal,
            policy,
            composite(synthetic, &sample.inpainted_bg, &condition)?,
            sample.inpainted_bg.clone(),
            sample.real.clone(),
            condition,
        )
    }

    pub fn path(&self) -> PathTag {
        self.path
    }

    pub fn policy(&self) -> MaskPolicy {
        self.policy
    }

    pub fn input(&self) -> &VideoTensor {
        &self.input
    }

    pub fn background(&self) -> &VideoTensor {
        &self.background
    }

    pub fn target(&self) -> &VideoTensor {
        &self.target
    }

    pub fn condition(&self) -> &MaskCondition {
        &self.condition
    }

    pub fn example(&self, patch: usize) -> Result<TrainExample> {
        Ok(TrainExample {
            target: encode_with(&self.target, patch)?,
            cond: Conditioning {
                input: encode_with(&self.input, patch)?,
                background: Some(encode_with(&self.background, patch)?),
                mask: encode_matte(&self.condition, patch)?,
            },
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarmonizationDataset {
    pub samples: Vec<PathSample>,
}

impl HarmonizationDataset {
    pub fn count(&self, path: PathTag) -> usize {
        self.samples.iter().filter(|s| s.path == path).count()
    }

    fn of(&self, path: PathTag) -> Vec<&PathSample> {
        self.samples.iter().filter(|s| s.path == path).collect()
    }
}

/// Path of the `k`-th sample drawn under `mix`: a low-discrepancy sequence
/// whose running share of synthetic-to-real samples tracks `mix`, which is
/// strict alternation at 0.5.
pub fn path_for(k: usize, mix: f64) -> PathTag {
    if ((k + 1) as f64 * mix).floor() > (k as f64 * mix).floor() {
        PathTag::SynthToReal
    } else {
        PathTag::RealToSynth
    }
}

/// The samples of training step `step`. Paths follow [`path_for`]; the sample
/// within a path is drawn uniformly from a generator keyed on `seed` and
/// `step`.
pub fn build_harmonization_batch<'a>(
    dataset: &'a HarmonizationDataset,
    recipe: &TrainRecipe,
    step: usize,
    seed: u64,
) -> Result<Vec<&'a PathSample>> {
    recipe.validate()?;
    let r2s = dataset.of(PathTag::RealToSynth);
    let s2r = dataset.of(PathTag::SynthToReal);
    if recipe.path_mix < 1.0 && r2s.is_empty() {
        return Err(Error::MissingPath("real_to_synth"));
    }
    if recipe.path_mix > 0.0 && s2r.is_empty() {
        return Err(Error::MissingPath("synth_to_real"));
    }
    if let Some(s) = dataset.samples.iter().find(|s| s.policy != recipe.mask_policy) {
        return Err(Error::MaskPolicy(format!(
            "dataset built under {:?}, recipe asks for {:?}",
            s.policy, recipe.mask_policy
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, BATCH_STREAM, step as u64));
    Ok((0..recipe.batch_size)
        .map(|i| {
            let pool = match path_for(step * recipe.batch_size + i, recipe.path_mix) {
                PathTag::RealToSynth => &r2s,
                PathTag::SynthToReal => &s2r,
            };
            pool[rng.gen_range(0..pool.len())]
        })
        .collect())
}

/// Denoiser over `[noisy target, composite, background, mask]`.
#[derive(Clone, Debug)]
pub struct HarmonizerModel {
    pub net: DenoiserNet<f32>,
    pub patch: usize,
}

impl HarmonizerModel {
    pub fn new(config: NetConfig, schedule: NoiseSchedule, patch: usize, seed: u64) -> Result<Self> {
        let layout = ConditioningLayout::harmonizer(3 * patch * patch);
        Self::from_net(DenoiserNet::new(config, layout, schedule, seed)?, patch)
    }

    pub fn from_net(net: DenoiserNet<f32>, patch: usize) -> Result<Self> {
        let expected = ConditioningLayout::harmonizer(3 * patch * patch);
        if net.layout() != &expected {
            return Err(Error::Layout(format!(
                "harmonizer needs {expected:?}, checkpoint has {:?}",
                net.layout()
            )));
        }
        Ok(Self { net, patch })
    }

    pub fn conditioning(
        &self,
        composite: &VideoTensor,
        background: &VideoTensor,
        mask: &MaskCondition,
    ) -> Result<Conditioning> {
        composite.dims().ensure_same(&background.dims())?;
        composite.dims().ensure_same(&mask.dims())?;
        Ok(Conditioning {
            input: encode_with(composite, self.patch)?,
            background: Some(encode_with(background, self.patch)?),
            mask: encode_matte(mask, self.patch)?,
        })
    }

    pub fn example(&self, sample: &PathSample) -> Result<TrainExample> {
        sample.example(self.patch)
    }
}

/// Composites `fg` over `bg` with `mask` and samples the harmonized video.
pub fn harmonize(
    model: &HarmonizerModel,
    fg: &VideoTensor,
    bg: &VideoTensor,
    mask: &MaskCondition,
    opts: &InferenceOptions,
) -> Result<VideoTensor> {
    let input = composite(fg, bg, mask)?;
    let cond = model.conditioning(&input, bg, mask)?;
    let shape = LatentShape::for_video(fg.dims(), model.patch)?;
    let latent = run_inference(&model.net, &cond, shape, opts)?;
    Ok(decode(&latent)?.with_frame_rate(fg.frame_rate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::DatasetConfig;

    fn dataset(policy: MaskPolicy) -> HarmonizationDataset {
        let cfg = DatasetConfig {
            count: 2,
            test_count: 0,
            frames: 4,
            ..DatasetConfig::default()
        };
        let mut samples = Vec::new();
        for i in 0..cfg.count {
            let s = cfg.generate(i).unwrap();
            samples.push(PathSample::real_to_synth(&s, &s.stage1, policy).unwrap());
            samples.push(PathSample::synth_to_real(&s, &s.stage1, policy).unwrap());
        }
        HarmonizationDataset { samples }
    }

    fn recipe(mix: f64) -> TrainRecipe {
        TrainRecipe {
            batch_size: 6,
            path_mix: mix,
            ..TrainRecipe::default()
        }
    }

    #[test]
    fn mix_one_draws_only_synth_to_real() {
        let ds = dataset(MaskPolicy::Asymmetric);
        for step in 0..5 {
            let batch = build_harmonization_batch(&ds, &recipe(1.0), step, 3).unwrap();
            assert!(batch.iter().all(|s| s.path() == PathTag::SynthToReal));
        }
    }

    #[test]
    fn half_mix_alternates() {
        let paths: Vec<_> = (0..6).map(|k| path_for(k, 0.5)).collect();
        assert!(paths.windows(2).all(|w| w[0] != w[1]));
        let share = (0..1000).filter(|&k| path_for(k, 0.3) == PathTag::SynthToReal).count();
        assert_eq!(share, 300);
    }

    #[test]
    fn mask_contract_holds_in_batches() {
        let ds = dataset(MaskPolicy::Asymmetric);
        for step in 0..5 {
            for s in build_harmonization_batch(&ds, &recipe(0.5), step, 1).unwrap() {
                match s.path() {
                    PathTag::RealToSynth => assert!(s.condition().is_binary()),
                    PathTag::SynthToReal => assert!(s.condition().is_feathered()),
                }
            }
        }
    }

    #[test]
    fn batches_are_seeded() {
        let ds = dataset(MaskPolicy::Asymmetric);
        let a = build_harmonization_batch(&ds, &recipe(0.5), 4, 11).unwrap();
        let b = build_harmonization_batch(&ds, &recipe(0.5), 4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_path_is_an_error() {
        let mut ds = dataset(MaskPolicy::Asymmetric);
        ds.samples.retain(|s| s.path() == PathTag::RealToSynth);
        assert!(matches!(
            build_harmonization_batch(&ds, &recipe(0.5), 0, 0),
            Err(Error::MissingPath("synth_to_real"))
        ));
        assert!(build_harmonization_batch(&ds, &recipe(0.0), 0, 0).is_ok());
    }

    #[test]
    fn constructor_rejects_wrong_matte() {
        let cfg = DatasetConfig {
            count: 1,
            test_count: 0,
            frames: 2,
            ..DatasetConfig::default()
        };
        let s = cfg.generate(0).unwrap();
        let mk = |path, policy, cond| {
            PathSample::new(path, policy, s.real.clone(), s.real.clone(), s.real.clone(), cond)
        };
        let alpha = MaskCondition::Alpha(s.alpha.clone());
        let binary = MaskCondition::Binary(s.mask.clone());
        assert!(mk(PathTag::RealToSynth, MaskPolicy::Asymmetric, alpha.clone()).is_err());
        assert!(mk(PathTag::SynthToReal, MaskPolicy::Asymmetric, binary.clone()).is_err());
        assert!(mk(PathTag::SynthToReal, MaskPolicy::BinaryOnly, alpha).is_err());
        assert!(mk(PathTag::SynthToReal, MaskPolicy::BinaryOnly, binary).is_ok());
    }

    #[test]
    fn binary_only_dataset_rejected_by_asymmetric_recipe() {
        let ds = dataset(MaskPolicy::BinaryOnly);
        assert!(build_harmonization_batch(&ds, &recipe(0.5), 0, 0).is_err());
    }
}
