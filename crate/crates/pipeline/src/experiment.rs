//! The pipeline stages on in-memory data. The CLI wraps these with frame IO.

use anyhow::{bail, Result};
use harmovid_core::metrics::{flicker_score, frame_similarity_with, motion_preservation, psnr, rmse, ssim};
use harmovid_core::stages::{
    build_deflicker_pair, build_harmonization_batch, classical_deflicker, deflicker, harmonize, run_training,
    DeflickerModel, HarmonizationDataset, HarmonizerModel, MaskCondition, MaskPolicy, PathSample, TrainRecipe,
};
use harmovid_core::synthesis::pairs::make_flicker_video_with;
use harmovid_core::synthesis::{PairedSample, PathTag, StageOneSample};
use harmovid_core::video::{composite, VideoTensor};
use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

/// Generated scenes split into training and held-out parts.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<StageOneSample>,
    pub test: Vec<StageOneSample>,
}

pub fn generate_corpus(cfg: &PipelineConfig) -> Result<Corpus> {
    let d = &cfg.dataset;
    let mut train = Vec::with_capacity(d.count);
    let mut test = Vec::with_capacity(d.test_count);
    for i in 0..d.total() {
        let sample = d.generate(i)?;
        if i < d.count {
            train.push(sample);
        } else {
            test.push(sample);
        }
    }
    Ok(Corpus { train, test })
}

fn log_progress(name: &'static str, total: usize) -> impl FnMut(usize, f64) {
    let every = (total / 10).max(1);
    move |step, loss| {
        if (step + 1) % every == 0 || step + 1 == total {
            info!("{name} step {}/{total} loss {loss:.5}", step + 1);
        }
    }
}

/// Trains the deflicker model on real clips with freshly drawn per-frame LUT
/// flicker on their foregrounds.
pub fn train_deflicker(cfg: &PipelineConfig, train: &[StageOneSample]) -> Result<(DeflickerModel, Vec<f64>)> {
    if train.is_empty() {
        bail!("no training samples");
    }
    let mut model = DeflickerModel::new(cfg.net.clone(), cfg.schedule.clone(), cfg.patch, cfg.deflicker_init_seed())?;
    let recipe = &cfg.deflicker;
    let (patch, lut) = (cfg.patch, cfg.dataset.flicker_lut);
    let losses = run_training(
        &mut model.net,
        recipe,
        |_, rng| {
            (0..recipe.batch_size)
                .map(|_| {
                    let s = &train[rng.gen_range(0..train.len())];
                    let (flicker, _) = make_flicker_video_with(&s.real, &s.mask, rng.gen(), lut)?;
                    build_deflicker_pair(&s.real, &flicker, &s.mask)?.example(patch)
                })
                .collect()
        },
        log_progress("deflicker", recipe.iterations),
    )?;
    Ok((model, losses))
}

/// Deflickers each sample's Stage-1 video.
pub fn refine(cfg: &PipelineConfig, model: &DeflickerModel, samples: &[StageOneSample]) -> Result<Vec<VideoTensor>> {
    samples
        .iter()
        .map(|s| Ok(deflicker(model, &s.stage1, &s.mask, &cfg.inference)?))
        .collect()
}

/// Which harmonizer variant to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonizerVariant {
    pub single_path: Option<PathTag>,
    pub policy: MaskPolicy,
    /// Use deflickered Stage-1 videos (otherwise the raw ones).
    pub stage2: bool,
}

impl HarmonizerVariant {
    pub const DUAL: Self = Self {
        single_path: None,
        policy: MaskPolicy::Asymmetric,
        stage2: true,
    };

    pub fn name(&self) -> String {
        let mut name = match self.single_path {
            None => "dual".to_string(),
            Some(p) => format!("only_{}", p.as_str()),
        };
        if self.policy == MaskPolicy::BinaryOnly {
            name.push_str("_binary");
        }
        if !self.stage2 {
            name.push_str("_no_stage2");
        }
        name
    }

    /// The configured recipe with this variant's path mix and mask policy.
    pub fn recipe(&self, base: &TrainRecipe) -> TrainRecipe {
        let mut r = base.clone();
        r.mask_policy = self.policy;
        match self.single_path {
            Some(PathTag::RealToSynth) => r.path_mix = 0.0,
            Some(PathTag::SynthToReal) => r.path_mix = 1.0,
            None => {}
        }
        r
    }
}

/// Builds both paths from each training scene. `synthetic[i]` is the
/// synthetic video of scene `i` (deflickered or raw Stage-1).
pub fn harmonization_dataset(
    train: &[StageOneSample],
    synthetic: &[VideoTensor],
    variant: HarmonizerVariant,
) -> Result<HarmonizationDataset> {
    if train.len() != synthetic.len() {
        bail!("{} scenes but {} synthetic videos", train.len(), synthetic.len());
    }
    let mut samples = Vec::new();
    for (s, syn) in train.iter().zip(synthetic) {
        if variant.single_path != Some(PathTag::SynthToReal) {
            samples.push(PathSample::real_to_synth(s, syn, variant.policy)?);
        }
        if variant.single_path != Some(PathTag::RealToSynth) {
            samples.push(PathSample::synth_to_real(s, syn, variant.policy)?);
        }
    }
    Ok(HarmonizationDataset { samples })
}

pub fn train_harmonizer(
    cfg: &PipelineConfig,
    dataset: &HarmonizationDataset,
    recipe: &TrainRecipe,
) -> Result<(HarmonizerModel, Vec<f64>)> {
    let mut model =
        HarmonizerModel::new(cfg.net.clone(), cfg.schedule.clone(), cfg.patch, cfg.harmonizer_init_seed())?;
    let patch = cfg.patch;
    let losses = run_training(
        &mut model.net,
        recipe,
        |step, _| {
            build_harmonization_batch(dataset, recipe, step, recipe.seed)?
                .into_iter()
                .map(|s| s.example(patch))
                .collect()
        },
        log_progress("harmonizer", recipe.iterations),
    )?;
    Ok((model, losses))
}

/// Harmonizes an evaluation pair, conditioning on the matte the policy uses
/// for synthetic-to-real samples.
pub fn harmonize_pair(
    cfg: &PipelineConfig,
    model: &HarmonizerModel,
    pair: &PairedSample,
    policy: MaskPolicy,
) -> Result<VideoTensor> {
    let mask = match policy {
        MaskPolicy::Asymmetric => MaskCondition::Alpha(pair.alpha.clone()),
        MaskPolicy::BinaryOnly => MaskCondition::Binary(pair.mask.clone()),
    };
    Ok(harmonize(model, &pair.input_composite, &pair.background, &mask, &cfg.inference)?)
}

/// Harmonizes a held-out scene's real foreground onto its synthetic
/// background. Returns the output and the naive composite.
pub fn harmonize_real_on_synthetic(
    cfg: &PipelineConfig,
    model: &HarmonizerModel,
    sample: &StageOneSample,
) -> Result<(VideoTensor, VideoTensor)> {
    let mask = MaskCondition::Binary(sample.mask.clone());
    let out = harmonize(model, &sample.real, &sample.synthetic_bg, &mask, &cfg.inference)?;
    Ok((out, composite(&sample.real, &sample.synthetic_bg, &sample.mask)?))
}

/// Means over a held-out set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub frame_sim: f64,
}

impl PairedSummary {
    pub fn accumulate(items: &[(VideoTensor, VideoTensor)], embed_seed: u64) -> Result<Self> {
        let n = items.len() as f64;
        let mut s = Self::default();
        for (pred, reference) in items {
            s.psnr += psnr(pred, reference)? / n;
            s.ssim += ssim(pred, reference)? / n;
            s.rmse += rmse(pred, reference)? / n;
            s.frame_sim += frame_similarity_with(pred, embed_seed)? / n;
        }
        Ok(s)
    }
}

/// Deflicker comparison on one flickering clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeflickerComparison {
    pub frame_sim_input: f64,
    pub frame_sim_learned: f64,
    pub frame_sim_classical: f64,
    /// Flow discrepancy against the flickering input over its foreground.
    pub motion_pres_learned: f64,
    pub motion_pres_classical: f64,
    pub flicker_input: f64,
    pub flicker_learned: f64,
}

pub fn compare_deflicker(
    cfg: &PipelineConfig,
    model: &DeflickerModel,
    sample: &StageOneSample,
    flickering: &VideoTensor,
) -> Result<DeflickerComparison> {
    let learned = deflicker(model, flickering, &sample.mask, &cfg.inference)?;
    let classical = classical_deflicker(flickering, &sample.mask, cfg.classical_window)?;
    let seed = cfg.metrics.embed_seed;
    Ok(DeflickerComparison {
        frame_sim_input: frame_similarity_with(flickering, seed)?,
        frame_sim_learned: frame_similarity_with(&learned, seed)?,
        frame_sim_classical: frame_similarity_with(&classical, seed)?,
        motion_pres_learned: motion_preservation(&learned, flickering, Some(&sample.mask))?,
        motion_pres_classical: motion_preservation(&classical, flickering, Some(&sample.mask))?,
        flicker_input: flicker_score(flickering, &sample.mask)?,
        flicker_learned: flicker_score(&learned, &sample.mask)?,
    })
}
