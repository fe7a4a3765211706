//! Subcommands operating on an output root.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context as _, Result};
use harmovid_core::diffusion::checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, FORMAT_VERSION};
use harmovid_core::diffusion::ConditioningLayout;
use harmovid_core::metrics::{frame_similarity_with, MetricReport};
use harmovid_core::stages::{harmonize, DeflickerModel, HarmonizerModel, MaskCondition};
use harmovid_core::synthesis::{PairedSample, PathTag, SceneSpec, Split, StageOneSample};
use harmovid_core::video::{MaskVideo, VideoTensor};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::experiment::{self, HarmonizerVariant};
use crate::io::{read_alpha, read_mask, read_video, write_alpha, write_mask, write_video};
use crate::manifest::{self, artifact, sha256_hex, RunManifest};

pub const DATA_DIR: &str = "data";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_DIR: &str = "reports";
pub const LOSS_FILE: &str = "loss.csv";
pub const SAMPLE_FILE: &str = "sample.json";

/// A loaded config bound to an output root.
#[derive(Clone, Debug)]
pub struct Context {
    pub root: PathBuf,
    pub config: PipelineConfig,
    /// The config file as written by the user.
    pub config_text: String,
}

impl Context {
    pub fn new(root: impl Into<PathBuf>, config: PipelineConfig, config_text: String) -> Self {
        Self {
            root: root.into(),
            config: config.resolved(),
            config_text,
        }
    }

    /// Hash of the resolved config, so seed overrides change it.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.config).expect("config serializes").as_bytes())
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    fn seeds(&self) -> BTreeMap<String, u64> {
        let c = &self.config;
        BTreeMap::from([
            ("seed".to_string(), c.seed),
            ("dataset".to_string(), c.dataset.seed),
            ("deflicker_init".to_string(), c.deflicker_init_seed()),
            ("deflicker_train".to_string(), c.deflicker.seed),
            ("harmonizer_init".to_string(), c.harmonizer_init_seed()),
            ("harmonizer_train".to_string(), c.harmonizer.seed),
            ("inference".to_string(), c.inference.sample.seed),
        ])
    }

    fn record(
        &self,
        stage: &str,
        started: Instant,
        inputs: &[String],
        outputs: &[String],
        reports: Vec<String>,
    ) -> Result<RunManifest> {
        let hash_all = |paths: &[String]| paths.iter().map(|p| artifact(&self.root, p)).collect::<Result<Vec<_>>>();
        manifest::append(
            &self.root,
            RunManifest {
                run_id: String::new(),
                stage: stage.to_string(),
                config_hash: self.config_hash(),
                inputs: hash_all(inputs)?,
                outputs: hash_all(outputs)?,
                wall_clock_secs: started.elapsed().as_secs_f64(),
                seeds: self.seeds(),
                reports,
            },
        )
    }
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    index: usize,
    split: Split,
    frame_rate: f32,
    real_scene: SceneSpec,
    synthetic_scene: SceneSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    path_tag: PathTag,
    seed: u64,
    frame_rate: f32,
    scenes: Vec<SceneSpec>,
    luts: Vec<harmovid_core::synthesis::Lut3d>,
}

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn scene_dir(split: Split, index: usize) -> String {
    rel(&[DATA_DIR, split_dir(split), &format!("{index:05}")])
}

fn write_scene(root: &Path, s: &StageOneSample) -> Result<String> {
    let dir_rel = scene_dir(s.split, s.index);
    let dir = root.join(&dir_rel);
    write_video(&dir.join("real"), &s.real)?;
    write_mask(&dir.join("mask"), &s.mask)?;
    write_alpha(&dir.join("alpha"), &s.alpha)?;
    write_video(&dir.join("synthetic_bg"), &s.synthetic_bg)?;
    write_video(&dir.join("stage1"), &s.stage1)?;
    write_video(&dir.join("inpainted_bg"), &s.inpainted_bg)?;
    write_json(
        &dir.join(SAMPLE_FILE),
        &SceneRecord {
            index: s.index,
            split: s.split,
            frame_rate: s.real.frame_rate(),
            real_scene: s.real_scene.clone(),
            synthetic_scene: s.synthetic_scene.clone(),
        },
    )?;
    Ok(dir_rel)
}

fn read_scene(dir: &Path) -> Result<StageOneSample> {
    let rec: SceneRecord = read_json(&dir.join(SAMPLE_FILE))?;
    let video = |name: &str| -> Result<VideoTensor> { Ok(read_video(&dir.join(name))?.with_frame_rate(rec.frame_rate)) };
    Ok(StageOneSample {
        index: rec.index,
        split: rec.split,
        real_scene: rec.real_scene,
        synthetic_scene: rec.synthetic_scene,
        real: video("real")?,
        mask: read_mask(&dir.join("mask"))?,
        alpha: read_alpha(&dir.join("alpha"))?,
        synthetic_bg: video("synthetic_bg")?,
        stage1: video("stage1")?,
        inpainted_bg: video("inpainted_bg")?,
    })
}

fn sample_dirs(root: &Path, parent: &str) -> Result<Vec<PathBuf>> {
    let dir = root.join(parent);
    if !dir.is_dir() {
        bail!("{} does not exist; run gen-data first", dir.display());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|d| d.join(SAMPLE_FILE).is_file());
    dirs.sort();
    Ok(dirs)
}

pub fn load_scenes(root: &Path, split: Split) -> Result<Vec<StageOneSample>> {
    let scenes = sample_dirs(root, &rel(&[DATA_DIR, split_dir(split)]))?
        .iter()
        .map(|d| read_scene(d))
        .collect::<Result<Vec<_>>>()?;
    ensure!(
        split == Split::Test || !scenes.is_empty(),
        "no training scenes under {}",
        root.display()
    );
    Ok(scenes)
}

fn write_pair(dir: &Path, pair: &PairedSample) -> Result<()> {
    write_video(&dir.join("input"), &pair.input_composite)?;
    write_video(&dir.join("target"), &pair.target)?;
    write_video(&dir.join("background"), &pair.background)?;
    write_mask(&dir.join("mask"), &pair.mask)?;
    write_alpha(&dir.join("alpha"), &pair.alpha)?;
    write_json(
        &dir.join(SAMPLE_FILE),
        &PairRecord {
            path_tag: pair.path_tag,
            seed: pair.seed,
            frame_rate: pair.target.frame_rate(),
            scenes: pair.scenes.clone(),
            luts: pair.luts.clone(),
        },
    )
}

pub fn load_pair(dir: &Path) -> Result<PairedSample> {
    let rec: PairRecord = read_json(&dir.join(SAMPLE_FILE))?;
    let video = |name: &str| -> Result<VideoTensor> { Ok(read_video(&dir.join(name))?.with_frame_rate(rec.frame_rate)) };
    Ok(PairedSample {
        input_composite: video("input")?,
        target: video("target")?,
        background: video("background")?,
        mask: read_mask(&dir.join("mask"))?,
        alpha: read_alpha(&dir.join("alpha"))?,
        path_tag: rec.path_tag,
        seed: rec.seed,
        scenes: rec.scenes,
        luts: rec.luts,
    })
}

pub fn eval_dir(set: &str) -> String {
    rel(&[DATA_DIR, "eval", set])
}

/// Renders scenes, Stage-1 videos and both evaluation sets.
pub fn gen_data(ctx: &Context) -> Result<RunManifest> {
    let started = Instant::now();
    let cfg = &ctx.config.dataset;
    cfg.validate()?;
    let data = ctx.path(DATA_DIR);
    if data.exists() {
        fs::remove_dir_all(&data).with_context(|| format!("clearing {}", data.display()))?;
    }
    fs::create_dir_all(&data).with_context(|| format!("creating {}", data.display()))?;
    fs::write(data.join("config.json"), &ctx.config_text)?;
    let mut outputs = vec![rel(&[DATA_DIR, "config.json"])];
    for i in 0..cfg.total() {
        let sample = cfg.generate(i)?;
        outputs.push(write_scene(&ctx.root, &sample)?);
        if sample.split == Split::Test {
            let name = format!("{i:05}");
            let pair = cfg.single_lut_pair(&sample)?;
            write_pair(&ctx.path(eval_dir("single_lut")).join(&name), &pair)?;
            let flicker = cfg.flicker_clip(&sample)?;
            let dir = ctx.path(eval_dir("flicker")).join(&name);
            write_video(&dir.join("input"), &flicker)?;
            write_video(&dir.join("target"), &sample.real)?;
            write_mask(&dir.join("mask"), &sample.mask)?;
            write_json(
                &dir.join(SAMPLE_FILE),
                &serde_json::json!({ "scene": sample.real_scene, "frame_rate": sample.real.frame_rate() }),
            )?;
        }
        info!("rendered scene {}/{}", i + 1, cfg.total());
    }
    for set in ["single_lut", "flicker"] {
        if ctx.path(eval_dir(set)).is_dir() {
            outputs.push(eval_dir(set));
        }
    }
    ctx.record("gen-data", started, &[], &outputs, vec![])
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn checkpoint_manifest(ctx: &Context, kind: &str, train: &[StageOneSample], provenance: serde_json::Value) -> CheckpointManifest {
    let d = train[0].real.dims();
    let mut provenance = provenance;
    provenance["config"] = serde_json::Value::String(ctx.config_text.clone());
    provenance["config_hash"] = ctx.config_hash().into();
    CheckpointManifest {
        format: FORMAT_VERSION,
        kind: kind.to_string(),
        net: ctx.config.net.clone(),
        layout: ConditioningLayout::deflicker(1),
        schedule: ctx.config.schedule.clone(),
        patch: ctx.config.patch,
        train_dims: [d.frames, d.height, d.width],
        seeds: ctx.seeds(),
        provenance,
        tensors: Vec::new(),
    }
}

fn mean_tail(losses: &[f64], n: usize) -> f64 {
    let tail = &losses[losses.len().saturating_sub(n)..];
    tail.iter().sum::<f64>() / tail.len().max(1) as f64
}

pub const DEFLICKER_CHECKPOINT: &str = "checkpoints/deflicker";

pub fn train_deflicker(ctx: &Context) -> Result<RunManifest> {
    let started = Instant::now();
    let train = load_scenes(&ctx.root, Split::Train)?;
    let (model, losses) = experiment::train_deflicker(&ctx.config, &train)?;
    let dir = ctx.path(DEFLICKER_CHECKPOINT);
    let provenance = serde_json::json!({
        "iterations": losses.len(),
        "final_loss": losses.last(),
        "scenes": train.len(),
    });
    save_checkpoint(&dir, &model.net, checkpoint_manifest(ctx, "deflicker", &train, provenance))?;
    write_losses(&dir.join(LOSS_FILE), &losses)?;
    info!("deflicker trained; mean loss over last 50 steps {:.5}", mean_tail(&losses, 50));
    ctx.record(
        "train-deflicker",
        started,
        &[rel(&[DATA_DIR, "train"])],
        &[DEFLICKER_CHECKPOINT.to_string()],
        vec![],
    )
}

pub fn load_deflicker(path: &Path) -> Result<(DeflickerModel, CheckpointManifest)> {
    let (net, manifest) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    ensure!(manifest.kind == "deflicker", "{} holds a {} model", path.display(), manifest.kind);
    Ok((DeflickerModel::from_net(net, manifest.patch)?, manifest))
}

pub fn load_harmonizer(path: &Path) -> Result<(HarmonizerModel, CheckpointManifest)> {
    let (net, manifest) = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    ensure!(manifest.kind == "harmonizer", "{} holds a {} model", path.display(), manifest.kind);
    Ok((HarmonizerModel::from_net(net, manifest.patch)?, manifest))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineRecord {
    pub source: String,
    pub refined: String,
    pub before: MetricReport,
    pub after: MetricReport,
    /// Mean absolute change over pixels outside the mask.
    pub background_mad: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSummary {
    pub clips: usize,
    pub frame_sim_improved: usize,
    pub max_background_mad: f64,
}

fn background_mad(a: &VideoTensor, b: &VideoTensor, mask: &MaskVideo) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 0 {
            for c in 0..3 {
                sum += (a.data()[3 * i + c] - b.data()[3 * i + c]).abs() as f64;
            }
            n += 3;
        }
    }
    sum / n.max(1) as f64
}

/// Deflickers every training scene's Stage-1 video into a `refined` stream.
pub fn refine(ctx: &Context, checkpoint: Option<&Path>) -> Result<RunManifest> {
    let started = Instant::now();
    let ckpt = ctx.path(checkpoint.unwrap_or(Path::new(DEFLICKER_CHECKPOINT)));
    let (model, _) = load_deflicker(&ckpt)?;
    let train = load_scenes(&ctx.root, Split::Train)?;
    let refined = experiment::refine(&ctx.config, &model, &train)?;
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    let mut summary = RefineSummary {
        clips: train.len(),
        frame_sim_improved: 0,
        max_background_mad: 0.0,
    };
    for (s, r) in train.iter().zip(&refined) {
        let dir = scene_dir(s.split, s.index);
        write_video(&ctx.path(&dir).join("refined"), r)?;
        let m = &ctx.config.metrics;
        let record = RefineRecord {
            source: rel(&[&dir, "stage1"]),
            refined: rel(&[&dir, "refined"]),
            before: MetricReport::evaluate(&s.stage1, None, Some(&s.mask), None, m)?,
            after: MetricReport::evaluate(r, None, Some(&s.mask), None, m)?,
            background_mad: background_mad(&s.stage1, r, &s.mask),
        };
        if frame_similarity_with(r, m.embed_seed)? >= frame_similarity_with(&s.stage1, m.embed_seed)? {
            summary.frame_sim_improved += 1;
        }
        summary.max_background_mad = summary.max_background_mad.max(record.background_mad);
        let report = rel(&[REPORT_DIR, "refine", &format!("{:05}.json", s.index)]);
        write_json(&ctx.path(&report), &record)?;
        outputs.push(rel(&[&dir, "refined"]));
        reports.push(report);
    }
    let summary_path = rel(&[REPORT_DIR, "refine", "summary.json"]);
    write_json(&ctx.path(&summary_path), &summary)?;
    reports.push(summary_path);
    info!(
        "refined {} clips; frame similarity improved on {}",
        summary.clips, summary.frame_sim_improved
    );
    let inputs = vec![rel(&[DATA_DIR, "train"]), DEFLICKER_CHECKPOINT.to_string()];
    ctx.record("refine", started, &inputs, &outputs, reports)
}

pub fn harmonizer_checkpoint(variant: HarmonizerVariant) -> String {
    rel(&[CHECKPOINT_DIR, "harmonizer", &variant.name()])
}

pub fn train_harmonizer(ctx: &Context, variant: HarmonizerVariant) -> Result<RunManifest> {
    let started = Instant::now();
    let train = load_scenes(&ctx.root, Split::Train)?;
    let synthetic = if variant.stage2 {
        train
            .iter()
            .map(|s| {
                let dir = ctx.path(scene_dir(s.split, s.index)).join("refined");
                ensure!(dir.is_dir(), "{} missing; run refine or pass --no-stage2", dir.display());
                Ok(read_video(&dir)?.with_frame_rate(s.real.frame_rate()))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        train.iter().map(|s| s.stage1.clone()).collect()
    };
    let dataset = experiment::harmonization_dataset(&train, &synthetic, variant)?;
    let recipe = variant.recipe(&ctx.config.harmonizer);
    let (model, losses) = experiment::train_harmonizer(&ctx.config, &dataset, &recipe)?;
    let out = harmonizer_checkpoint(variant);
    let provenance = serde_json::json!({
        "variant": variant,
        "recipe": recipe,
        "iterations": losses.len(),
        "final_loss": losses.last(),
        "scenes": train.len(),
    });
    save_checkpoint(
        &ctx.path(&out),
        &model.net,
        checkpoint_manifest(ctx, "harmonizer", &train, provenance),
    )?;
    write_losses(&ctx.path(&out).join(LOSS_FILE), &losses)?;
    info!("{} trained; mean loss over last 50 steps {:.5}", variant.name(), mean_tail(&losses, 50));
    let inputs = vec![rel(&[DATA_DIR, "train"])];
    ctx.record("train-harmonizer", started, &inputs, &[out], vec![])
}

/// Inputs of the `harmonize` command, relative to the output root.
#[derive(Clone, Debug)]
pub struct HarmonizeArgs {
    pub checkpoint: PathBuf,
    pub fg: PathBuf,
    pub bg: PathBuf,
    /// Binary mask frames; ignored when `alpha` is given.
    pub mask: PathBuf,
    pub alpha: Option<PathBuf>,
    pub out: PathBuf,
    pub reference: Option<PathBuf>,
}

fn rel_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn harmonize_cmd(ctx: &Context, args: &HarmonizeArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let (model, _) = load_harmonizer(&ctx.path(&args.checkpoint))?;
    let fg = read_video(&ctx.path(&args.fg))?;
    let bg = read_video(&ctx.path(&args.bg))?;
    let mask = read_mask(&ctx.path(&args.mask))?;
    ensure!(
        fg.frames() == bg.frames() && fg.frames() == mask.dims().frames,
        "frame counts differ: fg {}, bg {}, mask {}",
        fg.frames(),
        bg.frames(),
        mask.dims().frames
    );
    let condition = match &args.alpha {
        Some(a) => MaskCondition::Alpha(read_alpha(&ctx.path(a))?),
        None => MaskCondition::Binary(mask.clone()),
    };
    let out = harmonize(&model, &fg, &bg, &condition, &ctx.config.inference)?;
    write_video(&ctx.path(&args.out), &out)?;
    let reference = args.reference.as_ref().map(|r| read_video(&ctx.path(r))).transpose()?;
    let report = MetricReport::evaluate(&out, reference.as_ref(), Some(&mask), Some(&mask), &ctx.config.metrics)?;
    let report_path = args.out.join("report.json");
    write_json(&ctx.path(&report_path), &report)?;
    let mut inputs = vec![args.checkpoint.clone(), args.fg.clone(), args.bg.clone(), args.mask.clone()];
    inputs.extend(args.alpha.clone());
    inputs.extend(args.reference.clone());
    let inputs: Vec<String> = inputs.iter().map(|p| rel_string(p)).collect();
    ctx.record(
        "harmonize",
        started,
        &inputs,
        &[rel_string(&args.out)],
        vec![rel_string(&report_path)],
    )
}

#[derive(Clone, Debug)]
pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub reference: PathBuf,
    pub mask: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<(RunManifest, MetricReport)> {
    let started = Instant::now();
    let pred = read_video(&ctx.path(&args.pred))?;
    let reference = read_video(&ctx.path(&args.reference))?;
    ensure!(
        pred.dims() == reference.dims(),
        "prediction is {:?} but reference is {:?}",
        pred.dims(),
        reference.dims()
    );
    let mask = args.mask.as_ref().map(|m| read_mask(&ctx.path(m))).transpose()?;
    let report = MetricReport::evaluate(&pred, Some(&reference), mask.as_ref(), mask.as_ref(), &ctx.config.metrics)?;
    write_json(&ctx.path(&args.out), &report)?;
    let mut inputs = vec![rel_string(&args.pred), rel_string(&args.reference)];
    inputs.extend(args.mask.as_ref().map(|m| rel_string(m)));
    let record = ctx.record("evaluate", started, &inputs, &[rel_string(&args.out)], vec![rel_string(&args.out)])?;
    Ok((record, report))
}

/// The held-out single-LUT pairs written by `gen-data`.
pub fn load_eval_pairs(root: &Path) -> Result<Vec<PairedSample>> {
    sample_dirs(root, &eval_dir("single_lut"))?.iter().map(|d| load_pair(d)).collect()
}
