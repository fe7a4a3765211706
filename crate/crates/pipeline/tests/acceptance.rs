//! Acceptance suite. Each test prints one `criterion N [PASS|FAIL]` line to
//! stderr (uncaptured) and then asserts it.
//!
//! Criteria 6 to 10 share one toy-scale corpus, deflicker model and set of
//! harmonizer variants, trained on first use.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{run_ok, tiny_config, write_config};
use harmovid_core::diffusion::sampler::gaussian;
use harmovid_core::diffusion::train::epsilon_loss;
use harmovid_core::diffusion::{
    add_noise, decode, encode_with, loss_and_gradient, predict_x0, sample, ConditioningLayout, DenoiserNet,
    LatentShape, LatentVideo, NetConfig, NoiseDraw, NoiseSchedule, TrainExample,
};
use harmovid_core::metrics::plane::Plane;
use harmovid_core::metrics::{boundary_quality, estimate_flow, motion_preservation, perceptual_dist, psnr, rmse};
use harmovid_core::multidiffusion::{frame_changes, plan_windows, OverlapWeighting, WindowedPredictor};
use harmovid_core::stages::{
    build_deflicker_pair, deflicker, harmonize, run_training, DeflickerModel, HarmonizerModel, MaskCondition,
    MaskPolicy, PathSample, TrainRecipe,
};
use harmovid_core::synthesis::{make_flicker_video_with, DatasetConfig, PairedSample, PathTag};
use harmovid_core::video::{
    alpha_from_distance, boundary_band, composite, dilate, erode, erode_bordered, pseudo_alpha,
};
use harmovid_core::{Dims, MaskVideo, VideoTensor};
use harmovid_pipeline::config::PipelineConfig;
use harmovid_pipeline::experiment::{
    compare_deflicker, generate_corpus, harmonization_dataset, harmonize_pair, harmonize_real_on_synthetic, refine,
    train_deflicker, train_harmonizer, Corpus, DeflickerComparison, HarmonizerVariant, PairedSummary,
};
use harmovid_pipeline::manifest::read_manifest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "criterion {n:>2} [{}] {name}: {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let mut err = std::io::stderr().lock();
    err.write_all(line.as_bytes()).unwrap();
    err.flush().unwrap();
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn random_video(rng: &mut ChaCha8Rng, dims: Dims) -> VideoTensor {
    VideoTensor::from_vec(dims, (0..dims.pixels() * 3).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

#[test]
fn c01_codec_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut exact = 0;
    for _ in 0..100 {
        let dims = Dims::new(rng.gen_range(1..=8), 4 * rng.gen_range(2..=6), 4 * rng.gen_range(2..=6));
        let v = random_video(&mut rng, dims);
        let back = decode(&encode_with(&v, 4).unwrap()).unwrap();
        if back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()) {
            exact += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "codec exactness",
        exact == 100 && elapsed < Duration::from_secs(1),
        format!("{exact}/100 bit-exact round trips in {:.3}s", secs(elapsed)),
    );
}

fn random_mask(rng: &mut ChaCha8Rng, dims: Dims) -> MaskVideo {
    let rects: Vec<[usize; 4]> = (0..rng.gen_range(1..4))
        .map(|_| {
            let (y, x) = (rng.gen_range(0..dims.height), rng.gen_range(0..dims.width));
            [y, x, y + rng.gen_range(1..10), x + rng.gen_range(1..10)]
        })
        .collect();
    let speckle = rng.gen_bool(0.5);
    let seed: u64 = rng.gen();
    MaskVideo::from_fn(dims, |t, y, x| {
        let inside = rects.iter().any(|r| (r[0] + t..r[2] + t).contains(&y) && (r[1]..r[3]).contains(&x));
        let flip = speckle && (seed ^ (t * 997 + y * 31 + x) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 60 == 0;
        inside ^ flip
    })
    .unwrap()
}

fn frame_has_both(m: &MaskVideo, t: usize) -> bool {
    let n = m.frame_count(t);
    n > 0 && n < m.dims().frame_pixels()
}

#[test]
fn c02_compositing_morphology_alpha() {
    let start = Instant::now();
    let dims = Dims::new(4, 16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures: Vec<String> = Vec::new();
    let cases = 300;
    for case in 0..cases {
        let (fg, bg) = (random_video(&mut rng, dims), random_video(&mut rng, dims));
        let m = random_mask(&mut rng, dims);
        let mut check = |ok: bool, what: &str| {
            if !ok {
                failures.push(format!("case {case}: {what}"));
            }
        };
        let ones = MaskVideo::filled(dims, true).unwrap();
        let zeros = MaskVideo::filled(dims, false).unwrap();
        check(composite(&fg, &bg, &ones).unwrap() == fg, "all-ones mask keeps fg");
        check(composite(&fg, &bg, &zeros).unwrap() == bg, "all-zeros mask keeps bg");
        check(composite(&fg, &bg, &ones.to_alpha()).unwrap() == fg, "unit alpha keeps fg");
        check(
            composite(&fg, &bg, &m).unwrap() == composite(&bg, &fg, &m.not()).unwrap(),
            "composite duality",
        );
        check(composite(&fg, &bg, &m).unwrap() == composite(&fg, &bg, &m.to_alpha()).unwrap(), "binary alpha");
        for r in 1..=3 {
            check(erode_bordered(&m, r, true) == dilate(&m.not(), r).not(), "erosion/dilation duality");
            check(dilate(&m, r) == erode_bordered(&m.not(), r, true).not(), "dilation/erosion duality");
            let e = erode(&m, r);
            check(e.and(&m).unwrap() == e && dilate(&m, r).and(&m).unwrap() == m, "morphology ordering");
        }
        let band = boundary_band(&m, 1, 1).unwrap();
        for t in 0..dims.frames {
            if frame_has_both(&m, t) {
                check(band.frame_count(t) > 0, "band nonempty where the mask has an edge");
            }
        }
        for feather in [1.0f32, 2.0, 3.5] {
            check(alpha_from_distance(0.0, feather) == 0.5, "zero distance is half alpha");
            let a = pseudo_alpha(&m, feather).unwrap();
            check(a.threshold() == m, "pseudo-alpha thresholds back to the mask");
            for t in 0..dims.frames {
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        for (yy, xx) in [(y, x + 1), (y + 1, x)] {
                            if yy < dims.height && xx < dims.width && m.get(t, y, x) != m.get(t, yy, xx) {
                                let sum = a.get(t, y, x) + a.get(t, yy, xx);
                                check((sum - 1.0).abs() < 1e-6, "edge pixels straddle 0.5");
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "compositing, morphology and pseudo-alpha invariants",
        failures.is_empty() && elapsed < Duration::from_secs(10),
        format!(
            "{cases} random 16x16x4 cases, {} violations{} in {:.2}s",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default(),
            secs(elapsed)
        ),
    );
}

#[test]
fn c03_diffusion_moment_oracle() {
    let start = Instant::now();
    let s = NoiseSchedule::default();
    let n = 10_000;
    let x0 = 0.6;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let one = LatentShape {
        frames: 1,
        height: 1,
        width: 1,
        channels: 1,
    };
    let z0 = LatentVideo::new(one, vec![x0]).unwrap();
    for t in [1, s.steps() / 2, s.steps()] {
        let draws: Vec<f64> = (0..n)
            .map(|_| add_noise(&s, &z0, t, &gaussian(1, &mut rng)).unwrap().data()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ab = s.alpha_bar(t);
        let (want_mean, want_var) = (ab.sqrt() * x0, 1.0 - ab);
        let z_mean = (mean - want_mean).abs() / (want_var / n as f64).sqrt();
        let z_var = (var - want_var).abs() / (want_var * (2.0 / (n - 1) as f64).sqrt());
        worst = worst.max(z_mean).max(z_var);
    }
    let shape = LatentShape {
        frames: 2,
        height: 2,
        width: 2,
        channels: 3,
    };
    let x = LatentVideo::new(shape, gaussian(shape.len(), &mut rng)).unwrap();
    let mut max_err = 0.0f64;
    for t in 1..=s.steps() {
        let eps = LatentVideo::new(shape, gaussian(shape.len(), &mut rng)).unwrap();
        let rec = predict_x0(&s, &add_noise(&s, &x, t, eps.data()).unwrap(), &eps, t).unwrap();
        max_err = rec.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).fold(max_err, f64::max);
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        "diffusion moment oracle",
        worst < 3.0 && max_err < 1e-5 && elapsed < Duration::from_secs(30),
        format!(
            "max moment deviation {worst:.2} sigma at t in {{1, {}, {}}}, oracle-noise reconstruction error {max_err:.1e}, {:.2}s",
            s.steps() / 2,
            s.steps(),
            secs(elapsed)
        ),
    );
}

#[test]
fn c04_gradient_check() {
    let start = Instant::now();
    let config = NetConfig {
        width: 12,
        heads: 2,
        blocks: 2,
        mlp_ratio: 2,
        residual_anchor: true,
    };
    let mut net = DenoiserNet::<f64>::new(config, ConditioningLayout::deflicker(3), NoiseSchedule::default(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for p in net.params_mut() {
        *p += 0.2 * gaussian(1, &mut rng)[0];
    }
    let shape = LatentShape {
        frames: 2,
        height: 2,
        width: 2,
        channels: 3,
    };
    let mut lat = |s: LatentShape| LatentVideo::new(s, gaussian(s.len(), &mut rng)).unwrap();
    let batch: Vec<TrainExample> = (0..2)
        .map(|_| TrainExample {
            target: lat(shape),
            cond: harmovid_core::diffusion::Conditioning {
                input: lat(shape),
                background: None,
                mask: lat(shape.with_channels(1)),
            },
        })
        .collect();
    let draws = vec![
        NoiseDraw {
            t: 5,
            eps: lat(shape).into_data(),
        },
        NoiseDraw {
            t: 50,
            eps: lat(shape).into_data(),
        },
    ];
    let loss = |n: &DenoiserNet<f64>| {
        batch.iter().zip(&draws).map(|(e, d)| epsilon_loss(n, e, d).unwrap()).sum::<f64>() / 2.0
    };
    let (_, grad) = loss_and_gradient(&net, &batch, &draws).unwrap();
    let h = 1e-6;
    let (mut worst, mut checked) = (0.0f64, 0);
    for entry in net.table().entries() {
        for k in [0, entry.len() / 2, entry.len() - 1] {
            let i = entry.offset + k;
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let scale = numeric.abs().max(grad[i].abs());
            if scale > 1e-7 {
                worst = worst.max((numeric - grad[i]).abs() / scale);
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        4,
        "gradient check",
        worst < 1e-3 && checked > 0 && elapsed < Duration::from_secs(60),
        format!(
            "max relative error {worst:.2e} over {checked} parameters of a 2-block net, {:.2}s",
            secs(elapsed)
        ),
    );
}

fn overfit_recipe() -> TrainRecipe {
    TrainRecipe {
        iterations: 500,
        batch_size: 2,
        learning_rate: 1e-3,
        warmup: 20,
        final_lr_fraction: 0.05,
        seed: 5,
        ..TrainRecipe::default()
    }
}

fn tail_mean(losses: &[f64]) -> f64 {
    let tail = &losses[losses.len() - 50..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[test]
fn c05_overfit_harnesses() {
    let cfg = PipelineConfig::toy();
    let scene = DatasetConfig {
        count: 1,
        test_count: 0,
        ..cfg.dataset.clone()
    }
    .generate(0)
    .unwrap();
    let recipe = overfit_recipe();

    let start = Instant::now();
    let mut dm = DeflickerModel::new(cfg.net.clone(), cfg.schedule.clone(), cfg.patch, 5).unwrap();
    let (flicker, _) = make_flicker_video_with(&scene.real, &scene.mask, 55, cfg.dataset.flicker_lut).unwrap();
    let ex = dm.example(&build_deflicker_pair(&scene.real, &flicker, &scene.mask).unwrap()).unwrap();
    let losses = run_training(&mut dm.net, &recipe, |_, _| Ok(vec![ex.clone()]), |_, _| {}).unwrap();
    let out = deflicker(&dm, &flicker, &scene.mask, &cfg.inference).unwrap();
    let (d_loss, d_psnr, d_secs) = (tail_mean(&losses), psnr(&out, &scene.real).unwrap(), start.elapsed());

    let start = Instant::now();
    let mut hm = HarmonizerModel::new(cfg.net.clone(), cfg.schedule.clone(), cfg.patch, 6).unwrap();
    let s2r = PathSample::synth_to_real(&scene, &scene.stage1, MaskPolicy::Asymmetric).unwrap();
    let ex = hm.example(&s2r).unwrap();
    let losses = run_training(&mut hm.net, &recipe, |_, _| Ok(vec![ex.clone()]), |_, _| {}).unwrap();
    let mask = MaskCondition::Alpha(scene.alpha.clone());
    let out = harmonize(&hm, &scene.stage1, &scene.inpainted_bg, &mask, &cfg.inference).unwrap();
    let (h_loss, h_psnr, h_secs) = (tail_mean(&losses), psnr(&out, &scene.real).unwrap(), start.elapsed());

    let limit = Duration::from_secs(600);
    verdict(
        5,
        "overfit harnesses",
        d_loss < 0.05 && h_loss < 0.05 && d_psnr >= 30.0 && h_psnr >= 30.0 && d_secs < limit && h_secs < limit,
        format!(
            "deflicker loss {d_loss:.4} psnr {d_psnr:.2} dB ({:.0}s); harmonizer loss {h_loss:.4} psnr {h_psnr:.2} dB ({:.0}s); 500 iterations, loss is the mean of the last 50",
            secs(d_secs),
            secs(h_secs)
        ),
    );
}

struct Base {
    cfg: PipelineConfig,
    corpus: Corpus,
    deflicker: DeflickerModel,
    deflicker_secs: f64,
    refined: Vec<VideoTensor>,
    pairs: Vec<PairedSample>,
}

fn base() -> &'static Base {
    static BASE: OnceLock<Base> = OnceLock::new();
    BASE.get_or_init(|| {
        let cfg = PipelineConfig::toy();
        let corpus = generate_corpus(&cfg).unwrap();
        let start = Instant::now();
        let (deflicker, _) = train_deflicker(&cfg, &corpus.train).unwrap();
        let deflicker_secs = secs(start.elapsed());
        let refined = refine(&cfg, &deflicker, &corpus.train).unwrap();
        let pairs = corpus
            .test
            .iter()
            .map(|s| cfg.dataset.single_lut_pair(s).unwrap())
            .collect();
        Base {
            cfg,
            corpus,
            deflicker,
            deflicker_secs,
            refined,
            pairs,
        }
    })
}

/// A trained harmonizer variant with its held-out scores.
struct Variant {
    model: HarmonizerModel,
    train_secs: f64,
    eval_secs: f64,
    /// Harmonized single-LUT pairs against their targets.
    paired: PairedSummary,
    laplacian_var: f64,
    tenengrad: f64,
    /// Real foregrounds harmonized onto synthetic backgrounds, against the
    /// naive composites over the foreground.
    motion_pres: f64,
}

const VARIANTS: [HarmonizerVariant; 5] = [
    HarmonizerVariant::DUAL,
    HarmonizerVariant {
        single_path: Some(PathTag::RealToSynth),
        policy: MaskPolicy::Asymmetric,
        stage2: true,
    },
    HarmonizerVariant {
        single_path: Some(PathTag::SynthToReal),
        policy: MaskPolicy::Asymmetric,
        stage2: true,
    },
    HarmonizerVariant {
        single_path: None,
        policy: MaskPolicy::Asymmetric,
        stage2: false,
    },
    HarmonizerVariant {
        single_path: None,
        policy: MaskPolicy::BinaryOnly,
        stage2: true,
    },
];

fn variant(index: usize) -> &'static Variant {
    static TRAINED: [OnceLock<Variant>; 5] = [const { OnceLock::new() }; 5];
    TRAINED[index].get_or_init(|| {
        let b = base();
        let v = VARIANTS[index];
        let raw: Vec<VideoTensor>;
        let synthetic = if v.stage2 {
            &b.refined
        } else {
            raw = b.corpus.train.iter().map(|s| s.stage1.clone()).collect();
            &raw
        };
        let start = Instant::now();
        let ds = harmonization_dataset(&b.corpus.train, synthetic, v).unwrap();
        let (model, _) = train_harmonizer(&b.cfg, &ds, &v.recipe(&b.cfg.harmonizer)).unwrap();
        let train_secs = secs(start.elapsed());

        let start = Instant::now();
        let m = &b.cfg.metrics;
        let n = b.pairs.len() as f64;
        let (mut items, mut lap, mut ten) = (Vec::new(), 0.0, 0.0);
        for p in &b.pairs {
            let out = harmonize_pair(&b.cfg, &model, p, v.policy).unwrap();
            let q = boundary_quality(&out, &p.mask, m.band_inner, m.band_outer).unwrap();
            lap += q.laplacian_var / n;
            ten += q.tenengrad / n;
            items.push((out, p.target.clone()));
        }
        let mut mp = 0.0;
        for s in &b.corpus.test {
            let (out, naive) = harmonize_real_on_synthetic(&b.cfg, &model, s).unwrap();
            mp += motion_preservation(&out, &naive, Some(&s.mask)).unwrap() / b.corpus.test.len() as f64;
        }
        Variant {
            model,
            train_secs,
            eval_secs: secs(start.elapsed()),
            paired: PairedSummary::accumulate(&items, m.embed_seed).unwrap(),
            laplacian_var: lap,
            tenengrad: ten,
            motion_pres: mp,
        }
    })
}

#[test]
fn c06_deflicker_efficacy() {
    let b = base();
    let start = Instant::now();
    let comparisons: Vec<DeflickerComparison> = b
        .corpus
        .test
        .iter()
        .map(|s| compare_deflicker(&b.cfg, &b.deflicker, s, &b.cfg.dataset.flicker_clip(s).unwrap()).unwrap())
        .collect();
    let mean = |f: fn(&DeflickerComparison) -> f64| comparisons.iter().map(f).sum::<f64>() / comparisons.len() as f64;
    let (fs_in, fs_learned) = (mean(|c| c.frame_sim_input), mean(|c| c.frame_sim_learned));
    let (mp_learned, mp_classical) = (mean(|c| c.motion_pres_learned), mean(|c| c.motion_pres_classical));
    let (fl_in, fl_learned) = (mean(|c| c.flicker_input), mean(|c| c.flicker_learned));
    let total = b.deflicker_secs + secs(start.elapsed());
    verdict(
        6,
        "deflicker efficacy",
        fs_learned > fs_in && mp_learned < mp_classical && total <= 1800.0,
        format!(
            "{} clips: frame_sim {fs_learned:.4} vs input {fs_in:.4}; motion_pres {mp_learned:.4} vs classical {mp_classical:.4}; flicker {fl_learned:.4} vs input {fl_in:.4}; {total:.0}s",
            comparisons.len()
        ),
    );
}

#[test]
fn c07_harmonization_efficacy() {
    let b = base();
    let dual = variant(0);
    let naive_items: Vec<_> = b.pairs.iter().map(|p| (p.input_composite.clone(), p.target.clone())).collect();
    let naive = PairedSummary::accumulate(&naive_items, b.cfg.metrics.embed_seed).unwrap();
    let h = &dual.paired;
    let total = dual.train_secs + dual.eval_secs;
    verdict(
        7,
        "harmonization efficacy",
        h.psnr > naive.psnr && h.ssim > naive.ssim && h.rmse < naive.rmse && h.frame_sim > naive.frame_sim && total <= 1800.0,
        format!(
            "{} pairs: psnr {:.2} vs {:.2}, ssim {:.4} vs {:.4}, rmse {:.4} vs {:.4}, frame_sim {:.5} vs {:.5} (harmonized vs naive); {total:.0}s",
            b.pairs.len(),
            h.psnr,
            naive.psnr,
            h.ssim,
            naive.ssim,
            h.rmse,
            naive.rmse,
            h.frame_sim,
            naive.frame_sim
        ),
    );
}

#[test]
fn c08_ablation_orderings() {
    let (dual, r2s, s2r, raw) = (variant(0), variant(1), variant(2), variant(3));
    let total: f64 = [dual, r2s, s2r, raw].iter().map(|v| v.train_secs + v.eval_secs).sum();
    verdict(
        8,
        "ablation orderings",
        dual.paired.ssim >= r2s.paired.ssim
            && dual.paired.ssim >= s2r.paired.ssim
            && dual.motion_pres < raw.motion_pres
            && total <= 2700.0,
        format!(
            "ssim dual {:.4}, real-to-synthetic only {:.4}, synthetic-to-real only {:.4}; motion_pres with refinement {:.4}, without {:.4}; {total:.0}s",
            dual.paired.ssim, r2s.paired.ssim, s2r.paired.ssim, dual.motion_pres, raw.motion_pres
        ),
    );
}

#[test]
fn c09_pseudo_alpha_boundary_ordering() {
    let (soft, binary) = (variant(0), variant(4));
    verdict(
        9,
        "pseudo-alpha boundary ordering",
        soft.laplacian_var >= binary.laplacian_var && soft.tenengrad >= binary.tenengrad,
        format!(
            "laplacian_var {:.5} vs binary-only {:.5}; tenengrad {:.5} vs {:.5}",
            soft.laplacian_var, binary.laplacian_var, soft.tenengrad, binary.tenengrad
        ),
    );
}

#[test]
fn c10_multidiffusion_equivalence() {
    let b = base();
    let model = &variant(0).model;
    let start = Instant::now();
    let clip = |frames: usize| {
        DatasetConfig {
            count: 1,
            test_count: 0,
            frames,
            ..b.cfg.dataset.clone()
        }
        .generate(0)
        .unwrap()
    };
    let mut bit_equal = true;
    for frames in [8, 16] {
        let s = clip(frames);
        let mask = MaskCondition::Binary(s.mask.clone());
        let cond = model.conditioning(&s.real_on_synthetic().unwrap(), &s.synthetic_bg, &mask).unwrap();
        let shape = cond.input.shape();
        let opts = &b.cfg.inference;
        let plain = sample(&model.net, &cond, shape, &opts.sample).unwrap();
        let fused = WindowedPredictor::new(&model.net, frames, opts.window, opts.stride(), OverlapWeighting::Uniform)
            .unwrap();
        bit_equal &= sample(&fused, &cond, shape, &opts.sample).unwrap() == plain;
    }
    let s = clip(24);
    let out = harmonize(
        model,
        &s.real,
        &s.synthetic_bg,
        &MaskCondition::Binary(s.mask.clone()),
        &b.cfg.inference,
    )
    .unwrap();
    let seams = plan_windows(24, b.cfg.inference.window, b.cfg.inference.stride())
        .unwrap()
        .seam_transitions();
    let changes = frame_changes(&out);
    let at_seams = seams.iter().map(|&i| changes[i]).fold(0.0, f64::max);
    let inside = changes
        .iter()
        .enumerate()
        .filter(|(i, _)| !seams.contains(i))
        .map(|(_, &c)| c)
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        10,
        "multidiffusion equivalence",
        bit_equal && at_seams <= 1.5 * inside && elapsed < Duration::from_secs(120),
        format!(
            "T in {{8, 16}} bit-equal: {bit_equal}; T=24 max seam change {at_seams:.5} vs interior {inside:.5} (ratio {:.2}); {:.1}s",
            at_seams / inside,
            secs(elapsed)
        ),
    );
}

fn texture(h: usize, w: usize, dy: i32, dx: i32) -> Plane {
    let tau = std::f32::consts::TAU;
    let data = (0..h * w)
        .map(|i| {
            let y = (i / w) as f32 - dy as f32;
            let x = (i % w) as f32 - dx as f32;
            0.5 + 0.2 * (tau * 2.0 * x / w as f32).sin() * (tau * 3.0 * y / h as f32).cos()
                + 0.15 * (tau * (3.0 * x / w as f32 + y / h as f32)).sin()
        })
        .collect();
    Plane::new(h, w, data)
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

#[test]
fn c11_metric_oracles() {
    let start = Instant::now();
    let dims = Dims::new(3, 16, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = VideoTensor::from_vec(dims, (0..dims.pixels() * 3).map(|_| rng.gen_range(16..180) as f32 / 256.0).collect())
        .unwrap();
    let mut closed_form = psnr(&base, &base).unwrap() == f64::INFINITY && rmse(&base, &base).unwrap() == 0.0;
    for d in [0.0625f32, 0.125, 0.25] {
        let shifted = VideoTensor::from_vec(dims, base.data().iter().map(|v| v + d).collect()).unwrap();
        let want_psnr = -20.0 * (d as f64).log10();
        let err = (rmse(&shifted, &base).unwrap() - d as f64).abs() + (psnr(&shifted, &base).unwrap() - want_psnr).abs();
        closed_form &= err < 1e-9;
    }

    let mut flow_err = 0.0f32;
    for (dy, dx) in [(0, 1), (0, 3), (2, 0), (1, -2), (-3, 2)] {
        let f = estimate_flow(&texture(32, 32, 0, 0), &texture(32, 32, dy, dx));
        let mx = median(f.iter().map(|v| v[0]).collect());
        let my = median(f.iter().map(|v| v[1]).collect());
        flow_err = flow_err.max((mx - dx as f32).abs()).max((my - dy as f32).abs());
    }

    let noise: Vec<f32> = (0..dims.pixels() * 3).map(|_| rng.gen::<f32>() - 0.5).collect();
    let dists: Vec<f64> = [0.01f32, 0.03, 0.1, 0.3]
        .iter()
        .map(|&a| {
            let noisy = VideoTensor::from_vec_clamped(
                dims,
                base.data().iter().zip(&noise).map(|(v, n)| v + a * n).collect(),
            )
            .unwrap();
            perceptual_dist(&noisy, &base).unwrap()
        })
        .collect();
    let monotone = dists.windows(2).all(|w| w[0] < w[1]);
    let elapsed = start.elapsed();
    verdict(
        11,
        "metric oracles",
        closed_form && flow_err < 0.5 && monotone && elapsed < Duration::from_secs(120),
        format!(
            "psnr/rmse closed forms exact: {closed_form}; max median flow error {flow_err:.3} px over 5 translations; perceptual distances {dists:.4?}; {:.2}s",
            secs(elapsed)
        ),
    );
}

fn run_pipeline(root: &std::path::Path) -> Vec<(String, Vec<(String, String)>)> {
    write_config(root, &tiny_config());
    let pair = |stream: &str| format!("data/eval/single_lut/00002/{stream}");
    let commands: Vec<Vec<String>> = vec![
        vec!["gen-data".into()],
        vec!["train-deflicker".into()],
        vec!["refine".into()],
        vec!["train-harmonizer".into()],
        vec![
            "harmonize".into(),
            "--checkpoint".into(),
            "checkpoints/harmonizer/dual".into(),
            "--fg".into(),
            pair("input"),
            "--bg".into(),
            pair("background"),
            "--mask".into(),
            pair("mask"),
            "--alpha".into(),
            pair("alpha"),
            "--reference".into(),
            pair("target"),
            "--out".into(),
            "out/harmonized".into(),
        ],
        vec![
            "evaluate".into(),
            "--pred".into(),
            "out/harmonized".into(),
            "--reference".into(),
            pair("target"),
            "--mask".into(),
            pair("mask"),
        ],
    ];
    for args in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(root, &args);
    }
    read_manifest(root)
        .unwrap()
        .into_iter()
        .map(|r| {
            let hashes = r.outputs.into_iter().map(|a| (a.path, a.sha256)).collect();
            (r.stage, hashes)
        })
        .collect()
}

#[test]
fn c12_end_to_end_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let first = run_pipeline(&dir.path().join("first"));
    let second = run_pipeline(&dir.path().join("second"));
    let artifacts: usize = first.iter().map(|(_, h)| h.len()).sum();
    let elapsed = start.elapsed();
    verdict(
        12,
        "end-to-end determinism",
        first == second && first.len() == 6 && elapsed < Duration::from_secs(3600),
        format!(
            "{} stages, {artifacts} artifact hashes identical across two runs: {}; {:.1}s",
            first.len(),
            first == second,
            secs(elapsed)
        ),
    );
}
