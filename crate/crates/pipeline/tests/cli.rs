mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::{harmovid, run_ok, tiny_config, write_config};
use harmovid_core::synthesis::{DatasetConfig, Split};
use harmovid_pipeline::commands::{load_deflicker, load_harmonizer, load_scenes, DEFLICKER_CHECKPOINT};
use harmovid_pipeline::experiment;
use harmovid_pipeline::io::{read_video, write_mask, write_video};
use harmovid_pipeline::manifest::{hash_path, read_manifest};
use serde_json::Value;

fn report(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for root in [&a, &b, &c] {
        write_config(root, &tiny_config());
    }
    run_ok(&a, &["gen-data"]);
    run_ok(&b, &["gen-data"]);
    assert_eq!(hash_path(&a.join("data")).unwrap(), hash_path(&b.join("data")).unwrap());

    let out = Command::new(env!("CARGO_BIN_EXE_harmovid"))
        .args(["--config", c.join("harmovid.json").to_str().unwrap()])
        .args(["--out-root", c.to_str().unwrap(), "gen-data"])
        .env("RUST_LOG", "warn")
        .env("HARMOVID_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(hash_path(&a.join("data")).unwrap(), hash_path(&c.join("data")).unwrap());

    for set in ["single_lut", "flicker"] {
        assert!(a.join("data/eval").join(set).join("00002").is_dir(), "{set}");
    }
    for stream in ["real", "mask", "alpha", "synthetic_bg", "stage1", "inpainted_bg"] {
        assert!(a.join("data/train/00000").join(stream).join("00007.png").is_file(), "{stream}");
    }
}

#[test]
fn pipeline_commands_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = tiny_config();
    write_config(root, &cfg);
    run_ok(root, &["gen-data"]);

    let early = harmovid(root, &["train-harmonizer"]);
    assert!(!early.status.success());
    assert!(String::from_utf8_lossy(&early.stderr).contains("refine"));

    run_ok(root, &["train-deflicker"]);
    let losses = fs::read_to_string(root.join(DEFLICKER_CHECKPOINT).join("loss.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + cfg.deflicker.iterations);

    let train = load_scenes(root, Split::Train).unwrap();
    let (fresh, _) = experiment::train_deflicker(&cfg, &train).unwrap();
    let (loaded, manifest) = load_deflicker(&root.join(DEFLICKER_CHECKPOINT)).unwrap();
    let bits = |p: &[f32]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert!(bits(fresh.net.params()) == bits(loaded.net.params()), "reloaded parameters differ");
    assert_eq!(manifest.provenance["iterations"], cfg.deflicker.iterations);
    assert!(load_harmonizer(&root.join(DEFLICKER_CHECKPOINT)).is_err());

    run_ok(root, &["refine"]);
    assert!(root.join("data/train/00001/refined/00000.png").is_file());
    let summary = report(&root.join("reports/refine/summary.json"));
    assert_eq!(summary["clips"], 2);

    run_ok(root, &["train-harmonizer"]);
    run_ok(root, &["train-harmonizer", "--single-path", "s2r", "--binary-only"]);
    assert!(root.join("checkpoints/harmonizer/only_synth_to_real_binary").is_dir());

    let pair = "data/eval/single_lut/00002";
    let ckpt = "checkpoints/harmonizer/dual";
    let harmonize = |out: &str, fg: &str, bg: &str, mask: &str| {
        harmovid(
            root,
            &[
                "harmonize",
                "--checkpoint",
                ckpt,
                "--fg",
                fg,
                "--bg",
                bg,
                "--mask",
                mask,
                "--out",
                out,
            ],
        )
    };
    let short = harmonize("out8", &format!("{pair}/input"), &format!("{pair}/background"), &format!("{pair}/mask"));
    assert!(short.status.success(), "{}", String::from_utf8_lossy(&short.stderr));
    assert_eq!(read_video(&root.join("out8")).unwrap().frames(), 8);
    let again = harmonize("again8", &format!("{pair}/input"), &format!("{pair}/background"), &format!("{pair}/mask"));
    assert!(again.status.success());
    let frames = |d: &str| {
        (0..8)
            .map(|t| fs::read(root.join(d).join(format!("{t:05}.png"))).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(frames("out8"), frames("again8"));

    let long = DatasetConfig {
        frames: 24,
        ..cfg.dataset.clone()
    }
    .generate(0)
    .unwrap();
    write_video(&root.join("long/fg"), &long.real).unwrap();
    write_video(&root.join("long/bg"), &long.synthetic_bg).unwrap();
    write_mask(&root.join("long/mask"), &long.mask).unwrap();
    let out = harmonize("out24", "long/fg", "long/bg", "long/mask");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_video(&root.join("out24")).unwrap().frames(), 24);

    let mismatched = harmonize("bad", &format!("{pair}/input"), "long/bg", &format!("{pair}/mask"));
    assert!(!mismatched.status.success());
    let missing = harmonize("bad", &format!("{pair}/input"), &format!("{pair}/background"), "nowhere");
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere"));

    let target = format!("{pair}/target");
    run_ok(
        root,
        &["evaluate", "--pred", &target, "--reference", &target, "--mask", &format!("{pair}/mask"), "--out", "same.json"],
    );
    let same = report(&root.join("same.json"));
    assert_eq!(same["psnr"]["value"], "inf");
    assert_eq!(same["rmse"]["value"], 0.0);
    assert_eq!(same["motion_pres"]["value"], 0.0);
    assert!(same["laplacian_var"]["value"].is_number());
    assert!(same["tenengrad"]["value"].is_number());

    run_ok(root, &["evaluate", "--pred", "out8", "--reference", &target, "--out", "unmasked.json"]);
    let unmasked = report(&root.join("unmasked.json"));
    assert!(unmasked["psnr"]["value"].is_number());
    assert!(unmasked.get("laplacian_var").is_none() && unmasked.get("tenengrad").is_none());

    let gone = harmovid(root, &["evaluate", "--pred", "missing", "--reference", &target]);
    assert!(!gone.status.success());

    let records = read_manifest(root).unwrap();
    let stages: Vec<&str> = records.iter().map(|r| r.stage.as_str()).collect();
    assert_eq!(
        stages,
        [
            "gen-data",
            "train-deflicker",
            "refine",
            "train-harmonizer",
            "train-harmonizer",
            "harmonize",
            "harmonize",
            "harmonize",
            "evaluate",
            "evaluate"
        ]
    );
    assert!(records.iter().all(|r| r.config_hash == records[0].config_hash));
    assert!(records[3].outputs[0].sha256.len() == 64);
}
