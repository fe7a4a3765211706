#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use harmovid_core::diffusion::NetConfig;
use harmovid_pipeline::config::PipelineConfig;
use harmovid_pipeline::manifest::RunManifest;

/// A configuration small enough to run every command in seconds.
pub fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::toy();
    cfg.dataset.count = 2;
    cfg.dataset.test_count = 1;
    cfg.dataset.frames = 8;
    cfg.dataset.height = 16;
    cfg.dataset.width = 16;
    cfg.net = NetConfig {
        width: 16,
        heads: 2,
        blocks: 1,
        ..NetConfig::default()
    };
    for recipe in [&mut cfg.deflicker, &mut cfg.harmonizer] {
        recipe.iterations = 6;
        recipe.warmup = 0;
    }
    cfg.inference.sample.steps = Some(4);
    cfg
}

pub fn write_config(root: &Path, cfg: &PipelineConfig) {
    std::fs::create_dir_all(root).unwrap();
    std::fs::write(root.join("harmovid.json"), serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

/// Runs the CLI in `root` with `root/harmovid.json`.
pub fn harmovid(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmovid"))
        .args(["--config", root.join("harmovid.json").to_str().unwrap()])
        .args(["--out-root", root.to_str().unwrap()])
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("HARMOVID_SEED")
        .output()
        .expect("harmovid runs")
}

/// Runs a command that must succeed and parses its run record.
pub fn run_ok(root: &Path, args: &[&str]) -> RunManifest {
    let out = harmovid(root, args);
    assert!(
        out.status.success(),
        "harmovid {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("run record on stdout")
}
