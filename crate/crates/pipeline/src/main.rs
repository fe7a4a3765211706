use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use harmovid_core::stages::MaskPolicy;
use harmovid_core::synthesis::PathTag;
use harmovid_pipeline::commands::{self, Context, EvaluateArgs, HarmonizeArgs};
use harmovid_pipeline::config::PipelineConfig;
use harmovid_pipeline::experiment::HarmonizerVariant;

#[derive(Parser)]
#[command(name = "harmovid", version, about = "Synthetic-data video harmonization pipeline")]
struct Cli {
    /// JSON pipeline config. `HARMOVID_SEED` overrides its seed.
    #[arg(long, global = true, default_value = "harmovid.json")]
    config: PathBuf,
    /// Root directory for every input and output path.
    #[arg(long, global = true, default_value = ".")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Path {
    R2s,
    S2r,
}

#[derive(Subcommand)]
enum Command {
    /// Render scenes, Stage-1 videos and the evaluation sets.
    GenData,
    /// Train the lighting deflicker model.
    TrainDeflicker,
    /// Deflicker the Stage-1 videos with a trained model.
    Refine {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the dual-path harmonizer or one of its ablations.
    TrainHarmonizer {
        /// Train on raw Stage-1 videos instead of refined ones.
        #[arg(long)]
        no_stage2: bool,
        #[arg(long, value_enum)]
        single_path: Option<Path>,
        /// Binary masks on both paths.
        #[arg(long)]
        binary_only: bool,
    },
    /// Harmonize a foreground onto a background.
    Harmonize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        fg: PathBuf,
        #[arg(long)]
        bg: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Soft matte used for compositing and conditioning instead of the mask.
        #[arg(long)]
        alpha: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Compute a metric report for predicted frames against a reference.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value = "reports/evaluate.json")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (config, text) = PipelineConfig::load(&cli.config)?;
    std::fs::create_dir_all(&cli.out_root)?;
    let ctx = Context::new(cli.out_root, config, text);
    let record = match cli.command {
        Command::GenData => commands::gen_data(&ctx)?,
        Command::TrainDeflicker => commands::train_deflicker(&ctx)?,
        Command::Refine { checkpoint } => commands::refine(&ctx, checkpoint.as_deref())?,
        Command::TrainHarmonizer {
            no_stage2,
            single_path,
            binary_only,
        } => commands::train_harmonizer(
            &ctx,
            HarmonizerVariant {
                single_path: single_path.map(|p| match p {
                    Path::R2s => PathTag::RealToSynth,
                    Path::S2r => PathTag::SynthToReal,
                }),
                policy: if binary_only {
                    MaskPolicy::BinaryOnly
                } else {
                    MaskPolicy::Asymmetric
                },
                stage2: !no_stage2,
            },
        )?,
        Command::Harmonize {
            checkpoint,
            fg,
            bg,
            mask,
            alpha,
            out,
            reference,
        } => commands::harmonize_cmd(
            &ctx,
            &HarmonizeArgs {
                checkpoint,
                fg,
                bg,
                mask,
                alpha,
                out,
                reference,
            },
        )?,
        Command::Evaluate {
            pred,
            reference,
            mask,
            out,
        } => commands::evaluate(&ctx, &EvaluateArgs { pred, reference, mask, out })?.0,
    };
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}
