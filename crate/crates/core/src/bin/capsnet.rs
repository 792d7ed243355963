//! Capsule-network pipeline CLI: preprocess, train, crossval, predict,
//! embed, features. Errors go to stderr with a nonzero exit; the exit
//! code is 0 only when every declared output was written.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use capsnet_core::cli::{
    run_crossval, run_embed, run_features, run_predict, run_preprocess, run_train,
    CliError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "capsnet",
    about = "Capsule-network histology pipeline: stain normalization, patch \
             extraction, routing-by-agreement training, cross-validation, \
             prediction, and feature embedding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Path to a key=value run configuration (defaults apply if omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configuration's seed
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract labeled, color-normalized patches into a manifest
    Preprocess {
        /// Directory holding the source images
        #[arg(long)]
        input_dir: PathBuf,
        /// TSV mapping image filename to class label
        #[arg(long)]
        labels_file: PathBuf,
        /// Normalization target: a reference image path, or "dataset-mean"
        #[arg(long)]
        reference: String,
        /// What to normalize: whole, patch, or none
        #[arg(long, default_value = "whole")]
        normalize: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train one network on a patch manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the checkpoint
        #[arg(long)]
        out: PathBuf,
        /// File of source-image ids to exclude from training
        #[arg(long)]
        holdout_images: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Stratified k-fold cross-validation with per-fold artifacts
    Crossval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Classify one image by patch majority vote
    Predict {
        /// Trained checkpoint
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write class-capsule features, optionally embedded with t-SNE
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output TSV path
        #[arg(long)]
        out: PathBuf,
        /// Run t-SNE and write 2-D coordinates instead of raw features
        #[arg(long)]
        tsne: bool,
        /// Also write an SVG scatter plot (requires --tsne)
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Average patch features per source image first
        #[arg(long)]
        aggregate: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Export one conv layer's feature maps as grayscale PNGs
    Features {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Conv layer index, 1-based
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Preprocess { input_dir, labels_file, reference, normalize, out_dir, config } => {
            run_preprocess(&input_dir, &labels_file, &reference, &normalize, &out_dir, &config.load()?)
        }
        Command::Train { manifest, out, holdout_images, config } => {
            run_train(&manifest, &config.load()?, &out, holdout_images.as_deref())
        }
        Command::Crossval { manifest, out_dir, config } => {
            run_crossval(&manifest, &config.load()?, &out_dir)
        }
        Command::Predict { model, image, config } => {
            run_predict(&model, &image, &config.load()?)
        }
        Command::Embed { model, manifest, out, tsne, svg, aggregate, config } => {
            if svg.is_some() && !tsne {
                return Err(CliError::BadArgument("--svg requires --tsne".into()));
            }
            run_embed(&model, &manifest, &out, tsne, svg.as_deref(), aggregate, &config.load()?)
        }
        Command::Features { model, image, layer, out_dir } => {
            run_features(&model, &image, layer, &out_dir)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
