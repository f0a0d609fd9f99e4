//! `acsr train`: trains the three-stream CTC model on the training split and
//! writes the checkpoint plus a CSV training log.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::json;

use acsr_core::model::{save_checkpoint, train, AcsrModel, ModelConfig, TrainingConfig};
use acsr_core::synth::Split;

use crate::commands::{entry_labels, load_bundle, load_inventory};
use crate::manifest::Manifest;
use crate::summary::write_summary;
use crate::{runtime, usage, CliError};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of per-utterance stream files (from synth or featurize).
    #[arg(long)]
    pub streams: PathBuf,
    #[arg(long)]
    pub inventory: PathBuf,
    /// Checkpoint output path; the CSV log lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 120)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub d_k: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.5)]
    pub factor: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub min_learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let (manifest, base) = usage(Manifest::load(&args.manifest))?;
    let _ = base;
    let inventory = usage(load_inventory(&args.inventory))?;

    let mut corpus = Vec::new();
    for entry in manifest.split(Split::Train) {
        let bundle = usage(load_bundle(&args.streams, &entry.id))?;
        let labels = usage(entry_labels(entry, &inventory))?;
        corpus.push((bundle, labels));
    }
    usage(if corpus.is_empty() {
        Err(anyhow::anyhow!("manifest has no training utterances"))
    } else {
        Ok(())
    })?;

    let first = &corpus[0].0;
    let config = ModelConfig {
        lips_dim: first.lips.dim(),
        hand_shape_dim: first.hand_shape.dim(),
        hand_position_dim: first.hand_position.dim(),
        hidden: args.hidden,
        d_k: args.d_k,
        num_phones: inventory.num_phones(),
        seed: args.seed,
    };
    let train_config = TrainingConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        plateau_patience: args.patience,
        plateau_factor: args.factor,
        min_learning_rate: args.min_learning_rate,
        seed: args.seed,
    };

    let mut model = AcsrModel::init(config.clone());
    let history = runtime(train(&mut model, &corpus, &train_config).map_err(Into::into))?;

    runtime((|| -> Result<()> {
        let out_dir = args.out.parent().map(PathBuf::from).unwrap_or_else(|| ".".into());
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("create {}", out_dir.display()))?;
        std::fs::write(&args.out, save_checkpoint(&model, &inventory))
            .with_context(|| format!("write {}", args.out.display()))?;

        let mut log = String::from("epoch,mean_loss,learning_rate\n");
        for stats in &history {
            log.push_str(&format!(
                "{},{},{}\n",
                stats.epoch, stats.mean_loss, stats.learning_rate
            ));
        }
        let log_path = args.out.with_extension("log.csv");
        std::fs::write(&log_path, log)?;

        let Some(final_stats) = history.last() else {
            bail!("training produced no epochs");
        };
        write_summary(
            &out_dir,
            "train",
            serde_json::to_value(&train_config)?,
            json!({
                "checkpoint": args.out.file_name().map(|n| n.to_string_lossy().to_string()),
                "log": log_path.file_name().map(|n| n.to_string_lossy().to_string()),
            }),
            json!({
                "utterances": corpus.len(),
                "parameters": model.param_count(),
                "final_mean_loss": final_stats.mean_loss,
                "final_learning_rate": final_stats.learning_rate,
            }),
        )
    })())
}
