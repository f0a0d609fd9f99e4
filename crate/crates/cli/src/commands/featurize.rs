//! `acsr featurize`: fits the PCA/k-means feature pipeline on the training
//! split's landmarks and writes per-utterance stream files.

use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::json;

use acsr_core::features::{fit_pipeline, read_landmarks_jsonl, LandmarkSequence, PipelineConfig};
use acsr_core::synth::Split;

use crate::manifest::Manifest;
use crate::summary::write_summary;
use crate::{runtime, usage, CliError};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for pipeline.json and the stream files.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 20)]
    pub pca_dims: usize,
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let (manifest, base) = usage(Manifest::load(&args.manifest))?;
    let mut sequences: Vec<(String, LandmarkSequence)> = Vec::new();
    for entry in &manifest.utterances {
        let path = usage(
            entry
                .landmarks
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("{}: no landmark file in manifest", entry.id)),
        )?;
        let text = usage(
            std::fs::read_to_string(base.join(path))
                .with_context(|| format!("read {}", path.display())),
        )?;
        let seq = usage(
            read_landmarks_jsonl(&text).with_context(|| format!("{}: landmarks", entry.id)),
        )?;
        sequences.push((entry.id.clone(), seq));
    }

    let config = PipelineConfig {
        rate: args.rate,
        pca_components: args.pca_dims,
        position_clusters: args.clusters,
        seed: args.seed,
    };
    let train_ids: std::collections::HashSet<&str> = manifest
        .split(Split::Train)
        .map(|e| e.id.as_str())
        .collect();
    let fit_on: Vec<LandmarkSequence> = sequences
        .iter()
        .filter(|(id, _)| train_ids.contains(id.as_str()))
        .map(|(_, seq)| seq.clone())
        .collect();
    let pipeline = runtime(fit_pipeline(&fit_on, &config).map_err(Into::into))?;

    runtime((|| -> Result<()> {
        std::fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("create {}", args.out_dir.display()))?;
        std::fs::write(args.out_dir.join("pipeline.json"), pipeline.to_json())?;
        for (id, seq) in &sequences {
            let bundle = pipeline.apply(seq, id).map_err(anyhow::Error::from)?;
            std::fs::write(args.out_dir.join(format!("{id}.json")), bundle.to_json())?;
        }
        let explained: f64 = pipeline.lips_pca.explained_variance_ratio.iter().sum::<f64>();
        let explained_hand: f64 = pipeline.hand_pca.explained_variance_ratio.iter().sum::<f64>();
        write_summary(
            &args.out_dir,
            "featurize",
            json!({
                "rate": config.rate,
                "pca_components": config.pca_components,
                "position_clusters": config.position_clusters,
                "seed": config.seed,
            }),
            json!({ "pipeline": "pipeline.json", "streams": sequences.len() }),
            json!({
                "lips_explained_variance": explained,
                "hand_explained_variance": explained_hand,
                "fit_utterances": fit_on.len(),
            }),
        )
    })())
}
