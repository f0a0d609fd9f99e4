//! `acsr synth`: writes a complete synthetic dataset: landmark files, stream
//! files, ground-truth annotation TSVs, phone inventory, lexicon, bigram LM,
//! and the manifest tying them together.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::json;

use acsr_core::features::write_landmarks_jsonl;
use acsr_core::segmentation::write_annotation_tsv;
use acsr_core::synth::{synth_corpus, Split, SynthConfig, SynthCorpus};

use crate::manifest::{Manifest, ManifestEntry};
use crate::summary::write_summary;
use crate::{runtime, usage, CliError};

#[derive(clap::Args)]
pub struct Args {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON file with the generator config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn load_config(args: &Args) -> Result<SynthConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("read config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

pub fn run(args: Args) -> Result<(), CliError> {
    let config = usage(load_config(&args))?;
    let corpus = usage(synth_corpus(&config).map_err(Into::into))?;
    runtime(write_corpus(&args.out_dir, &corpus))
}

fn write_corpus(out_dir: &std::path::Path, corpus: &SynthCorpus) -> Result<()> {
    for sub in ["landmarks", "streams", "annotations"] {
        std::fs::create_dir_all(out_dir.join(sub))
            .with_context(|| format!("create {}/{sub}", out_dir.display()))?;
    }
    std::fs::write(out_dir.join("inventory.txt"), corpus.inventory.to_text())?;
    std::fs::write(out_dir.join("lexicon.txt"), &corpus.lexicon_text)?;
    std::fs::write(out_dir.join("lm.arpa"), &corpus.bigram_arpa)?;
    std::fs::write(out_dir.join("rescore.arpa"), &corpus.trigram_arpa)?;

    let mut entries = Vec::with_capacity(corpus.utterances.len());
    for utt in &corpus.utterances {
        let landmarks = PathBuf::from(format!("landmarks/{}.jsonl", utt.id));
        std::fs::write(out_dir.join(&landmarks), write_landmarks_jsonl(&utt.landmarks))?;

        let streams = out_dir.join(format!("streams/{}.json", utt.id));
        std::fs::write(&streams, utt.bundle.to_json())?;

        let annotations = PathBuf::from(format!("annotations/{}.tsv", utt.id));
        let tiers: BTreeMap<_, _> = utt.truth.clone();
        std::fs::write(
            out_dir.join(&annotations),
            write_annotation_tsv(&tiers, corpus.config.rate, &corpus.inventory)
                .map_err(anyhow::Error::from)?,
        )?;

        entries.push(ManifestEntry {
            id: utt.id.clone(),
            split: utt.split,
            landmarks: Some(landmarks),
            phones: utt.labels.to_symbols(&corpus.inventory).join(" "),
            words: utt.words.join(" "),
            annotations: Some(annotations),
        });
    }
    Manifest::new(entries).save(&out_dir.join("manifest.json"))?;

    let train = corpus.split(Split::Train).count();
    let test = corpus.split(Split::Test).count();
    write_summary(
        out_dir,
        "synth",
        serde_json::to_value(&corpus.config)?,
        json!({
            "manifest": "manifest.json",
            "inventory": "inventory.txt",
            "lexicon": "lexicon.txt",
            "lm": "lm.arpa",
            "rescore_lm": "rescore.arpa",
        }),
        json!({
            "train_utterances": train,
            "test_utterances": test,
            "lexicon_entries": corpus.lexicon_text.lines().count(),
        }),
    )
}
