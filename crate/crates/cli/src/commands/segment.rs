//! `acsr segment`: attention maps -> banded attention paths -> movement
//! onsets -> phone-aligned segmentations, with optional SVG renderings of
//! the maps and of automatic-vs-manual timelines.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use serde_json::json;

use acsr_core::ctc::ctc_greedy_decode;
use acsr_core::features::Modality;
use acsr_core::model::load_checkpoint;
use acsr_core::segmentation::{
    assign_boundaries, attention_path, detect_onsets, read_annotation_tsv, write_segments_jsonl,
    Onset,
};
use acsr_core::synth::Split;

use crate::commands::load_bundle;
use crate::manifest::Manifest;
use crate::render::{render_attention_svg, render_segmentation_svg};
use crate::summary::write_summary;
use crate::{runtime, usage, CliError};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub streams: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Sakoe-Chiba band half-width in frames.
    #[arg(long, default_value_t = 30)]
    pub band: usize,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Streams to segment (hand_position is runnable but uncalibrated).
    #[arg(long, value_delimiter = ',', default_values_t = vec!["lips".to_string(), "hand_shape".to_string()])]
    pub modalities: Vec<String>,
    /// Also write attention-map and timeline SVGs.
    #[arg(long)]
    pub svg: bool,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let split = match args.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(crate::CliError::Usage(anyhow!("unknown split {other:?}"))),
    };
    let modalities: Vec<Modality> = usage(
        args.modalities
            .iter()
            .map(|m| {
                Modality::parse(m).ok_or_else(|| anyhow!("unknown modality {m:?}"))
            })
            .collect::<Result<Vec<_>>>(),
    )?;
    let (manifest, base) = usage(Manifest::load(&args.manifest))?;
    let checkpoint = usage(
        std::fs::read_to_string(&args.model)
            .with_context(|| format!("read checkpoint {}", args.model.display())),
    )?;
    let (model, inventory) = usage(load_checkpoint(&checkpoint).map_err(Into::into))?;

    runtime((|| -> Result<()> {
        std::fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("create {}", args.out_dir.display()))?;
        let mut processed = 0usize;
        let mut skipped: Vec<String> = Vec::new();

        for entry in manifest.split(split) {
            let bundle = load_bundle(&args.streams, &entry.id)?;
            let (post, maps) = model.forward(&bundle).map_err(anyhow::Error::from)?;
            let phones = ctc_greedy_decode(&post);
            if phones.is_empty() {
                skipped.push(entry.id.clone());
                continue;
            }

            let mut segmentations = Vec::new();
            let mut onsets_by_modality: BTreeMap<String, Vec<Onset>> = BTreeMap::new();
            for &modality in &modalities {
                let map = maps
                    .iter()
                    .find(|m| m.stream == modality)
                    .expect("forward returns all three maps");
                let path = attention_path(map, args.band).map_err(anyhow::Error::from)?;
                let onsets = detect_onsets(&path);
                let segmentation =
                    assign_boundaries(&onsets, &phones, bundle.frames(), modality)
                        .map_err(anyhow::Error::from)?;

                if args.svg {
                    let svg = render_attention_svg(map, &path, &onsets)?;
                    std::fs::write(
                        args.out_dir.join(format!("{}.{}.svg", entry.id, modality)),
                        svg,
                    )?;
                    if let Some(annotations) = &entry.annotations {
                        let text = std::fs::read_to_string(base.join(annotations))?;
                        let tiers = read_annotation_tsv(&text, bundle.rate(), &inventory)
                            .map_err(anyhow::Error::from)?;
                        if let Some(manual) = tiers.get(&modality) {
                            let mut manual = manual.clone();
                            let mut auto = segmentation.clone();
                            let frames = manual.frames.max(auto.frames);
                            manual.frames = frames;
                            auto.frames = frames;
                            let svg = render_segmentation_svg(&auto, &manual, &inventory)?;
                            std::fs::write(
                                args.out_dir
                                    .join(format!("{}.{}.timeline.svg", entry.id, modality)),
                                svg,
                            )?;
                        }
                    }
                }

                onsets_by_modality.insert(modality.as_str().to_string(), onsets);
                segmentations.push(segmentation);
            }

            std::fs::write(
                args.out_dir.join(format!("{}.segments.jsonl", entry.id)),
                write_segments_jsonl(&segmentations, &inventory).map_err(anyhow::Error::from)?,
            )?;
            std::fs::write(
                args.out_dir.join(format!("{}.onsets.json", entry.id)),
                serde_json::to_string(&onsets_by_modality)?,
            )?;
            processed += 1;
        }

        write_summary(
            &args.out_dir,
            "segment",
            json!({
                "band": args.band,
                "split": args.split,
                "modalities": args.modalities,
                "svg": args.svg,
            }),
            json!({ "segment_files": processed }),
            json!({ "processed": processed, "skipped_empty_decode": skipped }),
        )
    })())
}
