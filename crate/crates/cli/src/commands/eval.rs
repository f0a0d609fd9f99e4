//! `acsr eval`: scores decoded transcripts (word and phone Corr/Acc with
//! Wilson intervals) against manifest references, and evaluates produced
//! segmentations against manual annotations (mean tIoU, onset hit rate,
//! hand-lip asynchrony).

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;
use serde_json::json;

use acsr_core::features::Modality;
use acsr_core::metrics::{edit_align, render_table, EditAlignment, ScoreReport};
use acsr_core::segmentation::{
    asynchrony_profile, read_annotation_tsv, read_segments_jsonl, tiou, Onset,
};
use acsr_core::synth::Split;

use crate::commands::load_inventory;
use crate::manifest::Manifest;
use crate::summary::write_summary;
use crate::{runtime, usage, CliError};

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// decoded.jsonl from `acsr decode`.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// Directory of segment/onset files from `acsr segment`.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Inventory, required with --segments.
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    /// Stream frame rate used to convert annotation times.
    #[arg(long, default_value_t = 60.0)]
    pub rate: f64,
    /// Detected onsets count as hits within this many frames of a true one.
    #[arg(long, default_value_t = 5)]
    pub onset_tolerance: usize,
    #[arg(long, default_value_t = 95.0)]
    pub confidence: f64,
}

#[derive(Deserialize)]
struct DecodedLine {
    id: String,
    #[serde(default)]
    words: Option<String>,
    #[serde(default)]
    phones: Option<String>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let split = match args.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(CliError::Usage(anyhow!("unknown split {other:?}"))),
    };
    let (manifest, base) = usage(Manifest::load(&args.manifest))?;
    if args.hyp.is_none() && args.segments.is_none() {
        return Err(CliError::Usage(anyhow!("nothing to do: pass --hyp and/or --segments")));
    }

    let mut report = serde_json::Map::new();
    let mut table: Vec<(String, ScoreReport)> = Vec::new();

    if let Some(hyp_path) = &args.hyp {
        let text = usage(
            std::fs::read_to_string(hyp_path)
                .with_context(|| format!("read {}", hyp_path.display())),
        )?;
        let mut hyps: BTreeMap<String, DecodedLine> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DecodedLine = usage(
                serde_json::from_str(line)
                    .with_context(|| format!("{}:{}", hyp_path.display(), lineno + 1)),
            )?;
            hyps.insert(parsed.id.clone(), parsed);
        }

        let mut word_agg = EditAlignment::default();
        let mut phone_agg = EditAlignment::default();
        let mut scored_words = 0usize;
        let mut scored_phones = 0usize;
        let mut missing = 0usize;
        for entry in manifest.split(split) {
            let Some(hyp) = hyps.get(&entry.id) else {
                missing += 1;
                continue;
            };
            if let Some(words) = &hyp.words {
                let hyp_words: Vec<&str> = words.split_whitespace().collect();
                let ref_words: Vec<&str> = entry.words.split_whitespace().collect();
                word_agg.accumulate(&edit_align(&ref_words, &hyp_words));
                scored_words += 1;
            }
            if let Some(phones) = &hyp.phones {
                let hyp_phones: Vec<&str> = phones.split_whitespace().collect();
                let ref_phones = entry.phone_symbols();
                phone_agg.accumulate(&edit_align(&ref_phones, &hyp_phones));
                scored_phones += 1;
            }
        }

        let mut transcripts = serde_json::Map::new();
        if scored_phones > 0 && phone_agg.n > 0 {
            let score = runtime(
                ScoreReport::from_alignment(&phone_agg, args.confidence).map_err(Into::into),
            )?;
            transcripts.insert("phone".into(), serde_json::to_value(&score).unwrap());
            table.push((format!("phone ({scored_phones} utts)"), score));
        }
        if scored_words > 0 && word_agg.n > 0 {
            let score = runtime(
                ScoreReport::from_alignment(&word_agg, args.confidence).map_err(Into::into),
            )?;
            transcripts.insert("word".into(), serde_json::to_value(&score).unwrap());
            table.push((format!("word ({scored_words} utts)"), score));
        }
        transcripts.insert("missing_hypotheses".into(), json!(missing));
        report.insert("transcripts".into(), transcripts.into());
    }

    if let Some(segments_dir) = &args.segments {
        let inventory_path = args
            .inventory
            .as_ref()
            .ok_or_else(|| CliError::Usage(anyhow!("--segments needs --inventory")))?;
        let inventory = usage(load_inventory(inventory_path))?;

        let mut tiou_sums: BTreeMap<Modality, (f64, usize)> = BTreeMap::new();
        let mut onset_hits: BTreeMap<Modality, (usize, usize)> = BTreeMap::new();
        let mut delays: Vec<f64> = Vec::new();
        let mut skipped_asynchrony = 0usize;

        runtime((|| -> Result<()> {
            for entry in manifest.split(split) {
                let Some(annotation_path) = &entry.annotations else { continue };
                let seg_path = segments_dir.join(format!("{}.segments.jsonl", entry.id));
                if !seg_path.exists() {
                    continue;
                }
                let annotation_text = std::fs::read_to_string(base.join(annotation_path))?;
                let truth = read_annotation_tsv(&annotation_text, args.rate, &inventory)
                    .map_err(anyhow::Error::from)?;
                let frames = truth.values().map(|s| s.frames).max().unwrap_or(0);
                let seg_text = std::fs::read_to_string(&seg_path)?;
                let predicted = read_segments_jsonl(&seg_text, &inventory, frames)
                    .map_err(anyhow::Error::from)?;
                let predicted: BTreeMap<Modality, _> =
                    predicted.into_iter().map(|s| (s.modality, s)).collect();

                for (modality, pred) in &predicted {
                    let Some(truth_seg) = truth.get(modality) else { continue };
                    let eval = tiou(truth_seg, pred).map_err(anyhow::Error::from)?;
                    let sums = tiou_sums.entry(*modality).or_insert((0.0, 0));
                    sums.0 += eval.mean;
                    sums.1 += 1;
                }

                let onsets_path = segments_dir.join(format!("{}.onsets.json", entry.id));
                if onsets_path.exists() {
                    let text = std::fs::read_to_string(&onsets_path)?;
                    let onsets: BTreeMap<String, Vec<Onset>> = serde_json::from_str(&text)
                        .with_context(|| format!("parse {}", onsets_path.display()))?;
                    for (name, detected) in &onsets {
                        let Some(modality) = Modality::parse(name) else { continue };
                        let Some(truth_seg) = truth.get(&modality) else { continue };
                        let truth_onsets = truth_seg.onset_frames();
                        let hits = onset_hits.entry(modality).or_insert((0, 0));
                        for onset in detected {
                            let nearest = truth_onsets
                                .iter()
                                .map(|&g| g.abs_diff(onset.frame))
                                .min()
                                .unwrap_or(usize::MAX);
                            hits.1 += 1;
                            if nearest <= args.onset_tolerance {
                                hits.0 += 1;
                            }
                        }
                    }
                }

                if let (Some(lips), Some(hand)) =
                    (predicted.get(&Modality::Lips), predicted.get(&Modality::HandShape))
                {
                    if lips.phone_classes() == hand.phone_classes() {
                        let profile = asynchrony_profile(lips, hand, args.rate)
                            .map_err(anyhow::Error::from)?;
                        delays.extend(profile.delays_ms.iter().map(|(_, d)| *d));
                    } else {
                        skipped_asynchrony += 1;
                    }
                }
            }
            Ok(())
        })())?;

        let mut segmentation = serde_json::Map::new();
        for (modality, (sum, count)) in &tiou_sums {
            let (hits, total) = onset_hits.get(modality).copied().unwrap_or((0, 0));
            segmentation.insert(
                modality.as_str().to_string(),
                json!({
                    "mean_tiou": sum / *count as f64,
                    "utterances": count,
                    "onsets_within_tolerance": hits,
                    "onsets_total": total,
                }),
            );
        }
        if !delays.is_empty() {
            let n = delays.len() as f64;
            let mean = delays.iter().sum::<f64>() / n;
            let var = delays.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
            segmentation.insert(
                "asynchrony".into(),
                json!({
                    "mean_hand_lead_ms": mean,
                    "std_ms": var.sqrt(),
                    "phones": delays.len(),
                    "skipped_label_mismatch": skipped_asynchrony,
                }),
            );
        }
        report.insert("segmentation".into(), segmentation.into());
    }

    runtime((|| -> Result<()> {
        std::fs::create_dir_all(&args.out_dir)?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(args.out_dir.join("report.json"), text)?;
        if !table.is_empty() {
            let rows: Vec<(&str, &ScoreReport)> =
                table.iter().map(|(label, score)| (label.as_str(), score)).collect();
            print!("{}", render_table(&rows));
        }
        write_summary(
            &args.out_dir,
            "eval",
            json!({
                "split": args.split,
                "confidence": args.confidence,
                "onset_tolerance": args.onset_tolerance,
            }),
            json!({ "report": "report.json" }),
            serde_json::Value::Object(report),
        )
    })())
}
