//! `acsr decode`: greedy phone decoding or lexicon-constrained beam search
//! with optional LM fusion and top-K rescoring. Writes a combined
//! `decoded.jsonl` plus one N-best file per utterance in beam mode.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use serde_json::json;

use acsr_core::ctc::{ctc_greedy_decode, PhoneInventory};
use acsr_core::model::load_checkpoint;
use acsr_core::search::{
    beam_search, load_arpa, load_lexicon, rescore_topk, DecodeConfig, DecodedHypothesis,
    ExternalScorer, Lexicon, LmScorer, NGramChainScorer, SearchError,
};
use acsr_core::synth::Split;

use crate::commands::load_bundle;
use crate::manifest::Manifest;
use crate::summary::write_summary;
use crate::{runtime, usage, CliError};

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Greedy,
    Beam,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Rescore {
    None,
    /// In-process chain-rule scorer over an ARPA model.
    Ngram,
    /// External process speaking the NDJSON rescorer protocol.
    External,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub streams: PathBuf,
    /// Model checkpoint from `acsr train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Greedy)]
    pub mode: Mode,
    /// Which split to decode.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Pronunciation lexicon (beam mode).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// ARPA language model fused during the beam search.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub beam_width: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lm_weight: f64,
    #[arg(long, default_value_t = 0.0)]
    pub word_score: f64,
    #[arg(long, default_value_t = 30)]
    pub nbest: usize,
    #[arg(long, value_enum, default_value_t = Rescore::None)]
    pub rescore: Rescore,
    /// ARPA model for ngram rescoring; defaults to --lm.
    #[arg(long)]
    pub rescore_lm: Option<PathBuf>,
    /// External rescorer command line (program plus arguments).
    #[arg(long)]
    pub scorer_cmd: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub scorer_timeout_secs: u64,
}

fn parse_split(text: &str) -> Result<Split> {
    match text {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(anyhow!("unknown split {other:?} (expected train or test)")),
    }
}

/// First-pronunciation phone transcript of a word sequence, for phone-level
/// scoring of word decodes.
fn words_to_phones(words: &[String], lexicon: &Lexicon, inventory: &PhoneInventory) -> String {
    let mut symbols: Vec<String> = Vec::new();
    for word in words {
        if let Some(pron) = lexicon.pronunciation(word) {
            symbols.extend(
                pron.iter().filter_map(|&c| inventory.symbol(c).map(str::to_string)),
            );
        }
    }
    symbols.join(" ")
}

pub fn run(args: Args) -> Result<(), CliError> {
    let split = usage(parse_split(&args.split))?;
    let (manifest, _) = usage(Manifest::load(&args.manifest))?;
    let checkpoint = usage(
        std::fs::read_to_string(&args.model)
            .with_context(|| format!("read checkpoint {}", args.model.display())),
    )?;
    let (model, inventory) = usage(load_checkpoint(&checkpoint).map_err(Into::into))?;

    let lexicon = match &args.lexicon {
        Some(path) => {
            let text = usage(
                std::fs::read_to_string(path)
                    .with_context(|| format!("read lexicon {}", path.display())),
            )?;
            Some(usage(
                load_lexicon(&text, &inventory).with_context(|| format!("{}", path.display())),
            )?)
        }
        None => None,
    };
    let lm = match &args.lm {
        Some(path) => {
            let text = usage(
                std::fs::read_to_string(path)
                    .with_context(|| format!("read LM {}", path.display())),
            )?;
            Some(usage(load_arpa(&text).with_context(|| format!("{}", path.display())))?)
        }
        None => None,
    };
    let rescore_lm = match (&args.rescore, &args.rescore_lm) {
        (Rescore::Ngram, Some(path)) => {
            let text = usage(
                std::fs::read_to_string(path)
                    .with_context(|| format!("read rescore LM {}", path.display())),
            )?;
            Some(usage(load_arpa(&text).with_context(|| format!("{}", path.display())))?)
        }
        (Rescore::Ngram, None) => lm.clone(),
        _ => None,
    };

    if args.mode == Mode::Beam && lexicon.is_none() {
        return Err(CliError::Usage(anyhow!("beam decoding requires --lexicon")));
    }
    if args.rescore == Rescore::Ngram && rescore_lm.is_none() {
        return Err(CliError::Usage(anyhow!(
            "--rescore ngram needs --rescore-lm or --lm"
        )));
    }
    let external_scorer = match (&args.rescore, &args.scorer_cmd) {
        (Rescore::External, Some(cmd)) => {
            let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            let (program, rest) = usage(
                parts
                    .split_first()
                    .map(|(p, r)| (p.clone(), r.to_vec()))
                    .ok_or_else(|| anyhow!("empty --scorer-cmd")),
            )?;
            Some(usage(
                ExternalScorer::spawn(
                    &program,
                    &rest,
                    Duration::from_secs(args.scorer_timeout_secs),
                )
                .map_err(Into::into),
            )?)
        }
        (Rescore::External, None) => {
            return Err(CliError::Usage(anyhow!("--rescore external needs --scorer-cmd")))
        }
        _ => None,
    };

    runtime((|| -> Result<()> {
        std::fs::create_dir_all(&args.out_dir)
            .with_context(|| format!("create {}", args.out_dir.display()))?;
        let decode_config = DecodeConfig {
            beam_width: args.beam_width,
            lm_weight: args.lm_weight,
            word_score: args.word_score,
            n_best: args.nbest,
        };

        let mut decoded_lines = String::new();
        let mut empty_decodes = 0usize;
        let mut rescore_fallbacks = 0usize;
        let mut processed = 0usize;

        for entry in manifest.split(split) {
            let bundle = load_bundle(&args.streams, &entry.id)?;
            let (post, _) = model.forward(&bundle).map_err(anyhow::Error::from)?;
            processed += 1;

            match args.mode {
                Mode::Greedy => {
                    let phones = ctc_greedy_decode(&post).to_symbols(&inventory).join(" ");
                    decoded_lines.push_str(
                        &json!({ "id": entry.id, "phones": phones }).to_string(),
                    );
                    decoded_lines.push('\n');
                }
                Mode::Beam => {
                    let lexicon = lexicon.as_ref().expect("checked above");
                    let nbest = match beam_search(&post, lexicon, lm.as_ref(), &decode_config) {
                        Ok(nbest) => nbest,
                        Err(SearchError::EmptyDecode) => {
                            empty_decodes += 1;
                            decoded_lines.push_str(
                                &json!({ "id": entry.id, "words": "", "phones": "", "empty_decode": true })
                                    .to_string(),
                            );
                            decoded_lines.push('\n');
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };

                    let (chosen, perplexities): (Vec<String>, Vec<Option<f64>>) = match args.rescore
                    {
                        Rescore::None => (nbest[0].words.clone(), vec![None; nbest.len()]),
                        Rescore::Ngram => {
                            let lm = rescore_lm.as_ref().expect("checked above");
                            let scorer = NGramChainScorer { model: lm };
                            rescore_with(&nbest, &scorer, &mut rescore_fallbacks)
                        }
                        Rescore::External => {
                            let scorer = external_scorer.as_ref().expect("checked above");
                            rescore_with(&nbest, scorer, &mut rescore_fallbacks)
                        }
                    };

                    let mut nbest_lines = String::new();
                    for (rank, (hyp, ppl)) in nbest.iter().zip(&perplexities).enumerate() {
                        nbest_lines.push_str(
                            &json!({
                                "rank": rank + 1,
                                "words": hyp.words.join(" "),
                                "beam_score": hyp.score,
                                "perplexity": ppl,
                            })
                            .to_string(),
                        );
                        nbest_lines.push('\n');
                    }
                    std::fs::write(
                        args.out_dir.join(format!("{}.nbest.jsonl", entry.id)),
                        nbest_lines,
                    )?;

                    decoded_lines.push_str(
                        &json!({
                            "id": entry.id,
                            "words": chosen.join(" "),
                            "phones": words_to_phones(&chosen, lexicon, &inventory),
                        })
                        .to_string(),
                    );
                    decoded_lines.push('\n');
                }
            }
        }

        std::fs::write(args.out_dir.join("decoded.jsonl"), decoded_lines)?;
        write_summary(
            &args.out_dir,
            "decode",
            json!({
                "mode": match args.mode { Mode::Greedy => "greedy", Mode::Beam => "beam" },
                "split": args.split,
                "beam_width": decode_config.beam_width,
                "lm_weight": decode_config.lm_weight,
                "word_score": decode_config.word_score,
                "nbest": decode_config.n_best,
                "lexicon": args
                    .lexicon
                    .as_ref()
                    .and_then(|p| p.file_name())
                    .map(|n| n.to_string_lossy().to_string()),
                "lm": args
                    .lm
                    .as_ref()
                    .and_then(|p| p.file_name())
                    .map(|n| n.to_string_lossy().to_string()),
                "rescore": match args.rescore {
                    Rescore::None => "none",
                    Rescore::Ngram => "ngram",
                    Rescore::External => "external",
                },
            }),
            json!({ "decoded": "decoded.jsonl" }),
            json!({
                "utterances": processed,
                "empty_decodes": empty_decodes,
                "rescore_fallbacks": rescore_fallbacks,
            }),
        )
    })())
}

fn rescore_with(
    nbest: &[DecodedHypothesis],
    scorer: &dyn LmScorer,
    fallbacks: &mut usize,
) -> (Vec<String>, Vec<Option<f64>>) {
    match rescore_topk(nbest, scorer) {
        Ok(outcome) => {
            if outcome.fell_back {
                *fallbacks += 1;
                (outcome.chosen, vec![None; nbest.len()])
            } else {
                let ppls = outcome
                    .perplexities
                    .iter()
                    .map(|&p| if p.is_finite() { Some(p) } else { None })
                    .collect();
                (outcome.chosen, ppls)
            }
        }
        Err(_) => {
            *fallbacks += 1;
            (nbest[0].words.clone(), vec![None; nbest.len()])
        }
    }
}
