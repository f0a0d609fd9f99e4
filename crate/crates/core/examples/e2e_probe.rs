// Scratch probe for sizing the synthetic end-to-end run. Not part of the
// deliverable surface; run with `cargo run --example e2e_probe`.

use std::time::Instant;

use acsr_core::ctc::ctc_greedy_decode;
use acsr_core::metrics::{corr_acc, edit_align, EditAlignment};
use acsr_core::model::{train, AcsrModel, ModelConfig, TrainingConfig};
use acsr_core::search::{
    beam_search, load_arpa, load_lexicon, oracle_best, rescore_topk, DecodeConfig,
    NGramChainScorer,
};
use acsr_core::segmentation::{assign_boundaries, attention_path, detect_onsets, tiou};
use acsr_core::features::Modality;
use acsr_core::synth::{synth_corpus, Split, SynthConfig};

fn main() {
    let synth_cfg = SynthConfig::default();
    let t0 = Instant::now();
    let corpus = synth_corpus(&synth_cfg).unwrap();
    println!("synth: {:?}", t0.elapsed());

    let model_cfg = ModelConfig {
        num_phones: synth_cfg.num_phones,
        seed: synth_cfg.seed,
        ..ModelConfig::default()
    };
    let mut model = AcsrModel::init(model_cfg);
    let pairs = corpus.training_pairs();

    let lr: f64 = std::env::args()
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.0025);
    let epochs: usize = std::env::args()
        .nth(2)
        .and_then(|v| v.parse().ok())
        .unwrap_or(120);
    let batch_size: usize = std::env::args()
        .nth(3)
        .and_then(|v| v.parse().ok())
        .unwrap_or(16);
    // One continuous run, exactly like the acceptance configuration.
    let train_cfg = TrainingConfig {
        epochs,
        learning_rate: lr,
        batch_size,
        seed: 1,
        ..TrainingConfig::default()
    };
    let t1 = Instant::now();
    let history = train(&mut model, &pairs, &train_cfg).unwrap();
    println!("train {epochs} epochs (lr {lr}, batch {batch_size}): {:?}", t1.elapsed());
    for stats in history.iter().step_by(10).chain(history.last()) {
        println!(
            "  epoch {:3}: loss {:.4} lr {:.5}",
            stats.epoch, stats.mean_loss, stats.learning_rate
        );
    }
    {
        let mut agg = EditAlignment::default();
        for utt in corpus.split(Split::Test) {
            let (post, _) = model.forward(&utt.bundle).unwrap();
            let decoded = ctc_greedy_decode(&post);
            agg.accumulate(&edit_align(&utt.labels.classes, &decoded.classes));
        }
        let (corr, acc) = corr_acc(&agg).unwrap();
        println!("held-out greedy: corr {corr:.2} acc {acc:.2}");
    }

    // Segmentation probe on the trained model.
    let t2 = Instant::now();
    let mut stats: Vec<(Modality, f64, usize, usize, f64, f64)> = Vec::new();
    for modality in [Modality::Lips, Modality::HandShape] {
        let mut tious = Vec::new();
        let mut onsets_total = 0usize;
        let mut onsets_within = 0usize;
        let mut onset_count_per_utt = 0usize;
        let mut signed_offsets = Vec::new();
        for utt in corpus.split(Split::Test) {
            let (post, maps) = model.forward(&utt.bundle).unwrap();
            let map = maps.iter().find(|m| m.stream == modality).unwrap();
            let path = attention_path(map, 30).unwrap();
            let onsets = detect_onsets(&path);
            onset_count_per_utt += onsets.len();
            let truth = &utt.truth[&modality];
            for o in &onsets {
                let nearest = truth
                    .onset_frames()
                    .iter()
                    .min_by_key(|&&g| g.abs_diff(o.frame))
                    .copied()
                    .unwrap();
                onsets_total += 1;
                if nearest.abs_diff(o.frame) <= 5 {
                    onsets_within += 1;
                }
                signed_offsets.push(o.frame as f64 - nearest as f64);
            }
            let phones = ctc_greedy_decode(&post);
            let phones = if phones.is_empty() { utt.labels.clone() } else { phones };
            let predicted =
                assign_boundaries(&onsets, &phones, utt.bundle.frames(), modality).unwrap();
            tious.push(tiou(truth, &predicted).unwrap().mean);
        }
        let mean_tiou = tious.iter().sum::<f64>() / tious.len() as f64;
        let mean_offset = signed_offsets.iter().sum::<f64>() / signed_offsets.len().max(1) as f64;
        stats.push((
            modality,
            mean_tiou,
            onsets_within,
            onsets_total,
            onset_count_per_utt as f64 / 40.0,
            mean_offset,
        ));
    }
    for (m, t, w, n, per, off) in &stats {
        println!(
            "segment {m}: mean tIoU {t:.3}, onsets within5 {w}/{n} ({:.1}%), {per:.1} onsets/utt, mean signed offset {off:+.2}",
            100.0 * *w as f64 / (*n).max(1) as f64
        );
    }
    println!("segment probe: {:?}", t2.elapsed());

    // Word decoding ablation.
    let t3 = Instant::now();
    let inventory = &corpus.inventory;
    let lexicon = load_lexicon(&corpus.lexicon_text, inventory).unwrap();
    let lm = load_arpa(&corpus.bigram_arpa).unwrap();
    let trigram = load_arpa(&corpus.trigram_arpa).unwrap();
    let scorer = NGramChainScorer { model: &trigram };
    let mut agg_lex = EditAlignment::default();
    let mut agg_lm = EditAlignment::default();
    let mut agg_rescore = EditAlignment::default();
    let mut agg_oracle = EditAlignment::default();
    let mut failures = 0usize;
    for utt in corpus.split(Split::Test) {
        let (post, _) = model.forward(&utt.bundle).unwrap();
        let config = DecodeConfig::default();
        let reference = &utt.words;

        match beam_search(&post, &lexicon, None, &config) {
            Ok(nbest) => agg_lex.accumulate(&edit_align(reference, &nbest[0].words)),
            Err(_) => failures += 1,
        }
        match beam_search(&post, &lexicon, Some(&lm), &config) {
            Ok(nbest) => {
                agg_lm.accumulate(&edit_align(reference, &nbest[0].words));
                let rescored = rescore_topk(&nbest, &scorer).unwrap();
                agg_rescore.accumulate(&edit_align(reference, &rescored.chosen));
                let (oracle, _) = oracle_best(&nbest, reference).unwrap();
                agg_oracle.accumulate(&edit_align(reference, &oracle.words));
            }
            Err(_) => failures += 1,
        }
    }
    for (name, agg) in [
        ("lexicon", &agg_lex),
        ("lexicon+lm", &agg_lm),
        ("rescored", &agg_rescore),
        ("oracle", &agg_oracle),
    ] {
        let (corr, acc) = corr_acc(agg).unwrap();
        println!("word {name}: corr {corr:.2} acc {acc:.2} (n={})", agg.n);
    }
    println!("decode probe: {:?} ({failures} failures)", t3.elapsed());
}
