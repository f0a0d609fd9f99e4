//! Synthetic cued-speech corpus generator.
//!
//! Each phone gets a fixed lip prototype, hand-shape prototype, and
//! hand-position cluster. Lip segments follow the phone timing; hand segments
//! start `anticipation` frames earlier (clamped at zero), modelling the
//! hand's lead over the lips. Utterances are word sequences drawn from a
//! sparse Markov chain over a synthetic lexicon, so a bigram model estimated
//! on the training half genuinely predicts the test half. Everything is
//! deterministic per seed, with one RNG split off per utterance.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{LabelSequence, PhoneInventory};
use crate::features::{
    FeatureMatrix, LandmarkFrame, LandmarkSequence, Modality, StreamBundle, ANCHOR_DIM, HAND_DIM,
    LIP_DIM,
};
use crate::segmentation::{Segment, Segmentation};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_phones: usize,
    pub train_utterances: usize,
    pub test_utterances: usize,
    pub lexicon_words: usize,
    pub words_per_utterance: (usize, usize),
    pub frames_per_phone_mean: f64,
    pub frames_per_phone_jitter: f64,
    /// Hand lead over the lips, in frames.
    pub anticipation_mean: f64,
    pub anticipation_jitter: f64,
    pub noise_sigma: f64,
    pub rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_phones: 36,
            train_utterances: 200,
            test_utterances: 40,
            lexicon_words: 40,
            words_per_utterance: (2, 3),
            frames_per_phone_mean: 12.0,
            frames_per_phone_jitter: 2.0,
            anticipation_mean: 6.0,
            anticipation_jitter: 2.0,
            noise_sigma: 0.05,
            rate: 60.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub id: String,
    pub split: Split,
    pub bundle: StreamBundle,
    pub labels: LabelSequence,
    pub words: Vec<String>,
    /// Ground-truth segmentations per modality (hand shape and hand position
    /// share the hand timing).
    pub truth: BTreeMap<Modality, Segmentation>,
    /// The same utterance embedded at landmark level, for the featurization
    /// pipeline.
    pub landmarks: LandmarkSequence,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub inventory: PhoneInventory,
    /// `word<TAB>phones` lexicon text.
    pub lexicon_text: String,
    /// Bigram ARPA model estimated on the training word sequences; fused
    /// during beam search.
    pub bigram_arpa: String,
    /// Trigram ARPA model over the same transcripts; the stand-in for a
    /// stronger rescoring model, able to resolve the homophone twins.
    pub trigram_arpa: String,
    pub utterances: Vec<SynthUtterance>,
}

impl SynthCorpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SynthUtterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn training_pairs(&self) -> Vec<(StreamBundle, LabelSequence)> {
        self.split(Split::Train)
            .map(|u| (u.bundle.clone(), u.labels.clone()))
            .collect()
    }
}

/// Per-phone prototypes in the 20-dimensional code spaces, plus the fixed
/// embeddings that lift codes into landmark coordinates.
struct Prototypes {
    lips: Vec<Vec<f64>>,
    hand: Vec<Vec<f64>>,
    /// Hand-position cluster centers on the unit circle.
    positions: Vec<[f64; 2]>,
    /// Cluster index per phone.
    position_of: Vec<usize>,
    lip_embed: Array2<f64>,
    hand_embed: Array2<f64>,
    lip_base: Vec<f64>,
    hand_base: Vec<f64>,
}

pub const CODE_DIM: usize = 20;
pub const POSITION_CLUSTERS: usize = 8;
/// Prototype vector norm. Unit-norm codes leave GRU pre-activations deep in
/// the linear regime and training takes off very slowly; 2.0 keeps the toy
/// model well-conditioned.
const PROTOTYPE_NORM: f64 = 2.0;

fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x * PROTOTYPE_NORM / norm).collect();
        }
    }
}

/// Gram-Schmidt orthonormal columns, `rows x cols`.
fn orthonormal_embedding(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| normal.sample(rng)).collect();
        for existing in &columns {
            let dot: f64 = v.iter().zip(existing).map(|(a, b)| a * b).sum();
            for (x, e) in v.iter_mut().zip(existing) {
                *x -= dot * e;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            columns.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| columns[j][i])
}

fn build_prototypes(rng: &mut impl Rng, num_phones: usize) -> Prototypes {
    let lips = (0..num_phones).map(|_| unit_vector(rng, CODE_DIM)).collect();
    let hand = (0..num_phones).map(|_| unit_vector(rng, CODE_DIM)).collect();
    let positions = (0..POSITION_CLUSTERS)
        .map(|i| {
            let angle = i as f64 * std::f64::consts::TAU / POSITION_CLUSTERS as f64;
            [angle.cos(), angle.sin()]
        })
        .collect();
    let position_of = (0..num_phones).map(|p| p % POSITION_CLUSTERS).collect();
    let lip_embed = orthonormal_embedding(rng, LIP_DIM, CODE_DIM);
    let hand_embed = orthonormal_embedding(rng, HAND_DIM, CODE_DIM);
    Prototypes {
        lips,
        hand,
        positions,
        position_of,
        lip_embed,
        hand_embed,
        lip_base: (0..LIP_DIM).map(|i| 0.5 + 0.01 * (i % 7) as f64).collect(),
        hand_base: (0..HAND_DIM).map(|i| 0.2 + 0.01 * (i % 5) as f64).collect(),
    }
}

/// Context marker for "no previous word" in the order-2 chain.
const CHAIN_START: usize = usize::MAX;

struct SynthLexicon {
    /// (word, phone classes) in insertion order.
    entries: Vec<(String, Vec<usize>)>,
    /// Homophone twin of a word, when it has one (both directions).
    twins: BTreeMap<usize, usize>,
    /// First-order successor sets; twin pairs always appear together, so a
    /// bigram model sees both and cannot choose between them.
    successors: Vec<Vec<usize>>,
    /// Mixing key for the second-order rule.
    chain_seed: u64,
}

impl SynthLexicon {
    /// Second-order successor set: of each twin pair in S1(prev), only one
    /// member is valid given the word before `prev`. That dependency is
    /// invisible to a bigram model and fully captured by a trigram.
    fn order2_successors(&self, prev2: usize, prev: usize) -> Vec<usize> {
        let base = &self.successors[prev];
        base.iter()
            .copied()
            .filter(|&candidate| match self.twins.get(&candidate) {
                Some(&twin) if base.contains(&twin) => {
                    let pair = candidate.min(twin);
                    let keep_lower = mix(self.chain_seed, prev2, prev, pair) % 2 == 0;
                    (candidate == pair) == keep_lower
                }
                _ => true,
            })
            .collect()
    }
}

fn mix(seed: u64, a: usize, b: usize, c: usize) -> u64 {
    let mut x = seed
        ^ (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (b as u64).wrapping_mul(0x85eb_ca6b_2f8a_1b13)
        ^ (c as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn build_lexicon(rng: &mut impl Rng, cfg: &SynthConfig) -> SynthLexicon {
    let mut entries: Vec<(String, Vec<usize>)> = Vec::with_capacity(cfg.lexicon_words);
    let mut twins = BTreeMap::new();
    for w in 0..cfg.lexicon_words {
        let word = format!("w{w:02}");
        let pron = if w < cfg.num_phones {
            // Coverage words guarantee every phone is trainable. Two to
            // three phones each: single-phone words would let the decoder
            // insert a word on one stray frame.
            let mut pron = vec![w + 1, rng.gen_range(1..=cfg.num_phones)];
            for _ in 0..rng.gen_range(0..=1) {
                pron.push(rng.gen_range(1..=cfg.num_phones));
            }
            pron
        } else {
            // Extra words are homophone twins of the first base words: same
            // phones, distinguishable only through context.
            let base = w - cfg.num_phones;
            twins.insert(w, base);
            twins.insert(base, w);
            entries[base].1.clone()
        };
        entries.push((word, pron));
    }

    let successor_count = 3.min(cfg.lexicon_words.saturating_sub(1)).max(1);
    let successors: Vec<Vec<usize>> = (0..cfg.lexicon_words)
        .map(|w| {
            let mut set = BTreeSet::new();
            while set.len() < successor_count {
                let s = rng.gen_range(0..cfg.lexicon_words);
                if s != w {
                    set.insert(s);
                }
            }
            // Twin closure: if one member of a pair can follow w, so can the
            // other; only the order-2 rule separates them.
            for member in set.clone() {
                if let Some(&twin) = twins.get(&member) {
                    if twin != w {
                        set.insert(twin);
                    }
                }
            }
            set.into_iter().collect()
        })
        .collect();
    SynthLexicon { entries, twins, successors, chain_seed: rng.gen() }
}

/// Generates the full synthetic corpus: stream bundles with phone labels and
/// word transcripts, per-modality ground-truth segmentations, landmark-level
/// embeddings, the lexicon text, and a bigram ARPA model estimated on the
/// training transcripts.
pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    if config.num_phones == 0 || config.num_phones > 99 {
        return Err(SynthError::InvalidConfig("num_phones must be in 1..=99".into()));
    }
    if config.lexicon_words < config.num_phones {
        return Err(SynthError::InvalidConfig(format!(
            "need at least {} lexicon words to cover the phones",
            config.num_phones
        )));
    }
    if config.words_per_utterance.0 == 0 || config.words_per_utterance.0 > config.words_per_utterance.1 {
        return Err(SynthError::InvalidConfig("bad words_per_utterance range".into()));
    }
    if config.frames_per_phone_mean < 2.0 {
        return Err(SynthError::InvalidConfig("frames_per_phone_mean must be >= 2".into()));
    }
    if config.anticipation_mean < 0.0 || !(config.rate > 0.0) || config.noise_sigma < 0.0 {
        return Err(SynthError::InvalidConfig("negative anticipation, rate, or noise".into()));
    }

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let inventory = PhoneInventory::new(
        (1..=config.num_phones).map(|p| format!("p{p:02}")).collect(),
    )
    .expect("generated symbols are unique");
    let prototypes = build_prototypes(&mut master, config.num_phones);
    let lexicon = build_lexicon(&mut master, config);

    let lexicon_text: String = lexicon
        .entries
        .iter()
        .map(|(word, pron)| {
            let symbols: Vec<&str> =
                pron.iter().map(|&c| inventory.symbol(c).expect("valid class")).collect();
            format!("{word}\t{}\n", symbols.join(" "))
        })
        .collect();

    let totals = [
        (Split::Train, config.train_utterances),
        (Split::Test, config.test_utterances),
    ];
    let mut utterances = Vec::with_capacity(config.train_utterances + config.test_utterances);
    for (split, count) in totals {
        for index in 0..count {
            let seed = master.gen::<u64>();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prefix = match split {
                Split::Train => "train",
                Split::Test => "test",
            };
            let id = format!("{prefix}_{index:03}");
            utterances.push(generate_utterance(
                &mut rng,
                config,
                &prototypes,
                &lexicon,
                id,
                split,
            ));
        }
    }

    let train_sequences: Vec<Vec<String>> = utterances
        .iter()
        .filter(|u| u.split == Split::Train)
        .map(|u| u.words.clone())
        .collect();
    let bigram_arpa = estimate_ngram_arpa(&train_sequences, 2);
    let trigram_arpa = estimate_ngram_arpa(&train_sequences, 3);

    Ok(SynthCorpus {
        config: config.clone(),
        inventory,
        lexicon_text,
        bigram_arpa,
        trigram_arpa,
        utterances,
    })
}

fn generate_utterance(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    prototypes: &Prototypes,
    lexicon: &SynthLexicon,
    id: String,
    split: Split,
) -> SynthUtterance {
    // Word sequence from the order-2 Markov chain. The first word avoids
    // homophone twins: with no left context, nothing could disambiguate one.
    let n_words = rng.gen_range(config.words_per_utterance.0..=config.words_per_utterance.1);
    let mut word_ids = Vec::with_capacity(n_words);
    let mut prev2 = CHAIN_START;
    let mut prev = loop {
        let candidate = rng.gen_range(0..lexicon.entries.len());
        if !lexicon.twins.contains_key(&candidate) {
            break candidate;
        }
    };
    word_ids.push(prev);
    for _ in 1..n_words {
        let options = lexicon.order2_successors(prev2, prev);
        let next = options[rng.gen_range(0..options.len())];
        prev2 = prev;
        prev = next;
        word_ids.push(next);
    }
    let words: Vec<String> = word_ids.iter().map(|&w| lexicon.entries[w].0.clone()).collect();
    let phones: Vec<usize> = word_ids
        .iter()
        .flat_map(|&w| lexicon.entries[w].1.iter().copied())
        .collect();
    let n = phones.len();

    // Lip timing: consecutive segments with jittered lengths.
    let jitter = |rng: &mut ChaCha8Rng, mean: f64, jit: f64, min: f64| -> usize {
        let value = mean + if jit > 0.0 { rng.gen_range(-jit..=jit) } else { 0.0 };
        value.round().max(min) as usize
    };
    let lengths: Vec<usize> = (0..n)
        .map(|_| jitter(rng, config.frames_per_phone_mean, config.frames_per_phone_jitter, 2.0))
        .collect();
    let mut lip_starts = vec![0usize; n];
    for i in 1..n {
        lip_starts[i] = lip_starts[i - 1] + lengths[i - 1];
    }
    let frames = lip_starts[n - 1] + lengths[n - 1];

    // Hand timing: each onset leads the lips by the anticipation, clamped to
    // zero and kept strictly increasing.
    let mut hand_starts = vec![0usize; n];
    for i in 1..n {
        let anticipation =
            jitter(rng, config.anticipation_mean, config.anticipation_jitter, 0.0);
        hand_starts[i] = lip_starts[i]
            .saturating_sub(anticipation)
            .max(hand_starts[i - 1] + 1)
            .min(frames - (n - i)); // room for the remaining segments
    }

    let segment_at = |starts: &[usize], t: usize| -> usize {
        match starts.binary_search(&t) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    };

    // Stream matrices in code space.
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut lips = Array2::zeros((frames, CODE_DIM));
    let mut hand_shape = Array2::zeros((frames, CODE_DIM));
    let mut hand_position = Array2::zeros((frames, POSITION_CLUSTERS));
    let mut landmark_frames = Vec::with_capacity(frames);
    for t in 0..frames {
        let lip_phone = phones[segment_at(&lip_starts, t)];
        let hand_phone = phones[segment_at(&hand_starts, t)];
        let lip_code: Vec<f64> = prototypes.lips[lip_phone - 1]
            .iter()
            .map(|&v| v + config.noise_sigma * normal.sample(rng))
            .collect();
        let hand_code: Vec<f64> = prototypes.hand[hand_phone - 1]
            .iter()
            .map(|&v| v + config.noise_sigma * normal.sample(rng))
            .collect();
        for d in 0..CODE_DIM {
            lips[[t, d]] = lip_code[d];
            hand_shape[[t, d]] = hand_code[d];
        }
        let cluster = prototypes.position_of[hand_phone - 1];
        hand_position[[t, cluster]] = 1.0;

        // Landmark embedding of the same codes.
        let center = prototypes.positions[cluster];
        let anchor = [
            center[0] + 0.02 * normal.sample(rng),
            center[1] + 0.02 * normal.sample(rng),
        ];
        let mut lip_points = prototypes.lip_base.clone();
        let mut hand_points = prototypes.hand_base.clone();
        for (row, point) in lip_points.iter_mut().enumerate() {
            let mut acc = 0.0;
            for d in 0..CODE_DIM {
                acc += prototypes.lip_embed[[row, d]] * lip_code[d];
            }
            *point += acc;
        }
        for (row, point) in hand_points.iter_mut().enumerate() {
            let mut acc = 0.0;
            for d in 0..CODE_DIM {
                acc += prototypes.hand_embed[[row, d]] * hand_code[d];
            }
            *point += acc + anchor[row % ANCHOR_DIM];
        }
        landmark_frames.push(LandmarkFrame {
            t: t as f64 / config.rate,
            hand: hand_points,
            lips: lip_points,
            anchor,
        });
    }

    let bundle = StreamBundle::new(
        FeatureMatrix::new(lips, config.rate).expect("finite lips"),
        FeatureMatrix::new(hand_shape, config.rate).expect("finite hand shape"),
        FeatureMatrix::new(hand_position, config.rate).expect("one-hot positions"),
        id.clone(),
    )
    .expect("streams share T");

    let make_segments = |starts: &[usize], modality: Modality| -> Segmentation {
        let segments: Vec<Segment> = (0..n)
            .map(|i| Segment {
                phone: phones[i],
                start: starts[i],
                end: if i + 1 < n { starts[i + 1] } else { frames },
            })
            .collect();
        Segmentation::new(segments, modality, frames).expect("valid synthetic timing")
    };
    let mut truth = BTreeMap::new();
    truth.insert(Modality::Lips, make_segments(&lip_starts, Modality::Lips));
    truth.insert(Modality::HandShape, make_segments(&hand_starts, Modality::HandShape));
    truth.insert(Modality::HandPosition, make_segments(&hand_starts, Modality::HandPosition));

    SynthUtterance {
        id,
        split,
        bundle,
        labels: LabelSequence::new(phones).expect("no blanks generated"),
        words,
        truth,
        landmarks: LandmarkSequence::new(landmark_frames).expect("valid synthetic landmarks"),
    }
}

/// Estimates a backoff n-gram ARPA model from word sequences: add-one
/// unigrams, absolute discounting (d = 0.5) with Katz backoff weights at the
/// higher orders. Output is deterministic: entries sorted, fixed precision.
pub fn estimate_ngram_arpa(sequences: &[Vec<String>], order: usize) -> String {
    assert!(order >= 1, "order must be at least 1");
    const DISCOUNT: f64 = 0.5;

    // Raw counts per order over <s>-padded, </s>-terminated sequences.
    let mut counts: Vec<BTreeMap<Vec<String>, usize>> = vec![BTreeMap::new(); order];
    let mut emitted = 0usize;
    for sequence in sequences {
        let mut tokens: Vec<String> = vec![SENTENCE_BEGIN.to_string()];
        tokens.extend(sequence.iter().cloned());
        tokens.push(SENTENCE_END.to_string());
        emitted += tokens.len() - 1;
        for n in 1..=order {
            for window in tokens.windows(n) {
                if n == 1 && window[0] == SENTENCE_BEGIN {
                    continue; // <s> is context only
                }
                *counts[n - 1].entry(window.to_vec()).or_insert(0) += 1;
            }
        }
    }
    counts[0].entry(vec![UNKNOWN.to_string()]).or_insert(0);

    // probs[n-1]: n-gram -> discounted conditional probability.
    // bows[n-1]: n-gram context -> backoff weight (linear space).
    let mut probs: Vec<BTreeMap<Vec<String>, f64>> = vec![BTreeMap::new(); order];
    let mut bows: Vec<BTreeMap<Vec<String>, f64>> = vec![BTreeMap::new(); order];

    let types = counts[0].len();
    let uni_denom = (emitted + types) as f64;
    for (key, &c) in &counts[0] {
        probs[0].insert(key.clone(), (c as f64 + 1.0) / uni_denom);
    }

    // Katz evaluation over the levels built so far (linear space).
    fn katz(probs: &[BTreeMap<Vec<String>, f64>], bows: &[BTreeMap<Vec<String>, f64>], ngram: &[String]) -> f64 {
        if let Some(&p) = probs[ngram.len() - 1].get(ngram) {
            return p;
        }
        if ngram.len() == 1 {
            // Unlisted token: treated as <unk>.
            return *probs[0]
                .get(&vec![UNKNOWN.to_string()])
                .expect("<unk> is always listed");
        }
        let context = &ngram[..ngram.len() - 1];
        let bow = bows[context.len() - 1].get(context).copied().unwrap_or(1.0);
        bow * katz(probs, bows, &ngram[1..])
    }

    for n in 2..=order {
        // Successor sets and context totals at this order.
        let mut successors: BTreeMap<Vec<String>, Vec<(Vec<String>, usize)>> = BTreeMap::new();
        for (key, &c) in &counts[n - 1] {
            successors
                .entry(key[..n - 1].to_vec())
                .or_default()
                .push((key.clone(), c));
        }
        for (context, seen) in &successors {
            let total: usize = seen.iter().map(|(_, c)| c).sum();
            for (key, c) in seen {
                probs[n - 1].insert(key.clone(), (*c as f64 - DISCOUNT) / total as f64);
            }
            let reserved = DISCOUNT * seen.len() as f64 / total as f64;
            let lower_mass: f64 = seen
                .iter()
                .map(|(key, _)| katz(&probs, &bows, &key[1..]))
                .sum();
            bows[n - 2].insert(context.clone(), reserved / (1.0 - lower_mass).max(1e-9));
        }
    }

    let mut out = String::new();
    out.push_str("\\data\\\n");
    out.push_str(&format!("ngram 1={}\n", types + 1)); // plus <s>
    for n in 2..=order {
        out.push_str(&format!("ngram {n}={}\n", counts[n - 1].len()));
    }
    out.push('\n');

    out.push_str("\\1-grams:\n");
    let begin_key = vec![SENTENCE_BEGIN.to_string()];
    out.push_str(&format!(
        "-99\t{}\t{:.6}\n",
        SENTENCE_BEGIN,
        bows[0].get(&begin_key).copied().unwrap_or(1.0).log10()
    ));
    for (key, &p) in &probs[0] {
        let word = &key[0];
        match bows[0].get(key) {
            Some(bow) => out.push_str(&format!("{:.6}\t{word}\t{:.6}\n", p.log10(), bow.log10())),
            None => out.push_str(&format!("{:.6}\t{word}\n", p.log10())),
        }
    }
    for n in 2..=order {
        out.push_str(&format!("\n\\{n}-grams:\n"));
        for (key, &p) in &probs[n - 1] {
            let tokens = key.join(" ");
            match bows.get(n - 1).and_then(|b| b.get(key)) {
                Some(bow) => {
                    out.push_str(&format!("{:.6}\t{tokens}\t{:.6}\n", p.log10(), bow.log10()))
                }
                None => out.push_str(&format!("{:.6}\t{tokens}\n", p.log10())),
            }
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

use crate::search::{SENTENCE_BEGIN, SENTENCE_END, UNKNOWN};
