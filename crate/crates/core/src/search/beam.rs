//! Lexicon-trie-constrained CTC prefix beam search with word-boundary LM
//! fusion.
//!
//! A hypothesis is keyed by (committed word history, trie node, last emitted
//! phone); hypotheses with equal keys merge by log-sum-exp of their CTC
//! prefix mass, split into blank-terminated and phone-terminated parts as in
//! standard prefix search. Words commit when a phone extension reaches a
//! word-final trie node: the hypothesis forks into one staying inside the
//! trie (a longer word may still complete) and one per finished word, which
//! is LM-scored and returns to the root. The last emitted phone is tracked
//! across word boundaries so repeat collapsing stays exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ctc::{Posteriorgram, BLANK};

use super::lexicon::{Lexicon, TRIE_ROOT};
use super::ngram::{NGramModel, SENTENCE_BEGIN, SENTENCE_END};
use super::SearchError;

const PROB_FLOOR: f64 = 1e-30;
/// `last` value before any phone has been emitted; the blank class is never
/// a trie label, so it is free to mark that.
const NO_PHONE: usize = BLANK;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub lm_weight: f64,
    pub word_score: f64,
    pub n_best: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam_width: 1000, lm_weight: 0.2, word_score: 0.0, n_best: 30 }
    }
}

/// One decoded candidate: committed words and the total fused score
/// `ln(p_ctc) + lm_weight * ln(p_lm) + word_score * |words|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedHypothesis {
    pub words: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct HypKey {
    words: Vec<u32>,
    node: usize,
    last: usize,
}

#[derive(Debug, Clone, Copy)]
struct HypMass {
    /// ln mass of prefix paths ending in blank.
    lpb: f64,
    /// ln mass of prefix paths ending in the last phone.
    lpnb: f64,
    /// Accumulated natural-log LM score of the committed words.
    lm_ln: f64,
}

impl HypMass {
    fn total(&self) -> f64 {
        log_sum_exp(self.lpb, self.lpnb)
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn merge_blank(beam: &mut BTreeMap<HypKey, HypMass>, key: HypKey, contrib: f64, lm_ln: f64) {
    let entry = beam.entry(key).or_insert(HypMass {
        lpb: f64::NEG_INFINITY,
        lpnb: f64::NEG_INFINITY,
        lm_ln,
    });
    debug_assert!((entry.lm_ln - lm_ln).abs() < 1e-9, "merged states must agree on LM score");
    entry.lpb = log_sum_exp(entry.lpb, contrib);
}

fn merge_nonblank(beam: &mut BTreeMap<HypKey, HypMass>, key: HypKey, contrib: f64, lm_ln: f64) {
    let entry = beam.entry(key).or_insert(HypMass {
        lpb: f64::NEG_INFINITY,
        lpnb: f64::NEG_INFINITY,
        lm_ln,
    });
    debug_assert!((entry.lm_ln - lm_ln).abs() < 1e-9, "merged states must agree on LM score");
    entry.lpnb = log_sum_exp(entry.lpnb, contrib);
}

/// Compares word id sequences through their strings, the documented
/// deterministic tie-break.
fn cmp_words(lexicon: &Lexicon, a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    let left = a.iter().map(|&w| lexicon.word(w));
    let right = b.iter().map(|&w| lexicon.word(w));
    left.cmp(right)
}

/// Decodes up to `n_best` word sequences from a posteriorgram, constrained to
/// trie paths of `lexicon`, optionally fusing `lm` at word commits (with the
/// sentence end scored once at the last frame).
pub fn beam_search(
    post: &Posteriorgram,
    lexicon: &Lexicon,
    lm: Option<&NGramModel>,
    config: &DecodeConfig,
) -> Result<Vec<DecodedHypothesis>, SearchError> {
    if config.beam_width == 0 || config.n_best == 0 {
        return Err(SearchError::MalformedInput("beam_width and n_best must be >= 1".into()));
    }
    if lexicon.max_phone() >= post.num_classes() {
        return Err(SearchError::MalformedInput(format!(
            "lexicon phone class {} outside posteriorgram classes {}",
            lexicon.max_phone(),
            post.num_classes()
        )));
    }

    let ln10 = std::f64::consts::LN_10;
    let word_lm_ln = |history: &[u32], word: u32| -> f64 {
        match lm {
            None => 0.0,
            Some(model) => {
                let mut context: Vec<&str> = Vec::with_capacity(history.len() + 1);
                context.push(SENTENCE_BEGIN);
                context.extend(history.iter().map(|&w| lexicon.word(w)));
                model.logprob(&context, lexicon.word(word)) * ln10
            }
        }
    };

    let hyp_score = |key: &HypKey, mass: &HypMass| -> f64 {
        mass.total() + config.lm_weight * mass.lm_ln + config.word_score * key.words.len() as f64
    };

    let mut beam: BTreeMap<HypKey, HypMass> = BTreeMap::new();
    beam.insert(
        HypKey { words: Vec::new(), node: TRIE_ROOT, last: NO_PHONE },
        HypMass { lpb: 0.0, lpnb: f64::NEG_INFINITY, lm_ln: 0.0 },
    );

    for t in 0..post.frames() {
        let ly = |class: usize| post.probs[[t, class]].max(PROB_FLOOR).ln();
        let mut next: BTreeMap<HypKey, HypMass> = BTreeMap::new();

        for (key, mass) in &beam {
            let total = mass.total();

            // Blank keeps the prefix and the state.
            merge_blank(&mut next, key.clone(), total + ly(BLANK), mass.lm_ln);

            // Repeating the last phone without a separating blank collapses
            // into the existing prefix.
            if key.last != NO_PHONE && mass.lpnb != f64::NEG_INFINITY {
                merge_nonblank(&mut next, key.clone(), mass.lpnb + ly(key.last), mass.lm_ln);
            }

            // Extend along trie edges.
            for (phone, child) in lexicon.children(key.node) {
                let base = if phone == key.last { mass.lpb } else { total };
                if base == f64::NEG_INFINITY {
                    continue;
                }
                let contrib = base + ly(phone);
                merge_nonblank(
                    &mut next,
                    HypKey { words: key.words.clone(), node: child, last: phone },
                    contrib,
                    mass.lm_ln,
                );
                for &word in lexicon.words_at(child) {
                    let mut words = key.words.clone();
                    words.push(word);
                    let lm_ln = mass.lm_ln + word_lm_ln(&key.words, word);
                    merge_nonblank(
                        &mut next,
                        HypKey { words, node: TRIE_ROOT, last: phone },
                        contrib,
                        lm_ln,
                    );
                }
            }
        }

        let mut entries: Vec<(HypKey, HypMass)> = next.into_iter().collect();
        entries.sort_by(|(ka, ma), (kb, mb)| {
            hyp_score(kb, mb)
                .partial_cmp(&hyp_score(ka, ma))
                .expect("finite scores")
                .then_with(|| cmp_words(lexicon, &ka.words, &kb.words))
                .then_with(|| ka.cmp(kb))
        });
        entries.truncate(config.beam_width);
        beam = entries.into_iter().collect();
    }

    // Complete hypotheses sit at the trie root; score the sentence end and
    // pool CTC mass across final phones of identical word sequences.
    let mut finals: BTreeMap<Vec<u32>, (f64, f64)> = BTreeMap::new();
    for (key, mass) in &beam {
        if key.node != TRIE_ROOT {
            continue;
        }
        let end_ln = match lm {
            None => 0.0,
            Some(model) => {
                let mut context: Vec<&str> = Vec::with_capacity(key.words.len() + 1);
                context.push(SENTENCE_BEGIN);
                context.extend(key.words.iter().map(|&w| lexicon.word(w)));
                model.logprob(&context, SENTENCE_END) * ln10
            }
        };
        let entry = finals
            .entry(key.words.clone())
            .or_insert((f64::NEG_INFINITY, mass.lm_ln + end_ln));
        entry.0 = log_sum_exp(entry.0, mass.total());
    }
    if finals.is_empty() {
        return Err(SearchError::EmptyDecode);
    }

    let mut out: Vec<(Vec<u32>, f64)> = finals
        .into_iter()
        .map(|(words, (ctc_ln, lm_ln))| {
            let score =
                ctc_ln + config.lm_weight * lm_ln + config.word_score * words.len() as f64;
            (words, score)
        })
        .collect();
    out.sort_by(|(wa, sa), (wb, sb)| {
        sb.partial_cmp(sa)
            .expect("finite scores")
            .then_with(|| cmp_words(lexicon, wa, wb))
    });
    out.truncate(config.n_best);

    Ok(out
        .into_iter()
        .map(|(words, score)| DecodedHypothesis {
            words: words.iter().map(|&w| lexicon.word(w).to_string()).collect(),
            score,
        })
        .collect())
}
