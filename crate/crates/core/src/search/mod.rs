//! Word-level decoding: lexicon-constrained CTC prefix beam search fused with
//! an ARPA backoff LM, N-best extraction, perplexity rescoring through a
//! pluggable scorer, and the oracle N-best selection used for diagnostics.

mod beam;
mod lexicon;
mod ngram;

pub use beam::{beam_search, DecodeConfig, DecodedHypothesis};
pub use lexicon::{load_lexicon, Lexicon, TRIE_ROOT};
pub use ngram::{load_arpa, NGramModel, OOV_LOG10, SENTENCE_BEGIN, SENTENCE_END, UNKNOWN};

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::edit_align;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("no complete hypothesis survived the beam")]
    EmptyDecode,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
}

/// Natural-log probability mass of a token sequence under some language
/// model, with the token count used for perplexity normalization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SequenceScore {
    pub logprob_sum: f64,
    pub token_count: usize,
}

/// A language model that can score whole token sequences; implementations
/// may run in process or behind an external process boundary.
pub trait LmScorer {
    fn score(&self, tokens: &[String]) -> Result<SequenceScore, SearchError>;
}

/// Perplexity: exp of the negative mean natural-log token probability.
pub fn perplexity(scorer: &dyn LmScorer, tokens: &[String]) -> Result<f64, SearchError> {
    if tokens.is_empty() {
        return Err(SearchError::MalformedInput("empty token sequence".into()));
    }
    let score = scorer.score(tokens)?;
    if score.token_count == 0 {
        return Err(SearchError::ScorerUnavailable("scorer returned zero tokens".into()));
    }
    Ok((-score.logprob_sum / score.token_count as f64).exp())
}

/// In-process chain-rule scorer over a backoff n-gram model: each token is
/// scored given its predecessors with a sentence-begin context.
pub struct NGramChainScorer<'a> {
    pub model: &'a NGramModel,
}

impl LmScorer for NGramChainScorer<'_> {
    fn score(&self, tokens: &[String]) -> Result<SequenceScore, SearchError> {
        let ln10 = std::f64::consts::LN_10;
        let mut context: Vec<&str> = vec![SENTENCE_BEGIN];
        let mut total = 0.0;
        for token in tokens {
            total += self.model.logprob(&context, token) * ln10;
            context.push(token);
        }
        Ok(SequenceScore { logprob_sum: total, token_count: tokens.len() })
    }
}

/// Outcome of rescoring an N-best list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescoreOutcome {
    pub chosen: Vec<String>,
    pub chosen_index: usize,
    /// Perplexity per candidate, in input order; empty candidates score
    /// infinite.
    pub perplexities: Vec<f64>,
    /// True when the scorer failed and the beam-search 1-best was returned.
    pub fell_back: bool,
}

fn beam_best_index(nbest: &[DecodedHypothesis]) -> usize {
    let mut best = 0;
    for i in 1..nbest.len() {
        let better = nbest[i].score > nbest[best].score
            || (nbest[i].score == nbest[best].score && nbest[i].words < nbest[best].words);
        if better {
            best = i;
        }
    }
    best
}

/// Picks the candidate with minimal perplexity; ties break toward the higher
/// beam score and then the lexicographically smaller word sequence. A scorer
/// failure falls back to the beam-search 1-best with `fell_back` set.
pub fn rescore_topk(
    nbest: &[DecodedHypothesis],
    scorer: &dyn LmScorer,
) -> Result<RescoreOutcome, SearchError> {
    if nbest.is_empty() {
        return Err(SearchError::MalformedInput("empty N-best list".into()));
    }
    let mut perplexities = Vec::with_capacity(nbest.len());
    let mut failure = None;
    for hyp in nbest {
        if hyp.words.is_empty() {
            perplexities.push(f64::INFINITY);
            continue;
        }
        match perplexity(scorer, &hyp.words) {
            Ok(ppl) => perplexities.push(ppl),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    if failure.is_some() {
        let idx = beam_best_index(nbest);
        return Ok(RescoreOutcome {
            chosen: nbest[idx].words.clone(),
            chosen_index: idx,
            perplexities: Vec::new(),
            fell_back: true,
        });
    }

    let mut best = 0usize;
    for i in 1..nbest.len() {
        let better = perplexities[i] < perplexities[best]
            || (perplexities[i] == perplexities[best]
                && (nbest[i].score > nbest[best].score
                    || (nbest[i].score == nbest[best].score && nbest[i].words < nbest[best].words)));
        if better {
            best = i;
        }
    }
    Ok(RescoreOutcome {
        chosen: nbest[best].words.clone(),
        chosen_index: best,
        perplexities,
        fell_back: false,
    })
}

/// Word accuracy of `hypothesis` against `reference`: `100 (N-S-D-I)/N`.
/// An empty reference scores 100 for an empty hypothesis and -100 per
/// inserted word otherwise, so ranking stays total.
pub fn word_accuracy(reference: &[String], hypothesis: &[String]) -> f64 {
    let a = edit_align(reference, hypothesis);
    if a.n == 0 {
        return if a.insertions == 0 { 100.0 } else { -100.0 * a.insertions as f64 };
    }
    100.0 * (a.n as f64 - (a.substitutions + a.deletions + a.insertions) as f64) / a.n as f64
}

/// Selects the N-best hypothesis with maximal word accuracy against the
/// reference (ties toward the higher beam score). A diagnostic upper bound,
/// unusable at decode time.
pub fn oracle_best<'a>(
    nbest: &'a [DecodedHypothesis],
    reference: &[String],
) -> Result<(&'a DecodedHypothesis, f64), SearchError> {
    if nbest.is_empty() {
        return Err(SearchError::MalformedInput("empty N-best list".into()));
    }
    let mut best = 0usize;
    let mut best_acc = word_accuracy(reference, &nbest[0].words);
    for i in 1..nbest.len() {
        let acc = word_accuracy(reference, &nbest[i].words);
        let better = acc > best_acc
            || (acc == best_acc
                && (nbest[i].score > nbest[best].score
                    || (nbest[i].score == nbest[best].score && nbest[i].words < nbest[best].words)));
        if better {
            best = i;
            best_acc = acc;
        }
    }
    Ok((&nbest[best], best_acc))
}

/// Default timeout for the external rescorer protocol.
pub const EXTERNAL_SCORER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Serialize)]
struct ScorerRequest<'a> {
    id: u64,
    text: &'a str,
}

#[derive(Deserialize)]
struct ScorerResponse {
    id: u64,
    logprob_sum: f64,
    token_count: usize,
}

struct ExternalScorerInner {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// Client for the newline-delimited JSON rescorer protocol over a child
/// process pipe: request `{"id": n, "text": "..."}`, response
/// `{"id": n, "logprob_sum": x, "token_count": t}` with natural-log sums.
/// Requests are serialized per connection.
pub struct ExternalScorer {
    inner: Mutex<ExternalScorerInner>,
    timeout: Duration,
}

impl ExternalScorer {
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, SearchError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| SearchError::ScorerUnavailable(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalScorer {
            inner: Mutex::new(ExternalScorerInner { child, stdin, lines: rx, next_id: 0 }),
            timeout,
        })
    }
}

impl LmScorer for ExternalScorer {
    fn score(&self, tokens: &[String]) -> Result<SequenceScore, SearchError> {
        let mut inner = self.inner.lock().expect("scorer mutex");
        let id = inner.next_id;
        inner.next_id += 1;
        let text = tokens.join(" ");
        let request = serde_json::to_string(&ScorerRequest { id, text: &text })
            .expect("request serialization");
        writeln!(inner.stdin, "{request}")
            .and_then(|_| inner.stdin.flush())
            .map_err(|e| SearchError::ScorerUnavailable(format!("write request: {e}")))?;

        let line = match inner.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(SearchError::ScorerUnavailable(format!("read response: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(SearchError::ScorerUnavailable(format!(
                    "timed out after {:?}",
                    self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(SearchError::ScorerUnavailable("scorer process exited".into()))
            }
        };
        let response: ScorerResponse = serde_json::from_str(&line)
            .map_err(|e| SearchError::ScorerUnavailable(format!("bad response: {e}")))?;
        if response.id != id {
            return Err(SearchError::ScorerUnavailable(format!(
                "response id {} does not match request {id}",
                response.id
            )));
        }
        Ok(SequenceScore {
            logprob_sum: response.logprob_sum,
            token_count: response.token_count,
        })
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(mut inner) = self.inner.lock() {
            let _ = inner.child.kill();
            let _ = inner.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct UniformScorer {
        vocab_size: f64,
    }

    impl LmScorer for UniformScorer {
        fn score(&self, tokens: &[String]) -> Result<SequenceScore, SearchError> {
            Ok(SequenceScore {
                logprob_sum: tokens.len() as f64 * (1.0 / self.vocab_size).ln(),
                token_count: tokens.len(),
            })
        }
    }

    struct FailingScorer;

    impl LmScorer for FailingScorer {
        fn score(&self, _tokens: &[String]) -> Result<SequenceScore, SearchError> {
            Err(SearchError::ScorerUnavailable("down for maintenance".into()))
        }
    }

    fn words(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn uniform_scorer_perplexity_is_vocab_size() {
        let scorer = UniformScorer { vocab_size: 10.0 };
        let ppl = perplexity(&scorer, &words(&["x", "y", "z"])).unwrap();
        assert!((ppl - 10.0).abs() < 1e-9);
    }

    #[test]
    fn certain_scorer_perplexity_is_one() {
        let scorer = UniformScorer { vocab_size: 1.0 };
        let ppl = perplexity(&scorer, &words(&["x"])).unwrap();
        assert!((ppl - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ngram_chain_matches_hand_computation() {
        let model = load_arpa(ngram::TINY_ARPA).unwrap();
        let scorer = NGramChainScorer { model: &model };
        // p(a|<s>) p(b|<s> a -> a) p(a|.. b -> bow(b)+uni(a)), log10 sums.
        let log10_sum = -0.30103 + -0.52288 + (-0.17609 + -0.69897);
        let expect = 10f64.powf(-log10_sum / 3.0);
        let ppl = perplexity(&scorer, &words(&["a", "b", "a"])).unwrap();
        assert!((ppl - expect).abs() < 1e-9, "ppl={ppl} expect={expect}");
    }

    #[test]
    fn perplexity_rejects_empty_input() {
        let scorer = UniformScorer { vocab_size: 4.0 };
        assert!(matches!(
            perplexity(&scorer, &[]),
            Err(SearchError::MalformedInput(_))
        ));
    }

    fn hyp(wordlist: &[&str], score: f64) -> DecodedHypothesis {
        DecodedHypothesis { words: words(wordlist), score }
    }

    #[test]
    fn rescore_single_candidate_is_identity() {
        let nbest = vec![hyp(&["a"], -1.0)];
        let scorer = UniformScorer { vocab_size: 3.0 };
        let out = rescore_topk(&nbest, &scorer).unwrap();
        assert_eq!(out.chosen_index, 0);
        assert!(!out.fell_back);
    }

    #[test]
    fn rescore_prefers_higher_probability() {
        struct Biased;
        impl LmScorer for Biased {
            fn score(&self, tokens: &[String]) -> Result<SequenceScore, SearchError> {
                let p: f64 = if tokens[0] == "good" { 0.9 } else { 0.1 };
                Ok(SequenceScore {
                    logprob_sum: tokens.len() as f64 * p.ln(),
                    token_count: tokens.len(),
                })
            }
        }
        let nbest = vec![hyp(&["bad", "x"], -1.0), hyp(&["good", "x"], -2.0)];
        let out = rescore_topk(&nbest, &Biased).unwrap();
        assert_eq!(out.chosen, words(&["good", "x"]));
        assert_eq!(out.chosen_index, 1);
        assert!(out.perplexities[0] > out.perplexities[1]);
    }

    #[test]
    fn rescore_matches_exhaustive_scan_and_ignores_order() {
        let model = load_arpa(ngram::TINY_ARPA).unwrap();
        let scorer = NGramChainScorer { model: &model };
        let mut nbest = vec![
            hyp(&["a", "b"], -3.0),
            hyp(&["b"], -1.0),
            hyp(&["a"], -2.0),
            hyp(&["b", "a"], -4.0),
        ];
        let out = rescore_topk(&nbest, &scorer).unwrap();
        // Independent full-table scan.
        let mut best: Option<(f64, f64, Vec<String>)> = None;
        for h in &nbest {
            let ppl = perplexity(&scorer, &h.words).unwrap();
            let candidate = (ppl, -h.score, h.words.clone());
            if best.as_ref().is_none_or(|b| candidate < *b) {
                best = Some(candidate);
            }
        }
        assert_eq!(out.chosen, best.unwrap().2);

        let chosen_before = out.chosen.clone();
        nbest.reverse();
        let out = rescore_topk(&nbest, &scorer).unwrap();
        assert_eq!(out.chosen, chosen_before);
    }

    #[test]
    fn rescore_falls_back_on_scorer_failure() {
        let nbest = vec![hyp(&["low"], -5.0), hyp(&["high"], -1.0)];
        let out = rescore_topk(&nbest, &FailingScorer).unwrap();
        assert!(out.fell_back);
        assert_eq!(out.chosen, words(&["high"]));
        assert_eq!(out.chosen_index, 1);
    }

    #[test]
    fn oracle_best_finds_reference() {
        let reference = words(&["a", "b"]);
        let nbest = vec![hyp(&["a"], -1.0), hyp(&["a", "b"], -3.0), hyp(&["b"], -2.0)];
        let (chosen, acc) = oracle_best(&nbest, &reference).unwrap();
        assert_eq!(chosen.words, reference);
        assert_eq!(acc, 100.0);
    }

    #[test]
    fn oracle_best_single_candidate() {
        let nbest = vec![hyp(&["x"], -1.0)];
        let (chosen, acc) = oracle_best(&nbest, &words(&["y"])).unwrap();
        assert_eq!(chosen.words, words(&["x"]));
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn oracle_best_matches_exhaustive_scan() {
        let reference = words(&["w1", "w2", "w3"]);
        let nbest = vec![
            hyp(&["w1", "w3"], -1.0),
            hyp(&["w1", "w2", "w3", "w4"], -2.0),
            hyp(&["w2"], -0.5),
            hyp(&["w1", "w2", "w3"], -9.0),
        ];
        let (chosen, acc) = oracle_best(&nbest, &reference).unwrap();
        let scan_best = nbest
            .iter()
            .map(|h| word_accuracy(&reference, &h.words))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(acc, scan_best);
        assert_eq!(chosen.words, reference);
    }

    #[test]
    fn external_scorer_error_paths() {
        // `cat` echoes the request back, which is not a valid response.
        let scorer = ExternalScorer::spawn("cat", &[], Duration::from_secs(2)).unwrap();
        let err = scorer.score(&words(&["x"])).unwrap_err();
        assert!(matches!(err, SearchError::ScorerUnavailable(_)));

        // A silent child times out.
        let scorer =
            ExternalScorer::spawn("sleep", &["5".to_string()], Duration::from_millis(100)).unwrap();
        let err = scorer.score(&words(&["x"])).unwrap_err();
        assert!(err.to_string().contains("timed out"));

        // A missing binary fails at spawn.
        assert!(ExternalScorer::spawn("/nonexistent/scorer", &[], Duration::from_secs(1)).is_err());
    }
}
