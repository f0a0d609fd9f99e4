//! CTC loss (log-space forward-backward), best-path decoding, and a
//! brute-force path-enumeration oracle for small instances.
//!
//! Class indices follow one convention throughout the crate: class 0 is the
//! blank, classes `1..=k` are the phones of the inventory in file order.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Blank class index.
pub const BLANK: usize = 0;

/// Probabilities are floored at this value before taking logs.
const PROB_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum CtcError {
    #[error("infeasible alignment: {required} frames required, got {frames}")]
    InfeasibleAlignment { required: usize, frames: usize },
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),
}

/// Ordered phone symbols; class `i` is `phones[i-1]`, class 0 the blank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneInventory {
    phones: Vec<String>,
}

impl PhoneInventory {
    pub fn new(phones: Vec<String>) -> Result<Self, CtcError> {
        if phones.is_empty() {
            return Err(CtcError::MalformedInput("empty phone inventory".into()));
        }
        for (i, p) in phones.iter().enumerate() {
            if p.is_empty() {
                return Err(CtcError::MalformedInput(format!("empty symbol at line {}", i + 1)));
            }
            if phones[..i].contains(p) {
                return Err(CtcError::MalformedInput(format!("duplicate symbol {p:?}")));
            }
        }
        Ok(PhoneInventory { phones })
    }

    /// Parses the inventory file format: one symbol per line, line `i`
    /// defining class `i+1` (class 0 is the implicit blank).
    pub fn from_text(text: &str) -> Result<Self, CtcError> {
        let phones: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::new(phones)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.phones.join("\n");
        out.push('\n');
        out
    }

    pub fn num_phones(&self) -> usize {
        self.phones.len()
    }

    /// Classes including the blank.
    pub fn num_classes(&self) -> usize {
        self.phones.len() + 1
    }

    pub fn symbol(&self, class: usize) -> Option<&str> {
        if class == BLANK {
            None
        } else {
            self.phones.get(class - 1).map(String::as_str)
        }
    }

    pub fn class_of(&self, symbol: &str) -> Option<usize> {
        self.phones.iter().position(|p| p == symbol).map(|i| i + 1)
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }
}

/// A phone class sequence (no blanks). Decoding may produce an empty one;
/// training targets must be non-empty, which [`crate::model::train`] enforces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub classes: Vec<usize>,
}

impl LabelSequence {
    pub fn new(classes: Vec<usize>) -> Result<Self, CtcError> {
        if classes.contains(&BLANK) {
            return Err(CtcError::MalformedInput("label sequence contains blank".into()));
        }
        Ok(LabelSequence { classes })
    }

    pub fn from_symbols(inventory: &PhoneInventory, symbols: &[&str]) -> Result<Self, CtcError> {
        let classes = symbols
            .iter()
            .map(|s| {
                inventory
                    .class_of(s)
                    .ok_or_else(|| CtcError::MalformedInput(format!("unknown phone {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LabelSequence { classes })
    }

    pub fn to_symbols(&self, inventory: &PhoneInventory) -> Vec<String> {
        self.classes
            .iter()
            .filter_map(|&c| inventory.symbol(c).map(str::to_string))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Minimal frame count for a feasible CTC alignment: one frame per label
    /// plus a separating blank per adjacent equal pair.
    pub fn min_frames(&self) -> usize {
        let repeats = self
            .classes
            .windows(2)
            .filter(|w| w[0] == w[1])
            .count();
        self.classes.len() + repeats
    }
}

/// Per-frame class probabilities, `T x (k+1)` row-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    pub probs: Array2<f64>,
    pub blank: usize,
}

impl Posteriorgram {
    pub fn new(probs: Array2<f64>) -> Result<Self, CtcError> {
        if probs.nrows() == 0 || probs.ncols() < 2 {
            return Err(CtcError::MalformedInput(
                "posteriorgram needs at least 1 frame and 2 classes".into(),
            ));
        }
        for (t, row) in probs.outer_iter().enumerate() {
            let mut sum = 0.0;
            for &p in row.iter() {
                if !(0.0..=1.0 + 1e-9).contains(&p) {
                    return Err(CtcError::MalformedInput(format!(
                        "probability {p} out of range at frame {t}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(CtcError::MalformedInput(format!(
                    "frame {t} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Posteriorgram { probs, blank: BLANK })
    }

    pub fn frames(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }
}

/// CTC negative log-likelihood and its gradient w.r.t. pre-softmax logits.
#[derive(Debug, Clone)]
pub struct CtcLoss {
    pub loss: f64,
    pub grad: Array2<f64>,
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Forward-backward CTC loss over all blank-augmented alignments.
///
/// The gradient assumes `post` came from a row softmax, so it is taken with
/// respect to the logits: `grad[t][c] = y[t][c] - gamma[t][c] / p(l|x)`.
pub fn ctc_loss(post: &Posteriorgram, labels: &LabelSequence) -> Result<CtcLoss, CtcError> {
    let t_len = post.frames();
    let classes = post.num_classes();
    for &c in &labels.classes {
        if c == BLANK || c >= classes {
            return Err(CtcError::MalformedInput(format!("label class {c} out of range")));
        }
    }
    let required = labels.min_frames();
    if t_len < required {
        return Err(CtcError::InfeasibleAlignment { required, frames: t_len });
    }

    // Augmented label sequence: blank, l1, blank, l2, ..., blank.
    let l = labels.len();
    let s_len = 2 * l + 1;
    let aug: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { BLANK } else { labels.classes[s / 2] })
        .collect();

    let ly = |t: usize, c: usize| post.probs[[t, c]].max(PROB_FLOOR).ln();

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![vec![neg; s_len]; t_len];
    alpha[0][0] = ly(0, aug[0]);
    if s_len > 1 {
        alpha[0][1] = ly(0, aug[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = log_sum_exp2(acc, alpha[t - 1][s - 1]);
            }
            if s >= 2 && aug[s] != BLANK && aug[s] != aug[s - 2] {
                acc = log_sum_exp2(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = acc + ly(t, aug[s]);
        }
    }
    let log_p = if s_len > 1 {
        log_sum_exp2(alpha[t_len - 1][s_len - 1], alpha[t_len - 1][s_len - 2])
    } else {
        alpha[t_len - 1][0]
    };

    // Beta excludes the emission at frame t, so alpha * beta counts each
    // frame's emission exactly once.
    let mut beta = vec![vec![neg; s_len]; t_len];
    beta[t_len - 1][s_len - 1] = 0.0;
    if s_len > 1 {
        beta[t_len - 1][s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[t + 1][s] + ly(t + 1, aug[s]);
            if s + 1 < s_len {
                acc = log_sum_exp2(acc, beta[t + 1][s + 1] + ly(t + 1, aug[s + 1]));
            }
            if s + 2 < s_len && aug[s + 2] != BLANK && aug[s + 2] != aug[s] {
                acc = log_sum_exp2(acc, beta[t + 1][s + 2] + ly(t + 1, aug[s + 2]));
            }
            beta[t][s] = acc;
        }
    }

    let mut grad = post.probs.clone();
    for t in 0..t_len {
        let mut log_gamma = vec![neg; classes];
        for s in 0..s_len {
            let c = aug[s];
            log_gamma[c] = log_sum_exp2(log_gamma[c], alpha[t][s] + beta[t][s]);
        }
        for c in 0..classes {
            grad[[t, c]] -= (log_gamma[c] - log_p).exp();
        }
    }

    Ok(CtcLoss { loss: -log_p, grad })
}

/// Best-path decoding: per-frame argmax (ties to the lowest class index),
/// collapse adjacent repeats, drop blanks.
pub fn ctc_greedy_decode(post: &Posteriorgram) -> LabelSequence {
    let mut classes = Vec::new();
    let mut prev = usize::MAX;
    for row in post.probs.outer_iter() {
        let mut best = 0usize;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        if best != prev && best != BLANK {
            classes.push(best);
        }
        prev = best;
    }
    LabelSequence { classes }
}

fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &c in path {
        if c != prev && c != BLANK {
            out.push(c);
        }
        prev = c;
    }
    out
}

/// Sums the probability of every length-T class sequence whose collapse
/// equals `labels`. Exponential in T; refuses instances beyond T=8, k=4.
pub fn ctc_path_oracle(post: &Posteriorgram, labels: &LabelSequence) -> Result<f64, CtcError> {
    let t_len = post.frames();
    let classes = post.num_classes();
    if t_len > 8 || classes > 5 {
        return Err(CtcError::OracleLimit(format!(
            "instance too large: T={t_len}, classes={classes}"
        )));
    }
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    loop {
        if collapse(&path) == labels.classes {
            let mut p = 1.0;
            for (t, &c) in path.iter().enumerate() {
                p *= post.probs[[t, c]];
            }
            total += p;
        }
        // Odometer increment over the class alphabet.
        let mut pos = 0;
        loop {
            if pos == t_len {
                return Ok(total);
            }
            path[pos] += 1;
            if path[pos] < classes {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
pub(crate) fn uniform_random_posteriorgram(
    rng: &mut impl rand::Rng,
    t_len: usize,
    classes: usize,
) -> Posteriorgram {
    let mut probs = Array2::zeros((t_len, classes));
    for t in 0..t_len {
        let mut sum = 0.0;
        for c in 0..classes {
            let v: f64 = rng.gen_range(0.05..1.0);
            probs[[t, c]] = v;
            sum += v;
        }
        for c in 0..classes {
            probs[[t, c]] /= sum;
        }
    }
    Posteriorgram::new(probs).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn post_from(rows: Vec<Vec<f64>>) -> Posteriorgram {
        let cols = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Posteriorgram::new(Array2::from_shape_vec((rows.len(), cols), flat).unwrap()).unwrap()
    }

    #[test]
    fn single_frame_single_label() {
        let post = post_from(vec![vec![0.4, 0.6]]);
        let labels = LabelSequence::new(vec![1]).unwrap();
        let out = ctc_loss(&post, &labels).unwrap();
        assert!((out.loss - (-(0.6f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn two_frames_single_label_matches_hand_enumeration() {
        // Alignments {aa, a-, -a}: 0.36 + 0.24 + 0.24 = 0.84.
        let post = post_from(vec![vec![0.4, 0.6], vec![0.4, 0.6]]);
        let labels = LabelSequence::new(vec![1]).unwrap();
        let out = ctc_loss(&post, &labels).unwrap();
        assert!((out.loss - (-(0.84f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn repeated_label_needs_separating_blank() {
        let post = post_from(vec![
            vec![0.3, 0.7],
            vec![0.8, 0.2],
            vec![0.5, 0.5],
        ]);
        let labels = LabelSequence::new(vec![1, 1]).unwrap();
        let out = ctc_loss(&post, &labels).unwrap();
        // Only the path a-a survives collapse.
        let expected: f64 = 0.7 * 0.8 * 0.5;
        assert!((out.loss - (-(expected.ln()))).abs() < 1e-12);
        let oracle = ctc_path_oracle(&post, &labels).unwrap();
        assert!(((-out.loss).exp() - oracle).abs() < 1e-15);
    }

    #[test]
    fn infeasible_exactly_when_too_short() {
        let post2 = uniform_random_posteriorgram(&mut ChaCha8Rng::seed_from_u64(0), 2, 3);
        let post3 = uniform_random_posteriorgram(&mut ChaCha8Rng::seed_from_u64(0), 3, 3);
        let repeated = LabelSequence::new(vec![1, 1]).unwrap();
        assert_eq!(repeated.min_frames(), 3);
        assert!(matches!(
            ctc_loss(&post2, &repeated),
            Err(CtcError::InfeasibleAlignment { required: 3, frames: 2 })
        ));
        assert!(ctc_loss(&post3, &repeated).is_ok());
    }

    #[test]
    fn loss_matches_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let t_len = rng.gen_range(1..=6);
            let classes = rng.gen_range(2..=5);
            let label_len = rng.gen_range(1..=3);
            let labels = LabelSequence::new(
                (0..label_len).map(|_| rng.gen_range(1..classes)).collect(),
            )
            .unwrap();
            if labels.min_frames() > t_len {
                continue;
            }
            let post = uniform_random_posteriorgram(&mut rng, t_len, classes);
            let out = ctc_loss(&post, &labels).unwrap();
            let oracle = ctc_path_oracle(&post, &labels).unwrap();
            let rel = ((-out.loss).exp() - oracle).abs() / oracle;
            assert!(rel < 1e-10, "rel={rel} T={t_len} labels={:?}", labels.classes);
            checked += 1;
        }
    }

    #[test]
    fn time_reversal_preserves_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let t_len = rng.gen_range(2..=7);
            let classes = rng.gen_range(2..=4);
            let post = uniform_random_posteriorgram(&mut rng, t_len, classes);
            let labels = LabelSequence::new(
                (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..classes)).collect(),
            )
            .unwrap();
            if labels.min_frames() > t_len {
                continue;
            }
            let mut rev_probs = post.probs.clone();
            for t in 0..t_len {
                for c in 0..classes {
                    rev_probs[[t, c]] = post.probs[[t_len - 1 - t, c]];
                }
            }
            let rev_post = Posteriorgram::new(rev_probs).unwrap();
            let rev_labels =
                LabelSequence::new(labels.classes.iter().rev().copied().collect()).unwrap();
            let a = ctc_loss(&post, &labels).unwrap().loss;
            let b = ctc_loss(&rev_post, &rev_labels).unwrap().loss;
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let post = uniform_random_posteriorgram(&mut rng, 6, 4);
        let labels = LabelSequence::new(vec![1, 2, 1]).unwrap();
        let out = ctc_loss(&post, &labels).unwrap();
        for t in 0..6 {
            let row_sum: f64 = (0..4).map(|c| out.grad[[t, c]]).sum();
            assert!(row_sum.abs() < 1e-10, "frame {t} sums to {row_sum}");
        }
    }

    #[test]
    fn greedy_decode_collapses_and_drops_blanks() {
        // argmax sequence: a a blank a  ->  [a, a]
        let post = post_from(vec![
            vec![0.2, 0.8],
            vec![0.3, 0.7],
            vec![0.9, 0.1],
            vec![0.4, 0.6],
        ]);
        assert_eq!(ctc_greedy_decode(&post).classes, vec![1, 1]);

        let all_blank = post_from(vec![vec![0.9, 0.1]; 4]);
        assert!(ctc_greedy_decode(&all_blank).is_empty());
    }

    #[test]
    fn greedy_ties_take_lowest_class() {
        let post = post_from(vec![vec![0.25, 0.25, 0.25, 0.25]]);
        // Tie at every class: argmax is blank (class 0), decode is empty.
        assert!(ctc_greedy_decode(&post).is_empty());
        let post = post_from(vec![vec![0.1, 0.45, 0.45]]);
        assert_eq!(ctc_greedy_decode(&post).classes, vec![1]);
    }

    #[test]
    fn greedy_matches_independent_two_pass_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let post = uniform_random_posteriorgram(&mut rng, 6, 4);
            // Independent route: explicit argmax pass, then collapse pass.
            let mut argmaxes = Vec::new();
            for row in post.probs.outer_iter() {
                let mut best = 0usize;
                let mut best_p = f64::NEG_INFINITY;
                for (c, &p) in row.iter().enumerate() {
                    if p > best_p {
                        best = c;
                        best_p = p;
                    }
                }
                argmaxes.push(best);
            }
            assert_eq!(ctc_greedy_decode(&post).classes, collapse(&argmaxes));
        }
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let post = post_from(vec![vec![0.5, 0.5]; 9]);
        let labels = LabelSequence::new(vec![1]).unwrap();
        assert!(matches!(
            ctc_path_oracle(&post, &labels),
            Err(CtcError::OracleLimit(_))
        ));
    }

    #[test]
    fn inventory_round_trip_and_lookup() {
        let inv = PhoneInventory::from_text("aa\nbb\ncc\n").unwrap();
        assert_eq!(inv.num_phones(), 3);
        assert_eq!(inv.num_classes(), 4);
        assert_eq!(inv.class_of("bb"), Some(2));
        assert_eq!(inv.symbol(2), Some("bb"));
        assert_eq!(inv.symbol(BLANK), None);
        assert_eq!(PhoneInventory::from_text(&inv.to_text()).unwrap(), inv);
        assert!(PhoneInventory::from_text("aa\naa\n").is_err());
    }

    #[test]
    fn posteriorgram_validation() {
        assert!(Posteriorgram::new(array![[0.5, 0.6]]).is_err());
        assert!(Posteriorgram::new(array![[1.2, -0.2]]).is_err());
        assert!(Posteriorgram::new(array![[0.5, 0.5]]).is_ok());
    }
}
