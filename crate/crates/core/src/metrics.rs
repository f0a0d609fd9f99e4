//! Phone- and word-level scoring: Levenshtein edit alignment, correctness /
//! accuracy percentages, and Wilson confidence intervals.
//!
//! Correctness counts substitutions and deletions against the reference;
//! accuracy additionally subtracts insertions, so `Acc = 100 * (1 - WER)` and
//! may go negative on insertion-heavy hypotheses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("score undefined: empty reference")]
    UndefinedScore,
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

/// Counts from a minimal-cost edit alignment of hypothesis against reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditAlignment {
    /// Reference length.
    pub n: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditAlignment {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Pools counts from another utterance (micro-average aggregation).
    pub fn accumulate(&mut self, other: &EditAlignment) {
        self.n += other.n;
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
    }
}

/// Minimal unit-cost alignment of `hypothesis` against `reference`.
///
/// Backtrace tie-break prefers substitution (or match) over insertion over
/// deletion, which makes the S/D/I split deterministic.
pub fn edit_align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditAlignment {
    let n = reference.len();
    let m = hypothesis.len();
    let mut dist = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dist[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dist[i - 1][j - 1] + sub_cost;
            let ins = dist[i][j - 1] + 1;
            let del = dist[i - 1][j] + 1;
            dist[i][j] = diag.min(ins).min(del);
        }
    }

    let mut align = EditAlignment {
        n,
        ..EditAlignment::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i][j];
        if i > 0 && j > 0 {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dist[i - 1][j - 1] + sub_cost == here {
                align.substitutions += sub_cost;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && dist[i][j - 1] + 1 == here {
            align.insertions += 1;
            j -= 1;
            continue;
        }
        align.deletions += 1;
        i -= 1;
    }
    align
}

/// Correctness and accuracy percentages: `Corr = 100 (N-S-D)/N`,
/// `Acc = 100 (N-S-D-I)/N`.
pub fn corr_acc(a: &EditAlignment) -> Result<(f64, f64), MetricError> {
    if a.n == 0 {
        return Err(MetricError::UndefinedScore);
    }
    let n = a.n as f64;
    let corr = 100.0 * (n - a.substitutions as f64 - a.deletions as f64) / n;
    let acc = corr - 100.0 * a.insertions as f64 / n;
    Ok((corr, acc))
}

/// Wilson score interval for a binomial proportion, as `(lower, upper)` in
/// [0, 1]. `confidence` is a percentage, e.g. 95.0.
pub fn wilson_interval(
    successes: usize,
    n: usize,
    confidence: f64,
) -> Result<(f64, f64), MetricError> {
    if n == 0 {
        return Err(MetricError::MalformedInput("n must be >= 1".into()));
    }
    if successes > n {
        return Err(MetricError::MalformedInput(format!(
            "successes {successes} exceed trials {n}"
        )));
    }
    if !(0.0 < confidence && confidence < 100.0) {
        return Err(MetricError::MalformedInput(format!(
            "confidence {confidence} outside (0, 100)"
        )));
    }
    let z = normal_quantile(1.0 - (1.0 - confidence / 100.0) / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Ok((center - half, center + half))
}

/// Inverse standard-normal CDF (Acklam's rational approximation, |err| < 1.2e-9).
fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0, 1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    }
}

/// Aggregated scores for one configuration, as reported per corpus.
///
/// `wilson_delta` is the 95% Wilson half-width (in percent) for the accuracy
/// proportion, with `N - S - D - I` clamped into `[0, n]` before the binomial
/// computation; `n` is reported alongside so the interval basis is explicit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub corr: f64,
    pub acc: f64,
    pub wilson_delta: f64,
    pub n: usize,
}

impl ScoreReport {
    pub fn from_alignment(a: &EditAlignment, confidence: f64) -> Result<Self, MetricError> {
        let (corr, acc) = corr_acc(a)?;
        let correct = a
            .n
            .saturating_sub(a.substitutions + a.deletions + a.insertions);
        let (lo, hi) = wilson_interval(correct, a.n, confidence)?;
        Ok(ScoreReport {
            corr,
            acc,
            wilson_delta: 100.0 * (hi - lo) / 2.0,
            n: a.n,
        })
    }
}

/// Renders labeled reports as an aligned plain-text table.
pub fn render_table(rows: &[(&str, &ScoreReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .max()
        .unwrap_or(0)
        .max("configuration".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_width$}  {:>8}  {:>8}  {:>6}  {:>8}\n",
        "configuration", "corr", "acc", "d95", "n"
    ));
    for (label, report) in rows {
        out.push_str(&format!(
            "{:<label_width$}  {:>8.2}  {:>8.2}  {:>6.2}  {:>8}\n",
            label, report.corr, report.acc, report.wilson_delta, report.n
        ));
    }
    out
}
