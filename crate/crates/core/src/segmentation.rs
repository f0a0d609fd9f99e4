//! Attention-based temporal segmentation: a band-constrained dynamic-
//! programming path of maximal cumulative attention, movement onsets from the
//! path's deviations off the diagonal, boundary assignment to the predicted
//! phones, temporal IoU evaluation, and hand-lip asynchrony profiling.
//!
//! The path DP uses symmetric step weights (2 for a diagonal move, 1 for
//! vertical or horizontal), so every monotone path carries the same total
//! weight and a uniform map ties everywhere; ties (within a small epsilon
//! that absorbs summation roundoff) prefer the diagonal step, then the
//! vertical one. The reported `cumulative` is the plain sum of map values
//! along the chosen cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{LabelSequence, PhoneInventory};
use crate::features::Modality;
use crate::model::AttentionMap;

/// Default Sakoe-Chiba band half-width in frames.
pub const DEFAULT_BAND: usize = 30;

/// Candidate scores within this margin count as tied in the path DP. Large
/// enough to absorb accumulated f64 roundoff over a path, far below any real
/// attention difference.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

/// Monotone path through a square attention map from (0,0) to (T-1,T-1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPath {
    /// Visited cells, in order. Consecutive cells differ by one of the steps
    /// (1,0), (0,1), (1,1).
    pub cells: Vec<(usize, usize)>,
    /// Sum of map values over the visited cells.
    pub cumulative: f64,
}

/// Band-constrained DP path maximizing cumulative attention.
pub fn attention_path(map: &AttentionMap, band: usize) -> Result<AttentionPath, SegmentationError> {
    let a = &map.scores;
    if a.nrows() != a.ncols() {
        return Err(SegmentationError::MalformedInput(format!(
            "attention map must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let t_len = a.nrows();
    let in_band = |i: usize, j: usize| -> bool { i.abs_diff(j) <= band };

    // best[i][j]: maximal weighted score of a path from (0,0) to (i,j);
    // choice[i][j]: 0 = diagonal, 1 = vertical (from i-1,j), 2 = horizontal.
    let neg = f64::NEG_INFINITY;
    let mut best = vec![vec![neg; t_len]; t_len];
    let mut choice = vec![vec![0u8; t_len]; t_len];
    best[0][0] = a[[0, 0]];
    for i in 0..t_len {
        for j in 0..t_len {
            if (i == 0 && j == 0) || !in_band(i, j) {
                continue;
            }
            let value = a[[i, j]];
            let mut best_here = neg;
            let mut step = 0u8;
            if i > 0 && j > 0 && best[i - 1][j - 1] != neg {
                best_here = best[i - 1][j - 1] + 2.0 * value;
                step = 0;
            }
            if i > 0 && best[i - 1][j] != neg {
                let candidate = best[i - 1][j] + value;
                if candidate > best_here + TIE_EPSILON {
                    step = 1;
                }
                best_here = best_here.max(candidate);
            }
            if j > 0 && best[i][j - 1] != neg {
                let candidate = best[i][j - 1] + value;
                if candidate > best_here + TIE_EPSILON {
                    step = 2;
                }
                best_here = best_here.max(candidate);
            }
            best[i][j] = best_here;
            choice[i][j] = step;
        }
    }

    let mut cells = vec![(t_len - 1, t_len - 1)];
    let (mut i, mut j) = (t_len - 1, t_len - 1);
    while i > 0 || j > 0 {
        match choice[i][j] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        cells.push((i, j));
    }
    cells.reverse();
    let cumulative = cells.iter().map(|&(i, j)| a[[i, j]]).sum();
    Ok(AttentionPath { cells, cumulative })
}

/// One detected movement onset: the middle i-frame of a maximal run of
/// non-diagonal path steps, with the run length kept for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Onset {
    pub frame: usize,
    pub run_len: usize,
}

/// Groups maximal runs of non-diagonal steps and returns the middle i-frame
/// of each (lower median for even spans). A pure diagonal path has none.
pub fn detect_onsets(path: &AttentionPath) -> Vec<Onset> {
    let mut onsets = Vec::new();
    let mut run_start: Option<usize> = None; // index into the step list
    let steps = path.cells.len() - 1;
    for s in 0..=steps {
        let is_deviation = s < steps && {
            let (i0, j0) = path.cells[s];
            let (i1, j1) = path.cells[s + 1];
            !(i1 == i0 + 1 && j1 == j0 + 1)
        };
        match (run_start, is_deviation) {
            (None, true) => run_start = Some(s),
            (Some(start), false) => {
                // Steps start..s-1 deviate; the run spans the i-frames of
                // their destination cells, start+1..=s.
                let i_lo = path.cells[start + 1].0;
                let i_hi = path.cells[s].0;
                onsets.push(Onset {
                    frame: i_lo + (i_hi - i_lo) / 2,
                    run_len: s - start,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    onsets
}

/// A phone-labeled half-open frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub phone: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    fn overlap(&self, other: &Segment) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }
}

/// Ordered, non-overlapping segments over `[0, frames)` for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub modality: Modality,
    pub frames: usize,
}

impl Segmentation {
    pub fn new(
        segments: Vec<Segment>,
        modality: Modality,
        frames: usize,
    ) -> Result<Self, SegmentationError> {
        for (i, seg) in segments.iter().enumerate() {
            if seg.start >= seg.end || seg.end > frames {
                return Err(SegmentationError::MalformedInput(format!(
                    "segment {i} [{}, {}) outside [0, {frames})",
                    seg.start, seg.end
                )));
            }
            if i > 0 && seg.start < segments[i - 1].end {
                return Err(SegmentationError::MalformedInput(format!(
                    "segment {i} overlaps its predecessor"
                )));
            }
        }
        Ok(Segmentation { segments, modality, frames })
    }

    pub fn phone_classes(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.phone).collect()
    }

    /// Segment start frames, the ground-truth onsets of this modality.
    pub fn onset_frames(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.start).collect()
    }
}

/// Assigns boundaries to the predicted phones: at most `|phones| - 1`
/// interior boundaries are kept, ranked by deviation-run length (ties to the
/// earlier frame); infeasible ones are dropped front-to-back. If fewer
/// boundaries than needed remain, the trailing phones split the final region
/// evenly.
pub fn assign_boundaries(
    onsets: &[Onset],
    phones: &LabelSequence,
    frames: usize,
    modality: Modality,
) -> Result<Segmentation, SegmentationError> {
    let n = phones.len();
    if n == 0 {
        return Err(SegmentationError::MalformedInput("empty phone sequence".into()));
    }
    if frames < n {
        return Err(SegmentationError::MalformedInput(format!(
            "{frames} frames cannot hold {n} segments"
        )));
    }

    // Rank interior candidates by run length, then earliness.
    let mut candidates: Vec<&Onset> = onsets
        .iter()
        .filter(|o| o.frame >= 1 && o.frame < frames)
        .collect();
    candidates.sort_by(|a, b| b.run_len.cmp(&a.run_len).then(a.frame.cmp(&b.frame)));
    candidates.truncate(n.saturating_sub(1));
    let mut picked: Vec<usize> = candidates.iter().map(|o| o.frame).collect();
    picked.sort_unstable();

    // Feasibility sweep: each kept boundary must leave room for one frame
    // per segment on both sides.
    let mut boundaries: Vec<usize> = Vec::new();
    for &frame in &picked {
        let index = boundaries.len() + 1; // would become the index-th boundary
        let min = boundaries.last().map_or(1, |&b| b + 1);
        let max = frames - (n - index);
        if frame >= min && frame <= max {
            boundaries.push(frame);
        }
    }

    let mut segments = Vec::with_capacity(n);
    let m = boundaries.len();
    let mut start = 0usize;
    for (i, &b) in boundaries.iter().enumerate() {
        segments.push(Segment { phone: phones.classes[i], start, end: b });
        start = b;
    }
    // Remaining phones share [start, frames) as evenly as possible.
    let remaining = n - m;
    let region = frames - start;
    let base = region / remaining;
    let extra = region % remaining;
    for r in 0..remaining {
        let width = base + usize::from(r < extra);
        segments.push(Segment { phone: phones.classes[m + r], start, end: start + width });
        start += width;
    }
    debug_assert_eq!(start, frames);

    Segmentation::new(segments, modality, frames)
}

/// Per-segment temporal IoU values and their mean over the true segments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationEval {
    pub per_segment: Vec<f64>,
    pub mean: f64,
}

/// Matches each true segment to the predicted segment of maximal frame
/// overlap (ties to the earlier predicted one) and averages intersection
/// over union.
pub fn tiou(
    truth: &Segmentation,
    predicted: &Segmentation,
) -> Result<SegmentationEval, SegmentationError> {
    if truth.modality != predicted.modality || truth.frames != predicted.frames {
        return Err(SegmentationError::MalformedInput(format!(
            "cannot compare {}/{} over {}/{} frames",
            truth.modality, predicted.modality, truth.frames, predicted.frames
        )));
    }
    if truth.segments.is_empty() {
        return Err(SegmentationError::MalformedInput("empty true segmentation".into()));
    }
    let mut per_segment = Vec::with_capacity(truth.segments.len());
    for t in &truth.segments {
        let mut best_overlap = 0usize;
        let mut best: Option<&Segment> = None;
        for p in &predicted.segments {
            let overlap = t.overlap(p);
            if overlap > best_overlap {
                best_overlap = overlap;
                best = Some(p);
            }
        }
        let iou = match best {
            Some(p) => {
                let union = t.len() + p.len() - best_overlap;
                best_overlap as f64 / union as f64
            }
            None => 0.0,
        };
        per_segment.push(iou);
    }
    let mean = per_segment.iter().sum::<f64>() / per_segment.len() as f64;
    Ok(SegmentationEval { per_segment, mean })
}

/// Per-phone hand-lead delays in milliseconds (positive when the hand starts
/// first), with mean and population standard deviation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsynchronyProfile {
    pub delays_ms: Vec<(usize, f64)>,
    pub mean_ms: f64,
    pub std_ms: f64,
}

pub fn asynchrony_profile(
    lips: &Segmentation,
    hand: &Segmentation,
    rate: f64,
) -> Result<AsynchronyProfile, SegmentationError> {
    if lips.phone_classes() != hand.phone_classes() {
        return Err(SegmentationError::MalformedInput(
            "segmentations label different phone sequences".into(),
        ));
    }
    if !(rate > 0.0) {
        return Err(SegmentationError::MalformedInput(format!("rate {rate} must be > 0")));
    }
    let ms_per_frame = 1000.0 / rate;
    let delays_ms: Vec<(usize, f64)> = lips
        .segments
        .iter()
        .zip(&hand.segments)
        .map(|(l, h)| (l.phone, (l.start as f64 - h.start as f64) * ms_per_frame))
        .collect();
    let n = delays_ms.len() as f64;
    let mean_ms = delays_ms.iter().map(|(_, d)| d).sum::<f64>() / n;
    let var = delays_ms.iter().map(|(_, d)| (d - mean_ms) * (d - mean_ms)).sum::<f64>() / n;
    Ok(AsynchronyProfile { delays_ms, mean_ms, std_ms: var.sqrt() })
}

#[derive(Serialize, Deserialize)]
struct SegmentLine {
    modality: Modality,
    phone: String,
    start_frame: usize,
    end_frame: usize,
}

/// Writes segmentations as JSON lines `(modality, phone, start_frame,
/// end_frame)` with phone symbols from the inventory.
pub fn write_segments_jsonl(
    segmentations: &[Segmentation],
    inventory: &PhoneInventory,
) -> Result<String, SegmentationError> {
    let mut out = String::new();
    for seg in segmentations {
        for s in &seg.segments {
            let phone = inventory
                .symbol(s.phone)
                .ok_or_else(|| {
                    SegmentationError::MalformedInput(format!("class {} has no symbol", s.phone))
                })?
                .to_string();
            let line = SegmentLine {
                modality: seg.modality,
                phone,
                start_frame: s.start,
                end_frame: s.end,
            };
            out.push_str(&serde_json::to_string(&line).expect("segment serialization"));
            out.push('\n');
        }
    }
    Ok(out)
}

/// Reads the JSON-lines segment format back into per-modality segmentations.
/// `frames` bounds every segment; segments of one modality must arrive in
/// order.
pub fn read_segments_jsonl(
    text: &str,
    inventory: &PhoneInventory,
    frames: usize,
) -> Result<Vec<Segmentation>, SegmentationError> {
    let mut grouped: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SegmentLine = serde_json::from_str(line).map_err(|e| {
            SegmentationError::MalformedInput(format!("line {}: {e}", lineno + 1))
        })?;
        let class = inventory.class_of(&parsed.phone).ok_or_else(|| {
            SegmentationError::MalformedInput(format!(
                "line {}: unknown phone {:?}",
                lineno + 1,
                parsed.phone
            ))
        })?;
        grouped.entry(parsed.modality.as_str().to_string()).or_default().push(Segment {
            phone: class,
            start: parsed.start_frame,
            end: parsed.end_frame,
        });
    }
    grouped
        .into_iter()
        .map(|(modality, segments)| {
            let modality = Modality::parse(&modality).ok_or_else(|| {
                SegmentationError::MalformedInput(format!("unknown modality {modality:?}"))
            })?;
            Segmentation::new(segments, modality, frames)
        })
        .collect()
}

/// Ingests tab-separated manual annotations `(tier, start_ms, end_ms,
/// label)`; times convert to frames at `rate` by nearest-frame rounding.
/// Returns one segmentation per tier present, keyed by modality.
pub fn read_annotation_tsv(
    text: &str,
    rate: f64,
    inventory: &PhoneInventory,
) -> Result<BTreeMap<Modality, Segmentation>, SegmentationError> {
    if !(rate > 0.0) {
        return Err(SegmentationError::MalformedInput(format!("rate {rate} must be > 0")));
    }
    let to_frame = |ms: f64| -> usize { (ms * rate / 1000.0).round().max(0.0) as usize };
    let mut grouped: BTreeMap<Modality, Vec<Segment>> = BTreeMap::new();
    let mut max_end = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(SegmentationError::MalformedInput(format!(
                "line {}: expected 4 tab-separated fields",
                lineno + 1
            )));
        }
        let modality = Modality::parse(fields[0].trim()).ok_or_else(|| {
            SegmentationError::MalformedInput(format!(
                "line {}: unknown tier {:?}",
                lineno + 1,
                fields[0]
            ))
        })?;
        let start_ms: f64 = fields[1].trim().parse().map_err(|_| {
            SegmentationError::MalformedInput(format!("line {}: bad start time", lineno + 1))
        })?;
        let end_ms: f64 = fields[2].trim().parse().map_err(|_| {
            SegmentationError::MalformedInput(format!("line {}: bad end time", lineno + 1))
        })?;
        let class = inventory.class_of(fields[3].trim()).ok_or_else(|| {
            SegmentationError::MalformedInput(format!(
                "line {}: unknown label {:?}",
                lineno + 1,
                fields[3]
            ))
        })?;
        let segment = Segment { phone: class, start: to_frame(start_ms), end: to_frame(end_ms) };
        max_end = max_end.max(segment.end);
        grouped.entry(modality).or_default().push(segment);
    }
    grouped
        .into_iter()
        .map(|(modality, segments)| {
            Segmentation::new(segments, modality, max_end).map(|s| (modality, s))
        })
        .collect()
}

/// Renders an annotation table back to the tab-separated exchange format.
pub fn write_annotation_tsv(
    tiers: &BTreeMap<Modality, Segmentation>,
    rate: f64,
    inventory: &PhoneInventory,
) -> Result<String, SegmentationError> {
    let ms_per_frame = 1000.0 / rate;
    let mut out = String::new();
    for (modality, seg) in tiers {
        for s in &seg.segments {
            let label = inventory.symbol(s.phone).ok_or_else(|| {
                SegmentationError::MalformedInput(format!("class {} has no symbol", s.phone))
            })?;
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                modality.as_str(),
                s.start as f64 * ms_per_frame,
                s.end as f64 * ms_per_frame,
                label
            ));
        }
    }
    Ok(out)
}
