//! Landmark ingestion and the three visual feature streams: PCA-reduced lip
//! and hand-shape coordinates plus one-hot hand-position cluster codes, all
//! resampled to a common frame rate.

mod kmeans;
mod pca;

pub use kmeans::{fit_position_clusters, KMeansModel};
pub use pca::{fit_pca, transform_pca, PcaModel};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Flattened lip coordinates per frame: 42 (x, y) points.
pub const LIP_DIM: usize = 84;
/// Flattened hand coordinates per frame: 21 (x, y) points.
pub const HAND_DIM: usize = 42;
/// Hand anchor point relative to the face.
pub const ANCHOR_DIM: usize = 2;
/// Default target frame rate.
pub const DEFAULT_RATE: f64 = 60.0;

/// Timestamps closer than this (seconds) to an input frame snap to it.
const SNAP_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// The three information streams of a cued-speech utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Lips,
    HandShape,
    HandPosition,
}

impl Modality {
    pub fn all() -> [Modality; 3] {
        [Modality::Lips, Modality::HandShape, Modality::HandPosition]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Lips => "lips",
            Modality::HandShape => "hand_shape",
            Modality::HandPosition => "hand_position",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s {
            "lips" => Some(Modality::Lips),
            "hand_shape" => Some(Modality::HandShape),
            "hand_position" => Some(Modality::HandPosition),
            _ => None,
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `T x D` feature matrix at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub rate: f64,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, rate: f64) -> Result<Self, FeatureError> {
        if data.nrows() == 0 {
            return Err(FeatureError::MalformedInput("feature matrix has no rows".into()));
        }
        if !(rate > 0.0) {
            return Err(FeatureError::InvalidConfig(format!("rate {rate} must be > 0")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::MalformedInput("non-finite feature value".into()));
        }
        Ok(FeatureMatrix { data, rate })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// One tracked frame: timestamp plus flattened hand, lip, and anchor coords.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub t: f64,
    pub hand: Vec<f64>,
    pub lips: Vec<f64>,
    pub anchor: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    frames: Vec<LandmarkFrame>,
}

impl LandmarkSequence {
    pub fn new(frames: Vec<LandmarkFrame>) -> Result<Self, FeatureError> {
        if frames.is_empty() {
            return Err(FeatureError::InsufficientData("no landmark frames".into()));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.hand.len() != HAND_DIM {
                return Err(FeatureError::MalformedInput(format!(
                    "frame {i}: expected {HAND_DIM} hand coords, got {}",
                    f.hand.len()
                )));
            }
            if f.lips.len() != LIP_DIM {
                return Err(FeatureError::MalformedInput(format!(
                    "frame {i}: expected {LIP_DIM} lip coords, got {}",
                    f.lips.len()
                )));
            }
            let finite = f.t.is_finite()
                && f.hand.iter().all(|v| v.is_finite())
                && f.lips.iter().all(|v| v.is_finite())
                && f.anchor.iter().all(|v| v.is_finite());
            if !finite {
                return Err(FeatureError::MalformedInput(format!("frame {i}: non-finite value")));
            }
            if i > 0 && f.t <= frames[i - 1].t {
                return Err(FeatureError::MalformedInput(format!(
                    "timestamps not strictly increasing at frame {i}"
                )));
            }
        }
        Ok(LandmarkSequence { frames })
    }

    pub fn frames(&self) -> &[LandmarkFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame rate implied by the timestamps; single-frame sequences fall back
    /// to [`DEFAULT_RATE`].
    pub fn rate(&self) -> f64 {
        if self.frames.len() < 2 {
            return DEFAULT_RATE;
        }
        let span = self.frames.last().unwrap().t - self.frames[0].t;
        (self.frames.len() - 1) as f64 / span
    }
}

/// Re-interpolates a landmark sequence onto a uniform grid at (as close as
/// possible to) `target_rate`, spanning the original timestamps exactly.
/// Coordinates are linearly interpolated; grid points that coincide with an
/// input frame reproduce it exactly.
pub fn resample_landmarks(
    seq: &LandmarkSequence,
    target_rate: f64,
) -> Result<LandmarkSequence, FeatureError> {
    if seq.len() < 2 {
        return Err(FeatureError::InsufficientData(
            "resampling needs at least 2 frames".into(),
        ));
    }
    if !(target_rate > 0.0) {
        return Err(FeatureError::InvalidConfig(format!(
            "target rate {target_rate} must be > 0"
        )));
    }
    let frames = seq.frames();
    let t0 = frames[0].t;
    let t_last = frames.last().unwrap().t;
    let span = t_last - t0;
    let n_out = ((span * target_rate).round() as usize).max(1) + 1;
    let step = span / (n_out - 1) as f64;

    let mut out = Vec::with_capacity(n_out);
    let mut seg = 0usize; // index of the segment start; grid times are monotone
    for i in 0..n_out {
        let t = if i + 1 == n_out { t_last } else { t0 + step * i as f64 };
        while seg + 2 < frames.len() && frames[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&frames[seg], &frames[seg + 1]);
        if (t - a.t).abs() <= SNAP_EPSILON {
            out.push(a.clone());
            continue;
        }
        if (t - b.t).abs() <= SNAP_EPSILON {
            out.push(b.clone());
            continue;
        }
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        out.push(LandmarkFrame {
            t,
            hand: a.hand.iter().zip(&b.hand).map(|(&x, &y)| lerp(x, y)).collect(),
            lips: a.lips.iter().zip(&b.lips).map(|(&x, &y)| lerp(x, y)).collect(),
            anchor: [lerp(a.anchor[0], b.anchor[0]), lerp(a.anchor[1], b.anchor[1])],
        });
    }
    LandmarkSequence::new(out)
}

/// Parses the one-frame-per-line landmark format
/// (`{"t": .., "hand": [..42], "lips": [..84], "anchor": [..2]}`).
pub fn read_landmarks_jsonl(text: &str) -> Result<LandmarkSequence, FeatureError> {
    #[derive(Deserialize)]
    struct RawFrame {
        t: f64,
        hand: Vec<f64>,
        lips: Vec<f64>,
        anchor: Vec<f64>,
    }
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawFrame = serde_json::from_str(line).map_err(|e| {
            FeatureError::MalformedInput(format!("line {}: {e}", lineno + 1))
        })?;
        if raw.anchor.len() != ANCHOR_DIM {
            return Err(FeatureError::MalformedInput(format!(
                "line {}: anchor needs {ANCHOR_DIM} coords",
                lineno + 1
            )));
        }
        frames.push(LandmarkFrame {
            t: raw.t,
            hand: raw.hand,
            lips: raw.lips,
            anchor: [raw.anchor[0], raw.anchor[1]],
        });
    }
    LandmarkSequence::new(frames)
}

pub fn write_landmarks_jsonl(seq: &LandmarkSequence) -> String {
    let mut out = String::new();
    for f in seq.frames() {
        let value = serde_json::json!({
            "t": f.t,
            "hand": f.hand,
            "lips": f.lips,
            "anchor": f.anchor,
        });
        out.push_str(&value.to_string());
        out.push('\n');
    }
    out
}

/// Per-utterance triple of feature matrices sharing T and rate; the
/// hand-position stream is one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBundle {
    pub lips: FeatureMatrix,
    pub hand_shape: FeatureMatrix,
    pub hand_position: FeatureMatrix,
    pub utterance_id: String,
}

impl StreamBundle {
    pub fn new(
        lips: FeatureMatrix,
        hand_shape: FeatureMatrix,
        hand_position: FeatureMatrix,
        utterance_id: String,
    ) -> Result<Self, FeatureError> {
        let t = lips.frames();
        if hand_shape.frames() != t || hand_position.frames() != t {
            return Err(FeatureError::MalformedInput(format!(
                "stream lengths differ: {t}/{}/{}",
                hand_shape.frames(),
                hand_position.frames()
            )));
        }
        if lips.rate != hand_shape.rate || lips.rate != hand_position.rate {
            return Err(FeatureError::MalformedInput("stream rates differ".into()));
        }
        for (i, row) in hand_position.data.outer_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(FeatureError::MalformedInput(format!(
                    "hand_position row {i} is not one-hot"
                )));
            }
        }
        Ok(StreamBundle { lips, hand_shape, hand_position, utterance_id })
    }

    pub fn frames(&self) -> usize {
        self.lips.frames()
    }

    pub fn rate(&self) -> f64 {
        self.lips.rate
    }

    pub fn stream(&self, modality: Modality) -> &FeatureMatrix {
        match modality {
            Modality::Lips => &self.lips,
            Modality::HandShape => &self.hand_shape,
            Modality::HandPosition => &self.hand_position,
        }
    }

    pub fn to_json(&self) -> String {
        let repr = BundleRepr {
            version: 1,
            utterance_id: self.utterance_id.clone(),
            rate: self.rate(),
            lips: to_nested(&self.lips.data),
            hand_shape: to_nested(&self.hand_shape.data),
            hand_position: to_nested(&self.hand_position.data),
        };
        serde_json::to_string(&repr).expect("bundle serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let repr: BundleRepr = serde_json::from_str(text)
            .map_err(|e| FeatureError::MalformedInput(format!("stream file: {e}")))?;
        if repr.version != 1 {
            return Err(FeatureError::MalformedInput(format!(
                "unsupported stream file version {}",
                repr.version
            )));
        }
        StreamBundle::new(
            FeatureMatrix::new(from_nested(&repr.lips)?, repr.rate)?,
            FeatureMatrix::new(from_nested(&repr.hand_shape)?, repr.rate)?,
            FeatureMatrix::new(from_nested(&repr.hand_position)?, repr.rate)?,
            repr.utterance_id,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct BundleRepr {
    version: u32,
    utterance_id: String,
    rate: f64,
    lips: Vec<Vec<f64>>,
    hand_shape: Vec<Vec<f64>>,
    hand_position: Vec<Vec<f64>>,
}

fn to_nested(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn from_nested(rows: &[Vec<f64>]) -> Result<Array2<f64>, FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::MalformedInput("empty matrix".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(FeatureError::MalformedInput("ragged matrix rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| FeatureError::MalformedInput(e.to_string()))
}

/// Assembles the three streams from a (typically resampled) landmark
/// sequence: lips through `lips_pca`, anchor-centered hand points through
/// `hand_pca`, and the anchor's one-hot cluster code.
pub fn build_streams(
    seq: &LandmarkSequence,
    lips_pca: &PcaModel,
    hand_pca: &PcaModel,
    pos_model: &KMeansModel,
    utterance_id: &str,
) -> Result<StreamBundle, FeatureError> {
    if lips_pca.input_dim() != LIP_DIM {
        return Err(FeatureError::MalformedInput(format!(
            "lips PCA expects {} dims, need {LIP_DIM}",
            lips_pca.input_dim()
        )));
    }
    if hand_pca.input_dim() != HAND_DIM {
        return Err(FeatureError::MalformedInput(format!(
            "hand PCA expects {} dims, need {HAND_DIM}",
            hand_pca.input_dim()
        )));
    }
    if pos_model.dim() != ANCHOR_DIM {
        return Err(FeatureError::MalformedInput(format!(
            "position model expects {} dims, need {ANCHOR_DIM}",
            pos_model.dim()
        )));
    }

    let t = seq.len();
    let rate = seq.rate();
    let mut lips = Array2::zeros((t, LIP_DIM));
    let mut hand = Array2::zeros((t, HAND_DIM));
    let mut position = Array2::zeros((t, pos_model.k()));
    for (i, f) in seq.frames().iter().enumerate() {
        for (j, &v) in f.lips.iter().enumerate() {
            lips[[i, j]] = v;
        }
        for (j, &v) in f.hand.iter().enumerate() {
            // Shape is position-invariant: translate so the anchor is origin.
            hand[[i, j]] = v - f.anchor[j % 2];
        }
        let anchor = Array1::from(vec![f.anchor[0], f.anchor[1]]);
        let hot = pos_model.one_hot(anchor.view());
        for (j, &v) in hot.iter().enumerate() {
            position[[i, j]] = v;
        }
    }

    StreamBundle::new(
        transform_pca(lips_pca, &FeatureMatrix::new(lips, rate)?)?,
        transform_pca(hand_pca, &FeatureMatrix::new(hand, rate)?)?,
        FeatureMatrix::new(position, rate)?,
        utterance_id.to_string(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub rate: f64,
    pub pca_components: usize,
    pub position_clusters: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rate: DEFAULT_RATE,
            pca_components: 20,
            position_clusters: 8,
            seed: 0,
        }
    }
}

/// The fitted feature front end, serialized as one versioned JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub version: u32,
    pub rate: f64,
    pub lips_pca: PcaModel,
    pub hand_pca: PcaModel,
    pub position: KMeansModel,
}

impl FeaturePipeline {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, FeatureError> {
        let pipeline: FeaturePipeline = serde_json::from_str(text)
            .map_err(|e| FeatureError::MalformedInput(format!("pipeline file: {e}")))?;
        if pipeline.version != 1 {
            return Err(FeatureError::MalformedInput(format!(
                "unsupported pipeline version {}",
                pipeline.version
            )));
        }
        Ok(pipeline)
    }

    /// Resamples and featurizes one utterance with the fitted models.
    pub fn apply(&self, seq: &LandmarkSequence, utterance_id: &str) -> Result<StreamBundle, FeatureError> {
        let resampled = if seq.len() >= 2 {
            resample_landmarks(seq, self.rate)?
        } else {
            seq.clone()
        };
        build_streams(&resampled, &self.lips_pca, &self.hand_pca, &self.position, utterance_id)
    }
}

/// Fits the PCA models and position clusters on a training set of landmark
/// sequences (each resampled to the config rate first).
pub fn fit_pipeline(
    seqs: &[LandmarkSequence],
    cfg: &PipelineConfig,
) -> Result<FeaturePipeline, FeatureError> {
    if seqs.is_empty() {
        return Err(FeatureError::InsufficientData("no training utterances".into()));
    }
    let mut lip_rows = Vec::new();
    let mut hand_rows = Vec::new();
    let mut anchor_rows = Vec::new();
    for seq in seqs {
        let resampled = resample_landmarks(seq, cfg.rate)?;
        for f in resampled.frames() {
            lip_rows.push(f.lips.clone());
            hand_rows.push(
                f.hand
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| v - f.anchor[j % 2])
                    .collect::<Vec<f64>>(),
            );
            anchor_rows.push(vec![f.anchor[0], f.anchor[1]]);
        }
    }
    let stack = |rows: &[Vec<f64>]| -> Result<FeatureMatrix, FeatureError> {
        FeatureMatrix::new(from_nested(rows)?, cfg.rate)
    };
    Ok(FeaturePipeline {
        version: 1,
        rate: cfg.rate,
        lips_pca: fit_pca(&stack(&lip_rows)?, cfg.pca_components)?,
        hand_pca: fit_pca(&stack(&hand_rows)?, cfg.pca_components)?,
        position: fit_position_clusters(&stack(&anchor_rows)?, cfg.position_clusters, cfg.seed)?,
    })
}
