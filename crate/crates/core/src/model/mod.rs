//! The three-stream recognition network: per-stream Bi-GRU followed by
//! temporal self-attention, frame-wise concatenation, a joint Bi-GRU, and an
//! affine + softmax output over the phone classes plus blank.

mod attention;
mod gru;
mod train;

pub use attention::{AttentionCache, AttentionLayer};
pub use gru::{BiGruCache, BiGruLayer, GruDirection};
pub use train::{grad_check, train, EpochStats, GradCheckReport, TrainingConfig};

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{PhoneInventory, Posteriorgram};
use crate::features::{FeatureMatrix, Modality, StreamBundle};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("non-finite values in network output")]
    NonFinite,
}

/// Row-stochastic `T x T` temporal attention scores for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub scores: Array2<f64>,
    pub stream: Modality,
}

impl AttentionMap {
    pub fn new(scores: Array2<f64>, stream: Modality) -> Result<Self, ModelError> {
        if scores.nrows() != scores.ncols() {
            return Err(ModelError::MalformedInput(format!(
                "attention map must be square, got {}x{}",
                scores.nrows(),
                scores.ncols()
            )));
        }
        for (i, row) in scores.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(ModelError::MalformedInput(format!(
                    "attention row {i} sums to {sum}"
                )));
            }
            if row.iter().any(|&v| !(0.0..=1.0 + 1e-9).contains(&v)) {
                return Err(ModelError::MalformedInput(format!(
                    "attention row {i} has entries outside [0, 1]"
                )));
            }
        }
        Ok(AttentionMap { scores, stream })
    }

    pub fn frames(&self) -> usize {
        self.scores.nrows()
    }
}

/// Bi-GRU forward pass as a standalone operation.
pub fn bigru_forward(layer: &BiGruLayer, x: &FeatureMatrix) -> Result<FeatureMatrix, ModelError> {
    if x.dim() != layer.input_dim() {
        return Err(ModelError::MalformedInput(format!(
            "input dim {} does not match layer dim {}",
            x.dim(),
            layer.input_dim()
        )));
    }
    FeatureMatrix::new(layer.forward(&x.data).output, x.rate)
        .map_err(|e| ModelError::MalformedInput(e.to_string()))
}

/// Self-attention as a standalone operation, returning the attended output
/// and the attention map tagged with its stream.
pub fn self_attention(
    layer: &AttentionLayer,
    x: &FeatureMatrix,
    stream: Modality,
) -> Result<(FeatureMatrix, AttentionMap), ModelError> {
    if x.dim() != layer.input_dim() {
        return Err(ModelError::MalformedInput(format!(
            "input dim {} does not match attention dim {}",
            x.dim(),
            layer.input_dim()
        )));
    }
    let cache = layer.forward(&x.data);
    let output = FeatureMatrix::new(cache.output, x.rate)
        .map_err(|e| ModelError::MalformedInput(e.to_string()))?;
    Ok((output, AttentionMap::new(cache.map, stream)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lips_dim: usize,
    pub hand_shape_dim: usize,
    pub hand_position_dim: usize,
    /// Hidden units per GRU direction (stream and joint layers alike).
    pub hidden: usize,
    /// Q/K/V embedding size of each attention layer.
    pub d_k: usize,
    /// Phone classes, excluding the blank.
    pub num_phones: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lips_dim: 20,
            hand_shape_dim: 20,
            hand_position_dim: 8,
            hidden: 32,
            d_k: 32,
            num_phones: 36,
            seed: 0,
        }
    }
}

impl ModelConfig {
    fn stream_dims(&self) -> [usize; 3] {
        [self.lips_dim, self.hand_shape_dim, self.hand_position_dim]
    }

    pub fn num_classes(&self) -> usize {
        self.num_phones + 1
    }
}

/// One per-stream encoder: Bi-GRU then self-attention. Doubles as the
/// gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamEncoder {
    pub gru: BiGruLayer,
    pub attn: AttentionLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcsrModel {
    pub config: ModelConfig,
    /// Stream order: lips, hand shape, hand position.
    pub streams: [StreamEncoder; 3],
    pub joint: BiGruLayer,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Gradients with the same layout as the model parameters.
pub struct ModelGrads {
    pub streams: [StreamEncoder; 3],
    pub joint: BiGruLayer,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardState {
    stream_gru: [BiGruCache; 3],
    stream_attn: [AttentionCache; 3],
    concat: Array2<f64>,
    joint: BiGruCache,
    pub post: Posteriorgram,
}

impl AcsrModel {
    /// Builds a model with seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    /// weights and zero biases.
    pub fn init(config: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = config.stream_dims();
        let streams = [0, 1, 2].map(|i| StreamEncoder {
            gru: BiGruLayer::init(&mut rng, dims[i], config.hidden),
            attn: AttentionLayer::init(&mut rng, 2 * config.hidden, config.d_k),
        });
        let joint = BiGruLayer::init(&mut rng, 3 * config.d_k, config.hidden);
        let out_in = 2 * config.hidden;
        let bound = 1.0 / (out_in as f64).sqrt();
        let w_out =
            Array2::from_shape_fn((out_in, config.num_classes()), |_| rng.gen_range(-bound..bound));
        let b_out = Array1::zeros(config.num_classes());
        AcsrModel { config, streams, joint, w_out, b_out }
    }

    pub fn zero_grads(&self) -> ModelGrads {
        let dims = self.config.stream_dims();
        ModelGrads {
            streams: [0, 1, 2].map(|i| StreamEncoder {
                gru: BiGruLayer::zeros(dims[i], self.config.hidden),
                attn: AttentionLayer::zeros(2 * self.config.hidden, self.config.d_k),
            }),
            joint: BiGruLayer::zeros(3 * self.config.d_k, self.config.hidden),
            w_out: Array2::zeros(self.w_out.raw_dim()),
            b_out: Array1::zeros(self.b_out.len()),
        }
    }

    fn validate_bundle(&self, bundle: &StreamBundle) -> Result<(), ModelError> {
        let dims = self.config.stream_dims();
        let got = [
            bundle.lips.dim(),
            bundle.hand_shape.dim(),
            bundle.hand_position.dim(),
        ];
        if got != dims {
            return Err(ModelError::MalformedInput(format!(
                "stream dims {got:?} do not match model dims {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, bundle: &StreamBundle) -> Result<ForwardState, ModelError> {
        self.validate_bundle(bundle)?;
        let t_len = bundle.frames();
        let inputs = [&bundle.lips, &bundle.hand_shape, &bundle.hand_position];

        let mut gru_caches = Vec::with_capacity(3);
        let mut attn_caches = Vec::with_capacity(3);
        let mut concat = Array2::zeros((t_len, 3 * self.config.d_k));
        for (i, encoder) in self.streams.iter().enumerate() {
            let gru_cache = encoder.gru.forward(&inputs[i].data);
            let attn_cache = encoder.attn.forward(&gru_cache.output);
            let cols = ndarray::s![.., i * self.config.d_k..(i + 1) * self.config.d_k];
            concat.slice_mut(cols).assign(&attn_cache.output);
            gru_caches.push(gru_cache);
            attn_caches.push(attn_cache);
        }

        let joint = self.joint.forward(&concat);
        let logits = joint.output.dot(&self.w_out) + &self.b_out;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let post = Posteriorgram::new(attention::row_softmax(&logits))
            .map_err(|e| ModelError::MalformedInput(e.to_string()))?;

        let mut gru_it = gru_caches.into_iter();
        let mut attn_it = attn_caches.into_iter();
        Ok(ForwardState {
            stream_gru: [0; 3].map(|_| gru_it.next().unwrap()),
            stream_attn: [0; 3].map(|_| attn_it.next().unwrap()),
            concat,
            joint,
            post,
        })
    }

    /// Full forward pass: posteriorgram plus one attention map per stream.
    pub fn forward(
        &self,
        bundle: &StreamBundle,
    ) -> Result<(Posteriorgram, [AttentionMap; 3]), ModelError> {
        let state = self.forward_cached(bundle)?;
        let maps = self.attention_maps(&state)?;
        Ok((state.post, maps))
    }

    pub fn attention_maps(&self, state: &ForwardState) -> Result<[AttentionMap; 3], ModelError> {
        let modalities = Modality::all();
        let mut maps = Vec::with_capacity(3);
        for (i, modality) in modalities.into_iter().enumerate() {
            maps.push(AttentionMap::new(state.stream_attn[i].map.clone(), modality)?);
        }
        let mut it = maps.into_iter();
        Ok([0; 3].map(|_| it.next().unwrap()))
    }

    /// Backpropagates a gradient on the output logits through the whole
    /// network.
    pub fn backward(
        &self,
        bundle: &StreamBundle,
        state: &ForwardState,
        d_logits: &Array2<f64>,
    ) -> ModelGrads {
        let mut grads = self.zero_grads();
        grads.w_out = state.joint.output.t().dot(d_logits);
        grads.b_out = d_logits.sum_axis(Axis(0));
        let d_joint_out = d_logits.dot(&self.w_out.t());

        let d_concat = self
            .joint
            .backward(&state.concat, &state.joint, &d_joint_out, &mut grads.joint);

        let inputs = [&bundle.lips, &bundle.hand_shape, &bundle.hand_position];
        for i in 0..3 {
            let cols = ndarray::s![.., i * self.config.d_k..(i + 1) * self.config.d_k];
            let d_attn_out = d_concat.slice(cols).to_owned();
            let d_gru_out = self.streams[i].attn.backward(
                &state.stream_gru[i].output,
                &state.stream_attn[i],
                &d_attn_out,
                &mut grads.streams[i].attn,
            );
            self.streams[i].gru.backward(
                &inputs[i].data,
                &state.stream_gru[i],
                &d_gru_out,
                &mut grads.streams[i].gru,
            );
        }
        grads
    }

    /// Flat parameter order: per stream (lips, hand shape, hand position) the
    /// Bi-GRU forward then backward direction (each W/U/b for update, reset,
    /// candidate gates), then the attention W_Q, W_K, W_V; the joint Bi-GRU;
    /// the output weights (row-major) and bias. Matrices are row-major.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for encoder in &self.streams {
            encoder.gru.push_flat(&mut out);
            encoder.attn.push_flat(&mut out);
        }
        self.joint.push_flat(&mut out);
        out.extend(self.w_out.iter());
        out.extend(self.b_out.iter());
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.param_count() {
            return Err(ModelError::MalformedInput(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for encoder in &mut self.streams {
            encoder.gru.read_flat(&mut it);
            encoder.attn.read_flat(&mut it);
        }
        self.joint.read_flat(&mut it);
        for v in self.w_out.iter_mut().chain(self.b_out.iter_mut()) {
            *v = it.next().expect("length checked above");
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.flat_params().len()
    }
}

impl ModelGrads {
    /// Same order as [`AcsrModel::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for encoder in &self.streams {
            encoder.gru.push_flat(&mut out);
            encoder.attn.push_flat(&mut out);
        }
        self.joint.push_flat(&mut out);
        out.extend(self.w_out.iter());
        out.extend(self.b_out.iter());
        out
    }

    pub fn add(&mut self, other: &ModelGrads) {
        let mut flat = self.flat();
        for (a, b) in flat.iter_mut().zip(other.flat()) {
            *a += b;
        }
        self.read_flat(&flat);
    }

    pub fn scale(&mut self, factor: f64) {
        let mut flat = self.flat();
        for v in flat.iter_mut() {
            *v *= factor;
        }
        self.read_flat(&flat);
    }

    fn read_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for encoder in &mut self.streams {
            encoder.gru.read_flat(&mut it);
            encoder.attn.read_flat(&mut it);
        }
        self.joint.read_flat(&mut it);
        for v in self.w_out.iter_mut().chain(self.b_out.iter_mut()) {
            *v = it.next().expect("gradient layouts match");
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointRepr {
    version: u32,
    config: ModelConfig,
    inventory: Vec<String>,
    params: Vec<f64>,
}

/// Serializes a model checkpoint as a versioned JSON document: config
/// dimensions, the phone inventory, and the flat parameter vector in
/// [`AcsrModel::flat_params`] order.
pub fn save_checkpoint(model: &AcsrModel, inventory: &PhoneInventory) -> String {
    let repr = CheckpointRepr {
        version: 1,
        config: model.config.clone(),
        inventory: inventory.phones().to_vec(),
        params: model.flat_params(),
    };
    serde_json::to_string(&repr).expect("checkpoint serialization")
}

pub fn load_checkpoint(text: &str) -> Result<(AcsrModel, PhoneInventory), ModelError> {
    let repr: CheckpointRepr = serde_json::from_str(text)
        .map_err(|e| ModelError::MalformedInput(format!("checkpoint: {e}")))?;
    if repr.version != 1 {
        return Err(ModelError::MalformedInput(format!(
            "unsupported checkpoint version {}",
            repr.version
        )));
    }
    if repr.inventory.len() != repr.config.num_phones {
        return Err(ModelError::MalformedInput(format!(
            "inventory has {} phones, config expects {}",
            repr.inventory.len(),
            repr.config.num_phones
        )));
    }
    let inventory = PhoneInventory::new(repr.inventory)
        .map_err(|e| ModelError::MalformedInput(e.to_string()))?;
    let mut model = AcsrModel::init(repr.config);
    model.set_flat_params(&repr.params)?;
    Ok((model, inventory))
}

#[cfg(test)]
pub(crate) fn toy_bundle(
    rng: &mut impl Rng,
    config: &ModelConfig,
    t_len: usize,
) -> StreamBundle {
    use crate::features::FeatureMatrix;
    let mk = |dim: usize, rng: &mut dyn rand::RngCore| {
        FeatureMatrix::new(
            Array2::from_shape_fn((t_len, dim), |_| rng.gen_range(-1.0..1.0)),
            60.0,
        )
        .unwrap()
    };
    let mut position = Array2::zeros((t_len, config.hand_position_dim));
    for t in 0..t_len {
        position[[t, rng.gen_range(0..config.hand_position_dim)]] = 1.0;
    }
    StreamBundle::new(
        mk(config.lips_dim, rng),
        mk(config.hand_shape_dim, rng),
        FeatureMatrix::new(position, 60.0).unwrap(),
        "toy".to_string(),
    )
    .unwrap()
}
