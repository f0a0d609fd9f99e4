//! CTC training with Adam and a reduce-on-plateau schedule, plus a central
//! finite-difference gradient checker for toy-sized models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AcsrModel, ModelError, ModelGrads};
use crate::ctc::{ctc_loss, CtcError, LabelSequence};
use crate::features::StreamBundle;

const ADAM_BETA1: f64 = 0.9;
// 0.999 lets the huge first-epoch CTC gradients dominate the second-moment
// estimate for tens of epochs, stalling training; 0.99 forgets them within a
// few epochs.
const ADAM_BETA2: f64 = 0.99;
const ADAM_EPSILON: f64 = 1e-8;

/// Gradients smaller than this on both sides count as matching zeros, and
/// the relative-error denominator never drops below it; central differences
/// at epsilon 1e-5 cannot resolve anything finer.
const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without improvement before the learning rate is reduced.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            epochs: 120,
            batch_size: 16,
            plateau_patience: 5,
            plateau_factor: 0.5,
            min_learning_rate: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

/// CTC loss and parameter gradients for one utterance.
pub(crate) fn sample_loss(
    model: &AcsrModel,
    bundle: &StreamBundle,
    labels: &LabelSequence,
) -> Result<(f64, ModelGrads), ModelError> {
    let state = model.forward_cached(bundle)?;
    let ctc = ctc_loss(&state.post, labels).map_err(ctc_to_model_error)?;
    let grads = model.backward(bundle, &state, &ctc.grad);
    Ok((ctc.loss, grads))
}

fn loss_only(
    model: &AcsrModel,
    bundle: &StreamBundle,
    labels: &LabelSequence,
) -> Result<f64, ModelError> {
    let state = model.forward_cached(bundle)?;
    Ok(ctc_loss(&state.post, labels).map_err(ctc_to_model_error)?.loss)
}

fn ctc_to_model_error(e: CtcError) -> ModelError {
    ModelError::MalformedInput(e.to_string())
}

/// Trains the model in place with Adam on mini-batches, returning per-epoch
/// mean CTC loss and the learning rate in effect. Deterministic for a fixed
/// config seed.
pub fn train(
    model: &mut AcsrModel,
    corpus: &[(StreamBundle, LabelSequence)],
    cfg: &TrainingConfig,
) -> Result<Vec<EpochStats>, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::InsufficientData("empty training corpus".into()));
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::MalformedInput("batch_size must be >= 1".into()));
    }
    if !(cfg.plateau_factor > 0.0 && cfg.plateau_factor < 1.0) {
        return Err(ModelError::MalformedInput(format!(
            "plateau factor {} outside (0, 1)",
            cfg.plateau_factor
        )));
    }
    for (i, (bundle, labels)) in corpus.iter().enumerate() {
        if labels.is_empty() {
            return Err(ModelError::MalformedInput(format!(
                "utterance {i}: empty label sequence"
            )));
        }
        if labels.classes.iter().any(|&c| c > model.config.num_phones) {
            return Err(ModelError::MalformedInput(format!(
                "utterance {i}: label outside inventory"
            )));
        }
        if labels.min_frames() > bundle.frames() {
            return Err(ModelError::MalformedInput(format!(
                "utterance {i}: {} frames cannot align {} labels",
                bundle.frames(),
                labels.len()
            )));
        }
    }

    let param_count = model.param_count();
    let mut m = vec![0.0; param_count];
    let mut v = vec![0.0; param_count];
    let mut step = 0u32;
    let mut lr = cfg.learning_rate;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;

        for chunk in order.chunks(cfg.batch_size) {
            let mut batch: Option<ModelGrads> = None;
            for &i in chunk {
                let (loss, grads) = match sample_loss(model, &corpus[i].0, &corpus[i].1) {
                    Ok(out) => out,
                    Err(ModelError::NonFinite) => {
                        return Err(ModelError::Divergence { epoch, loss: f64::NAN })
                    }
                    Err(e) => return Err(e),
                };
                if !loss.is_finite() {
                    return Err(ModelError::Divergence { epoch, loss });
                }
                loss_sum += loss;
                match batch.as_mut() {
                    Some(acc) => acc.add(&grads),
                    None => batch = Some(grads),
                }
            }
            let mut grads = batch.expect("chunks are non-empty");
            grads.scale(1.0 / chunk.len() as f64);

            step += 1;
            let g = grads.flat();
            let mut params = model.flat_params();
            let bias1 = 1.0 - ADAM_BETA1.powi(step as i32);
            let bias2 = 1.0 - ADAM_BETA2.powi(step as i32);
            for i in 0..param_count {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
            model.set_flat_params(&params)?;
        }

        let mean_loss = loss_sum / corpus.len() as f64;
        history.push(EpochStats { epoch, mean_loss, learning_rate: lr });

        if mean_loss < best {
            best = mean_loss;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= cfg.plateau_patience {
                lr = (lr * cfg.plateau_factor).max(cfg.min_learning_rate);
                stalled = 0;
            }
        }
    }
    Ok(history)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: Option<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    if analytic.abs() < 1e-12 && numeric.abs() < 1e-12 {
        return 0.0;
    }
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares analytic CTC gradients against central finite differences on a
/// seeded random subset of at most `max_params` parameters.
pub fn grad_check(
    model: &AcsrModel,
    sample: &(StreamBundle, LabelSequence),
    epsilon: f64,
    tolerance: f64,
    max_params: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    grad_check_impl(model, sample, epsilon, tolerance, max_params, seed, |_| {})
}

fn grad_check_impl(
    model: &AcsrModel,
    sample: &(StreamBundle, LabelSequence),
    epsilon: f64,
    tolerance: f64,
    max_params: usize,
    seed: u64,
    corrupt: impl FnOnce(&mut Vec<f64>),
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = sample_loss(model, &sample.0, &sample.1)?;
    let mut analytic = grads.flat();
    corrupt(&mut analytic);

    let flat = model.flat_params();
    let mut indices: Vec<usize> = (0..flat.len()).collect();
    if max_params < indices.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(max_params);
    }

    let mut work = model.clone();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    for &i in &indices {
        let mut plus = flat.clone();
        plus[i] += epsilon;
        work.set_flat_params(&plus)?;
        let loss_plus = loss_only(&work, &sample.0, &sample.1)?;

        let mut minus = flat.clone();
        minus[i] -= epsilon;
        work.set_flat_params(&minus)?;
        let loss_minus = loss_only(&work, &sample.0, &sample.1)?;

        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let rel = rel_error(analytic[i], numeric);
        if rel > max_rel {
            max_rel = rel;
            worst = Some(i);
        }
    }

    Ok(GradCheckReport {
        checked: indices.len(),
        max_rel_error: max_rel,
        worst_param: worst,
        tolerance,
        pass: max_rel < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{toy_bundle, ModelConfig};
    use rand::Rng;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            lips_dim: 4,
            hand_shape_dim: 3,
            hand_position_dim: 2,
            hidden: 4,
            d_k: 4,
            num_phones: 3,
            seed: 7,
        }
    }

    fn toy_corpus(config: &ModelConfig, utterances: usize, t_len: usize) -> Vec<(StreamBundle, LabelSequence)> {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        (0..utterances)
            .map(|_| {
                let bundle = toy_bundle(&mut rng, config, t_len);
                let len = rng.gen_range(1..=2);
                let labels = LabelSequence::new(
                    (0..len).map(|_| rng.gen_range(1..=config.num_phones)).collect(),
                )
                .unwrap();
                (bundle, labels)
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let config = toy_config();
        let mut model = AcsrModel::init(config.clone());
        let before = model.flat_params();
        let corpus = toy_corpus(&config, 3, 6);
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            epochs: 4,
            batch_size: 2,
            ..Default::default()
        };
        let history = train(&mut model, &corpus, &cfg).unwrap();
        assert_eq!(model.flat_params(), before);
        for stats in &history {
            assert!((stats.mean_loss - history[0].mean_loss).abs() < 1e-12);
        }
    }

    #[test]
    fn memorizes_a_single_utterance() {
        let config = toy_config();
        let mut model = AcsrModel::init(config.clone());
        let corpus = toy_corpus(&config, 1, 10);
        let cfg = TrainingConfig {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 1,
            seed: 1,
            ..Default::default()
        };
        let history = train(&mut model, &corpus, &cfg).unwrap();
        let initial = history.first().unwrap().mean_loss;
        let last = history.last().unwrap().mean_loss;
        assert!(
            last < 0.1 * initial,
            "failed to memorize: {initial} -> {last}"
        );
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let config = toy_config();
        let corpus = toy_corpus(&config, 5, 8);
        let cfg = TrainingConfig { epochs: 3, batch_size: 2, seed: 9, ..Default::default() };

        let mut a = AcsrModel::init(config.clone());
        let hist_a = train(&mut a, &corpus, &cfg).unwrap();
        let mut b = AcsrModel::init(config.clone());
        let hist_b = train(&mut b, &corpus, &cfg).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        for (x, y) in hist_a.iter().zip(&hist_b) {
            assert_eq!(x.mean_loss, y.mean_loss);
        }
    }

    #[test]
    fn plateau_reduces_learning_rate() {
        let config = toy_config();
        let mut model = AcsrModel::init(config.clone());
        let corpus = toy_corpus(&config, 2, 6);
        // Zero learning rate never improves, so the plateau trigger must fire
        // after `patience` epochs; min learning rate keeps lr from hitting 0.
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            epochs: 8,
            batch_size: 2,
            plateau_patience: 3,
            plateau_factor: 0.5,
            min_learning_rate: 0.0,
            ..Default::default()
        };
        let history = train(&mut model, &corpus, &cfg).unwrap();
        // Best is set at epoch 0; epochs 1-3 stall; epoch 4 onward runs reduced.
        assert_eq!(history[3].learning_rate, 0.0);
        assert_eq!(history.len(), 8);
    }

    #[test]
    fn rejects_bad_corpora() {
        let config = toy_config();
        let mut model = AcsrModel::init(config.clone());
        let cfg = TrainingConfig::default();
        assert!(matches!(
            train(&mut model, &[], &cfg),
            Err(ModelError::InsufficientData(_))
        ));

        let mut corpus = toy_corpus(&config, 1, 6);
        corpus[0].1 = LabelSequence::new(vec![]).unwrap();
        assert!(matches!(
            train(&mut model, &corpus, &cfg),
            Err(ModelError::MalformedInput(_))
        ));

        let mut corpus = toy_corpus(&config, 1, 2);
        corpus[0].1 = LabelSequence::new(vec![1, 1, 2]).unwrap();
        assert!(matches!(
            train(&mut model, &corpus, &cfg),
            Err(ModelError::MalformedInput(_))
        ));
    }

    #[test]
    fn diverged_training_reports_epoch() {
        let config = toy_config();
        let mut model = AcsrModel::init(config.clone());
        let mut params = model.flat_params();
        for p in params.iter_mut() {
            *p = f64::NAN;
        }
        model.set_flat_params(&params).unwrap();
        let corpus = toy_corpus(&config, 1, 6);
        let cfg = TrainingConfig { epochs: 1, ..Default::default() };
        assert!(matches!(
            train(&mut model, &corpus, &cfg),
            Err(ModelError::Divergence { epoch: 0, .. })
        ));
    }

    #[test]
    fn grad_check_passes_on_toy_model() {
        let config = toy_config();
        let model = AcsrModel::init(config.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bundle = toy_bundle(&mut rng, &config, 5);
        let labels = LabelSequence::new(vec![1, 2]).unwrap();
        let report = grad_check(&model, &(bundle, labels), 1e-5, 1e-4, 250, 11).unwrap();
        assert!(report.pass, "max rel error {}", report.max_rel_error);
        assert_eq!(report.checked, 250);
    }

    #[test]
    fn grad_check_passes_on_zero_parameter_model() {
        let config = toy_config();
        let mut model = AcsrModel::init(config.clone());
        let zeros = vec![0.0; model.param_count()];
        model.set_flat_params(&zeros).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bundle = toy_bundle(&mut rng, &config, 5);
        let labels = LabelSequence::new(vec![1]).unwrap();
        let report = grad_check(&model, &(bundle, labels), 1e-5, 1e-4, 200, 12).unwrap();
        assert!(report.pass, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let config = toy_config();
        let model = AcsrModel::init(config.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bundle = toy_bundle(&mut rng, &config, 5);
        let labels = LabelSequence::new(vec![2, 1]).unwrap();
        let sample = (bundle, labels);
        let count = model.param_count();
        let report = grad_check_impl(&model, &sample, 1e-5, 1e-4, count, 0, |grads| {
            // Scale the strongest gradient by 2.
            let worst = (0..grads.len())
                .max_by(|&a, &b| grads[a].abs().partial_cmp(&grads[b].abs()).unwrap())
                .unwrap();
            grads[worst] *= 2.0;
        })
        .unwrap();
        assert!(!report.pass);
        assert!(report.max_rel_error > 0.3);
    }
}
