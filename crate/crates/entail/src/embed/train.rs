//! Minibatch SGD over the embedding table.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::loss::{loss_cor_grad, LossError};
use super::{EmbeddingModel, StepTriple, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrainConfig {
    pub dim: usize,
    pub margin_con: f64,
    pub margin_mut: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        EncoderTrainConfig {
            dim: 64,
            margin_con: 0.1,
            margin_mut: 0.1,
            learning_rate: 0.05,
            batch_size: 8,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least 2 training triples, got {0}")]
    InsufficientData(usize),
    #[error("training diverged: loss became non-finite at epoch {0}")]
    DivergenceDetected(usize),
    #[error("batch size must be at least 2, got {0}")]
    BadBatchSize(usize),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Train the embedding table from scratch on step triples. Deterministic for
/// a fixed seed: seeded init, seeded shuffles, ordered gradient application.
pub fn train_encoder(
    triples: &[StepTriple],
    config: &EncoderTrainConfig,
) -> Result<EmbeddingModel, TrainError> {
    let (model, _) = train_encoder_with_curve(triples, config)?;
    Ok(model)
}

/// Same as [`train_encoder`] but also returns the mean per-batch loss of each
/// epoch, for training-curve checks.
pub fn train_encoder_with_curve(
    triples: &[StepTriple],
    config: &EncoderTrainConfig,
) -> Result<(EmbeddingModel, Vec<f64>), TrainError> {
    if triples.len() < 2 {
        return Err(TrainError::InsufficientData(triples.len()));
    }
    if config.batch_size < 2 {
        return Err(TrainError::BadBatchSize(config.batch_size));
    }

    let vocab = Vocabulary::build(
        triples
            .iter()
            .flat_map(|t| [t.premise_a.as_str(), t.premise_b.as_str(), t.conclusion.as_str()]),
    );
    let mut model = EmbeddingModel::init(vocab, config.dim, config.seed);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch: Vec<StepTriple> = chunk.iter().map(|&i| triples[i].clone()).collect();
            let (loss, grad) =
                loss_cor_grad(&model, &batch, config.margin_con, config.margin_mut)?;
            if !loss.is_finite() {
                return Err(TrainError::DivergenceDetected(epoch));
            }
            epoch_loss += loss;
            batches += 1;
            for (row, g) in &grad.rows {
                let base = row * config.dim;
                for (c, gv) in g.iter().enumerate() {
                    model.table[base + c] -= config.learning_rate * gv;
                }
            }
        }
        curve.push(if batches > 0 { epoch_loss / batches as f64 } else { 0.0 });
    }

    if !model.is_finite() {
        return Err(TrainError::DivergenceDetected(config.epochs));
    }
    Ok((model, curve))
}

/// Mean composition loss over a full set evaluated in fixed-size slices,
/// used for held-out curves.
pub fn mean_loss(
    model: &EmbeddingModel,
    triples: &[StepTriple],
    config: &EncoderTrainConfig,
) -> Result<f64, LossError> {
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in triples.chunks(config.batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        total += super::loss_cor(model, chunk, config.margin_con, config.margin_mut)?;
        batches += 1;
    }
    Ok(if batches > 0 { total / batches as f64 } else { 0.0 })
}
