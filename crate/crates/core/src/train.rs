//! Mini-batch training loops for both model arrangements.

use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{AnyModel, NlgModel, Seq2SeqModel};
use crate::nn::graph::Graph;
use crate::nn::tensor::{Scalar, Tensor};
use crate::nn::{scheduled_lr, AdamState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Learning-rate policy. `Halving` follows the two-epoch recipe (flat
/// through epoch 1, then halved each half-epoch); `Constant` holds the
/// base rate, useful for longer experimental runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Halving,
    Constant,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for the per-epoch example shuffle.
    pub shuffle_seed: u64,
    /// Decoder consumes ground-truth previous targets when true, its own
    /// argmax otherwise. Ignored by the single-stack arrangement.
    pub teacher_forcing: bool,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2,
            batch_size: 32,
            shuffle_seed: 0,
            teacher_forcing: true,
            schedule: LrSchedule::Halving,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub examples_per_epoch: usize,
}

fn check_hash(model_hash: u64, data: &WindowedDataset) -> Result<()> {
    if model_hash != data.vocab_hash {
        return Err(Error::VocabularyMismatch(
            "model and dataset were built from different vocabularies".into(),
        ));
    }
    Ok(())
}

/// Shared loop: shuffles windows each epoch, forms batches, asks `step`
/// for the loss, and applies Adam at the scheduled rate.
fn run_epochs<T, F>(
    data: &WindowedDataset,
    opt: &mut AdamState<T>,
    cfg: &TrainConfig,
    mut step: F,
) -> Result<TrainReport>
where
    T: Scalar,
    F: FnMut(&[usize], f64, &mut AdamState<T>) -> Result<f64>,
{
    if data.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport {
        examples_per_epoch: data.len(),
        ..Default::default()
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let lr = match cfg.schedule {
                LrSchedule::Halving => {
                    let progress = epoch as f64 + seen as f64 / data.len() as f64;
                    scheduled_lr(opt.learning_rate, progress)
                }
                LrSchedule::Constant => opt.learning_rate,
            };
            let loss = step(batch, lr, opt)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, example {seen}"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            report.steps += 1;
        }
        report.epoch_losses.push(epoch_loss / seen as f64);
    }
    Ok(report)
}

fn collect_grads<T: Scalar>(
    g: &Graph<T>,
    grads: &mut crate::nn::Gradients<T>,
    reg: &crate::nn::ParamRegistry,
) -> Vec<(String, Tensor<T>)> {
    let _ = g;
    reg.iter()
        .filter_map(|(name, node)| grads.take(*node).map(|t| (name.clone(), t)))
        .collect()
}

pub fn train_nmt<T: Scalar>(
    model: &mut Seq2SeqModel<T>,
    data: &WindowedDataset,
    opt: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    check_hash(model.vocab_hash, data)?;
    run_epochs(data, opt, cfg, |batch, lr, opt| {
        let inputs: Vec<&[u32]> = batch.iter().map(|&i| data.examples[i].input.as_slice()).collect();
        let targets: Vec<&[u32]> = batch.iter().map(|&i| data.examples[i].target.as_slice()).collect();
        let mut g = Graph::new();
        let (loss, reg) = model.forward_loss(&mut g, &inputs, &targets, cfg.teacher_forcing)?;
        let loss_value = g.value(loss).item().as_f64();
        let mut grads = g.backward(loss);
        let named = collect_grads(&g, &mut grads, &reg);
        opt.step(model, &named, lr);
        Ok(loss_value)
    })
}

pub fn train_nlg<T: Scalar>(
    model: &mut NlgModel<T>,
    data: &WindowedDataset,
    opt: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    check_hash(model.vocab_hash, data)?;
    let rows: Vec<Vec<u32>> = data
        .examples
        .iter()
        .map(|w| {
            let mut row = w.input.clone();
            row.extend_from_slice(&w.target);
            row
        })
        .collect();
    run_epochs(data, opt, cfg, |batch, lr, opt| {
        let seqs: Vec<&[u32]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
        let mut g = Graph::new();
        let (loss, reg) = model.forward_loss(&mut g, &seqs)?;
        let loss_value = g.value(loss).item().as_f64();
        let mut grads = g.backward(loss);
        let named = collect_grads(&g, &mut grads, &reg);
        opt.step(model, &named, lr);
        Ok(loss_value)
    })
}

/// Continues training a loaded model on new data, all parameters free.
pub fn fine_tune<T: Scalar>(
    model: &mut AnyModel<T>,
    data: &WindowedDataset,
    opt: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    match model {
        AnyModel::Nlg(m) => train_nlg(m, data, opt, cfg),
        AnyModel::Nmt(m) => train_nmt(m, data, opt, cfg),
    }
}

/// Teacher-forced cross-entropy over the target positions, no updates.
pub fn nmt_eval_loss<T: Scalar>(
    model: &Seq2SeqModel<T>,
    data: &WindowedDataset,
    batch_size: usize,
) -> Result<f64> {
    check_hash(model.vocab_hash, data)?;
    if data.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for batch in idx.chunks(batch_size) {
        let inputs: Vec<&[u32]> = batch.iter().map(|&i| data.examples[i].input.as_slice()).collect();
        let targets: Vec<&[u32]> = batch.iter().map(|&i| data.examples[i].target.as_slice()).collect();
        let mut g = Graph::new();
        let (loss, _) = model.forward_loss(&mut g, &inputs, &targets, true)?;
        total += g.value(loss).item().as_f64() * batch.len() as f64;
        count += batch.len();
    }
    Ok(total / count as f64)
}

/// Next-token cross-entropy restricted to the N target positions, which
/// makes the number comparable with [`nmt_eval_loss`].
pub fn nlg_eval_target_loss<T: Scalar>(
    model: &NlgModel<T>,
    data: &WindowedDataset,
    batch_size: usize,
) -> Result<f64> {
    check_hash(model.vocab_hash, data)?;
    if data.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    let rows: Vec<Vec<u32>> = data
        .examples
        .iter()
        .map(|w| {
            let mut row = w.input.clone();
            row.extend_from_slice(&w.target);
            row
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for batch in idx.chunks(batch_size) {
        let seqs: Vec<&[u32]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
        let mut g = Graph::new();
        let (loss, _) = model.forward_loss_from(&mut g, &seqs, data.m)?;
        total += g.value(loss).item().as_f64() * batch.len() as f64;
        count += batch.len();
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_dataset, PredictionTask};
    use crate::model::nlg::NlgConfig;
    use crate::model::seq2seq::{SeedMode, Seq2SeqConfig};
    use crate::model::SeqPredictor;
    use crate::nn::CellKind;
    use crate::vcc::{TokenSeries, Vocabulary};

    fn periodic_tokens(vocab: &Vocabulary, len: usize, phase: usize) -> TokenSeries {
        let pattern = [3u32, 1, 4, 1, 5, 2, 6];
        TokenSeries {
            ids: (0..len).map(|i| pattern[(i + phase) % pattern.len()]).collect(),
            anchor: num_complex::Complex64::new(0.0, 0.0),
            vocabulary_hash: vocab.hash(),
            interval_s: 1e-3,
        }
    }

    fn toy_vocab() -> Vocabulary {
        // ids 1..=6 on the grid
        let changes: Vec<num_complex::Complex64> = (1..=6)
            .flat_map(|k| {
                std::iter::repeat(num_complex::Complex64::new(k as f64 * 0.01, 0.0)).take(20 - 2 * k)
            })
            .collect();
        let q = crate::vcc::ChangeSeries {
            changes,
            quant_step: Some(0.01),
            source_interval_s: 1e-3,
        };
        crate::vcc::build_vocabulary(&q, 100, 1).unwrap()
    }

    #[test]
    fn zero_epochs_leave_the_model_unchanged() {
        let vocab = toy_vocab();
        let tokens = periodic_tokens(&vocab, 120, 0);
        let data = make_dataset(&tokens, &vocab, &PredictionTask::new(14, 7)).unwrap();
        let mut model = Seq2SeqModel::<f32>::init(
            Seq2SeqConfig {
                vocab_size: vocab.size() + 1,
                emb: 8,
                hidden: 12,
                layers: 1,
                cell: CellKind::Gru,
                bidirectional: false,
                attention: false,
                seed_mode: SeedMode::ZeroToken,
            },
            vocab.hash(),
            1,
        );
        let before = model.clone();
        let mut opt = AdamState::new(1e-3, 5.0);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let report = train_nmt(&mut model, &data, &mut opt, &cfg).unwrap();
        assert_eq!(report.steps, 0);
        assert_eq!(model, before);
    }

    #[test]
    fn repeating_token_is_learned_to_near_zero_loss() {
        let vocab = toy_vocab();
        let tokens = TokenSeries {
            ids: vec![2u32; 80],
            anchor: num_complex::Complex64::new(0.0, 0.0),
            vocabulary_hash: vocab.hash(),
            interval_s: 1e-3,
        };
        let data = make_dataset(&tokens, &vocab, &PredictionTask::new(6, 3)).unwrap();
        let mut model = NlgModel::<f32>::init(
            NlgConfig {
                vocab_size: vocab.size() + 1,
                emb: 6,
                hidden: 8,
                layers: 1,
                cell: CellKind::Gru,
            },
            vocab.hash(),
            2,
        );
        let mut opt = AdamState::new(1e-2, 5.0);
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 16,
            schedule: LrSchedule::Constant,
            ..Default::default()
        };
        let report = train_nlg(&mut model, &data, &mut opt, &cfg).unwrap();
        let last = *report.epoch_losses.last().unwrap();
        assert!(last < 0.01, "loss = {last}");
    }

    #[test]
    fn periodic_sequence_reaches_high_next_token_accuracy() {
        let vocab = toy_vocab();
        let tokens = periodic_tokens(&vocab, 400, 0);
        let data = make_dataset(&tokens, &vocab, &PredictionTask::new(14, 7)).unwrap();
        let mut model = NlgModel::<f32>::init(
            NlgConfig {
                vocab_size: vocab.size() + 1,
                emb: 8,
                hidden: 16,
                layers: 1,
                cell: CellKind::Gru,
            },
            vocab.hash(),
            3,
        );
        let mut opt = AdamState::new(1e-2, 5.0);
        let cfg = TrainConfig {
            epochs: 25,
            batch_size: 16,
            schedule: LrSchedule::Constant,
            ..Default::default()
        };
        train_nlg(&mut model, &data, &mut opt, &cfg).unwrap();

        // held-out continuation at a different phase
        let held = periodic_tokens(&vocab, 120, 3);
        let held_data = make_dataset(&held, &vocab, &PredictionTask::new(14, 7)).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for w in &held_data.examples {
            let pred = model.predict(&w.input, 1).unwrap();
            if pred[0] == w.target[0] {
                correct += 1;
            }
            total += 1;
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.99, "accuracy = {acc}");
    }

    #[test]
    fn copy_task_is_learned_by_the_encoder_decoder() {
        // target = last N input tokens; exact solution exists
        let vocab = toy_vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand::Rng;
        let mut examples = Vec::new();
        for _ in 0..500 {
            let input: Vec<u32> = (0..8).map(|_| 1 + rng.gen::<u32>() % 6).collect();
            let target: Vec<u32> = input[5..8].to_vec();
            examples.push(crate::dataset::Window {
                input,
                target,
                anchor: num_complex::Complex64::new(0.0, 0.0),
            });
        }
        let held = examples.split_off(420);
        let data = WindowedDataset {
            examples,
            vocab_hash: vocab.hash(),
            m: 8,
            n: 3,
        };
        let held = WindowedDataset {
            examples: held,
            vocab_hash: vocab.hash(),
            m: 8,
            n: 3,
        };
        let mut model = Seq2SeqModel::<f32>::init(
            Seq2SeqConfig {
                vocab_size: vocab.size() + 1,
                emb: 16,
                hidden: 32,
                layers: 1,
                cell: CellKind::Gru,
                bidirectional: true,
                attention: true,
                seed_mode: SeedMode::ZeroToken,
            },
            vocab.hash(),
            4,
        );
        let mut opt = AdamState::new(5e-3, 5.0);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 25,
            schedule: LrSchedule::Constant,
            ..Default::default()
        };
        train_nmt(&mut model, &data, &mut opt, &cfg).unwrap();

        let mut correct = 0usize;
        let mut total = 0usize;
        for w in &held.examples {
            let pred = model.predict(&w.input, 3).unwrap();
            for (p, t) in pred.iter().zip(&w.target) {
                if p == t {
                    correct += 1;
                }
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.95, "held-out copy accuracy = {acc}");
    }

    #[test]
    fn overfit_single_pair_recalls_target() {
        let vocab = toy_vocab();
        let data = WindowedDataset {
            examples: vec![crate::dataset::Window {
                input: vec![1, 2, 3, 4],
                target: vec![5, 6, 1],
                anchor: num_complex::Complex64::new(0.0, 0.0),
            }],
            vocab_hash: vocab.hash(),
            m: 4,
            n: 3,
        };
        let mut model = Seq2SeqModel::<f32>::init(
            Seq2SeqConfig {
                vocab_size: vocab.size() + 1,
                emb: 8,
                hidden: 16,
                layers: 1,
                cell: CellKind::Gru,
                bidirectional: false,
                attention: false,
                seed_mode: SeedMode::ZeroToken,
            },
            vocab.hash(),
            5,
        );
        let mut opt = AdamState::new(1e-2, 5.0);
        let cfg = TrainConfig {
            epochs: 250,
            batch_size: 1,
            schedule: LrSchedule::Constant,
            ..Default::default()
        };
        train_nmt(&mut model, &data, &mut opt, &cfg).unwrap();
        let pred = model.predict(&[1, 2, 3, 4], 3).unwrap();
        assert_eq!(pred, vec![5, 6, 1]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let vocab = toy_vocab();
        let tokens = periodic_tokens(&vocab, 150, 0);
        let data = make_dataset(&tokens, &vocab, &PredictionTask::new(10, 5)).unwrap();
        let run = || {
            let mut model = Seq2SeqModel::<f32>::init(
                Seq2SeqConfig {
                    vocab_size: vocab.size() + 1,
                    emb: 6,
                    hidden: 10,
                    layers: 2,
                    cell: CellKind::Lstm,
                    bidirectional: true,
                    attention: true,
                    seed_mode: SeedMode::ZeroToken,
                },
                vocab.hash(),
                6,
            );
            let mut opt = AdamState::new(1e-3, 5.0);
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 8,
                ..Default::default()
            };
            let report = train_nmt(&mut model, &data, &mut opt, &cfg).unwrap();
            (model, report.epoch_losses)
        };
        let (m1, l1) = run();
        let (m2, l2) = run();
        assert_eq!(l1, l2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn vocabulary_mismatch_is_refused() {
        let vocab = toy_vocab();
        let tokens = periodic_tokens(&vocab, 100, 0);
        let data = make_dataset(&tokens, &vocab, &PredictionTask::new(10, 5)).unwrap();
        let mut model = NlgModel::<f32>::init(
            NlgConfig {
                vocab_size: vocab.size() + 1,
                emb: 4,
                hidden: 6,
                layers: 1,
                cell: CellKind::Gru,
            },
            vocab.hash() ^ 7,
            1,
        );
        let mut opt = AdamState::new(1e-3, 5.0);
        let err = train_nlg(&mut model, &data, &mut opt, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::VocabularyMismatch(_)));
    }
}
