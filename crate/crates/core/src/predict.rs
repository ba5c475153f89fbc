//! Series-level prediction: tokenize a history window, continue it with a
//! trained model, and reconstruct coefficients. Transfer mode decimates
//! the history first and linearly interpolates the coarse prediction back
//! to the source interval.

use crate::dataset::PredictionTask;
use crate::error::{Error, Result};
use crate::model::SeqPredictor;
use crate::nn::tensor::Scalar;
use crate::series::ChannelSeries;
use crate::vcc::{decode, encode, TokenSeries, Vocabulary};
use num_complex::Complex64;

/// Encodes the last M+1 history samples and greedily predicts N change
/// tokens. The anchor is the final history sample.
pub fn predict_tokens<T: Scalar>(
    model: &impl SeqPredictor<T>,
    vocab: &Vocabulary,
    history: &ChannelSeries,
    task: &PredictionTask,
) -> Result<TokenSeries> {
    task.validate()?;
    if model.vocab_hash() != vocab.hash() {
        return Err(Error::VocabularyMismatch(
            "model was trained against a different vocabulary".into(),
        ));
    }
    if history.len() < task.m + 1 {
        return Err(Error::invalid(format!(
            "history needs at least M+1 = {} samples, found {}",
            task.m + 1,
            history.len()
        )));
    }
    let window = ChannelSeries::new(
        history.samples[history.len() - (task.m + 1)..].to_vec(),
        history.sample_interval_s,
        history.label.clone(),
    )?;
    let tokens = encode(&window, vocab)?;
    let ids = model.predict(&tokens.ids, task.n)?;
    Ok(TokenSeries {
        ids,
        anchor: tokens.anchor,
        vocabulary_hash: tokens.vocabulary_hash,
        interval_s: tokens.interval_s,
    })
}

/// M:N prediction returning N reconstructed samples at the source interval.
pub fn predict_series<T: Scalar>(
    model: &impl SeqPredictor<T>,
    vocab: &Vocabulary,
    history: &ChannelSeries,
    task: &PredictionTask,
) -> Result<ChannelSeries> {
    let tokens = predict_tokens(model, vocab, history, task)?;
    decode(&tokens, vocab)
}

/// Linear interpolation from the anchor through `coarse` points placed
/// `s` fine steps apart. Aligned points are copied through exactly.
fn interpolate(anchor: Complex64, coarse: &[Complex64], s: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(coarse.len() * s);
    for j in 1..=coarse.len() * s {
        if j % s == 0 {
            out.push(coarse[j / s - 1]);
        } else {
            let lo = j / s;
            let a = if lo == 0 { anchor } else { coarse[lo - 1] };
            let b = coarse[lo];
            let frac = (j % s) as f64 / s as f64;
            out.push(a + (b - a) * frac);
        }
    }
    out
}

/// Runs an M:N prediction in a decimated timeline: keep every S-th history
/// sample (phased to end at the last one), predict N coarse samples, then
/// interpolate back, covering M*S : N*S source-interval samples.
pub fn transfer_predict<T: Scalar>(
    model: &impl SeqPredictor<T>,
    vocab: &Vocabulary,
    history: &ChannelSeries,
    task: &PredictionTask,
) -> Result<ChannelSeries> {
    task.validate()?;
    if task.s == 1 {
        return predict_series(model, vocab, history, task);
    }
    let decimated = history.decimate_keep_last(task.s)?;
    if decimated.len() < task.m + 1 {
        return Err(Error::invalid(format!(
            "history too short: decimation by {} leaves {} samples, need M+1 = {}",
            task.s,
            decimated.len(),
            task.m + 1
        )));
    }
    let coarse = predict_series(model, vocab, &decimated, task)?;
    let anchor = *history.samples.last().unwrap();
    let fine = interpolate(anchor, &coarse.samples, task.s);
    ChannelSeries::new(fine, history.sample_interval_s, history.label.clone())
}
