//! Quantitative evaluation: NMSE, spliced prediction over a test series,
//! the zero-order-hold baseline, and the max-magnitude prediction
//! diversity combiner.

use crate::dataset::PredictionTask;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::model::SeqPredictor;
use crate::nn::tensor::Scalar;
use crate::predict::predict_tokens;
use crate::series::ChannelSeries;
use crate::vcc::{decode, Vocabulary, UNK_ID};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

/// Sum |h - p|^2 / sum |p|^2 — normalized by the *predicted* power.
pub fn nmse(truth: &ChannelSeries, predicted: &ChannelSeries) -> Result<f64> {
    nmse_slices(&truth.samples, &predicted.samples)
}

fn nmse_slices(truth: &[Complex64], predicted: &[Complex64]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::invalid(
            "NMSE needs equal-length, non-empty sequences",
        ));
    }
    let mut err = 0.0;
    let mut denom = 0.0;
    for (h, p) in truth.iter().zip(predicted) {
        err += (h - p).norm_sqr();
        denom += p.norm_sqr();
    }
    if denom == 0.0 {
        return Err(Error::UndefinedNmse);
    }
    Ok(err / denom)
}

/// Conventional variant normalized by the true sequence's power instead.
pub fn nmse_truth_normalized(truth: &ChannelSeries, predicted: &ChannelSeries) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::invalid(
            "NMSE needs equal-length, non-empty sequences",
        ));
    }
    let mut err = 0.0;
    let mut denom = 0.0;
    for (h, p) in truth.samples.iter().zip(&predicted.samples) {
        err += (h - p).norm_sqr();
        denom += h.norm_sqr();
    }
    if denom == 0.0 {
        return Err(Error::UndefinedNmse);
    }
    Ok(err / denom)
}

/// Whether each spliced block predicts from the true history or from the
/// already-spliced (partly predicted) one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpliceMode {
    Independent,
    Accumulating,
}

/// A test series with every N-block beyond the first M+1 samples replaced
/// by predictions.
#[derive(Debug, Clone)]
pub struct SplicedResult {
    pub predicted: ChannelSeries,
    pub truth: ChannelSeries,
    /// (start, length) of each replaced block.
    pub segments: Vec<(usize, usize)>,
    pub unk_tokens: u64,
    pub total_tokens: u64,
}

impl SplicedResult {
    /// NMSE restricted to the replaced blocks; the copied-through head and
    /// any trailing partial block do not count.
    pub fn nmse(&self) -> Result<f64> {
        let (t, p) = self.segment_samples();
        nmse_slices(&t, &p)
    }

    /// Same restriction, normalized by the truth's power instead.
    pub fn nmse_truth_normalized(&self) -> Result<f64> {
        let (t, p) = self.segment_samples();
        let mut err = 0.0;
        let mut denom = 0.0;
        for (h, pr) in t.iter().zip(&p) {
            err += (h - pr).norm_sqr();
            denom += h.norm_sqr();
        }
        if denom == 0.0 {
            return Err(Error::UndefinedNmse);
        }
        Ok(err / denom)
    }

    fn segment_samples(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for &(start, len) in &self.segments {
            t.extend_from_slice(&self.truth.samples[start..start + len]);
            p.extend_from_slice(&self.predicted.samples[start..start + len]);
        }
        (t, p)
    }

    pub fn unk_rate(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.unk_tokens as f64 / self.total_tokens as f64
        }
    }
}

/// Walks the truth sequence block by block, replacing each N-block with
/// the output of `predict_block(history, n)`. The closure also reports how
/// many of its tokens were unk.
pub fn splice_with<F>(
    truth: &ChannelSeries,
    task: &PredictionTask,
    mode: SpliceMode,
    mut predict_block: F,
) -> Result<SplicedResult>
where
    F: FnMut(&[Complex64], usize) -> Result<(Vec<Complex64>, u64)>,
{
    task.validate()?;
    let (m, n) = (task.m, task.n);
    if truth.len() < m + 1 + n {
        return Err(Error::invalid(format!(
            "test series needs at least M+1+N = {} samples, found {}",
            m + 1 + n,
            truth.len()
        )));
    }
    let mut predicted = truth.samples.clone();
    let mut segments = Vec::new();
    let mut unk_tokens = 0;
    let mut total_tokens = 0;
    let mut start = m + 1;
    while start + n <= truth.len() {
        let history: &[Complex64] = match mode {
            SpliceMode::Independent => &truth.samples[..start],
            SpliceMode::Accumulating => &predicted[..start],
        };
        let (block, unk) = predict_block(history, n)?;
        if block.len() != n {
            return Err(Error::invalid(format!(
                "predictor returned {} samples for a block of {n}",
                block.len()
            )));
        }
        predicted[start..start + n].copy_from_slice(&block);
        segments.push((start, n));
        unk_tokens += unk;
        total_tokens += n as u64;
        start += n;
    }
    Ok(SplicedResult {
        predicted: ChannelSeries::new(
            predicted,
            truth.sample_interval_s,
            format!("{} (spliced)", truth.label),
        )?,
        truth: truth.clone(),
        segments,
        unk_tokens,
        total_tokens,
    })
}

/// Model-backed splice: each block is an M:N prediction from the window
/// preceding it.
pub fn splice<T: Scalar>(
    truth: &ChannelSeries,
    model: &impl SeqPredictor<T>,
    vocab: &Vocabulary,
    task: &PredictionTask,
    mode: SpliceMode,
) -> Result<SplicedResult> {
    splice_with(truth, task, mode, |history, n| {
        let hist = ChannelSeries::new(
            history.to_vec(),
            truth.sample_interval_s,
            truth.label.clone(),
        )?;
        let sub = PredictionTask { n, ..*task };
        let tokens = predict_tokens(model, vocab, &hist, &sub)?;
        let unk = tokens.ids.iter().filter(|&&id| id == UNK_ID).count() as u64;
        let series = decode(&tokens, vocab)?;
        Ok((series.samples, unk))
    })
}

/// Baseline: every block repeats the last true sample before it.
pub fn zoh_baseline(truth: &ChannelSeries, task: &PredictionTask) -> Result<SplicedResult> {
    splice_with(truth, task, SpliceMode::Independent, |history, n| {
        let last = *history.last().unwrap();
        Ok((vec![last; n], 0))
    })
}

/// Max-magnitude combination of aligned candidate series.
#[derive(Debug, Clone)]
pub struct DiversityResult {
    pub combined: ChannelSeries,
    /// Winning candidate index per position; ties go to the lowest index.
    pub winners: Vec<usize>,
}

impl DiversityResult {
    pub fn winner_histogram(&self, candidates: usize) -> Vec<usize> {
        let mut hist = vec![0usize; candidates];
        for &w in &self.winners {
            hist[w] += 1;
        }
        hist
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("position\twinner\n");
        for (k, w) in self.winners.iter().enumerate() {
            let _ = writeln!(out, "{k}\t{w}");
        }
        write_atomic(path.as_ref(), out.as_bytes())?;
        Ok(())
    }
}

/// Per position, keeps the full complex value of whichever candidate has
/// the largest magnitude.
pub fn prediction_diversity(candidates: &[ChannelSeries]) -> Result<DiversityResult> {
    let first = candidates
        .first()
        .ok_or_else(|| Error::invalid("prediction diversity needs at least one candidate"))?;
    if candidates.iter().any(|c| c.len() != first.len()) {
        return Err(Error::invalid("candidates must have equal lengths"));
    }
    let mut samples = Vec::with_capacity(first.len());
    let mut winners = Vec::with_capacity(first.len());
    for k in 0..first.len() {
        let mut best = 0usize;
        for (i, c) in candidates.iter().enumerate() {
            if c.samples[k].norm_sqr() > candidates[best].samples[k].norm_sqr() {
                best = i;
            }
        }
        samples.push(candidates[best].samples[k]);
        winners.push(best);
    }
    Ok(DiversityResult {
        combined: ChannelSeries::new(samples, first.sample_interval_s, "pd")?,
        winners,
    })
}

/// One evaluation run's headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub label: String,
    pub nmse: f64,
    pub unk_rate: f64,
    pub segments: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn push_spliced(&mut self, label: impl Into<String>, spliced: &SplicedResult) -> Result<()> {
        self.rows.push(EvalRow {
            label: label.into(),
            nmse: spliced.nmse()?,
            unk_rate: spliced.unk_rate(),
            segments: spliced.segments.len(),
        });
        Ok(())
    }

    /// Row carrying the truth-normalized NMSE, for sanity comparisons
    /// against the predicted-power convention.
    pub fn push_spliced_truth_normalized(
        &mut self,
        label: impl Into<String>,
        spliced: &SplicedResult,
    ) -> Result<()> {
        self.rows.push(EvalRow {
            label: label.into(),
            nmse: spliced.nmse_truth_normalized()?,
            unk_rate: spliced.unk_rate(),
            segments: spliced.segments.len(),
        });
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut out = String::from("label\tnmse\tunk_rate\tsegments\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.label, r.nmse, r.unk_rate, r.segments);
        }
        out
    }

    pub fn to_text_string(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}: nmse={:.6e} unk_rate={:.4} segments={}",
                r.label, r.nmse, r.unk_rate, r.segments
            );
        }
        out
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_tsv_string().as_bytes())?;
        Ok(())
    }
}
