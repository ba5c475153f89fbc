//! Sliding-window datasets over token sequences.

use crate::error::{Error, Result};
use crate::vcc::{TokenSeries, Vocabulary};
use num_complex::Complex64;

/// M:N prediction protocol: M history tokens, N future tokens, window
/// stride, and the temporal sampling factor S used for transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionTask {
    pub m: usize,
    pub n: usize,
    pub stride: usize,
    pub s: usize,
}

impl PredictionTask {
    pub fn new(m: usize, n: usize) -> Self {
        PredictionTask {
            m,
            n,
            stride: 1,
            s: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_sampling(mut self, s: usize) -> Self {
        self.s = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.n < 1 || self.stride < 1 || self.s < 1 {
            return Err(Error::invalid("M, N, stride and S must all be >= 1"));
        }
        Ok(())
    }
}

/// One training example: M input ids, N target ids, and the reconstructed
/// coefficient immediately before the first target change.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Vec<u32>,
    pub target: Vec<u32>,
    pub anchor: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub examples: Vec<Window>,
    pub vocab_hash: u64,
    pub m: usize,
    pub n: usize,
}

/// floor((L - (M+N)) / stride) + 1 windows for L >= M+N, else none.
pub fn window_count(token_len: usize, m: usize, n: usize, stride: usize) -> usize {
    if token_len < m + n {
        0
    } else {
        (token_len - (m + n)) / stride + 1
    }
}

/// Slides an (M, N) window over the token sequence at the task's stride.
/// Too-short input yields an empty dataset rather than an error.
pub fn make_dataset(
    tokens: &TokenSeries,
    vocab: &Vocabulary,
    task: &PredictionTask,
) -> Result<WindowedDataset> {
    task.validate()?;
    if tokens.vocabulary_hash != vocab.hash() {
        return Err(Error::VocabularyMismatch(
            "token series and vocabulary disagree".into(),
        ));
    }
    let (m, n) = (task.m, task.n);
    let ltok = tokens.ids.len();
    let count = window_count(ltok, m, n, task.stride);

    // Reconstruct per-position coefficients once: the stored anchor sits
    // after the final change, so walk back to the start first.
    let mut total = Complex64::new(0.0, 0.0);
    for &id in &tokens.ids {
        total += vocab.cc_of(id)?;
    }
    let start = tokens.anchor - total;
    let mut prefix = Vec::with_capacity(ltok + 1);
    let mut acc = start;
    prefix.push(acc);
    for &id in &tokens.ids {
        acc += vocab.cc_of(id)?;
        prefix.push(acc);
    }

    let mut examples = Vec::with_capacity(count);
    for w in 0..count {
        let o = w * task.stride;
        examples.push(Window {
            input: tokens.ids[o..o + m].to_vec(),
            target: tokens.ids[o + m..o + m + n].to_vec(),
            anchor: prefix[o + m],
        });
    }
    Ok(WindowedDataset {
        examples,
        vocab_hash: tokens.vocabulary_hash,
        m,
        n,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Appends another dataset built against the same vocabulary and task.
    pub fn extend(&mut self, other: WindowedDataset) -> Result<()> {
        if other.vocab_hash != self.vocab_hash {
            return Err(Error::VocabularyMismatch(
                "cannot merge datasets from different vocabularies".into(),
            ));
        }
        if other.m != self.m || other.n != self.n {
            return Err(Error::invalid("cannot merge datasets with different M:N"));
        }
        self.examples.extend(other.examples);
        Ok(())
    }
}
