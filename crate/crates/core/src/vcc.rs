//! Tokenization of channel changes.
//!
//! Consecutive-sample differences are quantized onto a uniform grid and
//! mapped to integer IDs through a frequency-ranked vocabulary. ID 0 is
//! reserved for out-of-vocabulary changes (`unk`) and decodes to the zero
//! change, i.e. "hold the last value".

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::series::ChannelSeries;
use num_complex::Complex64;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub const UNK_ID: u32 = 0;

/// First differences of a channel series, raw or grid-quantized.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSeries {
    pub changes: Vec<Complex64>,
    /// Present once the changes have been quantized onto a grid.
    pub quant_step: Option<f64>,
    pub source_interval_s: f64,
}

/// changes[k] = samples[k+1] - samples[k]; output is one shorter than the input.
pub fn compute_changes(series: &ChannelSeries) -> Result<ChangeSeries> {
    if series.len() < 2 {
        return Err(Error::invalid("need at least 2 samples to compute changes"));
    }
    let changes = series
        .samples
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    Ok(ChangeSeries {
        changes,
        quant_step: None,
        source_interval_s: series.sample_interval_s,
    })
}

fn round_half_away(x: f64) -> f64 {
    // f64::round rounds half-way cases away from zero, which is the
    // convention the grid uses.
    x.round()
}

fn quantize_component(x: f64, step: f64) -> f64 {
    round_half_away(x / step) * step
}

pub fn quantize_value(c: Complex64, step: f64) -> Complex64 {
    Complex64::new(quantize_component(c.re, step), quantize_component(c.im, step))
}

/// Rounds every component to the nearest multiple of `quant_step`,
/// half-away-from-zero.
pub fn quantize(changes: &ChangeSeries, quant_step: f64) -> Result<ChangeSeries> {
    if !(quant_step > 0.0) || !quant_step.is_finite() {
        return Err(Error::invalid("quant_step must be finite and > 0"));
    }
    Ok(ChangeSeries {
        changes: changes
            .changes
            .iter()
            .map(|c| quantize_value(*c, quant_step))
            .collect(),
        quant_step: Some(quant_step),
        source_interval_s: changes.source_interval_s,
    })
}

/// Integer grid coordinates of a quantized change; exact hash/compare key.
fn grid_key(c: Complex64, step: f64) -> (i64, i64) {
    (
        round_half_away(c.re / step) as i64,
        round_half_away(c.im / step) as i64,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub id: u32,
    pub cc: Complex64,
    pub frequency: u64,
}

/// Frequency-ranked bijection between quantized channel changes and
/// integer IDs 1..=X. ID 0 is `unk` and never appears in the entry list.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub quant_step: f64,
    pub entries: Vec<VocabEntry>,
    /// Distinct changes seen at build time but left out of the vocabulary.
    pub oov_count: u64,
    index: HashMap<(i64, i64), u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.quant_step == other.quant_step
            && self.entries == other.entries
            && self.oov_count == other.oov_count
    }
}

impl Vocabulary {
    fn from_parts(quant_step: f64, entries: Vec<VocabEntry>, oov_count: u64) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for e in &entries {
            let key = grid_key(e.cc, quant_step);
            if index.insert(key, e.id).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate vocabulary entry {}{:+}i",
                    e.cc.re, e.cc.im
                )));
            }
        }
        Ok(Self {
            quant_step,
            entries,
            oov_count,
            index,
        })
    }

    /// Number of in-vocabulary entries (X). Valid IDs are 0..=X.
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    /// Maps a quantized change to its ID, or `UNK_ID` when absent.
    pub fn id_of(&self, cc: Complex64) -> u32 {
        self.index
            .get(&grid_key(cc, self.quant_step))
            .copied()
            .unwrap_or(UNK_ID)
    }

    /// Complex change for an ID. `unk` decodes to the zero change.
    pub fn cc_of(&self, id: u32) -> Result<Complex64> {
        if id == UNK_ID {
            return Ok(Complex64::new(0.0, 0.0));
        }
        self.entries
            .get(id as usize - 1)
            .map(|e| e.cc)
            .ok_or(Error::CorruptToken {
                id,
                bound: self.size() as u32,
            })
    }

    /// FNV-1a 64-bit digest of the canonical serialized entry list.
    pub fn hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut feed = |s: &str| {
            for b in s.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(&format!("step={}\n", self.quant_step));
        for e in &self.entries {
            feed(&format!("{} {} {} {}\n", e.id, e.cc.re, e.cc.im, e.frequency));
        }
        h
    }

    pub fn to_vccf_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# vccf v1 step={} X={} L={}",
            self.quant_step,
            self.size(),
            self.oov_count
        );
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {}", e.id, e.cc.re, e.cc.im, e.frequency);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_vccf_string().as_bytes())?;
        Ok(())
    }

    pub fn from_vccf_str(text: &str) -> Result<Vocabulary> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty file, expected vccf header"))?;
        let rest = header
            .strip_prefix("# vccf v1 ")
            .ok_or_else(|| Error::parse(1, "expected header '# vccf v1 step=<float> X=<int> L=<int>'"))?;
        let mut step = None;
        let mut x = None;
        let mut l = None;
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("bad header field '{field}'")))?;
            match key {
                "step" => {
                    step = Some(value.parse::<f64>().map_err(|_| Error::parse(1, "bad step value"))?)
                }
                "X" => x = Some(value.parse::<usize>().map_err(|_| Error::parse(1, "bad X value"))?),
                "L" => l = Some(value.parse::<u64>().map_err(|_| Error::parse(1, "bad L value"))?),
                other => return Err(Error::parse(1, format!("unknown header field '{other}'"))),
            }
        }
        let step = step.ok_or_else(|| Error::parse(1, "missing step field"))?;
        let x = x.ok_or_else(|| Error::parse(1, "missing X field"))?;
        let l = l.ok_or_else(|| Error::parse(1, "missing L field"))?;
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::parse(1, "step must be finite and > 0"));
        }

        let mut entries = Vec::with_capacity(x);
        let mut prev_freq: Option<u64> = None;
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::parse(line_no, "expected '<id> <real> <imag> <frequency>'"));
            }
            let id: u32 = parts[0]
                .parse()
                .map_err(|_| Error::parse(line_no, "bad id"))?;
            let re: f64 = parts[1]
                .parse()
                .map_err(|_| Error::parse(line_no, "bad real part"))?;
            let im: f64 = parts[2]
                .parse()
                .map_err(|_| Error::parse(line_no, "bad imaginary part"))?;
            let frequency: u64 = parts[3]
                .parse()
                .map_err(|_| Error::parse(line_no, "bad frequency"))?;
            if id == UNK_ID {
                return Err(Error::parse(line_no, "id 0 is reserved for unk and may not be listed"));
            }
            if id as usize != entries.len() + 1 {
                return Err(Error::parse(
                    line_no,
                    format!("ids must be dense and ascending, expected {}", entries.len() + 1),
                ));
            }
            if frequency < 1 {
                return Err(Error::parse(line_no, "frequency must be >= 1"));
            }
            if let Some(prev) = prev_freq {
                if frequency > prev {
                    return Err(Error::parse(line_no, "frequencies must be non-increasing by id"));
                }
            }
            prev_freq = Some(frequency);
            entries.push(VocabEntry {
                id,
                cc: Complex64::new(re, im),
                frequency,
            });
        }
        if entries.len() != x {
            return Err(Error::parse(
                1,
                format!("header declares X={} but {} entries were listed", x, entries.len()),
            ));
        }
        Vocabulary::from_parts(step, entries, l).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::parse(0, msg),
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_vccf_str(&text)
    }
}

/// Counts distinct quantized changes and keeps the most frequent ones.
/// Ties are broken by ascending (real, imag) so the ranking is
/// deterministic across platforms.
pub fn build_vocabulary(
    changes: &ChangeSeries,
    max_size: usize,
    min_frequency: u64,
) -> Result<Vocabulary> {
    let step = changes
        .quant_step
        .ok_or_else(|| Error::invalid("build_vocabulary requires quantized changes"))?;
    if changes.changes.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from empty input"));
    }
    if max_size < 1 {
        return Err(Error::invalid("max_size must be >= 1"));
    }
    if min_frequency < 1 {
        return Err(Error::invalid("min_frequency must be >= 1"));
    }

    let mut counts: HashMap<(i64, i64), u64> = HashMap::new();
    for c in &changes.changes {
        *counts.entry(grid_key(*c, step)).or_insert(0) += 1;
    }
    let total_distinct = counts.len() as u64;

    let mut ranked: Vec<((i64, i64), u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let entries: Vec<VocabEntry> = ranked
        .iter()
        .filter(|(_, freq)| *freq >= min_frequency)
        .take(max_size)
        .enumerate()
        .map(|(i, ((kr, ki), freq))| VocabEntry {
            id: (i + 1) as u32,
            cc: Complex64::new(*kr as f64 * step, *ki as f64 * step),
            frequency: *freq,
        })
        .collect();
    let oov_count = total_distinct - entries.len() as u64;
    Vocabulary::from_parts(step, entries, oov_count)
}

/// Token sequence plus the anchor coefficient needed to reconstruct
/// absolute values from cumulative changes.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeries {
    pub ids: Vec<u32>,
    /// Last known true coefficient preceding the first decoded change.
    pub anchor: Complex64,
    pub vocabulary_hash: u64,
    pub interval_s: f64,
}

/// Quantizes the series' changes and maps them to IDs; out-of-vocabulary
/// changes become `unk`. The anchor is the final sample, the reference
/// point for decoding changes that continue the series.
pub fn encode(series: &ChannelSeries, vocab: &Vocabulary) -> Result<TokenSeries> {
    let changes = compute_changes(series)?;
    let quantized = quantize(&changes, vocab.quant_step)?;
    encode_changes(&quantized, vocab, *series.samples.last().unwrap(), series.sample_interval_s)
}

/// Maps an already-computed change sequence to IDs. Pre-quantized input
/// must share the vocabulary's grid.
pub fn encode_changes(
    changes: &ChangeSeries,
    vocab: &Vocabulary,
    anchor: Complex64,
    interval_s: f64,
) -> Result<TokenSeries> {
    let quantized_owned;
    let quantized = match changes.quant_step {
        Some(step) => {
            if (step - vocab.quant_step).abs() > 1e-15 * vocab.quant_step.abs() {
                return Err(Error::invalid(format!(
                    "quant_step mismatch: changes on grid {}, vocabulary on grid {}",
                    step, vocab.quant_step
                )));
            }
            changes
        }
        None => {
            quantized_owned = quantize(changes, vocab.quant_step)?;
            &quantized_owned
        }
    };
    let ids = quantized.changes.iter().map(|c| vocab.id_of(*c)).collect();
    Ok(TokenSeries {
        ids,
        anchor,
        vocabulary_hash: vocab.hash(),
        interval_s,
    })
}

/// Cumulative reconstruction: sample y is the anchor plus the sum of the
/// first y+1 decoded changes. `unk` contributes the zero change.
pub fn decode(tokens: &TokenSeries, vocab: &Vocabulary) -> Result<ChannelSeries> {
    if tokens.vocabulary_hash != vocab.hash() {
        return Err(Error::VocabularyMismatch(format!(
            "token series was produced with vocabulary {:016x}, got {:016x}",
            tokens.vocabulary_hash,
            vocab.hash()
        )));
    }
    let mut samples = Vec::with_capacity(tokens.ids.len());
    let mut acc = tokens.anchor;
    for &id in &tokens.ids {
        acc += vocab.cc_of(id)?;
        samples.push(acc);
    }
    ChannelSeries::new(samples, tokens.interval_s, "decoded")
}
