//! Sequence models over channel-change tokens: a single recurrent stack
//! that continues one sequence, and an encoder-decoder with optional
//! bidirectional encoding and attention.

pub mod nlg;
pub mod seq2seq;

pub use nlg::NlgModel;
pub use seq2seq::{SeedMode, Seq2SeqModel};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::nn::gradcheck::HasParams;
use crate::nn::tensor::{Scalar, Tensor};
use crate::nn::AdamState;
use std::collections::HashMap;
use std::path::Path;

/// Greedy choice: highest value, lowest index on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Common greedy-prediction surface of both model arrangements.
pub trait SeqPredictor<T: Scalar> {
    /// Greedy continuation: feed `history` token ids, emit `n` ids.
    fn predict(&self, history: &[u32], n: usize) -> Result<Vec<u32>>;
    fn vocab_hash(&self) -> u64;
    fn vocab_size(&self) -> usize;
}

/// Either model arrangement, as stored in a checkpoint.
pub enum AnyModel<T: Scalar = f32> {
    Nlg(NlgModel<T>),
    Nmt(Seq2SeqModel<T>),
}

impl<T: Scalar> SeqPredictor<T> for AnyModel<T> {
    fn predict(&self, history: &[u32], n: usize) -> Result<Vec<u32>> {
        match self {
            AnyModel::Nlg(m) => m.predict(history, n),
            AnyModel::Nmt(m) => m.predict(history, n),
        }
    }
    fn vocab_hash(&self) -> u64 {
        match self {
            AnyModel::Nlg(m) => m.vocab_hash,
            AnyModel::Nmt(m) => m.vocab_hash,
        }
    }
    fn vocab_size(&self) -> usize {
        match self {
            AnyModel::Nlg(m) => m.vocab_size(),
            AnyModel::Nmt(m) => m.vocab_size(),
        }
    }
}

impl<T: Scalar> HasParams<T> for AnyModel<T> {
    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        match self {
            AnyModel::Nlg(m) => m.visit_params(f),
            AnyModel::Nmt(m) => m.visit_params(f),
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        match self {
            AnyModel::Nlg(m) => m.visit_params_mut(f),
            AnyModel::Nmt(m) => m.visit_params_mut(f),
        }
    }
}

pub(crate) fn hash_to_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

pub(crate) fn hash_from_hex(s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16)
        .map_err(|_| Error::Checkpoint(format!("vocabulary_hash '{s}' is not a hex u64")))
}

/// Collects (name, tensor) pairs in visit order.
pub(crate) fn params_vec<T: Scalar, M: HasParams<T>>(model: &M) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    model.visit_params(&mut |name, t| out.push((name, t.clone())));
    out
}

/// Overwrites every parameter of `model` from a name -> tensor map,
/// erroring on anything missing or shape-mismatched.
pub(crate) fn assign_params<T: Scalar, M: HasParams<T>>(
    model: &mut M,
    mut tensors: HashMap<String, Tensor<T>>,
) -> Result<()> {
    let mut missing = Vec::new();
    model.visit_params_mut(&mut |name, param| match tensors.remove(&name) {
        Some(t) if t.shape() == param.shape() => *param = t,
        Some(t) => missing.push(format!(
            "tensor '{name}' has shape {:?}, expected {:?}",
            t.shape(),
            param.shape()
        )),
        None => missing.push(format!("tensor '{name}' absent from checkpoint")),
    });
    if let Some(msg) = missing.first() {
        return Err(Error::Checkpoint(msg.clone()));
    }
    Ok(())
}

const OPT_M_PREFIX: &str = "opt.m.";
const OPT_V_PREFIX: &str = "opt.v.";

/// Writes a model (and optionally its optimizer moments) to a CKPT file.
pub fn save_model<T: Scalar>(
    path: impl AsRef<Path>,
    model: &AnyModel<T>,
    optimizer: Option<&AdamState<T>>,
) -> Result<()> {
    let mut meta = match model {
        AnyModel::Nlg(m) => m.checkpoint_meta(),
        AnyModel::Nmt(m) => m.checkpoint_meta(),
    };
    let mut tensors = params_vec(model);
    if let Some(opt) = optimizer {
        meta.set("opt.step_count", opt.step_count);
        meta.set("opt.learning_rate", opt.learning_rate);
        meta.set("opt.clip_norm", opt.clip_norm);
        let (first, second) = opt.moment_tensors();
        let mut names: Vec<&String> = first.keys().collect();
        names.sort();
        for name in names {
            tensors.push((format!("{OPT_M_PREFIX}{name}"), first[name].clone()));
            tensors.push((format!("{OPT_V_PREFIX}{name}"), second[name].clone()));
        }
    }
    save_checkpoint(path, &meta, &tensors)
}

/// Reads a CKPT file back into a model plus any stored optimizer state.
pub fn load_model<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(AnyModel<T>, Option<AdamState<T>>, CheckpointMeta)> {
    let (meta, tensors) = load_checkpoint::<T>(path)?;
    let mut model_tensors = HashMap::new();
    let mut opt_m = HashMap::new();
    let mut opt_v = HashMap::new();
    for (name, t) in tensors {
        if let Some(rest) = name.strip_prefix(OPT_M_PREFIX) {
            opt_m.insert(rest.to_string(), t);
        } else if let Some(rest) = name.strip_prefix(OPT_V_PREFIX) {
            opt_v.insert(rest.to_string(), t);
        } else {
            model_tensors.insert(name, t);
        }
    }

    let expected: usize = model_tensors.len();
    let model = match meta.get("arrangement")? {
        "nlg" => {
            let mut m = NlgModel::from_meta(&meta)?;
            assign_params(&mut m, model_tensors)?;
            AnyModel::Nlg(m)
        }
        "nmt" => {
            let mut m = Seq2SeqModel::from_meta(&meta)?;
            assign_params(&mut m, model_tensors)?;
            AnyModel::Nmt(m)
        }
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown arrangement '{other}'"
            )))
        }
    };
    let own: usize = model.param_names().len();
    if expected != own {
        return Err(Error::Checkpoint(format!(
            "checkpoint lists {expected} model tensors, arrangement expects {own}"
        )));
    }

    let optimizer = if meta.entries.contains_key("opt.step_count") {
        let mut opt = AdamState::new(
            meta.get_parsed("opt.learning_rate")?,
            meta.get_parsed("opt.clip_norm")?,
        );
        opt.step_count = meta.get_parsed("opt.step_count")?;
        opt.set_moments(opt_m, opt_v);
        Some(opt)
    } else {
        None
    };
    Ok((model, optimizer, meta))
}
