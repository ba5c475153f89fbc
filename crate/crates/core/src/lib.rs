//! Fading-channel prediction by treating quantized channel *changes* as a
//! token vocabulary and training recurrent sequence models over the token
//! stream. The crate covers synthetic channel generation, tokenization,
//! a small reverse-mode tensor core, both single-stack and
//! encoder-decoder predictors, and NMSE/diversity evaluation.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fading;
pub mod io_util;
pub mod model;
pub mod nn;
pub mod predict;
pub mod series;
pub mod train;
pub mod vcc;

pub use dataset::{make_dataset, PredictionTask, WindowedDataset};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use eval::{
    nmse, prediction_diversity, splice, zoh_baseline, EvalReport, SpliceMode, SplicedResult,
};
pub use fading::{add_noise, doppler_frequency, generate_channel, generate_tap, wavelength_span, FadingConfig};
pub use model::{load_model, save_model, AnyModel, NlgModel, SeedMode, Seq2SeqModel, SeqPredictor};
pub use predict::{predict_series, predict_tokens, transfer_predict};
pub use series::ChannelSeries;
pub use train::{fine_tune, train_nlg, train_nmt, LrSchedule, TrainConfig, TrainReport};
pub use vcc::{build_vocabulary, compute_changes, decode, encode, quantize, TokenSeries, Vocabulary};
