//! Subcommand implementations over the library pipeline.
//!
//! Ingested series are RMS-normalized to unit mean power before
//! differencing, so the 0.01 quantization grid is scale-free; predictions
//! are scaled back to the source units on output.

use crate::cli::*;
use crate::config::{usage, Resolver};
use anyhow::Context;
use chanlingo_core::model::seq2seq::Seq2SeqConfig;
use chanlingo_core::model::nlg::NlgConfig;
use chanlingo_core::nn::{AdamState, CellKind};
use chanlingo_core::*;
use log::{info, warn};
use std::path::Path;

fn read_series(path: &Path) -> anyhow::Result<ChannelSeries> {
    ChannelSeries::read_csf(path).with_context(|| format!("reading {}", path.display()))
}

fn read_normalized(path: &Path) -> anyhow::Result<(ChannelSeries, f64)> {
    let series = read_series(path)?;
    let (norm, rms) = series.normalize_to_unit_power()?;
    Ok((norm, rms))
}

pub fn run_gen(args: GenArgs, threads: usize) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let config = FadingConfig {
        carrier_freq_hz: r.required("carrier_freq_hz", None::<f64>)?,
        speed_mps: r.required("speed_mps", None::<f64>)?,
        sample_interval_s: r.required("sample_interval_s", None::<f64>)?,
        num_sinusoids: r.or_default("num_sinusoids", None, 32usize)?,
        num_taps: r.or_default("num_taps", None, 1usize)?,
        tap_gains_db: {
            let raw = r.list("tap_gains_db", &[])?;
            if raw.is_empty() {
                vec![0.0]
            } else {
                raw.iter()
                    .map(|s| s.parse::<f64>().map_err(|_| usage(format!("bad tap gain '{s}'"))))
                    .collect::<anyhow::Result<Vec<f64>>>()?
            }
        },
        duration_samples: r.required("duration_samples", None::<usize>)?,
        rng_seed: r.or_default("rng_seed", None, 0u64)?,
    };
    let tap_index = r.optional("tap_index", None::<usize>)?;
    let snr_db = r.optional("snr_db", None::<f64>)?;
    let noise_seed = r.or_default("noise_seed", None, config.rng_seed ^ 0x6e6f697365)?;
    let label = r.optional("label", None::<String>)?;
    let out = r.required("out", args.out)?;
    r.finish(args.dump_config.as_ref())?;

    config.validate().context("gen")?;
    let mut series = match tap_index {
        Some(tap) => generate_tap(&config, tap).context("gen")?,
        None => generate_parallel(&config, threads)?,
    };
    if let Some(label) = label {
        series.label = label;
    }
    if let Some(snr) = snr_db {
        series = add_noise(&series, snr, noise_seed).context("gen")?;
    }
    series.write_csf(Path::new(&out)).context("gen")?;
    info!(
        "gen: wrote {} samples at interval {} s to {}",
        series.len(),
        series.sample_interval_s,
        out
    );
    Ok(())
}

/// Sums per-tap series, fanning tap generation across threads. Taps are
/// accumulated in index order so the output is thread-count invariant.
fn generate_parallel(config: &FadingConfig, threads: usize) -> anyhow::Result<ChannelSeries> {
    if threads <= 1 || config.num_taps == 1 {
        return Ok(generate_channel(config).context("gen")?);
    }
    let taps: Vec<ChannelSeries> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.num_taps)
            .map(|tap| scope.spawn(move || generate_tap(config, tap)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tap generation panicked"))
            .collect::<chanlingo_core::Result<Vec<_>>>()
    })
    .context("gen")?;
    let mut total = vec![Complex64::new(0.0, 0.0); config.duration_samples];
    for tap in &taps {
        for (acc, s) in total.iter_mut().zip(&tap.samples) {
            *acc += s;
        }
    }
    Ok(ChannelSeries::new(total, config.sample_interval_s, "channel")?)
}

pub fn run_build_vocab(args: BuildVocabArgs) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let inputs = r.list("in", &args.input)?;
    if inputs.is_empty() {
        return Err(usage("build-vocab needs at least one --in file"));
    }
    let step = r.or_default("step", args.step, 0.01)?;
    let max_size = r.or_default("max-size", args.max_size, 2000usize)?;
    let min_freq = r.or_default("min-freq", args.min_freq, 11u64)?;
    let out = r.required("out", args.out)?;
    r.finish(args.dump_config.as_ref())?;

    let mut all = Vec::new();
    let mut interval = None;
    for path in &inputs {
        let (norm, _) = read_normalized(Path::new(path))?;
        let changes = compute_changes(&norm).context("build-vocab")?;
        interval.get_or_insert(changes.source_interval_s);
        all.extend(quantize(&changes, step).context("build-vocab")?.changes);
    }
    let merged = vcc::ChangeSeries {
        changes: all,
        quant_step: Some(step),
        source_interval_s: interval.unwrap_or(1.0),
    };
    let vocab = build_vocabulary(&merged, max_size, min_freq).context("build-vocab")?;
    vocab.save(Path::new(&out)).context("build-vocab")?;
    info!(
        "build-vocab: X={} L={} hash={:016x} -> {}",
        vocab.size(),
        vocab.oov_count,
        vocab.hash(),
        out
    );
    Ok(())
}

fn encode_inputs(
    inputs: &[String],
    vocab: &Vocabulary,
    task: &PredictionTask,
) -> anyhow::Result<WindowedDataset> {
    let mut data: Option<WindowedDataset> = None;
    for path in inputs {
        let (norm, _) = read_normalized(Path::new(path))?;
        let tokens = encode(&norm, vocab).context("encoding input")?;
        let part = make_dataset(&tokens, vocab, task)?;
        if part.is_empty() {
            warn!("{path}: too short for a {}:{} window, skipped", task.m, task.n);
        }
        match &mut data {
            None => data = Some(part),
            Some(d) => d.extend(part)?,
        }
    }
    data.ok_or_else(|| usage("no training inputs given"))
}

pub fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let mode = r.required("mode", args.mode)?;
    let inputs = r.list("in", &args.input)?;
    let vocab_path = r.required("vocab", args.vocab)?;
    let m = r.required("M", args.m)?;
    let n = r.required("N", args.n)?;
    let stride = r.or_default("stride", args.stride, 1usize)?;
    let bidir = r.switch("bidir", args.bidir, false)?;
    let attention = r.switch("attention", args.attention, false)?;
    let cell = r.or_default("cell", args.cell, "gru".to_string())?;
    let hidden = r.or_default("hidden", args.hidden, 64usize)?;
    let emb = r.or_default("emb", args.emb, 32usize)?;
    let layers = r.or_default("layers", args.layers, 2usize)?;
    let epochs = r.or_default("epochs", args.epochs, 2usize)?;
    let batch = r.or_default("batch-size", args.batch_size, 32usize)?;
    let lr = r.or_default("lr", args.lr, 1e-3)?;
    let clip = r.or_default("clip-norm", args.clip_norm, 5.0)?;
    let seed = r.or_default("seed", args.seed, 0u64)?;
    let seed_mode = r.or_default("seed-mode", args.seed_mode, "zero".to_string())?;
    let constant_lr = r.switch("constant-lr", args.constant_lr, false)?;
    let init_model = r.optional("init-model", args.init_model)?;
    let out = r.required::<String>("out", args.out)?;
    r.finish(args.dump_config.as_ref())?;

    if inputs.is_empty() {
        return Err(usage("train needs at least one --in file"));
    }
    if mode == "nlg" && (bidir || attention) {
        return Err(usage(
            "--bidir and --attention apply to the encoder-decoder mode only",
        ));
    }
    let cell = CellKind::parse(&cell).map_err(|e| usage(e.to_string()))?;
    let seed_mode = SeedMode::parse(&seed_mode).map_err(|e| usage(e.to_string()))?;
    let vocab = Vocabulary::load(&vocab_path).context("loading vocabulary")?;
    let task = PredictionTask::new(m, n).with_stride(stride);
    task.validate()?;

    let data = encode_inputs(&inputs, &vocab, &task)?;
    info!("train: {} windows from {} input(s)", data.len(), inputs.len());

    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        shuffle_seed: seed,
        teacher_forcing: true,
        schedule: if constant_lr {
            LrSchedule::Constant
        } else {
            LrSchedule::Halving
        },
    };
    let mut opt = AdamState::<f32>::new(lr, clip);

    let mut model: AnyModel<f32> = match init_model {
        Some(path) => {
            let (model, _, _) = load_model::<f32>(&path).context("loading --init-model")?;
            if model.vocab_hash() != vocab.hash() {
                return Err(Error::VocabularyMismatch(
                    "--init-model was trained against a different vocabulary".into(),
                )
                .into());
            }
            match (&model, mode.as_str()) {
                (AnyModel::Nlg(_), "nlg") | (AnyModel::Nmt(_), "nmt") => {}
                _ => return Err(usage("--init-model arrangement does not match --mode")),
            }
            model
        }
        None => match mode.as_str() {
            "nlg" => AnyModel::Nlg(NlgModel::init(
                NlgConfig {
                    vocab_size: vocab.size() + 1,
                    emb,
                    hidden,
                    layers,
                    cell,
                },
                vocab.hash(),
                seed,
            )),
            "nmt" => AnyModel::Nmt(Seq2SeqModel::init(
                Seq2SeqConfig {
                    vocab_size: vocab.size() + 1,
                    emb,
                    hidden,
                    layers,
                    cell,
                    bidirectional: bidir,
                    attention,
                    seed_mode,
                },
                vocab.hash(),
                seed,
            )),
            other => return Err(usage(format!("unknown --mode '{other}', expected nlg or nmt"))),
        },
    };

    let report = fine_tune(&mut model, &data, &mut opt, &cfg).context("train")?;
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        info!("train: epoch {} mean loss {loss:.6}", i + 1);
    }
    save_model(Path::new(&out), &model, None).context("saving checkpoint")?;
    info!("train: checkpoint -> {}", out);
    Ok(())
}

pub fn run_predict(args: PredictArgs) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let model_path = r.required("model", args.model)?;
    let vocab_path = r.required("vocab", args.vocab)?;
    let input = r.required("in", args.input)?;
    let m = r.required("M", args.m)?;
    let n = r.required("N", args.n)?;
    let s = r.or_default("S", args.s, 1usize)?;
    let out = r.required::<String>("out", args.out)?;
    r.finish(args.dump_config.as_ref())?;

    let vocab = Vocabulary::load(&vocab_path).context("loading vocabulary")?;
    let (model, _, _) = load_model::<f32>(&model_path).context("loading model")?;
    let (norm, rms) = read_normalized(Path::new(&input))?;
    let task = PredictionTask::new(m, n).with_sampling(s);
    let predicted = transfer_predict(&model, &vocab, &norm, &task).context("predict")?;
    let mut restored = predicted.scaled(rms);
    restored.label = format!("{} (predicted)", norm.label);
    restored.write_csf(Path::new(&out)).context("predict")?;
    info!(
        "predict: {} samples ({}x{} coverage) -> {}",
        restored.len(),
        n,
        s,
        out
    );
    Ok(())
}

pub fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let truth_path = r.required("truth", args.truth)?;
    let model_path = r.required("model", args.model)?;
    let vocab_path = r.required("vocab", args.vocab)?;
    let m = r.required("M", args.m)?;
    let n = r.required("N", args.n)?;
    let accumulate = r.switch("accumulate", args.accumulate, false)?;
    let truth_normalized = r.switch("truth-normalized", args.truth_normalized, false)?;
    let report_path = r.required::<String>("report", args.report)?;
    r.finish(args.dump_config.as_ref())?;

    let vocab = Vocabulary::load(&vocab_path).context("loading vocabulary")?;
    let (model, _, _) = load_model::<f32>(&model_path).context("loading model")?;
    let (norm, _) = read_normalized(Path::new(&truth_path))?;
    let task = PredictionTask::new(m, n);
    let mode = if accumulate {
        SpliceMode::Accumulating
    } else {
        SpliceMode::Independent
    };
    let spliced = splice(&norm, &model, &vocab, &task, mode).context("eval")?;
    let zoh = zoh_baseline(&norm, &task).context("eval")?;

    let mut report = EvalReport::default();
    if truth_normalized {
        report.push_spliced_truth_normalized("model", &spliced)?;
        report.push_spliced_truth_normalized("zoh", &zoh)?;
    } else {
        report.push_spliced("model", &spliced)?;
        report.push_spliced("zoh", &zoh)?;
    }
    report.write_tsv(Path::new(&report_path)).context("eval")?;
    print!("{}", report.to_text_string());
    info!("eval: report -> {}", report_path);
    Ok(())
}

pub fn run_diversity(args: DiversityArgs) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let inputs = r.list("in", &args.input)?;
    let out = r.required::<String>("out", args.out)?;
    let trace = r.optional::<String>("trace", args.trace)?;
    r.finish(args.dump_config.as_ref())?;

    if inputs.is_empty() {
        return Err(usage("diversity needs at least one --in file"));
    }
    let candidates: Vec<ChannelSeries> = inputs
        .iter()
        .map(|p| read_series(Path::new(p)))
        .collect::<anyhow::Result<_>>()?;
    let result = prediction_diversity(&candidates).context("diversity")?;
    result.combined.write_csf(Path::new(&out)).context("diversity")?;
    if let Some(trace) = &trace {
        result.write_trace(Path::new(trace)).context("diversity")?;
    }
    let hist = result.winner_histogram(candidates.len());
    for (i, count) in hist.iter().enumerate() {
        println!("candidate {i} ({}): {count} wins", inputs[i]);
    }
    Ok(())
}

pub fn run_attention(args: AttentionArgs) -> anyhow::Result<()> {
    let mut r = Resolver::new(args.config.as_ref())?;
    let model_path = r.required("model", args.model)?;
    let vocab_path = r.required("vocab", args.vocab)?;
    let input = r.required("in", args.input)?;
    let m = r.required("M", args.m)?;
    let n = r.required("N", args.n)?;
    let out = r.required::<String>("out", args.out)?;
    r.finish(args.dump_config.as_ref())?;

    let vocab = Vocabulary::load(&vocab_path).context("loading vocabulary")?;
    let (model, _, _) = load_model::<f32>(&model_path).context("loading model")?;
    let AnyModel::Nmt(model) = model else {
        return Err(Error::InvalidState(
            "attention export needs an encoder-decoder checkpoint".into(),
        )
        .into());
    };
    if !model.has_attention() {
        return Err(Error::InvalidState(
            "checkpoint was trained without attention".into(),
        )
        .into());
    }
    let (norm, _) = read_normalized(Path::new(&input))?;
    let task = PredictionTask::new(m, n);
    let tokens = predict_tokens_with_attention(&model, &vocab, &norm, &task)?;
    let rows = tokens.1;
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    chanlingo_core::io_util::write_atomic(Path::new(&out), text.as_bytes()).context("attention")?;
    info!("attention: {} rows x {} columns -> {}", rows.len(), m, out);
    Ok(())
}

/// Encodes the last M+1 samples and decodes greedily, capturing the
/// per-step attention rows.
fn predict_tokens_with_attention(
    model: &Seq2SeqModel<f32>,
    vocab: &Vocabulary,
    history: &ChannelSeries,
    task: &PredictionTask,
) -> anyhow::Result<(Vec<u32>, Vec<Vec<f64>>)> {
    if model.vocab_hash() != vocab.hash() {
        return Err(Error::VocabularyMismatch(
            "model was trained against a different vocabulary".into(),
        )
        .into());
    }
    if history.len() < task.m + 1 {
        return Err(Error::invalid(format!(
            "history needs at least M+1 = {} samples, found {}",
            task.m + 1,
            history.len()
        ))
        .into());
    }
    let window = ChannelSeries::new(
        history.samples[history.len() - (task.m + 1)..].to_vec(),
        history.sample_interval_s,
        history.label.clone(),
    )?;
    let tokens = encode(&window, vocab)?;
    let (ids, rows) = model.predict_with_attention(&tokens.ids, task.n)?;
    Ok((ids, rows.expect("attention enabled")))
}
