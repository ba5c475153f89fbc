//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured numbers. The long-running trained model (criterion 5)
//! is shared with the attention-export check (criterion 11).

use chanlingo_core::model::nlg::NlgConfig;
use chanlingo_core::model::seq2seq::{SeedMode, Seq2SeqConfig};
use chanlingo_core::nn::gradcheck::check_gradients;
use chanlingo_core::nn::graph::Graph;
use chanlingo_core::nn::{AdamState, CellKind};
use chanlingo_core::train::nlg_eval_target_loss;
use chanlingo_core::train::nmt_eval_loss;
use chanlingo_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

const FC: f64 = 3.45e9;
const C_LIGHT: f64 = 299_792_458.0;

fn speed_for_doppler(fd: f64) -> f64 {
    fd * C_LIGHT / FC
}

fn clarke_tap(fd: f64, samples: usize, seed: u64) -> ChannelSeries {
    let config = FadingConfig::single_tap(FC, speed_for_doppler(fd), 1e-3, samples, seed);
    generate_tap(&config, 0).unwrap()
}

// ---------------------------------------------------------------- shared
// trained artifacts for criteria 5 and 11

struct Trained {
    _dir: tempfile::TempDir,
    model_path: PathBuf,
    vocab_path: PathBuf,
    eval_csf: PathBuf,
    model_nmse: f64,
    zoh_nmse: f64,
}

static TRAINED: OnceLock<Trained> = OnceLock::new();

fn trained() -> &'static Trained {
    TRAINED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let train_tap = clarke_tap(10.0, 200_000, 42);
        let (train_norm, _) = train_tap.normalize_to_unit_power().unwrap();
        let q = quantize(&compute_changes(&train_norm).unwrap(), 0.01).unwrap();
        let vocab = build_vocabulary(&q, 256, 2).unwrap();
        assert!(vocab.size() <= 256);

        let tokens = encode(&train_norm, &vocab).unwrap();
        let task = PredictionTask::new(30, 10).with_stride(2);
        let data = make_dataset(&tokens, &vocab, &task).unwrap();

        let mut model = Seq2SeqModel::<f32>::init(
            Seq2SeqConfig {
                vocab_size: vocab.size() + 1,
                emb: 32,
                hidden: 64,
                layers: 2,
                cell: CellKind::Gru,
                bidirectional: false,
                attention: true,
                seed_mode: SeedMode::ZeroToken,
            },
            vocab.hash(),
            7,
        );
        let mut opt = AdamState::new(1e-3, 5.0);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            ..Default::default()
        };
        train_nmt(&mut model, &data, &mut opt, &cfg).unwrap();

        let eval_tap = clarke_tap(10.0, 20_000, 43);
        let (eval_norm, _) = eval_tap.normalize_to_unit_power().unwrap();
        let eval_task = PredictionTask::new(30, 10);
        let spliced = splice(&eval_norm, &model, &vocab, &eval_task, SpliceMode::Independent).unwrap();
        let zoh = zoh_baseline(&eval_norm, &eval_task).unwrap();

        let model_path = dir.path().join("model.ckpt");
        let vocab_path = dir.path().join("vocab.vccf");
        let eval_csf = dir.path().join("eval.csf");
        save_model(&model_path, &AnyModel::Nmt(model), None).unwrap();
        vocab.save(&vocab_path).unwrap();
        eval_norm.write_csf(&eval_csf).unwrap();

        Trained {
            model_nmse: spliced.nmse().unwrap(),
            zoh_nmse: zoh.nmse().unwrap(),
            _dir: dir,
            model_path,
            vocab_path,
            eval_csf,
        }
    })
}

// ------------------------------------------------------------- criteria

#[test]
fn criterion_01_wavelength_span_examples() {
    let v3 = 3.0 / 3.6;
    let w30 = wavelength_span(0.030, v3, FC).unwrap();
    let w10 = wavelength_span(0.010, v3, FC).unwrap();
    assert!((0.28..=0.30).contains(&w30), "[criterion 1] FAIL: w30 = {w30}");
    assert!((0.09..=0.10).contains(&w10), "[criterion 1] FAIL: w10 = {w10}");
    println!("[criterion 1] PASS — 30 ms -> {w30:.4} wavelengths, 10 ms -> {w10:.4}");
}

#[test]
fn criterion_02_reference_vocabulary_semantics() {
    let rows: [(f64, f64, u64); 10] = [
        (0.02, -0.02, 538211),
        (-0.02, 0.02, 536925),
        (-0.02, -0.02, 535761),
        (0.02, 0.02, 534726),
        (-0.02, 0.01, 373125),
        (-0.01, 0.02, 371946),
        (0.01, 0.02, 371856),
        (-0.02, -0.01, 371778),
        (-0.01, -0.02, 371682),
        (0.01, -0.02, 371673),
    ];
    let mut text = String::from("# vccf v1 step=0.01 X=10 L=500\n");
    for (i, (re, im, f)) in rows.iter().enumerate() {
        text.push_str(&format!("{} {} {} {}\n", i + 1, re, im, f));
    }
    let vocab = Vocabulary::from_vccf_str(&text).expect("[criterion 2] FAIL: load");
    assert_eq!(vocab.size(), 10, "[criterion 2] FAIL: X");
    let top = &vocab.entries[0];
    assert_eq!(top.id, 1);
    assert!((top.cc - Complex64::new(0.02, -0.02)).norm() < 1e-12);
    assert_eq!(top.frequency, 538211);
    assert_eq!(vocab.id_of(Complex64::new(0.02, -0.02)), 1);
    assert!((vocab.cc_of(1).unwrap() - Complex64::new(0.02, -0.02)).norm() < 1e-12);
    for w in vocab.entries.windows(2) {
        assert!(w[0].frequency >= w[1].frequency, "[criterion 2] FAIL: ordering");
    }
    println!("[criterion 2] PASS — X = 10, ID 1 <-> +0.02-0.02i with frequency 538211");
}

#[test]
fn criterion_03_gradient_suite_tiny_nmt() {
    // X = 8, e = 4, hidden = 6, 2 layers, bidirectional + attention, M = 5, N = 3
    let mut model = Seq2SeqModel::<f64>::init(
        Seq2SeqConfig {
            vocab_size: 9,
            emb: 4,
            hidden: 6,
            layers: 2,
            cell: CellKind::Gru,
            bidirectional: true,
            attention: true,
            seed_mode: SeedMode::ZeroToken,
        },
        0x77,
        21,
    );
    let inputs: Vec<Vec<u32>> = vec![vec![1, 4, 0, 7, 3], vec![8, 2, 5, 5, 1]];
    let targets: Vec<Vec<u32>> = vec![vec![2, 6, 1], vec![0, 3, 8]];
    let in_rows: Vec<&[u32]> = inputs.iter().map(|v| v.as_slice()).collect();
    let tg_rows: Vec<&[u32]> = targets.iter().map(|v| v.as_slice()).collect();

    let mut g = Graph::new();
    let (loss, reg) = model.forward_loss(&mut g, &in_rows, &tg_rows, true).unwrap();
    let grads = g.backward(loss);
    let mut analytic = HashMap::new();
    for (name, node) in &reg {
        if let Some(t) = grads.get(*node) {
            analytic.insert(name.clone(), t.clone());
        }
    }
    let param_count: usize = analytic.values().map(|t| t.numel()).sum();

    let failures = check_gradients(
        &mut model,
        &mut |m: &Seq2SeqModel<f64>| {
            let in_rows: Vec<&[u32]> = inputs.iter().map(|v| v.as_slice()).collect();
            let tg_rows: Vec<&[u32]> = targets.iter().map(|v| v.as_slice()).collect();
            let mut g = Graph::new();
            let (loss, _) = m.forward_loss(&mut g, &in_rows, &tg_rows, true).unwrap();
            g.value(loss).item()
        },
        &analytic,
        1e-5,
        1e-3,
        1e-8,
    );
    assert!(failures.is_empty(), "[criterion 3] FAIL: {failures:?}");
    println!("[criterion 3] PASS — {param_count} parameter gradients match finite differences (rel < 1e-3)");
}

#[test]
fn criterion_04_tokenizer_round_trip() {
    // vocabulary from a realistic tap so the grid coverage is natural
    let tap = clarke_tap(10.0, 50_000, 4);
    let (norm, _) = tap.normalize_to_unit_power().unwrap();
    let q = quantize(&compute_changes(&norm).unwrap(), 0.01).unwrap();
    let vocab = build_vocabulary(&q, 2000, 1).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..1000 {
        // random walk whose steps are vocabulary entries: every quantized
        // change is in-vocabulary by construction
        let len = 10 + rng.gen::<usize>() % 90;
        let mut samples = vec![Complex64::new(
            rng.gen::<f64>() - 0.5,
            rng.gen::<f64>() - 0.5,
        )];
        let mut steps = Vec::new();
        for _ in 0..len {
            let e = &vocab.entries[rng.gen::<usize>() % vocab.size()];
            steps.push(e.cc);
            samples.push(samples.last().unwrap() + e.cc);
        }
        let series = ChannelSeries::new(samples, 1e-3, "walk").unwrap();
        let tokens = encode(&series, &vocab).unwrap();
        assert!(tokens.ids.iter().all(|&id| id != 0), "[criterion 4] FAIL: unk leaked in");
        let decoded = decode(&tokens, &vocab).unwrap();

        // independent reconstruction: anchor plus cumulative quantized changes
        let qchanges = quantize(&compute_changes(&series).unwrap(), vocab.quant_step).unwrap();
        let mut acc = *series.samples.last().unwrap();
        for (k, ch) in qchanges.changes.iter().enumerate() {
            acc += ch;
            assert!(
                (decoded.samples[k] - acc).norm() < 1e-9,
                "[criterion 4] FAIL: sample {k} off by {}",
                (decoded.samples[k] - acc).norm()
            );
        }
    }
    println!("[criterion 4] PASS — 1000 random in-vocabulary series round-trip within 1e-9");
}

#[test]
fn criterion_05_learnability_beats_half_of_zoh() {
    let t = trained();
    assert!(
        t.model_nmse <= 0.5 * t.zoh_nmse,
        "[criterion 5] FAIL: model NMSE {} > 0.5 x ZOH {}",
        t.model_nmse,
        t.zoh_nmse
    );
    println!(
        "[criterion 5] PASS — spliced NMSE {:.5} <= 0.5 x ZOH {:.5} (ratio {:.3})",
        t.model_nmse,
        t.zoh_nmse,
        t.model_nmse / t.zoh_nmse
    );
}

/// Period-12 token stream with repeated symbols, so phase matters.
/// `noise` is the probability of replacing a token with a random id, the
/// "mumbled" version of the same sentence.
fn periodic_stream(vocab_hash: u64, len: usize, phase: usize, noise: f64, noise_seed: u64) -> TokenSeries {
    let pattern = [1u32, 3, 2, 3, 5, 4, 7, 4, 8, 6, 2, 6];
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    TokenSeries {
        ids: (0..len)
            .map(|i| {
                let base = pattern[(i + phase) % pattern.len()];
                if rng.gen::<f64>() < noise {
                    1 + rng.gen::<u32>() % 8
                } else {
                    base
                }
            })
            .collect(),
        anchor: Complex64::new(0.0, 0.0),
        vocabulary_hash: vocab_hash,
        interval_s: 1e-3,
    }
}

fn token_vocab() -> Vocabulary {
    // eight grid changes with distinct frequencies
    let changes: Vec<Complex64> = (1..=8)
        .flat_map(|k| std::iter::repeat(Complex64::new(k as f64 * 0.01, 0.0)).take(20 - k))
        .collect();
    let q = vcc::ChangeSeries {
        changes,
        quant_step: Some(0.01),
        source_interval_s: 1e-3,
    };
    build_vocabulary(&q, 100, 1).unwrap()
}

fn nmt_variant(vocab: &Vocabulary, attention: bool, seed: u64) -> Seq2SeqModel<f32> {
    Seq2SeqModel::init(
        Seq2SeqConfig {
            vocab_size: vocab.size() + 1,
            emb: 12,
            hidden: 24,
            layers: 1,
            cell: CellKind::Gru,
            bidirectional: true,
            attention,
            seed_mode: SeedMode::ZeroToken,
        },
        vocab.hash(),
        seed,
    )
}

#[test]
fn criterion_06_variant_orderings() {
    let vocab = token_vocab();
    let cfg = |epochs| TrainConfig {
        epochs,
        batch_size: 16,
        shuffle_seed: 11,
        teacher_forcing: true,
        schedule: LrSchedule::Constant,
    };

    // arrangement ordering on the mumbled stream: the single stack spends
    // its budget modeling every position (noise included) and starts
    // overfitting, the encoder-decoder keeps improving on the targets
    let task = PredictionTask::new(14, 14);
    let train = make_dataset(&periodic_stream(vocab.hash(), 800, 0, 0.15, 100), &vocab, &task).unwrap();
    let held = make_dataset(&periodic_stream(vocab.hash(), 600, 5, 0.15, 101), &vocab, &task).unwrap();

    let mut nlg = NlgModel::<f32>::init(
        NlgConfig {
            vocab_size: vocab.size() + 1,
            emb: 12,
            hidden: 24,
            layers: 1,
            cell: CellKind::Gru,
        },
        vocab.hash(),
        11,
    );
    let mut opt = AdamState::new(5e-3, 5.0);
    train_nlg(&mut nlg, &train, &mut opt, &cfg(8)).unwrap();
    let nlg_loss = nlg_eval_target_loss(&nlg, &held, 32).unwrap();

    let mut nmt = nmt_variant(&vocab, false, 11);
    let mut opt = AdamState::new(5e-3, 5.0);
    train_nmt(&mut nmt, &train, &mut opt, &cfg(8)).unwrap();
    let nmt_loss = nmt_eval_loss(&nmt, &held, 32).unwrap();

    // attention ordering with a long input window, where the fixed-size
    // bridge is the bottleneck
    let task = PredictionTask::new(30, 7);
    let train = make_dataset(&periodic_stream(vocab.hash(), 800, 0, 0.15, 100), &vocab, &task).unwrap();
    let held_attn = make_dataset(&periodic_stream(vocab.hash(), 600, 5, 0.15, 101), &vocab, &task).unwrap();

    let mut plain = nmt_variant(&vocab, false, 11);
    let mut opt = AdamState::new(5e-3, 5.0);
    train_nmt(&mut plain, &train, &mut opt, &cfg(4)).unwrap();
    let plain_loss = nmt_eval_loss(&plain, &held_attn, 32).unwrap();

    let mut attn = nmt_variant(&vocab, true, 11);
    let mut opt = AdamState::new(5e-3, 5.0);
    train_nmt(&mut attn, &train, &mut opt, &cfg(4)).unwrap();
    let attn_loss = nmt_eval_loss(&attn, &held_attn, 32).unwrap();

    assert!(
        nmt_loss <= nlg_loss,
        "[criterion 6] FAIL: NMT {nmt_loss} > NLG {nlg_loss}"
    );
    assert!(
        attn_loss <= plain_loss,
        "[criterion 6] FAIL: attention {attn_loss} > plain {plain_loss}"
    );
    println!(
        "[criterion 6] PASS — held-out loss: NMT {nmt_loss:.4} <= NLG {nlg_loss:.4}; attention {attn_loss:.4} <= plain {plain_loss:.4}"
    );
}

#[test]
fn criterion_07_sliding_window_effect() {
    let vocab = token_vocab();
    // 1020 tokens: stride 1 -> 1000 windows, stride 5 -> 200 windows
    let train_tokens = periodic_stream(vocab.hash(), 1020, 0, 0.15, 100);
    let held_tokens = periodic_stream(vocab.hash(), 600, 7, 0.15, 101);
    let task1 = PredictionTask::new(14, 7);
    let task5 = PredictionTask::new(14, 7).with_stride(5);
    let d1 = make_dataset(&train_tokens, &vocab, &task1).unwrap();
    let d5 = make_dataset(&train_tokens, &vocab, &task5).unwrap();
    assert_eq!(d1.len(), 1000);
    assert_eq!(d5.len(), 200);
    let held = make_dataset(&held_tokens, &vocab, &task1).unwrap();

    // equal optimizer-step budgets: 1000/20 x 5 = 200/20 x 25 = 250 steps
    let cfg = |epochs| TrainConfig {
        epochs,
        batch_size: 20,
        shuffle_seed: 13,
        teacher_forcing: true,
        schedule: LrSchedule::Constant,
    };
    let mut m1 = nmt_variant(&vocab, false, 13);
    let mut opt = AdamState::new(5e-3, 5.0);
    let r1 = train_nmt(&mut m1, &d1, &mut opt, &cfg(5)).unwrap();
    let mut m5 = nmt_variant(&vocab, false, 13);
    let mut opt = AdamState::new(5e-3, 5.0);
    let r5 = train_nmt(&mut m5, &d5, &mut opt, &cfg(25)).unwrap();
    assert_eq!(r1.steps, r5.steps, "paired step budgets");

    let loss1 = nmt_eval_loss(&m1, &held, 32).unwrap();
    let loss5 = nmt_eval_loss(&m5, &held, 32).unwrap();
    assert!(
        loss1 <= loss5,
        "[criterion 7] FAIL: stride-1 {loss1} > stride-5 {loss5}"
    );
    println!(
        "[criterion 7] PASS — held-out loss stride-1 {loss1:.4} <= stride-5 {loss5:.4} at {} steps",
        r1.steps
    );
}

#[test]
fn criterion_08_transfer_pipeline() {
    // (a) + (b): coverage and S = 1 equivalence with an untrained model
    let vocab = token_vocab();
    let model = nmt_variant(&vocab, false, 17);
    let mut samples = vec![Complex64::new(0.0, 0.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..14 * 30 {
        let e = &vocab.entries[rng.gen::<usize>() % vocab.size()];
        samples.push(samples.last().unwrap() + e.cc);
    }
    let history = ChannelSeries::new(samples, 1e-3, "h").unwrap();
    let task = PredictionTask::new(14, 14).with_sampling(30);
    let out = transfer_predict(&model, &vocab, &history, &task).unwrap();
    assert_eq!(out.len(), 14 * 30, "[criterion 8] FAIL: coverage");

    let plain_task = PredictionTask::new(14, 14);
    let a = predict_series(&model, &vocab, &history, &plain_task).unwrap();
    let b = transfer_predict(&model, &vocab, &history, &plain_task).unwrap();
    assert_eq!(a.samples, b.samples, "[criterion 8] FAIL: S=1 equivalence");

    // (c): fine-tuned beats direct transfer on the slow-channel split
    let fast = clarke_tap(100.0, 40_000, 50);
    let (fast_norm, _) = fast.normalize_to_unit_power().unwrap();
    let q = quantize(&compute_changes(&fast_norm).unwrap(), 0.01).unwrap();
    let shared_vocab = build_vocabulary(&q, 256, 2).unwrap();
    let fast_tokens = encode(&fast_norm, &shared_vocab).unwrap();
    let fast_task = PredictionTask::new(14, 14).with_stride(4);
    let fast_data = make_dataset(&fast_tokens, &shared_vocab, &fast_task).unwrap();

    let mut model = Seq2SeqModel::<f32>::init(
        Seq2SeqConfig {
            vocab_size: shared_vocab.size() + 1,
            emb: 16,
            hidden: 32,
            layers: 1,
            cell: CellKind::Gru,
            bidirectional: false,
            attention: false,
            seed_mode: SeedMode::ZeroToken,
        },
        shared_vocab.hash(),
        18,
    );
    let mut opt = AdamState::new(1e-3, 5.0);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 32,
        ..Default::default()
    };
    train_nmt(&mut model, &fast_data, &mut opt, &cfg).unwrap();

    // slow channel decimated by S=30 matches the fast token dynamics
    let slow = clarke_tap(100.0 / 30.0, 45_000, 51);
    let (slow_norm, _) = slow.normalize_to_unit_power().unwrap();
    let decimated = slow_norm.decimate_keep_last(30).unwrap();
    let (dec_norm, _) = decimated.normalize_to_unit_power().unwrap();
    let slow_tokens = encode(&dec_norm, &shared_vocab).unwrap();
    let slow_data = make_dataset(&slow_tokens, &shared_vocab, &PredictionTask::new(14, 14)).unwrap();
    let split = slow_data.len() * 2 / 3;
    let ft_train = WindowedDataset {
        examples: slow_data.examples[..split].to_vec(),
        vocab_hash: slow_data.vocab_hash,
        m: slow_data.m,
        n: slow_data.n,
    };
    let ft_held = WindowedDataset {
        examples: slow_data.examples[split..].to_vec(),
        vocab_hash: slow_data.vocab_hash,
        m: slow_data.m,
        n: slow_data.n,
    };

    let direct_loss = nmt_eval_loss(&model, &ft_held, 32).unwrap();
    let mut tuned = AnyModel::Nmt(model.clone());
    let mut opt = AdamState::new(2e-4, 5.0);
    let ft_cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        shuffle_seed: 19,
        teacher_forcing: true,
        schedule: LrSchedule::Constant,
    };
    fine_tune(&mut tuned, &ft_train, &mut opt, &ft_cfg).unwrap();
    let AnyModel::Nmt(tuned) = tuned else { unreachable!() };
    assert_eq!(tuned.vocab_hash, model.vocab_hash, "[criterion 8] FAIL: hash changed");
    let tuned_loss = nmt_eval_loss(&tuned, &ft_held, 32).unwrap();
    assert!(
        tuned_loss <= direct_loss,
        "[criterion 8] FAIL: fine-tuned {tuned_loss} > direct {direct_loss}"
    );
    println!(
        "[criterion 8] PASS — coverage 14x30, S=1 bit-exact, fine-tuned {tuned_loss:.4} <= direct {direct_loss:.4}"
    );
}

#[test]
fn criterion_09_prediction_diversity_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let len = 4 + rng.gen::<usize>() % 8;
        let candidates: Vec<ChannelSeries> = (0..3)
            .map(|_| {
                let samples = (0..len)
                    .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect();
                ChannelSeries::new(samples, 1e-3, "c").unwrap()
            })
            .collect();
        let pd = prediction_diversity(&candidates).unwrap();
        for k in 0..len {
            let mut best = 0usize;
            for i in 1..3 {
                if candidates[i].samples[k].norm_sqr() > candidates[best].samples[k].norm_sqr() {
                    best = i;
                }
            }
            assert_eq!(pd.winners[k], best, "[criterion 9] FAIL: winner");
            assert_eq!(
                pd.combined.samples[k], candidates[best].samples[k],
                "[criterion 9] FAIL: magnitude"
            );
        }
        let single = prediction_diversity(std::slice::from_ref(&candidates[0])).unwrap();
        assert_eq!(single.combined.samples, candidates[0].samples, "[criterion 9] FAIL: idempotence");
    }
    println!("[criterion 9] PASS — 10000 random 3-candidate sets match the brute-force oracle");
}

fn run_pipeline(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_chanlingo");
    let gen_conf = dir.join("gen.conf");
    std::fs::write(
        &gen_conf,
        "carrier_freq_hz=3.45e9\nspeed_mps=0.8690216\nsample_interval_s=0.001\n\
         num_sinusoids=32\nnum_taps=1\ntap_gains_db=0\nduration_samples=30000\nrng_seed=42\n",
    )
    .unwrap();
    let csf = dir.join("ch.csf");
    let vccf = dir.join("v.vccf");
    let ckpt = dir.join("m.ckpt");
    let pred = dir.join("pred.csf");
    let report = dir.join("report.tsv");
    let attn = dir.join("attn.tsv");
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen", "--config", gen_conf.to_str().unwrap(), "--out", csf.to_str().unwrap()],
        vec![
            "build-vocab", "--in", csf.to_str().unwrap(),
            "--max-size", "128", "--min-freq", "2",
            "--out", vccf.to_str().unwrap(),
        ],
        vec![
            "train", "--mode", "nmt", "--in", csf.to_str().unwrap(),
            "--vocab", vccf.to_str().unwrap(),
            "--M", "30", "--N", "10", "--stride", "20",
            "--hidden", "32", "--emb", "16", "--layers", "1", "--attention",
            "--epochs", "1", "--seed", "5",
            "--out", ckpt.to_str().unwrap(),
        ],
        vec![
            "predict", "--model", ckpt.to_str().unwrap(),
            "--vocab", vccf.to_str().unwrap(),
            "--in", csf.to_str().unwrap(),
            "--M", "30", "--N", "10",
            "--out", pred.to_str().unwrap(),
        ],
        vec![
            "eval", "--truth", csf.to_str().unwrap(),
            "--model", ckpt.to_str().unwrap(),
            "--vocab", vccf.to_str().unwrap(),
            "--M", "30", "--N", "10",
            "--report", report.to_str().unwrap(),
        ],
        vec![
            "attention", "--model", ckpt.to_str().unwrap(),
            "--vocab", vccf.to_str().unwrap(),
            "--in", csf.to_str().unwrap(),
            "--M", "30", "--N", "10",
            "--out", attn.to_str().unwrap(),
        ],
    ];
    for args in steps {
        let out = Command::new(bin)
            .arg("--threads")
            .arg("1")
            .args(&args)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "step {:?} failed: {}",
            args[0],
            String::from_utf8_lossy(&out.stderr)
        );
    }
    [&vccf, &ckpt, &pred, &report, &attn]
        .iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_10_pipeline_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_pipeline(dir_a.path());
    let b = run_pipeline(dir_b.path());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(
            bytes_a, bytes_b,
            "[criterion 10] FAIL: {name_a} differs between runs"
        );
    }
    println!(
        "[criterion 10] PASS — vocabulary, checkpoint, prediction, report and attention files byte-identical across runs"
    );
}

#[test]
fn criterion_11_attention_export_shape_and_normalization() {
    let t = trained();
    let out = tempfile::NamedTempFile::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_chanlingo"))
        .args([
            "attention",
            "--model",
            t.model_path.to_str().unwrap(),
            "--vocab",
            t.vocab_path.to_str().unwrap(),
            "--in",
            t.eval_csf.to_str().unwrap(),
            "--M",
            "30",
            "--N",
            "10",
            "--out",
            out.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "[criterion 11] FAIL: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(out.path()).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 10, "[criterion 11] FAIL: expected N = 10 rows");
    for row in rows {
        let weights: Vec<f64> = row.split('\t').map(|w| w.parse().unwrap()).collect();
        assert_eq!(weights.len(), 30, "[criterion 11] FAIL: expected M = 30 columns");
        let sum: f64 = weights.iter().sum();
        assert!(
            (sum - 1.0).abs() <= 1e-6,
            "[criterion 11] FAIL: row sums to {sum}"
        );
        assert!(weights.iter().all(|w| *w >= 0.0));
    }
    println!("[criterion 11] PASS — attention TSV is 10 x 30 with rows summing to 1 +- 1e-6");
}
