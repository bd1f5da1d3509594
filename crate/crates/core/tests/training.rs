use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hydroda::data::{synth_generate, FeatureStats, NormStats, SplitRanges, SynthConfig, WindowSample};
use hydroda::training::{
    epoch_rng, evaluate, prepare_domain, run_experiment, shuffled_batches, summarize_runs, supervised_epoch, AdamState,
    BasinWindows, Checkpoint, CheckpointError, LstmBaseline, Mode, Phase, PreparedData, Stream, TrainConfig, TrainError,
    Trainer,
};

fn config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        hidden_size: 6,
        latent_size: 4,
        discriminator_hidden: 4,
        batch_size: 16,
        eval_batch_size: 1024,
        lookback: 10,
        stride: 9,
        epochs: 3,
        pretrain_epochs: Some(2),
        ..TrainConfig::default()
    }
}

fn data(seed: u64) -> PreparedData {
    let cfg = SynthConfig {
        n_source_basins: 3,
        n_target_basins: 2,
        seed,
        ..SynthConfig::default()
    };
    let (s, t) = synth_generate(&cfg).unwrap();
    let spec = config(Mode::Adversarial).window_spec();
    let ranges = SplitRanges::default();
    PreparedData {
        source: prepare_domain(&s, &ranges, spec).unwrap(),
        target: prepare_domain(&t, &ranges, spec).unwrap(),
    }
}

fn trainer(cfg: &TrainConfig, d: &PreparedData) -> Trainer {
    let mc = cfg.model_config(d.source.n_dynamic(), d.source.n_static());
    Trainer::new(cfg.clone(), mc).unwrap()
}

#[test]
fn every_mode_trains_and_logs_each_epoch() {
    let d = data(1);
    for mode in Mode::ALL {
        let cfg = config(mode);
        let mut tr = trainer(&cfg, &d);
        let mut seen = Vec::new();
        tr.run(&d, |_, e| {
            seen.push(e.epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, (1..=cfg.total_epochs()).collect::<Vec<_>>());
        assert!(tr.is_finished());
        assert!(tr.train_epoch(&d).is_err());
        match mode {
            Mode::Adversarial => {
                assert!(tr.log.iter().all(|e| e.phase == Phase::Adversarial && e.loss_discriminator.is_some()));
                assert!(tr.log.iter().all(|e| e.validation_nse.is_some()));
            }
            _ => {
                let phases: Vec<_> = tr.log.iter().map(|e| (e.phase, e.phase_epoch)).collect();
                assert_eq!(
                    phases,
                    vec![
                        (Phase::Pretrain, 1),
                        (Phase::Pretrain, 2),
                        (Phase::Finetune, 1),
                        (Phase::Finetune, 2),
                        (Phase::Finetune, 3)
                    ]
                );
                assert!(tr.log[..2].iter().all(|e| e.validation_nse.is_none() && e.loss_target.is_none()));
                assert!(tr.log[2..].iter().all(|e| e.validation_nse.is_some()));
                assert_eq!(tr.log[2].lr, cfg.lr_first_epoch);
            }
        }
        let best = tr.best.as_ref().unwrap();
        let max = tr.log.iter().filter_map(|e| e.validation_nse).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.validation_nse, max);
    }
}

#[test]
fn log_serializes_as_json_lines() {
    let d = data(2);
    let mut tr = trainer(&config(Mode::Adversarial), &d);
    tr.run(&d, |_, _| Ok(())).unwrap();
    let lines: Vec<String> = tr.log.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
    assert!(lines.iter().all(|l| !l.contains('\n')));
    let back: Vec<hydroda::training::TrainLogEntry> = lines.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, tr.log);
    assert!(lines[0].contains("\"phase\":\"adversarial\""));
}

#[test]
fn phase_misuse_is_rejected() {
    let d = data(3);
    let mut tr = trainer(&config(Mode::Seq2seqTl), &d);
    let err = tr.finetune_epoch(&d).unwrap_err();
    assert!(matches!(err, TrainError::Phase(_)), "{err}");
    assert!(err.to_string().contains("0 of 2"), "{err}");
    tr.pretrain_epoch(&d).unwrap();
    tr.pretrain_epoch(&d).unwrap();
    assert!(matches!(tr.pretrain_epoch(&d), Err(TrainError::Phase(_))));
    tr.finetune_epoch(&d).unwrap();

    let mut no_target = d.clone();
    no_target.target.train.clear();
    let mut tr = trainer(&config(Mode::LstmTl), &no_target);
    tr.pretrain_epoch(&no_target).unwrap();
    tr.pretrain_epoch(&no_target).unwrap();
    assert!(matches!(tr.finetune_epoch(&no_target), Err(TrainError::EmptyWindows("target"))));

    let mut adv = trainer(&config(Mode::Adversarial), &d);
    assert!(matches!(adv.pretrain_epoch(&d), Err(TrainError::Phase(_))));
    assert!(matches!(adv.train_epoch(&no_target), Err(TrainError::EmptyWindows("target"))));
}

#[test]
fn mismatched_features_are_rejected() {
    let d = data(4);
    let cfg = config(Mode::Adversarial);
    let mc = cfg.model_config(d.source.n_dynamic() + 1, d.source.n_static());
    let mut tr = Trainer::new(cfg, mc).unwrap();
    assert!(matches!(tr.train_epoch(&d), Err(TrainError::Config(_))));
    assert!(Trainer::new(TrainConfig { epochs: 0, ..config(Mode::Adversarial) }, tr.model_config.clone()).is_err());
}

#[test]
fn checkpoint_errors_are_distinguished() {
    let d = data(5);
    let cfg = config(Mode::Adversarial);
    let mut tr = trainer(&cfg, &d);
    tr.train_epoch(&d).unwrap();
    let bytes = Checkpoint::new(&tr, &d).to_bytes().unwrap();

    let truncated = &bytes[..bytes.len() - 10];
    assert!(matches!(Checkpoint::from_bytes(truncated), Err(CheckpointError::Checksum)));
    let mut flipped = bytes.clone();
    let last = flipped.len() - 2;
    flipped[last] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(CheckpointError::Checksum)));
    let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..header_end]), Err(CheckpointError::Checksum)));

    let text = String::from_utf8(bytes.clone()).unwrap();
    let newer = text.replacen(" v1 ", " v2 ", 1);
    assert!(matches!(
        Checkpoint::from_bytes(newer.as_bytes()),
        Err(CheckpointError::Version { found: 2, expected: 1 })
    ));
    assert!(matches!(Checkpoint::from_bytes(b"{\"json\": true}"), Err(CheckpointError::Format(_))));

    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    ck.verify_config(&cfg).unwrap();
    // training-only settings do not affect compatibility
    ck.verify_config(&TrainConfig { epochs: 50, lambda: 0.3, ..cfg.clone() }).unwrap();
    let wider = TrainConfig { hidden_size: 7, ..cfg.clone() };
    assert!(matches!(ck.verify_config(&wider), Err(CheckpointError::ConfigMismatch { .. })));
    let other_mode = TrainConfig { mode: Mode::LstmTl, ..cfg };
    assert!(matches!(ck.verify_config(&other_mode), Err(CheckpointError::ConfigMismatch { .. })));
    assert_eq!(ck.label_convention.source, 1.0);
    assert_eq!(ck.label_convention.target, 0.0);
    assert!(ck.parameters.iter().any(|p| p.name.starts_with("discriminator")));
}

#[test]
fn checkpoint_save_is_atomic_and_loadable() {
    let d = data(6);
    let mut tr = trainer(&config(Mode::LstmTl), &d);
    tr.train_epoch(&d).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("last.ckpt");
    let ck = Checkpoint::new(&tr, &d);
    ck.save(&path).unwrap();
    ck.save(&path).unwrap();
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("last.ckpt")]);
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    assert!(matches!(Checkpoint::load(&dir.path().join("missing")), Err(CheckpointError::Io { .. })));
}

#[test]
fn experiment_statistics() {
    let d = data(7);
    let cfg = TrainConfig { epochs: 2, ..config(Mode::Adversarial) };
    let one = run_experiment(&cfg, &d, 1).unwrap();
    assert_eq!(one.nse.std, Some(0.0));
    assert_eq!(one.nse.count, 1);

    let three = run_experiment(&cfg, &d, 3).unwrap();
    assert_eq!(three.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    let values: Vec<f64> = three.runs.iter().map(|r| r.test.median.nse.unwrap()).collect();
    let mean = values.iter().sum::<f64>() / 3.0;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((three.nse.mean.unwrap() - mean).abs() < 1e-15);
    assert!((three.nse.std.unwrap() - std).abs() < 1e-15);
    assert_eq!(three.runs[0], one.runs[0]);

    let same = summarize_runs(Mode::Adversarial, vec![one.runs[0].clone(), one.runs[0].clone()]);
    assert_eq!(same.nse.std, Some(0.0));
    assert!(run_experiment(&cfg, &d, 0).is_err());
}

#[test]
fn adversarial_losses_fall_in_early_epochs() {
    let d = data(8);
    let mut falling = 0;
    for seed in 0..5 {
        let cfg = TrainConfig {
            seed,
            epochs: 5,
            stride: 3,
            ..config(Mode::Adversarial)
        };
        let mut tr = trainer(&cfg, &d);
        tr.run(&d, |_, _| Ok(())).unwrap();
        let total = |i: usize| tr.log[i].loss_source.unwrap() + tr.log[i].loss_target.unwrap();
        if total(4) < total(0) {
            falling += 1;
        }
    }
    assert!(falling >= 4, "{falling}/5");
}

/// `y_t = 0.6·x₁(t−1) − 0.3·x₂(t−2)`: a linear system the baseline can fit.
fn linear_windows(count: usize, lookback: usize, seed: u64) -> Vec<WindowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    (0..count)
        .map(|i| {
            let history: Vec<f64> = (0..lookback * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = 0.6 * history[2 * (lookback - 1)] - 0.3 * history[2 * (lookback - 2) + 1];
            WindowSample {
                basin_id: "lin".into(),
                target_start: start + chrono::Days::new(i as u64),
                history,
                static_attrs: vec![0.0],
                last_observed_y: 0.0,
                targets: vec![y],
                target_mask: vec![true],
                obs_variance: 0.15,
            }
        })
        .collect()
}

#[test]
fn lstm_baseline_fits_a_linear_system() {
    let lookback = 5;
    let windows = linear_windows(256, lookback, 11);
    let cfg = TrainConfig {
        mode: Mode::LstmTl,
        hidden_size: 12,
        lookback,
        batch_size: 32,
        dropout: 0.0,
        lr_first_epoch: 0.01,
        lr_rest: 0.01,
        ..TrainConfig::default()
    };
    let mut model = LstmBaseline::new(&mut ChaCha8Rng::seed_from_u64(0), 3, 12, 1, 0.0).unwrap();
    let mut opt = AdamState::new(&model);
    let identity = FeatureStats {
        mean: vec![0.0],
        std: vec![1.0],
        constant: vec![false],
    };
    let stats = NormStats {
        dynamic: FeatureStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
            constant: vec![false; 2],
        },
        statics: identity.clone(),
        streamflow: identity,
    };
    let basins = vec![BasinWindows {
        basin_id: "lin".into(),
        windows: windows.clone(),
    }];
    let mut best = f64::NEG_INFINITY;
    for epoch in 1..=200 {
        let b = shuffled_batches(windows.len(), cfg.batch_size, &mut epoch_rng(0, epoch, Stream::TargetShuffle));
        let mut rng = epoch_rng(0, epoch, Stream::TargetDropout);
        supervised_epoch(&mut model, &mut opt, &windows, &b, 2, &cfg, cfg.lr(epoch), &mut rng, epoch).unwrap();
        if epoch % 10 == 0 {
            best = evaluate(&model, &basins, &stats, 2, 512, None).unwrap().report.median.nse.unwrap();
            if best > 0.9 {
                break;
            }
        }
    }
    assert!(best > 0.9, "{best}");
}
