use std::f64::consts::LN_2;

use matinfo::error::Error;
use matinfo::measures::MeasureKind;
use matinfo::sandbox::*;
use matinfo::spectral::KernelKind;

fn small(loss: LossFamily) -> SandboxConfig {
    SandboxConfig {
        loss,
        steps: 30,
        batch_size: 64,
        record_every: 10,
        ..SandboxConfig::default()
    }
}

const ALL: [LossFamily; 6] = [
    LossFamily::BarlowTwins,
    LossFamily::SpectralContrastive,
    LossFamily::InfoNce,
    LossFamily::Mae,
    LossFamily::Umae,
    LossFamily::Mmae,
];

#[test]
fn zero_steps_records_only_the_initial_state() {
    for loss in ALL {
        let traj = train(&SandboxConfig {
            steps: 0,
            ..small(loss)
        })
        .unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.records[0].step, 0);
        assert_eq!(traj.snapshots.len(), 1);
    }
}

#[test]
fn record_schedule_includes_final_step() {
    let traj = train(&SandboxConfig {
        steps: 25,
        ..small(LossFamily::Mmae)
    })
    .unwrap();
    let steps: Vec<usize> = traj.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 10, 20, 25]);
}

#[test]
fn same_seed_gives_identical_trajectories() {
    for loss in ALL {
        let cfg = small(loss);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.to_jsonl(), b.to_jsonl());

        let c = train(&SandboxConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.records, c.records);
    }
}

#[test]
fn measures_stay_in_bounds_at_every_record() {
    for loss in ALL {
        let cfg = small(loss);
        let d = cfg.encoder.out_dim as f64;
        let traj = train(&cfg).unwrap();
        for r in &traj.records {
            let erank = r.measure(MeasureKind::EffectiveRank).unwrap();
            assert!((1.0 - 1e-8..=d + 1e-8).contains(&erank), "{loss:?} erank {erank}");
            assert!(r.measure(MeasureKind::Tcr).unwrap().is_finite());
            if loss.is_siamese() {
                let mi = r.measure(MeasureKind::MutualInfo).unwrap();
                let je = r.measure(MeasureKind::JointEntropy).unwrap();
                let js = r.measure(MeasureKind::MatrixJs).unwrap();
                let ejs = r.measure(MeasureKind::EigenJs).unwrap();
                assert!(mi <= d.ln() + 1e-8 && je <= d.ln() + 1e-8);
                assert!((-1e-8..=LN_2 + 1e-8).contains(&js));
                assert!(ejs <= js + 1e-12);
            }
            assert!((r.loss_per_sample - r.loss.total / cfg.batch_size as f64).abs() < 1e-15);
        }
    }
}

#[test]
fn gram_kernel_runs_use_batch_sized_kernels() {
    let traj = train(&SandboxConfig {
        kernel: KernelKind::Gram,
        ..small(LossFamily::BarlowTwins)
    })
    .unwrap();
    let b = 64f64;
    let mi = traj.last().measure(MeasureKind::MutualInfo).unwrap();
    assert!(mi <= b.ln() + 1e-8);
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let cfg = SandboxConfig {
        learning_rate: 1e12,
        steps: 200,
        record_every: 1,
        ..small(LossFamily::Mae)
    };
    match train(&cfg) {
        Err(Error::DivergedLoss { step, partial }) => {
            assert!(step > 0 && step <= 200);
            assert!(partial.iter().all(|r| r.step < step && r.loss.total.is_finite()));
        }
        other => panic!("expected divergence, got {:?}", other.map(|t| t.records.len())),
    }
}

#[test]
fn small_gradient_step_decreases_the_objective() {
    // ten random batches and initializations per family, as a backtracking-style probe
    for trial in 0..10 {
        let mut rng = rng_stream(5, trial);
        let cfg = small(LossFamily::BarlowTwins);
        let ds = SyntheticDataset::generate(&cfg.dataset, 5);
        let x = ds.train.columns(0, 32).into_owned();

        for loss in [LossFamily::BarlowTwins, LossFamily::SpectralContrastive, LossFamily::InfoNce] {
            let cfg = SandboxConfig { loss, ..cfg.clone() };
            let enc = Encoder::new(&cfg.encoder, ds.input_dim(), &mut rng);
            let aug = AugmentationPair::new(cfg.augmentation, cfg.dataset.patches);
            let (x1, x2) = aug.draw(&x, &mut rng);
            let step = siamese_objective(&enc, &x1, &x2, &cfg).unwrap();
            let mut moved = enc.clone();
            moved.params.add_scaled(&step.grad, -1e-4 / step.grad.norm().max(1.0));
            let after = siamese_objective(&moved, &x1, &x2, &cfg).unwrap().loss.total;
            assert!(after < step.loss.total, "{loss:?}: {after} >= {}", step.loss.total);
        }

        for loss in [LossFamily::Mae, LossFamily::Umae, LossFamily::Mmae] {
            let enc = Encoder::new(&cfg.encoder, ds.input_dim(), &mut rng);
            let dec = Decoder::new(cfg.encoder.out_dim, ds.input_dim(), &mut rng);
            let samples = mask_batch(&x, cfg.dataset.patches, 0.75, &mut rng).unwrap();
            let objective = |e: &Encoder, d: &Decoder| {
                masked_objective(e, d, &samples, loss, 0.5, 1.0, cfg.reduction).unwrap()
            };
            let step = objective(&enc, &dec);
            let scale = -1e-4 / (step.encoder_grad.norm() + step.decoder_grad.norm()).max(1.0);
            let (mut e2, mut d2) = (enc.clone(), dec.clone());
            e2.params.add_scaled(&step.encoder_grad, scale);
            d2.params.add_scaled(&step.decoder_grad, scale);
            let after = objective(&e2, &d2).loss.total;
            assert!(after < step.loss.total, "{loss:?}: {after} >= {}", step.loss.total);
        }
    }
}

#[test]
fn trainers_reject_the_other_family() {
    assert!(matches!(
        train_masked(&small(LossFamily::BarlowTwins)),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        train_siamese(&small(LossFamily::Mae)),
        Err(Error::Config { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = small(LossFamily::Mmae);
    let bad = [
        SandboxConfig { batch_size: 1, ..base.clone() },
        SandboxConfig { record_every: 0, ..base.clone() },
        SandboxConfig { mask_ratio: 1.0, ..base.clone() },
        SandboxConfig { mu: 0.0, ..base.clone() },
        SandboxConfig { learning_rate: -1.0, ..base.clone() },
        SandboxConfig { lambda: Some(-0.1), ..base.clone() },
        SandboxConfig { steps: 20_001, ..base.clone() },
    ];
    for cfg in bad {
        assert!(matches!(train(&cfg), Err(Error::Config { .. })));
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = SandboxConfig {
        loss: LossFamily::Umae,
        lambda: Some(0.25),
        mu: 0.75,
        ..SandboxConfig::default()
    };
    let back = SandboxConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    let partial = SandboxConfig::from_toml_str("loss = \"mmae\"\nsteps = 10\n").unwrap();
    assert_eq!(partial.loss, LossFamily::Mmae);
    assert_eq!(partial.batch_size, SandboxConfig::default().batch_size);
    assert!(SandboxConfig::from_toml_str("steps = \"many\"").is_err());
}

#[test]
fn sweep_rows_follow_input_order() {
    let cfg = SandboxConfig {
        steps: 5,
        ..small(LossFamily::Mmae)
    };
    let rows = mu_sweep(&cfg, &[3.0, 0.1, 1.0]).unwrap();
    let mus: Vec<f64> = rows.iter().map(|r| r.mu).collect();
    assert_eq!(mus, vec![3.0, 0.1, 1.0]);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.probe_accuracy)));
    assert!(matches!(mu_sweep(&cfg, &[1.0, -1.0]), Err(Error::BadMu(_))));
}

#[test]
fn mmae_with_zero_lambda_is_plain_mae() {
    let mae = train(&small(LossFamily::Mae)).unwrap();
    let mmae = train(&SandboxConfig {
        lambda: Some(0.0),
        ..small(LossFamily::Mmae)
    })
    .unwrap();
    let recon = |t: &Trajectory| -> Vec<u64> {
        t.records.iter().map(|r| r.loss.term("reconstruction").unwrap().to_bits()).collect()
    };
    assert_eq!(recon(&mae), recon(&mmae));
    assert_eq!(mae.snapshots, mmae.snapshots);
}
