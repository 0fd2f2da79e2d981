use glyphforge_core::data::{generate_synthetic_dataset, GlyphDataset};
use glyphforge_core::model::LatentVector;
use glyphforge_core::train::{
    LossMode, ModelCheckpoint, Recorder, TrainConfig, TrainObserver, Trainer, UpdateKind, CHECKPOINT_VERSION,
};
use glyphforge_core::{Checkpoint32, Checkpoint64, Error, Trainer32, Trainer64};

fn tiny_config(mode: LossMode, classes: usize) -> TrainConfig {
    TrainConfig {
        loss_mode: mode,
        batch_size: 4,
        image_size: 16,
        num_classes: classes,
        width: 2,
        epochs: Some(3),
        generator_iterations: None,
        seed: 11,
        ..Default::default()
    }
}

fn tiny_dataset(classes: usize) -> GlyphDataset {
    generate_synthetic_dataset(3, classes, 16, 5).unwrap()
}

/// Checks which network changed across every update.
#[derive(Default)]
struct Auditor {
    before: (u64, u64),
    critic: usize,
    generator: usize,
    violations: Vec<String>,
}

impl<T: glyphforge_core::Scalar> TrainObserver<T> for Auditor {
    fn before_update(&mut self, _: UpdateKind, _: usize, t: &Trainer<T>) {
        self.before = (t.generator.net.params.fingerprint(), t.discriminator.net.params.fingerprint());
    }

    fn after_update(&mut self, kind: UpdateKind, class: usize, t: &Trainer<T>) {
        let after = (t.generator.net.params.fingerprint(), t.discriminator.net.params.fingerprint());
        let (theta_same, w_same) = (after.0 == self.before.0, after.1 == self.before.1);
        match kind {
            UpdateKind::Critic => {
                self.critic += 1;
                if !theta_same || w_same {
                    self.violations.push(format!("critic step for class {class}"));
                }
            }
            UpdateKind::Generator => {
                self.generator += 1;
                if theta_same || !w_same {
                    self.violations.push(format!("generator step for class {class}"));
                }
            }
        }
    }
}

#[test]
fn one_epoch_update_accounting() {
    for mode in [LossMode::WganGp, LossMode::WganClip, LossMode::Dcgan] {
        let mut t = Trainer32::new(tiny_config(mode, 26)).unwrap();
        let mut audit = Auditor::default();
        t.run_epoch(&tiny_dataset(26), &mut audit).unwrap();
        assert_eq!((audit.generator, audit.critic), (26, 130), "{mode:?}");
        assert_eq!((t.generator_updates, t.critic_updates), (26, 130));
        assert!(audit.violations.is_empty(), "{mode:?}: {:?}", audit.violations);
        assert_eq!(t.epoch, 1);
    }
}

#[test]
fn telemetry_rows_follow_class_order() {
    let mut t = Trainer32::new(tiny_config(LossMode::WganGp, 4)).unwrap();
    let mut rec = Recorder::default();
    t.fit(&tiny_dataset(4), &mut rec).unwrap();
    assert_eq!(rec.records.len(), 12);
    for (i, r) in rec.records.iter().enumerate() {
        assert_eq!(r.class, i % 4);
        assert_eq!(r.epoch, i / 4 + 1);
        assert_eq!(r.step, i as u64 + 1);
        assert!(r.gradient_penalty > 0.0 && r.critic_loss.is_finite());
    }
}

#[test]
fn clipping_bounds_critic_weights() {
    let mut t = Trainer32::new(tiny_config(LossMode::WganClip, 4)).unwrap();
    let mut rec = Recorder::default();
    t.fit(&tiny_dataset(4), &mut rec).unwrap();
    assert!(t.discriminator.net.params.max_abs() <= 0.01);
    assert!(rec.records.iter().all(|r| r.gradient_penalty == 0.0));
}

#[test]
fn dataset_mismatch_is_rejected() {
    let mut t = Trainer32::new(tiny_config(LossMode::WganGp, 5)).unwrap();
    assert!(matches!(t.run_epoch(&tiny_dataset(4), &mut ()), Err(Error::InvalidArgument(_))));
}

fn train(config: TrainConfig, epochs: usize) -> (Trainer64, Vec<glyphforge_core::train::TelemetryRecord>) {
    let ds = tiny_dataset(config.num_classes);
    let mut t = Trainer64::new(config).unwrap();
    let mut rec = Recorder::default();
    while t.epoch < epochs {
        t.run_epoch(&ds, &mut rec).unwrap();
    }
    (t, rec.records)
}

#[test]
fn identical_seeds_reproduce_runs() {
    let (a, ra) = train(tiny_config(LossMode::WganGp, 3), 2);
    let (b, rb) = train(tiny_config(LossMode::WganGp, 3), 2);
    assert!(ra.iter().zip(&rb).all(|(x, y)| x.deterministic_eq(y)));
    assert_eq!(
        ModelCheckpoint::from_trainer(&a).to_bytes(),
        ModelCheckpoint::from_trainer(&b).to_bytes()
    );
    let mut other = tiny_config(LossMode::WganGp, 3);
    other.seed = 12;
    let (c, _) = train(other, 2);
    assert_ne!(a.generator.net.params.fingerprint(), c.generator.net.params.fingerprint());
}

#[test]
fn resume_is_bitwise_identical() {
    let config = tiny_config(LossMode::WganGp, 3);
    let ds = tiny_dataset(3);
    let (full, full_rec) = train(config.clone(), 3);

    let (half, mut rec) = train(config, 1);
    let bytes = ModelCheckpoint::from_trainer(&half).to_bytes();
    drop(half);
    let mut resumed = Checkpoint64::from_bytes(&bytes).unwrap().into_trainer().unwrap();
    let mut rest = Recorder::default();
    resumed.fit(&ds, &mut rest).unwrap();
    rec.extend(rest.records);

    assert_eq!(rec.len(), full_rec.len());
    assert!(rec.iter().zip(&full_rec).all(|(x, y)| x.deterministic_eq(y)));
    assert_eq!(
        ModelCheckpoint::from_trainer(&resumed).to_bytes(),
        ModelCheckpoint::from_trainer(&full).to_bytes()
    );
}

#[test]
fn checkpoint_roundtrip_and_file_io() {
    let (t, _) = train(tiny_config(LossMode::Dcgan, 3), 1);
    let ck = ModelCheckpoint::from_trainer(&t);
    let bytes = ck.to_bytes();
    assert_eq!(Checkpoint64::from_bytes(&bytes).unwrap().to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ggan");
    ck.save(&path).unwrap();
    let loaded = Checkpoint64::load(&path).unwrap();
    assert_eq!(loaded.epoch, 1);
    assert_eq!(loaded.config, t.config);

    let style = vec![0.25; 100];
    let z = LatentVector::new(&style, 2, 3).unwrap();
    let a = t.generator.generate(std::slice::from_ref(&z)).unwrap();
    let b = loaded.generator().unwrap().generate(&[z]).unwrap();
    assert_eq!(a, b);
    assert!(matches!(Checkpoint64::load(&dir.path().join("missing.ggan")), Err(Error::Io { .. })));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let (t, _) = train(tiny_config(LossMode::WganGp, 3), 1);
    let bytes = ModelCheckpoint::from_trainer(&t).to_bytes();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint64::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));

    let mut bad = bytes.clone();
    bad[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        Checkpoint64::from_bytes(&bad),
        Err(Error::CheckpointVersion { found, expected }) if found == CHECKPOINT_VERSION + 1 && expected == CHECKPOINT_VERSION
    ));

    for cut in [3, 9, 100, bytes.len() - 1] {
        assert!(Checkpoint64::from_bytes(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(Checkpoint64::from_bytes(&long).is_err());

    assert!(matches!(Checkpoint32::from_bytes(&bytes), Err(Error::Checkpoint(_))));
}
