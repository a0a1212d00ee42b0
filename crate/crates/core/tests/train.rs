use std::fs;

use hesunet::data::phantom::{synthesize, SynthConfig};
use hesunet::data::{SliceSample, Split};
use hesunet::provenance;
use hesunet::train::trainer::{BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_HEADER, METRICS_LOG};
use hesunet::train::{evaluate_samples, load_model, Checkpoint, RunConfig, Trainer};
use hesunet::ModelConfig;

fn dataset(patients: usize, slices: usize) -> (Vec<SliceSample>, Vec<SliceSample>) {
    let all = synthesize(&SynthConfig {
        patients,
        slices_per_patient: slices,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let pick = |s: Split| {
        all.iter()
            .filter(|x| x.split == s)
            .cloned()
            .collect::<Vec<_>>()
    };
    (pick(Split::Train), pick(Split::Val))
}

fn desk(max_steps: Option<usize>) -> RunConfig {
    let mut cfg = RunConfig {
        model: ModelConfig::desk(),
        ..Default::default()
    };
    cfg.train.max_steps = max_steps;
    cfg.train.seed = 3;
    cfg
}

#[test]
fn f64_training_is_bitwise_reproducible() {
    let (train, val) = dataset(10, 5);
    let run = || {
        let mut t = Trainer::<f64>::new(desk(Some(10))).unwrap();
        t.fit(&train, &val).unwrap();
        t.step_losses
    };
    let a = run();
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|v| v.is_finite()));
    assert_eq!(a, run());
}

#[test]
fn resumed_run_continues_with_identical_loss() {
    let (train, val) = dataset(10, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");

    let mut a = Trainer::<f64>::new(desk(Some(4))).unwrap();
    a.fit(&train, &val).unwrap();
    assert_eq!(a.batch_cursor, 4);
    a.save_checkpoint(&path).unwrap();

    a.config.train.max_steps = Some(6);
    a.fit(&train, &val).unwrap();

    let mut b = Trainer::<f64>::resume(desk(Some(6)), &path).unwrap();
    assert_eq!(b.global_step(), 4);
    b.fit(&train, &val).unwrap();
    assert_eq!(&a.step_losses[4..], &b.step_losses[..]);
    assert_eq!(a.store.entries().len(), b.store.entries().len());
    for (x, y) in a.store.entries().iter().zip(b.store.entries()) {
        assert_eq!(x.value, y.value, "{}", x.name);
    }
}

#[test]
fn resume_rejects_other_architecture() {
    let (train, val) = dataset(10, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let mut t = Trainer::<f32>::new(desk(Some(1))).unwrap();
    t.fit(&train, &val).unwrap();
    t.save_checkpoint(&path).unwrap();
    let mut other = desk(None);
    other.model.use_mub = false;
    assert!(Trainer::<f32>::resume(other, &path).is_err());
}

#[test]
fn run_directory_artifacts() {
    let (train, val) = dataset(10, 1);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk(None);
    cfg.train.epochs = 2;
    cfg.train.checkpoint_dir = Some(dir.path().to_path_buf());
    let mut t = Trainer::<f32>::new(cfg).unwrap();
    let records = t.fit(&train, &val).unwrap();
    assert_eq!(records.len(), 2);

    let log = fs::read_to_string(dir.path().join(METRICS_LOG)).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 3);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], (i + 1).to_string());
        assert!(fields[1..].iter().all(|f| f.parse::<f64>().is_ok()));
    }

    let last = Checkpoint::load(&dir.path().join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(last.meta_value::<usize>("epoch").unwrap(), 2);
    let (_, model, store) = load_model::<f32>(&dir.path().join(BEST_CHECKPOINT)).unwrap();
    let reloaded = evaluate_samples(&model, &store, &val, 4, 0.5).unwrap();
    let logged = t.evaluate_best(&val).unwrap();
    assert_eq!(reloaded.aggregate.micro(), logged.aggregate.micro());
    assert!((reloaded.loss - t.best_val_loss).abs() < 1e-6);
}

#[test]
fn recipe_defaults_match_provenance_table() {
    let lines = provenance::audit().unwrap();
    assert_eq!(lines.len(), provenance::table().unwrap().len());
    for l in &lines {
        assert!(
            l.ok,
            "{}: expected {} got {:?}",
            l.key, l.expected, l.actual
        );
    }
    let keys: Vec<&str> = lines.iter().map(|l| l.key.as_str()).collect();
    for k in [
        "lr",
        "batch_size",
        "epochs",
        "plateau_patience",
        "plateau_factor",
        "early_stop_patience",
        "channel_ladder",
        "lambda",
        "window_width",
        "window_level",
    ] {
        assert!(keys.contains(&k), "{k}");
    }
}
