use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hesunet::data::io::{read_mask, write_mask};
use hesunet::data::Plane;
use hesunet::metrics::EvalReport;

const DESK: [&str; 6] = ["--set", "c0=8", "--set", "height=64", "--set", "width=64"];

fn hesunet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hesunet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hesunet(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    hesunet(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, patients: &str) {
    ok(&[
        "--seed",
        "1",
        "synth",
        "--out",
        s(dir),
        "--patients",
        patients,
        "--slices-per-patient",
        "2",
    ]);
}

#[test]
fn synth_train_infer_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run, pred) = (
        tmp.path().join("data"),
        tmp.path().join("run"),
        tmp.path().join("pred"),
    );
    synth(&data, "10");
    let m = manifest(&data.join("run-synth.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 1);
    assert!(m["version"].as_str().is_some_and(|v| !v.is_empty()));
    assert_eq!(m["artifacts"].as_array().unwrap().len(), 21);

    let mut args = vec![
        "--seed",
        "2",
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--set",
        "epochs=2",
    ];
    args.extend(DESK);
    ok(&args);
    for f in [
        "last.ckpt",
        "best.ckpt",
        "metrics.tsv",
        "config.txt",
        "run-train.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let m = manifest(&run.join("run-train.json"));
    assert!(m["config"].as_str().unwrap().contains("c0=8"));
    assert!(m["finished"].is_string());

    let images = data.join("test/images");
    ok(&[
        "infer",
        "--ckpt",
        s(&run.join("best.ckpt")),
        "--images",
        s(&images),
        "--out",
        s(&pred),
        "--overlay",
    ]);
    let n = fs::read_dir(&images).unwrap().count();
    let masks: Vec<_> = fs::read_dir(&pred)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    assert_eq!(masks.len(), n);
    assert_eq!(fs::read_dir(pred.join("overlays")).unwrap().count(), n);
    assert!(masks.iter().all(|p| read_mask(p).unwrap().is_binary()));

    let report = tmp.path().join("eval/report.txt");
    let out = ok(&[
        "eval",
        "--pred",
        s(&pred),
        "--gt",
        s(&data.join("test/masks")),
        "--report",
        s(&report),
    ]);
    let r = EvalReport::parse_record(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!((0.0..=1.0).contains(&r.dsc));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dsc"));
    let table = fs::read_to_string(tmp.path().join("eval/report_per_sample.tsv")).unwrap();
    assert_eq!(table.lines().count(), n + 1);
    assert!(tmp.path().join("eval/run-eval.json").exists());
}

#[test]
fn resume_continues_to_the_epoch_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run) = (tmp.path().join("data"), tmp.path().join("run"));
    synth(&data, "10");
    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--set",
        "epochs=1",
    ];
    args.extend(DESK);
    ok(&args);
    let ckpt = run.join("last.ckpt");
    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--resume",
        s(&ckpt),
        "--set",
        "epochs=2",
    ];
    args.extend(DESK);
    ok(&args);
    let log = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let epochs: Vec<&str> = log
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(epochs, ["1", "2"]);
}

fn write_masks(dir: &Path, masks: &[(&str, Vec<f32>)]) {
    fs::create_dir_all(dir).unwrap();
    for (name, v) in masks {
        write_mask(
            &dir.join(format!("{name}.png")),
            &Plane::new(2, 4, v.clone()).unwrap(),
        )
        .unwrap();
    }
}

fn eval_report(pred: &[(&str, Vec<f32>)], gt: &[(&str, Vec<f32>)]) -> EvalReport {
    let tmp = tempfile::tempdir().unwrap();
    write_masks(&tmp.path().join("pred"), pred);
    write_masks(&tmp.path().join("gt"), gt);
    let report = tmp.path().join("r.txt");
    ok(&[
        "eval",
        "--pred",
        s(&tmp.path().join("pred")),
        "--gt",
        s(&tmp.path().join("gt")),
        "--report",
        s(&report),
    ]);
    EvalReport::parse_record(&fs::read_to_string(report).unwrap()).unwrap()
}

#[test]
fn eval_identical_masks_scores_one() {
    let a = vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let b = vec![0.0; 8];
    let r = eval_report(&[("a", a.clone()), ("b", b.clone())], &[("a", a), ("b", b)]);
    assert_eq!((r.dsc, r.precision, r.recall), (1.0, 1.0, 1.0));
}

#[test]
fn eval_disjoint_masks_scores_zero() {
    let p = vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let g = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let r = eval_report(&[("a", p)], &[("a", g)]);
    assert_eq!(r.dsc, 0.0);
    assert_eq!((r.tp, r.fp, r.fn_), (0, 2, 2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "10");
    let out = tmp.path().join("run");

    assert_eq!(
        code(&[
            "train",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--set",
            "nonsense=1"
        ]),
        2
    );
    assert_eq!(
        code(&["train", "--data", s(&data), "--out", s(&out), "--set", "lr"]),
        2
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--set",
            "lr=-1"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--set",
            "height=128",
            "--set",
            "width=128"
        ]),
        2
    );
    assert_eq!(code(&["synth", "--out", s(&out), "--size", "50"]), 2);
    assert_eq!(code(&["--threads", "0", "synth", "--out", s(&out)]), 2);
    assert!(!out.exists(), "rejected runs must not create outputs");

    let missing = tmp.path().join("missing");
    assert_eq!(code(&["train", "--data", s(&missing), "--out", s(&out)]), 4);
    assert_eq!(
        code(&[
            "infer",
            "--ckpt",
            s(&missing),
            "--images",
            s(&data),
            "--out",
            s(&out)
        ]),
        4
    );
    assert_eq!(
        code(&[
            "eval",
            "--pred",
            s(&missing),
            "--gt",
            s(&data),
            "--report",
            s(&out.join("r"))
        ]),
        4
    );

    let mut args = vec![
        "train",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--set",
        "lr=1e30",
        "--set",
        "max_steps=3",
    ];
    args.extend(DESK);
    assert_eq!(code(&args), 3);
}
