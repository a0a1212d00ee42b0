//! Acceptance suite: one PASS/FAIL line per criterion on stderr, then a
//! single assertion over all of them.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hesunet::blocks::Mdb;
use hesunet::data::io::{read_mask, write_image};
use hesunet::data::phantom::{generate_phantom, synthesize, PhantomConfig, SynthConfig};
use hesunet::data::{LesionKind, SliceSample, Source, Split};
use hesunet::gradcheck::cases::{block_cases, network_case, operator_cases, tiny_config};
use hesunet::gradcheck::sample_values;
use hesunet::metrics::EvalReport;
use hesunet::provenance;
use hesunet::train::ablation::{combinations, variant_config};
use hesunet::train::trainer::BEST_CHECKPOINT;
use hesunet::train::{RunConfig, Trainer};
use hesunet::{HesUnet, ModelConfig, Stage, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn emit(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn run(n: usize, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let took = t0.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(d), Some(l)) if took > l => Err(format!("{d}; exceeded {}s budget", l.as_secs())),
        (o, _) => o,
    };
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    emit(&format!(
        "criterion {n}: {tag} {detail} [{:.1}s]",
        took.as_secs_f64()
    ));
    outcome.is_ok()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn shape_contract() -> Check {
    let full = ModelConfig::default();
    let net = HesUnet::new(full.clone()).map_err(|e| e.to_string())?;
    let store = net.init_params::<f32>().map_err(|e| e.to_string())?;
    let x = Tensor::<f32>::zeros(&[1, 1, 512, 512]).unwrap();
    let out = net
        .forward(&store, &x, false, false, true)
        .map_err(|e| e.to_string())?;
    let st = out.stages.unwrap();
    let shape = |s: Stage| {
        st.get(s)
            .map(|t| t.shape()[1..].to_vec())
            .unwrap_or_default()
    };
    let enc = [
        [32, 256, 256],
        [64, 128, 128],
        [128, 64, 64],
        [256, 32, 32],
        [512, 16, 16],
    ];
    let glob = [
        [64, 128, 128],
        [128, 64, 64],
        [256, 32, 32],
        [512, 16, 16],
        [1024, 8, 8],
    ];
    for i in 0..5u8 {
        ensure(shape(Stage::E(i + 1)) == enc[i as usize], || {
            format!("E{} is {:?}", i + 1, shape(Stage::E(i + 1)))
        })?;
        ensure(shape(Stage::Q(i + 1)) == enc[i as usize], || {
            format!("Q{} is {:?}", i + 1, shape(Stage::Q(i + 1)))
        })?;
        ensure(shape(Stage::G(i + 1)) == glob[i as usize], || {
            format!("G{} is {:?}", i + 1, shape(Stage::G(i + 1)))
        })?;
    }
    ensure(shape(Stage::F) == [1024, 16, 16], || {
        format!("F is {:?}", shape(Stage::F))
    })?;
    ensure(shape(Stage::D(6)) == [512, 16, 16], || {
        format!("D6 is {:?}", shape(Stage::D(6)))
    })?;
    for i in 0..=5u8 {
        let side = 512 >> i;
        ensure(shape(Stage::P(i)) == [1, side, side], || {
            format!("P{i} is {:?}", shape(Stage::P(i)))
        })?;
    }

    let desk = ModelConfig::desk();
    let net = HesUnet::new(desk.clone()).map_err(|e| e.to_string())?;
    let store = net.init_params::<f32>().map_err(|e| e.to_string())?;
    let x = Tensor::<f32>::zeros(&[1, 1, 64, 64]).unwrap();
    let st = net
        .forward(&store, &x, false, false, true)
        .map_err(|e| e.to_string())?
        .stages
        .unwrap();
    let mut count = 0;
    for (stage, t) in &st.map {
        ensure(t.shape()[1..] == stage.expected_shape(&desk), || {
            format!("desk {stage} is {:?}", t.shape())
        })?;
        count += 1;
    }
    Ok(format!(
        "full-scale stages match; {count} desk stages follow the same formulas"
    ))
}

fn gradient_suite() -> Check {
    let mut cases = operator_cases();
    let n_ops = cases.len();
    cases.extend(block_cases().map_err(|e| e.to_string())?);
    let n_blocks = cases.len() - n_ops;
    cases.push(network_case(&tiny_config()).map_err(|e| e.to_string())?);
    let mut worst = 0f64;
    for c in &cases {
        let o = c.run().map_err(|e| format!("{}: {e}", c.name))?;
        ensure(o.passed, || {
            format!("{} rel err {:.2e}", o.name, o.max_rel_err)
        })?;
        worst = worst.max(o.max_rel_err);
    }
    Ok(format!("{n_ops} operators, {n_blocks} blocks and the end-to-end network pass; max rel err {worst:.2e}"))
}

fn invariants() -> Check {
    let mut worst_rt = 0f64;
    let mut worst_energy = 0f64;
    for seed in 0..10 {
        let x = Tensor::<f64>::from_vec(&[3, 8, 8], sample_values(192, seed, 1.0)).unwrap();
        let bands = x.haar_dwt2_stacked().unwrap();
        let back = bands.haar_idwt2_stacked().unwrap();
        worst_rt = x
            .data()
            .iter()
            .zip(back.data())
            .fold(worst_rt, |m, (a, b)| m.max((a - b).abs()));
        let e = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>();
        worst_energy = worst_energy.max((e(&x) - e(&bands)).abs() / e(&x));

        let s = Tensor::<f64>::from_vec(&[16, 4, 4], sample_values(256, 100 + seed, 1.0)).unwrap();
        let up = s.pixel_shuffle(2).unwrap();
        ensure(up.pixel_unshuffle(2).unwrap().data() == s.data(), || {
            "shuffle round trip differs".into()
        })?;
        let u = s.pixel_unshuffle(2).unwrap();
        ensure(u.pixel_shuffle(2).unwrap().data() == s.data(), || {
            "unshuffle round trip differs".into()
        })?;
    }
    let mut worst_mdb = 0f64;
    for seed in 0..10 {
        let x =
            Tensor::<f64>::from_vec(&[2, 4, 8, 8], sample_values(512, 200 + seed, 1.0)).unwrap();
        let back = Mdb::reconstruct(&Mdb::subbands(&x).unwrap()).unwrap();
        worst_mdb = x
            .data()
            .iter()
            .zip(back.data())
            .fold(worst_mdb, |m, (a, b)| m.max((a - b).abs()));
    }
    ensure(worst_rt < 1e-6, || {
        format!("haar round trip {worst_rt:.2e}")
    })?;
    ensure(worst_energy < 1e-4, || {
        format!("energy drift {worst_energy:.2e}")
    })?;
    ensure(worst_mdb < 1e-6, || {
        format!("mdb reconstruction {worst_mdb:.2e}")
    })?;
    Ok(format!(
        "haar round trip {worst_rt:.1e}, energy {worst_energy:.1e}, shuffle exact, mdb reconstruction {worst_mdb:.1e}"
    ))
}

fn loss_oracles() -> Check {
    let worst = oracles::check_losses()?;
    Ok(format!(
        "{} random cases plus composite and closed forms; max deviation {worst:.1e}",
        oracles::CASES
    ))
}

fn metric_oracles() -> Check {
    let n = oracles::check_metrics()?;
    Ok(format!(
        "{n} random mask pairs match exactly, empty-mask conventions included"
    ))
}

fn overfit() -> Check {
    let pc = PhantomConfig::new(64, 64);
    let samples: Vec<SliceSample> = (0..8u64)
        .map(|i| {
            let kind = if i % 2 == 0 {
                LesionKind::Ce
            } else {
                LesionKind::Ae
            };
            let ph = generate_phantom(&pc, kind, &mut ChaCha8Rng::seed_from_u64(100 + i)).unwrap();
            SliceSample {
                image: ph.image,
                mask: ph.mask,
                split: Split::Train,
                source: Source::Synthetic,
                lesion_kind: kind,
                patient_id: format!("o{i}"),
                slice_index: 0,
            }
        })
        .collect();
    let mut cfg = RunConfig {
        model: ModelConfig::desk(),
        ..Default::default()
    };
    cfg.train.augment = false;
    let bs = cfg.train.batch_size;
    let mut tr = Trainer::<f32>::new(cfg).map_err(|e| e.to_string())?;
    let mut best = 0.0;
    for step in 1..=300 {
        let i0 = ((step - 1) * bs) % samples.len();
        let refs: Vec<&SliceSample> = (0..bs)
            .map(|k| &samples[(i0 + k) % samples.len()])
            .collect();
        tr.train_step(&refs).map_err(|e| e.to_string())?;
        if step % 50 == 0 {
            let dsc = tr
                .evaluate(&samples)
                .map_err(|e| e.to_string())?
                .aggregate
                .micro()
                .dsc;
            best = f64::max(best, dsc);
            if dsc >= 0.95 {
                return Ok(format!("training DSC {dsc:.4} after {step} steps"));
            }
        }
    }
    Err(format!("best training DSC {best:.4} in 300 steps"))
}

struct AblationOutcome {
    flags: (bool, bool, bool),
    report: EvalReport,
    losses_finite: bool,
    epochs: usize,
}

struct AblationRun {
    rows: Vec<AblationOutcome>,
    background_fraction: f64,
    dir: tempfile::TempDir,
}

fn ablation_run() -> Result<AblationRun, String> {
    let all = synthesize(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let part = |s: Split| {
        all.iter()
            .filter(|x| x.split == s)
            .cloned()
            .collect::<Vec<_>>()
    };
    let (train, val, test) = (part(Split::Train), part(Split::Val), part(Split::Test));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut base = RunConfig {
        model: ModelConfig::desk(),
        ..Default::default()
    };
    base.train.checkpoint_dir = Some(dir.path().to_path_buf());
    let mut rows = Vec::new();
    let mut background_fraction = f64::NAN;
    for flags in combinations() {
        let mut t = Trainer::<f32>::new(variant_config(&base, flags)).map_err(|e| e.to_string())?;
        let history = t.fit(&train, &val).map_err(|e| format!("{flags:?}: {e}"))?;
        let report = t
            .evaluate_best(&test)
            .map_err(|e| e.to_string())?
            .aggregate
            .micro();
        let losses_finite = history
            .iter()
            .all(|r| r.train_loss.is_finite() && r.val_loss.is_finite())
            && t.step_losses.iter().all(|l| l.is_finite());
        if flags == (true, true, true) {
            let ph = generate_phantom(
                &PhantomConfig::new(64, 64),
                LesionKind::None,
                &mut ChaCha8Rng::seed_from_u64(77),
            )
            .map_err(|e| e.to_string())?;
            let x = ph
                .image
                .to_tensor()
                .map_err(|e| e.to_string())?
                .reshape(&[1, 1, 64, 64])
                .unwrap();
            let mask = t
                .model
                .predict(t.best_params(), &x, 0.5)
                .map_err(|e| e.to_string())?;
            background_fraction =
                mask.data().iter().filter(|&&v| v > 0.5).count() as f64 / mask.numel() as f64;
        }
        emit(&format!(
            "  ablation mdb={} mub={} mab={} dsc={:.4} epochs={}",
            flags.0,
            flags.1,
            flags.2,
            report.dsc,
            history.len()
        ));
        rows.push(AblationOutcome {
            flags,
            report,
            losses_finite,
            epochs: history.len(),
        });
    }
    Ok(AblationRun {
        rows,
        background_fraction,
        dir,
    })
}

fn generalization(run: &Result<AblationRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let full = &run.rows[0];
    let dsc = full.report.dsc;
    ensure(dsc >= 0.80, || format!("test micro DSC {dsc:.4} < 0.80"))?;
    Ok(format!(
        "test micro DSC {dsc:.4} after {} epochs",
        full.epochs
    ))
}

fn ablation_trend(run: &Result<AblationRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let full = run.rows[0].report.dsc;
    let name = |f: (bool, bool, bool)| match f {
        (false, true, true) => "mdb",
        (true, false, true) => "mub",
        (true, true, false) => "mab",
        _ => "",
    };
    let mut notes = Vec::new();
    let mut ok = true;
    for r in &run.rows {
        ok &= r.losses_finite;
        let removed = [r.flags.0, r.flags.1, r.flags.2]
            .iter()
            .filter(|b| !**b)
            .count();
        if removed == 1 {
            let pass = full >= r.report.dsc - 0.01;
            ok &= pass;
            notes.push(format!(
                "no-{} {:.4}{}",
                name(r.flags),
                r.report.dsc,
                if pass { "" } else { " (above full)" }
            ));
        }
    }
    let finite = run.rows.iter().all(|r| r.losses_finite);
    let detail = format!(
        "full {full:.4} vs {}; 8 rows finite: {finite}",
        notes.join(", ")
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn recipe() -> Check {
    let lines = provenance::audit().map_err(|e| e.to_string())?;
    let bad: Vec<String> = lines
        .iter()
        .filter(|l| !l.ok)
        .map(|l| format!("{}={:?}", l.key, l.actual))
        .collect();
    ensure(bad.is_empty(), || {
        format!("mismatched defaults: {}", bad.join(", "))
    })?;
    Ok(format!(
        "{} recipe defaults traced in the shipped provenance table",
        lines.len()
    ))
}

fn hesunet_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hesunet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{} failed: {}",
            args[0],
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn determinism() -> Check {
    let all = synthesize(&SynthConfig {
        patients: 10,
        seed: 9,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let train: Vec<SliceSample> = all
        .iter()
        .filter(|s| s.split == Split::Train)
        .cloned()
        .collect();
    let cfg = |steps: usize| {
        let mut c = RunConfig {
            model: ModelConfig::desk(),
            ..Default::default()
        };
        c.train.max_steps = Some(steps);
        c
    };
    let first10 = || -> Result<Vec<f64>, String> {
        let mut t = Trainer::<f64>::new(cfg(10)).map_err(|e| e.to_string())?;
        t.fit(&train, &[]).map_err(|e| e.to_string())?;
        Ok(t.step_losses)
    };
    let (a, b) = (first10()?, first10()?);
    ensure(a.len() == 10 && a == b, || {
        format!("step losses differ: {a:?} vs {b:?}")
    })?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpt = tmp.path().join("mid.ckpt");
    let mut t = Trainer::<f64>::new(cfg(5)).map_err(|e| e.to_string())?;
    t.fit(&train, &[]).map_err(|e| e.to_string())?;
    t.save_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    t.config.train.max_steps = Some(6);
    t.fit(&train, &[]).map_err(|e| e.to_string())?;
    let mut r = Trainer::<f64>::resume(cfg(6), &ckpt).map_err(|e| e.to_string())?;
    r.fit(&train, &[]).map_err(|e| e.to_string())?;
    ensure(r.step_losses == t.step_losses[5..], || {
        format!(
            "resumed step loss {:?} vs {:?}",
            r.step_losses,
            &t.step_losses[5..]
        )
    })?;
    ensure(t.step_losses[5] == a[5], || {
        "resumed run diverged from the uninterrupted run".into()
    })?;

    let t0 = Instant::now();
    let data = tmp.path().join("data");
    let run_dir = tmp.path().join("run");
    let pred = tmp.path().join("pred");
    let report = tmp.path().join("report.txt");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    hesunet_cli(&[
        "synth",
        "--out",
        &s(&data),
        "--patients",
        "10",
        "--seed",
        "4",
    ])?;
    hesunet_cli(&[
        "train",
        "--data",
        &s(&data),
        "--out",
        &s(&run_dir),
        "--set",
        "c0=8",
        "--set",
        "height=64",
        "--set",
        "width=64",
        "--set",
        "epochs=5",
    ])?;
    hesunet_cli(&[
        "infer",
        "--ckpt",
        &s(&run_dir.join(BEST_CHECKPOINT)),
        "--images",
        &s(&data.join("test/images")),
        "--out",
        &s(&pred),
    ])?;
    hesunet_cli(&[
        "eval",
        "--pred",
        &s(&pred),
        "--gt",
        &s(&data.join("test/masks")),
        "--report",
        &s(&report),
    ])?;
    let r = EvalReport::parse_record(&fs::read_to_string(&report).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let cli_time = t0.elapsed();
    ensure(cli_time < Duration::from_secs(20 * 60), || {
        format!("CLI round trip took {cli_time:?}")
    })?;
    Ok(format!(
        "10-step f64 losses identical, resume matches next-step loss, CLI round trip in {:.0}s (DSC {:.3})",
        cli_time.as_secs_f64(),
        r.dsc
    ))
}

fn background_check(run: &Result<AblationRun, String>) -> Result<(), String> {
    let run = run.as_ref().map_err(Clone::clone)?;
    let f = run.background_fraction;
    let full_dir = run.dir.path().join("mdb1_mub1_mab1");
    let imgs = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ph = generate_phantom(
        &PhantomConfig::new(64, 64),
        LesionKind::None,
        &mut ChaCha8Rng::seed_from_u64(77),
    )
    .map_err(|e| e.to_string())?;
    write_image(&imgs.path().join("bg.png"), &ph.image).map_err(|e| e.to_string())?;
    let out = imgs.path().join("out");
    let ckpt = full_dir.join(BEST_CHECKPOINT);
    hesunet_cli(&[
        "infer",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--images",
        imgs.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])?;
    let m = read_mask(&out.join("bg.png")).map_err(|e| e.to_string())?;
    let cli_f = m.count_positive() as f64 / m.data.len() as f64;
    ensure(f < 0.05 && cli_f < 0.05, || {
        format!("positive fraction {f:.4} (library) / {cli_f:.4} (CLI)")
    })?;
    emit(&format!(
        "  all-background slice on the trained desk model: positive fraction {cli_f:.4}"
    ));
    Ok(())
}

#[test]
fn acceptance_criteria() {
    let mut passed = vec![
        run(1, Some(Duration::from_secs(60)), shape_contract),
        run(2, Some(Duration::from_secs(300)), gradient_suite),
        run(3, None, invariants),
        run(4, None, loss_oracles),
        run(5, None, metric_oracles),
        run(6, Some(Duration::from_secs(15 * 60)), overfit),
    ];
    let ablation = ablation_run();
    passed.push(run(7, None, || generalization(&ablation)));
    passed.push(run(8, None, || ablation_trend(&ablation)));
    passed.push(run(9, None, recipe));
    passed.push(run(10, None, determinism));
    let background = background_check(&ablation);
    if let Err(e) = &background {
        emit(&format!("  all-background check failed: {e}"));
    }

    let failed: Vec<usize> = passed
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    emit(&format!(
        "acceptance: {}/10 criteria pass",
        10 - failed.len()
    ));
    assert!(
        failed.is_empty() && background.is_ok(),
        "failing criteria: {failed:?}"
    );
}
