//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hesunet::data::io::{
    self, list_png, load_dataset, read_image, read_mask, write_dataset, write_image,
    write_manifest, write_mask,
};
use hesunet::data::overlay::render_overlay;
use hesunet::data::phantom::{synthesize, SynthConfig};
use hesunet::data::{Plane, SliceSample, Split};
use hesunet::metrics::{confusion, Aggregate, EvalReport};
use hesunet::train::ablation::{self, AblationRow, ABLATION_HEADER};
use hesunet::train::trainer::run_artifacts;
use hesunet::train::{load_model, RunConfig, Trainer};
use hesunet::{Real, Tensor};

use crate::exit::usage;
use crate::manifest::RunManifest;
use crate::{AblateArgs, Cli, Command, EvalArgs, InferArgs, SynthArgs, TrainArgs};

pub const CONFIG_SNAPSHOT: &str = "config.txt";
pub const ABLATION_TABLE: &str = "ablation.tsv";
pub const OVERLAY_DIR: &str = "overlays";

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let (seed, f64_mode) = (cli.seed, cli.float64);
    match cli.command {
        Command::Synth(a) => synth(&a, seed, f64_mode),
        Command::Train(a) if f64_mode => train::<f64>(&a, seed),
        Command::Train(a) => train::<f32>(&a, seed),
        Command::Infer(a) if f64_mode => infer::<f64>(&a, seed),
        Command::Infer(a) => infer::<f32>(&a, seed),
        Command::Eval(a) => eval(&a, seed, f64_mode),
        Command::Ablate(a) if f64_mode => ablate::<f64>(&a, seed),
        Command::Ablate(a) => ablate::<f32>(&a, seed),
    }
}

fn synth(a: &SynthArgs, seed: Option<u64>, float64: bool) -> Result<()> {
    let mut cfg = SynthConfig {
        patients: a.patients,
        size: a.size,
        seed: seed.unwrap_or(0),
        slices_per_patient: a.slices_per_patient,
        ..Default::default()
    };
    if let Some(r) = a.ce_ratio {
        cfg.ce_ratio = r;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::start("synth", cfg.seed, float64);
    manifest.config = format!(
        "patients={}\nsize={}\nseed={}\nce_ratio={}\nslices_per_patient={}\nlesion_slice_p={}\n",
        cfg.patients, cfg.size, cfg.seed, cfg.ce_ratio, cfg.slices_per_patient, cfg.lesion_slice_p
    );
    let samples = synthesize(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let rows = write_dataset(&a.out, &samples)?;
    let manifest_path = a.out.join(io::MANIFEST);
    write_manifest(&manifest_path, &rows)?;
    for split in Split::ALL {
        let n = samples.iter().filter(|s| s.split == split).count();
        log::info!("{split}: {n} slices");
    }
    manifest.artifacts.push(manifest_path);
    manifest
        .artifacts
        .extend(rows.iter().map(|r| a.out.join(&r.path)));
    manifest.finish(&a.out)?;
    Ok(())
}

/// Configuration from an optional file plus `key=value` overrides.
fn run_config(
    file: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<Option<RunConfig>> {
    let mut cfg = match file {
        Some(p) => RunConfig::parse(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None if overrides.is_empty() && seed.is_none() => return Ok(None),
        None => RunConfig::default(),
    };
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    Ok(Some(cfg))
}

struct Splits {
    train: Vec<SliceSample>,
    val: Vec<SliceSample>,
    test: Vec<SliceSample>,
}

fn load_splits(root: &Path) -> Result<Splits> {
    let all = load_dataset(root).with_context(|| format!("loading dataset {}", root.display()))?;
    let part = |s: Split| {
        all.iter()
            .filter(|x| x.split == s)
            .cloned()
            .collect::<Vec<_>>()
    };
    Ok(Splits {
        train: part(Split::Train),
        val: part(Split::Val),
        test: part(Split::Test),
    })
}

fn check_size(cfg: &RunConfig, samples: &[SliceSample]) -> Result<()> {
    if let Some(s) = samples.first() {
        if (s.image.height, s.image.width) != (cfg.model.height, cfg.model.width) {
            return Err(usage(format!(
                "dataset images are {}x{} but the model expects {}x{}",
                s.image.height, s.image.width, cfg.model.height, cfg.model.width
            )));
        }
    }
    Ok(())
}

/// Recipe defaults sized to the dataset when no configuration is given.
fn sized_default(samples: &[SliceSample]) -> RunConfig {
    let mut cfg = RunConfig::default();
    if let Some(s) = samples.first() {
        cfg.model.height = s.image.height;
        cfg.model.width = s.image.width;
    }
    cfg
}

fn train<T: Real>(a: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let given = run_config(a.config.as_deref(), &a.overrides, seed)?;
    let data = load_splits(&a.data)?;
    let mut cfg = match (&given, &a.resume) {
        (Some(c), _) => c.clone(),
        (None, Some(ck)) => load_model::<T>(ck)?.0,
        (None, None) => sized_default(&data.train),
    };
    cfg.train.checkpoint_dir = Some(a.out.clone());
    cfg.validate()?;
    check_size(&cfg, &data.train)?;
    if data.train.is_empty() {
        return Err(hesunet::Error::Data("dataset has no training slices".into()).into());
    }
    let mut trainer = match &a.resume {
        Some(ck) => Trainer::<T>::resume(cfg.clone(), ck)
            .with_context(|| format!("resuming from {}", ck.display()))?,
        None => Trainer::<T>::new(cfg.clone())?,
    };
    fs::create_dir_all(&a.out)?;
    let mut manifest = RunManifest::start("train", cfg.train.seed, T::DTYPE == hesunet::DType::F64);
    manifest.config = cfg.to_text();
    let snapshot = a.out.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, cfg.to_text())?;
    log::info!(
        "training {} parameters on {} slices ({} validation), starting at epoch {}",
        trainer.store.trainable_count(),
        data.train.len(),
        data.val.len(),
        trainer.epoch + 1
    );
    trainer.fit(&data.train, &data.val)?;
    log::info!(
        "finished after epoch {} (best validation loss {:.5} at epoch {})",
        trainer.epoch,
        trainer.best_val_loss,
        trainer.best_epoch
    );
    manifest.artifacts.push(snapshot);
    manifest.artifacts.extend(run_artifacts(&a.out));
    manifest.finish(&a.out)?;
    Ok(())
}

fn to_tensor<T: Real>(planes: &[&Plane]) -> Result<Tensor<T>> {
    let (h, w) = (planes[0].height, planes[0].width);
    let data = planes
        .iter()
        .flat_map(|p| p.data.iter().map(|&v| T::lit(v as f64)))
        .collect();
    Ok(Tensor::from_vec(&[planes.len(), 1, h, w], data)?)
}

fn infer<T: Real>(a: &InferArgs, seed: Option<u64>) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(usage(format!("--threshold {} outside (0, 1)", a.threshold)));
    }
    let (cfg, model, store) =
        load_model::<T>(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let files = list_png(&a.images).with_context(|| format!("listing {}", a.images.display()))?;
    let images = files
        .iter()
        .map(|p| read_image(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    for (p, img) in files.iter().zip(&images) {
        if (img.height, img.width) != (cfg.model.height, cfg.model.width) {
            return Err(usage(format!(
                "{} is {}x{} but the model expects {}x{}",
                p.display(),
                img.height,
                img.width,
                cfg.model.height,
                cfg.model.width
            )));
        }
    }
    let mut manifest = RunManifest::start(
        "infer",
        seed.unwrap_or(cfg.train.seed),
        T::DTYPE == hesunet::DType::F64,
    );
    manifest.config = format!(
        "{}threshold={}\noverlay={}\n",
        cfg.model_text(),
        a.threshold,
        a.overlay
    );
    fs::create_dir_all(&a.out)?;
    if a.overlay {
        fs::create_dir_all(a.out.join(OVERLAY_DIR))?;
    }
    let bs = cfg.train.batch_size.max(1);
    for (chunk_files, chunk) in files.chunks(bs).zip(images.chunks(bs)) {
        let refs: Vec<&Plane> = chunk.iter().collect();
        let pred = model.predict(&store, &to_tensor::<T>(&refs)?, a.threshold)?;
        let plane = cfg.model.height * cfg.model.width;
        for (i, (path, img)) in chunk_files.iter().zip(chunk).enumerate() {
            let data = pred.data()[i * plane..(i + 1) * plane]
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect();
            let mask = Plane::new(img.height, img.width, data)?;
            let name = path.file_name().expect("listed file has a name");
            let out = a.out.join(name);
            write_mask(&out, &mask)?;
            manifest.artifacts.push(out);
            if a.overlay {
                let over = a.out.join(OVERLAY_DIR).join(name);
                write_image(&over, &render_overlay(img, &mask)?)?;
                manifest.artifacts.push(over);
            }
        }
    }
    log::info!("wrote {} masks to {}", files.len(), a.out.display());
    manifest.finish(&a.out)?;
    Ok(())
}

/// `<dir>/<stem>_per_sample.tsv` beside a report file.
pub fn per_sample_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}_per_sample.tsv"))
}

fn eval(a: &EvalArgs, seed: Option<u64>, float64: bool) -> Result<()> {
    let files = list_png(&a.pred).with_context(|| format!("listing {}", a.pred.display()))?;
    if files.is_empty() {
        return Err(hesunet::Error::Data(format!("no masks in {}", a.pred.display())).into());
    }
    let mut aggregate = Aggregate::default();
    let mut table = String::from("name\tdsc\tprecision\trecall\ttp\tfp\tfn\n");
    for p in &files {
        let name = p.file_name().expect("listed file has a name");
        let gt_path = a.gt.join(name);
        let pred = read_mask(p).with_context(|| format!("reading {}", p.display()))?;
        let gt = read_mask(&gt_path).with_context(|| format!("reading {}", gt_path.display()))?;
        if (pred.height, pred.width) != (gt.height, gt.width) {
            return Err(hesunet::Error::Data(format!(
                "{}: prediction and ground truth sizes differ",
                name.to_string_lossy()
            ))
            .into());
        }
        let (tp, fp, fn_) = confusion(&pred.data, &gt.data)?;
        let r = EvalReport::from_counts(tp, fp, fn_);
        aggregate.push(r);
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            Path::new(name)
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy(),
            r.dsc,
            r.precision,
            r.recall,
            r.tp,
            r.fp,
            r.fn_
        ));
    }
    let micro = aggregate.micro();
    let dir = a
        .report
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    fs::write(&a.report, micro.to_record())?;
    let samples = per_sample_path(&a.report);
    fs::write(&samples, table)?;
    println!("{micro}");
    let mut manifest = RunManifest::start("eval", seed.unwrap_or(0), float64);
    manifest.config = format!("pred={}\ngt={}\n", a.pred.display(), a.gt.display());
    manifest.artifacts = vec![a.report.clone(), samples];
    manifest.finish(dir)?;
    Ok(())
}

fn ablate<T: Real>(a: &AblateArgs, seed: Option<u64>) -> Result<()> {
    let mut toggled = [false; 3];
    for g in &a.grid {
        match g.trim() {
            "mdb" => toggled[0] = true,
            "mub" => toggled[1] = true,
            "mab" => toggled[2] = true,
            other => {
                return Err(usage(format!(
                    "unknown ablation module {other:?} (expected mdb, mub, mab)"
                )))
            }
        }
    }
    let given = run_config(a.config.as_deref(), &a.overrides, seed)?;
    let data = load_splits(&a.data)?;
    let mut base = given.unwrap_or_else(|| sized_default(&data.train));
    base.train.checkpoint_dir = Some(a.out.clone());
    base.validate()?;
    check_size(&base, &data.train)?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(hesunet::Error::Data("ablation needs training and test slices".into()).into());
    }
    let combos: Vec<(bool, bool, bool)> = ablation::combinations()
        .into_iter()
        .filter(|&(m, u, b)| (toggled[0] || m) && (toggled[1] || u) && (toggled[2] || b))
        .collect();
    fs::create_dir_all(&a.out)?;
    let mut manifest =
        RunManifest::start("ablate", base.train.seed, T::DTYPE == hesunet::DType::F64);
    manifest.config = base.to_text();
    let table_path = a.out.join(ABLATION_TABLE);
    fs::write(&table_path, format!("{ABLATION_HEADER}\n"))?;
    let mut rows: Vec<AblationRow> = Vec::new();
    for flags in combos {
        let row = ablation::run_variant::<T>(&base, flags, &data.train, &data.val, &data.test)?;
        let mut table = fs::read_to_string(&table_path)?;
        table.push_str(&format!("{}\n", row.to_tsv()));
        fs::write(&table_path, table)?;
        if let Some(dir) = ablation::variant_config(&base, flags).train.checkpoint_dir {
            manifest.artifacts.extend(run_artifacts(&dir));
        }
        rows.push(row);
    }
    for r in &rows {
        println!("{}", r.to_tsv());
    }
    manifest.artifacts.push(table_path);
    manifest.finish(&a.out)?;
    Ok(())
}
