use std::path::{Path, PathBuf};

use agfa_core::data::{
    generate_phantom, kfold_split, load_mask, load_volume, save_mask, save_volume, AugmentConfig, DataError, Fold, Manifest,
    ManifestEntry, PhantomSpec, Sample,
};
use agfa_core::metrics::{HausdorffVariant, MetricsError, MetricsReport};
use agfa_core::model::{ModelConfig, ModelError};
use agfa_core::train::{
    evaluate, load_checkpoint, predict_mask, run_ablation, save_checkpoint, splitmix64, AblationConfig, ScheduleState,
    TrainConfig, TrainError, Trainer,
};

use crate::args::{AblateArgs, EvalArgs, InferArgs, PhantomArgs, TrainArgs, TrainingOptions, Variant};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidAugment(_) | DataError::InvalidPhantom(_) | DataError::TooFewIds { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::ConfigSyntax(_) => CliError::Usage(e.to_string()),
            ModelError::Tensor(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Tensor(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } | TrainError::MissingGradient(_) | TrainError::Tensor(_) => {
                CliError::Numeric(e.to_string())
            }
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Metrics(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn triple<T: Copy>(v: &[T]) -> [T; 3] {
    [v[0], v[1], v[2]]
}

pub fn phantom(a: PhantomArgs) -> Result<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let base = PhantomSpec {
        seed: a.seed,
        extents: triple(&a.extents),
        spacing: triple(&a.spacing),
        branch_count: a.branches,
        radius_range: [a.radius[0], a.radius[1]],
        noise_sigma: a.noise,
        ..PhantomSpec::default()
    };
    base.validate()?;
    let mut entries = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let spec = PhantomSpec { seed: splitmix64(splitmix64(a.seed).wrapping_add(i as u64)), ..base.clone() };
        let p = generate_phantom(&spec)?;
        let id = format!("case_{i:03}");
        let (img, seg) = (format!("{id}_img.agv"), format!("{id}_seg.agv"));
        save_volume(&p.sample.volume, a.out_dir.join(&img))?;
        save_mask(&p.sample.mask, a.out_dir.join(&seg))?;
        println!("{id}: {} foreground voxels, {} tube ends", p.sample.mask.count(), p.endpoints().len());
        entries.push(ManifestEntry { id, volume: img.into(), mask: seg.into() });
    }
    let source = serde_json::json!({ "generator": "phantom", "count": a.count, "spec": base });
    let manifest = Manifest { entries, source: Some(source), ..Manifest::default() };
    manifest.save(a.out_dir.join("manifest.json"))?;
    println!("wrote {} samples and {}", a.count, a.out_dir.join("manifest.json").display());
    Ok(())
}

fn resolve_config(name: &str, base_channels: Option<usize>) -> Result<ModelConfig> {
    let cfg = match ModelConfig::named(name) {
        Some(c) => c,
        None => {
            let text = std::fs::read_to_string(name).map_err(|e| {
                CliError::Usage(format!("--config {name}: not a known configuration and not a readable file ({e})"))
            })?;
            ModelConfig::from_toml(&text)?
        }
    };
    let cfg = match base_channels {
        Some(b) => cfg.with_base_channels(b),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(o: &TrainingOptions, validate_every: usize) -> Result<TrainConfig> {
    let crop = triple(&o.crop);
    let augment = if o.no_augment { AugmentConfig::crop_only(crop) } else { AugmentConfig { crop, ..AugmentConfig::default() } };
    let cfg = TrainConfig {
        epochs: o.epochs,
        batch_size: o.batch_size,
        seed: o.seed,
        augment,
        schedule: ScheduleState { base_lr: o.lr, t_0: o.t0, ..ScheduleState::default() },
        validate_every,
        postprocess_radius: o.radius,
        ..TrainConfig::desk()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let m = Manifest::load(path)?;
    Ok(m.load_all()?)
}

/// Folds as `(train, val, test)`; a single fold trains on everything.
fn folds(samples: &[Sample], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    match k {
        0 => Err(CliError::Usage("--folds must be at least 1".into())),
        1 => Ok(vec![Fold { train: ids, val: Vec::new(), test: Vec::new() }]),
        _ => Ok(kfold_split(&ids, k, seed)?),
    }
}

fn pick(samples: &[Sample], ids: &[String]) -> Vec<Sample> {
    ids.iter().filter_map(|id| samples.iter().find(|s| &s.id == id).cloned()).collect()
}

fn train_fold(
    index: usize,
    fold: &Fold,
    samples: &[Sample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    resume: bool,
    out: &Path,
) -> Result<Option<MetricsReport>> {
    let dir = out.join(format!("fold{index}"));
    let last = dir.join("checkpoint.ckpt");
    let mut trainer = if resume && last.exists() {
        let t = load_checkpoint(&last)?;
        if t.net.config != *model {
            return Err(CliError::Usage(format!("{} was trained with a different configuration", last.display())));
        }
        Trainer { config: TrainConfig { epochs: cfg.epochs, ..t.config.clone() }, ..t }
    } else {
        Trainer::new(model, cfg.clone())?
    };
    let (train, val, test) = (pick(samples, &fold.train), pick(samples, &fold.val), pick(samples, &fold.test));
    let mut log = String::new();
    for h in &trainer.history {
        log += &h.log_line();
        log.push('\n');
    }
    let mut failure = None;
    let prefix = format!("fold{index} ");
    trainer.run(&train, &val, &mut |t| {
        let line = t.history.last().expect("an epoch finished").log_line();
        println!("{prefix}{line}");
        log += &line;
        log.push('\n');
        if failure.is_none() {
            let saved = save_checkpoint(t, &last).map_err(CliError::from);
            let logged = write_file(&dir.join("train.log"), &log);
            failure = saved.err().or(logged.err());
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    write_file(&dir.join("train.log"), &log)?;
    save_checkpoint(&trainer, &last)?;
    if let Some(best) = &trainer.best {
        println!("fold{index} best validation dice {:.4} at epoch {}", best.dice, best.epoch);
        best.snapshot.restore(&trainer.net)?;
    }
    if test.is_empty() {
        return Ok(None);
    }
    let ev = evaluate(&trainer.net, &test, &trainer.config.eval_config())?;
    write_file(&dir.join("test_raw.txt"), &ev.raw.to_text())?;
    write_file(&dir.join("test_post.txt"), &ev.post.to_text())?;
    write_file(&dir.join("test_post.json"), &ev.post.to_json())?;
    println!("fold{index} test dice {:.4} (raw {:.4})", ev.post.dice, ev.raw.dice);
    Ok(Some(ev.post))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let model = resolve_config(&a.config, a.base_channels)?;
    let cfg = train_config(&a.opts, a.validate_every)?;
    let samples = load_dataset(&a.opts.data_manifest)?;
    let folds = folds(&samples, a.opts.folds, a.opts.seed)?;
    write_file(&a.opts.out.join("config.toml"), &model.to_toml())?;

    let results: Vec<Result<Option<MetricsReport>>> = if a.opts.jobs <= 1 {
        folds.iter().enumerate().map(|(i, f)| train_fold(i, f, &samples, &model, &cfg, a.resume, &a.opts.out)).collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new((0..folds.len()).map(|_| None).collect::<Vec<_>>());
        std::thread::scope(|s| {
            for _ in 0..a.opts.jobs.min(folds.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    let Some(f) = folds.get(i) else { break };
                    let r = train_fold(i, f, &samples, &model, &cfg, a.resume, &a.opts.out);
                    slots.lock().expect("no poisoned workers")[i] = Some(r);
                });
            }
        });
        slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every fold ran")).collect()
    };
    let mut reports = Vec::new();
    for r in results {
        if let Some(rep) = r? {
            reports.push(rep);
        }
    }
    if let Some(mean) = MetricsReport::mean(&reports) {
        write_file(&a.opts.out.join("summary.txt"), &mean.to_text())?;
        write_file(&a.opts.out.join("summary.json"), &mean.to_json())?;
        println!("mean test dice over {} folds: {:.4}", reports.len(), mean.dice);
    }
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<()> {
    let t = load_checkpoint(&a.checkpoint)?;
    if a.best {
        let best = t.best.as_ref().ok_or_else(|| CliError::Usage("checkpoint holds no best-validation weights".into()))?;
        best.snapshot.restore(&t.net)?;
    }
    let volume = load_volume(&a.volume)?;
    let mask = predict_mask(&t.net, &volume, &t.config.eval_config(), a.postprocess)?;
    save_mask(&mask, &a.out)?;
    println!("wrote {} ({} foreground voxels)", a.out.display(), mask.count());
    Ok(())
}

fn json_sibling(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.with_extension("json.txt")
    } else {
        path.with_extension("json")
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let pred = load_mask(&a.pred)?;
    let truth = load_mask(&a.truth)?;
    if pred.geometry != truth.geometry {
        return Err(CliError::Data(format!(
            "misaligned geometry: prediction {:?} vs truth {:?}",
            pred.geometry, truth.geometry
        )));
    }
    let variant = match a.variant {
        Variant::Hd95 => HausdorffVariant::Hd95,
        Variant::Hd100 => HausdorffVariant::Hd100,
    };
    let report = MetricsReport::from_masks_with(&pred, &truth, truth.geometry.spacing, variant)?;
    let text = report.to_text();
    write_file(&a.report, &text)?;
    write_file(&json_sibling(&a.report), &report.to_json())?;
    print!("{text}");
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let cfg = AblationConfig {
        base_channels: a.base_channels,
        train: train_config(&a.opts, 0)?,
        folds: a.opts.folds,
        jobs: a.opts.jobs,
    };
    let samples = load_dataset(&a.opts.data_manifest)?;
    let table = run_ablation(&samples, &cfg)?;
    let text = table.to_text();
    write_file(&a.opts.out.join("ablation.md"), &text)?;
    write_file(&a.opts.out.join("ablation.json"), &table.to_json())?;
    print!("{text}");
    let failed: Vec<&str> = table.rows.iter().filter(|r| r.error.is_some()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("configurations failed: {}", failed.join(", "))))
    }
}
