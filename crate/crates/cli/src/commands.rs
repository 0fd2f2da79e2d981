use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use glyphforge_core::data::{generate_synthetic_dataset, GlyphDataset, GlyphImage};
use glyphforge_core::eval::sheet::{write_grid, glyph_png};
use glyphforge_core::eval::{
    interpolate_styles, legibility_of_sets, nearest_training_distance, sample_glyph_sets, EvalReport, ReportOptions,
};
use glyphforge_core::model::sample_style;
use glyphforge_core::train::telemetry::{parse_csv, CSV_HEADER};
use glyphforge_core::train::{TelemetryRecord, TrainObserver};
use glyphforge_core::{Checkpoint32, Classifier32, Trainer32};

use crate::config::CliConfig;
use crate::{CliError, DatasetCommand, EvaluateArgs, GenerateArgs, InterpolateArgs, ServeArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<GlyphDataset, CliError> {
    Ok(GlyphDataset::load_cache(path)?)
}

fn summarize(ds: &GlyphDataset) -> String {
    format!(
        "{} fonts, {} classes, {}x{} pixels",
        ds.num_fonts(),
        ds.num_classes(),
        ds.image_size(),
        ds.image_size()
    )
}

pub fn dataset(cmd: DatasetCommand) -> Result<(), CliError> {
    match cmd {
        DatasetCommand::Synth {
            styles,
            classes,
            size,
            seed,
            output,
        } => {
            let ds = generate_synthetic_dataset(styles, classes, size, seed)?;
            ds.save_cache(&output)?;
            println!("wrote {}: {}", output.display(), summarize(&ds));
        }
        DatasetCommand::Build { root, output } => {
            let ds = GlyphDataset::import_dir(&root)?;
            ds.save_cache(&output)?;
            println!("wrote {}: {}", output.display(), summarize(&ds));
        }
        DatasetCommand::Export { input, output } => {
            let ds = load_dataset(&input)?;
            ds.export_dir(&output)?;
            println!("exported {} to {}", summarize(&ds), output.display());
        }
    }
    Ok(())
}

/// Writes telemetry as it arrives, prints progress and checkpoints.
struct RunObserver {
    csv: BufWriter<File>,
    checkpoint_dir: PathBuf,
    every: Option<usize>,
    total_epochs: usize,
    epoch_started: Instant,
    epoch_w: Vec<f64>,
    failure: Option<String>,
}

impl TrainObserver<f32> for RunObserver {
    fn on_record(&mut self, record: &TelemetryRecord) -> glyphforge_core::Result<()> {
        self.epoch_w.push(record.wasserstein_estimate);
        writeln!(self.csv, "{}", record.to_csv_row())
            .and_then(|_| self.csv.flush())
            .map_err(|e| glyphforge_core::Error::Io {
                path: "telemetry.csv".into(),
                source: e,
            })
    }

    fn on_epoch_end(&mut self, trainer: &Trainer32) -> glyphforge_core::Result<()> {
        let w = self.epoch_w.iter().sum::<f64>() / self.epoch_w.len().max(1) as f64;
        println!(
            "epoch {}/{}  cycle {:.2}s  wasserstein {:.5}",
            trainer.epoch,
            self.total_epochs,
            self.epoch_started.elapsed().as_secs_f64(),
            w
        );
        self.epoch_w.clear();
        self.epoch_started = Instant::now();
        if let Some(k) = self.every {
            if trainer.epoch.is_multiple_of(k) {
                let path = self.checkpoint_dir.join(format!("epoch-{:05}.ggan", trainer.epoch));
                if let Err(e) = Checkpoint32::from_trainer(trainer).save(&path) {
                    self.failure = Some(e.to_string());
                    return Err(e);
                }
            }
        }
        Ok(())
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?;
    if let Some(d) = args.dataset {
        cfg.dataset = Some(d);
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    let t = &mut cfg.train;
    if let Some(m) = args.loss_mode {
        t.loss_mode = m;
    }
    if let Some(e) = args.epochs {
        t.epochs = Some(e);
        t.generator_iterations = None;
    }
    if let Some(i) = args.iterations {
        t.generator_iterations = Some(i);
        t.epochs = None;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.n_disc {
        t.n_disc = v;
    }
    if let Some(v) = args.lambda {
        t.lambda = v;
    }
    if let Some(v) = args.width {
        t.width = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.checkpoint_every {
        t.checkpoint_every = Some(v);
    }

    let dataset_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset given (use --dataset or the config's \"dataset\")".into()))?;
    let ds = load_dataset(&dataset_path)?;
    // Image size and class count always follow the data.
    cfg.train.image_size = ds.image_size();
    cfg.train.num_classes = ds.num_classes();

    let mut trainer = match &args.resume {
        Some(path) => {
            let ck = Checkpoint32::load(path)?;
            let mut trainer = ck.into_trainer()?;
            trainer.config.epochs = cfg.train.epochs;
            trainer.config.generator_iterations = cfg.train.generator_iterations;
            trainer.config.checkpoint_every = cfg.train.checkpoint_every;
            trainer.check_dataset(&ds)?;
            trainer
        }
        None => {
            let problems = cfg.train.problems();
            if !problems.is_empty() {
                return Err(CliError::Usage(format!("invalid training config:\n  {}", problems.join("\n  "))));
            }
            Trainer32::new(cfg.train.clone())?
        }
    };
    trainer.config.validate()?;

    let out = cfg.output_dir.clone();
    let ck_dir = out.join("checkpoints");
    create_dir(&ck_dir)?;
    let mut resolved = cfg.clone();
    resolved.train = trainer.config.clone();
    write_file(&out.join("config.json"), &serde_json::to_vec_pretty(&resolved).expect("config serializes"))?;

    let telemetry_path = out.join("telemetry.csv");
    let mut kept: Vec<TelemetryRecord> = Vec::new();
    if args.resume.is_some() {
        if let Ok(text) = fs::read_to_string(&telemetry_path) {
            kept = parse_csv(&text)?.into_iter().filter(|r| r.epoch <= trainer.epoch).collect();
        }
    }
    let mut csv = BufWriter::new(
        File::create(&telemetry_path).map_err(|e| CliError::Runtime(format!("{}: {e}", telemetry_path.display())))?,
    );
    writeln!(csv, "{CSV_HEADER}")?;
    for r in &kept {
        writeln!(csv, "{}", r.to_csv_row())?;
    }
    println!(
        "training {} on {} ({}) for {} epochs, output {}",
        trainer.config.loss_mode,
        dataset_path.display(),
        summarize(&ds),
        trainer.config.total_epochs(),
        out.display()
    );
    let mut observer = RunObserver {
        csv,
        checkpoint_dir: ck_dir,
        every: trainer.config.checkpoint_every,
        total_epochs: trainer.config.total_epochs(),
        epoch_started: Instant::now(),
        epoch_w: Vec::new(),
        failure: None,
    };
    let result = trainer.fit(&ds, &mut observer);
    if let Some(f) = observer.failure.take() {
        return Err(CliError::Runtime(f));
    }
    result?;
    let final_path = out.join("final.ggan");
    Checkpoint32::from_trainer(&trainer).save(&final_path)?;
    println!(
        "done: {} generator and {} critic updates; wrote {}",
        trainer.generator_updates,
        trainer.critic_updates,
        final_path.display()
    );
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let generator = Checkpoint32::load(&args.checkpoint)?.generator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (styles, sets) = sample_glyph_sets(&generator, args.count, &mut rng)?;
    let glyph_dir = args.out.join("glyphs");
    create_dir(&glyph_dir)?;
    for (s, set) in sets.iter().enumerate() {
        for (c, img) in set.iter().enumerate() {
            write_file(&glyph_dir.join(format!("{s:04}_{c:02}.png")), &glyph_png(img)?)?;
        }
    }
    write_grid(&args.out.join("grid.png"), &sets, 2)?;
    write_file(
        &args.out.join("styles.json"),
        &serde_json::to_vec_pretty(&json!({ "seed": args.seed, "styles": styles })).expect("json"),
    )?;
    println!(
        "wrote {} styles x {} classes to {}",
        sets.len(),
        generator.config.num_classes,
        args.out.display()
    );
    Ok(())
}

fn sets_from_dataset(ds: &GlyphDataset) -> Vec<Vec<GlyphImage>> {
    (0..ds.num_fonts()).map(|f| ds.font(f).to_vec()).collect()
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = CliConfig::load(args.config.as_deref())?;
    if let Some(d) = args.dataset {
        cfg.dataset = Some(d);
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    let e = &mut cfg.eval;
    if let Some(v) = args.num_styles {
        e.num_styles = v;
    }
    if let Some(v) = args.classifier {
        e.classifier = Some(v);
    }
    if let Some(v) = args.radius {
        e.radius = v;
    }
    if let Some(v) = args.threshold {
        e.threshold = v;
    }
    if let Some(v) = args.bin_width {
        e.bin_width = v;
    }
    if let Some(v) = args.seed {
        e.seed = v;
    }
    let params = cfg.distance();
    params.validate()?;
    let dataset_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset given (use --dataset or the config's \"dataset\")".into()))?;
    let ds = load_dataset(&dataset_path)?;
    let generator = Checkpoint32::load(&args.checkpoint)?.generator()?;
    if generator.config.num_classes != ds.num_classes() || generator.config.image_size != ds.image_size() {
        return Err(CliError::Usage(format!(
            "checkpoint is for {} classes at {}px, dataset has {}",
            generator.config.num_classes,
            generator.config.image_size,
            summarize(&ds)
        )));
    }
    let out = cfg.output_dir.clone();
    create_dir(&out)?;

    let sets = match &args.generated {
        Some(dir) => sets_from_dataset(&GlyphDataset::import_dir(dir)?),
        None => {
            if cfg.eval.num_styles == 0 {
                return Err(CliError::Usage("--num-styles must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
            sample_glyph_sets(&generator, cfg.eval.num_styles, &mut rng)?.1
        }
    };

    let existing = cfg.eval.classifier.as_ref().filter(|p| p.exists());
    let (classifier, accuracy) = match existing {
        Some(path) => (Classifier32::load(path)?, None),
        None => {
            println!("training legibility classifier (9:1 font split)");
            let (clf, acc) = Classifier32::train_split(&ds, cfg.eval.classifier_training.clone())?;
            clf.save(&out.join("classifier.gcls"))?;
            println!("classifier accuracy: train {:.4}, held-out {:.4}", acc.train, acc.test);
            (clf, Some(acc))
        }
    };

    let dm = nearest_training_distance(&sets, &ds, params)?;
    let mut report = EvalReport::from_distances(
        &dm,
        params,
        ReportOptions {
            bin_width: cfg.eval.bin_width,
            below_threshold: cfg.eval.below_threshold,
        },
    )?;
    report.legibility = Some(legibility_of_sets(&sets, &classifier)?);
    report.classifier_train_accuracy = accuracy.map(|a| a.train);
    report.classifier_test_accuracy = accuracy.map(|a| a.test);

    report.write_json(&out.join("report.json"))?;
    write_file(&out.join("histogram.csv"), report.histogram_csv().as_bytes())?;
    let mut dist_csv = String::from("style,class,distance,nearest_font\n");
    for n in 0..dm.num_styles {
        for c in 0..dm.num_classes {
            dist_csv.push_str(&format!("{n},{c},{},{}\n", dm.get(n, c), dm.argmin[n * dm.num_classes + c]));
        }
    }
    write_file(&out.join("distances.csv"), dist_csv.as_bytes())?;
    write_grid(&out.join("sheet.png"), &sets[..sets.len().min(30)], 2)?;

    println!("legibility        {:.4}", report.legibility.unwrap_or(f64::NAN));
    match report.style_consistency {
        Some(v) => println!(
            "style consistency {v:.4} ({} zero-distance styles excluded)",
            report.consistency_excluded_rows
        ),
        None => println!(
            "style consistency degenerate: identical to training ({} of {} styles excluded)",
            report.consistency_excluded_rows, report.num_styles
        ),
    }
    match report.diversity {
        Some(v) => println!("diversity         {v:.4}"),
        None => println!("diversity         undefined"),
    }
    println!("distance range    [{}, {}]", report.min_distance, report.max_distance);
    println!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn parse_class(s: &str, num_classes: usize) -> Result<usize, CliError> {
    let class = match s.parse::<usize>() {
        Ok(c) => c,
        Err(_) => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(ch), None) if ch.is_ascii_alphabetic() => (ch.to_ascii_uppercase() as u8 - b'A') as usize,
                _ => return Err(CliError::Usage(format!("invalid class {s:?}; use an index or a letter"))),
            }
        }
    };
    if class >= num_classes {
        return Err(CliError::Usage(format!("class {s} out of range for {num_classes} classes")));
    }
    Ok(class)
}

pub fn interpolate(args: InterpolateArgs) -> Result<(), CliError> {
    let generator = Checkpoint32::load(&args.checkpoint)?.generator()?;
    let class = parse_class(&args.class, generator.config.num_classes)?;
    let anchors: Vec<Vec<f32>> = if let Some(path) = &args.anchors {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("anchors file: {e}")))?
    } else if let Some(seeds) = &args.seeds {
        seeds.iter().map(|&s| sample_style(&mut ChaCha8Rng::seed_from_u64(s))).collect()
    } else if let Some(n) = args.random_anchors {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        (0..n).map(|_| sample_style(&mut rng)).collect()
    } else {
        return Err(CliError::Usage("give --anchors, --seeds or --random-anchors".into()));
    };
    let path = interpolate_styles(&generator, &anchors, args.steps, class)?;
    create_dir(&args.out)?;
    write_grid(&args.out.join("strip.png"), std::slice::from_ref(&path.frames), 1)?;
    let segments: Vec<Vec<GlyphImage>> = (0..path.num_segments()).map(|i| path.segment(i).to_vec()).collect();
    write_grid(&args.out.join("segments.png"), &segments, 1)?;
    write_file(
        &args.out.join("frames.json"),
        &serde_json::to_vec_pretty(&json!({
            "class": class,
            "steps": args.steps,
            "anchors": anchors.len(),
            "segments": path.num_segments(),
            "frames_per_segment": args.steps + 1,
            "unique_frames": path.frames.len(),
            "styles": path.styles,
        }))
        .expect("json"),
    )?;
    println!(
        "{} segments x {} frames, {} unique frames written to {}",
        path.num_segments(),
        args.steps + 1,
        path.frames.len(),
        args.out.display()
    );
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let cfg = CliConfig::load(args.config.as_deref())?;
    let bind = args.bind.unwrap_or(cfg.serve.bind);
    let port = args.port.unwrap_or(cfg.serve.port);
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad bind address {bind}:{port}: {e}")))?;
    let state = match &args.checkpoint {
        Some(p) => glyphforge_serve::AppState::with_model(glyphforge_serve::LoadedModel::load(p)?),
        None => glyphforge_serve::AppState::default(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    println!("listening on http://{addr}");
    runtime.block_on(glyphforge_serve::serve(addr, state))?;
    Ok(())
}
