use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use shotface::config::load_hyperparams;
use shotface::encoder::{
    embed_dataset, embed_image, load_backend, pairwise_cosine_stats, MockBackend, MockConfig,
};
use shotface::evaluate::{
    embed_sessions, load_session_specs, parse_csv, render_csv, render_table, score_sessions,
    training_accuracy,
};
use shotface::finetune::{
    build_prompts, finetune_single_shot, init_gallery, load_gallery, save_gallery, InitSource,
    PromptEmbeddingFile, TrainingSet, DEFAULT_TEMPLATE,
};
use shotface::preprocess::{ingest_dataset, load_face, split_dataset, DatasetIndex, Split, Subject};
use shotface::recognize::predict;
use shotface::synthetic::SyntheticProtocol;
use shotface::{EmbeddingCache, EncoderBackend, Error, EvaluationReport, HyperParams};

use crate::{Cli, Command, EncoderArgs, EvaluateArgs, FinetuneArgs};

/// A bad invocation: wrong flag values, a missing input root, an unusable
/// config file.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and configuration errors, 3 for encoder backend failures,
/// 4 for data errors.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::BackendLoad(_)) => 3,
        Some(Error::Template(_)) => 2,
        Some(Error::Invalid { what, .. }) if matches!(*what, "hyperparameters" | "config" | "threshold" | "split ratio") => 2,
        _ => 4,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let hp = hyperparams(cli)?;
    match &cli.command {
        Command::Ingest { root, out, ratio } => ingest(root, out, *ratio, cli.seed),
        Command::Embed { index, encoder, out } => embed(index, encoder, out, cli.seed),
        Command::Finetune(args) => finetune(args, hp, cli.seed),
        Command::Evaluate(args) => evaluate(args, &hp, cli.seed),
        Command::Diagnose { cache } => diagnose(cache),
        Command::Report { inputs, out } => report(inputs, out.as_deref()),
        Command::Predict {
            image,
            gallery,
            encoder,
            threshold,
        } => predict_one(image, gallery, encoder, threshold.unwrap_or(hp.confidence_threshold), cli.seed),
        Command::Synth {
            out,
            known,
            unknown,
            images,
            frames,
        } => {
            let protocol = SyntheticProtocol {
                known: *known,
                unknown: *unknown,
                images_per_identity: *images,
                frames_per_session: *frames,
                seed: cli.seed,
                ..SyntheticProtocol::default()
            };
            protocol.write_to(out)?;
            println!(
                "wrote {known} identities x {images} images and {} sessions x {frames} frames to {}",
                known + unknown,
                out.display()
            );
            Ok(())
        }
    }
}

fn hyperparams(cli: &Cli) -> Result<HyperParams> {
    match &cli.config {
        None => Ok(HyperParams::default()),
        Some(path) => load_hyperparams(path).map_err(|e| usage(format!("config: {e}"))),
    }
}

fn ingest(root: &Path, out: &Path, ratio: f64, seed: u64) -> Result<()> {
    if !root.is_dir() {
        return Err(usage(
            Error::EmptyDataset(format!("{} is not a directory", root.display())).to_string(),
        ));
    }
    let (index, mut warnings) = ingest_dataset(root)?;
    let (index, split_warnings) = split_dataset(&index, ratio, seed)?;
    warnings.extend(split_warnings);
    for w in &warnings {
        eprintln!("{w}");
    }
    index.save(out)?;
    for (label, (train, test)) in index.labels.iter().zip(index.split_counts()) {
        println!("{:<24} {:>4} images ({train} train / {test} test)", label.name, train + test);
    }
    println!(
        "{} identities, {} images, {} train / {} test",
        index.num_classes(),
        index.len(),
        index.count(Split::Train),
        index.count(Split::Test)
    );
    Ok(())
}

fn backend(args: &EncoderArgs, seed: u64) -> Result<Box<dyn EncoderBackend>> {
    if args.mock {
        let config = MockConfig {
            seed,
            dim: args.mock_dim,
            centers: args.mock_centers,
            separation_deg: args.mock_separation,
            noise_deg: args.mock_noise,
        };
        let backend = MockBackend::new(config).map_err(|e| usage(format!("mock encoder: {e}")))?;
        return Ok(Box::new(backend));
    }
    let manifest = args
        .manifest
        .as_ref()
        .ok_or_else(|| usage("either --manifest or --mock is required"))?;
    Ok(load_backend(manifest)?)
}

fn embed(index_path: &Path, encoder: &EncoderArgs, out: &Path, seed: u64) -> Result<()> {
    let index = DatasetIndex::load(index_path)?;
    let backend = backend(encoder, seed)?;
    info!("embedding {} images with {}", index.len(), backend.name());
    let (cache, warnings) = embed_dataset(backend.as_ref(), &index)?;
    for w in &warnings {
        eprintln!("{w}");
    }
    cache.save(out)?;
    println!(
        "{} embeddings of dimension {} ({} train / {} test) from {}",
        cache.records.len(),
        cache.dim,
        cache.records_in(Split::Train).count(),
        cache.records_in(Split::Test).count(),
        cache.backend
    );
    Ok(())
}

fn finetune(args: &FinetuneArgs, mut hp: HyperParams, seed: u64) -> Result<()> {
    let overrides = [
        (&mut hp.learning_rate_initial, args.lr),
        (&mut hp.lr_min, args.lr_min),
        (&mut hp.weight_decay, args.weight_decay),
        (&mut hp.logit_scale, args.logit_scale),
    ];
    for (field, value) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    if let Some(e) = args.epochs {
        hp.epochs = e;
    }
    if let Some(b) = args.batch_size {
        hp.batch_size = b;
    }
    hp.validate().map_err(|e| usage(e.to_string()))?;

    let cache = EmbeddingCache::load(&args.cache)?;
    let prompt_file = args
        .prompts
        .as_ref()
        .map(|p| PromptEmbeddingFile::load(p))
        .transpose()?;
    let template = args
        .template
        .clone()
        .or_else(|| prompt_file.as_ref().map(|f| f.template.clone()))
        .unwrap_or_else(|| DEFAULT_TEMPLATE.to_string());
    let prompts = build_prompts(&cache.labels, &template)?;
    let source = match prompt_file {
        Some(file) => InitSource::PromptFile(file),
        None => InitSource::Random { seed },
    };
    let gallery = init_gallery(cache.labels.clone(), prompts, &source, cache.dim, hp.logit_scale)?;
    let train = TrainingSet::from_cache(&cache)?;
    info!("training {} classes on {} embeddings", gallery.num_classes(), train.len());
    let (gallery, history) = finetune_single_shot(&train, gallery, &hp, seed)?;
    save_gallery(&gallery, &args.out)?;
    let history_path = args.history.clone().unwrap_or_else(|| history_path(&args.out));
    history.save(&history_path)?;
    let last = history.steps.last().expect("at least one step");
    println!(
        "{} steps, final batch loss {:.4}, batch accuracy {:.2}%; gallery {}, history {}",
        history.steps.len(),
        last.loss,
        100.0 * last.batch_accuracy,
        args.out.display(),
        history_path.display()
    );
    Ok(())
}

fn history_path(gallery: &Path) -> PathBuf {
    let mut name = gallery.file_stem().unwrap_or_default().to_os_string();
    name.push(".history.csv");
    gallery.with_file_name(name)
}

fn evaluate(args: &EvaluateArgs, hp: &HyperParams, seed: u64) -> Result<()> {
    let threshold = args.threshold.unwrap_or(hp.confidence_threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage(format!("--threshold {threshold} is not in (0, 1)")));
    }
    let gallery = load_gallery(&args.gallery)?;
    let backend = backend(&args.encoder, seed)?;
    let specs = load_session_specs(&args.sessions, &gallery)?;
    let (sessions, warnings) = embed_sessions(&specs, backend.as_ref(), &gallery)?;
    for w in &warnings {
        eprintln!("{w}");
    }
    let training = match &args.cache {
        Some(path) => {
            let cache = EmbeddingCache::load(path)?;
            let (test, labels) = cache.matrix(Some(Split::Test))?;
            Some(training_accuracy(&test, &labels, &gallery)?)
        }
        None => None,
    };
    let (counts, results) = score_sessions(&sessions, &gallery, threshold)?;
    let report = EvaluationReport {
        model: args.model.clone().unwrap_or_else(|| backend.name().to_string()),
        counts,
        training_accuracy: training,
        threshold,
        sessions: results,
    };
    print!("{}", report.render_sessions(&gallery));
    println!(
        "TP={} TN={} FP={} FN={}",
        counts.tp, counts.tn, counts.fp, counts.fn_
    );
    print!("{}", render_table(std::slice::from_ref(&report)));
    fs::write(&args.out, render_csv(std::slice::from_ref(&report))?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn diagnose(cache: &Path) -> Result<()> {
    let cache = EmbeddingCache::load(cache)?;
    print!("{}", pairwise_cosine_stats(&cache)?);
    Ok(())
}

fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut reports = Vec::new();
    for path in inputs {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        reports.extend(parse_csv(file).with_context(|| path.display().to_string())?);
    }
    if reports.is_empty() {
        return Err(Error::EmptyDataset("no report rows".into()).into());
    }
    print!("{}", render_table(&reports));
    if let Some(out) = out {
        fs::write(out, render_csv(&reports)?)?;
    }
    Ok(())
}

fn predict_one(image: &Path, gallery: &Path, encoder: &EncoderArgs, threshold: f64, seed: u64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage(format!("--threshold {threshold} is not in (0, 1)")));
    }
    let gallery = load_gallery(gallery)?;
    let backend = backend(encoder, seed)?;
    let (face, warning) = load_face(image, Subject::Unknown)?;
    if let Some(w) = warning {
        eprintln!("{w}");
    }
    let emb = embed_image(backend.as_ref(), &face)?;
    let decision = predict(&emb, &gallery, threshold)?;
    println!("{}", decision.render_line(&gallery));
    Ok(())
}
