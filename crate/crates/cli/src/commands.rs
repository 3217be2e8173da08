use std::fs;
use std::path::{Path, PathBuf};

use promptvid::ablation::{run_ablation, Axis};
use promptvid::config::{ExperimentConfig, FreezeConfig, ViewSet};
use promptvid::data::{generate_synthetic, DatasetManifest, LabelVocabulary, Split, SyntheticSpec};
use promptvid::inference::{evaluate, few_shot, format_predictions, mean_average_precision, zero_shot, Evaluation};
use promptvid::model::Model;
use promptvid::text::{parse_templates, TextPrompt};
use promptvid::train::{fit, Checkpoint};
use promptvid::vision::VisualPromptKind;
use promptvid::{Error, Result};

use crate::run_dir::{self, RunDir};
use crate::{AblateArgs, EvalArgs, ExperimentArgs, FewshotArgs, Freeze, GenDataArgs, TrainArgs, ZeroshotArgs};

/// Reads a user-supplied input file; a missing file is a configuration
/// problem rather than a data problem.
fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&read_input(path)?).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut spec = SyntheticSpec::from_toml(&read_input(&args.spec)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let manifest = generate_synthetic(&spec, &args.out)?;
    println!(
        "wrote {} clips ({} train, {} val) over {} classes to {}",
        manifest.len(),
        manifest.split(Split::Train).len(),
        manifest.split(Split::Val).len(),
        manifest.vocab.len(),
        args.out.display()
    );
    Ok(())
}

/// Config file (or defaults) with command-line overrides applied.
fn resolve(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(data) = &args.data {
        cfg.paths.data = Some(data.clone());
    }
    if let Some(name) = &args.visual_prompt {
        cfg.model.visual_prompt = VisualPromptKind::parse(name)
            .ok_or_else(|| Error::Config(format!("unknown visual prompt {name:?}")))?;
    }
    if args.no_text_prompt {
        cfg.prompt.text_prompt = false;
    }
    if let Some(freeze) = args.freeze {
        cfg.freeze = match freeze {
            Freeze::Text => FreezeConfig { text: true, vision: false },
            Freeze::Vision => FreezeConfig { text: false, vision: true },
            Freeze::Both => FreezeConfig { text: true, vision: true },
        };
    }
    if args.unimodal_baseline {
        cfg.model.unimodal = true;
    }
    match args.init.as_deref() {
        None => {}
        Some("random") => cfg.paths.init = None,
        Some(path) => cfg.paths.init = Some(PathBuf::from(path)),
    }
    if let Some(epochs) = args.epochs {
        cfg.optimizer.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        cfg.optimizer.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let path = cfg
        .paths
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given (use --data or paths.data)".into()))?;
    DatasetManifest::load(path)
}

fn load_init(cfg: &ExperimentConfig) -> Result<Option<Checkpoint>> {
    cfg.paths.init.as_deref().map(Checkpoint::load).transpose()
}

fn model_from(cfg: &ExperimentConfig, ckpt: &Checkpoint, classes: usize) -> Result<Model> {
    if ckpt.config_hash != cfg.model_hash() {
        log::warn!("checkpoint was written under a different model configuration");
    }
    let (model, report) = Model::from_checkpoint(&cfg.model, ckpt, classes, cfg.optimizer.seed)?;
    if !report.missing.is_empty() {
        log::warn!("checkpoint lacks {} tensors: {}", report.missing.len(), report.missing.join(", "));
    }
    Ok(model)
}

fn report(eval: &Evaluation) -> Result<String> {
    let mut line = format!("top1 {:.2}%  top5 {:.2}%", 100.0 * eval.top1, 100.0 * eval.top5);
    if eval.records.iter().any(|r| r.truth.len() > 1) {
        line.push_str(&format!("  mAP {:.2}%", 100.0 * mean_average_precision(&eval.records)?));
    }
    Ok(line)
}

/// Evaluates `ckpt` on the validation split and writes the predictions.
fn eval_into(run: &RunDir, cfg: &ExperimentConfig, ckpt: &Checkpoint, views: &ViewSet, step: u64) -> Result<()> {
    let manifest = load_data(cfg)?;
    let model = model_from(cfg, ckpt, manifest.vocab.len())?;
    let val = manifest.load_split(Split::Val)?;
    let eval = evaluate(&model, &val, &manifest.vocab, &cfg.prompt.text_prompt()?, views, cfg.input)?;
    run.write(run_dir::PREDICTIONS, format_predictions(&eval.records))?;
    let metrics = run.path(run_dir::METRICS);
    let mut log = fs::read_to_string(&metrics).unwrap_or_default();
    log.push_str(&format!("{step}\teval\ttop1\t{}\n{step}\teval\ttop5\t{}\n", eval.top1, eval.top5));
    run.write(run_dir::METRICS, log)?;
    println!("{}", report(&eval)?);
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve(&args.exp)?;
    let manifest = load_data(&cfg)?;
    let init = load_init(&cfg)?;
    let run = RunDir::open(&args.out)?;
    run.write(run_dir::CONFIG, cfg.to_toml())?;
    let result = fit(&manifest, &cfg, init.as_ref())?;
    run.write(run_dir::METRICS, result.metrics.to_text())?;
    result.best.save(&run.path(run_dir::BEST))?;
    result
        .model
        .to_checkpoint(result.steps as u64, &cfg.model_hash())
        .save(&run.path(run_dir::LAST))?;
    println!("trained {} steps; best checkpoint at step {}", result.steps, result.best.step);
    eval_into(&run, &cfg, &result.best, &cfg.eval, result.best.step)
}

/// Run configuration with an optional dataset override.
fn run_config(run: &Path, data: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&run.join(run_dir::CONFIG))?;
    if let Some(data) = data {
        cfg.paths.data = Some(data.clone());
    }
    Ok(cfg)
}

fn run_checkpoint(run: &Path, explicit: Option<&PathBuf>) -> Result<Checkpoint> {
    Checkpoint::load(&explicit.cloned().unwrap_or_else(|| run.join(run_dir::BEST)))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let cfg = run_config(&args.run, args.data.as_ref())?;
    let ckpt = run_checkpoint(&args.run, args.checkpoint.as_ref())?;
    let run = RunDir::open(&args.run)?;
    let views = if args.single_view { ViewSet::single() } else { cfg.eval };
    eval_into(&run, &cfg, &ckpt, &views, ckpt.step)
}

pub fn zeroshot(args: &ZeroshotArgs) -> Result<()> {
    let cfg = run_config(&args.run, args.data.as_ref())?;
    let ckpt = run_checkpoint(&args.run, args.checkpoint.as_ref())?;
    let vocab = LabelVocabulary::parse_lines(&read_input(&args.vocab)?)?;
    let templates = match &args.templates {
        Some(path) => parse_templates(&read_input(path)?)?,
        None => match cfg.prompt.text_prompt()? {
            TextPrompt::Templates(t) => t,
            TextPrompt::LabelOnly => Vec::new(),
        },
    };
    let manifest = load_data(&cfg)?;
    let run = RunDir::open(&args.run)?;
    let model = model_from(&cfg, &ckpt, manifest.vocab.len())?;
    let clips = manifest.load_split(Split::Val)?;
    let report = zero_shot(&model, &clips, &manifest.vocab, &vocab, &templates, &cfg.eval, cfg.input)?;
    run.write(run_dir::ZEROSHOT, format_predictions(&report.records))?;
    match report.accuracy {
        Some(acc) => println!(
            "zero-shot top1 {:.2}% on {} clips (95% interval {:.1}%..{:.1}%)",
            100.0 * acc,
            report.evaluated,
            100.0 * report.interval.0,
            100.0 * report.interval.1
        ),
        None => println!("no clip carries a label from the new vocabulary; predictions written without accuracy"),
    }
    Ok(())
}

pub fn fewshot(args: &FewshotArgs) -> Result<()> {
    let cfg = resolve(&args.exp)?;
    let manifest = load_data(&cfg)?;
    let init = load_init(&cfg)?;
    let run = RunDir::open(&args.out)?;
    run.write(run_dir::CONFIG, cfg.to_toml())?;
    let result = few_shot(init.as_ref(), args.k, &manifest, &cfg)?;
    run.write(&format!("fewshot-k{}.tsv", args.k), format_predictions(&result.evaluation.records))?;
    println!("{}-shot ({} clips): {}", result.k, result.train_clips, report(&result.evaluation)?);
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let axis: Axis = args.axis.parse()?;
    let cfg = resolve(&args.exp)?;
    let manifest = load_data(&cfg)?;
    let init = load_init(&cfg)?;
    let run = RunDir::open(&args.out)?;
    run.write(run_dir::CONFIG, cfg.to_toml())?;
    let table = run_ablation(axis, &manifest, &cfg, init.as_ref())?;
    let tsv = table.to_tsv();
    run.write(&format!("ablation-{}.tsv", axis.name()), &tsv)?;
    print!("{tsv}");
    Ok(())
}
