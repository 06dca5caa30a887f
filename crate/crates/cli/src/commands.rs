use std::io::{self, BufReader, Write};
use std::path::Path;

use limescope::bridge::protocol::serve;
use limescope::bridge::{BuildContext, ClassifierHandle, ModelConfig};
use limescope::dataset::{
    class_histogram, dataset_from_manifest, ingest_gtsrb, read_manifest, stratified_split,
    write_manifest, SplitName, SplitSpec,
};
use limescope::metrics::{argmax, evaluate_model, EvalOptions};
use limescope::pipeline::{
    explain_batch, prepare_image, stability_run, write_json, BatchConfig, ClassChoice,
    ExplainTarget,
};
use limescope::surrogate::{Baseline, SurrogateConfig};
use limescope::{load_image, resize, slic_segment, Image, Segmentation, SlicParams};

use crate::args::{
    BaselineArg, EvaluateArgs, ExplainArgs, ModelArgs, ServeArgs, SplitArgs, StabilityArgs,
    SurrogateArgs,
};
use crate::settings::{resolve_model, FileConfig};
use crate::CliError;

pub fn parse_ratios(text: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--ratios expects three numbers, got '{text}'")))?;
    parts
        .try_into()
        .map_err(|_| CliError::Usage(format!("--ratios expects three numbers, got '{text}'")))
}

/// `HxW`, or `auto` for no fixed size.
pub fn parse_size(text: &str) -> Result<Option<(usize, usize)>, CliError> {
    if text == "auto" {
        return Ok(None);
    }
    let bad = || CliError::Usage(format!("--input-size expects HxW or auto, got '{text}'"));
    let (h, w) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let (h, w) = (
        h.trim().parse().map_err(|_| bad())?,
        w.trim().parse().map_err(|_| bad())?,
    );
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok(Some((h, w)))
}

pub fn parse_class(text: &str) -> Result<ClassChoice, CliError> {
    match text {
        "predicted" => Ok(ClassChoice::Predicted),
        "true" => Ok(ClassChoice::True),
        other => other.parse().map(ClassChoice::Index).map_err(|_| {
            CliError::Usage(format!(
                "--class expects predicted, true or an index, got '{other}'"
            ))
        }),
    }
}

fn parse_split(text: &str) -> Result<SplitName, CliError> {
    text.parse()
        .map_err(|_| CliError::Usage(format!("--split expects train, val or test, got '{text}'")))
}

pub fn cmd_split(args: &SplitArgs) -> Result<(), CliError> {
    let spec = SplitSpec {
        ratios: parse_ratios(&args.ratios)?,
        seed: args.seed,
        stratified: true,
    };
    spec.validate().map_err(CliError::from)?;
    let dataset = ingest_gtsrb(&args.root, Some(args.classes)).map_err(CliError::Ingest)?;
    let split = stratified_split(&dataset, &spec)?;
    write_manifest(&args.out, &split.manifest_rows())?;

    let totals = class_histogram(&dataset);
    let parts =
        [SplitName::Train, SplitName::Val, SplitName::Test].map(|s| class_histogram(split.get(s)));
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:>5}  {:>6}  {:>6}  {:>6}  {:>6}",
        "class", "total", "train", "val", "test"
    )?;
    for (class, &total) in totals.iter().enumerate().filter(|(_, &n)| n > 0) {
        writeln!(
            out,
            "{class:>5}  {total:>6}  {:>6}  {:>6}  {:>6}",
            parts[0][class], parts[1][class], parts[2][class]
        )?;
    }
    writeln!(
        out,
        "{:>5}  {:>6}  {:>6}  {:>6}  {:>6}",
        "all",
        dataset.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    )?;
    Ok(())
}

fn with_seed(model: ModelConfig, seed: Option<u64>) -> ModelConfig {
    match (model, seed) {
        (ModelConfig::Random { num_classes, .. }, Some(seed)) => {
            ModelConfig::Random { num_classes, seed }
        }
        (other, _) => other,
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, config: Option<&FileConfig>) -> Result<(), CliError> {
    let split = parse_split(&args.split)?;
    let resolution = parse_size(&args.model.input_size)?;
    let model = with_seed(
        resolve_model(args.model.model.as_deref(), config)?,
        args.seed,
    );
    let rows = read_manifest(&args.manifest)?;
    let dataset = dataset_from_manifest(&rows, Some(split), args.classes)?;
    let classifier = model.build(&BuildContext {
        instance: None,
        resolution,
    })?;
    let report = evaluate_model(
        &classifier,
        &dataset,
        &EvalOptions {
            batch_size: args.batch_size,
            resolution,
        },
    )?;
    print!("{}", report.to_table());
    for flag in &report.flags {
        eprintln!("note: {}", serde_json::to_string(flag)?);
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn surrogate_config(args: &SurrogateArgs) -> SurrogateConfig {
    SurrogateConfig {
        n_samples: args.samples,
        sigma: args.sigma,
        max_features: args.k,
        ridge_alpha: args.alpha,
        baseline: match args.baseline {
            BaselineArg::MeanColor => Baseline::MeanColor,
            BaselineArg::Gray => Baseline::Gray,
        },
        seed: args.seed,
    }
}

fn slic_params(args: &SurrogateArgs) -> SlicParams {
    SlicParams {
        target_segments: args.segments,
        compactness: args.compactness,
        ..SlicParams::default()
    }
}

/// A classifier plus, when the model is built around the image itself, the
/// prepared instance and its segmentation.
struct Instance {
    classifier: ClassifierHandle,
    image: Option<(Image, Segmentation)>,
}

/// Builds the classifier. Models that need the image being explained get it
/// loaded at `resolution` (or native size) and segmented with `slic`.
fn build_for_image(
    model: &ModelArgs,
    config: Option<&FileConfig>,
    image: Option<&Path>,
    slic: &SlicParams,
    seed: u64,
    model_seed: Option<u64>,
) -> Result<Instance, CliError> {
    let resolution = parse_size(&model.input_size)?;
    let cfg = with_seed(resolve_model(model.model.as_deref(), config)?, model_seed);
    if !matches!(cfg, ModelConfig::Planted { .. }) {
        let classifier = cfg.build(&BuildContext {
            instance: None,
            resolution,
        })?;
        return Ok(Instance {
            classifier,
            image: None,
        });
    }
    let path = image.ok_or_else(|| {
        CliError::Usage("this model is built around a single image; pass --image".into())
    })?;
    let img = load_image(path)?;
    let img = match resolution {
        Some((h, w)) => resize(&img, h, w)?,
        None => img,
    };
    let seg = slic_segment(&img, slic, seed)?;
    let classifier = cfg.build(&BuildContext {
        instance: Some((&img, &seg)),
        resolution,
    })?;
    Ok(Instance {
        classifier,
        image: Some((img, seg)),
    })
}

pub fn cmd_explain(args: &ExplainArgs, config: Option<&FileConfig>) -> Result<(), CliError> {
    let class = parse_class(&args.surrogate.class)?;
    let resolution = parse_size(&args.model.input_size)?;
    let batch = BatchConfig {
        surrogate: surrogate_config(&args.surrogate),
        slic: slic_params(&args.surrogate),
        class,
        top_k: args.top_k,
        resolution,
    };
    let targets: Vec<ExplainTarget> = match (&args.image, &args.manifest) {
        (Some(image), _) => vec![ExplainTarget {
            path: image.clone(),
            true_class: args.surrogate.label,
        }],
        (None, Some(manifest)) => {
            let rows = read_manifest(manifest)?;
            let dataset =
                dataset_from_manifest(&rows, Some(parse_split(&args.split)?), args.classes)?;
            let take = args.limit.unwrap_or(usize::MAX);
            dataset
                .items()
                .iter()
                .take(take)
                .map(ExplainTarget::from)
                .collect()
        }
        (None, None) => return Err(CliError::Usage("pass --image or --manifest".into())),
    };
    if targets.is_empty() {
        return Err(CliError::Usage("the selected split is empty".into()));
    }
    let instance = build_for_image(
        &args.model,
        config,
        args.image.as_deref(),
        &batch.slic,
        batch.surrogate.seed,
        None,
    )?;
    let classifier = &instance.classifier;
    if let ClassChoice::Index(k) = class {
        class
            .resolve(0, None, classifier.num_classes())
            .map_err(|_| {
                CliError::Usage(format!(
                    "--class {k} out of range for {} classes",
                    classifier.num_classes()
                ))
            })?;
    }

    let mut outcome = explain_batch(&targets, classifier, &batch, &args.out, args.jobs)?;
    let mut out = io::stdout().lock();
    for entry in &outcome.manifest.entries {
        match (&entry.outputs, &entry.error) {
            (Some(files), _) => writeln!(
                out,
                "{}  predicted={} target={}{}  {}",
                entry.path.display(),
                entry.predicted_class.unwrap_or_default(),
                entry.target_class.unwrap_or_default(),
                match entry.correct {
                    Some(true) => "  correct",
                    Some(false) => "  misclassified",
                    None => "",
                },
                args.out.join(&files.overlay_png).display()
            )?,
            (None, Some(err)) => writeln!(out, "{}  error: {err}", entry.path.display())?,
            (None, None) => {}
        }
    }
    if outcome.manifest.n_ok == 0 {
        let (_, first) = outcome.errors.remove(0);
        return Err(first.into());
    }
    Ok(())
}

pub fn cmd_stability(args: &StabilityArgs, config: Option<&FileConfig>) -> Result<(), CliError> {
    if args.runs < 2 {
        return Err(CliError::Usage(format!(
            "--runs must be at least 2, got {}",
            args.runs
        )));
    }
    if args.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    let class = parse_class(&args.surrogate.class)?;
    let cfg = surrogate_config(&args.surrogate);
    let slic = slic_params(&args.surrogate);
    let instance = build_for_image(
        &args.model,
        config,
        Some(&args.image),
        &slic,
        cfg.seed,
        None,
    )?;
    let classifier = &instance.classifier;
    let (img, seg) = match instance.image {
        Some(prepared) => prepared,
        None => {
            let resolution = parse_size(&args.model.input_size)?;
            let img = prepare_image(&args.image, classifier, resolution)?;
            let seg = slic_segment(&img, &slic, cfg.seed)?;
            (img, seg)
        }
    };
    let probs = classifier.predict_batch(std::slice::from_ref(&img))?;
    let predicted = argmax(&probs[0]);
    let target = class
        .resolve(predicted, args.surrogate.label, classifier.num_classes())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = stability_run(&img, classifier, &seg, target, &cfg, args.runs, args.top_k)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn cmd_serve(args: &ServeArgs, config: Option<&FileConfig>) -> Result<(), CliError> {
    let slic = SlicParams {
        target_segments: args.segments,
        ..SlicParams::default()
    };
    let instance = build_for_image(
        &args.model,
        config,
        args.image.as_deref(),
        &slic,
        0,
        args.seed,
    )?;
    serve(
        BufReader::new(io::stdin().lock()),
        io::stdout().lock(),
        &instance.classifier,
    )?;
    Ok(())
}
