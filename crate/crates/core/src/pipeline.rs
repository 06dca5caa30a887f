//! Repeated-run stability, overlay rendering and batch explanation.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::protocol::hex;
use crate::bridge::ClassifierHandle;
use crate::dataset::Item;
use crate::error::{Error, Result};
use crate::image::{load_image, resize, Image};
use crate::metrics::argmax;
use crate::segmentation::{slic_segment, Segmentation, SegmentationSidecar, SlicParams};
use crate::surrogate::{explain_instance, Explanation, SurrogateConfig};

/// Superpixels highlighted in overlays unless told otherwise.
pub const DEFAULT_TOP_K: usize = 5;
/// Explanation resolution (height, width) used unless configured otherwise.
pub const DEFAULT_RESOLUTION: (usize, usize) = (62, 62);

const GREEN: [f64; 3] = [0.0, 1.0, 0.0];
const RED: [f64; 3] = [1.0, 0.0, 0.0];
const YELLOW: [f64; 3] = [1.0, 1.0, 0.0];
const TINT: f64 = 0.5;

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n_runs: usize,
    pub top_k: usize,
    /// Pairs in order (0,1), (0,2), ..., (1,2), ...
    pub pairwise_jaccard: Vec<f64>,
    pub mean_jaccard: f64,
    /// Top-k segments of each run, sorted ascending.
    pub runs: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
    /// Every run saw a constant target probability.
    pub degenerate: bool,
}

/// Explains the same instance `n_runs` times with seeds `cfg.seed + i` and
/// compares the top-k sets of every pair of runs.
pub fn stability_run(
    img: &Image,
    classifier: &ClassifierHandle,
    seg: &Segmentation,
    target_class: usize,
    cfg: &SurrogateConfig,
    n_runs: usize,
    top_k: usize,
) -> Result<StabilityReport> {
    if n_runs < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 runs, got {n_runs}"
        )));
    }
    if top_k == 0 {
        return Err(Error::InvalidParam("top_k must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..n_runs as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let mut sets = Vec::with_capacity(n_runs);
    let mut degenerate = true;
    for &seed in &seeds {
        let run_cfg = SurrogateConfig { seed, ..*cfg };
        let exp = explain_instance(img, classifier, seg, target_class, &run_cfg)?;
        degenerate &= exp.degenerate;
        sets.push(
            exp.top(top_k)
                .iter()
                .map(|a| a.segment)
                .collect::<BTreeSet<_>>(),
        );
    }
    let mut pairwise = Vec::with_capacity(n_runs * (n_runs - 1) / 2);
    for i in 0..n_runs {
        for j in i + 1..n_runs {
            pairwise.push(jaccard(&sets[i], &sets[j]));
        }
    }
    Ok(StabilityReport {
        n_runs,
        top_k,
        mean_jaccard: pairwise.iter().sum::<f64>() / pairwise.len() as f64,
        pairwise_jaccard: pairwise,
        runs: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        seeds,
        degenerate,
    })
}

fn blend(px: [f64; 3], toward: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|c| (1.0 - TINT) * px[c] + TINT * toward[c])
}

/// Pixels whose right or lower neighbour carries a different label.
pub fn outline_pixels(seg: &Segmentation) -> Vec<usize> {
    let (h, w) = (seg.height(), seg.width());
    let labels = seg.labels();
    (0..h * w)
        .filter(|&i| {
            let (r, c) = (i / w, i % w);
            (c + 1 < w && labels[i] != labels[i + 1]) || (r + 1 < h && labels[i] != labels[i + w])
        })
        .collect()
}

/// Tints the top-k superpixels green (positive) or red (negative), then
/// draws segment outlines in yellow.
pub fn render_overlay(
    img: &Image,
    seg: &Segmentation,
    exp: &Explanation,
    top_k: usize,
) -> Result<Image> {
    if !seg.matches(img) {
        return Err(Error::SegmentationMismatch(format!(
            "segmentation is {}x{} but image is {}x{}",
            seg.height(),
            seg.width(),
            img.height(),
            img.width()
        )));
    }
    if exp.num_segments != seg.num_segments() {
        return Err(Error::SegmentationMismatch(format!(
            "explanation covers {} segments, segmentation has {}",
            exp.num_segments,
            seg.num_segments()
        )));
    }
    if let Some(a) = exp
        .features
        .iter()
        .find(|a| a.segment >= seg.num_segments())
    {
        return Err(Error::SegmentationMismatch(format!(
            "segment {} does not exist",
            a.segment
        )));
    }
    let mut tint: Vec<Option<[f64; 3]>> = vec![None; seg.num_segments()];
    for a in exp.top(top_k) {
        if a.weight > 0.0 {
            tint[a.segment] = Some(GREEN);
        } else if a.weight < 0.0 {
            tint[a.segment] = Some(RED);
        }
    }
    let mut out = img.clone();
    for (i, &label) in seg.labels().iter().enumerate() {
        if let Some(color) = tint[label as usize] {
            out.set_pixel_at(i, blend(img.pixel_at(i), color));
        }
    }
    for i in outline_pixels(seg) {
        out.set_pixel_at(i, YELLOW);
    }
    Ok(out)
}

/// Which class an explanation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassChoice {
    /// Argmax of the classifier on the unperturbed image.
    #[default]
    Predicted,
    /// Ground-truth label of the item.
    True,
    Index(usize),
}

impl ClassChoice {
    pub fn resolve(
        self,
        predicted: usize,
        truth: Option<usize>,
        num_classes: usize,
    ) -> Result<usize> {
        let class = match self {
            ClassChoice::Predicted => predicted,
            ClassChoice::True => truth.ok_or_else(|| {
                Error::InvalidParam("true class requested but no label is known".into())
            })?,
            ClassChoice::Index(k) => k,
        };
        if class >= num_classes {
            return Err(Error::InvalidParam(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        Ok(class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub surrogate: SurrogateConfig,
    pub slic: SlicParams,
    pub class: ClassChoice,
    pub top_k: usize,
    /// Images are resized to this before anything else. `None` uses the
    /// classifier's input size, then each image's own size.
    pub resolution: Option<(usize, usize)>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            surrogate: SurrogateConfig::default(),
            slic: SlicParams::default(),
            class: ClassChoice::Predicted,
            top_k: DEFAULT_TOP_K,
            resolution: Some(DEFAULT_RESOLUTION),
        }
    }
}

/// Files written for one explained image, relative to the output root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOutputs {
    pub segmentation_png: PathBuf,
    pub segmentation_json: PathBuf,
    pub explanation_json: PathBuf,
    pub overlay_png: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub true_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outputs: Option<ItemOutputs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub model_name: String,
    pub config: BatchConfig,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Sorted by input path.
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// An image to explain, with its label when known.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExplainTarget {
    pub path: PathBuf,
    pub true_class: Option<usize>,
}

impl From<&Item> for ExplainTarget {
    fn from(item: &Item) -> Self {
        Self {
            path: item.path.clone(),
            true_class: Some(item.class),
        }
    }
}

/// The written manifest plus the typed error behind each failed entry.
#[derive(Debug)]
pub struct BatchOutcome {
    pub manifest: BatchManifest,
    pub errors: Vec<(PathBuf, Error)>,
}

/// Output directory name for one image under one configuration.
pub fn content_hash(path: &Path, cfg: &BatchConfig) -> String {
    let mut h = Sha256::new();
    h.update(path.to_string_lossy().as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(cfg).expect("config serialises"));
    hex(&h.finalize()[..8])
}

/// Explains every item and writes per-image artifacts plus `manifest.json`
/// under `out_dir`. Per-item failures are recorded and do not stop the batch.
/// `jobs` bounds the worker pool; `0` uses one worker per core.
pub fn explain_batch(
    targets: &[ExplainTarget],
    classifier: &ClassifierHandle,
    cfg: &BatchConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<BatchOutcome> {
    if targets.is_empty() {
        return Err(Error::InvalidParam("nothing to explain".into()));
    }
    if cfg.top_k == 0 {
        return Err(Error::InvalidParam("top_k must be at least 1".into()));
    }
    cfg.surrogate.validate()?;
    if let ClassChoice::Index(k) = cfg.class {
        ClassChoice::Index(k).resolve(0, None, classifier.num_classes())?;
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParam(format!("cannot start worker pool: {e}")))?;
    let mut sorted: Vec<&ExplainTarget> = targets.iter().collect();
    sorted.sort();
    let results: Vec<Result<ManifestEntry>> = pool.install(|| {
        sorted
            .par_iter()
            .map(|t| explain_one(&t.path, t.true_class, classifier, cfg, out_dir))
            .collect()
    });

    let mut entries = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (target, result) in sorted.iter().zip(results) {
        match result {
            Ok(entry) => entries.push(entry),
            Err(e) => {
                entries.push(ManifestEntry {
                    path: target.path.clone(),
                    true_class: target.true_class,
                    hash: None,
                    predicted_class: None,
                    target_class: None,
                    correct: None,
                    outputs: None,
                    error: Some(e.to_string()),
                });
                errors.push((target.path.clone(), e));
            }
        }
    }
    let n_failed = errors.len();
    let manifest = BatchManifest {
        model_name: classifier.name().to_owned(),
        config: cfg.clone(),
        n_ok: entries.len() - n_failed,
        n_failed,
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(BatchOutcome { manifest, errors })
}

/// Loads an image and brings it to the explanation resolution.
pub fn prepare_image(
    path: &Path,
    classifier: &ClassifierHandle,
    resolution: Option<(usize, usize)>,
) -> Result<Image> {
    let img = load_image(path)?;
    match resolution.or(classifier.info().input_size) {
        Some((h, w)) if (h, w) != (img.height(), img.width()) => resize(&img, h, w),
        _ => Ok(img),
    }
}

/// Explains one image file and writes its artifacts.
pub fn explain_one(
    path: &Path,
    true_class: Option<usize>,
    classifier: &ClassifierHandle,
    cfg: &BatchConfig,
    out_dir: &Path,
) -> Result<ManifestEntry> {
    let img = prepare_image(path, classifier, cfg.resolution)?;
    let probs = classifier.predict_batch(std::slice::from_ref(&img))?;
    let predicted = argmax(&probs[0]);
    let target = cfg
        .class
        .resolve(predicted, true_class, classifier.num_classes())?;
    let seg = slic_segment(&img, &cfg.slic, cfg.surrogate.seed)?;
    let exp = explain_instance(&img, classifier, &seg, target, &cfg.surrogate)?;
    let overlay = render_overlay(&img, &seg, &exp, cfg.top_k)?;

    let hash = content_hash(path, cfg);
    let outputs = write_artifacts(out_dir, &hash, &seg, cfg, &exp, &overlay)?;
    Ok(ManifestEntry {
        path: path.to_path_buf(),
        true_class,
        hash: Some(hash),
        predicted_class: Some(predicted),
        target_class: Some(target),
        correct: true_class.map(|t| t == predicted),
        outputs: Some(outputs),
        error: None,
    })
}

fn write_artifacts(
    out_dir: &Path,
    hash: &str,
    seg: &Segmentation,
    cfg: &BatchConfig,
    exp: &Explanation,
    overlay: &Image,
) -> Result<ItemOutputs> {
    let rel = PathBuf::from(hash);
    let dir = out_dir.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let outputs = ItemOutputs {
        segmentation_png: rel.join("segmentation.png"),
        segmentation_json: rel.join("segmentation.json"),
        explanation_json: rel.join("explanation.json"),
        overlay_png: rel.join("overlay.png"),
    };
    seg.save_label_png(out_dir.join(&outputs.segmentation_png))?;
    let sidecar = SegmentationSidecar {
        num_segments: seg.num_segments(),
        height: seg.height(),
        width: seg.width(),
        parameters: cfg.slic,
        seed: cfg.surrogate.seed,
    };
    write_json(&out_dir.join(&outputs.segmentation_json), &sidecar)?;
    write_json(&out_dir.join(&outputs.explanation_json), exp)?;
    overlay.save_png(out_dir.join(&outputs.overlay_png))?;
    Ok(outputs)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
