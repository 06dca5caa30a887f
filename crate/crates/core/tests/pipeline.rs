use std::fs;
use std::path::{Path, PathBuf};

use limescope::bridge::reference::{make_mean_color_classifier, make_planted_oracle, Slope};
use limescope::bridge::ClassifierHandle;
use limescope::metrics::argmax;
use limescope::pipeline::{
    explain_batch, stability_run, BatchConfig, ClassChoice, ExplainTarget, MANIFEST_FILE,
};
use limescope::surrogate::{Baseline, SurrogateConfig};
use limescope::{slic_segment, Image, SlicParams};
use tempfile::TempDir;

fn striped(h: usize, w: usize, shift: usize) -> Image {
    let data = (0..h * w)
        .flat_map(|i| {
            let (r, c) = (i / w, i % w);
            let v = ((r / 4 + c / 4 + shift) % 3) as f64 / 2.0;
            [v, 1.0 - v, ((r * 13 + c * 7 + shift) % 17) as f64 / 16.0]
        })
        .collect();
    Image::new(h, w, data).unwrap()
}

fn small_config() -> BatchConfig {
    BatchConfig {
        surrogate: SurrogateConfig {
            n_samples: 120,
            baseline: Baseline::Gray,
            ..SurrogateConfig::default()
        },
        slic: SlicParams {
            target_segments: 6,
            ..SlicParams::default()
        },
        ..BatchConfig::default()
    }
}

/// Three images on disk, labelled with the mean-color classifier's own
/// predictions.
fn fixture(dir: &Path) -> (Vec<ExplainTarget>, ClassifierHandle) {
    let model = make_mean_color_classifier(
        vec![[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]],
        vec![0.0; 3],
    )
    .unwrap();
    let targets = (0..3)
        .map(|i| {
            let path = dir.join(format!("img{i}.png"));
            striped(16, 16, i).save_png(&path).unwrap();
            let probs = model
                .predict_batch(&[limescope::load_image(&path).unwrap()])
                .unwrap();
            ExplainTarget {
                path,
                true_class: Some(argmax(&probs[0])),
            }
        })
        .collect();
    (targets, model)
}

fn read_json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn batch_explains_every_image_and_records_files() {
    let dir = TempDir::new().unwrap();
    let (targets, oracle) = fixture(dir.path());
    let out = dir.path().join("out");
    let outcome = explain_batch(&targets, &oracle, &small_config(), &out, 2).unwrap();
    assert!(outcome.errors.is_empty());
    assert_eq!(outcome.manifest.n_ok, 3);

    let manifest = read_json(out.join(MANIFEST_FILE));
    let entries = manifest["entries"].as_array().unwrap();
    let paths: Vec<&str> = entries
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    for entry in entries {
        assert_eq!(entry["correct"], true);
        assert_eq!(entry["predicted_class"], entry["true_class"]);
        for file in entry["outputs"].as_object().unwrap().values() {
            assert!(out.join(file.as_str().unwrap()).is_file(), "{file}");
        }
        let exp = read_json(out.join(entry["outputs"]["explanation_json"].as_str().unwrap()));
        assert_eq!(exp["degenerate"], false);
        assert_eq!(exp["config"]["baseline"], "gray");
        assert_eq!(exp["config"]["n_samples"], 120);
    }
}

#[test]
fn unreadable_image_is_reported_not_fatal() {
    let dir = TempDir::new().unwrap();
    let (mut targets, oracle) = fixture(dir.path());
    let bad = dir.path().join("corrupt.png");
    fs::write(&bad, b"not a png").unwrap();
    targets.push(ExplainTarget {
        path: bad.clone(),
        true_class: Some(0),
    });
    let outcome = explain_batch(
        &targets,
        &oracle,
        &small_config(),
        &dir.path().join("out"),
        1,
    )
    .unwrap();
    assert_eq!(outcome.manifest.n_ok, 3);
    assert_eq!(outcome.manifest.n_failed, 1);
    assert_eq!(outcome.errors.len(), 1);
    assert_eq!(outcome.errors[0].0, bad);
    let entry = outcome
        .manifest
        .entries
        .iter()
        .find(|e| e.path == bad)
        .unwrap();
    assert!(entry.outputs.is_none() && entry.error.is_some());
}

#[test]
fn rerun_is_byte_identical_regardless_of_jobs() {
    let dir = TempDir::new().unwrap();
    let (targets, oracle) = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    explain_batch(&targets, &oracle, &small_config(), &a, 1).unwrap();
    explain_batch(&targets, &oracle, &small_config(), &b, 3).unwrap();
    let listing = |root: &Path| {
        let mut files: Vec<PathBuf> = walk(root)
            .into_iter()
            .map(|p| p.strip_prefix(root).unwrap().to_path_buf())
            .collect();
        files.sort();
        files
    };
    let files = listing(&a);
    assert_eq!(files, listing(&b));
    assert!(files.len() >= 13);
    for f in files {
        assert_eq!(
            fs::read(a.join(&f)).unwrap(),
            fs::read(b.join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

fn walk(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn explicit_class_out_of_range_is_rejected_up_front() {
    let dir = TempDir::new().unwrap();
    let (targets, oracle) = fixture(dir.path());
    let cfg = BatchConfig {
        class: ClassChoice::Index(9),
        ..small_config()
    };
    let out = dir.path().join("out");
    let err = explain_batch(&targets, &oracle, &cfg, &out, 1).unwrap_err();
    assert!(matches!(err, limescope::Error::InvalidParam(_)), "{err}");
    assert!(!out.join(MANIFEST_FILE).exists());
}

#[test]
fn planted_stability_is_one_and_recovers_the_segment() {
    let img = striped(24, 24, 0);
    let seg = slic_segment(
        &img,
        &SlicParams {
            target_segments: 9,
            ..SlicParams::default()
        },
        0,
    )
    .unwrap();
    let planted = seg.num_segments() / 2;
    let oracle =
        make_planted_oracle(&img, &seg, &[planted], 1, 3, 0.9, 0.1, Slope::Negative).unwrap();
    let cfg = SurrogateConfig {
        n_samples: 300,
        max_features: 1,
        ..SurrogateConfig::default()
    };
    let report = stability_run(&img, &oracle, &seg, 1, &cfg, 4, 1).unwrap();
    assert_eq!(report.mean_jaccard, 1.0);
    for run in &report.runs {
        assert_eq!(run, &vec![planted]);
    }
}
