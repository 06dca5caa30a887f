use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use limescope::bridge::StdioClassifier;
use limescope::{Image, Segmentation};
use tempfile::TempDir;

fn limescope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_limescope"))
        .args(args)
        .env_remove("LIMESCOPE_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Class-folder tree with `per_class` distinct solid-color images per class.
fn image_tree(root: &Path, classes: usize, per_class: usize) {
    for c in 0..classes {
        let dir = root.join(format!("{c:05}"));
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            let rgb = [c as f64 / classes as f64, i as f64 / per_class as f64, 0.5];
            Image::filled(8, 8, rgb)
                .unwrap()
                .save_png(dir.join(format!("{i:03}.png")))
                .unwrap();
        }
    }
}

fn textured(h: usize, w: usize) -> Image {
    let data = (0..h * w * 3)
        .map(|i| ((i * 7919) % 251) as f64 / 250.0)
        .collect();
    Image::new(h, w, data).unwrap()
}

#[test]
fn split_writes_manifest_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    image_tree(&dir.path().join("data"), 2, 3);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = limescope(&[
            "split",
            "--root",
            p(&dir.path().join("data")),
            "--classes",
            "2",
            "--seed",
            "5",
            "--out",
            p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("all"));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(text.lines().next(), Some("path,class,split"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn split_usage_and_io_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.csv");
    let o = limescope(&[
        "split",
        "--root",
        p(dir.path()),
        "--ratios",
        "0.5,0.5,0.5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = limescope(&[
        "split",
        "--root",
        p(dir.path()),
        "--ratios",
        "abc",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    let o = limescope(&[
        "split",
        "--root",
        p(&dir.path().join("missing")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 2);
    let o = limescope(&["split", "--bogus"]);
    assert_eq!(code(&o), 1);
}

/// Dataset, split manifest and a config defining a perfect label oracle.
fn oracle_setup(dir: &Path) -> (PathBuf, PathBuf) {
    image_tree(&dir.join("data"), 3, 5);
    let manifest = dir.join("split.csv");
    let o = limescope(&[
        "split",
        "--root",
        p(&dir.join("data")),
        "--classes",
        "3",
        "--out",
        p(&manifest),
    ]);
    assert_eq!(code(&o), 0);
    let config = dir.join("limescope.toml");
    fs::write(
        &config,
        "[models.oracle]\ntype = \"label_oracle\"\nmanifest = \"split.csv\"\nnum_classes = 3\n\n\
         [models.uniform]\ntype = \"constant\"\nnum_classes = 3\n\n\
         [models.broken]\ntype = \"process\"\ncommand = [\"false\"]\ntimeout_s = 5\n",
    )
    .unwrap();
    (manifest, config)
}

#[test]
fn evaluate_perfect_oracle_reports_ones() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = oracle_setup(dir.path());
    let report = dir.path().join("report.json");
    let o = limescope(&[
        "evaluate",
        "--config",
        p(&config),
        "--manifest",
        p(&manifest),
        "--classes",
        "3",
        "--model",
        "oracle",
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(
        row,
        [
            "label-oracle",
            "100.00",
            "1.0000",
            "1.0000",
            "1.0000",
            "1.0000",
            "1.0000"
        ]
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["accuracy_pct"], 100.0);
    assert_eq!(json["roc_auc"], 1.0);
    assert_eq!(json["flags"], serde_json::json!([]));
}

#[test]
fn evaluate_model_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = oracle_setup(dir.path());
    let base = [
        "evaluate",
        "--config",
        p(&config),
        "--manifest",
        p(&manifest),
        "--classes",
        "3",
    ];
    let with = |extra: &[&str]| limescope(&[&base[..], extra].concat());
    assert_eq!(code(&with(&["--model", "nope"])), 2);
    assert_eq!(code(&with(&[])), 2);
    assert_eq!(code(&with(&["--model", "broken"])), 4);
    let o = limescope(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--model",
        &format!("{}#uniform", p(&config)),
        "--classes",
        "4",
    ]);
    assert_eq!(code(&o), 3, "class count mismatch is a data error");
    let o = limescope(&[
        "evaluate",
        "--manifest",
        p(&manifest),
        "--model",
        &format!("{}#uniform", p(&config)),
        "--classes",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("precision_undefined"));
}

fn planted_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let image = dir.join("sign.png");
    textured(62, 62).save_png(&image).unwrap();
    let config = dir.join("planted.toml");
    fs::write(
        &config,
        "model = \"planted\"\n\n[defaults]\nsegments = 9\nsamples = 300\n\n\
         [models.planted]\ntype = \"planted\"\nplanted_segments = [0]\ntarget_class = 1\nnum_classes = 3\n",
    )
    .unwrap();
    (image, config)
}

#[test]
fn explain_planted_marks_planted_segment_green() {
    let dir = TempDir::new().unwrap();
    let (image, config) = planted_setup(dir.path());
    let out = dir.path().join("out");
    let o = limescope(&[
        "explain",
        "--config",
        p(&config),
        "--image",
        p(&image),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let entry = &manifest["entries"][0];
    assert_eq!(entry["predicted_class"], 1);
    let files = &entry["outputs"];
    let exp: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join(files["explanation_json"].as_str().unwrap())).unwrap(),
    )
    .unwrap();
    assert_eq!(exp["features"][0]["segment"], 0);
    assert!(exp["features"][0]["weight"].as_f64().unwrap() > 0.5);
    assert_eq!(exp["config"]["n_samples"], 300, "config default applied");
    assert_eq!(exp["config"]["sigma"], 0.25);
    assert_eq!(exp["config"]["max_features"], 5);

    let seg = Segmentation::load_label_png(out.join(files["segmentation_png"].as_str().unwrap()))
        .unwrap();
    let overlay = limescope::load_image(out.join(files["overlay_png"].as_str().unwrap())).unwrap();
    let original = limescope::load_image(&image).unwrap();
    let outline = limescope::pipeline::outline_pixels(&seg);
    assert_eq!((overlay.height(), overlay.width()), (62, 62));
    for i in (0..62 * 62).filter(|i| !outline.contains(i)) {
        let (got, src) = (overlay.pixel_at(i), original.pixel_at(i));
        if seg.labels()[i] == 0 {
            let want = [src[0] * 0.5, src[1] * 0.5 + 0.5, src[2] * 0.5];
            assert!(
                (0..3).all(|c| (got[c] - want[c]).abs() <= 1.0 / 255.0),
                "pixel {i}"
            );
        } else {
            assert_eq!(got, src, "pixel {i}");
        }
    }
}

#[test]
fn explain_flags_override_config_defaults() {
    let dir = TempDir::new().unwrap();
    let (image, config) = planted_setup(dir.path());
    let out = dir.path().join("out");
    let o = limescope(&[
        "explain",
        "--config",
        p(&config),
        "--image",
        p(&image),
        "--samples",
        "200",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["surrogate"]["n_samples"], 200);
    assert_eq!(manifest["config"]["slic"]["target_segments"], 9);
}

#[test]
fn explain_resolution_defaults_to_62_and_auto_keeps_native() {
    let dir = TempDir::new().unwrap();
    let image = dir.path().join("small.png");
    textured(20, 30).save_png(&image).unwrap();
    let config = dir.path().join("m.toml");
    fs::write(&config, "[models.c]\ntype = \"mean_color\"\nweights = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]\nbias = [0.0, 0.0]\n").unwrap();
    for (size, want) in [
        (None, (62, 62)),
        (Some("auto"), (20, 30)),
        (Some("16x40"), (16, 40)),
    ] {
        let out = dir.path().join(format!("out-{want:?}"));
        let mut args = vec![
            "explain",
            "--config",
            p(&config),
            "--model",
            "c",
            "--image",
            p(&image),
            "--samples",
            "60",
            "--segments",
            "6",
            "--out",
            p(&out),
        ];
        if let Some(size) = size {
            args.extend(["--input-size", size]);
        }
        let o = limescope(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        let seg_png = manifest["entries"][0]["outputs"]["segmentation_png"]
            .as_str()
            .unwrap();
        let seg = Segmentation::load_label_png(out.join(seg_png)).unwrap();
        assert_eq!((seg.height(), seg.width()), want);
    }
    let o = limescope(&[
        "explain",
        "--config",
        p(&config),
        "--model",
        "c",
        "--image",
        p(&image),
        "--input-size",
        "0x4",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn explain_class_out_of_range_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let (image, config) = planted_setup(dir.path());
    let o = limescope(&[
        "explain",
        "--config",
        p(&config),
        "--image",
        p(&image),
        "--class",
        "7",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 1);
    let o = limescope(&[
        "explain",
        "--config",
        p(&config),
        "--image",
        p(&image),
        "--class",
        "maybe",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn explain_manifest_collects_item_errors_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (manifest, config) = oracle_setup(dir.path());
    let rows: Vec<String> = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let test_rows: Vec<&String> = rows.iter().filter(|r| r.ends_with(",test")).collect();
    assert_eq!(test_rows.len(), 3);
    // Corrupt one test image after the oracle has been configured from the manifest.
    let broken = dir.path().join("subset.csv");
    let mut text = String::from("path,class,split\n");
    for r in &test_rows {
        text.push_str(r);
        text.push('\n');
    }
    text.push_str(&format!("{},0,test\n", p(&dir.path().join("missing.png"))));
    fs::write(&broken, text).unwrap();

    let run = |out: &Path| {
        limescope(&[
            "explain",
            "--config",
            p(&config),
            "--model",
            "oracle",
            "--manifest",
            p(&broken),
            "--classes",
            "3",
            "--segments",
            "4",
            "--samples",
            "50",
            "--jobs",
            "2",
            "--out",
            p(out),
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run(&a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(run(&b).status.code(), Some(0));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_ok"], 3);
    assert_eq!(manifest["n_failed"], 1);
    for entry in manifest["entries"].as_array().unwrap() {
        if let Some(files) = entry.get("outputs") {
            assert_eq!(entry["correct"], true);
            for key in [
                "segmentation_png",
                "segmentation_json",
                "explanation_json",
                "overlay_png",
            ] {
                let rel = files[key].as_str().unwrap();
                assert!(a.join(rel).is_file(), "{rel}");
                if rel.ends_with(".json") {
                    assert_eq!(
                        fs::read(a.join(rel)).unwrap(),
                        fs::read(b.join(rel)).unwrap()
                    );
                }
            }
        } else {
            assert!(entry["error"].as_str().unwrap().contains("missing.png"));
        }
    }
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn stability_on_planted_oracle_is_perfect() {
    let dir = TempDir::new().unwrap();
    let (image, config) = planted_setup(dir.path());
    let out = dir.path().join("stability.json");
    let o = limescope(&[
        "stability",
        "--config",
        p(&config),
        "--image",
        p(&image),
        "--runs",
        "4",
        "--top-k",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["mean_jaccard"], 1.0);
    let keys: Vec<&str> = report
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    let mut expected = [
        "n_runs",
        "top_k",
        "pairwise_jaccard",
        "mean_jaccard",
        "runs",
        "seeds",
        "degenerate",
    ];
    expected.sort();
    assert_eq!(keys, expected);
    assert_eq!(report["pairwise_jaccard"].as_array().unwrap().len(), 6);

    let o = limescope(&[
        "stability",
        "--config",
        p(&config),
        "--image",
        p(&image),
        "--runs",
        "1",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn serve_speaks_the_line_protocol() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("serve.toml");
    fs::write(
        &config,
        "[models.c]\ntype = \"constant\"\nnum_classes = 4\n",
    )
    .unwrap();
    let command: Vec<String> = [
        env!("CARGO_BIN_EXE_limescope"),
        "serve",
        "--config",
        p(&config),
        "--model",
        "c",
    ]
    .map(String::from)
    .to_vec();
    let (client, hello) = StdioClassifier::spawn(&command, Duration::from_secs(10)).unwrap();
    assert_eq!(hello.num_classes, 4);
    let images = [
        textured(3, 5),
        Image::filled(2, 2, [0.0, 1.0, 0.0]).unwrap(),
    ];
    let sums = client.checksums(&images).unwrap();
    assert_eq!(sums.len(), 2);
    assert_ne!(sums[0], sums[1]);
    let handle = client.into_handle(hello, false).unwrap();
    let rows = handle.predict_batch(&images).unwrap();
    assert_eq!(rows, vec![vec![0.25; 4]; 2]);
}

fn check_snapshot(name: &str, args: &[&str]) {
    let o = limescope(args);
    assert_eq!(code(&o), 0);
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/snapshots")
        .join(format!("{name}.txt"));
    let got = stdout(&o);
    if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &got).unwrap();
    }
    let want = fs::read_to_string(&path).unwrap_or_default();
    assert_eq!(
        got, want,
        "help for {name} changed; rerun with UPDATE_SNAPSHOTS=1 to accept"
    );
}

#[test]
fn help_snapshots() {
    check_snapshot("main", &["--help"]);
    for cmd in ["split", "evaluate", "explain", "stability", "serve"] {
        check_snapshot(cmd, &[cmd, "--help"]);
    }
}
