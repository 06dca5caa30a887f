//! Labeled image collections: GTSRB ingestion, class histograms, and the
//! seeded stratified train/validation/test split.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of GTSRB sign classes.
pub const GTSRB_CLASSES: usize = 43;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Item {
    pub path: PathBuf,
    pub class: usize,
}

/// Image paths with class indices. Items are kept sorted by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    items: Vec<Item>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(mut items: Vec<Item>, num_classes: usize) -> Result<Self> {
        if let Some(item) = items.iter().find(|i| i.class >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: item.class,
                num_classes,
            });
        }
        items.sort();
        if let Some(dup) = items.windows(2).find(|w| w[0].path == w[1].path) {
            return Err(Error::InvalidParam(format!(
                "duplicate path {}",
                dup[0].path.display()
            )));
        }
        Ok(Self {
            items,
            num_classes,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    fn subset(&self, items: Vec<Item>) -> Self {
        let mut items = items;
        items.sort();
        Self {
            items,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }
}

/// Per-class item counts.
pub fn class_histogram(ds: &LabeledDataset) -> Vec<usize> {
    let mut counts = vec![0; ds.num_classes];
    for item in &ds.items {
        counts[item.class] += 1;
    }
    counts
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("png"))
}

/// Collects every labeled image under `root`.
///
/// Labels come from semicolon-delimited annotation files
/// (`Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId`, file names
/// relative to the annotation file) and, for images no annotation covers,
/// from a numeric parent directory name such as `00013`. Annotation files
/// without a `ClassId` column are ignored, as are images with no label
/// source. Training and test portions found under `root` are merged.
///
/// With `num_classes = None` the class count is one past the largest id.
pub fn ingest_gtsrb(root: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }

    let mut annotated: BTreeMap<PathBuf, (usize, PathBuf, u64)> = BTreeMap::new();
    let mut images = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let is_csv = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            read_annotations(path, &mut annotated)?;
        } else if is_image(path) {
            images.push(path.to_path_buf());
        }
    }

    let mut labeled: BTreeMap<PathBuf, (usize, PathBuf, u64)> = BTreeMap::new();
    for path in images {
        if annotated.contains_key(&path) {
            continue;
        }
        let dir_class = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(class) = dir_class {
            let dir = path.parent().unwrap_or(root).to_path_buf();
            labeled.insert(path, (class, dir, 0));
        }
    }
    for (path, entry) in annotated {
        if !path.is_file() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "annotated image missing"),
            ));
        }
        labeled.insert(path, entry);
    }

    let c = match num_classes {
        Some(c) => c,
        None => labeled.values().map(|(c, _, _)| c + 1).max().unwrap_or(0),
    };
    let mut items = Vec::with_capacity(labeled.len());
    for (path, (class, source, line)) in labeled {
        if class >= c {
            return Err(Error::UnknownClass {
                path: source,
                line,
                class_id: class,
                num_classes: c,
            });
        }
        items.push(Item { path, class });
    }
    LabeledDataset::new(items, c)
}

fn read_annotations(
    csv_path: &Path,
    out: &mut BTreeMap<PathBuf, (usize, PathBuf, u64)>,
) -> Result<()> {
    let malformed = |line: u64, reason: String| Error::MalformedCsv {
        path: csv_path.to_path_buf(),
        line,
        reason,
    };
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(file_col), Some(class_col)) = (column("Filename"), column("ClassId")) else {
        return Ok(());
    };
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let name = record
            .get(file_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed(line, "missing Filename".into()))?;
        let class = record
            .get(class_col)
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| malformed(line, "ClassId is not a non-negative integer".into()))?;
        out.insert(dir.join(name), (class, csv_path.to_path_buf(), line));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidParam(format!("unknown split {other:?}"))),
        }
    }
}

/// Train/validation/test proportions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.1, 0.2],
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidParam(format!(
                "split ratios must be non-negative, got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl Split {
    pub fn get(&self, name: SplitName) -> &LabeledDataset {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    /// Manifest rows for all three parts, sorted by path.
    pub fn manifest_rows(&self) -> Vec<ManifestRow> {
        let mut rows: Vec<ManifestRow> = [SplitName::Train, SplitName::Val, SplitName::Test]
            .into_iter()
            .flat_map(|name| {
                self.get(name).items().iter().map(move |item| ManifestRow {
                    path: item.path.clone(),
                    class: item.class,
                    split: name,
                })
            })
            .collect();
        rows.sort_by(|a, b| a.path.cmp(&b.path));
        rows
    }
}

/// Splits `n` items by `ratios`: floors first, then leftover items go to
/// the largest fractional parts, ties resolved train, val, test.
pub fn allocate_counts(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    let mut counts = exact.map(|e| (e + 1e-9).floor() as usize);
    let frac: Vec<f64> = exact
        .iter()
        .zip(&counts)
        .map(|(e, &c)| (e - c as f64).max(0.0))
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Seeded split into train/validation/test.
///
/// With stratification each class is handled independently: its items are
/// sorted by path, shuffled by a generator on the seed's per-class stream,
/// and cut according to [`allocate_counts`]. Without it the whole dataset is
/// treated as one class.
pub fn stratified_split(ds: &LabeledDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let groups: Vec<Vec<Item>> = if spec.stratified {
        let mut by_class = vec![Vec::new(); ds.num_classes];
        for item in &ds.items {
            by_class[item.class].push(item.clone());
        }
        if let Some(empty) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(empty));
        }
        by_class
    } else {
        vec![ds.items.clone()]
    };

    let mut parts: [Vec<Item>; 3] = Default::default();
    for (stream, mut items) in groups.into_iter().enumerate() {
        items.sort();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream as u64);
        items.shuffle(&mut rng);
        let counts = allocate_counts(items.len(), spec.ratios);
        let mut rest = items.into_iter();
        for (part, &count) in parts.iter_mut().zip(&counts) {
            part.extend(rest.by_ref().take(count));
        }
    }
    let [train, val, test] = parts;
    Ok(Split {
        train: ds.subset(train),
        val: ds.subset(val),
        test: ds.subset(test),
    })
}

/// One line of a split manifest (`path,class,split`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub class: usize,
    pub split: SplitName,
}

pub fn manifest_bytes(rows: &[ManifestRow]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::InvalidParam(format!("cannot encode manifest row: {e}")))?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::InvalidParam(format!("cannot flush manifest: {e}")))
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest_bytes(rows)?).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e: csv::Error| Error::MalformedCsv {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Rebuilds one part of a split from manifest rows.
pub fn dataset_from_manifest(
    rows: &[ManifestRow],
    split: Option<SplitName>,
    num_classes: usize,
) -> Result<LabeledDataset> {
    let items = rows
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .map(|r| Item {
            path: r.path.clone(),
            class: r.class,
        })
        .collect();
    LabeledDataset::new(items, num_classes)
}

/// Paths of a dataset, for partition checks.
pub fn path_set(ds: &LabeledDataset) -> HashSet<PathBuf> {
    ds.items.iter().map(|i| i.path.clone()).collect()
}
