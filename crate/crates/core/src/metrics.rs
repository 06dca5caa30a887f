//! Classification metrics and evaluation reports.
//!
//! Undefined quantities (a class never predicted, a constant marginal, a
//! class with no negatives) never abort a report; they contribute 0 or are
//! excluded and leave a [`MetricFlag`] behind.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{ClassifierHandle, ROW_SUM_TOLERANCE};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::{load_image, resize, Image};

/// Counts indexed by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidParam("need at least one class".into()));
        }
        Ok(Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            class_names: None,
        })
    }

    /// Square nested rows, `rows[true][predicted]`.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::DimensionMismatch(
                "confusion matrix must be square".into(),
            ));
        }
        let mut cm = Self::zeros(c)?;
        cm.counts = rows.concat();
        Ok(cm)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|k| self.get(k, k)).sum()
    }

    /// Samples per true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.num_classes)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Samples per predicted class.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.num_classes)
            .map(|p| (0..self.num_classes).map(|t| self.get(t, p)).sum())
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.num_classes)
            .map(<[u64]>::to_vec)
            .collect()
    }

    fn nonempty(&self) -> Result<u64> {
        match self.total() {
            0 => Err(Error::EmptyMatrix),
            n => Ok(n),
        }
    }
}

pub fn confusion(
    true_labels: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes)?;
    for (&t, &p) in true_labels.iter().zip(predicted) {
        for label in [t, p] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
        }
        cm.counts[t * num_classes + p] += 1;
    }
    Ok(cm)
}

/// Why a reported number is not a plain average over every class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricFlag {
    /// Class never predicted; its precision counted as 0.
    PrecisionUndefined { class: usize },
    /// Class absent from the ground truth; its recall counted as 0.
    RecallUndefined { class: usize },
    /// Predictions or truth are constant; MCC reported as 0.
    MccUndefined,
    /// Class lacks positives or negatives; left out of the ROC-AUC mean.
    AucClassExcluded { class: usize },
    /// No class could be scored; ROC-AUC omitted.
    AucUndefined,
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.nonempty()?;
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassScores>,
    pub flags: Vec<MetricFlag>,
}

/// Unweighted class means of precision, recall and their harmonic mean.
pub fn macro_precision_recall_f1(cm: &ConfusionMatrix) -> Result<MacroScores> {
    cm.nonempty()?;
    let (rows, cols) = (cm.row_sums(), cm.col_sums());
    let mut flags = Vec::new();
    let per_class: Vec<ClassScores> = (0..cm.num_classes())
        .map(|k| {
            let tp = cm.get(k, k) as f64;
            let precision = if cols[k] == 0 {
                flags.push(MetricFlag::PrecisionUndefined { class: k });
                0.0
            } else {
                tp / cols[k] as f64
            };
            let recall = if rows[k] == 0 {
                flags.push(MetricFlag::RecallUndefined { class: k });
                0.0
            } else {
                tp / rows[k] as f64
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let n = per_class.len() as f64;
    Ok(MacroScores {
        precision: per_class.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: per_class.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: per_class.iter().map(|s| s.f1).sum::<f64>() / n,
        per_class,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mcc {
    pub value: f64,
    /// True when a variance factor vanished and `value` was set to 0.
    pub undefined: bool,
}

/// Multiclass Matthews correlation from trace, total and marginals.
pub fn mcc(cm: &ConfusionMatrix) -> Result<Mcc> {
    let s = cm.nonempty()? as f64;
    let c = cm.trace() as f64;
    let t: Vec<f64> = cm.row_sums().into_iter().map(|v| v as f64).collect();
    let p: Vec<f64> = cm.col_sums().into_iter().map(|v| v as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|a| a * a).sum();
    let (vp, vt) = (s * s - pp, s * s - tt);
    if vp == 0.0 || vt == 0.0 {
        return Ok(Mcc {
            value: 0.0,
            undefined: true,
        });
    }
    Ok(Mcc {
        value: ((c * s - pt) / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0),
        undefined: false,
    })
}

/// Per-sample class probabilities with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    num_classes: usize,
    probs: Vec<Vec<f64>>,
    true_labels: Vec<usize>,
}

impl ScoreMatrix {
    pub fn new(probs: Vec<Vec<f64>>, true_labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if probs.len() != true_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} score rows but {} labels",
                probs.len(),
                true_labels.len()
            )));
        }
        for (row, (scores, &label)) in probs.iter().zip(&true_labels).enumerate() {
            if scores.len() != num_classes {
                return Err(Error::DimensionMismatch(format!(
                    "row {row} has {} scores for {num_classes} classes",
                    scores.len()
                )));
            }
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
            let sum: f64 = scores.iter().sum();
            if scores.iter().any(|v| !v.is_finite()) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Normalization { row, sum });
            }
        }
        Ok(Self {
            num_classes,
            probs,
            true_labels,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    /// Index of the largest score per row; ties resolve to the lower class.
    pub fn argmax(&self) -> Vec<usize> {
        self.probs.iter().map(|row| argmax(row)).collect()
    }
}

/// Index of the largest entry; ties resolve to the lower index.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > row[best] { k } else { best })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` without both positives and negatives.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Rank-sum form: U = sum of positive midranks - n_pos (n_pos + 1) / 2.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucScores {
    pub macro_auc: f64,
    /// `None` for excluded classes.
    pub per_class: Vec<Option<f64>>,
    pub flags: Vec<MetricFlag>,
}

/// One-vs-rest ROC-AUC averaged over classes that have both positives and
/// negatives.
pub fn roc_auc_ovr_macro(scores: &ScoreMatrix) -> Result<AucScores> {
    let per_class: Vec<Option<f64>> = (0..scores.num_classes)
        .map(|k| {
            let column: Vec<f64> = scores.probs.iter().map(|row| row[k]).collect();
            let positive: Vec<bool> = scores.true_labels.iter().map(|&t| t == k).collect();
            binary_auc(&column, &positive)
        })
        .collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::NoValidClass);
    }
    let flags = per_class
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_none())
        .map(|(class, _)| MetricFlag::AucClassExcluded { class })
        .collect();
    Ok(AucScores {
        macro_auc: included.iter().sum::<f64>() / included.len() as f64,
        per_class,
        flags,
    })
}

/// One row of the evaluation table.
///
/// Field order follows the published table columns. Values are stored at
/// full precision; rounding happens only in [`Report::to_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model_name: String,
    pub n_samples: usize,
    pub accuracy_pct: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// `None` when no class has both positives and negatives.
    pub roc_auc: Option<f64>,
    pub flags: Vec<MetricFlag>,
}

/// Column headers of the text table, in order.
pub const TABLE_HEADERS: [&str; 7] = [
    "Model",
    "Accuracy (%)",
    "Precision",
    "Recall",
    "F1-Score",
    "MCC-Score",
    "ROC-AUC Score",
];

impl Report {
    pub fn from_scores(model_name: &str, scores: &ScoreMatrix) -> Result<Self> {
        let cm = confusion(scores.true_labels(), &scores.argmax(), scores.num_classes())?;
        let prf = macro_precision_recall_f1(&cm)?;
        let m = mcc(&cm)?;
        let mut flags = prf.flags;
        if m.undefined {
            flags.push(MetricFlag::MccUndefined);
        }
        let roc_auc = match roc_auc_ovr_macro(scores) {
            Ok(auc) => {
                flags.extend(auc.flags);
                Some(auc.macro_auc)
            }
            Err(Error::NoValidClass) => {
                flags.push(MetricFlag::AucUndefined);
                None
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            model_name: model_name.to_owned(),
            n_samples: scores.len(),
            accuracy_pct: 100.0 * accuracy(&cm)?,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            mcc: m.value,
            roc_auc,
            flags,
        })
    }

    /// Cells as printed: accuracy with 2 decimals, the rest with 4.
    pub fn table_cells(&self) -> [String; 7] {
        [
            self.model_name.clone(),
            format!("{:.2}", self.accuracy_pct),
            format!("{:.4}", self.precision),
            format!("{:.4}", self.recall),
            format!("{:.4}", self.f1),
            format!("{:.4}", self.mcc),
            self.roc_auc
                .map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}")),
        ]
    }

    pub fn to_table(&self) -> String {
        render_table(std::slice::from_ref(self))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aligned text table with one row per report.
pub fn render_table(reports: &[Report]) -> String {
    let rows: Vec<[String; 7]> = reports.iter().map(Report::table_cells).collect();
    let widths: Vec<usize> = (0..7)
        .map(|j| {
            rows.iter()
                .map(|r| r[j].len())
                .chain([TABLE_HEADERS[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = format!("{:<w$}", cells[0], w = widths[0]);
        for j in 1..7 {
            let _ = write!(s, "  {:>w$}", cells[j], w = widths[j]);
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(TABLE_HEADERS.to_vec());
    for r in &rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Size images are resized to; defaults to the classifier's input size.
    pub resolution: Option<(usize, usize)>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            resolution: None,
        }
    }
}

/// Scores every item of `dataset` and returns the raw score matrix.
pub fn score_dataset(
    classifier: &ClassifierHandle,
    dataset: &LabeledDataset,
    opts: &EvalOptions,
) -> Result<ScoreMatrix> {
    if dataset.is_empty() {
        return Err(Error::InvalidParam(
            "cannot evaluate an empty dataset".into(),
        ));
    }
    if classifier.num_classes() != dataset.num_classes() {
        return Err(Error::ClassCountMismatch {
            classifier: classifier.num_classes(),
            dataset: dataset.num_classes(),
        });
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidParam("batch_size must be at least 1".into()));
    }
    let resolution = opts.resolution.or(classifier.info().input_size);
    let load = |path: &std::path::Path| -> Result<Image> {
        let img = load_image(path)?;
        match resolution {
            Some((h, w)) if (h, w) != (img.height(), img.width()) => resize(&img, h, w),
            _ => Ok(img),
        }
    };
    let score_chunk = |chunk: &[crate::dataset::Item]| -> Result<Vec<Vec<f64>>> {
        let images = chunk
            .iter()
            .map(|item| load(&item.path))
            .collect::<Result<Vec<_>>>()?;
        classifier.predict_batch(&images)
    };
    let chunks: Vec<&[crate::dataset::Item]> = dataset.items().chunks(opts.batch_size).collect();
    let rows: Vec<Vec<Vec<f64>>> = if classifier.parallel_batches() {
        chunks
            .par_iter()
            .map(|c| score_chunk(c))
            .collect::<Result<_>>()?
    } else {
        chunks
            .iter()
            .map(|c| score_chunk(c))
            .collect::<Result<_>>()?
    };
    ScoreMatrix::new(
        rows.into_iter().flatten().collect(),
        dataset.items().iter().map(|i| i.class).collect(),
        dataset.num_classes(),
    )
}

pub fn evaluate_model(
    classifier: &ClassifierHandle,
    dataset: &LabeledDataset,
    opts: &EvalOptions,
) -> Result<Report> {
    let scores = score_dataset(classifier, dataset, opts)?;
    Report::from_scores(classifier.name(), &scores)
}
