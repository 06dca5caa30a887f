//! Built-in classifiers with known behaviour, used as oracles and for
//! exercising the pipeline without a trained network.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Classifier, ClassifierHandle};
use crate::error::{BridgeError, Error, Result};
use crate::image::Image;
use crate::segmentation::Segmentation;

/// Pixels within this distance of the stored original count as untouched.
const PIXEL_MATCH_TOLERANCE: f64 = 1e-9;

/// SHA-256 over the dimensions and 8-bit quantised pixels.
pub fn image_digest(img: &Image) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((img.height() as u64).to_le_bytes());
    hasher.update((img.width() as u64).to_le_bytes());
    hasher.update(img.to_rgb8());
    hasher.finalize().into()
}

/// Returns `1/C` for every class.
#[derive(Debug, Clone)]
pub struct ConstantClassifier {
    num_classes: usize,
}

impl ConstantClassifier {
    pub fn new(num_classes: usize) -> Self {
        Self { num_classes }
    }

    pub fn handle(num_classes: usize) -> Result<ClassifierHandle> {
        ClassifierHandle::in_process("constant", num_classes, None, Self::new(num_classes))
    }
}

impl Classifier for ConstantClassifier {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        let p = 1.0 / self.num_classes as f64;
        Ok(vec![vec![p; self.num_classes]; images.len()])
    }
}

/// Direction of the planted oracle's response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slope {
    /// Intact planted region gives `p_on`, hidden gives `p_off`.
    #[default]
    Positive,
    /// Intact planted region gives `p_off`, hidden gives `p_on`.
    Negative,
}

/// Classifier whose target-class probability depends only on how much of a
/// planted set of superpixels is left untouched.
///
/// The oracle never sees masks: it compares incoming pixels to a stored copy
/// of the original image.
#[derive(Debug, Clone)]
pub struct PlantedOracle {
    original: Image,
    planted_pixels: Vec<usize>,
    target_class: usize,
    num_classes: usize,
    p_on: f64,
    p_off: f64,
    slope: Slope,
}

impl PlantedOracle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        original: &Image,
        seg: &Segmentation,
        planted_segments: &[usize],
        target_class: usize,
        num_classes: usize,
        p_on: f64,
        p_off: f64,
        slope: Slope,
    ) -> Result<Self> {
        if !seg.matches(original) {
            return Err(Error::DimensionMismatch(
                "planted oracle image and segmentation differ in size".into(),
            ));
        }
        if planted_segments.is_empty() {
            return Err(Error::InvalidParam("no planted segments".into()));
        }
        if let Some(&bad) = planted_segments.iter().find(|&&s| s >= seg.num_segments()) {
            return Err(Error::InvalidParam(format!(
                "planted segment {bad} out of range for {} segments",
                seg.num_segments()
            )));
        }
        if num_classes < 2 || target_class >= num_classes {
            return Err(Error::InvalidParam(format!(
                "target class {target_class} invalid for {num_classes} classes"
            )));
        }
        if !(0.0 <= p_off && p_off < p_on && p_on <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "need 0 <= p_off < p_on <= 1, got p_off={p_off}, p_on={p_on}"
            )));
        }
        let planted_pixels = seg
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| planted_segments.contains(&(l as usize)))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            original: original.clone(),
            planted_pixels,
            target_class,
            num_classes,
            p_on,
            p_off,
            slope,
        })
    }

    /// Fraction of planted pixels identical to the original.
    pub fn intact_fraction(&self, img: &Image) -> f64 {
        let intact = self
            .planted_pixels
            .iter()
            .filter(|&&i| {
                let (a, b) = (img.pixel_at(i), self.original.pixel_at(i));
                (0..3).all(|c| (a[c] - b[c]).abs() <= PIXEL_MATCH_TOLERANCE)
            })
            .count();
        intact as f64 / self.planted_pixels.len() as f64
    }

    pub fn target_probability(&self, img: &Image) -> f64 {
        let frac = self.intact_fraction(img);
        let span = self.p_on - self.p_off;
        match self.slope {
            Slope::Positive => self.p_off + span * frac,
            Slope::Negative => self.p_on - span * frac,
        }
    }
}

impl Classifier for PlantedOracle {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        images
            .iter()
            .map(|img| {
                if img.height() != self.original.height() || img.width() != self.original.width() {
                    return Err(BridgeError::Rejected(format!(
                        "expected {}x{} image, got {}x{}",
                        self.original.height(),
                        self.original.width(),
                        img.height(),
                        img.width()
                    )));
                }
                let p = self.target_probability(img);
                let rest = (1.0 - p) / (self.num_classes - 1) as f64;
                let mut row = vec![rest; self.num_classes];
                row[self.target_class] = p;
                Ok(row)
            })
            .collect()
    }
}

/// Builds a [`PlantedOracle`] handle over `original`.
#[allow(clippy::too_many_arguments)]
pub fn make_planted_oracle(
    original: &Image,
    seg: &Segmentation,
    planted_segments: &[usize],
    target_class: usize,
    num_classes: usize,
    p_on: f64,
    p_off: f64,
    slope: Slope,
) -> Result<ClassifierHandle> {
    let oracle = PlantedOracle::new(
        original,
        seg,
        planted_segments,
        target_class,
        num_classes,
        p_on,
        p_off,
        slope,
    )?;
    ClassifierHandle::in_process(
        "planted-oracle",
        num_classes,
        Some((original.height(), original.width())),
        oracle,
    )
}

/// Softmax over affine functions of the mean RGB color.
#[derive(Debug, Clone)]
pub struct MeanColorClassifier {
    weights: Vec<[f64; 3]>,
    bias: Vec<f64>,
}

impl MeanColorClassifier {
    pub fn new(weights: Vec<[f64; 3]>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "need weights for at least 2 classes, got {}",
                weights.len()
            )));
        }
        if bias.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weight rows but {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn probabilities(&self, img: &Image) -> Vec<f64> {
        let mut mean = [0.0; 3];
        for i in 0..img.pixel_count() {
            let px = img.pixel_at(i);
            for c in 0..3 {
                mean[c] += px[c];
            }
        }
        let n = img.pixel_count() as f64;
        let logits: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| (0..3).map(|c| w[c] * mean[c] / n).sum::<f64>() + b)
            .collect();
        softmax(&logits)
    }
}

impl Classifier for MeanColorClassifier {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        Ok(images.iter().map(|img| self.probabilities(img)).collect())
    }
}

pub fn make_mean_color_classifier(
    weights: Vec<[f64; 3]>,
    bias: Vec<f64>,
) -> Result<ClassifierHandle> {
    let c = weights.len();
    ClassifierHandle::in_process(
        "mean-color",
        c,
        None,
        MeanColorClassifier::new(weights, bias)?,
    )
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Knows the label of every image it was built from and answers one-hot.
#[derive(Debug, Clone, Default)]
pub struct LabelOracle {
    labels: HashMap<[u8; 32], usize>,
    num_classes: usize,
}

impl LabelOracle {
    pub fn new(
        num_classes: usize,
        examples: impl IntoIterator<Item = (Image, usize)>,
    ) -> Result<Self> {
        let mut labels = HashMap::new();
        for (img, label) in examples {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
            labels.insert(image_digest(&img), label);
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }
}

impl Classifier for LabelOracle {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        images
            .iter()
            .map(|img| {
                let label = self
                    .labels
                    .get(&image_digest(img))
                    .ok_or_else(|| BridgeError::Rejected("image unknown to label oracle".into()))?;
                let mut row = vec![0.0; self.num_classes];
                row[*label] = 1.0;
                Ok(row)
            })
            .collect()
    }
}

/// Pseudo-random probabilities keyed on image content and a seed.
#[derive(Debug, Clone)]
pub struct RandomClassifier {
    num_classes: usize,
    seed: u64,
}

impl RandomClassifier {
    pub fn new(num_classes: usize, seed: u64) -> Self {
        Self { num_classes, seed }
    }
}

impl Classifier for RandomClassifier {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        Ok(images
            .iter()
            .map(|img| {
                let mut key = image_digest(img);
                for (k, s) in key.iter_mut().zip(self.seed.to_le_bytes()) {
                    *k ^= s;
                }
                let mut rng = ChaCha8Rng::from_seed(key);
                let raw: Vec<f64> = (0..self.num_classes)
                    .map(|_| rng.random::<f64>() + 1e-12)
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            })
            .collect())
    }
}
