//! Local surrogate explanations over superpixels.
//!
//! For one image and one target class:
//!
//! 1. draw binary masks over the superpixels (row 0 keeps everything),
//! 2. render each masked image, hiding switched-off superpixels behind a
//!    baseline fill, and query the black box,
//! 3. weight every sample by `exp(-D^2 / sigma^2)` with `D` the cosine
//!    distance between its mask and the all-ones mask,
//! 4. pick at most `K` superpixels by forward stepwise weighted least squares,
//! 5. fit a weighted ridge model on the chosen superpixels.
//!
//! The signed coefficients are the attributions: positive superpixels push
//! the target probability up, negative ones push it down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::ClassifierHandle;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{cholesky_solve, Matrix};
use crate::segmentation::Segmentation;

/// Version tag written into serialised explanations.
pub const EXPLANATION_SCHEMA_VERSION: u32 = 1;

/// Minimum weighted RSS decrease, relative to the weighted total sum of
/// squares, for stepwise selection to add a feature.
pub const MIN_RSS_DECREASE: f64 = 1e-12;

/// Perturbed images sent to the classifier per call.
const PREDICT_CHUNK: usize = 100;

/// How hidden superpixels are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Each hidden superpixel becomes its own mean color.
    #[default]
    MeanColor,
    /// Hidden superpixels become mid gray (0.5, 0.5, 0.5).
    Gray,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub n_samples: usize,
    pub sigma: f64,
    /// Feature budget: at most this many superpixels are attributed.
    pub max_features: usize,
    pub ridge_alpha: f64,
    pub baseline: Baseline,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            sigma: 0.25,
            max_features: 5,
            ridge_alpha: 1.0,
            baseline: Baseline::MeanColor,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_features == 0 {
            return Err(Error::InvalidParam(
                "max_features must be at least 1".into(),
            ));
        }
        if self.n_samples < self.max_features + 2 {
            return Err(Error::InvalidParam(format!(
                "n_samples ({}) must be at least max_features + 2 ({})",
                self.n_samples,
                self.max_features + 2
            )));
        }
        if !self.ridge_alpha.is_finite() || self.ridge_alpha < 0.0 {
            return Err(Error::InvalidParam(format!(
                "ridge_alpha must be non-negative, got {}",
                self.ridge_alpha
            )));
        }
        ProximityKernel::new(self.sigma).map(|_| ())
    }
}

/// Binary matrix of superpixel on/off patterns, one row per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl MaskMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged mask rows".into()));
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(Error::InvalidParam("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            bits: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    pub fn to_design(&self) -> Matrix {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.bits.iter().map(|&b| f64::from(b)).collect(),
        )
        .expect("mask matrix is rectangular")
    }
}

/// Row 0 is all ones; rows `1..n_samples` are independent fair coin flips.
pub fn sample_masks(k: usize, n_samples: usize, seed: u64) -> Result<MaskMatrix> {
    if k == 0 || n_samples < 2 {
        return Err(Error::InvalidParam(format!(
            "need k >= 1 and n_samples >= 2, got k={k}, n_samples={n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![1u8; k];
    bits.extend((0..(n_samples - 1) * k).map(|_| u8::from(rng.random_bool(0.5))));
    Ok(MaskMatrix {
        rows: n_samples,
        cols: k,
        bits,
    })
}

/// Renders masked copies of one image.
pub struct Perturber<'a> {
    img: &'a Image,
    seg: &'a Segmentation,
    fills: Vec<[f64; 3]>,
}

impl<'a> Perturber<'a> {
    pub fn new(img: &'a Image, seg: &'a Segmentation, baseline: Baseline) -> Result<Self> {
        if !seg.matches(img) {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{} but segmentation is {}x{}",
                img.height(),
                img.width(),
                seg.height(),
                seg.width()
            )));
        }
        let fills = match baseline {
            Baseline::Gray => vec![[0.5; 3]; seg.num_segments()],
            Baseline::MeanColor => segment_means(img, seg),
        };
        Ok(Self { img, seg, fills })
    }

    pub fn apply(&self, mask: &[u8]) -> Result<Image> {
        if mask.len() != self.seg.num_segments() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} segments",
                mask.len(),
                self.seg.num_segments()
            )));
        }
        let mut out = self.img.clone();
        for (i, &label) in self.seg.labels().iter().enumerate() {
            let l = label as usize;
            if mask[l] == 0 {
                out.set_pixel_at(i, self.fills[l]);
            }
        }
        Ok(out)
    }
}

/// Mean color of every segment.
pub fn segment_means(img: &Image, seg: &Segmentation) -> Vec<[f64; 3]> {
    let mut sums = vec![[0.0; 3]; seg.num_segments()];
    let mut counts = vec![0usize; seg.num_segments()];
    for (i, &label) in seg.labels().iter().enumerate() {
        let px = img.pixel_at(i);
        let s = &mut sums[label as usize];
        for c in 0..3 {
            s[c] += px[c];
        }
        counts[label as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| s.map(|v| v / n as f64))
        .collect()
}

/// Keeps superpixels with `mask = 1`, fills the rest according to `baseline`.
pub fn apply_mask(
    img: &Image,
    seg: &Segmentation,
    mask: &[u8],
    baseline: Baseline,
) -> Result<Image> {
    Perturber::new(img, seg, baseline)?.apply(mask)
}

/// `exp(-D^2 / sigma^2)` with `D` the cosine distance to the all-ones mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityKernel {
    sigma: f64,
}

impl ProximityKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The all-zeros mask has no cosine distance; it is given `D = 1`.
    pub fn weight(&self, mask: &[u8]) -> f64 {
        let distance = cosine_distance_to_ones(mask);
        (-(distance * distance) / (self.sigma * self.sigma)).exp()
    }
}

fn cosine_distance_to_ones(mask: &[u8]) -> f64 {
    let on = mask.iter().filter(|&&b| b != 0).count();
    if on == 0 || mask.is_empty() {
        return 1.0;
    }
    // <m, 1> / (|m| |1|) = on / (sqrt(on) sqrt(k)) = sqrt(on / k)
    1.0 - (on as f64 / mask.len() as f64).sqrt()
}

pub fn kernel_weight(mask: &[u8], sigma: f64) -> Result<f64> {
    Ok(ProximityKernel::new(sigma)?.weight(mask))
}

/// Weighted, centered second moments of a design and response.
struct WeightedMoments {
    /// Centered cross products between columns.
    gram: Matrix,
    /// Centered cross products of each column with the response.
    xy: Vec<f64>,
    /// Centered weighted sum of squares of the response.
    yy: f64,
}

impl WeightedMoments {
    #[allow(clippy::needless_range_loop)]
    fn new(x: &Matrix, y: &[f64], w: &[f64]) -> Self {
        let (n, m) = (x.rows(), x.cols());
        let total: f64 = w.iter().sum();
        let x_mean: Vec<f64> = (0..m)
            .map(|j| (0..n).map(|i| w[i] * x.get(i, j)).sum::<f64>() / total)
            .collect();
        let y_mean = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / total;

        let mut gram = Matrix::zeros(m, m);
        let mut xy = vec![0.0; m];
        let mut yy = 0.0;
        let mut centered = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                centered[j] = x.get(i, j) - x_mean[j];
            }
            let dy = y[i] - y_mean;
            yy += w[i] * dy * dy;
            for j in 0..m {
                let wx = w[i] * centered[j];
                xy[j] += wx * dy;
                for l in j..m {
                    gram.set(j, l, gram.get(j, l) + wx * centered[l]);
                }
            }
        }
        for j in 0..m {
            for l in 0..j {
                gram.set(j, l, gram.get(l, j));
            }
        }
        Self { gram, xy, yy }
    }

    /// Weighted RSS of the unpenalised fit on `subset` (plus intercept), or
    /// `None` when the subset is collinear.
    fn rss(&self, subset: &[usize]) -> Option<f64> {
        if subset.is_empty() {
            return Some(self.yy);
        }
        let a = self.gram.select_columns(subset);
        let a = Matrix::from_vec(
            subset.len(),
            subset.len(),
            subset.iter().flat_map(|&r| a.row(r).to_vec()).collect(),
        )
        .expect("square");
        let b: Vec<f64> = subset.iter().map(|&j| self.xy[j]).collect();
        let beta = cholesky_solve(&a, &b)?;
        let explained: f64 = beta.iter().zip(&b).map(|(x, y)| x * y).sum();
        Some(self.yy - explained)
    }
}

fn check_regression_inputs(x: &Matrix, y: &[f64], weights: &[f64]) -> Result<()> {
    if y.len() != x.rows() || weights.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response {}, weights {}",
            x.rows(),
            y.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParam(
            "weights must be finite and non-negative".into(),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("responses must be finite".into()));
    }
    Ok(())
}

/// Forward stepwise selection on weighted least squares with intercept.
///
/// Each step adds the column whose inclusion lowers the weighted residual
/// sum of squares the most (ties go to the lowest index). Selection stops at
/// `budget` columns or when no column lowers it by more than
/// [`MIN_RSS_DECREASE`] times the total sum of squares. Constant responses
/// yield an empty selection; a design whose columns are all constant is
/// [`Error::DegenerateDesign`].
pub fn select_features(
    x: &Matrix,
    y: &[f64],
    weights: &[f64],
    budget: usize,
) -> Result<Vec<usize>> {
    check_regression_inputs(x, y, weights)?;
    if budget == 0 {
        return Err(Error::InvalidParam(
            "feature budget must be at least 1".into(),
        ));
    }
    if x.rows() < budget + 2 {
        return Err(Error::InvalidParam(format!(
            "{} samples cannot support {budget} features",
            x.rows()
        )));
    }
    if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
        return Err(Error::InvalidParam(
            "need at least two positively weighted samples".into(),
        ));
    }
    let moments = WeightedMoments::new(x, y, weights);
    let scale = (0..x.cols())
        .map(|j| moments.gram.get(j, j))
        .fold(0.0, f64::max);
    let usable: Vec<usize> = (0..x.cols())
        .filter(|&j| moments.gram.get(j, j) > 1e-12 * scale.max(f64::MIN_POSITIVE))
        .collect();
    if usable.is_empty() || scale == 0.0 {
        return Err(Error::DegenerateDesign(
            "every design column is constant".into(),
        ));
    }

    let mut selected = Vec::new();
    let mut current = moments.yy;
    while selected.len() < budget {
        let mut best: Option<(usize, f64)> = None;
        for &j in &usable {
            if selected.contains(&j) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(j);
            if let Some(rss) = moments.rss(&trial) {
                if best.is_none_or(|(_, b)| rss < b) {
                    best = Some((j, rss));
                }
            }
        }
        match best {
            Some((j, rss)) if current - rss > MIN_RSS_DECREASE * moments.yy => {
                selected.push(j);
                current = rss;
            }
            _ => break,
        }
    }
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// `1 - weighted RSS / weighted TSS`; 0 when the response is constant.
    pub local_r2: f64,
}

/// Minimises `sum_i w_i (y_i - beta . x_i - b)^2 + alpha |beta|^2` with an
/// unpenalised intercept, via normal equations on weight-centered data.
#[allow(clippy::needless_range_loop)]
pub fn fit_weighted_ridge(x: &Matrix, y: &[f64], weights: &[f64], alpha: f64) -> Result<RidgeFit> {
    check_regression_inputs(x, y, weights)?;
    let m = x.cols();
    if m == 0 {
        return Err(Error::InvalidParam(
            "design needs at least one column".into(),
        ));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidParam(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    if weights.iter().filter(|&&w| w > 0.0).count() < m + 1 {
        return Err(Error::InvalidParam(format!(
            "need at least {} positively weighted samples for {m} features",
            m + 1
        )));
    }

    let moments = WeightedMoments::new(x, y, weights);
    let mut a = moments.gram.clone();
    for j in 0..m {
        a.set(j, j, a.get(j, j) + alpha);
    }
    let coefficients = cholesky_solve(&a, &moments.xy).ok_or_else(|| {
        Error::SingularSystem(format!(
            "{m}-feature weighted design is rank deficient at alpha={alpha}"
        ))
    })?;

    let total: f64 = weights.iter().sum();
    let (mut y_mean, mut x_mean) = (0.0, vec![0.0; m]);
    for i in 0..x.rows() {
        y_mean += weights[i] * y[i];
        for j in 0..m {
            x_mean[j] += weights[i] * x.get(i, j);
        }
    }
    y_mean /= total;
    x_mean.iter_mut().for_each(|v| *v /= total);
    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&x_mean)
            .map(|(b, xm)| b * xm)
            .sum::<f64>();

    let mut rss = 0.0;
    for i in 0..x.rows() {
        let pred = intercept + (0..m).map(|j| coefficients[j] * x.get(i, j)).sum::<f64>();
        rss += weights[i] * (y[i] - pred).powi(2);
    }
    let local_r2 = if moments.yy > 0.0 {
        1.0 - rss / moments.yy
    } else {
        0.0
    };
    Ok(RidgeFit {
        coefficients,
        intercept,
        local_r2,
    })
}

/// Masks plus the classifier's probabilities for each masked image.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    pub masks: MaskMatrix,
    pub probs: Vec<Vec<f64>>,
}

/// Samples masks, renders the perturbed images and scores them.
///
/// Chunks are scored concurrently when the classifier allows it; results
/// are reassembled in sample order either way.
pub fn perturb_and_predict(
    img: &Image,
    classifier: &ClassifierHandle,
    seg: &Segmentation,
    cfg: &SurrogateConfig,
) -> Result<PerturbationBatch> {
    let masks = sample_masks(seg.num_segments(), cfg.n_samples, cfg.seed)?;
    let perturber = Perturber::new(img, seg, cfg.baseline)?;
    let starts: Vec<usize> = (0..masks.rows()).step_by(PREDICT_CHUNK).collect();
    let score_chunk = |&start: &usize| -> Result<Vec<Vec<f64>>> {
        let end = (start + PREDICT_CHUNK).min(masks.rows());
        let images = (start..end)
            .map(|r| perturber.apply(masks.row(r)))
            .collect::<Result<Vec<_>>>()?;
        classifier.predict_batch(&images)
    };
    let chunks: Vec<Vec<Vec<f64>>> = if classifier.parallel_batches() {
        starts.par_iter().map(score_chunk).collect::<Result<_>>()?
    } else {
        starts.iter().map(score_chunk).collect::<Result<_>>()?
    };
    Ok(PerturbationBatch {
        masks,
        probs: chunks.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub segment: usize,
    pub weight: f64,
}

/// Signed per-superpixel attributions for one class of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub schema_version: u32,
    pub target_class: usize,
    /// Selected superpixels in selection order.
    pub features: Vec<Attribution>,
    pub intercept: f64,
    pub local_r2: f64,
    pub config: SurrogateConfig,
    pub instance_prob: f64,
    pub num_segments: usize,
    /// Set when the target probability never changed across samples.
    pub degenerate: bool,
}

impl Explanation {
    pub fn selected_features(&self) -> Vec<usize> {
        self.features.iter().map(|a| a.segment).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.features.iter().map(|a| a.weight).collect()
    }

    /// Up to `k` attributions by decreasing `|weight|`, ties to lower segment.
    pub fn top(&self, k: usize) -> Vec<Attribution> {
        let mut sorted = self.features.clone();
        sorted.sort_by(|a, b| {
            b.weight
                .abs()
                .total_cmp(&a.weight.abs())
                .then(a.segment.cmp(&b.segment))
        });
        sorted.truncate(k);
        sorted
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Spread below which the target probability counts as constant.
const CONSTANT_RESPONSE_SPREAD: f64 = 1e-12;

/// Explains `classifier`'s `target_class` probability on `img`.
pub fn explain_instance(
    img: &Image,
    classifier: &ClassifierHandle,
    seg: &Segmentation,
    target_class: usize,
    cfg: &SurrogateConfig,
) -> Result<Explanation> {
    cfg.validate()?;
    if target_class >= classifier.num_classes() {
        return Err(Error::InvalidParam(format!(
            "target class {target_class} out of range for {} classes",
            classifier.num_classes()
        )));
    }
    if cfg.n_samples < seg.num_segments() + 2 {
        return Err(Error::InvalidParam(format!(
            "n_samples ({}) must be at least segments + 2 ({})",
            cfg.n_samples,
            seg.num_segments() + 2
        )));
    }
    let batch = perturb_and_predict(img, classifier, seg, cfg)?;
    explain_batch_probs(&batch, target_class, seg.num_segments(), cfg)
}

/// Fits the surrogate to an already scored perturbation batch.
pub fn explain_batch_probs(
    batch: &PerturbationBatch,
    target_class: usize,
    num_segments: usize,
    cfg: &SurrogateConfig,
) -> Result<Explanation> {
    let kernel = ProximityKernel::new(cfg.sigma)?;
    let y: Vec<f64> = batch.probs.iter().map(|row| row[target_class]).collect();
    let instance_prob = y[0];
    let base = Explanation {
        schema_version: EXPLANATION_SCHEMA_VERSION,
        target_class,
        features: Vec::new(),
        intercept: instance_prob,
        local_r2: 0.0,
        config: *cfg,
        instance_prob,
        num_segments,
        degenerate: false,
    };

    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi - lo <= CONSTANT_RESPONSE_SPREAD {
        return Ok(Explanation {
            degenerate: true,
            ..base
        });
    }

    let weights: Vec<f64> = (0..batch.masks.rows())
        .map(|r| kernel.weight(batch.masks.row(r)))
        .collect();
    let design = batch.masks.to_design();
    let selected = match select_features(&design, &y, &weights, cfg.max_features) {
        Ok(s) => s,
        Err(Error::DegenerateDesign(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    if selected.is_empty() {
        let total: f64 = weights.iter().sum();
        let mean = weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / total;
        return Ok(Explanation {
            intercept: mean,
            ..base
        });
    }
    let fit = fit_weighted_ridge(
        &design.select_columns(&selected),
        &y,
        &weights,
        cfg.ridge_alpha,
    )?;
    Ok(Explanation {
        features: selected
            .iter()
            .zip(&fit.coefficients)
            .map(|(&segment, &weight)| Attribution { segment, weight })
            .collect(),
        intercept: fit.intercept,
        local_r2: fit.local_r2,
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{make_planted_oracle, ConstantClassifier, Slope};
    use crate::segmentation::{slic_segment, SlicParams};

    #[test]
    fn instance_row_is_all_ones() {
        let m = sample_masks(3, 5, 9).unwrap();
        assert_eq!(m.row(0), &[1, 1, 1]);
        assert_eq!(m.rows(), 5);
    }

    #[test]
    fn masks_are_fair_coins() {
        let m = sample_masks(1, 1000, 42).unwrap();
        let mean = (1..1000).map(|r| f64::from(m.get(r, 0))).sum::<f64>() / 999.0;
        assert!((0.40..=0.60).contains(&mean), "{mean}");
    }

    #[test]
    fn masks_deterministic_per_seed() {
        assert_eq!(
            sample_masks(7, 50, 1).unwrap(),
            sample_masks(7, 50, 1).unwrap()
        );
        assert_ne!(
            sample_masks(7, 50, 1).unwrap(),
            sample_masks(7, 50, 2).unwrap()
        );
        assert!(sample_masks(0, 5, 0).is_err() && sample_masks(3, 1, 0).is_err());
    }

    fn two_halves() -> (Image, Segmentation) {
        let mut data = Vec::new();
        for _r in 0..2 {
            for c in 0..4 {
                let v = if c < 2 { 0.0 } else { 1.0 };
                data.extend([v, v, v]);
            }
        }
        let img = Image::new(2, 4, data).unwrap();
        let seg = Segmentation::from_labels(2, 4, vec![0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
        (img, seg)
    }

    #[test]
    fn full_mask_is_identity() {
        let (img, seg) = two_halves();
        assert_eq!(
            apply_mask(&img, &seg, &[1, 1], Baseline::MeanColor).unwrap(),
            img
        );
    }

    #[test]
    fn empty_mask_with_gray_is_gray() {
        let (img, seg) = two_halves();
        let out = apply_mask(&img, &seg, &[0, 0], Baseline::Gray).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn mean_fill_replaces_hidden_segment_only() {
        let (img, seg) = two_halves();
        let out = apply_mask(&img, &seg, &[1, 0], Baseline::MeanColor).unwrap();
        assert_eq!(out, img); // white half's mean is white
        let out = apply_mask(&img, &seg, &[1, 0], Baseline::Gray).unwrap();
        assert_eq!(out.pixel(0, 0), [0.0; 3]);
        assert_eq!(out.pixel(1, 3), [0.5; 3]);
        assert!(apply_mask(&img, &seg, &[1], Baseline::Gray).is_err());
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_weight(&[1, 1, 1, 1], 0.25).unwrap(), 1.0);
        let w = kernel_weight(&[1, 1, 0, 0], 0.25).unwrap();
        let d = 1.0 - 2.0 / (2f64.sqrt() * 2.0);
        assert!((w - (-(d * d) / 0.0625).exp()).abs() < 1e-15);
        assert!((w - 0.2534).abs() < 1e-4, "{w}");
        assert!((kernel_weight(&[0, 0, 0], 0.5).unwrap() - (-4.0f64).exp()).abs() < 1e-15);
        assert!(kernel_weight(&[1], 0.0).is_err());
        assert!(kernel_weight(&[1], -1.0).is_err());
    }

    #[test]
    fn kernel_monotone_in_zeroed_bits() {
        for k in 1..=10usize {
            let kernel = ProximityKernel::new(0.25).unwrap();
            let mut by_zeros = vec![Vec::new(); k + 1];
            for bits in 0u32..(1 << k) {
                let mask: Vec<u8> = (0..k).map(|i| ((bits >> i) & 1) as u8).collect();
                let zeros = mask.iter().filter(|&&b| b == 0).count();
                by_zeros[zeros].push(kernel.weight(&mask));
            }
            for z in 1..=k {
                let prev_min = by_zeros[z - 1]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                let cur_max = by_zeros[z].iter().cloned().fold(0.0, f64::max);
                assert!(cur_max <= prev_min, "k={k} z={z}");
                assert!(cur_max > 0.0 && prev_min <= 1.0);
            }
        }
    }

    #[test]
    fn perfect_single_predictor_is_selected() {
        let masks = sample_masks(5, 60, 3).unwrap();
        let x = masks.to_design();
        let y: Vec<f64> = (0..60).map(|r| x.get(r, 3)).collect();
        assert_eq!(select_features(&x, &y, &vec![1.0; 60], 1).unwrap(), vec![3]);
    }

    #[test]
    fn constant_target_selects_nothing() {
        let x = sample_masks(4, 30, 3).unwrap().to_design();
        assert!(select_features(&x, &[0.3; 30], &[1.0; 30], 3)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn constant_design_is_degenerate() {
        let x = Matrix::from_vec(6, 2, vec![1.0; 12]).unwrap();
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        assert!(matches!(
            select_features(&x, &y, &[1.0; 6], 1),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn ridge_exact_line() {
        let x = Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let fit = fit_weighted_ridge(&x, &[0.0, 3.0, 6.0, 9.0], &[1.0; 4], 0.0).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!((fit.local_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_heavy_penalty_shrinks_to_mean() {
        let x = Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [1.0, 3.0, 5.0, 7.0];
        let w = [1.0, 1.0, 1.0, 10.0];
        let fit = fit_weighted_ridge(&x, &y, &w, 1e9).unwrap();
        let mean = (1.0 + 3.0 + 5.0 + 70.0) / 13.0;
        assert!(fit.coefficients[0].abs() < 1e-3);
        assert!((fit.intercept - mean).abs() < 1e-3);
    }

    #[test]
    fn ridge_rank_deficient_is_singular() {
        let x = Matrix::from_vec(4, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        assert!(matches!(
            fit_weighted_ridge(&x, &[0.0, 1.0, 2.0, 3.0], &[1.0; 4], 0.0),
            Err(Error::SingularSystem(_))
        ));
        assert!(fit_weighted_ridge(&x, &[0.0, 1.0, 2.0, 3.0], &[1.0; 4], 0.1).is_ok());
        assert!(fit_weighted_ridge(&x, &[0.0, 1.0, 2.0, 3.0], &[1.0, 1.0, 0.0, 0.0], 0.1).is_err());
    }

    fn textured(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn constant_classifier_is_degenerate() {
        let img = textured(16, 16, 1);
        let seg = slic_segment(
            &img,
            &SlicParams {
                target_segments: 4,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let cfg = SurrogateConfig {
            n_samples: 50,
            ..Default::default()
        };
        let exp =
            explain_instance(&img, &ConstantClassifier::handle(3).unwrap(), &seg, 0, &cfg).unwrap();
        assert!(exp.degenerate && exp.features.is_empty());
        assert_eq!(exp.local_r2, 0.0);
    }

    #[test]
    fn planted_bit_recovered_with_unit_weight() {
        let img = textured(20, 20, 2);
        let seg = slic_segment(
            &img,
            &SlicParams {
                target_segments: 9,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let j = seg.num_segments() / 2;
        let cfg = SurrogateConfig {
            max_features: 1,
            ..Default::default()
        };
        for (slope, sign) in [(Slope::Positive, 1.0), (Slope::Negative, -1.0)] {
            let oracle = make_planted_oracle(&img, &seg, &[j], 1, 2, 1.0, 0.0, slope).unwrap();
            let exp = explain_instance(&img, &oracle, &seg, 1, &cfg).unwrap();
            assert_eq!(exp.selected_features(), vec![j]);
            assert!(
                (exp.weights()[0] - sign).abs() < 0.05,
                "{:?} {} {}",
                exp.weights(),
                exp.num_segments,
                exp.intercept
            );
            assert!(exp.local_r2 >= 0.99);
        }
    }

    #[test]
    fn rejects_bad_target_and_config() {
        let img = textured(8, 8, 3);
        let seg = Segmentation::from_labels(8, 8, vec![0; 64]).unwrap();
        let c = ConstantClassifier::handle(2).unwrap();
        assert!(explain_instance(&img, &c, &seg, 2, &SurrogateConfig::default()).is_err());
        let cfg = SurrogateConfig {
            n_samples: 3,
            ..Default::default()
        };
        assert!(explain_instance(&img, &c, &seg, 0, &cfg).is_err());
        let cfg = SurrogateConfig {
            sigma: 0.0,
            ..Default::default()
        };
        assert!(explain_instance(&img, &c, &seg, 0, &cfg).is_err());
    }

    #[test]
    fn explanation_json_shape() {
        let exp = Explanation {
            schema_version: EXPLANATION_SCHEMA_VERSION,
            target_class: 3,
            features: vec![Attribution {
                segment: 2,
                weight: -0.5,
            }],
            intercept: 0.1,
            local_r2: 0.9,
            config: SurrogateConfig::default(),
            instance_prob: 0.7,
            num_segments: 10,
            degenerate: false,
        };
        let v: serde_json::Value = serde_json::from_str(&exp.to_json().unwrap()).unwrap();
        assert_eq!(
            v["features"][0],
            serde_json::json!({"segment": 2, "weight": -0.5})
        );
        assert_eq!(v["config"]["n_samples"], 1000);
        assert_eq!(v["config"]["baseline"], "mean_color");
        for key in [
            "schema_version",
            "target_class",
            "intercept",
            "local_r2",
            "instance_prob",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
