use limescope::bridge::reference::{make_planted_oracle, Slope};
use limescope::bridge::ClassifierHandle;
use limescope::pipeline::{outline_pixels, render_overlay, stability_run, StabilityReport};
use limescope::surrogate::{explain_instance, Baseline, Explanation, SurrogateConfig};
use limescope::{slic_segment, Image, Result, Segmentation, SlicParams};

const OUTLINE: [f64; 3] = [1.0, 1.0, 0.0];

/// An image and its superpixels, ready for planted-oracle experiments.
pub struct Session {
    image: Image,
    seg: Segmentation,
}

/// Settings for one explanation of a planted oracle.
#[derive(Debug, Clone, Copy)]
pub struct PlantedRun {
    pub planted: usize,
    pub negative: bool,
    pub samples: usize,
    pub max_features: usize,
    pub seed: u64,
    /// Hide superpixels with flat gray instead of their mean color.
    pub gray_fill: bool,
}

impl Session {
    pub fn new(
        rgba: &[u8],
        width: usize,
        height: usize,
        segments: usize,
        compactness: f64,
    ) -> Result<Self> {
        let image = Image::from_rgba8(height, width, rgba)?;
        let params = SlicParams {
            target_segments: segments,
            compactness,
            ..SlicParams::default()
        };
        let seg = slic_segment(&image, &params, 0)?;
        Ok(Self { image, seg })
    }

    pub fn num_segments(&self) -> usize {
        self.seg.num_segments()
    }

    pub fn segment_at(&self, x: usize, y: usize) -> Option<usize> {
        (x < self.seg.width() && y < self.seg.height()).then(|| self.seg.label(y, x))
    }

    /// The image with superpixel borders drawn, as RGBA.
    pub fn outlined(&self) -> Vec<u8> {
        let mut img = self.image.clone();
        for i in outline_pixels(&self.seg) {
            img.set_pixel_at(i, OUTLINE);
        }
        img.to_rgba8()
    }

    fn oracle(&self, run: &PlantedRun) -> Result<ClassifierHandle> {
        let slope = if run.negative {
            Slope::Negative
        } else {
            Slope::Positive
        };
        make_planted_oracle(
            &self.image,
            &self.seg,
            &[run.planted],
            0,
            2,
            0.9,
            0.1,
            slope,
        )
    }

    fn config(run: &PlantedRun) -> SurrogateConfig {
        SurrogateConfig {
            n_samples: run.samples,
            max_features: run.max_features,
            seed: run.seed,
            baseline: if run.gray_fill {
                Baseline::Gray
            } else {
                Baseline::MeanColor
            },
            ..SurrogateConfig::default()
        }
    }

    /// Explains the planted oracle; returns the explanation and its overlay
    /// as RGBA.
    pub fn explain(&self, run: &PlantedRun) -> Result<(Explanation, Vec<u8>)> {
        let exp = explain_instance(
            &self.image,
            &self.oracle(run)?,
            &self.seg,
            0,
            &Self::config(run),
        )?;
        let overlay = render_overlay(&self.image, &self.seg, &exp, run.max_features)?;
        Ok((exp, overlay.to_rgba8()))
    }

    pub fn stability(
        &self,
        run: &PlantedRun,
        runs: usize,
        top_k: usize,
    ) -> Result<StabilityReport> {
        stability_run(
            &self.image,
            &self.oracle(run)?,
            &self.seg,
            0,
            &Self::config(run),
            runs,
            top_k,
        )
    }
}
