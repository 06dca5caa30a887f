//! Declarative classifier configuration, usually one TOML table.
//!
//! ```toml
//! [model]
//! type = "process"
//! command = ["python3", "adapter.py", "--mock"]
//! timeout_s = 30
//! parallel_batches = false
//! ```

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::reference::{
    make_mean_color_classifier, make_planted_oracle, ConstantClassifier, LabelOracle,
    RandomClassifier, Slope,
};
use super::{ClassifierHandle, StdioClassifier, DEFAULT_TIMEOUT_S};
use crate::dataset::read_manifest;
use crate::error::{Error, Result};
use crate::image::{load_image, resize, Image};
use crate::segmentation::Segmentation;

fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// External process speaking the line protocol on stdin/stdout.
    Process {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default)]
        parallel_batches: bool,
    },
    /// HTTP endpoint accepting the same documents at `POST /predict`.
    Http {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default)]
        parallel_batches: bool,
    },
    Constant {
        num_classes: usize,
    },
    MeanColor {
        weights: Vec<[f64; 3]>,
        #[serde(default)]
        bias: Option<Vec<f64>>,
    },
    Random {
        num_classes: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Looks labels up from a split manifest; scores 1.0 on the true class.
    LabelOracle {
        manifest: PathBuf,
        num_classes: usize,
    },
    /// Built around the image being explained.
    Planted {
        planted_segments: Vec<usize>,
        target_class: usize,
        num_classes: usize,
        #[serde(default = "default_p_on")]
        p_on: f64,
        #[serde(default = "default_p_off")]
        p_off: f64,
        #[serde(default)]
        slope: Slope,
    },
}

fn default_p_on() -> f64 {
    0.9
}

fn default_p_off() -> f64 {
    0.1
}

/// Inputs some classifier kinds need at construction time.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildContext<'a> {
    /// Image under explanation and its segmentation (planted oracle).
    pub instance: Option<(&'a Image, &'a Segmentation)>,
    /// Resolution images are resized to before prediction (label oracle).
    pub resolution: Option<(usize, usize)>,
}

fn timeout(secs: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(secs)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| Error::InvalidParam(format!("timeout_s must be positive, got {secs}")))
}

impl ModelConfig {
    pub fn build(&self, ctx: &BuildContext<'_>) -> Result<ClassifierHandle> {
        match self {
            ModelConfig::Process {
                command,
                timeout_s,
                parallel_batches,
            } => {
                let (client, hello) = StdioClassifier::spawn(command, timeout(*timeout_s)?)?;
                client.into_handle(hello, *parallel_batches)
            }
            #[cfg(feature = "http")]
            ModelConfig::Http {
                url,
                timeout_s,
                parallel_batches,
            } => {
                let (client, hello) = super::HttpClassifier::connect(url, timeout(*timeout_s)?)?;
                client.into_handle(hello, *parallel_batches)
            }
            #[cfg(not(feature = "http"))]
            ModelConfig::Http { .. } => Err(Error::InvalidParam(
                "built without the http transport".into(),
            )),
            ModelConfig::Constant { num_classes } => ConstantClassifier::handle(*num_classes),
            ModelConfig::MeanColor { weights, bias } => {
                let bias = bias.clone().unwrap_or_else(|| vec![0.0; weights.len()]);
                make_mean_color_classifier(weights.clone(), bias)
            }
            ModelConfig::Random { num_classes, seed } => ClassifierHandle::in_process(
                "random",
                *num_classes,
                None,
                RandomClassifier::new(*num_classes, *seed),
            ),
            ModelConfig::LabelOracle {
                manifest,
                num_classes,
            } => {
                let rows = read_manifest(manifest)?;
                let examples = rows
                    .iter()
                    .map(|row| {
                        let img = load_image(&row.path)?;
                        let img = match ctx.resolution {
                            Some((h, w)) => resize(&img, h, w)?,
                            None => img,
                        };
                        Ok((img, row.class))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ClassifierHandle::in_process(
                    "label-oracle",
                    *num_classes,
                    ctx.resolution,
                    LabelOracle::new(*num_classes, examples)?,
                )
            }
            ModelConfig::Planted {
                planted_segments,
                target_class,
                num_classes,
                p_on,
                p_off,
                slope,
            } => {
                let (img, seg) = ctx.instance.ok_or_else(|| {
                    Error::InvalidParam("planted oracle needs the image being explained".into())
                })?;
                make_planted_oracle(
                    img,
                    seg,
                    planted_segments,
                    *target_class,
                    *num_classes,
                    *p_on,
                    *p_off,
                    *slope,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn process_defaults() {
        let cfg: ModelConfig =
            serde_json::from_str(r#"{"type":"process","command":["x"]}"#).unwrap();
        assert_eq!(
            cfg,
            ModelConfig::Process {
                command: vec!["x".into()],
                timeout_s: 30.0,
                parallel_batches: false
            }
        );
    }

    #[test]
    fn planted_needs_instance() {
        let cfg = ModelConfig::Planted {
            planted_segments: vec![0],
            target_class: 0,
            num_classes: 2,
            p_on: 0.9,
            p_off: 0.1,
            slope: Slope::Positive,
        };
        assert!(cfg.build(&BuildContext::default()).is_err());
        let img = Image::filled(2, 2, [0.3; 3]).unwrap();
        let seg = Segmentation::from_labels(2, 2, vec![0, 0, 1, 1]).unwrap();
        let ctx = BuildContext {
            instance: Some((&img, &seg)),
            resolution: None,
        };
        assert_eq!(cfg.build(&ctx).unwrap().num_classes(), 2);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_timeout() {
        assert!(serde_json::from_str::<ModelConfig>(
            r#"{"type":"constant","num_classes":2,"x":1}"#
        )
        .is_err());
        let cfg = ModelConfig::Process {
            command: vec!["true".into()],
            timeout_s: 0.0,
            parallel_batches: false,
        };
        assert!(matches!(
            cfg.build(&BuildContext::default()),
            Err(Error::InvalidParam(_))
        ));
    }
}
