//! Black-box classifier access.
//!
//! Every classifier, whether in-process, a child process speaking
//! newline-delimited JSON, or an HTTP endpoint, is reached through a
//! [`ClassifierHandle`] which validates the probability rows it returns.

mod config;
#[cfg(feature = "http")]
mod http;
mod process;
pub mod protocol;
pub mod reference;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{BridgeError, Error, Result};
use crate::image::Image;

pub use config::{BuildContext, ModelConfig};
#[cfg(feature = "http")]
pub use http::HttpClassifier;
pub use process::StdioClassifier;
pub use reference::{
    make_mean_color_classifier, make_planted_oracle, ConstantClassifier, LabelOracle,
    MeanColorClassifier, PlantedOracle, RandomClassifier, Slope,
};

/// Tolerance on `|row sum - 1|` for probability rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Default per-batch timeout for out-of-process classifiers.
pub const DEFAULT_TIMEOUT_S: f64 = 30.0;

/// Anything that maps a batch of images to class-probability rows.
///
/// Implementations only need to produce one row per image; width and
/// normalisation are checked by [`ClassifierHandle::predict_batch`].
pub trait Classifier: Send + Sync {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    InProcess,
    ExternalProcess,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Whether concurrent `predict` calls are allowed.
    pub parallel_batches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierInfo {
    pub name: String,
    pub num_classes: usize,
    /// `(height, width)` the model consumes; `None` accepts any size.
    pub input_size: Option<(usize, usize)>,
    pub transport: Transport,
    pub capabilities: Capabilities,
}

/// A classifier plus its metadata. Calls are serialised through a lock
/// unless the backend declares `parallel_batches`.
pub struct ClassifierHandle {
    info: ClassifierInfo,
    backend: Box<dyn Classifier>,
    serial: Mutex<()>,
}

impl std::fmt::Debug for ClassifierHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClassifierHandle")
            .field("info", &self.info)
            .finish_non_exhaustive()
    }
}

impl ClassifierHandle {
    pub fn new(info: ClassifierInfo, backend: Box<dyn Classifier>) -> Result<Self> {
        if info.num_classes < 2 {
            return Err(Error::InvalidParam(format!(
                "a classifier needs at least 2 classes, got {}",
                info.num_classes
            )));
        }
        Ok(Self {
            info,
            backend,
            serial: Mutex::new(()),
        })
    }

    /// Wraps an in-process classifier that tolerates concurrent calls.
    pub fn in_process(
        name: impl Into<String>,
        num_classes: usize,
        input_size: Option<(usize, usize)>,
        backend: impl Classifier + 'static,
    ) -> Result<Self> {
        Self::new(
            ClassifierInfo {
                name: name.into(),
                num_classes,
                input_size,
                transport: Transport::InProcess,
                capabilities: Capabilities {
                    parallel_batches: true,
                },
            },
            Box::new(backend),
        )
    }

    pub fn info(&self) -> &ClassifierInfo {
        &self.info
    }

    pub fn name(&self) -> &str {
        &self.info.name
    }

    pub fn num_classes(&self) -> usize {
        self.info.num_classes
    }

    pub fn parallel_batches(&self) -> bool {
        self.info.capabilities.parallel_batches
    }

    /// One probability row per image, in input order.
    pub fn predict_batch(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        if images.is_empty() {
            return Err(Error::InvalidParam("empty prediction batch".into()));
        }
        let rows = if self.parallel_batches() {
            self.backend.predict(images)?
        } else {
            let _guard = self.serial.lock().unwrap_or_else(|e| e.into_inner());
            self.backend.predict(images)?
        };
        check_rows(&rows, images.len(), self.info.num_classes)?;
        Ok(rows)
    }
}

/// Checks row count, width and normalisation of a probability matrix.
pub fn check_rows(rows: &[Vec<f64>], expected_rows: usize, num_classes: usize) -> Result<()> {
    if rows.len() != expected_rows {
        return Err(BridgeError::RowCount {
            expected: expected_rows,
            got: rows.len(),
        }
        .into());
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != num_classes {
            return Err(BridgeError::RowWidth {
                expected: num_classes,
                got: row.len(),
            }
            .into());
        }
        let sum: f64 = row.iter().sum();
        let in_range = row
            .iter()
            .all(|p| p.is_finite() && *p >= -ROW_SUM_TOLERANCE);
        if !in_range || (sum - 1.0).abs() > ROW_SUM_TOLERANCE || !sum.is_finite() {
            return Err(Error::Normalization { row: i, sum });
        }
    }
    Ok(())
}
