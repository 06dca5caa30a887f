//! Browser bindings: segment an image, explain a planted oracle, and measure
//! explanation stability, all client-side.

mod session;

pub use session::{PlantedRun, Session};

use wasm_bindgen::prelude::*;

fn js(e: limescope::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
pub struct Explained {
    overlay: Vec<u8>,
    json: String,
}

#[wasm_bindgen]
impl Explained {
    /// RGBA pixels of the overlay.
    #[wasm_bindgen(getter)]
    pub fn overlay(&self) -> Vec<u8> {
        self.overlay.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn json(&self) -> String {
        self.json.clone()
    }
}

#[wasm_bindgen]
impl Demo {
    /// Segments RGBA pixels (as from `getImageData`).
    #[wasm_bindgen(constructor)]
    pub fn new(
        rgba: &[u8],
        width: usize,
        height: usize,
        segments: usize,
        compactness: f64,
    ) -> Result<Demo, JsError> {
        Session::new(rgba, width, height, segments, compactness)
            .map(|inner| Demo { inner })
            .map_err(js)
    }

    #[wasm_bindgen(js_name = numSegments)]
    pub fn num_segments(&self) -> usize {
        self.inner.num_segments()
    }

    /// Superpixel under pixel (x, y), or -1 outside the image.
    #[wasm_bindgen(js_name = segmentAt)]
    pub fn segment_at(&self, x: usize, y: usize) -> i32 {
        self.inner.segment_at(x, y).map_or(-1, |s| s as i32)
    }

    pub fn outlined(&self) -> Vec<u8> {
        self.inner.outlined()
    }

    pub fn explain(
        &self,
        planted: usize,
        negative: bool,
        samples: usize,
        max_features: usize,
        seed: u32,
        gray_fill: bool,
    ) -> Result<Explained, JsError> {
        let run = PlantedRun {
            planted,
            negative,
            samples,
            max_features,
            seed: seed.into(),
            gray_fill,
        };
        let (exp, overlay) = self.inner.explain(&run).map_err(js)?;
        Ok(Explained {
            overlay,
            json: exp.to_json().map_err(js)?,
        })
    }

    /// Stability report as JSON.
    #[allow(clippy::too_many_arguments)]
    pub fn stability(
        &self,
        planted: usize,
        negative: bool,
        samples: usize,
        max_features: usize,
        seed: u32,
        gray_fill: bool,
        runs: usize,
        top_k: usize,
    ) -> Result<String, JsError> {
        let run = PlantedRun {
            planted,
            negative,
            samples,
            max_features,
            seed: seed.into(),
            gray_fill,
        };
        let report = self.inner.stability(&run, runs, top_k).map_err(js)?;
        serde_json::to_string(&report).map_err(|e| JsError::new(&e.to_string()))
    }
}
