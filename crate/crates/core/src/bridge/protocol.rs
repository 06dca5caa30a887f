//! Newline-delimited JSON wire protocol for external classifiers.
//!
//! ```text
//! -> {"op":"hello"}
//! <- {"name":"resnet34","num_classes":43,"input_h":224,"input_w":224}
//! -> {"id":1,"op":"predict","images":[{"h":62,"w":62,"rgb_b64":"..."}]}
//! <- {"id":1,"probs":[[0.01, ...]]}
//! <- {"id":1,"error":"..."}
//! ```
//!
//! Images travel as base64 of row-major 8-bit RGB. The same documents are
//! used for HTTP, one per `POST /predict` body.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ClassifierHandle;
use crate::error::BridgeError;
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireImage {
    pub h: usize,
    pub w: usize,
    pub rgb_b64: String,
}

impl WireImage {
    pub fn encode(img: &Image) -> Self {
        Self {
            h: img.height(),
            w: img.width(),
            rgb_b64: BASE64.encode(img.to_rgb8()),
        }
    }

    pub fn raw_bytes(&self) -> Result<Vec<u8>, String> {
        let bytes = BASE64
            .decode(self.rgb_b64.as_bytes())
            .map_err(|e| format!("bad base64: {e}"))?;
        if bytes.len() != self.h * self.w * 3 {
            return Err(format!(
                "{}x{} image needs {} bytes, got {}",
                self.h,
                self.w,
                self.h * self.w * 3,
                bytes.len()
            ));
        }
        Ok(bytes)
    }

    pub fn decode(&self) -> Result<Image, String> {
        let bytes = self.raw_bytes()?;
        Image::from_rgb8(self.h, self.w, &bytes).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello,
    Predict {
        id: u64,
        images: Vec<WireImage>,
    },
    /// Test-only echo check: SHA-256 of each received RGB buffer.
    Checksum {
        id: u64,
        images: Vec<WireImage>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub name: String,
    pub num_classes: usize,
    pub input_h: usize,
    pub input_w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: u64,
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksumResponse {
    pub id: u64,
    pub sha256: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: Option<u64>,
    pub error: String,
}

const QUOTE_LIMIT: usize = 200;

fn quote(line: &str) -> String {
    if line.len() <= QUOTE_LIMIT {
        line.to_string()
    } else {
        let mut end = QUOTE_LIMIT;
        while !line.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &line[..end])
    }
}

fn malformed(line: &str, reason: impl Into<String>) -> BridgeError {
    BridgeError::Malformed {
        line: quote(line),
        reason: reason.into(),
    }
}

fn parse_object(line: &str) -> Result<serde_json::Map<String, Value>, BridgeError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(malformed(line, "expected a JSON object")),
        Err(e) => Err(malformed(line, e.to_string())),
    }
}

/// Parses a handshake reply.
pub fn parse_hello(line: &str) -> Result<Hello, BridgeError> {
    let map = parse_object(line)?;
    if let Some(err) = map.get("error") {
        return Err(BridgeError::Remote(
            err.as_str().unwrap_or_default().to_string(),
        ));
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| malformed(line, e.to_string()))
}

/// Parses a reply to request `expected_id`, distinguishing remote errors,
/// id mismatches and malformed payloads.
pub fn parse_response<T: serde::de::DeserializeOwned>(
    line: &str,
    expected_id: u64,
) -> Result<T, BridgeError> {
    let map = parse_object(line)?;
    let id = map
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(line, "missing integer id"))?;
    if id != expected_id {
        return Err(BridgeError::IdMismatch {
            expected: expected_id,
            got: id,
        });
    }
    if let Some(err) = map.get("error") {
        return Err(BridgeError::Remote(
            err.as_str().map_or_else(|| err.to_string(), str::to_string),
        ));
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| malformed(line, e.to_string()))
}

/// Handles one request line and returns the reply document.
pub fn handle_line(line: &str, classifier: &ClassifierHandle) -> String {
    let reply = match serde_json::from_str::<Request>(line) {
        Err(e) => {
            let id = serde_json::from_str::<Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(Value::as_u64));
            serde_json::to_value(ErrorResponse {
                id,
                error: format!("bad request: {e}"),
            })
        }
        Ok(Request::Hello) => {
            let (input_h, input_w) = classifier.info().input_size.unwrap_or((0, 0));
            serde_json::to_value(Hello {
                name: classifier.name().to_string(),
                num_classes: classifier.num_classes(),
                input_h,
                input_w,
            })
        }
        Ok(Request::Predict { id, images }) => {
            let result = images
                .iter()
                .map(WireImage::decode)
                .collect::<Result<Vec<_>, _>>()
                .and_then(|imgs| classifier.predict_batch(&imgs).map_err(|e| e.to_string()));
            match result {
                Ok(probs) => serde_json::to_value(PredictResponse { id, probs }),
                Err(error) => serde_json::to_value(ErrorResponse {
                    id: Some(id),
                    error,
                }),
            }
        }
        Ok(Request::Checksum { id, images }) => {
            let sums = images
                .iter()
                .map(|img| img.raw_bytes().map(|b| hex(&Sha256::digest(&b))))
                .collect::<Result<Vec<_>, _>>();
            match sums {
                Ok(sha256) => serde_json::to_value(ChecksumResponse { id, sha256 }),
                Err(error) => serde_json::to_value(ErrorResponse {
                    id: Some(id),
                    error,
                }),
            }
        }
    };
    reply.expect("protocol messages serialise").to_string()
}

/// Serves `classifier` until `reader` reaches end of input.
pub fn serve(
    reader: impl BufRead,
    mut writer: impl Write,
    classifier: &ClassifierHandle,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", handle_line(&line, classifier))?;
        writer.flush()?;
    }
    Ok(())
}

/// Lowercase hex encoding.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
