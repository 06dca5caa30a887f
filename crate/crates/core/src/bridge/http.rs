//! Network transport: the line-protocol documents as `POST /predict` bodies.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use super::protocol::{self, Hello, PredictResponse, Request, WireImage};
use super::{Capabilities, Classifier, ClassifierHandle, ClassifierInfo, Transport};
use crate::error::{BridgeError, Result};
use crate::image::Image;

pub struct HttpClassifier {
    agent: ureq::Agent,
    endpoint: String,
    timeout: Duration,
    next_id: AtomicU64,
}

impl HttpClassifier {
    /// `base_url` is the server root; requests go to `<base_url>/predict`.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<(Self, Hello)> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let client = Self {
            agent,
            endpoint: format!("{}/predict", base_url.trim_end_matches('/')),
            timeout,
            next_id: AtomicU64::new(1),
        };
        let reply = client.post(&Request::Hello)?;
        let hello = protocol::parse_hello(&reply)?;
        Ok((client, hello))
    }

    pub fn into_handle(self, hello: Hello, parallel_batches: bool) -> Result<ClassifierHandle> {
        let input_size =
            (hello.input_h > 0 && hello.input_w > 0).then_some((hello.input_h, hello.input_w));
        ClassifierHandle::new(
            ClassifierInfo {
                name: hello.name,
                num_classes: hello.num_classes,
                input_size,
                transport: Transport::Network,
                capabilities: Capabilities { parallel_batches },
            },
            Box::new(self),
        )
    }

    fn post(&self, req: &Request) -> Result<String, BridgeError> {
        let body = serde_json::to_string(req).expect("requests serialise");
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BridgeError::Timeout(self.timeout),
                other => BridgeError::Transport(other.to_string()),
            })?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| BridgeError::Transport(format!("cannot read response body: {e}")))
    }
}

impl Classifier for HttpClassifier {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let reply = self.post(&Request::Predict {
            id,
            images: images.iter().map(WireImage::encode).collect(),
        })?;
        Ok(protocol::parse_response::<PredictResponse>(reply.trim(), id)?.probs)
    }
}
