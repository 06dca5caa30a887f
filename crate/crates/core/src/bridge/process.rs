//! Child-process transport: one JSON document per line on stdin/stdout.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use super::protocol::{self, ChecksumResponse, Hello, PredictResponse, Request, WireImage};
use super::{Capabilities, Classifier, ClassifierHandle, ClassifierInfo, Transport};
use crate::error::{BridgeError, Result};
use crate::image::Image;

struct Channel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// Classifier reached over a line-oriented byte stream, normally the
/// standard input/output of a child process.
pub struct StdioClassifier {
    channel: Mutex<Channel>,
    timeout: Duration,
    child: Option<Child>,
}

impl StdioClassifier {
    /// Spawns `command` and performs the handshake.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<(Self, Hello)> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| BridgeError::Transport("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Transport(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = Self::from_streams(stdout, stdin, timeout);
        client.child = Some(child);
        let hello = client.hello()?;
        Ok((client, hello))
    }

    /// Client over arbitrary streams; call [`hello`](Self::hello) before use.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self {
            channel: Mutex::new(Channel {
                writer: Box::new(writer),
                lines: rx,
                next_id: 1,
            }),
            timeout,
            child: None,
        }
    }

    pub fn hello(&self) -> Result<Hello, BridgeError> {
        let mut ch = self.lock();
        send(&mut ch, &Request::Hello)?;
        let line = recv(&ch, self.timeout)?;
        protocol::parse_hello(&line)
    }

    /// Asks the peer for the SHA-256 of each image as it received it.
    pub fn checksums(&self, images: &[Image]) -> Result<Vec<String>, BridgeError> {
        let mut ch = self.lock();
        let id = take_id(&mut ch);
        send(
            &mut ch,
            &Request::Checksum {
                id,
                images: images.iter().map(WireImage::encode).collect(),
            },
        )?;
        let line = recv(&ch, self.timeout)?;
        Ok(protocol::parse_response::<ChecksumResponse>(&line, id)?.sha256)
    }

    /// Wraps into a handle using the handshake metadata.
    pub fn into_handle(self, hello: Hello, parallel_batches: bool) -> Result<ClassifierHandle> {
        let input_size =
            (hello.input_h > 0 && hello.input_w > 0).then_some((hello.input_h, hello.input_w));
        ClassifierHandle::new(
            ClassifierInfo {
                name: hello.name,
                num_classes: hello.num_classes,
                input_size,
                transport: Transport::ExternalProcess,
                capabilities: Capabilities { parallel_batches },
            },
            Box::new(self),
        )
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Channel> {
        self.channel.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn take_id(ch: &mut Channel) -> u64 {
    let id = ch.next_id;
    ch.next_id += 1;
    id
}

fn send(ch: &mut Channel, req: &Request) -> Result<(), BridgeError> {
    let mut doc = serde_json::to_string(req).expect("requests serialise");
    doc.push('\n');
    ch.writer
        .write_all(doc.as_bytes())
        .and_then(|_| ch.writer.flush())
        .map_err(|e| BridgeError::Transport(format!("write failed: {e}")))
}

fn recv(ch: &Channel, timeout: Duration) -> Result<String, BridgeError> {
    match ch.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => Ok(line),
        Ok(Err(e)) => Err(BridgeError::Transport(format!("read failed: {e}"))),
        Err(RecvTimeoutError::Timeout) => Err(BridgeError::Timeout(timeout)),
        Err(RecvTimeoutError::Disconnected) => Err(BridgeError::Transport(
            "classifier closed its output".into(),
        )),
    }
}

impl Classifier for StdioClassifier {
    fn predict(&self, images: &[Image]) -> Result<Vec<Vec<f64>>, BridgeError> {
        let mut ch = self.lock();
        let id = take_id(&mut ch);
        send(
            &mut ch,
            &Request::Predict {
                id,
                images: images.iter().map(WireImage::encode).collect(),
            },
        )?;
        let line = recv(&ch, self.timeout)?;
        Ok(protocol::parse_response::<PredictResponse>(&line, id)?.probs)
    }
}

impl Drop for StdioClassifier {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
