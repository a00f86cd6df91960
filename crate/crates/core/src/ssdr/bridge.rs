//! Score model served by a child process over line-delimited JSON.
//!
//! Request: `{"id": u64, "points": [[x, y, z], ...]}`. Response:
//! `{"id": u64, "scores": [[sx, sy, sz], ...]}` or `{"id": u64, "error": "..."}`.
//! One request is in flight at a time. Lines that are not valid responses
//! are logged and skipped; the child's stderr is forwarded to the log.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::score::ScoreModel;
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    points: &'a [Point],
}

#[derive(Serialize, Deserialize)]
struct Response {
    id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

struct Channel {
    stdin: ChildStdin,
    lines: Receiver<String>,
    next_id: u64,
}

pub struct BridgeScoreModel {
    child: Mutex<Child>,
    channel: Mutex<Channel>,
    timeout: Duration,
}

impl BridgeScoreModel {
    /// Starts `program args...` with piped standard streams.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::ScoreModelFailure(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                log::info!("score model: {line}");
            }
        });
        Ok(Self {
            child: Mutex::new(child),
            channel: Mutex::new(Channel {
                stdin,
                lines: rx,
                next_id: 0,
            }),
            timeout,
        })
    }

    fn request(&self, points: &[Point]) -> Result<Vec<Point>> {
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| Error::ScoreModelFailure("bridge poisoned by an earlier panic".into()))?;
        let id = ch.next_id;
        ch.next_id += 1;
        let mut line = serde_json::to_string(&Request { id, points })
            .map_err(|e| Error::ScoreModelFailure(format!("cannot encode request: {e}")))?;
        line.push('\n');
        ch.stdin
            .write_all(line.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| Error::ScoreModelFailure(format!("cannot write request {id}: {e}")))?;

        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match ch.lines.recv_timeout(left) {
                Ok(line) => line,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::ScoreModelFailure(format!(
                        "no response to request {id} within {:?}",
                        self.timeout
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::ScoreModelFailure(format!("model exited before answering request {id}")))
                }
            };
            let resp: Response = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(_) => {
                    log::warn!("ignoring non-protocol line from score model: {line}");
                    continue;
                }
            };
            if resp.id != Some(id) {
                log::warn!("ignoring response with id {:?} while waiting for {id}", resp.id);
                continue;
            }
            if let Some(msg) = resp.error {
                return Err(Error::ScoreModelFailure(format!("request {id}: {msg}")));
            }
            let scores = resp
                .scores
                .ok_or_else(|| Error::ScoreModelFailure(format!("response {id} has neither scores nor error")))?;
            if scores.len() != points.len() {
                return Err(Error::ScoreModelFailure(format!(
                    "response {id} has {} scores for {} points",
                    scores.len(),
                    points.len()
                )));
            }
            return Ok(scores);
        }
    }
}

impl ScoreModel for BridgeScoreModel {
    fn scores(&self, points: &[Point]) -> Result<Vec<Point>> {
        self.request(points)
    }
}

impl Drop for BridgeScoreModel {
    fn drop(&mut self) {
        if let Ok(child) = self.child.get_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Server side of the protocol: answers requests from `input` with `model`
/// until end of input. Malformed lines get an error response.
pub fn serve(model: &dyn ScoreModel, input: impl BufRead, mut output: impl Write) -> Result<()> {
    #[derive(Deserialize)]
    struct Incoming {
        id: u64,
        points: Vec<Point>,
    }
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Incoming>(&line) {
            Ok(req) => match model.scores(&req.points) {
                Ok(scores) => Response {
                    id: Some(req.id),
                    scores: Some(scores),
                    error: None,
                },
                Err(e) => Response {
                    id: Some(req.id),
                    scores: None,
                    error: Some(e.to_string()),
                },
            },
            Err(e) => Response {
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64())),
                scores: None,
                error: Some(format!("malformed request: {e}")),
            },
        };
        let text = serde_json::to_string(&resp).map_err(|e| Error::ScoreModelFailure(e.to_string()))?;
        writeln!(output, "{text}")?;
        output.flush()?;
    }
    Ok(())
}
