//! Transcript-driven mock chat client for offline, deterministic runs.
//!
//! A transcript is JSONL, one entry per expected request in order:
//!
//! ```text
//! {"ordinal": 0, "reply": "Techniques: T1059"}
//! {"ordinal": 1, "expect_fingerprint": "<sha256 hex>", "reply": "..."}
//! {"ordinal": 2, "fail": "connection reset"}
//! ```
//!
//! `ordinal` is the 0-based request sequence number. `expect_fingerprint`
//! optionally pins the entry to [`request_fingerprint`] of the request that
//! must arrive at that position (enforced in strict mode). `fail` makes the
//! entry answer with a retryable transport error instead of a reply, which
//! is how tests inject faults.

use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::client::{request_fingerprint, ChatClient, ChatRequest, ChatResponse, ClientError};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("transcript ordinals must be 0..n in order; expected {expected}, found {found}")]
    NonSequential { expected: usize, found: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub ordinal: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// When set, the entry simulates a transport failure with this message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
}

/// Mock [`ChatClient`] answering from a fixed transcript by request ordinal.
pub struct ScriptedClient {
    entries: Vec<TranscriptEntry>,
    strict: bool,
    cursor: Mutex<usize>,
}

impl ScriptedClient {
    /// Load a transcript file. `strict` additionally enforces any
    /// `expect_fingerprint` pins against incoming requests.
    pub fn from_path(path: impl AsRef<Path>, strict: bool) -> Result<Self, ScriptError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file), strict)
    }

    pub fn from_reader(reader: impl BufRead, strict: bool) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(&line).map_err(|e| ScriptError::Line {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if entry.reply.is_none() && entry.fail.is_none() {
                return Err(ScriptError::Line {
                    line: idx + 1,
                    message: "entry needs either `reply` or `fail`".to_string(),
                });
            }
            entries.push(entry);
        }
        for (expected, entry) in entries.iter().enumerate() {
            if entry.ordinal != expected {
                return Err(ScriptError::NonSequential {
                    expected,
                    found: entry.ordinal,
                });
            }
        }
        Ok(Self {
            entries,
            strict,
            cursor: Mutex::new(0),
        })
    }

    /// Build an in-memory transcript of plain replies (ordinals implied).
    pub fn from_replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let entries = replies
            .into_iter()
            .enumerate()
            .map(|(ordinal, reply)| TranscriptEntry {
                ordinal,
                expect_fingerprint: None,
                reply: Some(reply.into()),
                fail: None,
            })
            .collect();
        Self {
            entries,
            strict: false,
            cursor: Mutex::new(0),
        }
    }

    /// Number of requests served (or failed) so far.
    pub fn requests_seen(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.entries.len().saturating_sub(self.requests_seen())
    }
}

impl ChatClient for ScriptedClient {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let mut cursor = self.cursor.lock().unwrap();
        let ordinal = *cursor;
        let Some(entry) = self.entries.get(ordinal) else {
            return Err(ClientError::TranscriptExhausted { ordinal });
        };
        *cursor += 1;
        drop(cursor);

        if self.strict {
            if let Some(expected) = &entry.expect_fingerprint {
                let actual = request_fingerprint(request);
                if *expected != actual {
                    return Err(ClientError::FingerprintMismatch {
                        ordinal,
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
        }
        if let Some(message) = &entry.fail {
            return Err(ClientError::Transport(message.clone()));
        }
        Ok(ChatResponse {
            text: entry.reply.clone().expect("validated at load"),
        })
    }
}
