use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendReply, ChatRequest, GatewayError};
use crate::prompts::StageId;

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub stage: StageId,
    /// Either the request's logical key or the SHA-256 hex digest of its prompt.
    pub key: String,
    pub response: String,
}

/// Deterministic backend answering from a fixed table.
///
/// Lookup tries `(stage, request.key)` first, then `(stage, sha256(prompt))`.
/// Token usage is synthesized as `ceil(chars / 4)` for prompt and response.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<(StageId, String), String>,
    calls: AtomicU64,
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn synthetic_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut backend = ScriptedBackend::new();
        for e in entries {
            backend.insert(e.stage, e.key, e.response);
        }
        backend
    }

    /// Reads a line-delimited script; blank lines and `#` comments are skipped.
    pub fn parse(reader: impl Read) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(trimmed).map_err(|e| GatewayError::Script {
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(ScriptedBackend::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        ScriptedBackend::parse(fs::File::open(path)?)
    }

    pub fn insert(&mut self, stage: StageId, key: impl Into<String>, response: impl Into<String>) {
        self.entries.insert((stage, key.into()), response.into());
    }

    pub fn remove(&mut self, stage: StageId, key: &str) -> Option<String> {
        self.entries.remove(&(stage, key.to_string()))
    }

    /// Entries sorted by stage, then key.
    pub fn entries(&self) -> Vec<ScriptEntry> {
        let mut out: Vec<ScriptEntry> = self
            .entries
            .iter()
            .map(|((stage, key), response)| ScriptEntry {
                stage: *stage,
                key: key.clone(),
                response: response.clone(),
            })
            .collect();
        out.sort_by(|a, b| (a.stage, &a.key).cmp(&(b.stage, &b.key)));
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, request: &ChatRequest) -> Option<&String> {
        self.entries
            .get(&(request.stage, request.key.clone()))
            .or_else(|| self.entries.get(&(request.stage, prompt_digest(&request.prompt))))
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.lookup(request).ok_or_else(|| GatewayError::ScriptMiss {
            stage: request.stage,
            key: request.key.clone(),
        })?;
        Ok(BackendReply {
            text: text.clone(),
            input_tokens: synthetic_tokens(&request.prompt),
            output_tokens: synthetic_tokens(text),
            elapsed: Duration::ZERO,
        })
    }
}
