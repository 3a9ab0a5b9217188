//! JSON-lines transcripts: recording, replay and integrity checks.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{request_hash, AgentRole, ChatRequest, ChatTurn, GatewayError, LlmBackend};

/// One request/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: AgentRole,
    pub model: String,
    pub request_hash: String,
    pub request: Vec<ChatTurn>,
    pub response: String,
    pub timestamp: String,
}

impl Exchange {
    pub fn new(request: &ChatRequest, response: &str) -> Self {
        Exchange {
            role: request.role,
            model: request.model.clone(),
            request_hash: request.hash(),
            request: request.messages.clone(),
            response: response.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }

    /// Last user turn of the request, if any.
    pub fn last_user(&self) -> Option<&str> {
        self.request
            .iter()
            .rev()
            .find(|t| t.role_tag == super::RoleTag::User)
            .map(|t| t.content.as_str())
    }
}

fn transcript_err(path: &Path, message: impl Into<String>) -> GatewayError {
    GatewayError::Transcript {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Parses a transcript file; any malformed line is an error naming it.
pub fn read_transcript(path: &Path) -> Result<Vec<Exchange>, GatewayError> {
    let file = File::open(path).map_err(|e| transcript_err(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| transcript_err(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exchange = serde_json::from_str(&line)
            .map_err(|e| transcript_err(path, format!("line {}: {e}", i + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

/// Checks that every line parses and that each stored hash matches its
/// request. Returns the number of exchanges.
pub fn verify_transcript(path: &Path) -> Result<usize, GatewayError> {
    let bytes = std::fs::read(path).map_err(|e| transcript_err(path, e.to_string()))?;
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        return Err(transcript_err(path, "last line is not newline-terminated (truncated?)"));
    }
    let exchanges = read_transcript(path)?;
    for (i, ex) in exchanges.iter().enumerate() {
        let h = request_hash(ex.role, &ex.request);
        if h != ex.request_hash {
            return Err(transcript_err(
                path,
                format!("exchange {} ({}) hash mismatch: stored {}, computed {h}", i + 1, ex.role, ex.request_hash),
            ));
        }
    }
    Ok(exchanges.len())
}

/// Appends exchanges to a JSON-lines file; appends are serialized.
pub struct TranscriptWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptWriter {
    /// Creates (truncating) the transcript file.
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| transcript_err(path, e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| transcript_err(path, e.to_string()))?;
        Ok(TranscriptWriter {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, ex: &Exchange) -> Result<(), GatewayError> {
        let mut line = serde_json::to_string(ex).map_err(|e| transcript_err(&self.path, e.to_string()))?;
        line.push('\n');
        let mut f = self.file.lock().expect("transcript writer lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| transcript_err(&self.path, e.to_string()))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Serves recorded responses keyed by (role, request hash). Repeated
/// identical requests are served in recording order; an exhausted or
/// unknown key is an error, never a fabricated reply.
pub struct ReplayBackend {
    queues: Mutex<HashMap<(AgentRole, String), VecDeque<String>>>,
    len: usize,
}

impl ReplayBackend {
    pub fn from_exchanges(exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let mut queues: HashMap<(AgentRole, String), VecDeque<String>> = HashMap::new();
        let mut len = 0;
        for ex in exchanges {
            queues
                .entry((ex.role, ex.request_hash))
                .or_default()
                .push_back(ex.response);
            len += 1;
        }
        ReplayBackend {
            queues: Mutex::new(queues),
            len,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_exchanges(read_transcript(path)?))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Responses not yet served.
    pub fn remaining(&self) -> usize {
        self.queues.lock().expect("replay lock").values().map(|q| q.len()).sum()
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let hash = request.hash();
        let mut queues = self.queues.lock().expect("replay lock");
        queues
            .get_mut(&(request.role, hash.clone()))
            .and_then(|q| q.pop_front())
            .ok_or(GatewayError::MissingFixture {
                role: request.role,
                hash,
            })
    }
}
