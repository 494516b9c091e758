//! Append-only session logs: one JSON record per line, one file per session,
//! a schema header first. Each append is synced before it returns.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vpsim_core::knowledge_base::ScenarioSpec;
use vpsim_core::pipeline::{SentimentRecord, Turn};
use vpsim_core::scenario::{PersonaProfile, PromptPolicy};

pub const SESSION_SCHEMA: &str = "vpsim.session.v1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub schema: String,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub scenario: ScenarioSpec,
    pub persona: PersonaProfile,
    pub policy: PromptPolicy,
    pub memory_window: usize,
    pub memory_char_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Turn { turn: Turn },
    Sentiment { sentiment: SentimentRecord },
    Closed { at: DateTime<Utc> },
}

/// A session as reconstructed from its log.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub header: SessionHeader,
    pub turns: Vec<Turn>,
    pub closed_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        Ok(SessionStore { dir })
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn create(&self, header: &SessionHeader) -> Result<(), StoreError> {
        let path = self.path_for(&header.session_id);
        let line = serde_json::to_string(header).expect("header serializes");
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(io)?;
        writeln!(f, "{line}").map_err(io)?;
        f.sync_all().map_err(io)?;
        // Make the new directory entry durable too.
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    pub fn append(&self, session_id: &str, record: &LogRecord) -> Result<(), StoreError> {
        let path = self.path_for(session_id);
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    /// Every session in the store, ordered by creation time.
    pub fn load_all(&self) -> Result<Vec<StoredSession>, StoreError> {
        let entries = fs::read_dir(&self.dir).map_err(|source| StoreError::Io {
            path: self.dir.clone(),
            source,
        })?;
        let mut out = Vec::new();
        for entry in entries {
            let path = entry
                .map_err(|source| StoreError::Io { path: self.dir.clone(), source })?
                .path();
            if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
                out.push(load_session(&path)?);
            }
        }
        out.sort_by(|a, b| {
            (a.header.created_at, &a.header.session_id).cmp(&(b.header.created_at, &b.header.session_id))
        });
        Ok(out)
    }
}

/// Parses one log. A final line without a newline is a write cut short by a
/// crash and was never acknowledged, so it is dropped.
pub fn load_session(path: &Path) -> Result<StoredSession, StoreError> {
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    let corrupt = |line: usize, message: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = Vec::new();
    loop {
        let mut buf = String::new();
        if reader.read_line(&mut buf).map_err(io)? == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            tracing::warn!(path = %path.display(), "dropping incomplete trailing record");
            break;
        }
        lines.push(buf);
    }
    let Some(first) = lines.first() else {
        return Err(corrupt(1, "empty log".into()));
    };
    let header: SessionHeader = serde_json::from_str(first).map_err(|e| corrupt(1, e.to_string()))?;
    if header.schema != SESSION_SCHEMA {
        return Err(corrupt(1, format!("unsupported schema `{}`", header.schema)));
    }
    let mut turns: Vec<Turn> = Vec::new();
    let mut closed_at = None;
    for (i, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        match rec {
            LogRecord::Turn { turn } => {
                let expected = turns.len() as u64 + 1;
                if turn.turn_id != expected {
                    return Err(corrupt(i + 1, format!("turn id {} where {expected} expected", turn.turn_id)));
                }
                turns.push(turn);
            }
            LogRecord::Sentiment { sentiment } => {
                match turns.iter_mut().find(|t| t.turn_id == sentiment.turn_id) {
                    Some(t) => t.attach_sentiment(&sentiment),
                    None => return Err(corrupt(i + 1, format!("sentiment for unknown turn {}", sentiment.turn_id))),
                }
            }
            LogRecord::Closed { at } => closed_at = Some(at),
        }
    }
    Ok(StoredSession { header, turns, closed_at })
}
