//! Append-only log storage behind the remote logger component. Entries are
//! kept in insertion order and can be exported as line-delimited JSON.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    Info,
    Warn,
    Error,
}

/// One log record emitted by a framework component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time_ms: f64,
    pub source: String,
    pub level: LogLevel,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogStoreError {
    #[error("log store is closed")]
    Closed,
}

/// In-memory append-only store.
#[derive(Debug, Default)]
pub struct LogStore {
    entries: Vec<LogEntry>,
    closed: bool,
}

impl LogStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one entry; fails once the store has been closed.
    pub fn append(&mut self, entry: LogEntry) -> Result<(), LogStoreError> {
        if self.closed {
            return Err(LogStoreError::Closed);
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Entries from one component, in insertion order.
    pub fn by_source(&self, source: &str) -> Vec<&LogEntry> {
        self.entries.iter().filter(|e| e.source == source).collect()
    }

    /// Writes the store as line-delimited JSON.
    pub fn export_ldjson(&self, mut w: impl Write) -> std::io::Result<()> {
        for entry in &self.entries {
            serde_json::to_writer(&mut w, entry)?;
            writeln!(w)?;
        }
        Ok(())
    }
}
