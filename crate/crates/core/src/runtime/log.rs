//! Append-only JSONL event log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::events::{Event, EventRecord, EventSink};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

type Listener = Box<dyn Fn(&EventRecord) + Send + Sync>;

/// In-memory, totally ordered record of a session, optionally mirrored to a
/// JSONL file. Sequence numbers are dense from zero.
pub struct EventLog {
    session_id: String,
    records: Vec<EventRecord>,
    file: Option<BufWriter<File>>,
    listeners: Vec<Listener>,
}

impl EventLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            records: Vec::new(),
            file: None,
            listeners: Vec::new(),
        }
    }

    pub fn with_file(session_id: impl Into<String>, path: &Path) -> Result<Self, LogError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut log = Self::new(session_id);
        log.file = Some(BufWriter::new(File::create(path)?));
        Ok(log)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    /// Registers a callback invoked synchronously for every appended record.
    pub fn subscribe(&mut self, listener: impl Fn(&EventRecord) + Send + Sync + 'static) {
        self.listeners.push(Box::new(listener));
    }

    pub fn append(&mut self, t_logical_ms: u64, event: Event) -> &EventRecord {
        let record = EventRecord {
            seq: self.records.len() as u64,
            t_logical_ms,
            session_id: self.session_id.clone(),
            event,
        };
        if let Some(file) = &mut self.file {
            let line = serde_json::to_string(&record).expect("event records serialize");
            if let Err(e) = writeln!(file, "{line}") {
                log::error!("writing event log: {e}");
            }
        }
        for listener in &self.listeners {
            listener(&record);
        }
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn since(&self, from_seq: u64) -> &[EventRecord] {
        let start = (from_seq as usize).min(self.records.len());
        &self.records[start..]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        if let Some(file) = &mut self.file {
            file.flush()?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.records)
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

impl EventSink for EventLog {
    fn emit(&mut self, t_logical_ms: u64, event: Event) {
        self.append(t_logical_ms, event);
    }
}

pub fn to_jsonl(records: &[EventRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("event records serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSONL text. Blank lines are rejected along with malformed ones.
pub fn parse_jsonl(text: &str) -> Result<Vec<EventRecord>, LogError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| LogError::Schema {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        records.push(serde_json::from_str(&line).map_err(|e| LogError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}
