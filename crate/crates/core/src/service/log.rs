//! The append-only command log: one JSON object per line, dense sequence
//! numbers starting at 1.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::escalation::EscalationEvent;
use crate::estimator::Assessment;
use crate::model::Warning;
use crate::warehouse::ExtractionBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationCommand {
    pub warning_id: String,
    pub event: EscalationEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum Command {
    WarningIngested(Warning),
    Assessed {
        assessment: Box<Assessment>,
        event: EscalationEvent,
    },
    Sos1(EscalationCommand),
    Pledge(EscalationCommand),
    Sos2(EscalationCommand),
    Resolved(EscalationCommand),
    EtlBatch(ExtractionBatch),
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::WarningIngested(_) => "warning-ingested",
            Command::Assessed { .. } => "assessed",
            Command::Sos1(_) => "sos1",
            Command::Pledge(_) => "pledge",
            Command::Sos2(_) => "sos2",
            Command::Resolved(_) => "resolved",
            Command::EtlBatch(_) => "etl-batch",
        }
    }

    /// Wraps a post-assessment escalation event under its own kind.
    pub fn escalation(warning_id: &str, event: EscalationEvent) -> Command {
        let cmd = EscalationCommand {
            warning_id: warning_id.to_owned(),
            event,
        };
        match cmd.event {
            EscalationEvent::Sos1Issued { .. } => Command::Sos1(cmd),
            EscalationEvent::PledgeRecorded { .. } => Command::Pledge(cmd),
            EscalationEvent::Sos2Issued { .. } => Command::Sos2(cmd),
            EscalationEvent::Resolved { .. } => Command::Resolved(cmd),
            EscalationEvent::Assessed { .. } => {
                panic!("assessment events are logged together with their assessment")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEvent {
    #[serde(rename = "sequence_number")]
    pub seq: u64,
    pub recorded_at: DateTime<Utc>,
    #[serde(flatten)]
    pub command: Command,
}

impl CommandEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("command events serialise")
    }
}

/// Durable storage for command lines. `append` must not return until the
/// line is as durable as the backend allows.
pub trait EventLog: Send + Sync {
    fn append(&mut self, line: &str) -> io::Result<()>;
}

/// An in-process log, for tests and the simulator.
#[derive(Debug, Clone, Default)]
pub struct MemoryLog {
    lines: Vec<String>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn contents(&self) -> String {
        self.lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

impl EventLog for MemoryLog {
    fn append(&mut self, line: &str) -> io::Result<()> {
        self.lines.push(line.to_owned());
        Ok(())
    }
}

/// A log that shares its lines with the caller, so tests and the simulator
/// can read back what the engine wrote.
#[derive(Debug, Clone, Default)]
pub struct SharedLog(std::sync::Arc<std::sync::Mutex<MemoryLog>>);

impl SharedLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contents(&self) -> String {
        self.0.lock().expect("log lock").contents()
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("log lock").lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EventLog for SharedLog {
    fn append(&mut self, line: &str) -> io::Result<()> {
        self.0.lock().expect("log lock").append(line)
    }
}

/// A JSONL file opened for appending; every line is synced before
/// `append` returns.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    file: File,
}

impl FileLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(FileLog {
            path: path.to_owned(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventLog for FileLog {
    fn append(&mut self, line: &str) -> io::Result<()> {
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }
}

/// Parses log text into events, checking that sequence numbers run 1, 2, 3
/// without gaps. A final line with no terminating newline that does not
/// parse is a torn write from a crash and is dropped; anything else that
/// fails is `CorruptLog` at the sequence number where it was expected.
pub fn parse_log(text: &str) -> Result<Vec<CommandEvent>, ServiceError> {
    let mut events: Vec<CommandEvent> = Vec::new();
    let mut segments: Vec<&str> = text.split('\n').collect();
    let torn_tail = segments.pop().filter(|s| !s.trim().is_empty());
    for line in segments {
        if line.trim().is_empty() {
            continue;
        }
        let expected = events.len() as u64 + 1;
        let ev: CommandEvent =
            serde_json::from_str(line).map_err(|e| ServiceError::CorruptLog {
                seq: expected,
                reason: e.to_string(),
            })?;
        if ev.seq != expected {
            return Err(ServiceError::CorruptLog {
                seq: expected,
                reason: format!("found sequence number {}", ev.seq),
            });
        }
        events.push(ev);
    }
    if let Some(tail) = torn_tail {
        let expected = events.len() as u64 + 1;
        if let Ok(ev) = serde_json::from_str::<CommandEvent>(tail) {
            if ev.seq != expected {
                return Err(ServiceError::CorruptLog {
                    seq: expected,
                    reason: format!("found sequence number {}", ev.seq),
                });
            }
            events.push(ev);
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::escalation::Pledge;
    use crate::model::parse_timestamp;

    fn ev(seq: u64) -> CommandEvent {
        let at = parse_timestamp("2024-01-01T00:00:00Z").unwrap();
        CommandEvent {
            seq,
            recorded_at: at,
            command: Command::escalation(
                "w",
                EscalationEvent::PledgeRecorded {
                    pledge: Pledge {
                        source_region_code: "1171".into(),
                        medics_pledged: 3,
                        recorded_at: at,
                    },
                },
            ),
        }
    }

    fn text(seqs: &[u64]) -> String {
        seqs.iter().map(|s| ev(*s).to_line() + "\n").collect()
    }

    #[test]
    fn line_shape() {
        let v: serde_json::Value = serde_json::from_str(&ev(1).to_line()).unwrap();
        assert_eq!(v["sequence_number"], 1);
        assert_eq!(v["kind"], "pledge");
        assert_eq!(v["payload"]["warning_id"], "w");
        assert_eq!(parse_log(&text(&[1])).unwrap(), vec![ev(1)]);
    }

    #[test]
    fn empty_log() {
        assert!(parse_log("").unwrap().is_empty());
    }

    #[test]
    fn gap_reports_missing_sequence() {
        let seqs: Vec<u64> = (1..=56).chain(58..=60).collect();
        match parse_log(&text(&seqs)) {
            Err(ServiceError::CorruptLog { seq, .. }) => assert_eq!(seq, 57),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn garbage_mid_log_is_corrupt() {
        let t = text(&[1]) + "{not json\n" + &text(&[2]);
        assert!(matches!(
            parse_log(&t),
            Err(ServiceError::CorruptLog { seq: 2, .. })
        ));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let full = text(&[1, 2]);
        let cut = &full[..full.len() - 10];
        assert_eq!(parse_log(cut).unwrap(), vec![ev(1)]);
        let unterminated = full.trim_end();
        assert_eq!(parse_log(unterminated).unwrap().len(), 2);
    }

    #[test]
    fn file_log_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut log = FileLog::open(&path).unwrap();
        log.append(&ev(1).to_line()).unwrap();
        drop(log);
        let mut log = FileLog::open(&path).unwrap();
        log.append(&ev(2).to_line()).unwrap();
        let t = std::fs::read_to_string(&path).unwrap();
        assert_eq!(parse_log(&t).unwrap(), vec![ev(1), ev(2)]);
    }
}
