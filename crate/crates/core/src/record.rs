//! JSON-lines session log and replay.
//!
//! The first line is a header carrying the run configuration. Every other
//! line is one tick: the input that arrived over the uplink, the pause flag,
//! the resulting state frame and any events. Replay rebuilds the session from
//! the header and re-drives [`Session::advance`] with the recorded inputs.

use crate::config::{ConfigError, RunConfig};
use crate::session::{AppliedInput, Session, SessionEvent, StateFrame, TickOutput};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("log config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub input: Option<AppliedInput>,
    #[serde(default)]
    pub paused: bool,
    pub state: StateFrame,
    #[serde(default)]
    pub events: Vec<SessionEvent>,
}

impl TickRecord {
    pub fn from_output(out: &TickOutput) -> Self {
        TickRecord {
            tick: out.state.tick,
            input: out.applied,
            paused: out.paused,
            state: out.state.clone(),
            events: out.events.clone(),
        }
    }
}

pub struct Recorder<W: Write> {
    out: W,
}

impl<W: Write> Recorder<W> {
    pub fn new(mut out: W, config: &RunConfig) -> std::io::Result<Self> {
        let header = LogHeader { config: config.clone() };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        Ok(Recorder { out })
    }

    pub fn record(&mut self, out: &TickOutput) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, &TickRecord::from_output(out))?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// 1-based line number in the log.
    pub line: usize,
    pub tick: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySummary {
    pub ticks: usize,
    pub mismatches: Vec<Mismatch>,
    /// Frames regenerated by the replay, in order.
    pub frames: Vec<StateFrame>,
    /// The log ended in a partial line, as when the recorder was killed
    /// mid-write. The partial line was skipped.
    pub truncated: bool,
}

impl ReplaySummary {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn describe(expected: &StateFrame, got: &StateFrame) -> String {
    let e = serde_json::to_value(expected).unwrap_or_default();
    let g = serde_json::to_value(got).unwrap_or_default();
    match (e.as_object(), g.as_object()) {
        (Some(e), Some(g)) => {
            let fields: Vec<&str> = e
                .iter()
                .filter(|(k, v)| g.get(k.as_str()) != Some(v))
                .map(|(k, _)| k.as_str())
                .collect();
            format!("fields differ: {}", fields.join(", "))
        }
        _ => "state differs".into(),
    }
}

/// Replays a log. Each regenerated frame is compared with the recorded one;
/// differences are collected, not fatal. A complete line that fails to parse
/// aborts; an unterminated last line is treated as a truncated tail.
pub fn replay<R: Read>(log: R) -> Result<ReplaySummary, ReplayError> {
    let mut reader = BufReader::new(log);
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(ReplayError::Empty);
    }
    let header: LogHeader = serde_json::from_str(&line).map_err(|e| ReplayError::Corrupt {
        line: 1,
        reason: e.to_string(),
    })?;
    let mut session = Session::new(header.config)?;
    let mut summary = ReplaySummary {
        ticks: 0,
        mismatches: Vec::new(),
        frames: Vec::new(),
        truncated: false,
    };
    let mut line_no = 1;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TickRecord = match serde_json::from_str(&line) {
            Ok(rec) => rec,
            Err(_) if !line.ends_with('\n') => {
                summary.truncated = true;
                break;
            }
            Err(e) => {
                return Err(ReplayError::Corrupt {
                    line: line_no,
                    reason: e.to_string(),
                })
            }
        };
        let (frame, _) = session.advance(rec.input, rec.paused);
        if frame != rec.state {
            summary.mismatches.push(Mismatch {
                line: line_no,
                tick: rec.tick,
                detail: describe(&rec.state, &frame),
            });
        }
        summary.frames.push(frame);
        summary.ticks += 1;
    }
    Ok(summary)
}
