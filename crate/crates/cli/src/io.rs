//! Event files and atomic output.

use std::fs;
use std::io::Write;
use std::path::Path;

use episodic::{EventSequence, LabelAssignment, Mark};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

/// Times and marks as read from an events CSV, before a window is chosen.
#[derive(Debug, Clone)]
pub struct EventTable {
    pub times: Vec<f64>,
    pub marks: Vec<Mark>,
}

impl EventTable {
    /// Window `[0, T]` with `T` given or `ceil(max time)`.
    pub fn into_sequence(self, horizon: Option<f64>) -> Result<EventSequence> {
        let last = self.times.last().copied().unwrap_or(0.0);
        let end = match horizon {
            Some(t) if !(t.is_finite() && t > 0.0) => {
                return Err(CliError::data(format!("--T must be positive, got {t}")));
            }
            Some(t) if t < last => {
                return Err(CliError::data(format!("--T {t} is before the last event at {last}")));
            }
            Some(t) => t,
            None => last.ceil().max(1.0),
        };
        Ok(EventSequence::new(0.0, end, self.times, self.marks)?)
    }
}

pub fn read_events(path: &Path) -> Result<EventTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "kind" {
        return Err(CliError::data(format!(
            "{}: line 1: expected header `time,kind`, found `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut marks = Vec::new();
    let mut previous: Option<(f64, u64)> = None;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |msg: String| CliError::data(format!("{}: line {line}: {msg}", path.display()));
        if record.len() != 2 {
            return Err(fail(format!("expected 2 fields, found {}", record.len())));
        }
        let time: f64 = record[0]
            .parse()
            .map_err(|_| fail(format!("invalid time `{}`", &record[0])))?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(fail(format!("time must be finite and non-negative, got {time}")));
        }
        let mark = match &record[1] {
            "1" => Mark::Original,
            "0" => Mark::Repost,
            other => return Err(fail(format!("kind must be 0 or 1, got `{other}`"))),
        };
        if let Some((prev, prev_line)) = previous {
            if time == prev {
                return Err(fail(format!("duplicate timestamp {time} (also on line {prev_line})")));
            }
            if time < prev {
                return Err(fail(format!("time {time} is earlier than {prev} on line {prev_line}")));
            }
        }
        previous = Some((time, line));
        times.push(time);
        marks.push(mark);
    }
    Ok(EventTable { times, marks })
}

/// Write `path` through a temporary file in the same directory, so a failed
/// command never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Serialize rows of a CSV into memory; commit with [`write_atomic`].
pub fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::data(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

pub fn events_csv(events: &EventSequence) -> Result<Vec<u8>> {
    let rows = events.times().iter().zip(events.marks()).map(|(t, m)| (*t, m.index()));
    csv_bytes(&["time", "kind"], rows)
}

pub fn labels_csv(events: &EventSequence, labels: &LabelAssignment) -> Result<Vec<u8>> {
    let rows = events
        .times()
        .iter()
        .zip(events.marks())
        .zip(&labels.labels)
        .map(|((t, m), p)| (*t, m.index(), u8::from(*p)));
    csv_bytes(&["time", "kind", "parent"], rows)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
