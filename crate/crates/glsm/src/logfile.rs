//! The delimited behavior log.
//!
//! One event per line, comma separated, in the column order
//! `user,item,timestamp,category,behavior,scene,label`. The label column is
//! empty for plain history and `0`/`1` for labeled impressions. Blank lines,
//! lines starting with `#` and a leading header line are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use glsm_core::corpus::{group_by_user, BehaviorEvent, BehaviorSequence, BehaviorType, CtrRow};
use glsm_core::{CategoryId, ItemId, UserId};

pub const COLUMNS: [&str; 7] = ["user", "item", "timestamp", "category", "behavior", "scene", "label"];
pub const HEADER: &str = "user,item,timestamp,category,behavior,scene,label";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column} ({name}): cannot parse `{value}`: {reason}")]
    Field {
        line: usize,
        column: usize,
        name: &'static str,
        value: String,
        reason: String,
    },
}

/// Splits one data line into exactly `names.len()` trimmed fields.
pub(crate) fn split_fields(line: &str, lineno: usize, expected: usize) -> Result<Vec<&str>, LogError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(LogError::FieldCount {
            line: lineno,
            expected,
            found: fields.len(),
        });
    }
    Ok(fields)
}

pub(crate) fn parse_field<T: FromStr>(
    fields: &[&str],
    column: usize,
    names: &[&'static str],
    line: usize,
) -> Result<T, LogError>
where
    T::Err: std::fmt::Display,
{
    fields[column].parse::<T>().map_err(|e| LogError::Field {
        line,
        column: column + 1,
        name: names[column],
        value: fields[column].to_string(),
        reason: e.to_string(),
    })
}

/// Data lines with their 1-based line numbers.
pub(crate) fn data_lines<'a>(text: &'a str, header_start: &'a str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .filter(move |(k, (_, l))| !(*k == 0 && l.starts_with(header_start)))
        .map(|(_, x)| x)
}

fn field_error(line: usize, column: usize, value: &str, reason: &str) -> LogError {
    LogError::Field {
        line,
        column: column + 1,
        name: COLUMNS[column],
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

/// Parses log text into events in file order. With `scene_count`, scene ids
/// at or above it are rejected.
pub fn parse_events(text: &str, scene_count: Option<usize>) -> Result<Vec<BehaviorEvent>, LogError> {
    let mut events = Vec::new();
    for (line, raw) in data_lines(text, "user") {
        let f = split_fields(raw, line, COLUMNS.len())?;
        let behavior = BehaviorType::from_str(f[4]).map_err(|_| field_error(line, 4, f[4], "unknown behavior type"))?;
        let scene: u32 = parse_field(&f, 5, &COLUMNS, line)?;
        if let Some(n) = scene_count {
            if scene as usize >= n {
                return Err(field_error(line, 5, f[5], &format!("scene must be below {n}")));
            }
        }
        let label = match f[6] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(field_error(line, 6, other, "label must be empty, 0 or 1")),
        };
        events.push(BehaviorEvent {
            user: UserId(parse_field(&f, 0, &COLUMNS, line)?),
            item: ItemId(parse_field(&f, 1, &COLUMNS, line)?),
            timestamp: parse_field(&f, 2, &COLUMNS, line)?,
            category: CategoryId(parse_field(&f, 3, &COLUMNS, line)?),
            behavior,
            scene,
            label,
        });
    }
    Ok(events)
}

pub fn read_events(path: &Path, scene_count: Option<usize>) -> Result<Vec<BehaviorEvent>, LogError> {
    let text = fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_events(&text, scene_count)
}

/// One time-sorted sequence per user, over every event in the file.
pub fn parse_behavior_log(path: &Path) -> Result<Vec<BehaviorSequence>, LogError> {
    Ok(group_by_user(read_events(path, None)?))
}

pub fn format_event(out: &mut String, e: &BehaviorEvent) {
    let label = match e.label {
        None => "",
        Some(false) => "0",
        Some(true) => "1",
    };
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{}",
        e.user.0, e.item.0, e.timestamp, e.category.0, e.behavior, e.scene, label
    );
}

pub fn format_events<'a>(events: impl IntoIterator<Item = &'a BehaviorEvent>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for e in events {
        format_event(&mut out, e);
    }
    out
}

/// Behavior history plus labeled impressions, as stored in one log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub sequences: Vec<BehaviorSequence>,
    pub rows: Vec<CtrRow>,
}

impl Corpus {
    /// Labeled events become rows (in input order); the rest is history.
    pub fn from_events(events: Vec<BehaviorEvent>) -> Self {
        let rows = events.iter().filter_map(CtrRow::from_event).collect();
        let history = events.into_iter().filter(|e| e.label.is_none());
        Self {
            sequences: group_by_user(history),
            rows,
        }
    }

    /// History grouped by user, followed by the labeled rows.
    pub fn to_log(&self) -> String {
        let rows: Vec<BehaviorEvent> = self.rows.iter().map(CtrRow::to_event).collect();
        format_events(self.sequences.iter().flat_map(|s| s.events.iter()).chain(rows.iter()))
    }

    pub fn event_count(&self) -> usize {
        self.sequences.iter().map(BehaviorSequence::len).sum()
    }
}

pub fn read_corpus(path: &Path, scene_count: Option<usize>) -> Result<Corpus, LogError> {
    Ok(Corpus::from_events(read_events(path, scene_count)?))
}
