// SPDX-License-Identifier: Apache-2.0

//! Usage-event logs and their side tables.
//!
//! A log is a sequence of `(thing, user, timestamp, location)` records. All
//! entity identifiers are opaque strings; each entity set is kept sorted so
//! the dense index of an identifier (its position in the sorted set) is the
//! same for every run over the same input.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DEFAULT_TIME_BINS: usize = 24;

/// One human-thing interaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UsageEvent {
    pub thing: String,
    pub user: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub location: String,
}

impl UsageEvent {
    pub fn new(
        thing: impl Into<String>,
        user: impl Into<String>,
        timestamp: i64,
        location: impl Into<String>,
    ) -> Self {
        UsageEvent {
            thing: thing.into(),
            user: user.into(),
            timestamp,
            location: location.into(),
        }
    }
}

/// An event with its entities replaced by dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexedEvent {
    pub thing: usize,
    pub user: usize,
    pub location: usize,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscretizedEvent {
    pub thing: usize,
    pub user: usize,
    pub location: usize,
    /// Day number (days since the epoch, after the timezone shift).
    pub day: i64,
    /// Time-of-day bin in `[0, time_bins)`.
    pub bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Jsonl,
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "jsonl" | "ndjson" => Ok(EventFormat::Jsonl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for EventFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventFormat::Csv => "csv",
            EventFormat::Jsonl => "jsonl",
        })
    }
}

/// A validated, indexed usage-event log. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<UsageEvent>,
    indexed: Vec<IndexedEvent>,
    things: Vec<String>,
    users: Vec<String>,
    locations: Vec<String>,
    time_bins: usize,
    tz_offset_secs: i64,
}

fn sorted_set<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    items
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect()
}

fn position(set: &[String], id: &str) -> Option<usize> {
    set.binary_search_by(|probe| probe.as_str().cmp(id)).ok()
}

impl EventLog {
    pub fn new(events: Vec<UsageEvent>, time_bins: usize) -> Result<Self> {
        if time_bins == 0 {
            return Err(Error::param("time_bins", "must be >= 1"));
        }
        if events.is_empty() {
            return Err(Error::Empty("event log has no events".into()));
        }
        for (i, e) in events.iter().enumerate() {
            for (name, value) in [
                ("thing", &e.thing),
                ("user", &e.user),
                ("location", &e.location),
            ] {
                if value.trim().is_empty() {
                    return Err(Error::Malformed {
                        line: i + 1,
                        msg: format!("empty {name}"),
                    });
                }
            }
        }
        let things = sorted_set(events.iter().map(|e| e.thing.as_str()));
        let users = sorted_set(events.iter().map(|e| e.user.as_str()));
        let locations = sorted_set(events.iter().map(|e| e.location.as_str()));
        let indexed = events
            .iter()
            .map(|e| IndexedEvent {
                thing: position(&things, &e.thing).expect("thing indexed"),
                user: position(&users, &e.user).expect("user indexed"),
                location: position(&locations, &e.location).expect("location indexed"),
                timestamp: e.timestamp,
            })
            .collect();
        Ok(EventLog {
            events,
            indexed,
            things,
            users,
            locations,
            time_bins,
            tz_offset_secs: 0,
        })
    }

    /// Shift applied to timestamps before bin assignment (local = UTC + offset).
    pub fn with_tz_offset(mut self, offset_secs: i64) -> Self {
        self.tz_offset_secs = offset_secs;
        self
    }

    pub fn events(&self) -> &[UsageEvent] {
        &self.events
    }

    pub fn indexed(&self) -> &[IndexedEvent] {
        &self.indexed
    }

    pub fn things(&self) -> &[String] {
        &self.things
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn time_bins(&self) -> usize {
        self.time_bins
    }

    pub fn tz_offset_secs(&self) -> i64 {
        self.tz_offset_secs
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn thing_index(&self, id: &str) -> Option<usize> {
        position(&self.things, id)
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        position(&self.users, id)
    }

    pub fn location_index(&self, id: &str) -> Option<usize> {
        position(&self.locations, id)
    }

    /// Keeps only the first event for each `(thing, user, location, day, bin)`
    /// slot, so repeated interactions within one time slot count once.
    pub fn dedupe_slots(&self) -> EventLog {
        let mut seen = HashSet::new();
        let kept: Vec<UsageEvent> = self
            .events
            .iter()
            .zip(discretize(self))
            .filter(|(_, d)| seen.insert((d.thing, d.user, d.location, d.day, d.bin)))
            .map(|(e, _)| e.clone())
            .collect();
        EventLog::new(kept, self.time_bins)
            .expect("subset of a valid log is valid")
            .with_tz_offset(self.tz_offset_secs)
    }
}

/// Maps each event onto its day and time-of-day bin.
pub fn discretize(log: &EventLog) -> Vec<DiscretizedEvent> {
    log.indexed
        .iter()
        .map(|e| {
            let (day, bin) = time_slot(e.timestamp, log.tz_offset_secs, log.time_bins);
            DiscretizedEvent {
                thing: e.thing,
                user: e.user,
                location: e.location,
                day,
                bin,
            }
        })
        .collect()
}

/// `(day, bin)` for a timestamp; `bin = floor(fraction_of_day * time_bins)`.
pub fn time_slot(timestamp: i64, tz_offset_secs: i64, time_bins: usize) -> (i64, usize) {
    let local = timestamp + tz_offset_secs;
    let day = local.div_euclid(SECONDS_PER_DAY);
    let second_of_day = local.rem_euclid(SECONDS_PER_DAY) as u64;
    let bin = (second_of_day * time_bins as u64 / SECONDS_PER_DAY as u64) as usize;
    (day, bin)
}

/// Parses an ISO-8601 timestamp. Strings without an offset are taken as UTC;
/// a bare integer is read as epoch seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    s.parse::<i64>().ok()
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub fn parse_event_log(path: &Path, format: EventFormat, time_bins: usize) -> Result<EventLog> {
    let file = open(path)?;
    let events = match format {
        EventFormat::Csv => read_events_csv(file)?,
        EventFormat::Jsonl => read_events_jsonl(file)?,
    };
    EventLog::new(events, time_bins)
}

const EVENT_COLUMNS: [&str; 4] = ["thing", "user", "timestamp", "location"];

fn required_field(
    record: &csv::StringRecord,
    col: Option<usize>,
    name: &str,
    line: usize,
) -> Result<String> {
    let value = col.and_then(|c| record.get(c)).map(str::trim);
    match value {
        Some(v) if !v.is_empty() => Ok(v.to_string()),
        _ => Err(Error::Malformed {
            line,
            msg: format!("missing {name}"),
        }),
    }
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<UsageEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Empty("no header row".into()));
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let cols: Vec<Option<usize>> = EVENT_COLUMNS.iter().map(|n| col(n)).collect();
    if let Some(missing) = EVENT_COLUMNS.iter().zip(&cols).find(|(_, c)| c.is_none()) {
        return Err(Error::Malformed {
            line: 1,
            msg: format!("header lacks column `{}`", missing.0),
        });
    }

    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let thing = required_field(&record, cols[0], "thing", line)?;
        let user = required_field(&record, cols[1], "user", line)?;
        let ts_raw = required_field(&record, cols[2], "timestamp", line)?;
        let location = required_field(&record, cols[3], "location", line)?;
        let timestamp = parse_timestamp(&ts_raw).ok_or_else(|| Error::Malformed {
            line,
            msg: format!("unparseable timestamp `{ts_raw}`"),
        })?;
        events.push(UsageEvent {
            thing,
            user,
            timestamp,
            location,
        });
    }
    if events.is_empty() {
        return Err(Error::Empty("no event rows".into()));
    }
    Ok(events)
}

#[derive(Deserialize)]
struct JsonEvent {
    thing: Option<String>,
    user: Option<String>,
    timestamp: Option<serde_json::Value>,
    location: Option<String>,
}

pub fn read_events_jsonl<R: Read>(reader: R) -> Result<Vec<UsageEvent>> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonEvent = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            msg: e.to_string(),
        })?;
        let field = |v: Option<String>, name: &str| -> Result<String> {
            match v {
                Some(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
                _ => Err(Error::Malformed {
                    line: lineno,
                    msg: format!("missing {name}"),
                }),
            }
        };
        let timestamp = match raw.timestamp {
            Some(serde_json::Value::String(s)) => parse_timestamp(&s),
            Some(serde_json::Value::Number(n)) => n.as_i64(),
            _ => None,
        }
        .ok_or_else(|| Error::Malformed {
            line: lineno,
            msg: "missing or unparseable timestamp".into(),
        })?;
        events.push(UsageEvent {
            thing: field(raw.thing, "thing")?,
            user: field(raw.user, "user")?,
            timestamp,
            location: field(raw.location, "location")?,
        });
    }
    if events.is_empty() {
        return Err(Error::Empty("no event rows".into()));
    }
    Ok(events)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_events_csv<W: Write>(events: &[UsageEvent], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(EVENT_COLUMNS).map_err(csv_err)?;
    for e in events {
        wtr.write_record([
            e.thing.as_str(),
            e.user.as_str(),
            &format_timestamp(e.timestamp),
            e.location.as_str(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_events_jsonl<W: Write>(events: &[UsageEvent], mut writer: W) -> Result<()> {
    for e in events {
        let obj = serde_json::json!({
            "thing": e.thing,
            "user": e.user,
            "timestamp": format_timestamp(e.timestamp),
            "location": e.location,
        });
        writeln!(writer, "{obj}").map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}

/// Friendship relation over users. Before validation the relation may be
/// asymmetric; [`validate_friendships`] restores symmetry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FriendshipMatrix {
    users: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
}

impl FriendshipMatrix {
    pub fn from_pairs<A, B>(pairs: impl IntoIterator<Item = (A, B)>) -> Self
    where
        A: Into<String>,
        B: Into<String>,
    {
        let pairs: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(a, b)| (a.into(), b.into()))
            .collect();
        let users = sorted_set(pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]));
        let edges = pairs
            .iter()
            .map(|(a, b)| {
                (
                    position(&users, a).expect("user"),
                    position(&users, b).expect("user"),
                )
            })
            .collect();
        FriendshipMatrix { users, edges }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        match (position(&self.users, a), position(&self.users, b)) {
            (Some(i), Some(j)) => self.edges.contains(&(i, j)),
            _ => false,
        }
    }

    /// Friends of the user at index `i`, in index order.
    pub fn friends(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((i, 0)..=(i, usize::MAX)).map(|&(_, j)| j)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(i, j)| (self.users[i].as_str(), self.users[j].as_str()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges
            .iter()
            .all(|&(i, j)| i != j && self.edges.contains(&(j, i)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FriendshipWarning {
    Asymmetric { a: String, b: String },
    UnknownUser(String),
    SelfLoop(String),
}

impl fmt::Display for FriendshipWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FriendshipWarning::Asymmetric { a, b } => {
                write!(f, "friendship ({a}, {b}) has no reverse edge; symmetrized")
            }
            FriendshipWarning::UnknownUser(u) => {
                write!(f, "user `{u}` in friendship matrix is absent from the log; dropped")
            }
            FriendshipWarning::SelfLoop(u) => write!(f, "self-friendship of `{u}` dropped"),
        }
    }
}

/// Restricts `f` to the log's users (re-indexed to the log's user order) and
/// symmetrizes it. The returned matrix's user list equals `log.users()`.
pub fn validate_friendships(
    f: &FriendshipMatrix,
    log: &EventLog,
) -> (FriendshipMatrix, Vec<FriendshipWarning>) {
    let mut warnings = Vec::new();
    for u in &f.users {
        if log.user_index(u).is_none() {
            warnings.push(FriendshipWarning::UnknownUser(u.clone()));
        }
    }
    let mut edges = BTreeSet::new();
    for &(i, j) in &f.edges {
        let (a, b) = (&f.users[i], &f.users[j]);
        if i == j {
            warnings.push(FriendshipWarning::SelfLoop(a.clone()));
            continue;
        }
        let (Some(li), Some(lj)) = (log.user_index(a), log.user_index(b)) else {
            continue;
        };
        if !f.edges.contains(&(j, i)) {
            warnings.push(FriendshipWarning::Asymmetric {
                a: a.clone(),
                b: b.clone(),
            });
        }
        edges.insert((li, lj));
        edges.insert((lj, li));
    }
    for w in &warnings {
        warn!("{w}");
    }
    (
        FriendshipMatrix {
            users: log.users().to_vec(),
            edges,
        },
        warnings,
    )
}

pub fn read_friendships_csv<R: Read>(reader: R) -> Result<FriendshipMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let ca = headers.iter().position(|h| h == "user_a");
    let cb = headers.iter().position(|h| h == "user_b");
    if ca.is_none() || cb.is_none() {
        return Err(Error::Malformed {
            line: 1,
            msg: "friendship header must contain user_a,user_b".into(),
        });
    }
    let mut pairs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let a = required_field(&record, ca, "user_a", line)?;
        let b = required_field(&record, cb, "user_b", line)?;
        pairs.push((a, b));
    }
    Ok(FriendshipMatrix::from_pairs(pairs))
}

pub fn parse_friendships(path: &Path) -> Result<FriendshipMatrix> {
    read_friendships_csv(open(path)?)
}

pub fn write_friendships_csv<W: Write>(f: &FriendshipMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["user_a", "user_b"]).map_err(csv_err)?;
    for (a, b) in f.pairs() {
        wtr.write_record([a, b]).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThingMetadata {
    pub thing: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// Metadata keyed by thing, plus the global label vocabulary (sorted).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MetadataTable {
    entries: BTreeMap<String, ThingMetadata>,
    labels: Vec<String>,
}

impl MetadataTable {
    pub fn new(entries: Vec<ThingMetadata>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, mut m) in entries.into_iter().enumerate() {
            m.labels.sort();
            m.labels.dedup();
            if map.contains_key(&m.thing) {
                return Err(Error::Malformed {
                    line: i + 1,
                    msg: format!("duplicate metadata for thing `{}`", m.thing),
                });
            }
            map.insert(m.thing.clone(), m);
        }
        let labels = sorted_set(
            map.values()
                .flat_map(|m| m.labels.iter().map(String::as_str)),
        );
        Ok(MetadataTable {
            entries: map,
            labels,
        })
    }

    /// Label vocabulary, sorted.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        position(&self.labels, label)
    }

    pub fn get(&self, thing: &str) -> Option<&ThingMetadata> {
        self.entries.get(thing)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ThingMetadata> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn description(&self, thing: &str) -> &str {
        self.entries.get(thing).map_or("", |m| m.description.as_str())
    }

    /// Label indices of `thing`; empty for unknown or unlabeled things.
    pub fn label_set(&self, thing: &str) -> BTreeSet<usize> {
        self.entries
            .get(thing)
            .map(|m| {
                m.labels
                    .iter()
                    .filter_map(|l| self.label_index(l))
                    .collect()
            })
            .unwrap_or_default()
    }
}

pub fn read_metadata_jsonl<R: Read>(reader: R) -> Result<MetadataTable> {
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let m: ThingMetadata = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            msg: e.to_string(),
        })?;
        if m.thing.trim().is_empty() {
            return Err(Error::Malformed {
                line: lineno,
                msg: "empty thing".into(),
            });
        }
        entries.push(m);
    }
    MetadataTable::new(entries)
}

pub fn parse_metadata(path: &Path) -> Result<MetadataTable> {
    read_metadata_jsonl(open(path)?)
}

pub fn write_metadata_jsonl<W: Write>(table: &MetadataTable, mut writer: W) -> Result<()> {
    for m in table.entries() {
        let line = serde_json::to_string(m).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(())
}
