use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Event, Footer, Header, Snapshot, Trajectory};

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("{0}")]
    Structure(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header(Header),
    Event(Event),
    Snapshot(Snapshot),
    Footer(Footer),
}

fn line<W: Write>(out: &mut W, rec: &Record) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")
}

/// One header line, events and snapshots interleaved by time (a snapshot
/// follows the events at or before its time), one footer line.
pub fn write_jsonl<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    line(&mut out, &Record::Header(traj.header.clone()))?;
    let mut events = traj.events.iter().peekable();
    for s in &traj.snapshots {
        while let Some(e) = events.next_if(|e| e.t.is_some_and(|t| t <= s.t)) {
            line(&mut out, &Record::Event(e.clone()))?;
        }
        line(&mut out, &Record::Snapshot(s.clone()))?;
    }
    for e in events {
        line(&mut out, &Record::Event(e.clone()))?;
    }
    line(&mut out, &Record::Footer(traj.footer.clone()))?;
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trajectory, TrajectoryIoError> {
    let mut header = None;
    let mut footer = None;
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    for (i, l) in input.lines().enumerate() {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        if footer.is_some() {
            return Err(TrajectoryIoError::Structure(format!("line {}: record after the footer", i + 1)));
        }
        let rec: Record = serde_json::from_str(&l).map_err(|source| TrajectoryIoError::Json { line: i + 1, source })?;
        match (rec, header.is_some()) {
            (Record::Header(h), false) => header = Some(h),
            (_, false) => {
                return Err(TrajectoryIoError::Structure("first record must be the header".into()));
            }
            (Record::Header(_), true) => {
                return Err(TrajectoryIoError::Structure(format!("line {}: second header", i + 1)));
            }
            (Record::Event(e), true) => events.push(e),
            (Record::Snapshot(s), true) => snapshots.push(s),
            (Record::Footer(f), true) => footer = Some(f),
        }
    }
    let header = header.ok_or_else(|| TrajectoryIoError::Structure("empty trajectory file".into()))?;
    let footer = footer.ok_or_else(|| TrajectoryIoError::Structure("missing footer".into()))?;
    Ok(Trajectory { header, events, snapshots, footer })
}
