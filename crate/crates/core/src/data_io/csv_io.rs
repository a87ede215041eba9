//! CSV ingestion and export for sensor frames, NoC interval files and
//! change-point lists.
//!
//! Sensor CSV: header row, a timestamp column (ISO-8601 or integer epoch
//! seconds), numeric channel columns, empty cell = missing. A column named
//! [`LABEL_COLUMN`] holding booleans is read as the per-sample normal flag.
//! Lines starting with `#` are comments (used for provenance headers).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::frame::TimeSeriesFrame;
use super::noc::NocIntervals;
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "normal";
pub const DEFAULT_TIMESTAMP_COLUMN: &str = "timestamp";

/// Parses integer epoch seconds or an ISO-8601 / RFC 3339 timestamp.
/// Timestamps without an offset are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "true" | "True" | "TRUE" | "1" => Some(true),
        "false" | "False" | "FALSE" | "0" => Some(false),
        _ => None,
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

pub fn read_frame<R: Read>(input: R, timestamp_column: &str) -> Result<TimeSeriesFrame> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let ts_idx = headers
        .iter()
        .position(|h| h == timestamp_column)
        .ok_or_else(|| Error::MissingChannel(timestamp_column.to_string()))?;
    let label_idx = headers.iter().position(|h| h == LABEL_COLUMN);
    let channel_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != ts_idx && Some(i) != label_idx)
        .collect();
    let channels: Vec<String> = channel_idx.iter().map(|&i| headers[i].to_string()).collect();

    let mut timestamps = Vec::new();
    let mut columns = vec![Vec::new(); channels.len()];
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line_of(&record, row + 2);
        let ts_raw = &record[ts_idx];
        let ts = parse_timestamp(ts_raw)
            .ok_or_else(|| Error::parse(line, format!("unparseable timestamp `{ts_raw}`")))?;
        timestamps.push(ts);
        for (col, &i) in columns.iter_mut().zip(&channel_idx) {
            let cell = &record[i];
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("non-numeric cell `{cell}`")))?
            };
            col.push(v);
        }
        if let Some(li) = label_idx {
            let cell = &record[li];
            labels.push(
                parse_bool(cell)
                    .ok_or_else(|| Error::parse(line, format!("invalid label `{cell}`")))?,
            );
        }
    }
    let frame = TimeSeriesFrame::new(timestamps, channels, columns)?;
    if label_idx.is_some() {
        frame.with_labels(labels)
    } else {
        Ok(frame)
    }
}

pub fn parse_frame_str(text: &str, timestamp_column: &str) -> Result<TimeSeriesFrame> {
    read_frame(text.as_bytes(), timestamp_column)
}

pub fn load_csv(path: impl AsRef<Path>, timestamp_column: &str) -> Result<TimeSeriesFrame> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_frame(file, timestamp_column)
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

/// Writes the frame with shortest round-trip float formatting; missing
/// values become empty cells.
pub fn write_frame<W: Write>(out: W, frame: &TimeSeriesFrame, comments: &[String]) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    write!(out, "{DEFAULT_TIMESTAMP_COLUMN}")?;
    for c in frame.channels() {
        write!(out, ",{c}")?;
    }
    if frame.labels().is_some() {
        write!(out, ",{LABEL_COLUMN}")?;
    }
    writeln!(out)?;
    for (i, ts) in frame.timestamps().iter().enumerate() {
        write!(out, "{ts}")?;
        for col in frame.columns() {
            let v = col[i];
            if v.is_nan() {
                write!(out, ",")?;
            } else {
                write!(out, ",{v:?}")?;
            }
        }
        if let Some(labels) = frame.labels() {
            write!(out, ",{}", labels[i])?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn save_csv(path: impl AsRef<Path>, frame: &TimeSeriesFrame, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_frame(file, frame, comments).map_err(|e| Error::io(path, e))
}

pub fn read_noc<R: Read>(input: R) -> Result<NocIntervals> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let start_idx = headers.iter().position(|h| h == "start");
    let end_idx = headers.iter().position(|h| h == "end");
    let (Some(si), Some(ei)) = (start_idx, end_idx) else {
        return Err(Error::parse(1, "NoC header must contain `start,end`"));
    };
    let mut pairs = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line_of(&record, row + 2);
        let start = parse_timestamp(&record[si])
            .ok_or_else(|| Error::parse(line, format!("bad start `{}`", &record[si])))?;
        let end = parse_timestamp(&record[ei])
            .ok_or_else(|| Error::parse(line, format!("bad end `{}`", &record[ei])))?;
        pairs.push((start, end));
    }
    NocIntervals::new(pairs)
}

/// Parses a NoC file. An entirely empty input is an empty interval list.
pub fn parse_noc_str(text: &str) -> Result<NocIntervals> {
    if text.trim().is_empty() {
        return Ok(NocIntervals::default());
    }
    read_noc(text.as_bytes())
}

pub fn load_noc(path: impl AsRef<Path>) -> Result<NocIntervals> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_noc_str(&text)
}

pub fn write_noc<W: Write>(out: W, noc: &NocIntervals, comments: &[String]) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    write_comments(&mut out, comments)?;
    writeln!(out, "start,end")?;
    for &(s, e) in noc.intervals() {
        writeln!(out, "{s},{e}")?;
    }
    out.flush()
}

pub fn save_noc(path: impl AsRef<Path>, noc: &NocIntervals, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_noc(file, noc, comments).map_err(|e| Error::io(path, e))
}

/// One sample index per line; blank lines and `#` comments ignored.
pub fn parse_change_points(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = line
            .parse::<usize>()
            .map_err(|_| Error::parse(i + 1, format!("bad sample index `{line}`")))?;
        if out.last().is_some_and(|&p| v <= p) {
            return Err(Error::parse(i + 1, "change points must be strictly increasing"));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn format_change_points(points: &[usize], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        for line in c.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    for p in points {
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}
