//! Normalized detector and incident CSV files.
//!
//! ```text
//! date,time,detector_id,flow      (detector readings)
//! date,time,link_id               (incident reports)
//! ```
//!
//! Dates are `YYYY-MM-DD`, times `HH:MM`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const TIME_FORMAT: &str = "%H:%M";

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRecord {
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub detector_id: String,
    /// Vehicles per measurement interval.
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidentRecord {
    pub date: NaiveDate,
    /// Treated as the time the incident occurred.
    pub time: NaiveTime,
    pub link_id: String,
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).ok()
}

pub fn parse_time(s: &str) -> Option<NaiveTime> {
    if s.len() != 5 {
        return None;
    }
    NaiveTime::parse_from_str(s, TIME_FORMAT).ok()
}

fn records<R: Read>(reader: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut iter = rdr.records();
    match iter.next() {
        Some(Ok(h)) if h.iter().eq(header.iter().copied()) => {}
        Some(Ok(h)) => {
            return Err(Error::parse(
                1,
                format!(
                    "malformed header `{}`, expected `{}`",
                    h.iter().collect::<Vec<_>>().join(","),
                    header.join(",")
                ),
            ))
        }
        Some(Err(e)) => return Err(Error::parse(1, e.to_string())),
        None => return Err(Error::parse(1, "missing header")),
    }
    for rec in iter {
        let rec =
            rec.map_err(|e| Error::parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn date_time(line: u64, rec: &csv::StringRecord) -> Result<(NaiveDate, NaiveTime)> {
    let date = parse_date(&rec[0])
        .ok_or_else(|| Error::parse(line, format!("invalid date `{}`", &rec[0])))?;
    let time = parse_time(&rec[1])
        .ok_or_else(|| Error::parse(line, format!("invalid time `{}`", &rec[1])))?;
    Ok((date, time))
}

pub fn read_detectors<R: Read>(reader: R) -> Result<Vec<DetectorRecord>> {
    records(reader, &["date", "time", "detector_id", "flow"])?
        .into_iter()
        .map(|(line, rec)| {
            let (date, time) = date_time(line, &rec)?;
            let flow: f64 = rec[3]
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid flow `{}`", &rec[3])))?;
            if !flow.is_finite() || flow < 0.0 {
                return Err(Error::parse(
                    line,
                    format!("flow must be finite and non-negative, got `{}`", &rec[3]),
                ));
            }
            Ok(DetectorRecord {
                date,
                time,
                detector_id: rec[2].to_string(),
                flow,
            })
        })
        .collect()
}

pub fn read_incidents<R: Read>(reader: R) -> Result<Vec<IncidentRecord>> {
    records(reader, &["date", "time", "link_id"])?
        .into_iter()
        .map(|(line, rec)| {
            let (date, time) = date_time(line, &rec)?;
            Ok(IncidentRecord {
                date,
                time,
                link_id: rec[2].to_string(),
            })
        })
        .collect()
}

pub fn read_detector_csv(path: impl AsRef<Path>) -> Result<Vec<DetectorRecord>> {
    read_detectors(File::open(path)?)
}

pub fn read_incident_csv(path: impl AsRef<Path>) -> Result<Vec<IncidentRecord>> {
    read_incidents(File::open(path)?)
}

pub fn write_detectors<W: Write>(records: &[DetectorRecord], w: &mut W) -> Result<()> {
    w.write_all(b"date,time,detector_id,flow\n")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            r.date.format(DATE_FORMAT),
            r.time.format(TIME_FORMAT),
            r.detector_id,
            r.flow
        )?;
    }
    Ok(())
}

pub fn write_incidents<W: Write>(records: &[IncidentRecord], w: &mut W) -> Result<()> {
    w.write_all(b"date,time,link_id\n")?;
    for r in records {
        writeln!(
            w,
            "{},{},{}",
            r.date.format(DATE_FORMAT),
            r.time.format(TIME_FORMAT),
            r.link_id
        )?;
    }
    Ok(())
}

pub fn write_detector_csv(records: &[DetectorRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_detectors(records, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_incident_csv(records: &[IncidentRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_incidents(records, &mut w)?;
    w.flush()?;
    Ok(())
}
