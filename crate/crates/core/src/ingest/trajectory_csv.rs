//! The on-disk trajectory format.
//!
//! ```text
//! traj_id,t,x_1,...,x_n,event
//! ```
//!
//! One row per `(trajectory, t)` with `t = 0..H` in order; rows of a
//! trajectory are contiguous. `event` holds `A_t` (`0` or `1`) for `t >= 1`
//! and is empty at `t = 0`. UTF-8, LF line endings, `.` as decimal separator.
//! Values are written in shortest round-trip form, so write-then-read is
//! lossless.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Trajectory, TrajectoryDataset};

pub fn write_trajectory_csv(ds: &TrajectoryDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_trajectories(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_trajectories<W: Write>(ds: &TrajectoryDataset, w: &mut W) -> Result<()> {
    let n = ds.dim();
    let mut header = String::from("traj_id,t");
    for i in 1..=n {
        header.push_str(&format!(",x_{i}"));
    }
    header.push_str(",event\n");
    w.write_all(header.as_bytes())?;

    let mut line = String::new();
    for traj in ds.trajectories() {
        let id = traj.id();
        if id.contains([',', '"', '\n', '\r']) {
            return Err(Error::param(format!(
                "trajectory id `{id}` contains a reserved character"
            )));
        }
        for t in 0..=traj.horizon() {
            line.clear();
            line.push_str(id);
            line.push(',');
            line.push_str(&t.to_string());
            for x in traj.state(t) {
                line.push(',');
                line.push_str(&x.to_string());
            }
            line.push(',');
            if t > 0 {
                line.push(if traj.event(t) { '1' } else { '0' });
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<TrajectoryDataset> {
    read_trajectories(File::open(path)?)
}

struct Pending {
    id: String,
    states: Vec<f64>,
    events: Vec<bool>,
    next_t: usize,
}

pub fn read_trajectories<R: Read>(reader: R) -> Result<TrajectoryDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(&e, 1))?,
        None => return Err(Error::parse(1, "missing header")),
    };
    let cols: Vec<&str> = header.iter().collect();
    let dim = parse_header(&cols)?;
    let width = dim + 3;

    let mut done: Vec<Trajectory> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut pending: Option<Pending> = None;
    let mut pending_line = 0u64;

    for rec in records {
        let rec = rec.map_err(|e| csv_error(&e, 0))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::parse(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let id = &rec[0];
        let t: usize = rec[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid time index `{}`", &rec[1])))?;
        let mut coords = Vec::with_capacity(dim);
        for field in rec.iter().skip(2).take(dim) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid number `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("non-finite value `{field}`")));
            }
            coords.push(v);
        }
        let event = &rec[dim + 2];

        let continues = pending.as_ref().is_some_and(|p| p.id == id);
        if !continues {
            if let Some(p) = pending.take() {
                done.push(finish(p, dim, pending_line)?);
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::parse(
                    line,
                    format!("rows of trajectory `{id}` are not contiguous"),
                ));
            }
            pending = Some(Pending {
                id: id.to_string(),
                states: Vec::new(),
                events: Vec::new(),
                next_t: 0,
            });
        }
        let p = pending.as_mut().expect("pending trajectory");
        if t != p.next_t {
            return Err(Error::parse(
                line,
                format!("expected t = {}, found {t}", p.next_t),
            ));
        }
        match (t, event) {
            (0, "") => {}
            (0, _) => {
                return Err(Error::parse(
                    line,
                    "misaligned event column: must be empty at t = 0",
                ))
            }
            (_, "0") => p.events.push(false),
            (_, "1") => p.events.push(true),
            (_, other) => {
                return Err(Error::parse(
                    line,
                    format!("misaligned event column: expected 0 or 1, found `{other}`"),
                ))
            }
        }
        p.states.extend_from_slice(&coords);
        p.next_t += 1;
        pending_line = line;
    }
    if let Some(p) = pending.take() {
        done.push(finish(p, dim, pending_line)?);
    }
    TrajectoryDataset::new(dim, done)
}

fn finish(p: Pending, dim: usize, line: u64) -> Result<Trajectory> {
    if p.events.is_empty() {
        return Err(Error::parse(
            line,
            format!("trajectory `{}` has no steps after t = 0", p.id),
        ));
    }
    Trajectory::new(p.id, dim, p.states, p.events).map_err(|e| Error::parse(line, e.to_string()))
}

fn parse_header(cols: &[&str]) -> Result<usize> {
    let bad = || Error::parse(1, format!("malformed header `{}`", cols.join(",")));
    if cols.len() < 4 || cols[0] != "traj_id" || cols[1] != "t" || cols[cols.len() - 1] != "event" {
        return Err(bad());
    }
    let dim = cols.len() - 3;
    for (i, c) in cols[2..2 + dim].iter().enumerate() {
        if *c != format!("x_{}", i + 1) {
            return Err(bad());
        }
    }
    Ok(dim)
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::parse(line, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_str(s: &str) -> Result<TrajectoryDataset> {
        read_trajectories(s.as_bytes())
    }

    #[test]
    fn reads_fixture_layout() {
        let ds =
            read_str("traj_id,t,x_1,event\na,0,1,\na,1,2,0\na,2,2,1\nb,0,3,\nb,1,3,1\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.trajectories()[0].horizon(), 2);
        assert_eq!(ds.trajectories()[1].events(), &[true]);
    }

    #[test]
    fn writes_exact_bytes() {
        let ds = read_str("traj_id,t,x_1,x_2,event\nd1,0,1.5,-2,\nd1,1,0.1,3,1\n").unwrap();
        let mut out = Vec::new();
        write_trajectories(&ds, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "traj_id,t,x_1,x_2,event\nd1,0,1.5,-2,\nd1,1,0.1,3,1\n"
        );
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("traj_id,t,x_1\n", 1),
            ("traj_id,t,x_1,event\na,0,NaN,\na,1,1,0\n", 2),
            ("traj_id,t,x_1,event\na,0,1,\na,1,1\n", 3),
            ("traj_id,t,x_1,event\na,0,1,1\n", 2),
            ("traj_id,t,x_1,event\na,0,1,\na,1,1,\n", 3),
            ("traj_id,t,x_1,event\na,0,1,\na,2,1,0\n", 3),
            (
                "traj_id,t,x_1,event\na,0,1,\na,1,1,0\nb,0,1,\nb,1,1,0\na,0,1,\n",
                6,
            ),
            ("traj_id,t,x_1,event\na,0,1,\na,1,inf,0\n", 3),
        ];
        for (text, line) in cases {
            match read_str(text) {
                Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn single_state_trajectory_is_rejected() {
        assert!(read_str("traj_id,t,x_1,event\na,0,1,\n").is_err());
    }
}
