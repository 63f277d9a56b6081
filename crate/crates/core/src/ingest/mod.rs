//! Assembling daily trajectories from loop-detector flows and incident logs.
//!
//! Each calendar day inside the daily window is one trajectory. The window is
//! cut into left-closed, right-open bins starting at the window start; the
//! state `X_k` is the flow of bin `k` (0-based), averaged first over the
//! readings of each detector and then across the link's reporting detectors.
//! With `B` bins the horizon is `H = B - 1`, and `A_t = 1` when at least one
//! incident falls in bin `t - 1`, so an event is paired with the flow of the
//! bin it happened in. Incidents in the last bin fall beyond the horizon.
//!
//! Incident timestamps are taken as occurrence times; feeds that log report
//! times shift events late by the reporting delay.

mod fixture;
mod records;
mod trajectory_csv;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{NaiveDate, NaiveTime};

use crate::error::{Error, Result};
use crate::model::{StateVector, Trajectory, TrajectoryDataset};

pub use fixture::{generate_fixture, Fixture, FixtureSpec};
pub use records::{
    parse_date, parse_time, read_detector_csv, read_detectors, read_incident_csv, read_incidents,
    write_detector_csv, write_detectors, write_incident_csv, write_incidents, DetectorRecord,
    IncidentRecord, DATE_FORMAT, TIME_FORMAT,
};
pub use trajectory_csv::{
    read_trajectories, read_trajectory_csv, write_trajectories, write_trajectory_csv,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingBinPolicy {
    /// A day with any bin lacking readings is dropped.
    #[default]
    DropDay,
    /// Fill holes linearly from the nearest reporting bins.
    Interpolate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub window_start: NaiveTime,
    pub window_end: NaiveTime,
    pub bin_minutes: u32,
    /// Detectors averaged for each link.
    pub link_detectors: BTreeMap<String, BTreeSet<String>>,
    pub drop_no_event: bool,
    pub missing_bins: MissingBinPolicy,
}

impl Default for IngestConfig {
    /// 06:00 to 14:00 in 5-minute bins.
    fn default() -> Self {
        Self {
            window_start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            window_end: NaiveTime::from_hms_opt(14, 0, 0).unwrap(),
            bin_minutes: 5,
            link_detectors: BTreeMap::new(),
            drop_no_event: true,
            missing_bins: MissingBinPolicy::DropDay,
        }
    }
}

impl IngestConfig {
    pub fn with_link(
        mut self,
        link: impl Into<String>,
        detectors: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        self.link_detectors
            .insert(link.into(), detectors.into_iter().map(Into::into).collect());
        self
    }

    pub fn bin_count(&self) -> Result<usize> {
        if self.bin_minutes == 0 {
            return Err(Error::param("bin width must be positive"));
        }
        let span = (self.window_end - self.window_start).num_minutes();
        if span <= 0 {
            return Err(Error::param("window end must be after window start"));
        }
        if span % i64::from(self.bin_minutes) != 0 {
            return Err(Error::param(format!(
                "window of {span} minutes is not divisible by {}-minute bins",
                self.bin_minutes
            )));
        }
        let bins = (span / i64::from(self.bin_minutes)) as usize;
        if bins < 2 {
            return Err(Error::param("window must span at least two bins"));
        }
        Ok(bins)
    }

    /// 0-based bin of `time`, or `None` outside the window.
    pub fn bin_of(&self, time: NaiveTime) -> Option<usize> {
        if time < self.window_start || time >= self.window_end {
            return None;
        }
        Some(((time - self.window_start).num_minutes() / i64::from(self.bin_minutes)) as usize)
    }

    fn detectors_for(&self, link: &str) -> Result<&BTreeSet<String>> {
        self.link_detectors
            .get(link)
            .ok_or_else(|| Error::param(format!("no detectors configured for link `{link}`")))
    }

    fn bin_start(&self, bin: usize) -> NaiveTime {
        self.window_start + chrono::Duration::minutes(bin as i64 * i64::from(self.bin_minutes))
    }
}

/// Per-bin flow means for one day. `None` marks a bin without readings.
fn bin_means<'a>(
    records: impl Iterator<Item = &'a DetectorRecord>,
    cfg: &IngestConfig,
    bins: usize,
) -> Vec<Option<f64>> {
    let mut by_bin: Vec<BTreeMap<&str, Vec<f64>>> = vec![BTreeMap::new(); bins];
    for r in records {
        if let Some(b) = cfg.bin_of(r.time) {
            by_bin[b]
                .entry(r.detector_id.as_str())
                .or_default()
                .push(r.flow);
        }
    }
    by_bin
        .into_iter()
        .map(|detectors| {
            if detectors.is_empty() {
                return None;
            }
            let n = detectors.len() as f64;
            let total: f64 = detectors
                .into_values()
                .map(|mut flows| {
                    flows.sort_unstable_by(f64::total_cmp);
                    flows.iter().sum::<f64>() / flows.len() as f64
                })
                .sum();
            Some(total / n)
        })
        .collect()
}

/// Averages one day of readings from `link`'s detectors into one state per
/// bin. Every record must belong to the link and the day; a bin with no
/// reporting detector is an error.
pub fn aggregate_detectors(
    records: &[DetectorRecord],
    cfg: &IngestConfig,
    link: &str,
) -> Result<Vec<StateVector>> {
    let bins = cfg.bin_count()?;
    let detectors = cfg.detectors_for(link)?;
    let Some(first) = records.first() else {
        return Err(Error::EmptyDataset);
    };
    for r in records {
        if r.date != first.date {
            return Err(Error::param(format!(
                "records span several dates ({} and {})",
                first.date, r.date
            )));
        }
        if !detectors.contains(&r.detector_id) {
            return Err(Error::param(format!(
                "detector `{}` is not configured for link `{link}`",
                r.detector_id
            )));
        }
    }
    bin_means(records.iter(), cfg, bins)
        .into_iter()
        .enumerate()
        .map(|(bin, mean)| match mean {
            Some(v) => StateVector::scalar(v),
            None => Err(Error::MissingBin {
                date: first.date.format(DATE_FORMAT).to_string(),
                bin,
                start: cfg.bin_start(bin).format(TIME_FORMAT).to_string(),
            }),
        })
        .collect()
}

/// Daily trajectories for one link, with the days that were kept or dropped.
#[derive(Debug, Clone)]
pub struct DailyTrajectories {
    pub dataset: TrajectoryDataset,
    pub days: Vec<NaiveDate>,
    pub dropped_missing: Vec<NaiveDate>,
    pub dropped_no_event: Vec<NaiveDate>,
}

/// One trajectory per day with detector data. Detector readings from other
/// links and incidents on other links or outside the window are ignored.
pub fn build_daily_trajectories(
    detectors: &[DetectorRecord],
    incidents: &[IncidentRecord],
    cfg: &IngestConfig,
    link: &str,
) -> Result<DailyTrajectories> {
    let bins = cfg.bin_count()?;
    let horizon = bins - 1;
    let link_detectors = cfg.detectors_for(link)?;

    let mut days: BTreeMap<NaiveDate, Vec<&DetectorRecord>> = BTreeMap::new();
    for r in detectors
        .iter()
        .filter(|r| link_detectors.contains(&r.detector_id))
    {
        days.entry(r.date).or_default().push(r);
    }
    let mut flagged: BTreeMap<NaiveDate, BTreeSet<usize>> = BTreeMap::new();
    for inc in incidents.iter().filter(|i| i.link_id == link) {
        if let Some(b) = cfg.bin_of(inc.time) {
            flagged.entry(inc.date).or_default().insert(b);
        }
    }

    let mut out = DailyTrajectories {
        dataset: TrajectoryDataset::new(1, Vec::new())?,
        days: Vec::new(),
        dropped_missing: Vec::new(),
        dropped_no_event: Vec::new(),
    };
    let mut trajectories = Vec::new();
    for (date, recs) in days {
        let means = bin_means(recs.into_iter(), cfg, bins);
        let states = match fill(means, cfg.missing_bins) {
            Some(s) => s,
            None => {
                out.dropped_missing.push(date);
                continue;
            }
        };
        let bins_hit = flagged.get(&date);
        let events: Vec<bool> = (1..=horizon)
            .map(|t| bins_hit.is_some_and(|set| set.contains(&(t - 1))))
            .collect();
        if cfg.drop_no_event && !events.iter().any(|&a| a) {
            out.dropped_no_event.push(date);
            continue;
        }
        trajectories.push(Trajectory::new(
            date.format(DATE_FORMAT).to_string(),
            1,
            states,
            events,
        )?);
        out.days.push(date);
    }
    if trajectories.is_empty() {
        return Err(Error::EmptyDataset);
    }
    out.dataset = TrajectoryDataset::new(1, trajectories)?;
    Ok(out)
}

fn fill(means: Vec<Option<f64>>, policy: MissingBinPolicy) -> Option<Vec<f64>> {
    if means.iter().all(Option::is_some) {
        return Some(means.into_iter().flatten().collect());
    }
    if policy == MissingBinPolicy::DropDay {
        return None;
    }
    let present: Vec<(usize, f64)> = means
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|v| (i, v)))
        .collect();
    if present.is_empty() {
        return None;
    }
    Some(
        (0..means.len())
            .map(|i| {
                if let Some(v) = means[i] {
                    return v;
                }
                let right = present.partition_point(|&(j, _)| j < i);
                match (right.checked_sub(1).map(|k| present[k]), present.get(right)) {
                    (Some((a, va)), Some(&(b, vb))) => {
                        va + (vb - va) * (i - a) as f64 / (b - a) as f64
                    }
                    (Some((_, va)), None) => va,
                    (None, Some(&(_, vb))) => vb,
                    (None, None) => unreachable!(),
                }
            })
            .collect(),
    )
}
