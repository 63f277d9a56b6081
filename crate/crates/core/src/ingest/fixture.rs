//! Synthetic detector and incident feeds in the normalized CSV layout.
//!
//! Day `d` draws from the ChaCha stream `(seed, d)`. The link flow follows
//! the single-link dynamics once per bin, starting from the inflow; each
//! detector reports that flow plus uniform noise of half-width
//! `detector_noise`, rounded to 0.1 and clamped at zero. During bin `k`
//! an incident is logged with probability `event_model.probability(flow of
//! bin k)` at a uniformly drawn minute inside the bin. Every
//! `drop_bin_every`-th day (1-based) loses all readings of one bin, which
//! exercises the missing-bin policy.

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::Rng;

use super::records::{DetectorRecord, IncidentRecord};
use crate::error::{Error, Result};
use crate::simulate::{stream, EventModel};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub start_date: NaiveDate,
    pub days: usize,
    pub link: String,
    pub detectors: usize,
    pub window_start: NaiveTime,
    pub window_end: NaiveTime,
    pub bin_minutes: u32,
    pub inflow: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub noise_half_width: f64,
    pub detector_noise: f64,
    pub event_model: EventModel,
    pub drop_bin_every: Option<usize>,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            start_date: NaiveDate::from_ymd_opt(2022, 1, 3).unwrap(),
            days: 60,
            link: "L1".into(),
            detectors: 3,
            window_start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            window_end: NaiveTime::from_hms_opt(14, 0, 0).unwrap(),
            bin_minutes: 5,
            inflow: 100.0,
            mu0: 0.3,
            mu1: 0.2,
            noise_half_width: 10.0,
            detector_noise: 3.0,
            event_model: EventModel::ThresholdBernoulli {
                p_low: 0.005,
                p_high: 0.05,
                threshold: 105.0,
                aggregator: crate::simulate::Aggregator::AnyCoordinate,
            },
            drop_bin_every: Some(17),
            seed: 1,
        }
    }
}

impl FixtureSpec {
    pub fn detector_ids(&self) -> Vec<String> {
        (1..=self.detectors)
            .map(|j| format!("{}-D{j}", self.link))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub detectors: Vec<DetectorRecord>,
    pub incidents: Vec<IncidentRecord>,
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    spec.event_model.validate()?;
    if spec.detectors == 0 || spec.days == 0 || spec.bin_minutes == 0 {
        return Err(Error::param(
            "fixture needs at least one day, detector and minute per bin",
        ));
    }
    let span = (spec.window_end - spec.window_start).num_minutes();
    if span <= 0 || span % i64::from(spec.bin_minutes) != 0 {
        return Err(Error::param(
            "fixture window must be a positive multiple of the bin width",
        ));
    }
    let bins = (span / i64::from(spec.bin_minutes)) as usize;
    let ids = spec.detector_ids();
    let mut out = Fixture {
        detectors: Vec::new(),
        incidents: Vec::new(),
    };
    for d in 0..spec.days {
        let mut rng = stream(spec.seed, d);
        let date = spec.start_date + Duration::days(d as i64);
        let hole = spec
            .drop_bin_every
            .filter(|&k| k > 0 && (d + 1) % k == 0)
            .map(|_| rng.gen_range(0..bins));
        let mut x = spec.inflow;
        let mut incident = false;
        for b in 0..bins {
            if b > 0 {
                let mu = if incident { spec.mu1 } else { spec.mu0 };
                let w = if spec.noise_half_width > 0.0 {
                    rng.gen_range(-spec.noise_half_width..spec.noise_half_width)
                } else {
                    0.0
                };
                x = (1.0 - mu) * x + mu * spec.inflow + w;
            }
            let bin_start =
                spec.window_start + Duration::minutes(b as i64 * i64::from(spec.bin_minutes));
            incident = rng.gen_bool(spec.event_model.probability(&[x]));
            if incident {
                let offset = rng.gen_range(0..spec.bin_minutes);
                out.incidents.push(IncidentRecord {
                    date,
                    time: bin_start + Duration::minutes(i64::from(offset)),
                    link_id: spec.link.clone(),
                });
            }
            for id in &ids {
                let noise = if spec.detector_noise > 0.0 {
                    rng.gen_range(-spec.detector_noise..spec.detector_noise)
                } else {
                    0.0
                };
                if hole == Some(b) {
                    continue;
                }
                out.detectors.push(DetectorRecord {
                    date,
                    time: bin_start,
                    detector_id: id.clone(),
                    flow: ((x + noise) * 10.0).round().max(0.0) / 10.0,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_daily_trajectories, IngestConfig};

    #[test]
    fn deterministic_and_ingestible() {
        let spec = FixtureSpec::default();
        let a = generate_fixture(&spec).unwrap();
        assert_eq!(a, generate_fixture(&spec).unwrap());
        assert!(!a.incidents.is_empty());

        let cfg = IngestConfig::default().with_link("L1", spec.detector_ids());
        let out = build_daily_trajectories(&a.detectors, &a.incidents, &cfg, "L1").unwrap();
        assert_eq!(out.dropped_missing.len(), spec.days / 17);
        assert_eq!(
            out.days.len() + out.dropped_missing.len() + out.dropped_no_event.len(),
            spec.days
        );
        assert!(out.dataset.trajectories().iter().all(|t| t.horizon() == 95));
    }
}
