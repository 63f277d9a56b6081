//! Decision layer: the fixed-time baseline, the conservative DKW threshold and
//! the Monte-Carlo null calibration.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dominance::dominance_sums;
use crate::engine::{max_abs_gap, GapEngine};
use crate::error::{Error, Result};
use crate::estimators::TestStatistic;
use crate::model::{first_event_time, Grid, StateVector, TrajectoryDataset};
use crate::par;

/// Replications used when the caller does not choose.
pub const DEFAULT_NULL_REPLICATIONS: usize = 500;
/// Fewer replications make the tail quantile too noisy to use.
pub const MIN_NULL_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMethod {
    /// Closed-form band from the DKW inequality, doubled. Conservative.
    DkwConservative,
    /// Quantile of the statistic over resampled null datasets.
    MonteCarloNull { replications: usize },
}

impl ThresholdMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ThresholdMethod::DkwConservative => "dkw-conservative",
            ThresholdMethod::MonteCarloNull { .. } => "monte-carlo-null",
        }
    }
}

impl Default for ThresholdMethod {
    fn default() -> Self {
        ThresholdMethod::MonteCarloNull {
            replications: DEFAULT_NULL_REPLICATIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    RejectH0,
    FailToReject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::RejectH0 => "reject-H0",
            Decision::FailToReject => "fail-to-reject",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub argmax_point: StateVector,
    pub n_trajectories: usize,
    pub grid_size: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub threshold_method: ThresholdMethod,
    pub decision: Decision,
    /// Absent for the DKW threshold.
    pub p_value: Option<f64>,
}

impl TestReport {
    /// Single-line `key=value` rendering.
    pub fn to_key_values(&self) -> String {
        let p = self
            .p_value
            .map_or_else(|| "NA".to_string(), |p| p.to_string());
        format!(
            "statistic={} argmax={} n_trajectories={} grid_size={} alpha={} threshold={} method={} decision={} p_value={}",
            self.statistic,
            self.argmax_point,
            self.n_trajectories,
            self.grid_size,
            self.alpha,
            self.threshold,
            self.threshold_method.name(),
            self.decision,
            p
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub t_fixed: usize,
    pub statistic: f64,
    pub argmax: StateVector,
    /// Trajectories whose first event is at `t_fixed`.
    pub n_conditional: usize,
    pub n_total: usize,
}

impl BaselineReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "t_fixed={} statistic={} argmax={} n_conditional={} n_total={}",
            self.t_fixed, self.statistic, self.argmax, self.n_conditional, self.n_total
        )
    }
}

/// The static fixed-time test: compares the law of `X_{t-1}` given `T = t`
/// with the unconditional law of `X_{t-1}`, over the `X_{t-1}` sample points.
pub fn baseline_sup_gap(ds: &TrajectoryDataset, t: usize) -> Result<BaselineReport> {
    let cdfs = baseline_cdfs(ds, t)?;
    let (statistic, arg) = max_abs_gap(&cdfs.conditional, &cdfs.unconditional);
    Ok(BaselineReport {
        t_fixed: t,
        statistic,
        argmax: StateVector::from_slice_unchecked(cdfs.grid.point(arg)),
        n_conditional: cdfs.n_conditional,
        n_total: cdfs.n_total,
    })
}

pub(crate) struct BaselineCdfs {
    pub(crate) grid: Grid,
    pub(crate) conditional: Vec<f64>,
    pub(crate) unconditional: Vec<f64>,
    pub(crate) n_conditional: usize,
    pub(crate) n_total: usize,
}

fn baseline_samples(ds: &TrajectoryDataset, t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let horizon = ds.min_horizon();
    if t == 0 || t > horizon {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    let mut all = Vec::new();
    let mut conditional = Vec::new();
    for traj in ds.trajectories() {
        let x = traj.state(t - 1);
        all.extend_from_slice(x);
        if first_event_time(traj).time() == Some(t) {
            conditional.extend_from_slice(x);
        }
    }
    if conditional.is_empty() {
        return Err(Error::ConditionalSampleEmpty { t });
    }
    Ok((all, conditional))
}

pub(crate) fn baseline_cdfs(ds: &TrajectoryDataset, t: usize) -> Result<BaselineCdfs> {
    let (all, conditional) = baseline_samples(ds, t)?;
    let grid = Grid::from_points(ds.dim(), all.clone());
    let (unconditional, n_total) = ecdf_on(ds.dim(), &all, &grid.coords);
    let (conditional, n_conditional) = ecdf_on(ds.dim(), &conditional, &grid.coords);
    Ok(BaselineCdfs {
        grid,
        conditional,
        unconditional,
        n_conditional,
        n_total,
    })
}

/// Baseline CDFs evaluated at arbitrary points: `(conditional, unconditional)`.
pub fn baseline_cdfs_at(
    ds: &TrajectoryDataset,
    t: usize,
    queries: &[StateVector],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (all, conditional) = baseline_samples(ds, t)?;
    let flat: Vec<f64> = queries
        .iter()
        .flat_map(|q| q.coords().iter().copied())
        .collect();
    let (c, _) = ecdf_on(ds.dim(), &conditional, &flat);
    let (u, _) = ecdf_on(ds.dim(), &all, &flat);
    Ok((c, u))
}

fn ecdf_on(dim: usize, sample: &[f64], queries: &[f64]) -> (Vec<f64>, usize) {
    let n = sample.len() / dim;
    let mut v = dominance_sums(dim, sample, &vec![1.0; n], queries);
    v.iter_mut().for_each(|x| *x /= n as f64);
    (v, n)
}

/// `2 sqrt(ln(2/alpha) / (2N))`: twice the DKW half-width for one empirical
/// CDF of `N` samples at level `alpha`. The doubling covers the second
/// estimate heuristically; the threshold is conservative, not exact.
pub fn dkw_threshold(n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("DKW threshold needs N >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(2.0 * ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullCalibration {
    pub observed: f64,
    pub threshold: f64,
    pub p_value: f64,
    /// One statistic per replication, in replication order.
    pub null_statistics: Vec<f64>,
}

/// Calibrates a threshold by resampling event times under the null.
///
/// Each replication keeps every observed state path and redraws the first
/// event time from the fitted hazards, independently of the states. If every
/// observed trajectory carries an event (the usual case after the exclusion
/// filter), redraws are conditioned on an event within the trajectory's
/// horizon, mirroring that filter. Replication `r` draws from its own stream
/// derived from `(seed, r)`, and trajectories are visited in a content-based
/// order, so the result is independent of trajectory order and thread count.
pub fn monte_carlo_null_threshold(
    ds: &TrajectoryDataset,
    replications: usize,
    alpha: f64,
    seed: u64,
) -> Result<NullCalibration> {
    Ok(calibrate(ds, replications, alpha, seed)?.1)
}

fn calibrate(
    ds: &TrajectoryDataset,
    replications: usize,
    alpha: f64,
    seed: u64,
) -> Result<(TestStatistic, NullCalibration)> {
    if replications < MIN_NULL_REPLICATIONS {
        return Err(Error::param(format!(
            "at least {MIN_NULL_REPLICATIONS} null replications are required, got {replications}"
        )));
    }
    check_alpha(alpha)?;
    let engine = GapEngine::new(ds)?;
    let observed_firsts = engine.observed_first_events();
    let (observed, arg) = engine.gap(&observed_firsts)?;
    let conditioned = observed_firsts.iter().all(Option::is_some);

    let pmf = engine.hazards(&observed_firsts).first_event_pmf();
    let mut cumulative = Vec::with_capacity(pmf.len() + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for p in pmf {
        acc += p;
        cumulative.push(acc);
    }

    let null_statistics = par::map_range(replications, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut firsts = vec![None; ds.len()];
        for &i in engine.order() {
            let horizon = engine.horizons()[i];
            let mass = cumulative[horizon];
            let u: f64 = rng.gen();
            let target = if conditioned { u * mass } else { u };
            if target < mass {
                let k = cumulative[1..=horizon].partition_point(|&c| c <= target);
                firsts[i] = Some(k + 1);
            }
        }
        match engine.gap(&firsts) {
            Ok((value, _)) => value,
            Err(_) => 0.0,
        }
    });

    let mut sorted = null_statistics.clone();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let rank = ((1.0 - alpha) * replications as f64).ceil() as usize;
    let threshold = sorted[rank.clamp(1, replications) - 1];
    let exceed = null_statistics.iter().filter(|&&s| s >= observed).count();
    let p_value = (1 + exceed) as f64 / (replications + 1) as f64;

    let statistic = TestStatistic {
        value: observed,
        argmax: StateVector::from_slice_unchecked(engine.grid().point(arg)),
        grid_size: engine.grid().len(),
    };
    Ok((
        statistic,
        NullCalibration {
            observed,
            threshold,
            p_value,
            null_statistics,
        },
    ))
}

/// Runs the reorganized-data test end to end.
pub fn run_test(
    ds: &TrajectoryDataset,
    method: ThresholdMethod,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let (statistic, threshold, p_value) = match method {
        ThresholdMethod::DkwConservative => {
            let statistic = crate::estimators::sup_gap(ds)?;
            let threshold = dkw_threshold(ds.event_bearing_count(), alpha)?;
            (statistic, threshold, None)
        }
        ThresholdMethod::MonteCarloNull { replications } => {
            let (statistic, cal) = calibrate(ds, replications, alpha, seed)?;
            (statistic, cal.threshold, Some(cal.p_value))
        }
    };
    let decision = if statistic.value > threshold {
        Decision::RejectH0
    } else {
        Decision::FailToReject
    };
    Ok(TestReport {
        statistic: statistic.value,
        argmax_point: statistic.argmax,
        n_trajectories: ds.len(),
        grid_size: statistic.grid_size,
        alpha,
        threshold,
        threshold_method: method,
        decision,
        p_value,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Trajectory;
    use proptest::prelude::*;

    fn hand_fixture() -> TrajectoryDataset {
        TrajectoryDataset::from_trajectories(vec![
            Trajectory::scalar("1", &[1.0, 2.0, 2.0], &[0, 1]).unwrap(),
            Trajectory::scalar("2", &[3.0, 3.0], &[1]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn baseline_hand_value() {
        let r = baseline_sup_gap(&hand_fixture(), 1).unwrap();
        assert_eq!(r.statistic, 0.5);
        assert_eq!(r.argmax.coords(), &[1.0]);
        assert_eq!((r.n_conditional, r.n_total), (1, 2));
    }

    #[test]
    fn baseline_identical_samples() {
        let ds = TrajectoryDataset::from_trajectories(
            (0..5)
                .map(|i| Trajectory::scalar(i.to_string(), &[i as f64, 0.0], &[1]).unwrap())
                .collect(),
        )
        .unwrap();
        assert_eq!(baseline_sup_gap(&ds, 1).unwrap().statistic, 0.0);
    }

    #[test]
    fn baseline_empty_conditional() {
        let ds = TrajectoryDataset::from_trajectories(
            (0..10)
                .map(|i| Trajectory::scalar(i.to_string(), &[i as f64, 0.0, 0.0], &[0, 1]).unwrap())
                .collect(),
        )
        .unwrap();
        assert!(matches!(
            baseline_sup_gap(&ds, 1),
            Err(Error::ConditionalSampleEmpty { t: 1 })
        ));
        assert!(matches!(
            baseline_sup_gap(&ds, 3),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn dkw_values() {
        let e = dkw_threshold(2000, 0.05).unwrap();
        assert!((e - 2.0 * (40f64.ln() / 4000.0).sqrt()).abs() < 1e-15);
        assert!((e - 0.0607).abs() < 5e-4);
        let near_one = dkw_threshold(100, 1.0 - 1e-12).unwrap();
        assert!((near_one - 2.0 * (2f64.ln() / 200.0).sqrt()).abs() < 1e-9);
        assert!(dkw_threshold(10_000_000, 0.05).unwrap() < 1e-3);
        assert!(dkw_threshold(10, 0.0).is_err());
        assert!(dkw_threshold(10, 1.0).is_err());
        assert!(dkw_threshold(0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn dkw_monotone(n in 1usize..100_000, a in 0.001f64..0.9) {
            prop_assert!(dkw_threshold(n + 1, a).unwrap() < dkw_threshold(n, a).unwrap());
            prop_assert!(dkw_threshold(n, a * 0.9).unwrap() > dkw_threshold(n, a).unwrap());
        }
    }

    #[test]
    fn null_needs_enough_replications() {
        assert!(monte_carlo_null_threshold(&hand_fixture(), 99, 0.05, 1).is_err());
        assert!(monte_carlo_null_threshold(&hand_fixture(), 100, 1.5, 1).is_err());
    }

    #[test]
    fn zero_statistic_has_unit_p_value() {
        // All pre-event states equal 2 and every event is at t = 1, so both
        // CDFs jump 0 -> 1 at 2 and every null replication is identical.
        let ds = TrajectoryDataset::from_trajectories(
            (0..6)
                .map(|i| {
                    Trajectory::scalar(i.to_string(), &[2.0, 3.0 + i as f64, 1.0], &[1, 0]).unwrap()
                })
                .collect(),
        )
        .unwrap();
        let cal = monte_carlo_null_threshold(&ds, 200, 0.05, 3).unwrap();
        assert_eq!(cal.observed, 0.0);
        assert_eq!(cal.p_value, 1.0);
    }

    #[test]
    fn null_is_deterministic_and_order_invariant() {
        let ds = hand_fixture();
        let a = monte_carlo_null_threshold(&ds, 150, 0.1, 11).unwrap();
        let b = monte_carlo_null_threshold(&ds, 150, 0.1, 11).unwrap();
        assert_eq!(a, b);
        let mut rev = ds.trajectories().to_vec();
        rev.reverse();
        let rev = TrajectoryDataset::from_trajectories(rev).unwrap();
        assert_eq!(monte_carlo_null_threshold(&rev, 150, 0.1, 11).unwrap(), a);
    }

    #[test]
    fn run_test_decision_rule() {
        let r = run_test(&hand_fixture(), ThresholdMethod::DkwConservative, 0.05, 0).unwrap();
        assert_eq!(r.statistic, 0.25);
        assert!(r.p_value.is_none());
        assert_eq!(r.decision, Decision::FailToReject);
        assert_eq!(r.decision == Decision::RejectH0, r.statistic > r.threshold);
        let line = r.to_key_values();
        assert!(line.contains("statistic=0.25"), "{line}");
        assert!(line.contains("p_value=NA"));

        let empty =
            TrajectoryDataset::from_trajectories(vec![
                Trajectory::scalar("a", &[1.0, 2.0], &[0]).unwrap()
            ])
            .unwrap();
        assert!(matches!(
            run_test(&empty, ThresholdMethod::DkwConservative, 0.05, 0),
            Err(Error::NoEventBearing)
        ));
    }
}
