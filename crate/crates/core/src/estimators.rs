//! Empirical estimators of the reorganized-data test.
//!
//! With `T` the first event time of a trajectory:
//!
//! * `b1(x) = P(X_{T-1} ⪯ x)`, the state distribution just before the first
//!   event, estimated from event-bearing trajectories;
//! * `beta_t(x) = P(X_{t-1} ⪯ x, A_{1:t-1} = 0)`;
//! * `gamma_t = P(A_t = 1 | A_{1:t-1} = 0)`, the discrete hazard, estimated on
//!   the risk set;
//! * `b2(x) = Σ_t beta_t(x) gamma_t`.
//!
//! When events happen independently of the state, `b1 = b2`; the test
//! statistic is the largest gap between the two estimates.
//!
//! The per-link conditional event probabilities `P(A_{t+1} = 1 | X_t ⪯ x, ...)`
//! and their unconditional counterpart are never estimated directly: comparing
//! `b1` and `b2` replaces that comparison. The constant-ratio assumption
//! linking the conditional and unconditional state laws is a property of the
//! data-generating process and is not checked.

use crate::engine::{max_abs_gap, GapEngine};
use crate::error::{Error, Result};
use crate::model::{StateVector, TrajectoryDataset};

/// A step function over the componentwise order, tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    grid: Vec<StateVector>,
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub(crate) fn new(grid: Vec<StateVector>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &[StateVector] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateVector, f64)> {
        self.grid.iter().zip(self.values.iter().copied())
    }

    /// Value at grid point `x`, if `x` is on the grid.
    pub fn value_at(&self, x: &[f64]) -> Option<f64> {
        self.grid
            .iter()
            .position(|g| g.coords() == x)
            .map(|i| self.values[i])
    }
}

/// Estimated hazards `gamma_1..gamma_H` with their risk-set counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardSequence {
    gammas: Vec<f64>,
    at_risk_counts: Vec<usize>,
    event_counts: Vec<usize>,
}

impl HazardSequence {
    pub(crate) fn from_counts(event_counts: Vec<usize>, at_risk_counts: Vec<usize>) -> Self {
        let gammas = event_counts
            .iter()
            .zip(&at_risk_counts)
            .map(|(&e, &r)| if r > 0 { e as f64 / r as f64 } else { 0.0 })
            .collect();
        Self {
            gammas,
            at_risk_counts,
            event_counts,
        }
    }

    /// `gammas()[t - 1]` is the hazard at `t`.
    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gammas[t - 1]
    }

    pub fn at_risk_counts(&self) -> &[usize] {
        &self.at_risk_counts
    }

    pub fn event_counts(&self) -> &[usize] {
        &self.event_counts
    }

    pub fn horizon(&self) -> usize {
        self.gammas.len()
    }

    /// Probability mass of the first event time implied by the hazards,
    /// `P(T = t) = gamma_t Π_{s<t} (1 - gamma_s)`.
    pub fn first_event_pmf(&self) -> Vec<f64> {
        let mut survival = 1.0;
        self.gammas
            .iter()
            .map(|&g| {
                let p = survival * g;
                survival *= 1.0 - g;
                p
            })
            .collect()
    }
}

/// The sup-gap statistic and the first grid point (lexicographically) where
/// it is attained.
#[derive(Debug, Clone, PartialEq)]
pub struct TestStatistic {
    pub value: f64,
    pub argmax: StateVector,
    pub grid_size: usize,
}

/// `b1` on the evaluation grid. Only event-bearing trajectories count, both
/// in the numerator and in the normalizing `N`.
pub fn estimate_b1(ds: &TrajectoryDataset) -> Result<EmpiricalCdf> {
    let engine = GapEngine::new(ds)?;
    let values = engine.b1(&engine.observed_first_events())?;
    Ok(EmpiricalCdf::new(engine.grid().to_states(), values))
}

/// `beta_t` on the evaluation grid, for `1 <= t <= H` (the longest horizon).
/// Trajectories whose horizon ends before `t` contribute nothing.
pub fn estimate_beta_t(ds: &TrajectoryDataset, t: usize) -> Result<EmpiricalCdf> {
    let horizon = ds.max_horizon();
    if t == 0 || t > horizon {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    let engine = GapEngine::new(ds)?;
    let values = engine.beta(&engine.observed_first_events(), t);
    Ok(EmpiricalCdf::new(engine.grid().to_states(), values))
}

/// Risk-set hazards `gamma_t` for `t = 1..=H`; zero where nobody is at risk.
pub fn estimate_gammas(ds: &TrajectoryDataset) -> HazardSequence {
    let horizons: Vec<usize> = ds.trajectories().iter().map(|t| t.horizon()).collect();
    let firsts: Vec<Option<usize>> = ds
        .first_event_times()
        .into_iter()
        .map(|f| f.time())
        .collect();
    crate::engine::hazards_from(&horizons, &firsts)
}

/// `b2 = Σ_{t=1}^{H} beta_t gamma_t` on the evaluation grid, normalized by
/// the number of trajectories passed in.
pub fn estimate_b2(ds: &TrajectoryDataset) -> Result<EmpiricalCdf> {
    let engine = GapEngine::new(ds)?;
    let firsts = engine.observed_first_events();
    let hazards = engine.hazards(&firsts);
    let values = engine.b2(&firsts, &hazards);
    Ok(EmpiricalCdf::new(engine.grid().to_states(), values))
}

/// `max |b1 - b2|` over the evaluation grid.
pub fn sup_gap(ds: &TrajectoryDataset) -> Result<TestStatistic> {
    let engine = GapEngine::new(ds)?;
    let (value, arg) = engine.gap(&engine.observed_first_events())?;
    Ok(TestStatistic {
        value,
        argmax: StateVector::from_slice_unchecked(engine.grid().point(arg)),
        grid_size: engine.grid().len(),
    })
}

/// Both estimates on the evaluation grid, plus the gap.
#[derive(Debug, Clone)]
pub struct CdfPair {
    pub b1: EmpiricalCdf,
    pub b2: EmpiricalCdf,
    pub statistic: TestStatistic,
}

pub fn estimate_cdf_pair(ds: &TrajectoryDataset) -> Result<CdfPair> {
    let engine = GapEngine::new(ds)?;
    let firsts = engine.observed_first_events();
    let b1 = engine.b1(&firsts)?;
    let b2 = engine.b2(&firsts, &engine.hazards(&firsts));
    let (value, arg) = max_abs_gap(&b1, &b2);
    let grid = engine.grid().to_states();
    let statistic = TestStatistic {
        value,
        argmax: grid[arg].clone(),
        grid_size: grid.len(),
    };
    Ok(CdfPair {
        b1: EmpiricalCdf::new(grid.clone(), b1),
        b2: EmpiricalCdf::new(grid, b2),
        statistic,
    })
}

/// `b1` evaluated at arbitrary points.
pub fn estimate_b1_at(ds: &TrajectoryDataset, queries: &[StateVector]) -> Result<Vec<f64>> {
    let dim = check_queries(ds, queries)?;
    let mut points = Vec::new();
    for traj in ds.trajectories() {
        if let Some(t) = crate::model::first_event_time(traj).time() {
            points.extend_from_slice(traj.state(t - 1));
        }
    }
    let n = points.len() / dim;
    if n == 0 {
        return Err(Error::NoEventBearing);
    }
    let weights = vec![1.0; n];
    let flat: Vec<f64> = queries
        .iter()
        .flat_map(|q| q.coords().iter().copied())
        .collect();
    let mut out = crate::dominance::dominance_sums(dim, &points, &weights, &flat);
    out.iter_mut().for_each(|v| *v /= n as f64);
    Ok(out)
}

/// `b2` evaluated at arbitrary points.
pub fn estimate_b2_at(ds: &TrajectoryDataset, queries: &[StateVector]) -> Result<Vec<f64>> {
    let dim = check_queries(ds, queries)?;
    let hazards = estimate_gammas(ds);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for traj in ds.trajectories() {
        let last = crate::model::first_event_time(traj)
            .time()
            .unwrap_or(traj.horizon());
        for t in 1..=last {
            let g = hazards.gamma(t);
            if g > 0.0 {
                points.extend_from_slice(traj.state(t - 1));
                weights.push(g);
            }
        }
    }
    let flat: Vec<f64> = queries
        .iter()
        .flat_map(|q| q.coords().iter().copied())
        .collect();
    let mut out = crate::dominance::dominance_sums(dim, &points, &weights, &flat);
    let n = ds.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

fn check_queries(ds: &TrajectoryDataset, queries: &[StateVector]) -> Result<usize> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = ds.dim();
    if let Some(q) = queries.iter().find(|q| q.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: q.dim(),
        });
    }
    Ok(dim)
}
