//! Trajectory data model, first-event extraction, the componentwise order and
//! the evaluation grid shared by every estimator.
//!
//! Time indexing follows the convention used throughout the crate: a
//! trajectory of horizon `H` carries states `X_0..X_H` and event flags
//! `A_1..A_H`, and the flag `A_t` is paired with its predecessor state
//! `X_{t-1}`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::par;

/// One observation of the system state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        check_finite(&coords, "state vector")?;
        Ok(Self(coords.into_iter().map(normalize_zero).collect()))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_slice_unchecked(coords: &[f64]) -> Self {
        Self(coords.to_vec())
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// Time of the first rare event on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FirstEventTime {
    /// First event at `t` (1-based).
    Occurred(usize),
    NoEvent,
}

impl FirstEventTime {
    pub fn time(self) -> Option<usize> {
        match self {
            FirstEventTime::Occurred(t) => Some(t),
            FirstEventTime::NoEvent => None,
        }
    }
}

/// One independent realization: states `X_0..X_H` and flags `A_1..A_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    dim: usize,
    // (H + 1) * dim coordinates, row-major by time.
    states: Vec<f64>,
    events: Vec<bool>,
}

impl Trajectory {
    /// Builds a trajectory from a flat, time-major state buffer.
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        states: Vec<f64>,
        events: Vec<bool>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidTrajectory(
                "dimension must be at least 1".into(),
            ));
        }
        if events.is_empty() {
            return Err(Error::InvalidTrajectory(
                "horizon must be at least 1".into(),
            ));
        }
        let expected = (events.len() + 1) * dim;
        if states.len() != expected {
            return Err(Error::InvalidTrajectory(format!(
                "expected {} states of dimension {dim} for horizon {}, got {} coordinates",
                events.len() + 1,
                events.len(),
                states.len()
            )));
        }
        check_finite(&states, "trajectory state")?;
        Ok(Self {
            id: id.into(),
            dim,
            states: states.into_iter().map(normalize_zero).collect(),
            events,
        })
    }

    pub fn from_states(
        id: impl Into<String>,
        states: &[StateVector],
        events: Vec<bool>,
    ) -> Result<Self> {
        let dim = states.first().map(StateVector::dim).unwrap_or(0);
        if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let flat = states
            .iter()
            .flat_map(|s| s.coords().iter().copied())
            .collect();
        Self::new(id, dim, flat, events)
    }

    /// Convenience constructor for scalar trajectories.
    pub fn scalar(id: impl Into<String>, states: &[f64], events: &[u8]) -> Result<Self> {
        Self::new(
            id,
            1,
            states.to_vec(),
            events.iter().map(|&a| a != 0).collect(),
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.events.len()
    }

    /// State `X_t` for `t` in `0..=H`.
    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    /// Flags `A_1..A_H`; index 0 holds `A_1`.
    pub fn events(&self) -> &[bool] {
        &self.events
    }

    /// Flag `A_t` for `t` in `1..=H`.
    pub fn event(&self, t: usize) -> bool {
        self.events[t - 1]
    }
}

/// Smallest `t` with `A_t = 1`.
pub fn first_event_time(traj: &Trajectory) -> FirstEventTime {
    match traj.events.iter().position(|&a| a) {
        Some(i) => FirstEventTime::Occurred(i + 1),
        None => FirstEventTime::NoEvent,
    }
}

/// The state `X_{T-1}` immediately preceding the first event.
pub fn pre_event_state(traj: &Trajectory) -> Result<StateVector> {
    match first_event_time(traj) {
        FirstEventTime::Occurred(t) => Ok(StateVector::from_slice_unchecked(traj.state(t - 1))),
        FirstEventTime::NoEvent => Err(Error::NoEvent),
    }
}

/// `x ⪯ y`: every coordinate of `x` is at most the matching one of `y`.
pub fn componentwise_leq(x: &[f64], y: &[f64]) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(leq(x, y))
}

#[inline]
pub(crate) fn leq(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a <= b)
}

/// Lexicographic order on coordinates; a strict total order on finite values
/// once negative zero has been normalized away.
#[inline]
pub(crate) fn lex_cmp(x: &[f64], y: &[f64]) -> Ordering {
    for (a, b) in x.iter().zip(y) {
        match a.total_cmp(b) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// N independent trajectories sharing a state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    dim: usize,
    trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    pub fn new(dim: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dataset dimension must be at least 1"));
        }
        if let Some(bad) = trajectories.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Self { dim, trajectories })
    }

    /// Infers the dimension from the first trajectory.
    pub fn from_trajectories(trajectories: Vec<Trajectory>) -> Result<Self> {
        let dim = trajectories.first().ok_or(Error::EmptyDataset)?.dim();
        Self::new(dim, trajectories)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    /// The shared horizon, if every trajectory has the same one.
    pub fn common_horizon(&self) -> Option<usize> {
        let first = self.trajectories.first()?.horizon();
        self.trajectories
            .iter()
            .all(|t| t.horizon() == first)
            .then_some(first)
    }

    pub fn max_horizon(&self) -> usize {
        self.trajectories
            .iter()
            .map(Trajectory::horizon)
            .max()
            .unwrap_or(0)
    }

    pub fn min_horizon(&self) -> usize {
        self.trajectories
            .iter()
            .map(Trajectory::horizon)
            .min()
            .unwrap_or(0)
    }

    pub fn event_bearing_count(&self) -> usize {
        self.trajectories
            .iter()
            .filter(|t| first_event_time(t) != FirstEventTime::NoEvent)
            .count()
    }

    /// Drops trajectories on which no event occurs.
    pub fn retain_event_bearing(mut self) -> Self {
        self.trajectories
            .retain(|t| first_event_time(t) != FirstEventTime::NoEvent);
        self
    }

    pub fn first_event_times(&self) -> Vec<FirstEventTime> {
        self.trajectories.iter().map(first_event_time).collect()
    }
}

/// Finite point set stored flat, sorted lexicographically and deduplicated.
#[derive(Debug, Clone)]
pub(crate) struct Grid {
    pub(crate) dim: usize,
    pub(crate) coords: Vec<f64>,
}

impl Grid {
    pub(crate) fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub(crate) fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn to_states(&self) -> Vec<StateVector> {
        self.coords
            .chunks_exact(self.dim)
            .map(StateVector::from_slice_unchecked)
            .collect()
    }

    /// Sorts and deduplicates an arbitrary flat point buffer.
    pub(crate) fn from_points(dim: usize, mut coords: Vec<f64>) -> Self {
        if dim == 1 {
            par::sort_by(&mut coords, |a, b| a.total_cmp(b));
            coords.dedup();
            return Self { dim, coords };
        }
        let mut rows: Vec<&[f64]> = coords.chunks_exact(dim).collect();
        par::sort_by(&mut rows, |a, b| lex_cmp(a, b));
        rows.dedup();
        let coords = rows.concat();
        Self { dim, coords }
    }

    /// Index of `point` in the grid; the point must be present.
    pub(crate) fn rank_of(&self, point: &[f64]) -> usize {
        if self.dim == 1 {
            let x = point[0];
            return self
                .coords
                .partition_point(|v| v.total_cmp(&x) == Ordering::Less);
        }
        let mut lo = 0;
        let mut hi = self.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if lex_cmp(self.point(mid), point) == Ordering::Less {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Every state `X_0..X_H` of every trajectory, deduplicated and sorted
/// lexicographically. Pre-event states are states, so they are included.
pub(crate) fn build_grid(ds: &TrajectoryDataset) -> Result<Grid> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: usize = ds.trajectories.iter().map(|t| t.states.len()).sum();
    let mut coords = Vec::with_capacity(total);
    for traj in &ds.trajectories {
        coords.extend_from_slice(&traj.states);
    }
    Ok(Grid::from_points(ds.dim, coords))
}

/// The finite set over which the sup-gap is evaluated.
///
/// For scalar states the set contains every jump point of both estimated
/// CDFs, so the maximum over it equals the supremum over the real line. For
/// `n > 1` it is a lower bound: meet points of incomparable samples are not
/// added.
pub fn evaluation_grid(ds: &TrajectoryDataset) -> Result<Vec<StateVector>> {
    Ok(build_grid(ds)?.to_states())
}

fn check_finite(values: &[f64], context: &str) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFinite {
            value,
            context: context.into(),
        }),
        None => Ok(()),
    }
}

#[inline]
fn normalize_zero(x: f64) -> f64 {
    // -0.0 + 0.0 == +0.0; keeps total_cmp consistent with <=.
    x + 0.0
}
