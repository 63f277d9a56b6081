//! Shared evaluation kernel behind the estimators and the null calibration.
//!
//! Every estimator is a weighted count of states dominated by a grid point,
//! and depends on a trajectory only through its states, its horizon and its
//! first event time. The engine fixes the grid and a canonical trajectory
//! order once, then evaluates any assignment of first event times. Scalar
//! states are handled by rank accumulation and a prefix sum; vector states go
//! through [`dominance_sums`].

use std::cmp::Ordering;

use crate::dominance::{dominance_sums, Neumaier};
use crate::error::{Error, Result};
use crate::estimators::HazardSequence;
use crate::model::{build_grid, first_event_time, lex_cmp, Grid, TrajectoryDataset};
use crate::par;

pub(crate) struct GapEngine<'a> {
    ds: &'a TrajectoryDataset,
    grid: Grid,
    order: Vec<usize>,
    horizons: Vec<usize>,
    // Scalar datasets only: ranks[i][t] is the grid index of X_t on trajectory i.
    ranks: Option<Vec<Vec<u32>>>,
}

impl<'a> GapEngine<'a> {
    pub(crate) fn new(ds: &'a TrajectoryDataset) -> Result<Self> {
        let grid = build_grid(ds)?;
        let trajectories = ds.trajectories();
        let mut order: Vec<usize> = (0..trajectories.len()).collect();
        par::sort_by(&mut order, |&a, &b| {
            let (ta, tb) = (&trajectories[a], &trajectories[b]);
            ta.horizon()
                .cmp(&tb.horizon())
                .then_with(|| lex_cmp(ta.states_flat(), tb.states_flat()))
                .then_with(|| ta.events().cmp(tb.events()))
                .then_with(|| a.cmp(&b))
        });
        let horizons = trajectories.iter().map(|t| t.horizon()).collect();
        let ranks = (ds.dim() == 1).then(|| {
            par::map_slice(trajectories, |traj| {
                traj.states_flat()
                    .iter()
                    .map(|&x| grid.rank_of(&[x]) as u32)
                    .collect()
            })
        });
        Ok(Self {
            ds,
            grid,
            order,
            horizons,
            ranks,
        })
    }

    pub(crate) fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Trajectory indices in canonical (content) order.
    pub(crate) fn order(&self) -> &[usize] {
        &self.order
    }

    pub(crate) fn horizons(&self) -> &[usize] {
        &self.horizons
    }

    pub(crate) fn observed_first_events(&self) -> Vec<Option<usize>> {
        self.ds
            .trajectories()
            .iter()
            .map(|t| first_event_time(t).time())
            .collect()
    }

    /// Raw dominance sums over the grid of the weighted states emitted by
    /// `emit` for each trajectory; `emit(i, push)` calls `push(t, w)` to place
    /// weight `w` on `X_t` of trajectory `i`.
    fn accumulate<F>(&self, emit: F) -> Vec<f64>
    where
        F: Fn(usize, &mut dyn FnMut(usize, f64)),
    {
        if let Some(ranks) = &self.ranks {
            let mut acc = vec![0.0f64; self.grid.len()];
            for &i in &self.order {
                let r = &ranks[i];
                emit(i, &mut |t, w| acc[r[t] as usize] += w);
            }
            let mut running = Neumaier::default();
            for v in acc.iter_mut() {
                running.add(*v);
                *v = running.value();
            }
            return acc;
        }
        let dim = self.ds.dim();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let trajectories = self.ds.trajectories();
        for &i in &self.order {
            let traj = &trajectories[i];
            emit(i, &mut |t, w| {
                points.extend_from_slice(traj.state(t));
                weights.push(w);
            });
        }
        dominance_sums(dim, &points, &weights, &self.grid.coords)
    }

    pub(crate) fn hazards(&self, firsts: &[Option<usize>]) -> HazardSequence {
        hazards_from(&self.horizons, firsts)
    }

    pub(crate) fn b1(&self, firsts: &[Option<usize>]) -> Result<Vec<f64>> {
        let n_events = firsts.iter().filter(|f| f.is_some()).count();
        if n_events == 0 {
            return Err(Error::NoEventBearing);
        }
        let mut values = self.accumulate(|i, push| {
            if let Some(t) = firsts[i] {
                push(t - 1, 1.0);
            }
        });
        let n = n_events as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Ok(values)
    }

    pub(crate) fn beta(&self, firsts: &[Option<usize>], t: usize) -> Vec<f64> {
        let horizons = &self.horizons;
        let mut values = self.accumulate(|i, push| {
            let at_risk = horizons[i] >= t && firsts[i].is_none_or(|first| first >= t);
            if at_risk {
                push(t - 1, 1.0);
            }
        });
        let n = self.ds.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        values
    }

    pub(crate) fn b2(&self, firsts: &[Option<usize>], hazards: &HazardSequence) -> Vec<f64> {
        let horizons = &self.horizons;
        let gammas = hazards.gammas();
        let mut values = self.accumulate(|i, push| {
            let last = firsts[i].unwrap_or(horizons[i]);
            for t in 1..=last {
                let g = gammas[t - 1];
                if g > 0.0 {
                    push(t - 1, g);
                }
            }
        });
        let n = self.ds.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        values
    }

    /// Maximum gap over the grid and the first grid index attaining it.
    pub(crate) fn gap(&self, firsts: &[Option<usize>]) -> Result<(f64, usize)> {
        let b1 = self.b1(firsts)?;
        let hazards = self.hazards(firsts);
        let b2 = self.b2(firsts, &hazards);
        Ok(max_abs_gap(&b1, &b2))
    }
}

/// Risk-set hazards for `t = 1..=max horizon`: a trajectory is at risk at `t`
/// when its horizon reaches `t` and no event happened before `t`.
pub(crate) fn hazards_from(horizons: &[usize], firsts: &[Option<usize>]) -> HazardSequence {
    let h_max = horizons.iter().copied().max().unwrap_or(0);
    // at_risk[t-1] = #{i : H_i >= t, T_i >= t}; built from exit counts.
    let mut exits = vec![0usize; h_max + 1];
    let mut events = vec![0usize; h_max];
    for (&h, &first) in horizons.iter().zip(firsts) {
        match first {
            Some(t) => {
                events[t - 1] += 1;
                exits[t] += 1;
            }
            None => exits[h] += 1,
        }
    }
    let mut at_risk = Vec::with_capacity(h_max);
    let mut remaining = horizons.len();
    for t in 1..=h_max {
        remaining -= exits[t - 1];
        at_risk.push(remaining);
    }
    HazardSequence::from_counts(events, at_risk)
}

pub(crate) fn max_abs_gap(a: &[f64], b: &[f64]) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        let d = (x - y).abs();
        if d.partial_cmp(&best) == Some(Ordering::Greater) {
            best = d;
            arg = k;
        }
    }
    (best.max(0.0), arg)
}
