//! Synthetic single-link and parallel-link traffic trajectories with
//! piecewise-Bernoulli accident processes.
//!
//! Both models advance as
//!
//! ```text
//! A_{t+1} ~ Bernoulli(p(x_t))
//! x_{t+1} = (1 - mu(A_t)) x_t + mu(A_t) * inflow_t + w_t,   w_t ~ U(-w, w)
//! ```
//!
//! with `A_0 = 0` and `x_0 = x0 + w_0`: the start is the configured `x0`
//! perturbed by one noise draw (turn off with `start_noise = false`). On
//! parallel links the inflow term of link `i` is the softmax share
//! `exp(-beta x_i) / Σ_j exp(-beta x_j)` of the total inflow and each link
//! draws its own noise. Trajectories run for the full horizon;
//! nothing stops at the first event.
//!
//! Trajectory `i` draws from the ChaCha stream `(seed, i)`, so a dataset is
//! bit-identical for any thread count and dropping one trajectory never
//! changes another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::{Trajectory, TrajectoryDataset};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Event probability independent of the state.
    Null,
    /// Event probability jumps once the flow crosses a threshold.
    Alternative,
}

/// How a threshold is compared against a vector state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    /// High regime if any link is at or above the threshold.
    AnyCoordinate,
    /// High regime if the largest link flow is at or above the threshold.
    /// Same regime split as `AnyCoordinate` for a `>=` test.
    MaxCoordinate,
}

impl Aggregator {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "any-coordinate" | "any" => Ok(Aggregator::AnyCoordinate),
            "max-coordinate" | "max" => Ok(Aggregator::MaxCoordinate),
            other => Err(Error::param(format!("unknown aggregator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventModel {
    ConstantBernoulli {
        p: f64,
    },
    ThresholdBernoulli {
        p_low: f64,
        p_high: f64,
        threshold: f64,
        aggregator: Aggregator,
    },
}

impl EventModel {
    /// Probabilities may be 0 or 1, which switches events off or forces them.
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        match *self {
            EventModel::ConstantBernoulli { p } => check("p", p),
            EventModel::ThresholdBernoulli {
                p_low,
                p_high,
                threshold,
                ..
            } => {
                check("p_low", p_low)?;
                check("p_high", p_high)?;
                if threshold.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("threshold must be finite"))
                }
            }
        }
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        match *self {
            EventModel::ConstantBernoulli { p } => p,
            EventModel::ThresholdBernoulli {
                p_low,
                p_high,
                threshold,
                aggregator,
            } => {
                let high = match aggregator {
                    Aggregator::AnyCoordinate => x.iter().any(|&v| v >= threshold),
                    Aggregator::MaxCoordinate => {
                        x.iter().copied().fold(f64::NEG_INFINITY, f64::max) >= threshold
                    }
                };
                if high {
                    p_high
                } else {
                    p_low
                }
            }
        }
    }

    /// Overrides from `event_model`, `p`, `p_low`, `p_high`, `threshold` and
    /// `aggregator`. Switching kind keeps whichever parameters carry over.
    fn apply_config(&mut self, kv: &KeyValues) -> Result<()> {
        let kind = kv.get("event_model");
        let (mut p, mut p_low, mut p_high, mut threshold, mut aggregator) = match *self {
            EventModel::ConstantBernoulli { p } => {
                (p, p, p, f64::INFINITY, Aggregator::AnyCoordinate)
            }
            EventModel::ThresholdBernoulli {
                p_low,
                p_high,
                threshold,
                aggregator,
            } => (p_low, p_low, p_high, threshold, aggregator),
        };
        if let Some(v) = kv.get_parsed("p")? {
            p = v;
        }
        if let Some(v) = kv.get_parsed("p_low")? {
            p_low = v;
        }
        if let Some(v) = kv.get_parsed("p_high")? {
            p_high = v;
        }
        if let Some(v) = kv.get_parsed("threshold")? {
            threshold = v;
        }
        if let Some(v) = kv.get("aggregator") {
            aggregator = Aggregator::parse(v)?;
        }
        let constant = match kind {
            Some("constant" | "constant-bernoulli") => true,
            Some("threshold" | "threshold-bernoulli") => false,
            Some(other) => return Err(Error::param(format!("unknown event_model `{other}`"))),
            None => matches!(self, EventModel::ConstantBernoulli { .. }),
        };
        *self = if constant {
            EventModel::ConstantBernoulli { p }
        } else {
            EventModel::ThresholdBernoulli {
                p_low,
                p_high,
                threshold,
                aggregator,
            }
        };
        self.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLinkParams {
    pub horizon: usize,
    pub mu0: f64,
    pub mu1: f64,
    /// Inflow `u`, vehicles per interval.
    pub inflow: f64,
    pub noise_half_width: f64,
    pub x0: f64,
    /// Add one noise draw to `x0` at t = 0.
    pub start_noise: bool,
    pub event_model: EventModel,
}

impl SingleLinkParams {
    /// Horizon 500, outflow fractions 0.3 / 0.2, inflow 100, noise U(-10, 10);
    /// events Bernoulli(0.01), or Bernoulli(0.10) once the flow reaches 109
    /// under the alternative. Starts one noise draw away from the noise-free
    /// fixed point `x0 = u`.
    pub fn defaults(hypothesis: Hypothesis) -> Self {
        let event_model = match hypothesis {
            Hypothesis::Null => EventModel::ConstantBernoulli { p: 0.01 },
            Hypothesis::Alternative => EventModel::ThresholdBernoulli {
                p_low: 0.01,
                p_high: 0.10,
                threshold: 109.0,
                aggregator: Aggregator::AnyCoordinate,
            },
        };
        Self {
            horizon: 500,
            mu0: 0.3,
            mu1: 0.2,
            inflow: 100.0,
            noise_half_width: 10.0,
            x0: 100.0,
            start_noise: true,
            event_model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_common(
            self.horizon,
            self.mu0,
            self.mu1,
            self.inflow,
            self.noise_half_width,
        )?;
        if !self.x0.is_finite() {
            return Err(Error::param("x0 must be finite"));
        }
        self.event_model.validate()
    }

    /// Applies `horizon`, `mu0`, `mu1`, `u`, `noise_half_width`, `x0`,
    /// `start_noise` and the
    /// event-model keys. Without an explicit `x0`, a new `u` moves `x0` with it.
    pub fn apply_config(&mut self, kv: &KeyValues) -> Result<()> {
        apply_common(
            kv,
            &mut self.horizon,
            &mut self.mu0,
            &mut self.mu1,
            &mut self.inflow,
            &mut self.noise_half_width,
        )?;
        match kv.get_parsed("x0")? {
            Some(x0) => self.x0 = x0,
            None if kv.contains("u") => self.x0 = self.inflow,
            None => {}
        }
        if let Some(v) = kv.get_parsed("start_noise")? {
            self.start_noise = v;
        }
        self.event_model.apply_config(kv)?;
        self.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLinkParams {
    pub links: usize,
    pub horizon: usize,
    pub mu0: f64,
    pub mu1: f64,
    /// Total inflow `u` shared across links.
    pub inflow: f64,
    pub softmax_beta: f64,
    pub noise_half_width: f64,
    pub x0: Vec<f64>,
    /// Add one noise draw per link to `x0` at t = 0.
    pub start_noise: bool,
    pub event_model: EventModel,
}

/// Default routing sensitivity; flows sit near 100, so `beta x` is about 10.
pub const DEFAULT_SOFTMAX_BETA: f64 = 0.1;

impl MultiLinkParams {
    /// Horizon 250, outflow fractions 0.3 / 0.2, inflow `100 R`, noise
    /// U(-10, 10); events Bernoulli(0.02), or Bernoulli(0.30) once a link flow
    /// reaches 105 under the alternative. Starts at `u / R` on every link.
    pub fn defaults(links: usize, hypothesis: Hypothesis) -> Self {
        let event_model = match hypothesis {
            Hypothesis::Null => EventModel::ConstantBernoulli { p: 0.02 },
            Hypothesis::Alternative => EventModel::ThresholdBernoulli {
                p_low: 0.02,
                p_high: 0.30,
                threshold: 105.0,
                aggregator: Aggregator::AnyCoordinate,
            },
        };
        let inflow = 100.0 * links as f64;
        Self {
            links,
            horizon: 250,
            mu0: 0.3,
            mu1: 0.2,
            inflow,
            softmax_beta: DEFAULT_SOFTMAX_BETA,
            noise_half_width: 10.0,
            x0: vec![100.0; links],
            start_noise: true,
            event_model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_common(
            self.horizon,
            self.mu0,
            self.mu1,
            self.inflow,
            self.noise_half_width,
        )?;
        if self.links < 2 {
            return Err(Error::param(format!(
                "need at least 2 links, got {}",
                self.links
            )));
        }
        if !(self.softmax_beta > 0.0 && self.softmax_beta.is_finite()) {
            return Err(Error::param("softmax_beta must be positive"));
        }
        if self.x0.len() != self.links {
            return Err(Error::param(format!(
                "x0 has {} entries for {} links",
                self.x0.len(),
                self.links
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("x0 must be finite"));
        }
        self.event_model.validate()
    }

    /// As for the single link, plus `links` and `softmax_beta`. A new link
    /// count without an explicit `u` rescales the inflow to `100 R`; without an
    /// explicit `x0` the start is reset to `u / R`.
    pub fn apply_config(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(links) = kv.get_parsed::<usize>("links")? {
            if links != self.links && !kv.contains("u") {
                self.inflow = 100.0 * links as f64;
            }
            self.links = links;
        }
        apply_common(
            kv,
            &mut self.horizon,
            &mut self.mu0,
            &mut self.mu1,
            &mut self.inflow,
            &mut self.noise_half_width,
        )?;
        if let Some(beta) = kv.get_parsed("softmax_beta")? {
            self.softmax_beta = beta;
        }
        match kv.get_list::<f64>("x0")? {
            Some(x0) if x0.len() == 1 => self.x0 = vec![x0[0]; self.links],
            Some(x0) => self.x0 = x0,
            None => self.x0 = vec![self.inflow / self.links as f64; self.links],
        }
        if let Some(v) = kv.get_parsed("start_noise")? {
            self.start_noise = v;
        }
        self.event_model.apply_config(kv)?;
        self.validate()
    }
}

fn validate_common(horizon: usize, mu0: f64, mu1: f64, inflow: f64, noise: f64) -> Result<()> {
    if horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    for (name, mu) in [("mu0", mu0), ("mu1", mu1)] {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::param(format!("{name} must lie in (0, 1), got {mu}")));
        }
    }
    if !inflow.is_finite() {
        return Err(Error::param("inflow must be finite"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::param(
            "noise_half_width must be finite and non-negative",
        ));
    }
    Ok(())
}

fn apply_common(
    kv: &KeyValues,
    horizon: &mut usize,
    mu0: &mut f64,
    mu1: &mut f64,
    inflow: &mut f64,
    noise: &mut f64,
) -> Result<()> {
    if let Some(v) = kv.get_parsed("horizon")? {
        *horizon = v;
    }
    if let Some(v) = kv.get_parsed("mu0")? {
        *mu0 = v;
    }
    if let Some(v) = kv.get_parsed("mu1")? {
        *mu1 = v;
    }
    if let Some(v) = kv.get_parsed("u")? {
        *inflow = v;
    }
    if let Some(v) = kv.get_parsed("noise_half_width")? {
        *noise = v;
    }
    Ok(())
}

pub(crate) fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[inline]
fn noise(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.gen_range(-half_width..half_width)
    } else {
        0.0
    }
}

/// Trajectory `index` of the single-link dataset generated from `seed`.
pub fn single_link_trajectory(params: &SingleLinkParams, seed: u64, index: usize) -> Trajectory {
    let mut rng = stream(seed, index);
    let h = params.horizon;
    let mut states = Vec::with_capacity(h + 1);
    let mut events = Vec::with_capacity(h);
    let mut x = params.x0;
    if params.start_noise {
        x += noise(&mut rng, params.noise_half_width);
    }
    let mut current = false;
    states.push(x);
    for _ in 0..h {
        let next = rng.gen_bool(params.event_model.probability(&[x]));
        let mu = if current { params.mu1 } else { params.mu0 };
        x = (1.0 - mu) * x + mu * params.inflow + noise(&mut rng, params.noise_half_width);
        states.push(x);
        events.push(next);
        current = next;
    }
    Trajectory::new(index.to_string(), 1, states, events)
        .expect("validated parameters give finite states")
}

pub fn simulate_single_link(
    params: &SingleLinkParams,
    n: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::param("N must be at least 1"));
    }
    TrajectoryDataset::new(
        1,
        par::map_range(n, |i| single_link_trajectory(params, seed, i)),
    )
}

/// Trajectory `index` of the parallel-link dataset generated from `seed`.
pub fn multi_link_trajectory(
    params: &MultiLinkParams,
    seed: u64,
    index: usize,
) -> Result<Trajectory> {
    let mut rng = stream(seed, index);
    let r = params.links;
    let h = params.horizon;
    let mut states = Vec::with_capacity((h + 1) * r);
    let mut events = Vec::with_capacity(h);
    let mut x = params.x0.clone();
    if params.start_noise {
        x.iter_mut()
            .for_each(|xi| *xi += noise(&mut rng, params.noise_half_width));
    }
    let mut share = vec![0.0; r];
    let mut current = false;
    states.extend_from_slice(&x);
    for _ in 0..h {
        let next = rng.gen_bool(params.event_model.probability(&x));
        let mu = if current { params.mu1 } else { params.mu0 };
        softmax_shares(&x, params.softmax_beta, &mut share);
        for (xi, s) in x.iter_mut().zip(&share) {
            *xi = (1.0 - mu) * *xi
                + mu * s * params.inflow
                + noise(&mut rng, params.noise_half_width);
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *bad,
                context: format!("multi-link trajectory {index}"),
            });
        }
        states.extend_from_slice(&x);
        events.push(next);
        current = next;
    }
    Trajectory::new(index.to_string(), r, states, events)
}

pub fn simulate_multi_link(
    params: &MultiLinkParams,
    n: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::param("N must be at least 1"));
    }
    let trajectories = par::map_range(n, |i| multi_link_trajectory(params, seed, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(params.links, trajectories)
}

/// `exp(-beta x_i) / Σ_j exp(-beta x_j)`, shifted by the smallest flow so
/// the largest exponent is zero.
fn softmax_shares(x: &[f64], beta: f64, out: &mut [f64]) {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = (-beta * (xi - min)).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}
