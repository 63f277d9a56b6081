//! Testing whether a dynamical system's state drives the first occurrence of
//! a rare event, from many independent trajectories.
//!
//! The test compares the empirical law of the state just before the first
//! event with a reorganized mixture built from hazard estimates; the two
//! agree when events ignore the state.

pub mod config;
mod dominance;
mod engine;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod hypothesis;
pub mod ingest;
pub mod model;
mod par;
pub mod simulate;

pub use error::{Error, Result};
pub use estimators::{
    estimate_b1, estimate_b1_at, estimate_b2, estimate_b2_at, estimate_beta_t, estimate_cdf_pair,
    estimate_gammas, sup_gap, CdfPair, EmpiricalCdf, HazardSequence, TestStatistic,
};
pub use hypothesis::{
    baseline_cdfs_at, baseline_sup_gap, dkw_threshold, monte_carlo_null_threshold, run_test,
    BaselineReport, Decision, NullCalibration, TestReport, ThresholdMethod,
};
pub use model::{
    componentwise_leq, evaluation_grid, first_event_time, pre_event_state, FirstEventTime,
    StateVector, Trajectory, TrajectoryDataset,
};
