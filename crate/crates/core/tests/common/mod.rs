//! Literal, loop-by-loop estimators used as oracles, plus dataset makers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarecause_core::simulate::{
    simulate_multi_link, simulate_single_link, Aggregator, EventModel, Hypothesis, MultiLinkParams,
    SingleLinkParams,
};
use rarecause_core::{Trajectory, TrajectoryDataset};

pub fn dominated(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a <= b)
}

pub fn first_event(traj: &Trajectory) -> Option<usize> {
    (1..=traj.horizon()).find(|&t| traj.event(t))
}

pub fn naive_b1(ds: &TrajectoryDataset, x: &[f64]) -> f64 {
    let mut hits = 0usize;
    let mut n = 0usize;
    for traj in ds.trajectories() {
        if let Some(t) = first_event(traj) {
            n += 1;
            if dominated(traj.state(t - 1), x) {
                hits += 1;
            }
        }
    }
    hits as f64 / n as f64
}

pub fn naive_beta(ds: &TrajectoryDataset, t: usize, x: &[f64]) -> f64 {
    let mut hits = 0usize;
    for traj in ds.trajectories() {
        if traj.horizon() < t {
            continue;
        }
        let quiet = first_event(traj).is_none_or(|f| f >= t);
        if quiet && dominated(traj.state(t - 1), x) {
            hits += 1;
        }
    }
    hits as f64 / ds.len() as f64
}

pub fn naive_gamma(ds: &TrajectoryDataset, t: usize) -> f64 {
    let mut at_risk = 0usize;
    let mut events = 0usize;
    for traj in ds.trajectories() {
        if traj.horizon() < t || first_event(traj).is_some_and(|f| f < t) {
            continue;
        }
        at_risk += 1;
        if traj.event(t) {
            events += 1;
        }
    }
    if at_risk == 0 {
        0.0
    } else {
        events as f64 / at_risk as f64
    }
}

/// Outer loop over `t`, inner over trajectories, as written in the algorithm.
pub fn naive_b2(ds: &TrajectoryDataset, x: &[f64]) -> f64 {
    let h = ds.max_horizon();
    (1..=h)
        .map(|t| naive_beta(ds, t, x) * naive_gamma(ds, t))
        .sum()
}

/// `naive_b2` at many points, with the hazards computed once.
pub fn naive_b2_many(ds: &TrajectoryDataset, xs: &[Vec<f64>]) -> Vec<f64> {
    let h = ds.max_horizon();
    let gammas: Vec<f64> = (1..=h).map(|t| naive_gamma(ds, t)).collect();
    let firsts: Vec<Option<usize>> = ds.trajectories().iter().map(first_event).collect();
    let n = ds.len() as f64;
    xs.iter()
        .map(|x| {
            let mut total = 0.0;
            for t in 1..=h {
                let mut hits = 0usize;
                for (traj, first) in ds.trajectories().iter().zip(&firsts) {
                    if traj.horizon() >= t
                        && first.is_none_or(|f| f >= t)
                        && dominated(traj.state(t - 1), x)
                    {
                        hits += 1;
                    }
                }
                total += hits as f64 / n * gammas[t - 1];
            }
            total
        })
        .collect()
}

/// Every state, sorted lexicographically and deduplicated.
pub fn naive_grid(ds: &TrajectoryDataset) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for traj in ds.trajectories() {
        for t in 0..=traj.horizon() {
            pts.push(traj.state(t).to_vec());
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

pub fn naive_sup_gap(ds: &TrajectoryDataset) -> f64 {
    let grid = naive_grid(ds);
    let b2 = naive_b2_many(ds, &grid);
    grid.iter()
        .zip(&b2)
        .map(|(x, v)| (naive_b1(ds, x) - v).abs())
        .fold(0.0, f64::max)
}

/// Largest deviation of the engine's b1 and b2 from the double loop over
/// the full grid, or a description of the first structural mismatch.
pub fn max_oracle_error(ds: &TrajectoryDataset) -> Result<f64, String> {
    let grid = naive_grid(ds);
    let b1 = rarecause_core::estimate_b1(ds).map_err(|e| e.to_string())?;
    let b2 = rarecause_core::estimate_b2(ds).map_err(|e| e.to_string())?;
    if b1.len() != grid.len() || b2.len() != grid.len() {
        return Err(format!("grid size {} vs {}", b2.len(), grid.len()));
    }
    let want2 = naive_b2_many(ds, &grid);
    let mut worst = 0.0f64;
    for (k, x) in grid.iter().enumerate() {
        if b2.grid()[k].coords() != x.as_slice() {
            return Err(format!(
                "grid point {k} is {:?}, expected {x:?}",
                b2.grid()[k].coords()
            ));
        }
        worst = worst
            .max((b1.values()[k] - naive_b1(ds, x)).abs())
            .max((b2.values()[k] - want2[k]).abs());
    }
    Ok(worst)
}

/// A random small dataset: simulated single- or two-link flows, sometimes
/// rounded so that ties are common, sometimes cut to unequal horizons.
pub fn random_dataset(case: u64) -> TrajectoryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACE0 + case);
    let n = rng.gen_range(2..=200);
    let horizon = rng.gen_range(1..=50);
    let p_low = rng.gen_range(0.01..0.2);
    let p_high = rng.gen_range(p_low..0.6);
    let model = if rng.gen_bool(0.3) {
        EventModel::ConstantBernoulli { p: p_low }
    } else {
        EventModel::ThresholdBernoulli {
            p_low,
            p_high,
            threshold: rng.gen_range(95.0..110.0),
            aggregator: Aggregator::AnyCoordinate,
        }
    };
    let seed = rng.gen();
    let ds = if rng.gen_bool(0.5) {
        let params = SingleLinkParams {
            horizon,
            event_model: model,
            ..SingleLinkParams::defaults(Hypothesis::Null)
        };
        simulate_single_link(&params, n, seed).unwrap()
    } else {
        let params = MultiLinkParams {
            horizon,
            event_model: model,
            ..MultiLinkParams::defaults(2, Hypothesis::Null)
        };
        simulate_multi_link(&params, n, seed).unwrap()
    };
    let round = rng.gen_bool(0.4);
    let truncate = horizon > 1 && rng.gen_bool(0.3);
    let dim = ds.dim();
    let trajs = ds
        .into_trajectories()
        .into_iter()
        .map(|t| {
            let h = if truncate {
                rng.gen_range(1..=horizon)
            } else {
                horizon
            };
            let mut states = t.states_flat()[..(h + 1) * dim].to_vec();
            if round {
                states.iter_mut().for_each(|v| *v = (*v / 4.0).round());
            }
            Trajectory::new(t.id().to_string(), dim, states, t.events()[..h].to_vec()).unwrap()
        })
        .collect();
    TrajectoryDataset::new(dim, trajs).unwrap()
}

/// The two-trajectory dataset whose estimates are worked out by hand.
pub fn hand_fixture() -> TrajectoryDataset {
    TrajectoryDataset::new(
        1,
        vec![
            Trajectory::scalar("1", &[1.0, 2.0, 2.0], &[0, 1]).unwrap(),
            Trajectory::scalar("2", &[3.0, 3.0], &[1]).unwrap(),
        ],
    )
    .unwrap()
}

/// Generator output written to disk, ingested, written as trajectories, read
/// back and tested. Returns the report lines and the day counts.
pub fn ingest_pipeline(dir: &std::path::Path) -> Vec<String> {
    use rarecause_core::ingest::*;
    use rarecause_core::{run_test, ThresholdMethod};

    let spec = FixtureSpec::default();
    let fixture = generate_fixture(&spec).unwrap();
    let det = dir.join("detectors.csv");
    let inc = dir.join("incidents.csv");
    write_detector_csv(&fixture.detectors, &det).unwrap();
    write_incident_csv(&fixture.incidents, &inc).unwrap();

    let cfg = IngestConfig::default().with_link(spec.link.clone(), spec.detector_ids());
    let daily = build_daily_trajectories(
        &read_detector_csv(&det).unwrap(),
        &read_incident_csv(&inc).unwrap(),
        &cfg,
        &spec.link,
    )
    .unwrap();
    let traj = dir.join("trajectories.csv");
    write_trajectory_csv(&daily.dataset, &traj).unwrap();
    let ds = read_trajectory_csv(&traj).unwrap();
    assert_eq!(ds, daily.dataset);

    vec![
        format!(
            "days_kept={} dropped_missing={} dropped_no_event={}",
            daily.days.len(),
            daily.dropped_missing.len(),
            daily.dropped_no_event.len()
        ),
        run_test(&ds, ThresholdMethod::DkwConservative, 0.05, 0)
            .unwrap()
            .to_key_values(),
        run_test(
            &ds,
            ThresholdMethod::MonteCarloNull { replications: 200 },
            0.05,
            7,
        )
        .unwrap()
        .to_key_values(),
    ]
}

pub fn ingest_expected_path() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ingest_expected.txt")
}
