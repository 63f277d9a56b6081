mod common;

use common::*;
use rarecause_core::{
    estimate_b1_at, estimate_b2_at, estimate_beta_t, estimate_gammas, sup_gap, StateVector,
};
use rayon::prelude::*;

const TOL: f64 = 1e-12;

#[test]
fn matches_double_loop_on_random_datasets() {
    let results: Vec<(u64, Option<Result<f64, String>>)> = (0..100u64)
        .into_par_iter()
        .map(|case| {
            let ds = random_dataset(case);
            if ds.event_bearing_count() == 0 {
                return (case, None);
            }
            let err = max_oracle_error(&ds).and_then(|e| {
                let gap = sup_gap(&ds).map_err(|e| e.to_string())?.value;
                Ok(e.max((gap - naive_sup_gap(&ds)).abs()))
            });
            (case, Some(err))
        })
        .collect();
    let mut checked = 0;
    for (case, r) in results {
        if let Some(r) = r {
            checked += 1;
            let err = r.unwrap_or_else(|e| panic!("case {case}: {e}"));
            assert!(err <= TOL, "case {case}: error {err}");
        }
    }
    assert!(checked >= 95, "only {checked} datasets had events");
}

#[test]
fn beta_and_gamma_match_double_loop() {
    for case in 0..20 {
        let ds = random_dataset(case);
        let grid = naive_grid(&ds);
        let h = ds.max_horizon();
        let gammas = estimate_gammas(&ds);
        for t in 1..=h {
            assert!(
                (gammas.gamma(t) - naive_gamma(&ds, t)).abs() <= TOL,
                "case {case} t {t}"
            );
        }
        for t in [1, h.div_ceil(2), h] {
            let beta = estimate_beta_t(&ds, t).unwrap();
            for (k, x) in grid.iter().enumerate() {
                assert!(
                    (beta.values()[k] - naive_beta(&ds, t, x)).abs() <= TOL,
                    "case {case} t {t}"
                );
            }
        }
    }
}

// For scalar states the sup over the observed states equals the sup over
// any finer set of points.
#[test]
fn finer_grid_does_not_raise_scalar_sup() {
    for case in 0..100 {
        let ds = random_dataset(case);
        if ds.dim() != 1 || ds.event_bearing_count() == 0 {
            continue;
        }
        let grid = naive_grid(&ds);
        let mut fine: Vec<f64> = grid.iter().map(|x| x[0]).collect();
        let mids: Vec<f64> = fine.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        fine.extend(mids);
        fine.push(grid[0][0] - 1.0);
        fine.push(grid[grid.len() - 1][0] + 1.0);
        let queries: Vec<StateVector> = fine
            .iter()
            .map(|&v| StateVector::scalar(v).unwrap())
            .collect();
        let a = estimate_b1_at(&ds, &queries).unwrap();
        let b = estimate_b2_at(&ds, &queries).unwrap();
        let fine_sup = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let gap = sup_gap(&ds).unwrap().value;
        assert!(
            (fine_sup - gap).abs() <= TOL,
            "case {case}: {fine_sup} vs {gap}"
        );
    }
}
