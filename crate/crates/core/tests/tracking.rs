use proptest::prelude::*;
use signsteer::fixtures;
use signsteer::solver::SolverConfig;
use signsteer::tracker::{track_during_solve, CurveTrace, PhaseEnd, TrackConfig};
use signsteer::{Grid, Nonlinearity};

fn cfg(dt: f64) -> TrackConfig {
    TrackConfig {
        solver: SolverConfig::with_dt_max(dt),
        ..TrackConfig::default()
    }
}

fn two_mode_error(n: usize) -> f64 {
    let g = Grid::new(n).unwrap();
    let out = track_during_solve(
        &fixtures::two_mode(g),
        0.0,
        fixtures::two_mode_window(),
        &Nonlinearity::Zero,
        None,
        &[true],
        &cfg(1e-5),
    )
    .unwrap();
    out.trace
        .times
        .iter()
        .zip(&out.trace.positions)
        .map(|(&t, p)| (p[0] - fixtures::two_mode_zero(t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn curve_error_shrinks_under_refinement() {
    let errs: Vec<f64> = [100, 200, 400].into_iter().map(two_mode_error).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] <= 1e-3);
}

#[test]
fn trace_survives_a_csv_round_trip() {
    let g = Grid::new(200).unwrap();
    let out = track_during_solve(
        &fixtures::sin_k(g, 3),
        0.0,
        0.01,
        &Nonlinearity::Zero,
        None,
        &[true, true],
        &cfg(1e-4),
    )
    .unwrap();
    assert_eq!(out.trace.n_curves(), 2);
    assert_eq!(
        CurveTrace::from_csv(&out.trace.to_csv()).unwrap(),
        out.trace
    );
    // Sampled sin(3πx) is a discrete eigenvector: its zeros never move.
    let start = out.trace.positions[0].clone();
    assert!((start[0] - 1.0 / 3.0).abs() < 1e-4 && (start[1] - 2.0 / 3.0).abs() < 1e-4);
    for p in &out.trace.positions {
        assert!((p[0] - start[0]).abs() < 1e-9 && (p[1] - start[1]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stopping_events_land_on_random_targets(target in 0.68..0.85_f64) {
        let g = Grid::new(400).unwrap();
        let out = track_during_solve(
            &fixtures::two_mode(g),
            0.0,
            0.05,
            &Nonlinearity::Zero,
            Some(&[target]),
            &[true],
            &cfg(1e-5),
        )
        .unwrap();
        let PhaseEnd::Event(e) = out.end else {
            return Err(TestCaseError::fail(format!("no event: {:?}", out.end)));
        };
        prop_assert!((out.trace.last_positions()[0] - target).abs() <= 1e-4);
        prop_assert!((e.time - fixtures::two_mode_hitting_time(target)).abs() <= 5e-5);
    }
}
