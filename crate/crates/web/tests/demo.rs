use minfo::estimator::Objective;
use minfo_web::{curve, sample_complexity_js, Trainer};

#[test]
fn curve_tracks_the_analytic_value() {
    let points = curve(1, 1500, 3, 5, 7).unwrap();
    assert_eq!(points.len(), 5);
    assert!((points[0][0] + 0.95).abs() < 1e-12 && (points[4][0] - 0.95).abs() < 1e-12);
    for [rho, truth, ksg] in points {
        assert!((truth + 0.5 * (1.0 - rho * rho).ln()).abs() < 1e-12);
        assert!((ksg - truth).abs() < 0.15, "rho {rho}: {ksg} vs {truth}");
    }
    assert_eq!(curve(1, 300, 3, 4, 1).unwrap(), curve(1, 300, 3, 4, 1).unwrap());
    assert!(curve(1, 300, 3, 1, 1).is_err());
}

#[test]
fn complexity_matches_reference() {
    assert_eq!(sample_complexity_js(1.0, 1.0, 1.0, 1.0, 0.1, 0.05).unwrap(), 2153.0);
    assert_eq!(sample_complexity_js(2.0, 1.0, 1.0, 1.0, 0.1, 0.1).unwrap(), 3568.0);
}

#[test]
fn trainer_advances_in_bursts_and_stops_at_budget() {
    let mut t = Trainer::create(1, 0.8, Objective::DonskerVaradhan, 32, 64, 600, 3).unwrap();
    assert!(t.estimate().is_nan());
    let mut total = 0;
    while !t.finished() {
        total += t.advance(100).unwrap();
    }
    assert_eq!(total, 600);
    assert_eq!(t.steps_done(), 600);
    assert_eq!(t.advance(10).unwrap(), 0);
    assert_eq!(t.evaluations().len(), 2 * 600 / 25);
    assert!((t.estimate() - t.truth()).abs() < 0.25, "{} vs {}", t.estimate(), t.truth());
}

#[test]
fn trainer_rejects_invalid_settings() {
    assert!(Trainer::create(1, 1.0, Objective::DonskerVaradhan, 8, 16, 10, 0).is_err());
    assert!(Trainer::create(1, 0.5, Objective::FDivergence, 8, 0, 10, 0).is_err());
}
