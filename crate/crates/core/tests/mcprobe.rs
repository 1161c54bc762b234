use sigldp::mcprobe::{
    estimate_naive, estimate_tilted, slope_vs_rate_report, ProbeConfig, TiltSchedule, TolerancePolicy, Verdict,
};
use sigldp::processes::{ModelKind, StepLawModel};
use sigldp::rate::{contraction_rate, rate_lower_envelope, CramerTransform, RateProblem};
use sigldp::LevelTensor;

// Exact binomial probabilities P(|S_n/n^ν − y| ≤ δ) for Rademacher steps.
const RADEMACHER_LEVEL1: [(usize, f64); 3] = [(50, 4.2300400489e-4), (100, 2.338253642e-6), (200, 7.640240215e-11)];
const RADEMACHER_LEVEL2_N50: f64 = 9.362187009998e-4;

fn rademacher() -> StepLawModel {
    StepLawModel::new(ModelKind::IidRademacher, 1, false).unwrap()
}

fn config(level: usize, y: f64, delta: f64, n_list: Vec<usize>, trials: usize) -> ProbeConfig {
    ProbeConfig {
        level,
        horizon: 1.0,
        y: LevelTensor::from_vec(1, level, vec![y]).unwrap(),
        delta,
        n_list,
        trials,
        seed: 2024,
        batches: 64,
    }
}

fn center_tilt(level: usize, y: f64) -> TiltSchedule {
    let model = rademacher();
    let ct = CramerTransform::new(model.clone()).unwrap();
    let problem = RateProblem::endpoint(model, level, 1.0, LevelTensor::from_vec(1, level, vec![y]).unwrap(), 16, 5);
    let sol = contraction_rate(&problem).unwrap();
    TiltSchedule::from_solution(&ct, &sol, 1.0, 1e-3).unwrap()
}

#[test]
fn tilted_level_one_matches_binomial() {
    let tilt = center_tilt(1, 0.5);
    let cfg = config(1, 0.5, 0.05, RADEMACHER_LEVEL1.iter().map(|r| r.0).collect(), 20_000);
    let est = estimate_tilted(&rademacher(), &cfg, &tilt).unwrap();
    for (row, (n, p)) in est.rows.iter().zip(RADEMACHER_LEVEL1) {
        assert_eq!(row.n, n);
        assert!(row.resolved);
        let z = (row.p_hat - p).abs() / row.std_error;
        assert!(z < 3.0, "n={n}: p̂={} exact={p} se={}", row.p_hat, row.std_error);
        assert!((row.p_hat / p - 1.0).abs() < 0.1, "n={n}: p̂={} exact={p}", row.p_hat);
    }
}

#[test]
fn level_two_mixture_matches_binomial() {
    let tilt = center_tilt(2, 0.2);
    assert_eq!(tilt.components.len(), 2, "two symmetric minimisers expected");
    let cfg = config(2, 0.2, 0.1, vec![50], 40_000);
    let est = estimate_tilted(&rademacher(), &cfg, &tilt).unwrap();
    let row = &est.rows[0];
    let z = (row.p_hat - RADEMACHER_LEVEL2_N50).abs() / row.std_error;
    assert!(z < 4.0, "p̂={} se={}", row.p_hat, row.std_error);
    assert!(row.std_error / row.p_hat < 0.05);
}

#[test]
fn naive_level_two_matches_binomial() {
    let cfg = config(2, 0.2, 0.1, vec![50], 200_000);
    let est = estimate_naive(&rademacher(), &cfg).unwrap();
    let row = &est.rows[0];
    let z = (row.p_hat - RADEMACHER_LEVEL2_N50).abs() / row.std_error;
    assert!(z < 4.0, "p̂={} se={}", row.p_hat, row.std_error);
}

#[test]
fn report_brackets_slope_and_rejects_scaled_rate() {
    let model = rademacher();
    let y = LevelTensor::from_vec(1, 1, vec![0.5]).unwrap();
    let problem = RateProblem::endpoint(model.clone(), 1, 1.0, y, 16, 5);
    let center = contraction_rate(&problem).unwrap();
    let envelope = rate_lower_envelope(&problem, 0.05).unwrap();
    let ct = CramerTransform::new(model.clone()).unwrap();
    let tilt = TiltSchedule::from_solution(&ct, &center, 1.0, 1e-3).unwrap();
    let cfg = config(1, 0.5, 0.05, vec![100, 200, 400, 800], 20_000);
    let est = estimate_tilted(&model, &cfg, &tilt).unwrap();
    let report = slope_vs_rate_report(&est, &envelope, &center, TolerancePolicy::default());
    assert_eq!(report.verdict, Verdict::Consistent, "{report:?}");

    let mut wrong_env = envelope.clone();
    let mut wrong_center = center.clone();
    wrong_env.value *= 3.0;
    wrong_center.value *= 3.0;
    let bad = slope_vs_rate_report(&est, &wrong_env, &wrong_center, TolerancePolicy::default());
    assert_eq!(bad.verdict, Verdict::Inconsistent);
}

#[test]
fn unconverged_solution_gives_no_tilt() {
    let model = rademacher();
    let ct = CramerTransform::new(model.clone()).unwrap();
    let y = LevelTensor::from_vec(1, 1, vec![0.5]).unwrap();
    let mut sol = contraction_rate(&RateProblem::endpoint(model, 1, 1.0, y, 8, 1)).unwrap();
    sol.converged = false;
    assert!(TiltSchedule::from_solution(&ct, &sol, 1.0, 1e-3).is_err());
}
