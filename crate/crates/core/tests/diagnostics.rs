use sigldp::diagnostics::{holder_suite, lln_suite, regularity_suite};
use sigldp::path::PerturbMode;
use sigldp::processes::{ModelKind, StepLawModel};

#[test]
fn lln_uniform_mean_decays_at_clt_rate() {
    let model = StepLawModel::new(ModelKind::IidUniform { low: -0.4, high: 1.0 }, 1, false).unwrap();
    assert!((model.mean_vector().q[0] - 0.3).abs() < 1e-15);
    let rep = lln_suite(&model, 2, 1.0, &[100, 1000, 10_000], 64, 11).unwrap();
    assert!(rep.medians_non_increasing(), "{:?}", rep.sizes);
    let beta = rep.decay_exponent.unwrap();
    assert!((0.35..=0.65).contains(&beta), "exponent {beta}");
}

#[test]
fn holder_adversarial_three_decades() {
    for (level, dim) in [(2, 1), (2, 2), (3, 2)] {
        let rep = holder_suite(level, dim, 1.0, &[1e-2, 1e-3, 1e-4], 16, PerturbMode::Adversarial, 21).unwrap();
        let e = rep.exponent.unwrap();
        assert!(e >= 0.45, "level {level} dim {dim}: exponent {e}");
        assert!(rep.median_ratio_non_increasing(), "{:?}", rep.decades);
        assert!(rep.rows.iter().all(|r| r.d <= rep.max_ratio * r.s.sqrt() * (1.0 + 1e-12)));
    }
}

#[test]
fn holder_random_mode_pairs_are_certified() {
    let rep = holder_suite(2, 3, 2.0, &[1e-1, 1e-2], 8, PerturbMode::Random, 5).unwrap();
    assert!(rep.rows.iter().all(|r| r.s <= r.eps2 && r.d.is_finite()));
}

#[test]
fn regularity_thousand_paths() {
    for level in 1..=4 {
        let rep = regularity_suite(level, 3, 1.0, 1000, 100 + level as u64).unwrap();
        assert!(rep.passed(), "level {level}: {} {}", rep.worst_level_slack, rep.worst_lipschitz_slack);
        assert!(rep.extremal_gap <= 1e-12);
    }
}

#[test]
fn suites_are_deterministic() {
    let a = holder_suite(2, 2, 1.0, &[1e-2], 6, PerturbMode::Adversarial, 3).unwrap();
    let b = holder_suite(2, 2, 1.0, &[1e-2], 6, PerturbMode::Adversarial, 3).unwrap();
    assert_eq!(a, b);
}
