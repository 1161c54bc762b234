use rand::Rng;
use sigldp::processes::{ModelKind, StepLawModel};
use sigldp::rate::{contraction_rate, profile_path, rate_lower_envelope, zero_cost_target, CramerTransform, RateProblem};
use sigldp::rng;
use sigldp::signature::phi_map_exact;
use sigldp::LevelTensor;

fn models() -> Vec<StepLawModel> {
    vec![
        StepLawModel::new(ModelKind::IidRademacher, 1, false).unwrap(),
        StepLawModel::new(ModelKind::IidUniform { low: -1.0, high: 1.0 }, 1, false).unwrap(),
        StepLawModel::new(
            ModelKind::IidDiscrete {
                points: vec![vec![-1.0], vec![0.2], vec![1.0]],
                probs: vec![0.3, 0.5, 0.2],
            },
            1,
            false,
        )
        .unwrap(),
    ]
}

#[test]
fn level_one_matches_cramer_on_random_endpoints() {
    let mut r = rng::stream(77);
    let ms = models();
    for i in 0..10 {
        let model = ms[i % ms.len()].clone();
        let ct = CramerTransform::new(model.clone()).unwrap();
        let horizon = r.gen_range(0.5..2.0);
        let y = r.gen_range(-0.9..0.9) * horizon;
        let problem = RateProblem::endpoint(model, 1, horizon, LevelTensor::vector(&[y]), 8, i as u64);
        let sol = contraction_rate(&problem).unwrap();
        let exact = horizon * ct.value(&[y / horizon]).unwrap();
        assert!(sol.converged);
        assert!((sol.value - exact).abs() <= 1e-4 * exact.max(1e-12), "{i}: {} vs {exact}", sol.value);
        for v in &sol.profile {
            assert!((v[0] - y / horizon).abs() <= 1e-3, "{i}: profile {:?}", sol.profile);
        }
    }
}

#[test]
fn zero_cost_target_has_zero_rate() {
    for (model, level) in models().into_iter().zip([1, 2, 3]) {
        let q = model.mean_vector().q;
        let y = zero_cost_target(&q, level, 1.3);
        let sol = contraction_rate(&RateProblem::endpoint(model, level, 1.3, y, 8, 1)).unwrap();
        assert!(sol.value <= 1e-8, "level {level}: {}", sol.value);
    }
}

#[test]
fn beats_random_search_baseline() {
    // d = 1: the top level is x^ν/ν! of the endpoint x, so any profile can be
    // rescaled onto the constraint surface.
    let model = StepLawModel::new(ModelKind::IidUniform { low: -1.0, high: 1.0 }, 1, false).unwrap();
    let ct = CramerTransform::new(model.clone()).unwrap();
    let (level, m, horizon, y) = (3usize, 4usize, 1.0, 0.05);
    let x_target = (6.0 * y as f64).cbrt();
    let dt = horizon / m as f64;
    let mut r = rng::stream(5);
    let mut best = f64::INFINITY;
    for _ in 0..100_000 {
        let v: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x: f64 = v.iter().sum::<f64>() * dt;
        let c = x_target / x;
        if !(c > 0.0) || v.iter().any(|s| (s * c).abs() > 0.999) {
            continue;
        }
        let cost: f64 = v.iter().map(|s| ct.value(&[s * c]).unwrap() * dt).sum();
        best = best.min(cost);
    }
    let sol = contraction_rate(&RateProblem::endpoint(model, level, horizon, LevelTensor::from_vec(1, 3, vec![y]).unwrap(), m, 2)).unwrap();
    assert!(best.is_finite());
    assert!(sol.value <= best + 1e-9, "{} > {best}", sol.value);
}

fn loop_target() -> LevelTensor {
    let path = profile_path(&[vec![0.6, 0.0], vec![0.0, 0.6]], 1.0).unwrap();
    phi_map_exact(&path, 2).unwrap().pop().unwrap().top().clone()
}

#[test]
fn finer_grids_never_cost_more() {
    let model = StepLawModel::new(ModelKind::IidRademacher, 2, false).unwrap();
    let y = loop_target();
    let values: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&m| {
            let sol = contraction_rate(&RateProblem::endpoint(model.clone(), 2, 1.0, y.clone(), m, 3)).unwrap();
            assert!(sol.converged, "m={m}");
            sol.value
        })
        .collect();
    assert!(values[1] <= values[0] + 1e-7 && values[2] <= values[1] + 1e-7, "{values:?}");
    assert!(values[2] < values[0], "{values:?}");
}

#[test]
fn envelope_is_monotone_and_below_centre() {
    let mut r = rng::stream(9);
    for (i, model) in models().into_iter().enumerate() {
        let level = 1 + i % 2;
        let bound = 1.0 / (1..=level).product::<usize>() as f64;
        let y = LevelTensor::vector(&[r.gen_range(0.4..0.8) * bound]);
        let y = LevelTensor::from_vec(1, level, y.into_data()).unwrap();
        let problem = RateProblem::endpoint(model, level, 1.0, y, 8, i as u64);
        let centre = contraction_rate(&problem).unwrap().value;
        let mut prev = centre;
        for delta in [0.01, 0.03, 0.1] {
            let v = rate_lower_envelope(&problem, delta).unwrap().value;
            assert!(v <= prev + 1e-8, "instance {i} delta {delta}: {v} > {prev}");
            prev = v;
        }
    }
}
