//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use sigldp::diagnostics::{holder_suite, lln_suite, random_h_path, regularity_suite};
use sigldp::mcprobe::{
    estimate_naive, estimate_tilted, slope_vs_rate_report, ProbeConfig, TiltSchedule, TolerancePolicy, Verdict,
};
use sigldp::path::PerturbMode;
use sigldp::processes::{ModelKind, StepLawModel, TrigPoly};
use sigldp::rate::{contraction_rate, rate_lower_envelope, zero_cost_target, CramerTransform, RateProblem};
use sigldp::rng;
use sigldp::signature::{iterated_sum_direct, iterated_sum_stream, phi_map_exact, phi_map_quadrature};
use sigldp::LevelTensor;

struct Verdicts {
    failed: usize,
}

impl Verdicts {
    fn record(&mut self, id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Result<String, String>) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s limit", limit.as_secs())),
            Err(d) => (false, d),
        };
        if !ok {
            self.failed += 1;
        }
        println!(
            "criterion {id} [{name}]: {} ({detail}; {:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn trig(constant: f64, c: f64, s: f64) -> TrigPoly {
    TrigPoly {
        constant,
        cos: vec![c],
        sin: vec![s],
    }
}

fn random_model(dim: usize, r: &mut impl Rng) -> StepLawModel {
    let kind = match r.gen_range(0..6) {
        0 => ModelKind::IidRademacher,
        1 => ModelKind::IidUniform { low: -1.0, high: 0.7 },
        2 => ModelKind::IidDiscrete {
            points: (0..3).map(|_| (0..dim).map(|_| r.gen_range(-0.5..=0.5)).collect()).collect(),
            probs: vec![0.2, 0.5, 0.3],
        },
        3 => ModelKind::Markov {
            transition: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            observations: (0..2).map(|_| (0..dim).map(|_| r.gen_range(-0.5..=0.5)).collect()).collect(),
        },
        4 => ModelKind::Rotation {
            alpha: 0.5 * (5f64.sqrt() - 1.0),
            observable: (0..dim).map(|c| trig(0.1 * c as f64, 0.5, 0.3)).collect(),
        },
        _ => ModelKind::Doubling {
            observable: (0..dim).map(|c| trig(0.0, 0.6, 0.2 * c as f64)).collect(),
        },
    };
    StepLawModel::new(kind, dim, r.gen_bool(0.5)).expect("valid model")
}

fn enumeration_vs_recursion() -> Result<String, String> {
    let mut r = rng::stream(1001);
    let mut worst = 0.0_f64;
    for i in 0..200 {
        let dim = r.gen_range(1..=3);
        let depth = r.gen_range(1..=4);
        let n = r.gen_range(1..=12);
        let t = r.gen_range(0.05..=1.0) * 12.0 / n as f64;
        let len = (t * n as f64).ceil() as usize;
        let model = random_model(dim, &mut r);
        let seq = model.sample_sequence(len.max(1), 7 + i).map_err(|e| e.to_string())?;
        let direct = iterated_sum_direct(&seq, depth, n, t, false).map_err(|e| e.to_string())?;
        let stream = iterated_sum_stream(&seq, depth, n, &[t]).map_err(|e| e.to_string())?;
        worst = worst.max(direct.sup_distance(&stream[0]).map_err(|e| e.to_string())?);
    }
    check(worst <= 1e-10, || format!("max difference {worst:.3e} > 1e-10"))?;
    Ok(format!("200 instances, max difference {worst:.3e}"))
}

fn quadrature_convergence() -> Result<String, String> {
    let mut r = rng::stream(2002);
    let hs = [1e-2, 1e-3, 1e-4];
    let (mut lo, mut hi, mut worst_err) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64);
    for _ in 0..50 {
        let dim = r.gen_range(1..=3);
        let depth = r.gen_range(2..=4);
        let horizon = r.gen_range(0.5..2.0);
        let segments = r.gen_range(2..=6);
        let path = random_h_path(dim, horizon, segments, 1.0, &mut r).map_err(|e| e.to_string())?;
        let exact = phi_map_exact(&path, depth).map_err(|e| e.to_string())?.pop().unwrap();
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let q = phi_map_quadrature(&path, depth, h).unwrap().pop().unwrap();
                q.sup_distance(&exact).unwrap()
            })
            .collect();
        let order = (errs[0] / errs[2]).log10() / (hs[0] / hs[2]).log10();
        lo = lo.min(order);
        hi = hi.max(order);
        worst_err = worst_err.max(errs[2]);
    }
    check((0.8..=1.2).contains(&lo) && (0.8..=1.2).contains(&hi), || {
        format!("fitted orders span [{lo:.3}, {hi:.3}], outside [0.8, 1.2]")
    })?;
    check(worst_err <= 1e-3, || format!("error {worst_err:.3e} at h = 1e-4"))?;
    Ok(format!("50 paths, orders in [{lo:.3}, {hi:.3}], max error at h=1e-4 {worst_err:.3e}"))
}

fn law_of_large_numbers() -> Result<String, String> {
    let mut worst_const = 0.0_f64;
    for (q, level) in [(vec![0.3], 2), (vec![-0.5, 0.25], 3), (vec![1.0, -1.0, 0.1], 4)] {
        let dim = q.len();
        let model = StepLawModel::new(
            ModelKind::IidDiscrete {
                points: vec![q],
                probs: vec![1.0],
            },
            dim,
            false,
        )
        .map_err(|e| e.to_string())?;
        let rep = lln_suite(&model, level, 1.0, &[10, 100, 1000], 2, 3).map_err(|e| e.to_string())?;
        worst_const = rep.rows.iter().map(|r| r.sup_error).fold(worst_const, f64::max);
    }
    check(worst_const <= 1e-12, || format!("constant sequences off by {worst_const:.3e}"))?;
    let model = StepLawModel::new(ModelKind::IidUniform { low: -0.4, high: 1.0 }, 1, false).map_err(|e| e.to_string())?;
    let rep = lln_suite(&model, 2, 1.0, &[100, 1000, 10_000], 64, 31).map_err(|e| e.to_string())?;
    let medians: Vec<String> = rep.sizes.iter().map(|s| format!("{:.3e}", s.median_error)).collect();
    check(rep.medians_non_increasing(), || format!("medians {medians:?} increase"))?;
    let beta = rep.decay_exponent.ok_or("no decay fit")?;
    check((0.35..=0.65).contains(&beta), || format!("decay exponent {beta:.3} outside [0.35, 0.65]"))?;
    Ok(format!(
        "constant error {worst_const:.1e}; medians {} with exponent {beta:.3}",
        medians.join(" > ")
    ))
}

fn regularity() -> Result<String, String> {
    let (mut level_slack, mut lip_slack, mut gap, mut paths) = (f64::INFINITY, f64::INFINITY, 0.0_f64, 0);
    for level in 1..=4 {
        let rep = regularity_suite(level, 3, 1.0, 250, 4000 + level as u64).map_err(|e| e.to_string())?;
        check(rep.passed(), || {
            format!(
                "level {level}: {} level and {} Lipschitz violations",
                rep.level_violations, rep.lipschitz_violations
            )
        })?;
        level_slack = level_slack.min(rep.worst_level_slack);
        lip_slack = lip_slack.min(rep.worst_lipschitz_slack);
        gap = gap.max(rep.extremal_gap);
        paths += rep.trials;
    }
    check(gap <= 1e-12, || format!("extremal path misses the level bound by {gap:.3e}"))?;
    Ok(format!(
        "{paths} paths, worst slacks {level_slack:.3e} (level) {lip_slack:.3e} (Lipschitz), extremal gap {gap:.1e}"
    ))
}

fn holder() -> Result<String, String> {
    let rep = holder_suite(2, 2, 1.0, &[1e-2, 1e-3, 1e-4], 32, PerturbMode::Adversarial, 5005).map_err(|e| e.to_string())?;
    let e = rep.exponent.ok_or("no exponent fit")?;
    let medians: Vec<String> = rep.decades.iter().map(|d| format!("{:.3e}", d.median_ratio)).collect();
    check(e >= 0.45, || format!("exponent {e:.3} < 0.45"))?;
    check(rep.median_ratio_non_increasing(), || format!("median ratios {medians:?} increase"))?;
    Ok(format!("exponent {e:.3}, median D/sqrt(s) {}", medians.join(" > ")))
}

fn rate_oracle() -> Result<String, String> {
    let mut r = rng::stream(6006);
    let models = [
        ModelKind::IidRademacher,
        ModelKind::IidUniform { low: -1.0, high: 1.0 },
        ModelKind::IidDiscrete {
            points: vec![vec![-1.0], vec![0.4], vec![1.0]],
            probs: vec![0.25, 0.5, 0.25],
        },
    ];
    let (mut worst_rel, mut worst_flat) = (0.0_f64, 0.0_f64);
    for i in 0..10 {
        let model = StepLawModel::new(models[i % 3].clone(), 1, false).map_err(|e| e.to_string())?;
        let ct = CramerTransform::new(model.clone()).map_err(|e| e.to_string())?;
        let horizon = r.gen_range(0.5..2.0);
        let y = r.gen_range(-0.9..=0.9) * horizon;
        let sol = contraction_rate(&RateProblem::endpoint(model, 1, horizon, LevelTensor::vector(&[y]), 16, i as u64))
            .map_err(|e| e.to_string())?;
        let exact = horizon * ct.value(&[y / horizon]).map_err(|e| e.to_string())?;
        check(sol.converged, || format!("instance {i} did not converge"))?;
        worst_rel = worst_rel.max((sol.value - exact).abs() / exact.max(1e-300));
        worst_flat = sol.profile.iter().fold(worst_flat, |m, v| m.max((v[0] - y / horizon).abs()));
    }
    check(worst_rel <= 1e-4, || format!("relative error {worst_rel:.3e} > 1e-4"))?;
    check(worst_flat <= 1e-3, || format!("profile deviates {worst_flat:.3e} from constant"))?;
    let model = StepLawModel::new(ModelKind::IidUniform { low: -0.4, high: 1.0 }, 1, false).map_err(|e| e.to_string())?;
    let y = zero_cost_target(&model.mean_vector().q, 2, 1.0);
    let zero = contraction_rate(&RateProblem::endpoint(model, 2, 1.0, y, 16, 1)).map_err(|e| e.to_string())?;
    check(zero.value <= 1e-8, || format!("zero-cost target gives {:.3e}", zero.value))?;
    Ok(format!(
        "10 endpoints, max rel error {worst_rel:.2e}, max profile deviation {worst_flat:.2e}, zero-cost {:.1e}",
        zero.value
    ))
}

// P(|S_n/n − 0.5| ≤ 0.05) and P(|(S_n² − n)/(2n²) − 0.2| ≤ 0.1) for
// Rademacher steps, as exact binomial sums.
const LEVEL1_ORACLE: [(usize, f64); 3] = [(50, 4.2300400489e-4), (100, 2.338253642e-6), (200, 7.640240215e-11)];
const LEVEL2_ORACLE_N50: f64 = 9.362187009998e-4;

fn end_to_end() -> Result<String, String> {
    let model = StepLawModel::new(ModelKind::IidRademacher, 1, false).map_err(|e| e.to_string())?;
    let ct = CramerTransform::new(model.clone()).map_err(|e| e.to_string())?;
    let y1 = LevelTensor::vector(&[0.5]);
    let problem = RateProblem::endpoint(model.clone(), 1, 1.0, y1.clone(), 16, 7);
    let centre = contraction_rate(&problem).map_err(|e| e.to_string())?;
    let envelope = rate_lower_envelope(&problem, 0.05).map_err(|e| e.to_string())?;
    let tilt = TiltSchedule::from_solution(&ct, &centre, 1.0, 1e-3).map_err(|e| e.to_string())?;
    let cfg = ProbeConfig {
        level: 1,
        horizon: 1.0,
        y: y1,
        delta: 0.05,
        n_list: LEVEL1_ORACLE.iter().map(|r| r.0).collect(),
        trials: 40_000,
        seed: 7007,
        batches: 64,
    };
    let est = estimate_tilted(&model, &cfg, &tilt).map_err(|e| e.to_string())?;
    let mut zs = Vec::new();
    for (row, (n, p)) in est.rows.iter().zip(LEVEL1_ORACLE) {
        let z = (row.p_hat - p) / row.std_error;
        check(row.resolved && z.abs() <= 3.0, || {
            format!("n={n}: p_hat {:.4e} vs exact {p:.4e} ({z:.2} SE)", row.p_hat)
        })?;
        zs.push(format!("{z:+.2}"));
    }
    let policy = TolerancePolicy { rel: 0.2, abs: 0.0 };
    let report = slope_vs_rate_report(&est, &envelope, &centre, policy);
    let slope = report.fitted_slope.ok_or("no slope fit")?;
    check(report.verdict == Verdict::Consistent, || {
        format!("slope {slope:.4} outside band [{:.4}, {:.4}]", report.band[0], report.band[1])
    })?;

    let y2 = LevelTensor::from_vec(1, 2, vec![0.2]).map_err(|e| e.to_string())?;
    let sol2 = contraction_rate(&RateProblem::endpoint(model.clone(), 2, 1.0, y2.clone(), 16, 8)).map_err(|e| e.to_string())?;
    let tilt2 = TiltSchedule::from_solution(&ct, &sol2, 1.0, 1e-3).map_err(|e| e.to_string())?;
    let cfg2 = ProbeConfig {
        level: 2,
        y: y2,
        delta: 0.1,
        n_list: vec![50],
        trials: 400_000,
        seed: 7008,
        ..cfg
    };
    let naive = estimate_naive(&model, &cfg2).map_err(|e| e.to_string())?.rows[0].clone();
    let tilted = estimate_tilted(&model, &ProbeConfig { trials: 40_000, ..cfg2 }, &tilt2).map_err(|e| e.to_string())?.rows[0].clone();
    let combined = naive.std_error.hypot(tilted.std_error);
    let gap = (naive.p_hat - tilted.p_hat).abs() / combined;
    check(gap <= 4.0, || {
        format!("level 2: naive {:.4e} vs tilted {:.4e} differ by {gap:.2} combined SE", naive.p_hat, tilted.p_hat)
    })?;
    Ok(format!(
        "level 1 z-scores {}, slope {slope:.4} in [{:.4}, {:.4}]; level 2 naive {:.4e} tilted {:.4e} (exact {LEVEL2_ORACLE_N50:.4e}, {gap:.2} combined SE, {} mixture components)",
        zs.join(" "),
        report.band[0],
        report.band[1],
        naive.p_hat,
        tilted.p_hat,
        tilt2.components.len()
    ))
}

fn run(dir: &Path, args: &[&str], threads: &str) -> Result<i32, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_sigldp"))
        .current_dir(dir)
        .args(args)
        .env("SIGLDP_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    o.status.code().ok_or_else(|| "killed by signal".into())
}

fn reproducibility() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let files = [
        ("model.json", r#"{"kind": "iid_uniform", "params": {"low": -1.0, "high": 1.0}, "dim": 2, "seed": 11, "len": 40}"#),
        (
            "rate.json",
            r#"{"model": {"kind": "iid_rademacher", "dim": 1}, "level": 1, "T": 1.0,
                "target": {"mode": "endpoint", "y": {"dim": 1, "level": 1, "data": [0.5]}}, "grid": 16, "seed": 12}"#,
        ),
        (
            "probe.json",
            r#"{"model": {"kind": "iid_rademacher", "dim": 1}, "level": 1, "T": 1.0,
                "y": {"dim": 1, "level": 1, "data": [0.5]}, "delta": 0.05, "n_list": [50, 100, 200],
                "trials": 8000, "seed": 13, "method": "tilted"}"#,
        ),
        ("holder.json", r#"{"level": 2, "dim": 2, "T": 1.0, "eps2_list": [0.01, 0.001], "trials": 8, "seed": 14}"#),
        (
            "lln.json",
            r#"{"model": {"kind": "iid_uniform", "params": {"low": -0.4, "high": 1.0}, "dim": 1},
                "level": 2, "T": 1.0, "n_list": [100, 1000], "reps": 8, "seed": 15}"#,
        ),
        ("regularity.json", r#"{"level": 3, "dim": 2, "T": 1.0, "trials": 50, "seed": 16}"#),
    ];
    for (name, text) in files {
        std::fs::write(dir.join(name), text).map_err(|e| e.to_string())?;
    }
    let commands: [&[&str]; 10] = [
        &["gen", "--model", "model.json", "--out", "seq.csv"],
        &["sig", "seq.csv", "--level", "3", "--method", "stream", "--out", "sig.json"],
        &["rate", "rate.json", "--out", "centre.json"],
        &["rate", "rate.json", "--delta", "0.05", "--out", "envelope.json"],
        &["probe", "probe.json", "--out", "probe_out.json"],
        &["report", "--probe", "probe_out.json", "--rate", "centre.json", "--envelope", "envelope.json", "--out", "report.json"],
        &["check", "--suite", "holder", "holder.json", "--out", "holder_out.json"],
        &["check", "--suite", "lln", "lln.json", "--out", "lln_out.json"],
        &["check", "--suite", "regularity", "regularity.json", "--out", "regularity_out.json"],
        &["sig", "seq.csv", "--level", "2", "--method", "quad", "--step", "0.001", "--out", "quad.json"],
    ];
    for args in commands {
        let c = run(dir, args, "1")?;
        check(c == 0, || format!("`{}` exited {c}", args.join(" ")))?;
    }
    let mut manifests: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    manifests.sort();
    check(manifests.len() == commands.len(), || format!("{} manifests for {} runs", manifests.len(), commands.len()))?;
    for m in &manifests {
        let c = run(dir, &["rerun", m.to_str().unwrap()], "3")?;
        check(c == 0, || format!("rerun of {} exited {c}", m.display()))?;
    }
    Ok(format!("{} manifests re-run with identical digests", manifests.len()))
}

fn main() {
    let mut v = Verdicts { failed: 0 };
    let secs = Duration::from_secs;
    v.record(1, "enumeration vs recursion", secs(10), enumeration_vs_recursion);
    v.record(2, "exact vs quadrature", secs(60), quadrature_convergence);
    v.record(3, "law of large numbers", secs(120), law_of_large_numbers);
    v.record(4, "level and time-Lipschitz bounds", secs(120), regularity);
    v.record(5, "Hölder suite", secs(120), holder);
    v.record(6, "rate solver oracle", secs(120), rate_oracle);
    v.record(7, "end-to-end decay slope", secs(300), end_to_end);
    v.record(8, "manifest reproducibility", secs(600), reproducibility);
    println!("acceptance: {} of 8 criteria passed", 8 - v.failed);
    if v.failed > 0 {
        std::process::exit(1);
    }
}
