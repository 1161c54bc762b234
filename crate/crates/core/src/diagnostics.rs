//! Numerical property suites: Hölder continuity of the signature map, the
//! level and time-Lipschitz bounds, and the law of large numbers.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{
    merge_knots, perturb_in_h, phi_n_from_sequence, sup_distance, PerturbMode, PiecewisePath, ADVERSARIAL_SLOPE, TOL_LIP,
};
use crate::processes::StepLawModel;
use crate::rate::zero_cost_target;
use crate::rng::{self, StreamRng};
use crate::signature::phi_map_exact;

/// Allowed violation of the level and Lipschitz bounds.
pub const BOUND_SLACK: f64 = 1e-9;

/// Extra uniform subdivision of the knot union when measuring sup distances
/// at levels above one.
pub const SUP_REFINEMENT: usize = 4;

const BASE_SEGMENTS: usize = 4;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ordinary least squares of `y` on `x`: slope and its standard error.
fn ols(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = points.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>() / sxx;
    let se = if n > 2 {
        let rss: f64 = points.iter().map(|p| (p.1 - ym - slope * (p.0 - xm)).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((slope, se))
}

/// A random path in H: `segments` pieces at random cut points, slopes drawn
/// uniformly from `[−max_slope, max_slope]^d` or, with probability ¼, from
/// the corners of that box.
pub fn random_h_path(
    dim: usize,
    horizon: f64,
    segments: usize,
    max_slope: f64,
    rng: &mut StreamRng,
) -> Result<PiecewisePath> {
    let mut cuts: Vec<f64> = (0..segments.saturating_sub(1)).map(|_| rng.gen_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    let knots = merge_knots(&[&cuts], horizon);
    let slopes = (0..knots.len() - 1)
        .map(|_| {
            let corner = rng.gen_bool(0.25);
            (0..dim)
                .map(|_| {
                    if corner {
                        if rng.gen::<bool>() {
                            max_slope
                        } else {
                            -max_slope
                        }
                    } else {
                        rng.gen_range(-max_slope..=max_slope)
                    }
                })
                .collect()
        })
        .collect();
    PiecewisePath::from_knots_and_slopes(dim, knots, slopes)
}

/// `sup_t |Φ^{(ν)}(a)(t) − Φ^{(ν)}(b)(t)|_∞` over the knot union of both
/// paths, subdivided [`SUP_REFINEMENT`] times when `ν > 1`.
pub fn signature_sup_distance(a: &PiecewisePath, b: &PiecewisePath, level: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if (a.horizon() - b.horizon()).abs() > 1e-12 * a.horizon().max(1.0) {
        return Err(Error::InvalidPath("paths have different horizons".into()));
    }
    let grid = merge_knots(&[a.knots(), b.knots()], a.horizon());
    let factor = if level > 1 { SUP_REFINEMENT } else { 1 };
    let ra = a.refine(&grid)?.subdivide(factor)?;
    let rb = b.refine(&grid)?.subdivide(factor)?;
    let sa = phi_map_exact(&ra, level)?;
    let sb = phi_map_exact(&rb, level)?;
    if sa.len() != sb.len() {
        return Err(Error::InvalidPath("knot grids differ after refinement".into()));
    }
    Ok(sa.iter().zip(&sb).fold(0.0_f64, |m, (x, y)| {
        let d = x
            .level(level)
            .data()
            .iter()
            .zip(y.level(level).data())
            .fold(0.0_f64, |mm, (p, q)| mm.max((p - q).abs()));
        m.max(d)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderTrial {
    pub eps2: f64,
    pub trial: usize,
    /// Sup distance between the two paths.
    pub s: f64,
    /// Sup distance between their level-ν signature paths.
    pub d: f64,
    /// `D / √s`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderDecade {
    pub eps2: f64,
    pub median_s: f64,
    pub median_d: f64,
    pub median_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub level: usize,
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub mode: PerturbMode,
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<HolderTrial>,
    pub decades: Vec<HolderDecade>,
    /// Fitted slope of `log D` against `log s`.
    pub exponent: Option<f64>,
    /// 95% band on the exponent.
    pub exponent_band: Option<[f64; 2]>,
    /// Largest observed `D / √s`.
    pub max_ratio: f64,
}

impl HolderReport {
    /// Whether the median ratio never increases as `ε²` decreases.
    pub fn median_ratio_non_increasing(&self) -> bool {
        let mut d: Vec<&HolderDecade> = self.decades.iter().collect();
        d.sort_by(|a, b| b.eps2.total_cmp(&a.eps2));
        d.windows(2).all(|w| w[1].median_ratio <= w[0].median_ratio * (1.0 + 1e-12))
    }
}

/// Pairs `(γ, γ̃)` at distance `≤ ε²` for each `ε²`, with `D` measured on the
/// refined knot union.
pub fn holder_suite(
    level: usize,
    dim: usize,
    horizon: f64,
    eps2_list: &[f64],
    trials: usize,
    mode: PerturbMode,
    seed: u64,
) -> Result<HolderReport> {
    if level == 0 || dim == 0 {
        return Err(Error::InvalidArgument("level and dim must be positive".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    if let Some(e) = eps2_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::InvalidArgument(format!("eps2 = {e} outside (0, 1]")));
    }
    let max_slope = match mode {
        PerturbMode::Adversarial => ADVERSARIAL_SLOPE,
        PerturbMode::Random => 1.0,
    };
    let jobs: Vec<(usize, usize)> = (0..eps2_list.len())
        .flat_map(|e| (0..trials).map(move |i| (e, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(e, i)| {
            let eps2 = eps2_list[e];
            let mut r = rng::stream(rng::derive_seed_path(seed, &[e as u64, i as u64, 0]));
            let base = random_h_path(dim, horizon, BASE_SEGMENTS, max_slope, &mut r)?;
            let other = perturb_in_h(&base, eps2, rng::derive_seed_path(seed, &[e as u64, i as u64, 1]), mode)?;
            let s = sup_distance(&base, &other)?;
            if other.lipschitz_constant() > 1.0 + TOL_LIP || s > eps2 * (1.0 + 1e-12) {
                return Err(Error::InvalidPath(format!(
                    "perturbed pair not certified: slope {}, distance {s} > {eps2}",
                    other.lipschitz_constant()
                )));
            }
            let d = signature_sup_distance(&base, &other, level)?;
            Ok(HolderTrial {
                eps2,
                trial: i,
                s,
                d,
                ratio: if s > 0.0 { d / s.sqrt() } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let decades = eps2_list
        .iter()
        .map(|&eps2| {
            let sel: Vec<&HolderTrial> = rows.iter().filter(|r| r.eps2 == eps2).collect();
            let mut s: Vec<f64> = sel.iter().map(|r| r.s).collect();
            let mut d: Vec<f64> = sel.iter().map(|r| r.d).collect();
            let mut ratio: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
            HolderDecade {
                eps2,
                median_s: median(&mut s),
                median_d: median(&mut d),
                max_ratio: ratio.iter().copied().fold(0.0, f64::max),
                median_ratio: median(&mut ratio),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.s > 0.0 && r.d > 0.0)
        .map(|r| (r.s.ln(), r.d.ln()))
        .collect();
    let fit = ols(&points);
    Ok(HolderReport {
        level,
        dim,
        horizon,
        mode,
        seed,
        trials,
        max_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
        rows,
        decades,
        exponent: fit.map(|f| f.0),
        exponent_band: fit.map(|(b, se)| [b - 1.96 * se, b + 1.96 * se]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnRow {
    pub n: usize,
    pub rep: usize,
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnSize {
    pub n: usize,
    pub median_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnReport {
    pub model: String,
    pub level: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub reps: usize,
    pub mean: Vec<f64>,
    pub rows: Vec<LlnRow>,
    pub sizes: Vec<LlnSize>,
    /// `β` in `median error ∝ n^{−β}`.
    pub decay_exponent: Option<f64>,
}

impl LlnReport {
    pub fn medians_non_increasing(&self) -> bool {
        self.sizes
            .windows(2)
            .all(|w| w[1].n < w[0].n || w[1].median_error <= w[0].median_error * (1.0 + 1e-12) + 1e-15)
    }
}

/// Sup over the grid `{j/n}` of `|Φ^{(ν)}(φ_n)(t) − Q^{⊗ν} t^ν/ν!|_∞` for
/// independent sequences, with the median error per `n`.
pub fn lln_suite(
    model: &StepLawModel,
    level: usize,
    horizon: f64,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<LlnReport> {
    if level == 0 || reps == 0 || n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidArgument("level, reps and every n must be positive".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    let q = model.mean_vector().q;
    let jobs: Vec<(usize, usize)> = (0..n_list.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let n = n_list[i];
            let len = (horizon * n as f64).ceil() as usize;
            let seq = model.sample_sequence(len, rng::derive_seed_path(seed, &[i as u64, rep as u64]))?;
            let path = phi_n_from_sequence(&seq, n, horizon)?;
            let stacks = phi_map_exact(&path, level)?;
            let unit = zero_cost_target(&q, level, 1.0);
            let sup_error = stacks.iter().fold(0.0_f64, |m, s| {
                let scale = s.time().powi(level as i32);
                let e = s
                    .level(level)
                    .data()
                    .iter()
                    .zip(unit.data())
                    .fold(0.0_f64, |mm, (a, b)| mm.max((a - b * scale).abs()));
                m.max(e)
            });
            Ok(LlnRow { n, rep, sup_error })
        })
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<LlnSize> = n_list
        .iter()
        .map(|&n| {
            let mut e: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.sup_error).collect();
            LlnSize {
                n,
                max_error: e.iter().copied().fold(0.0, f64::max),
                median_error: median(&mut e),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .filter(|s| s.median_error > 0.0)
        .map(|s| ((s.n as f64).ln(), s.median_error.ln()))
        .collect();
    Ok(LlnReport {
        model: model.kind().name().into(),
        level,
        horizon,
        seed,
        reps,
        mean: q,
        rows,
        sizes,
        decay_exponent: ols(&points).map(|f| -f.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityTrial {
    pub trial: usize,
    pub segments: usize,
    /// `min_{k,t} (t^k/k! − |Φ^{(k)}(t)|_∞)`.
    pub level_slack: f64,
    /// `min_{s<t} (L|t − s| − |Φ^{(ν)}(t) − Φ^{(ν)}(s)|_∞)`.
    pub lipschitz_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub level: usize,
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub trials: usize,
    /// `T^{ν−1}/(ν−1)!`.
    pub lipschitz_constant: f64,
    pub rows: Vec<RegularityTrial>,
    pub worst_level_slack: f64,
    pub worst_lipschitz_slack: f64,
    pub level_violations: usize,
    pub lipschitz_violations: usize,
    /// `max_k |Φ^{(k)}(T) − T^k/k!|` on the all-ones straight line.
    pub extremal_gap: f64,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        self.level_violations == 0 && self.lipschitz_violations == 0
    }
}

fn regularity_trial(path: &PiecewisePath, level: usize, lip: f64) -> Result<(f64, f64)> {
    let stacks = phi_map_exact(path, level)?;
    let mut level_slack = f64::INFINITY;
    for s in &stacks {
        for k in 1..=level {
            let bound = s.time().powi(k as i32) / factorial(k);
            level_slack = level_slack.min(bound - s.level(k).sup_norm());
        }
    }
    let mut lipschitz_slack = f64::INFINITY;
    for (i, a) in stacks.iter().enumerate() {
        for b in &stacks[i + 1..] {
            let diff = a
                .level(level)
                .data()
                .iter()
                .zip(b.level(level).data())
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            lipschitz_slack = lipschitz_slack.min(lip * (b.time() - a.time()) - diff);
        }
    }
    Ok((level_slack, lipschitz_slack))
}

/// Checks `|Φ^{(k)}(γ)(t)| ≤ t^k/k!` for `k ≤ ν` at every knot and
/// `|Φ^{(ν)}(γ)(t) − Φ^{(ν)}(γ)(s)| ≤ T^{ν−1}/(ν−1)! |t − s|` over all knot
/// pairs of random paths in H.
pub fn regularity_suite(level: usize, dim: usize, horizon: f64, trials: usize, seed: u64) -> Result<RegularityReport> {
    if level == 0 || dim == 0 {
        return Err(Error::InvalidArgument("level and dim must be positive".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    let lip = horizon.powi(level as i32 - 1) / factorial(level - 1);
    let rows = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(rng::derive_seed(seed, i as u64));
            let segments = r.gen_range(1..=8);
            let path = random_h_path(dim, horizon, segments, 1.0, &mut r)?;
            let (level_slack, lipschitz_slack) = regularity_trial(&path, level, lip)?;
            Ok(RegularityTrial {
                trial: i,
                segments: path.segment_count(),
                level_slack,
                lipschitz_slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let line = PiecewisePath::straight_line(&vec![1.0; dim], horizon)?;
    let end = phi_map_exact(&line, level)?.pop().expect("end point");
    let extremal_gap = (1..=level).fold(0.0_f64, |m, k| {
        let bound = horizon.powi(k as i32) / factorial(k);
        end.level(k).data().iter().fold(m, |mm, v| mm.max((v - bound).abs()))
    });

    Ok(RegularityReport {
        level,
        dim,
        horizon,
        seed,
        trials,
        lipschitz_constant: lip,
        worst_level_slack: rows.iter().map(|r| r.level_slack).fold(f64::INFINITY, f64::min),
        worst_lipschitz_slack: rows.iter().map(|r| r.lipschitz_slack).fold(f64::INFINITY, f64::min),
        level_violations: rows.iter().filter(|r| r.level_slack < -BOUND_SLACK).count(),
        lipschitz_violations: rows.iter().filter(|r| r.lipschitz_slack < -BOUND_SLACK).count(),
        extremal_gap,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::ModelKind;

    #[test]
    fn identical_paths_have_zero_distance() {
        let mut r = rng::stream(3);
        let p = random_h_path(2, 1.0, 5, 1.0, &mut r).unwrap();
        assert_eq!(signature_sup_distance(&p, &p, 3).unwrap(), 0.0);
    }

    #[test]
    fn level_one_shift_is_exact() {
        let a = PiecewisePath::straight_line(&[0.5, 0.0], 1.0).unwrap();
        let b = PiecewisePath::straight_line(&[0.5, 0.2], 1.0).unwrap();
        assert!((signature_sup_distance(&a, &b, 1).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sawtooth_against_line_closed_form() {
        // d = 1: level 2 is γ²/2, so D = sup |2γw + w²| / 2 for γ̃ = γ + w.
        for eps2 in [1e-1, 1e-2] {
            let a = 0.3;
            let line = PiecewisePath::straight_line(&[a], 1.0).unwrap();
            let saw = perturb_in_h(&line, eps2, 9, PerturbMode::Adversarial).unwrap();
            let got = signature_sup_distance(&line, &saw, 2).unwrap();
            let expected = saw
                .knots()
                .iter()
                .map(|&t| {
                    let w = saw.eval(t)[0] - a * t;
                    (2.0 * a * t * w + w * w).abs() / 2.0
                })
                .fold(0.0, f64::max);
            assert!((got - expected).abs() < 1e-14, "eps2={eps2}: {got} vs {expected}");
            let peak = 0.5 * eps2;
            assert!((expected - a * peak).abs() <= a * eps2 * peak + peak * peak);
        }
    }

    #[test]
    fn adversarial_exponent_and_ratios() {
        let rep = holder_suite(2, 2, 1.0, &[1e-2, 1e-3], 12, PerturbMode::Adversarial, 4).unwrap();
        assert!(rep.exponent.unwrap() >= 0.45);
        assert!(rep.median_ratio_non_increasing());
        assert!(rep.rows.iter().all(|r| r.s <= r.eps2));
    }

    #[test]
    fn lln_constant_sequence_is_exact() {
        let m = StepLawModel::new(
            ModelKind::IidDiscrete {
                points: vec![vec![0.3, -0.7]],
                probs: vec![1.0],
            },
            2,
            false,
        )
        .unwrap();
        let rep = lln_suite(&m, 3, 1.0, &[7, 100], 2, 1).unwrap();
        assert!(rep.rows.iter().all(|r| r.sup_error <= 1e-12), "{:?}", rep.rows);
    }

    #[test]
    fn lln_zero_mean_rotation_decays() {
        let m = StepLawModel::new(
            ModelKind::Rotation {
                alpha: 0.5 * (5f64.sqrt() - 1.0),
                observable: vec![crate::processes::TrigPoly {
                    constant: 0.0,
                    cos: vec![1.0],
                    sin: vec![],
                }],
            },
            1,
            false,
        )
        .unwrap();
        let rep = lln_suite(&m, 2, 1.0, &[100, 1000], 4, 2).unwrap();
        assert!(rep.sizes[1].median_error < rep.sizes[0].median_error);
        assert!(rep.sizes[1].median_error < 1e-3);
    }

    #[test]
    fn regularity_bounds_hold_and_are_tight() {
        let rep = regularity_suite(4, 2, 1.5, 200, 8).unwrap();
        assert!(rep.passed(), "{} {}", rep.worst_level_slack, rep.worst_lipschitz_slack);
        assert!(rep.extremal_gap <= 1e-12);
        let zero = PiecewisePath::zero(3, 1.0).unwrap();
        let st = phi_map_exact(&zero, 3).unwrap();
        assert!(st.iter().all(|s| (1..=3).all(|k| s.level(k).sup_norm() == 0.0)));
    }
}
