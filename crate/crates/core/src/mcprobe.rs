//! Monte Carlo estimates of `P(|𝕊_n^{(ν)}(T) − y|_∞ ≤ δ)` and of the decay
//! slope `−(1/n) log P`, plain or under exponential tilting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{StepLawModel, TiltedLaw};
use crate::rate::{CramerTransform, RateSolution};
use crate::rng;
use crate::signature::{bracket, StreamAccumulator};
use crate::tensor::LevelTensor;

/// Slack added to the ball radius so boundary hits survive rounding.
pub const BALL_SLACK: f64 = 1e-12;

/// Largest relative standard error at which a per-n slope is reported.
pub const MAX_REL_STD_ERROR: f64 = 0.5;

pub const MIN_TRIALS: usize = 1000;
pub const MIN_BATCHES: usize = 8;

fn default_batches() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub level: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub y: LevelTensor,
    pub delta: f64,
    pub n_list: Vec<usize>,
    /// Trials per sample size.
    pub trials: usize,
    pub seed: u64,
    /// Independent replicate batches used for standard errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

impl ProbeConfig {
    fn validate(&self, model: &StepLawModel) -> Result<()> {
        if self.level == 0 {
            return Err(Error::InvalidArgument("level must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be positive, got {}", self.delta)));
        }
        if self.trials < MIN_TRIALS {
            return Err(Error::InvalidArgument(format!("need at least {MIN_TRIALS} trials, got {}", self.trials)));
        }
        if self.batches < MIN_BATCHES || self.batches > self.trials {
            return Err(Error::InvalidArgument(format!(
                "batches must lie in {MIN_BATCHES}..={}, got {}",
                self.trials, self.batches
            )));
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::InvalidArgument("n_list must hold positive sample sizes".into()));
        }
        if self.y.dim() != model.dim() || self.y.level() != self.level {
            return Err(Error::ShapeMismatch {
                expected_dim: model.dim(),
                expected_level: self.level,
                dim: self.y.dim(),
                level: self.y.level(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Tilted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    pub n: usize,
    pub p_hat: f64,
    pub std_error: f64,
    /// Raw number of trials landing in the ball.
    pub hits: u64,
    /// `−(1/n) log p̂`, present only when resolved.
    pub slope: Option<f64>,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_error: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LDPEstimate {
    pub method: Method,
    pub level: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub y: LevelTensor,
    pub delta: f64,
    pub seed: u64,
    pub trials: usize,
    pub batches: usize,
    /// Number of mixture components in the sampling law.
    pub components: usize,
    pub rows: Vec<SizeEstimate>,
    /// Weighted fit of `−log p̂_n` against `n` with free intercept.
    pub fit: Option<SlopeFit>,
}

impl LDPEstimate {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.slope)
    }

    pub fn all_resolved(&self) -> bool {
        self.rows.iter().all(|r| r.resolved)
    }
}

/// Per-segment tilts on a uniform grid over `[0, T]`, one schedule per
/// mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSchedule {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// `components[j][segment]` is a tilt vector.
    pub components: Vec<Vec<Vec<f64>>>,
}

impl TiltSchedule {
    /// The degenerate tilt `λ ≡ 0`.
    pub fn zero(dim: usize, horizon: f64) -> Self {
        Self {
            horizon,
            components: vec![vec![vec![0.0; dim]]],
        }
    }

    /// Tilts `λ_i = ∇Λ*(v_i)` along each near-optimal profile of a converged
    /// solution, mixed with equal weights.
    pub fn from_solution(ct: &CramerTransform, solution: &RateSolution, horizon: f64, rel_tol: f64) -> Result<Self> {
        if !solution.converged {
            return Err(Error::NotConverged("rate solution is not converged".into()));
        }
        let mut profiles: Vec<&Vec<Vec<f64>>> = solution.near_optimal(rel_tol).iter().map(|m| &m.profile).collect();
        if profiles.is_empty() {
            profiles.push(&solution.profile);
        }
        let components = profiles
            .into_iter()
            .map(|p| {
                p.iter()
                    .map(|v| ct.legendre(v).map(|l| l.lambda))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { horizon, components })
    }
}

struct BatchSums {
    weight: f64,
    hits: u64,
    size: usize,
}

/// Sums in a fixed binary tree, independent of thread scheduling.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

enum Sampler<'a> {
    Model(&'a StepLawModel),
    Tilted {
        /// `laws[j][segment]`.
        laws: Vec<Vec<TiltedLaw>>,
        segments: usize,
    },
}

struct Run<'a> {
    model: &'a StepLawModel,
    cfg: &'a ProbeConfig,
    sampler: Sampler<'a>,
}

impl Run<'_> {
    fn batch(&self, n_index: usize, batch: usize) -> BatchSums {
        let cfg = self.cfg;
        let d = self.model.dim();
        let n = cfg.n_list[n_index];
        let size = cfg.trials / cfg.batches + usize::from(batch < cfg.trials % cfg.batches);
        let (lo, hi, theta) = bracket(n, cfg.horizon);
        let scale = (n as f64).powi(cfg.level as i32).recip();
        let y = cfg.y.data();
        let radius = cfg.delta + BALL_SLACK;

        let mut rng = rng::stream(rng::derive_seed_path(cfg.seed, &[n_index as u64, batch as u64]));
        let mut acc = StreamAccumulator::new(d, cfg.level);
        let mut buf = vec![0.0; hi * d];
        let mut low_top = vec![0.0; y.len()];
        let (k_comp, segments) = match &self.sampler {
            Sampler::Model(_) => (1, 1),
            Sampler::Tilted { laws, segments } => (laws.len(), *segments),
        };
        let segment_of: Vec<usize> = (0..hi)
            .map(|k| {
                let t = k as f64 / n as f64;
                ((t / cfg.horizon * segments as f64 + 1e-9).floor() as usize).min(segments - 1)
            })
            .collect();
        let mut block = vec![0.0; segments * d];
        let mut counts = vec![0usize; segments];
        for &s in &segment_of {
            counts[s] += 1;
        }
        let mut log_terms = vec![0.0; k_comp];
        let log_alpha = -(k_comp as f64).ln();

        let mut weight = 0.0;
        let mut hits = 0u64;
        for _ in 0..size {
            acc.reset();
            match &self.sampler {
                Sampler::Model(m) => {
                    m.fill(&mut rng, &mut buf).expect("validated model");
                }
                Sampler::Tilted { laws, .. } => {
                    let j = if k_comp > 1 {
                        rand::Rng::gen_range(&mut rng, 0..k_comp)
                    } else {
                        0
                    };
                    for (k, x) in buf.chunks_mut(d).enumerate() {
                        laws[j][segment_of[k]].draw(&mut rng, x);
                    }
                }
            }
            for (k, x) in buf.chunks(d).enumerate() {
                if k == lo && theta != 0.0 {
                    low_top.copy_from_slice(acc.level(cfg.level));
                }
                acc.push(x);
            }
            let top = acc.level(cfg.level);
            let inside = if theta == 0.0 {
                top.iter().zip(y).all(|(s, t)| (s * scale - t).abs() <= radius)
            } else {
                top.iter()
                    .zip(&low_top)
                    .zip(y)
                    .all(|((h, l), t)| ((l + theta * (h - l)) * scale - t).abs() <= radius)
            };
            if !inside {
                continue;
            }
            hits += 1;
            match &self.sampler {
                Sampler::Model(_) => weight += 1.0,
                Sampler::Tilted { laws, .. } => {
                    block.fill(0.0);
                    for (k, x) in buf.chunks(d).enumerate() {
                        let s = segment_of[k];
                        for (b, v) in block[s * d..(s + 1) * d].iter_mut().zip(x) {
                            *b += v;
                        }
                    }
                    for (j, comp) in laws.iter().enumerate() {
                        let mut l = log_alpha;
                        for (s, law) in comp.iter().enumerate() {
                            if counts[s] == 0 {
                                continue;
                            }
                            let dot: f64 = law.lambda().iter().zip(&block[s * d..(s + 1) * d]).map(|(a, b)| a * b).sum();
                            l += dot - counts[s] as f64 * law.log_mgf();
                        }
                        log_terms[j] = l;
                    }
                    weight += (-log_sum_exp(&log_terms)).exp();
                }
            }
        }
        BatchSums { weight, hits, size }
    }

    fn estimate(&self, method: Method, components: usize) -> LDPEstimate {
        let cfg = self.cfg;
        let jobs: Vec<(usize, usize)> = (0..cfg.n_list.len())
            .flat_map(|i| (0..cfg.batches).map(move |b| (i, b)))
            .collect();
        let sums: Vec<BatchSums> = jobs.par_iter().map(|&(i, b)| self.batch(i, b)).collect();
        let rows: Vec<SizeEstimate> = cfg
            .n_list
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let chunk = &sums[i * cfg.batches..(i + 1) * cfg.batches];
                let weights: Vec<f64> = chunk.iter().map(|s| s.weight).collect();
                let p_hat = pairwise_sum(&weights) / cfg.trials as f64;
                let means: Vec<f64> = chunk.iter().map(|s| s.weight / s.size as f64).collect();
                let bm = pairwise_sum(&means) / cfg.batches as f64;
                let dev: Vec<f64> = means.iter().map(|m| (m - bm).powi(2)).collect();
                let var = pairwise_sum(&dev) / (cfg.batches - 1) as f64;
                let std_error = (var / cfg.batches as f64).sqrt();
                let hits = chunk.iter().map(|s| s.hits).sum();
                let resolved = p_hat > 0.0 && std_error / p_hat < MAX_REL_STD_ERROR;
                SizeEstimate {
                    n,
                    p_hat,
                    std_error,
                    hits,
                    slope: resolved.then(|| -p_hat.ln() / n as f64),
                    resolved,
                }
            })
            .collect();
        LDPEstimate {
            method,
            level: cfg.level,
            horizon: cfg.horizon,
            y: cfg.y.clone(),
            delta: cfg.delta,
            seed: cfg.seed,
            trials: cfg.trials,
            batches: cfg.batches,
            components,
            fit: fit_slope(&rows),
            rows,
        }
    }
}

/// Weighted least squares of `−log p̂_n` on `n` with weights `(p̂/se)²`
/// over resolved rows; needs two distinct `n`.
pub fn fit_slope(rows: &[SizeEstimate]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.resolved)
        .map(|r| {
            let rel = (r.std_error / r.p_hat).max(1e-6);
            (r.n as f64, -r.p_hat.ln(), rel.powi(-2))
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    if pts.len() < 2 {
        return None;
    }
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    Some(SlopeFit {
        slope,
        intercept: ym - slope * xm,
        std_error: sxx.recip().sqrt(),
        points: pts.len(),
    })
}

/// Plain Monte Carlo under the model's own law.
pub fn estimate_naive(model: &StepLawModel, cfg: &ProbeConfig) -> Result<LDPEstimate> {
    cfg.validate(model)?;
    let run = Run {
        model,
        cfg,
        sampler: Sampler::Model(model),
    };
    Ok(run.estimate(Method::Naive, 1))
}

/// Importance sampling from the mixture of tilted laws in `tilt`, reweighted
/// by the exact likelihood ratio.
pub fn estimate_tilted(model: &StepLawModel, cfg: &ProbeConfig, tilt: &TiltSchedule) -> Result<LDPEstimate> {
    cfg.validate(model)?;
    if !model.is_iid() {
        return Err(Error::NotIid(model.kind().name().into()));
    }
    if (tilt.horizon - cfg.horizon).abs() > 1e-12 * cfg.horizon {
        return Err(Error::InvalidArgument("tilt schedule and probe horizons differ".into()));
    }
    let segments = tilt.components.first().map_or(0, Vec::len);
    if segments == 0 || tilt.components.iter().any(|c| c.len() != segments) {
        return Err(Error::InvalidArgument("tilt components need a common positive segment count".into()));
    }
    let laws = tilt
        .components
        .iter()
        .map(|c| c.iter().map(|l| model.tilted(l)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let run = Run {
        model,
        cfg,
        sampler: Sampler::Tilted { laws, segments },
    };
    Ok(run.estimate(Method::Tilted, tilt.components.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Relative widening of the rate band.
    pub rel: f64,
    /// Absolute widening, absorbing finite-n offsets near zero rate.
    pub abs: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self { rel: 0.2, abs: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub fitted_slope: Option<f64>,
    pub fit_std_error: Option<f64>,
    /// Rate infimum over the closed `δ`-ball.
    pub lower: f64,
    /// Rate at the ball centre, an upper bound for the open-ball infimum.
    pub upper: f64,
    /// `[lower(1 − rel) − abs, upper(1 + rel) + abs]`.
    pub band: [f64; 2],
    pub policy: TolerancePolicy,
    pub verdict: Verdict,
    pub method: Method,
    pub delta: f64,
    pub n_list: Vec<usize>,
    pub per_n_slopes: Vec<Option<f64>>,
}

/// Compares a fitted slope with the band `[envelope(δ), Ĩ(y)]`.
pub fn slope_vs_rate_report(
    est: &LDPEstimate,
    envelope: &RateSolution,
    center: &RateSolution,
    policy: TolerancePolicy,
) -> SlopeReport {
    let lower = envelope.value;
    let upper = center.value.max(lower);
    let band = [lower * (1.0 - policy.rel) - policy.abs, upper * (1.0 + policy.rel) + policy.abs];
    let usable = envelope.converged && center.converged;
    let verdict = match est.fitted_slope() {
        Some(s) if usable => {
            if s >= band[0] && s <= band[1] {
                Verdict::Consistent
            } else {
                Verdict::Inconsistent
            }
        }
        _ => Verdict::Unresolved,
    };
    SlopeReport {
        fitted_slope: est.fitted_slope(),
        fit_std_error: est.fit.as_ref().map(|f| f.std_error),
        lower,
        upper,
        band,
        policy,
        verdict,
        method: est.method,
        delta: est.delta,
        n_list: est.rows.iter().map(|r| r.n).collect(),
        per_n_slopes: est.rows.iter().map(|r| r.slope).collect(),
    }
}
