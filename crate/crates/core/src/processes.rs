//! Bounded stationary step processes: i.i.d. laws, finite Markov chains and
//! observables along orbits of circle maps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::SampledSequence;
use crate::rng;

pub const MAX_MARKOV_STATES: usize = 64;

/// Largest tilt magnitude used when sampling tilted laws.
pub const TILT_CAP: f64 = 40.0;

/// `g(x) = constant + Σ_k cos[k−1]·cos(2πkx) + sin[k−1]·sin(2πkx)` on the
/// unit circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn eval(&self, x: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let mut v = self.constant;
        for (k, a) in self.cos.iter().enumerate() {
            v += a * (tau * (k + 1) as f64 * x).cos();
        }
        for (k, b) in self.sin.iter().enumerate() {
            v += b * (tau * (k + 1) as f64 * x).sin();
        }
        v
    }

    /// `∫_0^1 g`.
    pub fn mean(&self) -> f64 {
        self.constant
    }

    /// Uniform bound on `|g − shift|`.
    fn bound(&self, shift: f64) -> f64 {
        (self.constant - shift).abs() + self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelKind {
    /// Independent ±1 coordinates.
    IidRademacher,
    /// Independent coordinates uniform on `[low, high]`.
    IidUniform { low: f64, high: f64 },
    /// Finitely supported law on `R^d`.
    IidDiscrete { points: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Stationary finite-state chain observed through `observations[state]`.
    Markov {
        transition: Vec<Vec<f64>>,
        observations: Vec<Vec<f64>>,
    },
    /// `ξ(k) = g(x_0 + kα mod 1)`.
    Rotation { alpha: f64, observable: Vec<TrigPoly> },
    /// `ξ(k) = g(2^k x_0 mod 1)`.
    Doubling { observable: Vec<TrigPoly> },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::IidRademacher => "iid_rademacher",
            ModelKind::IidUniform { .. } => "iid_uniform",
            ModelKind::IidDiscrete { .. } => "iid_discrete",
            ModelKind::Markov { .. } => "markov",
            ModelKind::Rotation { .. } => "rotation",
            ModelKind::Doubling { .. } => "doubling",
        }
    }
}

/// JSON form `{kind, params, dim, centered}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub dim: usize,
    #[serde(default)]
    pub centered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanProvenance {
    Analytic,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVector {
    pub q: Vec<f64>,
    pub provenance: MeanProvenance,
    /// Standard error per coordinate for estimated means.
    pub std_error: Option<Vec<f64>>,
}

/// A validated step law. Emitted samples are `raw − shift`, where `shift` is
/// the raw mean for centered models and zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct StepLawModel {
    kind: ModelKind,
    dim: usize,
    centered: bool,
    raw_mean: Vec<f64>,
    shift: Vec<f64>,
    /// Markov stationary law, cumulative transition rows.
    #[serde(skip)]
    chain: Option<ChainTables>,
}

#[derive(Debug, Clone, PartialEq)]
struct ChainTables {
    stationary: Vec<f64>,
    stationary_cdf: Vec<f64>,
    row_cdf: Vec<Vec<f64>>,
}

impl From<StepLawModel> for ModelSpec {
    fn from(m: StepLawModel) -> Self {
        ModelSpec {
            kind: m.kind,
            dim: m.dim,
            centered: m.centered,
        }
    }
}

impl TryFrom<ModelSpec> for StepLawModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        StepLawModel::new(spec.kind, spec.dim, spec.centered)
    }
}

fn cdf(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn check_probabilities(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidModel(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

fn stationary_law(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let s = transition.len();
    let mut a = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            a[(i, j)] = transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(s);
    b[s - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidModel("chain has no unique stationary law".into()))?;
    if pi.iter().any(|&p| p < -1e-10 || !p.is_finite()) {
        return Err(Error::InvalidModel("chain has no unique stationary law".into()));
    }
    let mut pi: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    // verify π P = π
    for j in 0..s {
        let v: f64 = (0..s).map(|i| pi[i] * transition[i][j]).sum();
        if (v - pi[j]).abs() > 1e-9 {
            return Err(Error::InvalidModel("chain has no unique stationary law".into()));
        }
    }
    Ok(pi)
}

impl StepLawModel {
    pub fn new(kind: ModelKind, dim: usize, centered: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dim must be positive".into()));
        }
        let mut chain = None;
        let raw_mean: Vec<f64> = match &kind {
            ModelKind::IidRademacher => vec![0.0; dim],
            ModelKind::IidUniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::InvalidModel(format!("uniform needs low < high, got [{low}, {high}]")));
                }
                vec![0.5 * (low + high); dim]
            }
            ModelKind::IidDiscrete { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(Error::InvalidModel(format!(
                        "{} support points with {} probabilities",
                        points.len(),
                        probs.len()
                    )));
                }
                if points.iter().any(|p| p.len() != dim) {
                    return Err(Error::InvalidModel(format!("support points must have {dim} coordinates")));
                }
                check_probabilities(probs, "probs")?;
                (0..dim)
                    .map(|c| points.iter().zip(probs).map(|(x, p)| x[c] * p).sum())
                    .collect()
            }
            ModelKind::Markov {
                transition,
                observations,
            } => {
                let s = transition.len();
                if s == 0 || s > MAX_MARKOV_STATES {
                    return Err(Error::InvalidModel(format!(
                        "chain needs 1..={MAX_MARKOV_STATES} states, got {s}"
                    )));
                }
                if observations.len() != s || observations.iter().any(|o| o.len() != dim) {
                    return Err(Error::InvalidModel(format!("need {s} observations of dim {dim}")));
                }
                for (i, row) in transition.iter().enumerate() {
                    if row.len() != s {
                        return Err(Error::InvalidModel(format!("transition row {i} has {} entries", row.len())));
                    }
                    check_probabilities(row, &format!("transition row {i}"))?;
                }
                let stationary = stationary_law(transition)?;
                let mean = (0..dim)
                    .map(|c| observations.iter().zip(&stationary).map(|(o, p)| o[c] * p).sum())
                    .collect();
                chain = Some(ChainTables {
                    stationary_cdf: cdf(&stationary),
                    row_cdf: transition.iter().map(|r| cdf(r)).collect(),
                    stationary,
                });
                mean
            }
            ModelKind::Rotation { alpha, observable } => {
                if !alpha.is_finite() {
                    return Err(Error::InvalidModel("rotation angle must be finite".into()));
                }
                if observable.len() != dim {
                    return Err(Error::InvalidModel(format!("observable needs {dim} coordinates")));
                }
                observable.iter().map(TrigPoly::mean).collect()
            }
            ModelKind::Doubling { observable } => {
                if observable.len() != dim {
                    return Err(Error::InvalidModel(format!("observable needs {dim} coordinates")));
                }
                observable.iter().map(TrigPoly::mean).collect()
            }
        };
        let shift = if centered { raw_mean.clone() } else { vec![0.0; dim] };
        let model = Self {
            kind,
            dim,
            centered,
            raw_mean,
            shift,
            chain,
        };
        let bound = model.certified_bound();
        if !(bound <= 1.0 + 1e-12) {
            return Err(Error::InvalidModel(format!(
                "{} model can emit samples of sup norm {bound} > 1",
                model.kind.name()
            )));
        }
        Ok(model)
    }

    /// Largest possible `|ξ|_∞` of an emitted sample.
    pub fn certified_bound(&self) -> f64 {
        let shifted = |x: &[f64]| -> f64 {
            x.iter().zip(&self.shift).fold(0.0_f64, |m, (v, s)| m.max((v - s).abs()))
        };
        match &self.kind {
            ModelKind::IidRademacher => self.shift.iter().map(|s| 1.0 + s.abs()).fold(0.0, f64::max),
            ModelKind::IidUniform { low, high } => self
                .shift
                .iter()
                .map(|s| (low - s).abs().max((high - s).abs()))
                .fold(0.0, f64::max),
            ModelKind::IidDiscrete { points, probs } => points
                .iter()
                .zip(probs)
                .filter(|(_, &p)| p > 0.0)
                .map(|(x, _)| shifted(x))
                .fold(0.0, f64::max),
            ModelKind::Markov { observations, .. } => {
                let pi = &self.chain.as_ref().expect("validated chain").stationary;
                let reachable = |i: usize| pi[i] > 0.0;
                observations
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| reachable(*i))
                    .map(|(_, x)| shifted(x))
                    .fold(0.0, f64::max)
            }
            ModelKind::Rotation { observable, .. } | ModelKind::Doubling { observable } => observable
                .iter()
                .zip(&self.shift)
                .map(|(g, s)| g.bound(*s))
                .fold(0.0, f64::max),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    /// Amount subtracted from raw samples.
    pub(crate) fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn is_iid(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::IidRademacher | ModelKind::IidUniform { .. } | ModelKind::IidDiscrete { .. }
        )
    }

    /// Markov stationary law, if this is a chain.
    pub fn stationary_law(&self) -> Option<&[f64]> {
        self.chain.as_ref().map(|c| c.stationary.as_slice())
    }

    /// Mean of the emitted samples.
    pub fn mean_vector(&self) -> MeanVector {
        MeanVector {
            q: self.raw_mean.iter().zip(&self.shift).map(|(m, s)| m - s).collect(),
            provenance: MeanProvenance::Analytic,
            std_error: None,
        }
    }

    /// Monte Carlo estimate of the mean from `reps` independent runs of
    /// length `len`.
    pub fn estimate_mean(&self, len: usize, reps: usize, seed: u64) -> Result<MeanVector> {
        if len == 0 || reps < 2 {
            return Err(Error::InvalidArgument("need len >= 1 and reps >= 2".into()));
        }
        let mut means = vec![vec![0.0; self.dim]; reps];
        for (r, m) in means.iter_mut().enumerate() {
            let seq = self.sample_sequence(len, rng::derive_seed(seed, r as u64))?;
            for s in seq.iter() {
                for (acc, v) in m.iter_mut().zip(s) {
                    *acc += v / len as f64;
                }
            }
        }
        let q: Vec<f64> = (0..self.dim)
            .map(|c| means.iter().map(|m| m[c]).sum::<f64>() / reps as f64)
            .collect();
        let se = (0..self.dim)
            .map(|c| {
                let var = means.iter().map(|m| (m[c] - q[c]).powi(2)).sum::<f64>() / (reps - 1) as f64;
                (var / reps as f64).sqrt()
            })
            .collect();
        Ok(MeanVector {
            q,
            provenance: MeanProvenance::Estimated,
            std_error: Some(se),
        })
    }

    fn require_iid(&self) -> Result<()> {
        if self.is_iid() {
            Ok(())
        } else {
            Err(Error::NotIid(self.kind.name().into()))
        }
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.dim {
            return Err(Error::DimMismatch {
                left: self.dim,
                right: lambda.len(),
            });
        }
        Ok(())
    }

    fn dot_shift(&self, lambda: &[f64]) -> f64 {
        lambda.iter().zip(&self.shift).map(|(l, s)| l * s).sum()
    }

    /// `Λ(λ) = log E exp⟨λ, ξ⟩` for i.i.d. models.
    pub fn log_mgf(&self, lambda: &[f64]) -> Result<f64> {
        self.require_iid()?;
        self.check_lambda(lambda)?;
        let raw = match &self.kind {
            ModelKind::IidRademacher => lambda.iter().map(|&l| log_cosh(l)).sum(),
            ModelKind::IidUniform { low, high } => {
                let (m, c) = (0.5 * (low + high), 0.5 * (high - low));
                lambda.iter().map(|&l| l * m + log_sinhc(c * l)).sum()
            }
            ModelKind::IidDiscrete { points, probs } => discrete_log_mgf(points, probs, lambda),
            _ => unreachable!(),
        };
        Ok(raw - self.dot_shift(lambda))
    }

    /// `∇Λ(λ)`, the mean of the law tilted by `λ`.
    pub fn grad_log_mgf(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.require_iid()?;
        self.check_lambda(lambda)?;
        let raw: Vec<f64> = match &self.kind {
            ModelKind::IidRademacher => lambda.iter().map(|l| l.tanh()).collect(),
            ModelKind::IidUniform { low, high } => {
                let (m, c) = (0.5 * (low + high), 0.5 * (high - low));
                lambda.iter().map(|&l| m + c * langevin(c * l)).collect()
            }
            ModelKind::IidDiscrete { points, probs } => {
                let w = discrete_weights(points, probs, lambda);
                (0..self.dim)
                    .map(|c| points.iter().zip(&w).map(|(x, w)| x[c] * w).sum())
                    .collect()
            }
            _ => unreachable!(),
        };
        Ok(raw.iter().zip(&self.shift).map(|(r, s)| r - s).collect())
    }

    /// `∇²Λ(λ)`, the covariance of the law tilted by `λ`, row-major.
    pub fn hessian_log_mgf(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.require_iid()?;
        self.check_lambda(lambda)?;
        let d = self.dim;
        let mut h = vec![0.0; d * d];
        match &self.kind {
            ModelKind::IidRademacher => {
                for (a, l) in lambda.iter().enumerate() {
                    h[a * d + a] = 1.0 - l.tanh().powi(2);
                }
            }
            ModelKind::IidUniform { low, high } => {
                let c = 0.5 * (high - low);
                for (a, &l) in lambda.iter().enumerate() {
                    h[a * d + a] = c * c * langevin_prime(c * l);
                }
            }
            ModelKind::IidDiscrete { points, probs } => {
                let w = discrete_weights(points, probs, lambda);
                let mean: Vec<f64> = (0..d)
                    .map(|c| points.iter().zip(&w).map(|(x, w)| x[c] * w).sum())
                    .collect();
                for (x, wi) in points.iter().zip(&w) {
                    for a in 0..d {
                        for b in 0..d {
                            h[a * d + b] += wi * (x[a] - mean[a]) * (x[b] - mean[b]);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(h)
    }

    /// Per-coordinate independence: Rademacher and uniform laws are products.
    pub fn is_product_law(&self) -> bool {
        matches!(self.kind, ModelKind::IidRademacher | ModelKind::IidUniform { .. })
    }

    /// The law tilted by `exp⟨λ, ξ⟩ − Λ(λ)`; `λ = 0` gives the law itself and
    /// consumes randomness identically to untilted sampling.
    pub fn tilted(&self, lambda: &[f64]) -> Result<TiltedLaw> {
        self.require_iid()?;
        self.check_lambda(lambda)?;
        let zero = lambda.iter().all(|&l| l == 0.0);
        let lambda: Vec<f64> = lambda.iter().map(|l| l.clamp(-TILT_CAP, TILT_CAP)).collect();
        let sampler = match &self.kind {
            ModelKind::IidRademacher => TiltSampler::Rademacher {
                p_plus: lambda
                    .iter()
                    .map(|&l| if l == 0.0 { 0.5 } else { 1.0 / (1.0 + (-2.0 * l).exp()) })
                    .collect(),
            },
            ModelKind::IidUniform { low, high } => TiltSampler::Uniform {
                low: *low,
                high: *high,
                lambda: lambda.clone(),
            },
            ModelKind::IidDiscrete { points, probs } => {
                let weights = if zero {
                    probs.clone()
                } else {
                    discrete_weights(points, probs, &lambda)
                };
                TiltSampler::Discrete {
                    points: points.clone(),
                    cdf: cdf(&weights),
                }
            }
            _ => unreachable!(),
        };
        let log_mgf = if zero { 0.0 } else { self.log_mgf(&lambda)? };
        Ok(TiltedLaw {
            lambda,
            log_mgf,
            shift: self.shift.clone(),
            sampler,
        })
    }

    /// A deterministic sequence of `len` samples for `seed`.
    pub fn sample_sequence(&self, len: usize, seed: u64) -> Result<SampledSequence> {
        if len == 0 {
            return Err(Error::InvalidArgument("sequence length must be positive".into()));
        }
        let mut rng = rng::stream(seed);
        let mut data = vec![0.0; len * self.dim];
        self.fill(&mut rng, &mut data)?;
        SampledSequence::from_flat(self.dim, data)
    }

    /// Fills `out` (a multiple of `dim` long) with a stationary run.
    pub fn fill<R: Rng>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let len = out.len() / d;
        match &self.kind {
            ModelKind::Markov { observations, .. } => {
                let tables = self.chain.as_ref().expect("validated chain");
                let mut state = pick(&tables.stationary_cdf, rng.gen::<f64>());
                for k in 0..len {
                    if k > 0 {
                        state = pick(&tables.row_cdf[state], rng.gen::<f64>());
                    }
                    self.emit(&observations[state], &mut out[k * d..(k + 1) * d]);
                }
            }
            ModelKind::Rotation { alpha, observable } => {
                let x0: f64 = rng.gen();
                let frac_alpha = alpha.rem_euclid(1.0);
                for k in 0..len {
                    let x = (x0 + (k as f64) * frac_alpha).rem_euclid(1.0);
                    self.emit_observable(observable, x, &mut out[k * d..(k + 1) * d]);
                }
            }
            ModelKind::Doubling { observable } => {
                // backward orbit: x_k is a uniformly chosen preimage of x_{k+1}
                let mut orbit = vec![0.0; len];
                orbit[len - 1] = rng.gen();
                for k in (0..len - 1).rev() {
                    let branch = if rng.gen::<bool>() { 0.5 } else { 0.0 };
                    orbit[k] = 0.5 * orbit[k + 1] + branch;
                }
                for (k, &x) in orbit.iter().enumerate() {
                    self.emit_observable(observable, x, &mut out[k * d..(k + 1) * d]);
                }
            }
            _ => {
                let law = self.tilted(&vec![0.0; d])?;
                for k in 0..len {
                    law.draw(rng, &mut out[k * d..(k + 1) * d]);
                }
            }
        }
        Ok(())
    }

    fn emit(&self, raw: &[f64], out: &mut [f64]) {
        for ((o, r), s) in out.iter_mut().zip(raw).zip(&self.shift) {
            *o = (r - s).clamp(-1.0, 1.0);
        }
    }

    fn emit_observable(&self, g: &[TrigPoly], x: f64, out: &mut [f64]) {
        for ((o, gc), s) in out.iter_mut().zip(g).zip(&self.shift) {
            *o = (gc.eval(x) - s).clamp(-1.0, 1.0);
        }
    }
}

#[derive(Debug, Clone)]
enum TiltSampler {
    Rademacher { p_plus: Vec<f64> },
    Uniform { low: f64, high: f64, lambda: Vec<f64> },
    Discrete { points: Vec<Vec<f64>>, cdf: Vec<f64> },
}

/// An i.i.d. law under exponential tilting.
#[derive(Debug, Clone)]
pub struct TiltedLaw {
    lambda: Vec<f64>,
    log_mgf: f64,
    shift: Vec<f64>,
    sampler: TiltSampler,
}

impl TiltedLaw {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `Λ(λ)` of the untilted law at this tilt.
    pub fn log_mgf(&self) -> f64 {
        self.log_mgf
    }

    /// `log` of the density of the tilted law w.r.t. the base law at `x`.
    pub fn log_density_ratio(&self, x: &[f64]) -> f64 {
        self.lambda.iter().zip(x).map(|(l, v)| l * v).sum::<f64>() - self.log_mgf
    }

    pub fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.sampler {
            TiltSampler::Rademacher { p_plus } => {
                for ((o, &p), s) in out.iter_mut().zip(p_plus).zip(&self.shift) {
                    let raw = if rng.gen::<f64>() < p { 1.0 } else { -1.0 };
                    *o = raw - s;
                }
            }
            TiltSampler::Uniform { low, high, lambda } => {
                for ((o, &l), s) in out.iter_mut().zip(lambda).zip(&self.shift) {
                    let u: f64 = rng.gen();
                    let raw = if l == 0.0 {
                        low + u * (high - low)
                    } else {
                        // inverse CDF of the density ∝ e^{λx} on [low, high]
                        low + (u * (l * (high - low)).exp_m1()).ln_1p() / l
                    };
                    *o = raw.clamp(*low, *high) - s;
                }
            }
            TiltSampler::Discrete { points, cdf } => {
                let x = &points[pick(cdf, rng.gen::<f64>())];
                for ((o, v), s) in out.iter_mut().zip(x).zip(&self.shift) {
                    *o = v - s;
                }
            }
        }
    }
}

/// `log cosh λ` without cancellation near 0 or overflow for large `|λ|`.
pub fn log_cosh(l: f64) -> f64 {
    let a = l.abs();
    if a > 20.0 {
        a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
    } else {
        let s = (0.5 * a).sinh();
        (2.0 * s * s).ln_1p()
    }
}

/// `log(sinh u / u)`.
pub(crate) fn log_sinhc(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.05 {
        let u2 = a * a;
        u2 / 6.0 - u2 * u2 / 180.0 + u2 * u2 * u2 / 2835.0
    } else if a < 20.0 {
        (a.sinh() / a).ln()
    } else {
        a - std::f64::consts::LN_2 + (-(-2.0 * a).exp()).ln_1p() - a.ln()
    }
}

/// Langevin function `coth u − 1/u`.
pub(crate) fn langevin(u: f64) -> f64 {
    if u.abs() < 0.05 {
        let u2 = u * u;
        u / 3.0 - u * u2 / 45.0 + 2.0 * u * u2 * u2 / 945.0
    } else {
        1.0 / u.tanh() - 1.0 / u
    }
}

pub(crate) fn langevin_prime(u: f64) -> f64 {
    let a = u.abs();
    if a < 0.05 {
        let u2 = a * a;
        1.0 / 3.0 - u2 / 15.0 + 2.0 * u2 * u2 / 189.0
    } else if a > 20.0 {
        1.0 / (a * a)
    } else {
        1.0 / (a * a) - 1.0 / a.sinh().powi(2)
    }
}

fn discrete_exponents(points: &[Vec<f64>], probs: &[f64], lambda: &[f64]) -> Vec<f64> {
    points
        .iter()
        .zip(probs)
        .map(|(x, &p)| {
            if p > 0.0 {
                p.ln() + x.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn discrete_log_mgf(points: &[Vec<f64>], probs: &[f64], lambda: &[f64]) -> f64 {
    let e = discrete_exponents(points, probs, lambda);
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn discrete_weights(points: &[Vec<f64>], probs: &[f64], lambda: &[f64]) -> Vec<f64> {
    let e = discrete_exponents(points, probs, lambda);
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}
