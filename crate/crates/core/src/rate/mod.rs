//! Cramér transform, the path rate `I(γ) = ∫ Λ*(γ̇)`, and its push-forward
//! through the signature map, solved as a constrained variational problem.

mod constraint;
mod cramer;
mod solver;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::PiecewisePath;
use crate::processes::StepLawModel;
use crate::rng;
use crate::tensor::LevelTensor;

use constraint::ConstraintMap;
pub use cramer::{CramerTransform, Legendre};
use solver::{augmented_lagrangian, Program};
pub use solver::SolverSettings;

/// Profiles closer than this in sup norm count as the same local minimum.
pub const MINIMUM_SEPARATION: f64 = 1e-2;

/// Slack on the feasibility bound `|y| ≤ t^ν/ν!`.
const FEASIBILITY_SLACK: f64 = 1e-12;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `Q^{⊗ν} t^ν / ν!`, the image of the mean path.
pub fn zero_cost_target(q: &[f64], level: usize, t: f64) -> LevelTensor {
    LevelTensor::power(q, level).scale(t.powi(level as i32) / factorial(level))
}

/// `Σ Λ*(slope)·duration`, infinite if any slope leaves the domain.
pub fn path_rate(path: &PiecewisePath, ct: &CramerTransform) -> Result<f64> {
    if path.dim() != ct.dim() {
        return Err(Error::DimMismatch {
            left: ct.dim(),
            right: path.dim(),
        });
    }
    let mut total = 0.0;
    for (i, slope) in path.slopes().iter().enumerate() {
        let v = ct.value(slope)?;
        if !v.is_finite() {
            return Ok(f64::INFINITY);
        }
        total += v * path.duration(i);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateTarget {
    /// Match the top level at time `T`.
    Endpoint { y: LevelTensor },
    /// Match the top level at each listed time; times must lie on the grid.
    Path { times: Vec<f64>, values: Vec<LevelTensor> },
}

fn default_grid() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProblem {
    pub model: StepLawModel,
    /// Signature level `ν`.
    pub level: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub target: RateTarget,
    /// Number of slope segments `m`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub seed: u64,
    #[serde(default)]
    pub settings: SolverSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub value: f64,
    pub profile: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    pub starts: usize,
    pub converged: usize,
    /// Final value of each start, in start order.
    pub values: Vec<f64>,
    /// Spread of values over converged starts.
    pub dispersion: f64,
    /// Distinct converged profiles, best first.
    pub minima: Vec<LocalMinimum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSolution {
    /// `Σ Λ*(v_i)·T/m` of `profile`; an upper bound only when not converged.
    pub value: f64,
    /// Slopes `v_1..v_m`.
    pub profile: Vec<Vec<f64>>,
    /// Sup-norm constraint residual (distance to the ball for envelopes).
    pub residual: f64,
    pub stationarity: f64,
    pub converged: bool,
    /// Some Legendre evaluation hit the tilt cap.
    pub capped: bool,
    pub outer_iterations: usize,
    /// Ball radius for envelope solutions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub multistart: MultistartReport,
}

impl RateSolution {
    pub fn path(&self, horizon: f64) -> Result<PiecewisePath> {
        profile_path(&self.profile, horizon)
    }

    /// Distinct minima whose value is within `rel_tol` of the best.
    pub fn near_optimal(&self, rel_tol: f64) -> Vec<&LocalMinimum> {
        let best = self.value;
        self.multistart
            .minima
            .iter()
            .filter(|m| m.value <= best + rel_tol * best.abs().max(1e-12))
            .collect()
    }
}

/// The piecewise-linear path with the given slopes on a uniform grid.
pub fn profile_path(profile: &[Vec<f64>], horizon: f64) -> Result<PiecewisePath> {
    let m = profile.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty profile".into()));
    }
    let dim = profile[0].len();
    let knots = (0..=m).map(|i| horizon * i as f64 / m as f64).collect();
    PiecewisePath::from_knots_and_slopes(dim, knots, profile.to_vec())
}

impl RateProblem {
    pub fn endpoint(model: StepLawModel, level: usize, horizon: f64, y: LevelTensor, grid: usize, seed: u64) -> Self {
        Self {
            model,
            level,
            horizon,
            target: RateTarget::Endpoint { y },
            grid,
            seed,
            settings: SolverSettings::default(),
        }
    }

    fn grid_dt(&self) -> f64 {
        self.horizon / self.grid as f64
    }

    fn constraint_map(&self) -> Result<ConstraintMap> {
        let d = self.model.dim();
        if self.level == 0 {
            return Err(Error::InvalidArgument("level must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.grid == 0 || self.settings.multistart == 0 {
            return Err(Error::InvalidArgument("grid and multistart must be positive".into()));
        }
        let (times, tensors): (Vec<f64>, Vec<&LevelTensor>) = match &self.target {
            RateTarget::Endpoint { y } => (vec![self.horizon], vec![y]),
            RateTarget::Path { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidArgument("path target needs one tensor per time".into()));
                }
                (times.clone(), values.iter().collect())
            }
        };
        let mut targets = Vec::with_capacity(times.len());
        let mut values = Vec::new();
        for (t, y) in times.iter().zip(&tensors) {
            if y.dim() != d || y.level() != self.level {
                return Err(Error::ShapeMismatch {
                    expected_dim: d,
                    expected_level: self.level,
                    dim: y.dim(),
                    level: y.level(),
                });
            }
            let idx = t / self.grid_dt();
            let j = idx.round();
            if !(j >= 1.0 && j <= self.grid as f64 && (idx - j).abs() <= 1e-9) {
                return Err(Error::InvalidArgument(format!("target time {t} is not a point of the solver grid")));
            }
            let j = j as usize;
            if targets.last().is_some_and(|&last| j <= last) {
                return Err(Error::InvalidArgument("target times must increase".into()));
            }
            let bound = t.powi(self.level as i32) / factorial(self.level);
            let norm = y.sup_norm();
            if norm > bound + FEASIBILITY_SLACK {
                return Err(Error::Infeasible(format!(
                    "target sup norm {norm} exceeds t^nu/nu! = {bound} at t = {t}"
                )));
            }
            targets.push(j);
            values.extend_from_slice(y.data());
        }
        Ok(ConstraintMap {
            dim: d,
            depth: self.level,
            segments: self.grid,
            dt: self.grid_dt(),
            targets,
            values,
        })
    }
}

struct ProfileProgram<'a> {
    ct: &'a CramerTransform,
    map: ConstraintMap,
    /// Ball radius when the constraint is relaxed by slack variables.
    delta: Option<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> ProfileProgram<'a> {
    fn new(ct: &'a CramerTransform, map: ConstraintMap, delta: Option<f64>) -> Self {
        let (blo, bhi) = ct.slope_box();
        let mut lo: Vec<f64> = (0..map.segments).flat_map(|_| blo.iter().copied()).collect();
        let mut hi: Vec<f64> = (0..map.segments).flat_map(|_| bhi.iter().copied()).collect();
        if let Some(delta) = delta {
            lo.extend(std::iter::repeat_n(-delta, map.len()));
            hi.extend(std::iter::repeat_n(delta, map.len()));
        }
        Self { ct, map, delta, lo, hi }
    }

    fn nv(&self) -> usize {
        self.map.vars()
    }

    fn profile(&self, z: &[f64]) -> Vec<Vec<f64>> {
        z[..self.nv()].chunks(self.map.dim).map(|c| c.to_vec()).collect()
    }

    fn capped(&self, z: &[f64]) -> bool {
        z[..self.nv()]
            .chunks(self.map.dim)
            .any(|v| self.ct.legendre(v).map(|l| l.capped).unwrap_or(false))
    }

    fn start(&self, k: usize, seed: u64) -> Vec<f64> {
        let q = self.ct.model().mean_vector().q;
        let mut z: Vec<f64> = if k == 0 {
            (0..self.map.segments).flat_map(|_| q.iter().copied()).collect()
        } else {
            let mut r = rng::stream(rng::derive_seed(seed, k as u64));
            self.lo[..self.nv()]
                .iter()
                .zip(&self.hi[..self.nv()])
                .map(|(l, h)| if h > l { r.gen_range(*l..=*h) } else { *l })
                .collect()
        };
        if let Some(delta) = self.delta {
            let mut c = vec![0.0; self.map.len()];
            self.map.eval(&z, &mut c);
            z.extend(c.iter().map(|v| v.clamp(-delta, delta)));
        }
        z
    }
}

impl Program for ProfileProgram<'_> {
    fn vars(&self) -> usize {
        self.lo.len()
    }

    fn constraints(&self) -> usize {
        self.map.len()
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    fn objective(&self, z: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let d = self.map.dim;
        let dt = self.map.dt;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut total = 0.0;
        for (i, v) in z[..self.nv()].chunks(d).enumerate() {
            let l = match self.ct.legendre(v) {
                Ok(l) if l.value.is_finite() => l,
                _ => return f64::INFINITY,
            };
            total += l.value * dt;
            if let Some(g) = grad.as_deref_mut() {
                for (gi, li) in g[i * d..(i + 1) * d].iter_mut().zip(&l.lambda) {
                    *gi = li * dt;
                }
            }
        }
        total
    }

    fn residual(&self, z: &[f64], h: &mut [f64]) {
        self.map.eval(&z[..self.nv()], h);
        if self.delta.is_some() {
            for (hi, s) in h.iter_mut().zip(&z[self.nv()..]) {
                *hi -= s;
            }
        }
    }

    fn residual_jacobian(&self, z: &[f64], h: &mut [f64], jac: &mut [f64]) {
        let nv = self.nv();
        let nz = self.vars();
        let nc = self.map.len();
        if self.delta.is_none() {
            self.map.eval_jacobian(z, h, jac);
            return;
        }
        let mut jv = vec![0.0; nc * nv];
        self.map.eval_jacobian(&z[..nv], h, &mut jv);
        jac.fill(0.0);
        for r in 0..nc {
            jac[r * nz..r * nz + nv].copy_from_slice(&jv[r * nv..(r + 1) * nv]);
            jac[r * nz + nv + r] = -1.0;
            h[r] -= z[nv + r];
        }
    }
}

fn lexicographic(a: &[Vec<f64>], b: &[Vec<f64>]) -> std::cmp::Ordering {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn profile_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

struct StartResult {
    value: f64,
    profile: Vec<Vec<f64>>,
    residual: f64,
    stationarity: f64,
    converged: bool,
    capped: bool,
    outer: usize,
}

fn solve(problem: &RateProblem, delta: Option<f64>) -> Result<RateSolution> {
    let map = problem.constraint_map()?;
    let ct = CramerTransform::new(problem.model.clone())?;
    let program = ProfileProgram::new(&ct, map, delta);
    let settings = problem.settings;
    let k = settings.multistart;
    let results: Vec<StartResult> = (0..k)
        .into_par_iter()
        .map(|i| {
            let out = augmented_lagrangian(&program, program.start(i, problem.seed), &settings);
            StartResult {
                value: program.objective(&out.z, None),
                profile: program.profile(&out.z),
                residual: out.residual,
                stationarity: out.stationarity,
                converged: out.converged && out.residual.is_finite(),
                capped: program.capped(&out.z),
                outer: out.outer_iterations,
            }
        })
        .collect();
    let values: Vec<f64> = results.iter().map(|r| r.value).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&results[a], &results[b]);
        rb.converged
            .cmp(&ra.converged)
            .then_with(|| {
                if ra.converged {
                    ra.value.total_cmp(&rb.value)
                } else {
                    ra.residual.total_cmp(&rb.residual).then(ra.value.total_cmp(&rb.value))
                }
            })
            .then_with(|| lexicographic(&ra.profile, &rb.profile))
    });
    let converged: Vec<&StartResult> = order.iter().map(|&i| &results[i]).filter(|r| r.converged).collect();
    let dispersion = match (converged.first(), converged.last()) {
        (Some(a), Some(b)) => b.value - a.value,
        _ => 0.0,
    };
    let mut minima: Vec<LocalMinimum> = Vec::new();
    for r in &converged {
        if minima.iter().all(|m| profile_distance(&m.profile, &r.profile) > MINIMUM_SEPARATION) {
            minima.push(LocalMinimum {
                value: r.value,
                profile: r.profile.clone(),
            });
        }
    }
    let best = &results[order[0]];
    Ok(RateSolution {
        value: best.value,
        profile: best.profile.clone(),
        residual: best.residual,
        stationarity: best.stationarity,
        converged: best.converged,
        capped: best.capped,
        outer_iterations: best.outer,
        delta,
        multistart: MultistartReport {
            starts: k,
            converged: converged.len(),
            values,
            dispersion,
            minima,
        },
    })
}

/// `Ĩ(target)`: the cheapest profile whose signature matches the target.
pub fn contraction_rate(problem: &RateProblem) -> Result<RateSolution> {
    solve(problem, None)
}

/// Infimum of the rate over the closed sup-norm `δ`-ball around the target.
pub fn rate_lower_envelope(problem: &RateProblem, delta: f64) -> Result<RateSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {delta}")));
    }
    let map = problem.constraint_map()?;
    let q = problem.model.mean_vector().q;
    let mean_profile: Vec<f64> = (0..problem.grid).flat_map(|_| q.iter().copied()).collect();
    let mut c = vec![0.0; map.len()];
    map.eval(&mean_profile, &mut c);
    let gap = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if gap <= delta {
        let profile = vec![q; problem.grid];
        return Ok(RateSolution {
            value: 0.0,
            profile: profile.clone(),
            residual: 0.0,
            stationarity: 0.0,
            converged: true,
            capped: false,
            outer_iterations: 0,
            delta: Some(delta),
            multistart: MultistartReport {
                starts: 0,
                converged: 0,
                values: vec![],
                dispersion: 0.0,
                minima: vec![LocalMinimum { value: 0.0, profile }],
            },
        });
    }
    solve(problem, Some(delta))
}
