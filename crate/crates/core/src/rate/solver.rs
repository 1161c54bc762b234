//! Augmented-Lagrangian outer loop around a projected L-BFGS inner solver
//! for `min f(z)` subject to `h(z) = 0`, `lo ≤ z ≤ hi`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Number of starting profiles.
    pub multistart: usize,
    /// Sup-norm bound on the constraint residual.
    pub residual_tol: f64,
    /// Sup-norm bound on the projected gradient of the Lagrangian.
    pub stationarity_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            multistart: 16,
            residual_tol: 1e-6,
            stationarity_tol: 1e-8,
            max_outer: 50,
            max_inner: 2000,
            memory: 10,
        }
    }
}

const RHO_START: f64 = 10.0;
const RHO_MAX: f64 = 1e8;
const ARMIJO: f64 = 1e-4;
/// Residual reduction sought beyond the tolerance before stopping.
const POLISH: f64 = 1e-4;

/// A smooth objective with equality constraints.
pub(crate) trait Program {
    fn vars(&self) -> usize;
    fn constraints(&self) -> usize;
    fn bounds(&self) -> (&[f64], &[f64]);
    /// `f(z)`, writing `∇f` when requested; `+∞` outside the domain.
    fn objective(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64;
    fn residual(&self, z: &[f64], h: &mut [f64]);
    /// Residual and its Jacobian, row-major.
    fn residual_jacobian(&self, z: &[f64], h: &mut [f64], jac: &mut [f64]);
}

fn project(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), u) in z.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *u);
    }
}

/// `|z − P(z − g)|_∞`.
pub(crate) fn projected_gradient_norm(z: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((x, gi), (l, u))| (x - (x - gi).clamp(*l, *u)).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct InnerReport {
    pub iterations: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    pub pg_norm: f64,
}

/// Minimizes a bound-constrained smooth function from `x`, in place.
pub(crate) fn projected_lbfgs<F>(mut f: F, x: &mut [f64], lo: &[f64], hi: &[f64], memory: usize, tol: f64, max_iter: usize) -> InnerReport
where
    F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
{
    let n = x.len();
    project(x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(x, Some(&mut g));
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(x, &g, lo, hi);
    while iterations < max_iter && pg > tol {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let masked = |v: &[f64]| -> Vec<f64> { v.iter().zip(&free).map(|(a, &m)| if m { *a } else { 0.0 }).collect() };
        let mut accepted = false;
        for use_memory in [true, false] {
            if !use_memory && pairs.is_empty() {
                break;
            }
            let dir: Vec<f64> = if use_memory && !pairs.is_empty() {
                // two-loop recursion on the free coordinates
                let mut q = masked(&g);
                let mut alphas = Vec::with_capacity(pairs.len());
                for (s, y, rho) in pairs.iter().rev() {
                    let a = rho * dot(&masked(s), &q);
                    for (qi, yi) in q.iter_mut().zip(&masked(y)) {
                        *qi -= a * yi;
                    }
                    alphas.push(a);
                }
                let (s, y, _) = pairs.back().expect("non-empty");
                let gamma = dot(s, y) / dot(y, y);
                q.iter_mut().for_each(|v| *v *= gamma);
                for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
                    let b = rho * dot(&masked(y), &q);
                    for (qi, si) in q.iter_mut().zip(&masked(s)) {
                        *qi += (a - b) * si;
                    }
                }
                let d: Vec<f64> = masked(&q).iter().map(|v| -v).collect();
                if dot(&d, &g) < 0.0 {
                    d
                } else {
                    masked(&g).iter().map(|v| -v).collect()
                }
            } else {
                let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
                let scale = if pairs.is_empty() { (1.0 / gmax).min(1.0) } else { 1.0 };
                masked(&g).iter().map(|v| -v * scale).collect()
            };
            let mut step = 1.0;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = (x[i] + step * dir[i]).clamp(lo[i], hi[i]);
                }
                let moved: f64 = trial.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if moved == 0.0 {
                    break;
                }
                let decrease: f64 = g.iter().zip(trial.iter().zip(x.iter())).map(|(gi, (t, xi))| gi * (t - xi)).sum();
                let ft = f(&trial, None);
                if ft.is_finite() && ft <= fx + ARMIJO * decrease {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                break;
            }
            pairs.clear();
        }
        if !accepted {
            break;
        }
        let ft = f(&trial, Some(&mut g_trial));
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        fx = ft;
        pg = projected_gradient_norm(x, &g, lo, hi);
    }
    InnerReport { iterations, pg_norm: pg }
}

#[derive(Debug, Clone)]
pub(crate) struct AlOutcome {
    pub z: Vec<f64>,
    pub residual: f64,
    pub stationarity: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

pub(crate) fn augmented_lagrangian<P: Program>(p: &P, z0: Vec<f64>, settings: &SolverSettings) -> AlOutcome {
    let nz = p.vars();
    let nc = p.constraints();
    let (lo, hi) = p.bounds();
    let mut z = z0;
    let mut mu = vec![0.0; nc];
    let mut rho = RHO_START;
    let mut prev_residual = f64::INFINITY;
    let mut h = vec![0.0; nc];
    let mut outcome = AlOutcome {
        z: z.clone(),
        residual: f64::INFINITY,
        stationarity: f64::INFINITY,
        outer_iterations: 0,
        inner_iterations: 0,
        converged: false,
    };
    for outer in 1..=settings.max_outer {
        let mut hbuf = vec![0.0; nc];
        let mut jac = vec![0.0; nc * nz];
        let lagrangian = |x: &[f64], grad: Option<&mut [f64]>| -> f64 {
            match grad {
                None => {
                    let fv = p.objective(x, None);
                    p.residual(x, &mut hbuf);
                    fv + hbuf.iter().zip(&mu).map(|(hi, m)| m * hi + 0.5 * rho * hi * hi).sum::<f64>()
                }
                Some(g) => {
                    let fv = p.objective(x, Some(g));
                    p.residual_jacobian(x, &mut hbuf, &mut jac);
                    for r in 0..nc {
                        let w = mu[r] + rho * hbuf[r];
                        if w != 0.0 {
                            for (gi, ji) in g.iter_mut().zip(&jac[r * nz..(r + 1) * nz]) {
                                *gi += w * ji;
                            }
                        }
                    }
                    fv + hbuf.iter().zip(&mu).map(|(hi, m)| m * hi + 0.5 * rho * hi * hi).sum::<f64>()
                }
            }
        };
        let inner_tol = 0.1 * settings.stationarity_tol;
        let report = projected_lbfgs(lagrangian, &mut z, lo, hi, settings.memory, inner_tol, settings.max_inner);
        outcome.inner_iterations += report.iterations;
        p.residual(&z, &mut h);
        let residual = h.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (m, hi) in mu.iter_mut().zip(&h) {
            *m += rho * hi;
        }
        // gradient of the Lagrangian with the updated multipliers
        let mut g = vec![0.0; nz];
        p.objective(&z, Some(&mut g));
        let mut jac = vec![0.0; nc * nz];
        p.residual_jacobian(&z, &mut h, &mut jac);
        for r in 0..nc {
            for (gi, ji) in g.iter_mut().zip(&jac[r * nz..(r + 1) * nz]) {
                *gi += mu[r] * ji;
            }
        }
        let stationarity = projected_gradient_norm(&z, &g, lo, hi);
        let ok = residual <= settings.residual_tol && stationarity <= settings.stationarity_tol;
        if ok {
            // once within tolerance, keep tightening while the residual still
            // drops, reporting the best iterate
            if !outcome.converged || residual < outcome.residual {
                outcome.z.copy_from_slice(&z);
                outcome.residual = residual;
                outcome.stationarity = stationarity;
                outcome.outer_iterations = outer;
            }
            let stalled = outcome.converged && residual > 0.5 * prev_residual;
            outcome.converged = true;
            if stalled || residual <= POLISH * settings.residual_tol {
                break;
            }
        } else if !outcome.converged {
            outcome.z.copy_from_slice(&z);
            outcome.residual = residual;
            outcome.stationarity = stationarity;
            outcome.outer_iterations = outer;
        } else {
            break;
        }
        if residual > 0.25 * prev_residual {
            rho = (rho * 10.0).min(RHO_MAX);
        }
        prev_residual = residual;
    }
    outcome
}
