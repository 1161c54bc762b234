use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::processes::{langevin, langevin_prime, log_cosh, log_sinhc, ModelKind, StepLawModel, TILT_CAP};

/// Points within this distance of the support edge are treated as on it.
const EDGE_TOL: f64 = 1e-12;

/// `Λ*(x)` together with the maximizing tilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Legendre {
    /// `+∞` outside the effective domain.
    pub value: f64,
    /// Maximizer of `⟨λ, x⟩ − Λ(λ)`, clamped to `|λ|_∞ ≤ 40`.
    pub lambda: Vec<f64>,
    /// The supremum was not attained within the cap; `value` is a lower bound.
    pub capped: bool,
}

impl Legendre {
    fn infinite(dim: usize) -> Self {
        Self {
            value: f64::INFINITY,
            lambda: vec![0.0; dim],
            capped: false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// One coordinate of a product law, already shifted.
#[derive(Debug, Clone)]
enum Law1 {
    /// `c ± h` with mass ½ each.
    TwoPoint { c: f64, h: f64 },
    /// Uniform on `[c − h, c + h]`.
    Uniform { c: f64, h: f64 },
    Atoms { points: Vec<f64>, probs: Vec<f64> },
}

impl Law1 {
    /// `(Λ, Λ', Λ'')` at `l`.
    fn eval(&self, l: f64) -> (f64, f64, f64) {
        match self {
            Law1::TwoPoint { c, h } => {
                let t = (l * h).tanh();
                (l * c + log_cosh(l * h), c + h * t, h * h * (1.0 - t * t))
            }
            Law1::Uniform { c, h } => (
                l * c + log_sinhc(l * h),
                c + h * langevin(l * h),
                h * h * langevin_prime(l * h),
            ),
            Law1::Atoms { points, probs } => {
                let e: Vec<f64> = points.iter().zip(probs).map(|(x, p)| p.ln() + l * x).collect();
                let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = w.iter().sum();
                let mean = points.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
                let var = points.iter().zip(&w).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / z;
                (m + z.ln(), mean, var)
            }
        }
    }

    /// Support `[lo, hi]` and the masses sitting exactly at each end.
    fn support(&self) -> (f64, f64, f64, f64) {
        match self {
            Law1::TwoPoint { c, h } => (c - h, c + h, 0.5, 0.5),
            Law1::Uniform { c, h } => (c - h, c + h, 0.0, 0.0),
            Law1::Atoms { points, probs } => {
                let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mass = |edge: f64| points.iter().zip(probs).filter(|(x, _)| **x == edge).map(|(_, p)| p).sum();
                (lo, hi, mass(lo), mass(hi))
            }
        }
    }

    fn legendre(&self, x: f64) -> (f64, f64, bool) {
        let (lo, hi, p_lo, p_hi) = self.support();
        if !(x >= lo - EDGE_TOL && x <= hi + EDGE_TOL) {
            return (f64::INFINITY, 0.0, false);
        }
        if hi - lo <= EDGE_TOL {
            return (0.0, 0.0, false);
        }
        if x >= hi {
            return if p_hi > 0.0 { (-p_hi.ln(), TILT_CAP, false) } else { (f64::INFINITY, 0.0, false) };
        }
        if x <= lo {
            return if p_lo > 0.0 { (-p_lo.ln(), -TILT_CAP, false) } else { (f64::INFINITY, 0.0, false) };
        }
        let value_at = |l: f64| l * x - self.eval(l).0;
        let (_, g_hi, _) = self.eval(TILT_CAP);
        if g_hi < x {
            return (value_at(TILT_CAP), TILT_CAP, true);
        }
        let (_, g_lo, _) = self.eval(-TILT_CAP);
        if g_lo > x {
            return (value_at(-TILT_CAP), -TILT_CAP, true);
        }
        // safeguarded Newton on Λ'(λ) = x, Λ' increasing
        let (mut a, mut b) = (-TILT_CAP, TILT_CAP);
        let mut l = 0.0;
        for _ in 0..200 {
            let (_, g, gp) = self.eval(l);
            let r = g - x;
            if r == 0.0 {
                break;
            }
            if r > 0.0 {
                b = l;
            } else {
                a = l;
            }
            let mut next = if gp > 0.0 { l - r / gp } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - l).abs() <= 1e-15 * (1.0 + l.abs()) || b - a <= 1e-15 * (1.0 + l.abs()) {
                l = next;
                break;
            }
            l = next;
        }
        (value_at(l).max(0.0), l, false)
    }
}

#[derive(Debug, Clone)]
enum Structure {
    Product(Vec<Law1>),
    Discrete { points: Vec<Vec<f64>>, probs: Vec<f64> },
}

/// The Cramér transform `Λ*` of an i.i.d. step law.
#[derive(Debug, Clone)]
pub struct CramerTransform {
    model: StepLawModel,
    structure: Structure,
}

impl CramerTransform {
    pub fn new(model: StepLawModel) -> Result<Self> {
        if !model.is_iid() {
            return Err(Error::NotIid(model.kind().name().into()));
        }
        let shift = model.shift().to_vec();
        let structure = match model.kind() {
            ModelKind::IidRademacher => {
                Structure::Product(shift.iter().map(|s| Law1::TwoPoint { c: -s, h: 1.0 }).collect())
            }
            ModelKind::IidUniform { low, high } => Structure::Product(
                shift
                    .iter()
                    .map(|s| Law1::Uniform {
                        c: 0.5 * (low + high) - s,
                        h: 0.5 * (high - low),
                    })
                    .collect(),
            ),
            ModelKind::IidDiscrete { points, probs } => {
                let kept: Vec<(Vec<f64>, f64)> = points
                    .iter()
                    .zip(probs)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(x, &p)| (x.iter().zip(&shift).map(|(v, s)| v - s).collect(), p))
                    .collect();
                if model.dim() == 1 {
                    Structure::Product(vec![Law1::Atoms {
                        points: kept.iter().map(|(x, _)| x[0]).collect(),
                        probs: kept.iter().map(|(_, p)| *p).collect(),
                    }])
                } else {
                    Structure::Discrete {
                        points: kept.iter().map(|(x, _)| x.clone()).collect(),
                        probs: kept.iter().map(|(_, p)| *p).collect(),
                    }
                }
            }
            _ => unreachable!(),
        };
        Ok(Self { model, structure })
    }

    pub fn model(&self) -> &StepLawModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Coordinate-wise support box `(lo, hi)` of the emitted law.
    pub fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.structure {
            Structure::Product(laws) => laws.iter().map(|l| (l.support().0, l.support().1)).unzip(),
            Structure::Discrete { .. } => self.slope_box(),
        }
    }

    /// Box of slopes with finite cost under the tilt cap: the support where
    /// an edge carries an atom, `Λ'(±40)` where it does not.
    pub fn slope_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.structure {
            Structure::Product(laws) => laws
                .iter()
                .map(|l| {
                    let (lo, hi, p_lo, p_hi) = l.support();
                    let lo = if p_lo > 0.0 { lo } else { l.eval(-TILT_CAP).1 };
                    let hi = if p_hi > 0.0 { hi } else { l.eval(TILT_CAP).1 };
                    (lo, hi)
                })
                .unzip(),
            Structure::Discrete { points, .. } => (0..self.dim())
                .map(|c| {
                    let lo = points.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min);
                    let hi = points.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                })
                .unzip(),
        }
    }

    pub fn log_mgf(&self, lambda: &[f64]) -> Result<f64> {
        self.model.log_mgf(lambda)
    }

    /// `Λ*(x) = sup_λ ⟨λ, x⟩ − Λ(λ)`.
    pub fn legendre(&self, x: &[f64]) -> Result<Legendre> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimMismatch { left: d, right: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("Legendre transform needs a finite point".into()));
        }
        match &self.structure {
            Structure::Product(laws) => {
                let mut out = Legendre {
                    value: 0.0,
                    lambda: vec![0.0; d],
                    capped: false,
                };
                for (a, law) in laws.iter().enumerate() {
                    let (v, l, capped) = law.legendre(x[a]);
                    if !v.is_finite() {
                        return Ok(Legendre::infinite(d));
                    }
                    out.value += v;
                    out.lambda[a] = l;
                    out.capped |= capped;
                }
                Ok(out)
            }
            Structure::Discrete { points, probs } => Ok(discrete_legendre(points, probs, x)),
        }
    }

    /// `Λ*(x)` alone.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.legendre(x)?.value)
    }
}

fn discrete_eval(points: &[Vec<f64>], probs: &[f64], l: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
    let d = l.len();
    let e: Vec<f64> = points
        .iter()
        .zip(probs)
        .map(|(x, p)| p.ln() + x.iter().zip(l).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean: Vec<f64> = (0..d)
        .map(|c| points.iter().zip(&w).map(|(x, w)| x[c] * w).sum::<f64>() / z)
        .collect();
    let mut cov = DMatrix::zeros(d, d);
    for (x, wi) in points.iter().zip(&w) {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += wi / z * (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    (m + z.ln(), mean, cov)
}

/// Projected damped Newton ascent on `⟨λ, x⟩ − Λ(λ)` over `|λ|_∞ ≤ cap`.
fn discrete_legendre(points: &[Vec<f64>], probs: &[f64], x: &[f64]) -> Legendre {
    let d = x.len();
    for c in 0..d {
        let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
        if !(x[c] >= lo - EDGE_TOL && x[c] <= hi + EDGE_TOL) {
            return Legendre::infinite(d);
        }
    }
    let objective = |l: &[f64]| -> f64 { l.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - discrete_eval(points, probs, l).0 };
    let mut l = vec![0.0; d];
    let mut converged = false;
    for _ in 0..500 {
        let (lm, mean, cov) = discrete_eval(points, probs, &l);
        let f = l.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - lm;
        let grad: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
        // gradient components pushing into an active cap do not count
        let active = |c: usize| (l[c] >= TILT_CAP && grad[c] > 0.0) || (l[c] <= -TILT_CAP && grad[c] < 0.0);
        let free_norm = (0..d).filter(|&c| !active(c)).map(|c| grad[c].abs()).fold(0.0, f64::max);
        if free_norm <= 1e-13 {
            converged = true;
            break;
        }
        let reg = 1e-12 * (1.0 + cov.diagonal().amax());
        let h = &cov + DMatrix::identity(d, d) * reg;
        let g = DVector::from_column_slice(&grad);
        let dir: Vec<f64> = match h.cholesky() {
            Some(ch) => ch.solve(&g).iter().copied().collect(),
            None => grad.clone(),
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = l
                .iter()
                .zip(&dir)
                .map(|(a, s)| (a + step * s).clamp(-TILT_CAP, TILT_CAP))
                .collect();
            let ft = objective(&trial);
            if ft > f {
                l = trial;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            converged = true;
            break;
        }
    }
    let at_cap = l.iter().any(|v| v.abs() >= TILT_CAP);
    Legendre {
        value: objective(&l).max(0.0),
        lambda: l,
        capped: at_cap || !converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn rademacher(dim: usize) -> CramerTransform {
        CramerTransform::new(StepLawModel::new(ModelKind::IidRademacher, dim, false).unwrap()).unwrap()
    }

    fn binary_entropy_rate(x: f64) -> f64 {
        let a = (1.0 + x) / 2.0;
        let b = (1.0 - x) / 2.0;
        let term = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * q.ln() };
        term(a, 1.0 + x) + term(b, 1.0 - x)
    }

    #[test]
    fn vanishes_at_mean() {
        let ct = rademacher(2);
        assert_eq!(ct.value(&[0.0, 0.0]).unwrap(), 0.0);
        let u = CramerTransform::new(
            StepLawModel::new(ModelKind::IidUniform { low: -0.4, high: 1.0 }, 1, false).unwrap(),
        )
        .unwrap();
        assert!(u.value(&[0.3]).unwrap() < 1e-15);
        assert!(u.value(&[0.31]).unwrap() > 0.0);
    }

    #[test]
    fn rademacher_binary_entropy_oracle() {
        let ct = rademacher(1);
        let v = ct.value(&[0.5]).unwrap();
        assert!((v - 0.130_812_035_941_137_3).abs() < 1e-12, "{v}");
        for x in [-0.99, -0.5, -0.1, 1e-4, 0.3, 0.9, 0.999_999] {
            let v = ct.value(&[x]).unwrap();
            assert!((v - binary_entropy_rate(x)).abs() < 1e-11 * (1.0 + v), "{x}: {v}");
        }
        // grid-search lower bound
        let grid = (0..=80_000)
            .map(|i| -40.0 + i as f64 * 1e-3)
            .map(|l| l * 0.5 - log_cosh(l))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((grid - v).abs() < 1e-6);
    }

    #[test]
    fn atom_boundary_is_exact_limit() {
        let ct = rademacher(1);
        let one = ct.legendre(&[1.0]).unwrap();
        assert!((one.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(!one.capped);
        assert!((ct.value(&[-1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(ct.value(&[1.0 + 1e-6]).unwrap().is_infinite());
        let two = rademacher(2);
        assert!((two.value(&[1.0, -1.0]).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn uniform_boundary_is_infinite_and_cap_is_flagged() {
        let u = CramerTransform::new(
            StepLawModel::new(ModelKind::IidUniform { low: -1.0, high: 1.0 }, 1, false).unwrap(),
        )
        .unwrap();
        assert!(u.value(&[1.0]).unwrap().is_infinite());
        let near = u.legendre(&[0.999]).unwrap();
        assert!(near.capped);
        assert!(near.value.is_finite());
        let inner = u.legendre(&[0.9]).unwrap();
        assert!(!inner.capped);
        assert!((inner.lambda[0] - 10.0).abs() < 0.1);
    }

    #[test]
    fn discrete_one_dim_matches_closed_form() {
        // two-point law {−1, 1} with P(1) = 0.3
        let m = StepLawModel::new(
            ModelKind::IidDiscrete {
                points: vec![vec![-1.0], vec![1.0]],
                probs: vec![0.7, 0.3],
            },
            1,
            false,
        )
        .unwrap();
        let ct = CramerTransform::new(m).unwrap();
        for x in [-0.8, -0.4, 0.0, 0.5, 0.95] {
            let a: f64 = (1.0 + x) / 2.0;
            let expected = a * (a / 0.3).ln() + (1.0 - a) * ((1.0 - a) / 0.7).ln();
            assert!((ct.value(&[x]).unwrap() - expected).abs() < 1e-12);
        }
        assert!((ct.value(&[1.0]).unwrap() + 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn discrete_multi_dim_is_product_when_law_is() {
        // product of two Rademacher coordinates as a four-point law
        let pts = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let m = StepLawModel::new(
            ModelKind::IidDiscrete {
                points: pts,
                probs: vec![0.25; 4],
            },
            2,
            false,
        )
        .unwrap();
        let ct = CramerTransform::new(m).unwrap();
        let prod = rademacher(2);
        for x in [[0.2, -0.4], [0.0, 0.7], [-0.9, 0.9]] {
            let a = ct.legendre(&x).unwrap();
            assert!(!a.capped);
            assert!((a.value - prod.value(&x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn weak_duality() {
        let laws = [
            rademacher(2),
            CramerTransform::new(StepLawModel::new(ModelKind::IidUniform { low: -0.5, high: 1.0 }, 2, true).unwrap())
                .unwrap(),
        ];
        let mut r = rng::stream(3);
        for ct in &laws {
            let (lo, hi) = ct.support_box();
            for _ in 0..200 {
                let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| r.gen_range(a + 1e-3..b - 1e-3)).collect();
                let star = ct.value(&x).unwrap();
                for _ in 0..20 {
                    let l: Vec<f64> = (0..2).map(|_| r.gen_range(-20.0..20.0)).collect();
                    let dual = l.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - ct.log_mgf(&l).unwrap();
                    assert!(star >= dual - 1e-10);
                }
            }
        }
    }

    #[test]
    fn convex_on_sampled_midpoints() {
        let ct = CramerTransform::new(
            StepLawModel::new(
                ModelKind::IidDiscrete {
                    points: vec![vec![-1.0], vec![0.2], vec![0.9]],
                    probs: vec![0.3, 0.5, 0.2],
                },
                1,
                false,
            )
            .unwrap(),
        )
        .unwrap();
        let mut r = rng::stream(4);
        for _ in 0..500 {
            let a: f64 = r.gen_range(-0.99..0.89);
            let b: f64 = r.gen_range(-0.99..0.89);
            let mid = ct.value(&[0.5 * (a + b)]).unwrap();
            let avg = 0.5 * (ct.value(&[a]).unwrap() + ct.value(&[b]).unwrap());
            assert!(mid <= avg + 1e-12);
        }
    }

    #[test]
    fn tilt_solves_gradient_equation() {
        let m = StepLawModel::new(ModelKind::IidUniform { low: -0.7, high: 0.9 }, 1, false).unwrap();
        let ct = CramerTransform::new(m.clone()).unwrap();
        for x in [-0.6, -0.1, 0.1, 0.5, 0.85] {
            let l = ct.legendre(&[x]).unwrap().lambda;
            assert!((m.grad_log_mgf(&l).unwrap()[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_iid() {
        let rot = StepLawModel::new(
            ModelKind::Rotation {
                alpha: 0.3,
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
        assert!(matches!(CramerTransform::new(rot), Err(Error::NotIid(_))));
    }
}
