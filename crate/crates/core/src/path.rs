//! Lipschitz-1 paths on `[0, T]` starting at the origin, stored as piecewise
//! linear interpolants, and bounded sampled sequences.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Slack on the Lipschitz-1 check absorbing floating-point slope rounding.
pub const TOL_LIP: f64 = 1e-9;

/// Knots closer than this (relative to the horizon) are merged when taking
/// knot unions.
const KNOT_MERGE_REL: f64 = 1e-13;

/// Upper limit on knots created by perturbation generators.
const MAX_GENERATED_KNOTS: usize = 2_000_000;

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// A path in H: piecewise linear between strictly increasing knots
/// `0 = t_0 < … < t_m = T`, value 0 at time 0, every segment slope bounded by
/// 1 in the sup norm (up to [`TOL_LIP`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath")]
pub struct PiecewisePath {
    dim: usize,
    #[serde(rename = "T")]
    horizon: f64,
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
    #[serde(skip)]
    slopes: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawPath {
    dim: usize,
    #[serde(rename = "T")]
    horizon: f64,
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawPath> for PiecewisePath {
    type Error = Error;

    fn try_from(raw: RawPath) -> Result<Self> {
        let path = PiecewisePath::new(raw.dim, raw.knots, raw.values)?;
        if (path.horizon - raw.horizon).abs() > 1e-12 * raw.horizon.abs().max(1.0) {
            return Err(Error::InvalidPath(format!(
                "declared horizon {} differs from last knot {}",
                raw.horizon, path.horizon
            )));
        }
        Ok(path)
    }
}

impl PiecewisePath {
    /// Builds a path from knot values, deriving segment slopes by differences.
    pub fn new(dim: usize, knots: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if knots.len() < 2 {
            return Err(Error::InvalidPath("need at least two knots".into()));
        }
        if values.len() != knots.len() {
            return Err(Error::InvalidPath(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidPath(format!("every value must have {dim} coordinates")));
        }
        let slopes = knots
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| {
                let dt = t[1] - t[0];
                v[1].iter().zip(&v[0]).map(|(b, a)| (b - a) / dt).collect()
            })
            .collect();
        let path = Self {
            dim,
            horizon: *knots.last().unwrap(),
            knots,
            values,
            slopes,
        };
        path.validate()?;
        Ok(path)
    }

    /// Builds a path from segment durations and slopes; values are the
    /// cumulative sums. Stored slopes are exactly the given ones.
    pub fn from_slopes(dim: usize, durations: &[f64], slopes: Vec<Vec<f64>>) -> Result<Self> {
        if durations.is_empty() || durations.len() != slopes.len() {
            return Err(Error::InvalidPath(format!(
                "{} durations for {} slopes",
                durations.len(),
                slopes.len()
            )));
        }
        let mut knots = Vec::with_capacity(durations.len() + 1);
        knots.push(0.0);
        for &dt in durations {
            knots.push(knots.last().unwrap() + dt);
        }
        Self::from_knots_and_slopes(dim, knots, slopes)
    }

    /// Builds a path from explicit knots and per-segment slopes.
    pub fn from_knots_and_slopes(dim: usize, knots: Vec<f64>, slopes: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be positive".into()));
        }
        if knots.len() < 2 || slopes.len() + 1 != knots.len() {
            return Err(Error::InvalidPath(format!(
                "{} knots for {} slopes",
                knots.len(),
                slopes.len()
            )));
        }
        if slopes.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidPath(format!("every slope must have {dim} coordinates")));
        }
        let mut values = Vec::with_capacity(knots.len());
        values.push(vec![0.0; dim]);
        for (i, v) in slopes.iter().enumerate() {
            let dt = knots[i + 1] - knots[i];
            let next = values[i].iter().zip(v).map(|(a, s)| a + s * dt).collect();
            values.push(next);
        }
        let path = Self {
            dim,
            horizon: *knots.last().unwrap(),
            knots,
            values,
            slopes,
        };
        path.validate()?;
        Ok(path)
    }

    /// `t ↦ t·q` on `[0, horizon]`, one segment.
    pub fn straight_line(q: &[f64], horizon: f64) -> Result<Self> {
        Self::from_slopes(q.len(), &[horizon], vec![q.to_vec()])
    }

    pub fn zero(dim: usize, horizon: f64) -> Result<Self> {
        Self::straight_line(&vec![0.0; dim], horizon)
    }

    fn validate(&self) -> Result<()> {
        if self.knots[0] != 0.0 {
            return Err(Error::InvalidPath(format!("first knot must be 0, got {}", self.knots[0])));
        }
        if self.values[0].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidPath("path must start at the origin".into()));
        }
        if self.knots.iter().chain(self.values.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite knot or value".into()));
        }
        for (i, w) in self.knots.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::InvalidPath(format!(
                    "knots must be strictly increasing (segment {i}: {} -> {})",
                    w[0], w[1]
                )));
            }
        }
        for (i, s) in self.slopes.iter().enumerate() {
            let norm = sup_abs(s);
            if norm > 1.0 + TOL_LIP {
                return Err(Error::InvalidPath(format!(
                    "segment {i} has slope norm {norm} > 1"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn slopes(&self) -> &[Vec<f64>] {
        &self.slopes
    }

    pub fn segment_count(&self) -> usize {
        self.slopes.len()
    }

    pub fn duration(&self, segment: usize) -> f64 {
        self.knots[segment + 1] - self.knots[segment]
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.slopes.iter().fold(0.0_f64, |m, s| m.max(sup_abs(s)))
    }

    /// Index of the segment containing `t` (the last one for `t = T`).
    pub fn segment_of(&self, t: f64) -> usize {
        let idx = self.knots.partition_point(|&k| k <= t);
        idx.saturating_sub(1).min(self.segment_count() - 1)
    }

    /// Value at time `t`, clamped to `[0, T]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(0.0, self.horizon);
        let seg = self.segment_of(t);
        let dt = t - self.knots[seg];
        self.values[seg]
            .iter()
            .zip(&self.slopes[seg])
            .map(|(v, s)| v + s * dt)
            .collect()
    }

    /// The same path on `[0, t]`.
    pub fn restrict(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= self.horizon * (1.0 + 1e-15)) {
            return Err(Error::InvalidArgument(format!(
                "restriction time {t} outside (0, {}]",
                self.horizon
            )));
        }
        let t = t.min(self.horizon);
        let seg = self.segment_of(t);
        let (knots, slopes) = if seg > 0 && t - self.knots[seg] <= KNOT_MERGE_REL * self.horizon {
            // t coincides with knot `seg` up to roundoff
            let mut knots = self.knots[..=seg].to_vec();
            knots[seg] = t;
            (knots, self.slopes[..seg].to_vec())
        } else {
            let mut knots = self.knots[..=seg].to_vec();
            knots.push(t);
            (knots, self.slopes[..=seg].to_vec())
        };
        Self::from_knots_and_slopes(self.dim, knots, slopes)
    }

    /// The same path with knots at every point of `grid` inside `(0, T)` added.
    pub fn refine(&self, grid: &[f64]) -> Result<Self> {
        let knots = merge_knots(&[&self.knots, grid], self.horizon);
        let slopes = knots[..knots.len() - 1]
            .iter()
            .zip(&knots[1..])
            .map(|(&a, &b)| self.slopes[self.segment_of(0.5 * (a + b))].clone())
            .collect();
        Self::from_knots_and_slopes(self.dim, knots, slopes)
    }

    /// Uniform subdivision of every segment into `factor` pieces.
    pub fn subdivide(&self, factor: usize) -> Result<Self> {
        let factor = factor.max(1);
        let mut knots = Vec::with_capacity(self.segment_count() * factor + 1);
        let mut slopes = Vec::with_capacity(self.segment_count() * factor);
        knots.push(0.0);
        for seg in 0..self.segment_count() {
            let (a, b) = (self.knots[seg], self.knots[seg + 1]);
            for j in 1..=factor {
                let t = if j == factor { b } else { a + (b - a) * j as f64 / factor as f64 };
                knots.push(t);
                slopes.push(self.slopes[seg].clone());
            }
        }
        Self::from_knots_and_slopes(self.dim, knots, slopes)
    }
}

/// Sorted union of knot sets restricted to `[0, horizon]`, merging points
/// closer than a tiny multiple of the horizon.
pub fn merge_knots(sets: &[&[f64]], horizon: f64) -> Vec<f64> {
    let mut all: Vec<f64> = sets
        .iter()
        .flat_map(|s| s.iter().copied())
        .filter(|&t| t > 0.0 && t < horizon)
        .collect();
    all.sort_by(f64::total_cmp);
    let merge = KNOT_MERGE_REL * horizon.max(1.0);
    let mut out = Vec::with_capacity(all.len() + 2);
    out.push(0.0);
    for t in all {
        if t - out.last().unwrap() > merge {
            out.push(t);
        }
    }
    if horizon - out.last().unwrap() <= merge && out.len() > 1 {
        out.pop();
    }
    out.push(horizon);
    out
}

fn check_compatible(a: &PiecewisePath, b: &PiecewisePath) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    if (a.horizon - b.horizon).abs() > 1e-12 * a.horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon mismatch: {} vs {}",
            a.horizon, b.horizon
        )));
    }
    Ok(())
}

/// `sup_{t ∈ [0,T]} |a(t) − b(t)|_∞`, evaluated on the union of both knot
/// sets, where the piecewise-linear difference attains its maximum.
pub fn sup_distance(a: &PiecewisePath, b: &PiecewisePath) -> Result<f64> {
    check_compatible(a, b)?;
    let grid = merge_knots(&[&a.knots, &b.knots], a.horizon);
    Ok(grid.iter().fold(0.0_f64, |m, &t| {
        let (va, vb) = (a.eval(t), b.eval(t));
        m.max(va.iter().zip(&vb).fold(0.0_f64, |mm, (x, y)| mm.max((x - y).abs())))
    }))
}

/// How [`perturb_in_h`] builds the companion path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Shrink the base path by `1 − δ` and add a random piecewise-linear
    /// wiggle of slope at most `δ`.
    Random,
    /// Add a triangle wave of period `2ε²` and slope `±½` to a base path
    /// whose slopes are already bounded by `½`; for `d ≥ 2` the coordinates
    /// run a quarter period apart so the wave traces small loops.
    Adversarial,
}

/// Slope budget reserved for the adversarial wave.
pub const ADVERSARIAL_SLOPE: f64 = 0.5;

/// Returns `γ̃ ∈ H` with `sup_distance(γ, γ̃) ≤ ε2`.
pub fn perturb_in_h(path: &PiecewisePath, eps2: f64, seed: u64, mode: PerturbMode) -> Result<PiecewisePath> {
    if !(0.0..=1.0).contains(&eps2) {
        return Err(Error::InvalidArgument(format!("eps2 = {eps2} outside [0, 1]")));
    }
    if eps2 == 0.0 {
        return Ok(path.clone());
    }
    let mut rng = rng::stream(seed);
    let horizon = path.horizon;
    let d = path.dim;
    match mode {
        PerturbMode::Random => {
            let sup_gamma = path.values.iter().fold(0.0_f64, |m, v| m.max(sup_abs(v)));
            let shrink = if sup_gamma > 0.0 {
                (eps2 / (2.0 * sup_gamma)).min(1.0)
            } else {
                1.0
            };
            let amplitude = eps2 / 2.0;
            let pieces = ((horizon * shrink / (2.0 * amplitude)).floor() as usize).clamp(1, MAX_GENERATED_KNOTS);
            let spacing = horizon / pieces as f64;
            let amplitude = amplitude.min(shrink * spacing / 2.0);
            let z_knots: Vec<f64> = (0..=pieces)
                .map(|j| if j == pieces { horizon } else { j as f64 * spacing })
                .collect();
            let z_values: Vec<Vec<f64>> = (0..=pieces)
                .map(|j| {
                    if j == 0 {
                        vec![0.0; d]
                    } else {
                        (0..d).map(|_| rng.gen_range(-amplitude..=amplitude)).collect()
                    }
                })
                .collect();
            let wiggle = PiecewisePath::new(d, z_knots, z_values)?;
            let knots = merge_knots(&[&path.knots, &wiggle.knots], horizon);
            let values = knots
                .iter()
                .map(|&t| {
                    path.eval(t)
                        .iter()
                        .zip(wiggle.eval(t))
                        .map(|(g, z)| (1.0 - shrink) * g + z)
                        .collect()
                })
                .collect();
            PiecewisePath::new(d, knots, values)
        }
        PerturbMode::Adversarial => {
            if path.lipschitz_constant() > ADVERSARIAL_SLOPE + TOL_LIP {
                return Err(Error::InvalidArgument(format!(
                    "adversarial mode needs a base path with slopes <= {ADVERSARIAL_SLOPE}, got {}",
                    path.lipschitz_constant()
                )));
            }
            let period = 2.0 * eps2;
            let quarter = period / 4.0;
            let count = (horizon / quarter).ceil() as usize;
            if count > MAX_GENERATED_KNOTS {
                return Err(Error::InvalidArgument(format!(
                    "eps2 = {eps2} needs {count} knots on horizon {horizon}"
                )));
            }
            let signs: Vec<f64> = (0..d).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let wave = |t: f64| -> f64 {
                let r = t.rem_euclid(period);
                ADVERSARIAL_SLOPE * r.min(period - r)
            };
            let grid: Vec<f64> = (1..count).map(|j| j as f64 * quarter).collect();
            let knots = merge_knots(&[&path.knots, &grid], horizon);
            let values = knots
                .iter()
                .map(|&t| {
                    path.eval(t)
                        .iter()
                        .enumerate()
                        .map(|(c, g)| {
                            let shift = (c % 4) as f64 * quarter;
                            g + signs[c] * (wave(t + shift) - wave(shift))
                        })
                        .collect()
                })
                .collect();
            PiecewisePath::new(d, knots, values)
        }
    }
}

/// Bounded samples `ξ(0), …, ξ(n−1)` in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    dim: usize,
    data: Vec<f64>,
}

impl SampledSequence {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} values cannot be split into samples of dim {dim}",
                data.len()
            )));
        }
        let seq = Self { dim, data };
        seq.check_bound()?;
        Ok(seq)
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument(format!("every sample must have {dim} coordinates")));
        }
        Self::from_flat(dim, rows.concat())
    }

    /// Repeats `q` `len` times.
    pub fn constant(q: &[f64], len: usize) -> Result<Self> {
        Self::from_flat(q.len(), q.repeat(len))
    }

    fn check_bound(&self) -> Result<()> {
        for (index, s) in self.data.chunks(self.dim).enumerate() {
            let norm = if s.iter().all(|v| v.is_finite()) { sup_abs(s) } else { f64::NAN };
            if !(norm <= 1.0) {
                return Err(Error::BoundViolation { index, norm });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Reads one sample per row, `d` columns; a non-numeric first row is
    /// treated as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut dim = None;
        let mut data = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidArgument(format!("row {row}: {e}")));
                }
            };
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::InvalidArgument(format!(
                        "row {row} has {} columns, expected {d}",
                        values.len()
                    )));
                }
                _ => {}
            }
            data.extend(values);
        }
        let dim = dim.ok_or_else(|| Error::InvalidArgument("empty sequence file".into()))?;
        Self::from_flat(dim, data)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for s in self.iter() {
            wtr.write_record(s.iter().map(|v| format!("{v:?}")))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Number of samples needed to cover `[0, t]` at scale `n`, and whether `tn`
/// falls on an integer (within roundoff).
pub(crate) fn sample_span(n: usize, t: f64) -> (usize, bool) {
    let tn = t * n as f64;
    let whole = (tn + 1e-9).floor();
    let on_grid = (tn - whole).abs() <= 1e-9;
    if on_grid {
        (whole as usize, true)
    } else {
        (tn.ceil() as usize, false)
    }
}

/// `φ_n(t) = n^{-1} Σ_{k < tn} ξ(k)`, linearly interpolated: knots `j/n`
/// (plus `T`), slope `ξ(j)` on segment `j`.
pub fn phi_n_from_sequence(seq: &SampledSequence, n: usize, horizon: f64) -> Result<PiecewisePath> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    let (needed, on_grid) = sample_span(n, horizon);
    if needed > seq.len() {
        return Err(Error::InsufficientSamples {
            required: needed,
            available: seq.len(),
        });
    }
    if needed == 0 {
        return Err(Error::InvalidArgument(format!("horizon {horizon} shorter than one step 1/{n}")));
    }
    let nf = n as f64;
    let mut knots: Vec<f64> = (0..needed).map(|j| j as f64 / nf).collect();
    knots.push(horizon);
    if !on_grid && horizon - knots[needed - 1] <= KNOT_MERGE_REL * horizon {
        return Err(Error::InvalidArgument("degenerate final segment".into()));
    }
    let slopes = (0..needed).map(|j| seq.sample(j).to_vec()).collect();
    PiecewisePath::from_knots_and_slopes(seq.dim, knots, slopes)
}
