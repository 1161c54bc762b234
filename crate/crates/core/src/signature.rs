//! Iterated sums and iterated integrals.
//!
//! Three independent routes compute the same objects:
//!
//! * [`iterated_sum_direct`] enumerates every strictly increasing index tuple;
//! * [`iterated_sum_stream`] makes one pass over the samples, updating level
//!   `k` by `level_{k-1} ⊗ ξ(m)` from the top level down;
//! * [`phi_map_exact`] integrates a piecewise-linear path in closed form, one
//!   segment at a time, combining segments by Chen's identity
//!   `(S∘U)^k = Σ_j S^j ⊗ U^{k-j}`.
//!
//! [`phi_map_quadrature`] is the left-endpoint Riemann scheme for
//! `Φ^{k+1}(t) = ∫_0^t Φ^k(u) ⊗ γ̇(u) du` and converges to the exact map at
//! first order.
//!
//! Tensor factors are ordered by time: the first index of a level-k entry
//! belongs to the earliest increment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{merge_knots, sample_span, PiecewisePath, SampledSequence};
use crate::tensor::LevelTensor;

/// Largest `⌈tn⌉` accepted by [`iterated_sum_direct`] without `force`.
pub const MAX_DIRECT_SPAN: usize = 14;

/// Levels `0..=depth` of a signature at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStack")]
pub struct SignatureStack {
    dim: usize,
    depth: usize,
    time: f64,
    levels: Vec<LevelTensor>,
}

#[derive(Deserialize)]
struct RawStack {
    dim: usize,
    depth: usize,
    time: f64,
    levels: Vec<LevelTensor>,
}

impl TryFrom<RawStack> for SignatureStack {
    type Error = Error;

    fn try_from(raw: RawStack) -> Result<Self> {
        if raw.levels.len() != raw.depth + 1 {
            return Err(Error::InvalidArgument(format!(
                "stack of depth {} needs {} levels",
                raw.depth,
                raw.depth + 1
            )));
        }
        for (k, t) in raw.levels.iter().enumerate() {
            if t.dim() != raw.dim || t.level() != k {
                return Err(Error::ShapeMismatch {
                    expected_dim: raw.dim,
                    expected_level: k,
                    dim: t.dim(),
                    level: t.level(),
                });
            }
        }
        if raw.levels[0].data()[0] != 1.0 {
            return Err(Error::InvalidArgument("level 0 must equal 1".into()));
        }
        Ok(Self {
            dim: raw.dim,
            depth: raw.depth,
            time: raw.time,
            levels: raw.levels,
        })
    }
}

impl SignatureStack {
    /// The signature of the constant path: 1 at level 0, zero above.
    pub fn identity(dim: usize, depth: usize, time: f64) -> Self {
        let levels = (0..=depth)
            .map(|k| {
                if k == 0 {
                    LevelTensor::scalar(dim, 1.0)
                } else {
                    LevelTensor::zeros(dim, k)
                }
            })
            .collect();
        Self {
            dim,
            depth,
            time,
            levels,
        }
    }

    /// Signature of one linear segment with increment `w`: level k is
    /// `w^{⊗k}/k!`.
    pub fn segment(increment: &[f64], depth: usize, time: f64) -> Self {
        let dim = increment.len();
        let mut flat = kernel::identity(dim, depth);
        kernel::append_segment(&mut flat, increment, dim, depth, &mut kernel::Scratch::new(dim, depth));
        Self::from_flat(dim, depth, time, &flat)
    }

    pub(crate) fn from_flat(dim: usize, depth: usize, time: f64, flat: &[f64]) -> Self {
        let levels = (0..=depth)
            .map(|k| {
                let r = kernel::level_range(dim, k);
                LevelTensor::from_vec(dim, k, flat[r].to_vec()).expect("layout")
            })
            .collect();
        Self {
            dim,
            depth,
            time,
            levels,
        }
    }

    pub(crate) fn to_flat(&self) -> Vec<f64> {
        self.levels.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn level(&self, k: usize) -> &LevelTensor {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[LevelTensor] {
        &self.levels
    }

    pub fn top(&self) -> &LevelTensor {
        &self.levels[self.depth]
    }

    /// Chen concatenation: the signature of `self` followed by `next`; the
    /// time stamp advances by `next.time()`.
    pub fn concat(&self, next: &SignatureStack) -> Result<SignatureStack> {
        if self.dim != next.dim {
            return Err(Error::DimMismatch {
                left: self.dim,
                right: next.dim,
            });
        }
        if self.depth != next.depth {
            return Err(Error::InvalidArgument(format!(
                "depth mismatch: {} vs {}",
                self.depth, next.depth
            )));
        }
        let mut out = vec![0.0; kernel::stack_len(self.dim, self.depth)];
        kernel::chen_mul(&self.to_flat(), &next.to_flat(), &mut out, self.dim, self.depth);
        Ok(Self::from_flat(self.dim, self.depth, self.time + next.time, &out))
    }

    /// Largest sup-norm difference over levels `1..=depth`.
    pub fn sup_distance(&self, other: &SignatureStack) -> Result<f64> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::InvalidArgument("stacks of different shape".into()));
        }
        let mut m = 0.0_f64;
        for (a, b) in self.levels.iter().zip(&other.levels).skip(1) {
            m = m.max(a.sup_distance(b)?);
        }
        Ok(m)
    }

    /// Linear interpolation `(1−θ)·self + θ·other` on levels ≥ 1.
    fn lerp(&self, other: &SignatureStack, theta: f64, time: f64) -> SignatureStack {
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| {
                if a.level() == 0 {
                    a.clone()
                } else {
                    a.scale(1.0 - theta).add_scaled(b, theta).expect("same shape")
                }
            })
            .collect();
        SignatureStack {
            dim: self.dim,
            depth: self.depth,
            time,
            levels,
        }
    }

    fn normalized(&self, n: usize, time: f64) -> SignatureStack {
        let levels = self
            .levels
            .iter()
            .map(|t| t.scale((n as f64).powi(t.level() as i32).recip()))
            .collect();
        SignatureStack {
            dim: self.dim,
            depth: self.depth,
            time,
            levels,
        }
    }
}

/// The `(i_1, …, i_k)` entry of level `k`.
pub fn coordinate_extract(stack: &SignatureStack, indices: &[usize]) -> Result<f64> {
    if indices.len() > stack.depth {
        return Err(Error::IndexOutOfRange {
            index: indices.len(),
            bound: stack.depth + 1,
        });
    }
    stack.levels[indices.len()].get(indices)
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::InvalidArgument("level must be at least 1".into()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and non-negative")));
    }
    Ok(())
}

/// Sample counts bracketing `tn` and the interpolation weight between them.
pub(crate) fn bracket(n: usize, t: f64) -> (usize, usize, f64) {
    let (needed, on_grid) = sample_span(n, t);
    if on_grid {
        (needed, needed, 0.0)
    } else {
        let lo = needed - 1;
        (lo, needed, t * n as f64 - lo as f64)
    }
}

/// `n^{-k} Σ_{k_1 < … < k_k < tn} ξ(k_1) ⊗ ⋯ ⊗ ξ(k_k)` for every level by
/// enumerating index tuples, linearly interpolated when `tn` is fractional.
///
/// Enumeration cost grows like `binom(tn, ν)`, so `⌈tn⌉` above
/// [`MAX_DIRECT_SPAN`] is rejected unless `force` is set.
pub fn iterated_sum_direct(
    seq: &SampledSequence,
    depth: usize,
    n: usize,
    t: f64,
    force: bool,
) -> Result<SignatureStack> {
    check_depth(depth)?;
    check_time(t)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let (lo, hi, theta) = bracket(n, t);
    if hi > seq.len() {
        return Err(Error::InsufficientSamples {
            required: hi,
            available: seq.len(),
        });
    }
    if hi > MAX_DIRECT_SPAN && !force {
        return Err(Error::EnumerationTooLarge(format!(
            "{hi} samples exceed the enumeration limit {MAX_DIRECT_SPAN}"
        )));
    }
    let at = |m: usize| -> SignatureStack {
        let mut stack = SignatureStack::identity(seq.dim(), depth, t);
        for k in 1..=depth {
            let mut acc = LevelTensor::zeros(seq.dim(), k);
            enumerate_tuples(seq, m, 0, k, &LevelTensor::scalar(seq.dim(), 1.0), &mut acc);
            stack.levels[k] = acc;
        }
        stack.normalized(n, t)
    };
    let lower = at(lo);
    if theta == 0.0 {
        return Ok(lower);
    }
    Ok(lower.lerp(&at(hi), theta, t))
}

fn enumerate_tuples(
    seq: &SampledSequence,
    end: usize,
    start: usize,
    remaining: usize,
    prefix: &LevelTensor,
    acc: &mut LevelTensor,
) {
    if remaining == 0 {
        acc.add_scaled_mut(prefix, 1.0).expect("same shape");
        return;
    }
    for idx in start..end {
        let next = prefix
            .tensor_product(&LevelTensor::vector(seq.sample(idx)))
            .expect("same dim");
        enumerate_tuples(seq, end, idx + 1, remaining - 1, &next, acc);
    }
}

/// Running unnormalized iterated sums over a growing prefix of samples.
#[derive(Debug, Clone)]
pub struct StreamAccumulator {
    dim: usize,
    depth: usize,
    count: usize,
    flat: Vec<f64>,
}

impl StreamAccumulator {
    pub fn new(dim: usize, depth: usize) -> Self {
        Self {
            dim,
            depth,
            count: 0,
            flat: kernel::identity(dim, depth),
        }
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.flat.fill(0.0);
        self.flat[0] = 1.0;
    }

    /// Appends `ξ(m)`: level k gains `level_{k−1} ⊗ ξ(m)`, top level first.
    pub fn push(&mut self, sample: &[f64]) {
        debug_assert_eq!(sample.len(), self.dim);
        kernel::append_step(&mut self.flat, sample, self.dim, self.depth);
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Unnormalized level `k`.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.flat[kernel::level_range(self.dim, k)]
    }

    /// Stack normalized by `n^{-k}` at level `k`.
    pub fn stack(&self, n: usize, time: f64) -> SignatureStack {
        SignatureStack::from_flat(self.dim, self.depth, time, &self.flat).normalized(n, time)
    }
}

/// Iterated sums at every time in `t_grid` in one pass over the samples.
/// Between integer points `m/n` the stacks are interpolated linearly.
pub fn iterated_sum_stream(
    seq: &SampledSequence,
    depth: usize,
    n: usize,
    t_grid: &[f64],
) -> Result<Vec<SignatureStack>> {
    check_depth(depth)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut requests: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        check_time(t)?;
        let (lo, hi, theta) = bracket(n, t);
        if hi > seq.len() {
            return Err(Error::InsufficientSamples {
                required: hi,
                available: seq.len(),
            });
        }
        requests.push((i, lo, hi, theta));
    }
    let mut wanted: Vec<usize> = requests.iter().flat_map(|r| [r.1, r.2]).collect();
    wanted.sort_unstable();
    wanted.dedup();

    let mut snapshots = std::collections::HashMap::with_capacity(wanted.len());
    let mut acc = StreamAccumulator::new(seq.dim(), depth);
    let mut next = wanted.iter().peekable();
    for m in 0..=wanted.last().copied().unwrap_or(0) {
        if next.peek() == Some(&&m) {
            snapshots.insert(m, acc.stack(n, m as f64 / n as f64));
            next.next();
        }
        if m < seq.len() {
            acc.push(seq.sample(m));
        }
    }
    Ok(requests
        .into_iter()
        .map(|(i, lo, hi, theta)| {
            let t = t_grid[i];
            let a = &snapshots[&lo];
            if theta == 0.0 {
                let mut s = a.clone();
                s.time = t;
                s
            } else {
                a.lerp(&snapshots[&hi], theta, t)
            }
        })
        .collect())
}

/// `Φ^{(ν)}(γ)` at every knot, exactly for piecewise-linear `γ`.
pub fn phi_map_exact(path: &PiecewisePath, depth: usize) -> Result<Vec<SignatureStack>> {
    check_depth(depth)?;
    let dim = path.dim();
    let mut flat = kernel::identity(dim, depth);
    let mut scratch = kernel::Scratch::new(dim, depth);
    let mut out = Vec::with_capacity(path.knots().len());
    out.push(SignatureStack::from_flat(dim, depth, 0.0, &flat));
    let mut inc = vec![0.0; dim];
    for seg in 0..path.segment_count() {
        let dt = path.duration(seg);
        for (w, s) in inc.iter_mut().zip(&path.slopes()[seg]) {
            *w = s * dt;
        }
        kernel::append_segment(&mut flat, &inc, dim, depth, &mut scratch);
        out.push(SignatureStack::from_flat(dim, depth, path.knots()[seg + 1], &flat));
    }
    Ok(out)
}

/// `Φ^{(ν)}(γ)(t)` for any `t ∈ [0, T]`.
pub fn signature_at(path: &PiecewisePath, depth: usize, t: f64) -> Result<SignatureStack> {
    check_depth(depth)?;
    if t == 0.0 {
        return Ok(SignatureStack::identity(path.dim(), depth, 0.0));
    }
    let restricted = path.restrict(t)?;
    let mut stacks = phi_map_exact(&restricted, depth)?;
    let mut last = stacks.pop().expect("at least two knots");
    last.time = t;
    Ok(last)
}

/// Left-endpoint Riemann approximation of `Φ^{(ν)}(γ)` on the grid
/// `{l·h} ∪ knots`; each step adds `Φ^{k−1}(t_i) ⊗ γ̇ Δt` to level `k`.
pub fn phi_map_quadrature(path: &PiecewisePath, depth: usize, h: f64) -> Result<Vec<SignatureStack>> {
    check_depth(depth)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let horizon = path.horizon();
    let steps = (horizon / h).ceil() as usize;
    if steps > 50_000_000 {
        return Err(Error::InvalidArgument(format!("step h = {h} gives {steps} cells")));
    }
    let h_grid: Vec<f64> = (1..steps).map(|l| l as f64 * h).collect();
    let grid = merge_knots(&[path.knots(), &h_grid], horizon);
    let dim = path.dim();
    let mut flat = kernel::identity(dim, depth);
    let mut out = Vec::with_capacity(grid.len());
    out.push(SignatureStack::from_flat(dim, depth, 0.0, &flat));
    let mut inc = vec![0.0; dim];
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let slope = &path.slopes()[path.segment_of(0.5 * (w[0] + w[1]))];
        for (x, s) in inc.iter_mut().zip(slope) {
            *x = s * dt;
        }
        kernel::append_step(&mut flat, &inc, dim, depth);
        out.push(SignatureStack::from_flat(dim, depth, w[1], &flat));
    }
    Ok(out)
}

/// `Φ^{(ν)}(φ_n)(t)` for the interpolated path of `seq`.
pub fn signature_of_sequence(seq: &SampledSequence, depth: usize, n: usize, t: f64) -> Result<SignatureStack> {
    check_time(t)?;
    let path = crate::path::phi_n_from_sequence(seq, n, t.max(1.0 / n as f64))?;
    signature_at(&path, depth, t)
}

/// Flat-buffer arithmetic on truncated signatures: level `k` occupies
/// `offset(k)..offset(k)+d^k` with `offset(k) = Σ_{j<k} d^j`.
pub(crate) mod kernel {
    use std::ops::Range;

    pub fn offset(dim: usize, level: usize) -> usize {
        (0..level).map(|j| dim.pow(j as u32)).sum()
    }

    pub fn level_range(dim: usize, level: usize) -> Range<usize> {
        let o = offset(dim, level);
        o..o + dim.pow(level as u32)
    }

    pub fn stack_len(dim: usize, depth: usize) -> usize {
        offset(dim, depth + 1)
    }

    pub fn identity(dim: usize, depth: usize) -> Vec<f64> {
        let mut v = vec![0.0; stack_len(dim, depth)];
        v[0] = 1.0;
        v
    }

    /// `out ← a ∘ b` (truncated tensor product).
    pub fn chen_mul(a: &[f64], b: &[f64], out: &mut [f64], dim: usize, depth: usize) {
        out.fill(0.0);
        for k in 0..=depth {
            let ok = offset(dim, k);
            for j in 0..=k {
                let ra = level_range(dim, j);
                let rb = level_range(dim, k - j);
                let nb = rb.len();
                for (ia, &x) in a[ra].iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let dst = &mut out[ok + ia * nb..ok + (ia + 1) * nb];
                    for (o, &y) in dst.iter_mut().zip(&b[rb.clone()]) {
                        *o += x * y;
                    }
                }
            }
        }
    }

    /// `s ← s + s_{k−1} ⊗ x` on every level `k ≥ 1`, top level first.
    pub fn append_step(s: &mut [f64], x: &[f64], dim: usize, depth: usize) {
        for k in (1..=depth).rev() {
            let lo = level_range(dim, k - 1);
            let hi_off = offset(dim, k);
            for i in 0..lo.len() {
                let p = s[lo.start + i];
                if p == 0.0 {
                    continue;
                }
                let base = hi_off + i * dim;
                for (a, &xj) in x.iter().enumerate() {
                    s[base + a] += p * xj;
                }
            }
        }
    }

    pub struct Scratch {
        acc: Vec<f64>,
        tmp: Vec<f64>,
    }

    impl Scratch {
        pub fn new(dim: usize, depth: usize) -> Self {
            let n = dim.pow(depth as u32).max(1);
            Self {
                acc: vec![0.0; n],
                tmp: vec![0.0; n],
            }
        }
    }

    /// `s ← s ∘ exp(w)` with `exp(w)^j = w^{⊗j}/j!`, using Horner's rule
    /// `new^k = ((s^0 ⊗ w/k + s^1) ⊗ w/(k−1) + …) ⊗ w/1 + s^k`.
    pub fn append_segment(s: &mut [f64], w: &[f64], dim: usize, depth: usize, scratch: &mut Scratch) {
        for k in (1..=depth).rev() {
            let acc = &mut scratch.acc;
            let tmp = &mut scratch.tmp;
            acc[0] = s[0];
            let mut len = 1;
            for j in 1..=k {
                let c = 1.0 / (k - j + 1) as f64;
                for i in 0..len {
                    let p = acc[i] * c;
                    for a in 0..dim {
                        tmp[i * dim + a] = p * w[a];
                    }
                }
                len *= dim;
                let r = level_range(dim, j);
                for i in 0..len {
                    acc[i] = tmp[i] + s[r.start + i];
                }
            }
            let r = level_range(dim, k);
            s[r].copy_from_slice(&acc[..len]);
        }
    }
}
