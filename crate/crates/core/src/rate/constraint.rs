//! Top-level signature of a piecewise-linear profile on a uniform grid, and
//! its exact Jacobian with respect to the slopes.

use crate::signature::kernel::{self, Scratch};

/// Maps slopes `v` (segment-major, `m·d` entries) to the stacked top levels at
/// the target grid indices, minus the targets.
#[derive(Debug, Clone)]
pub(crate) struct ConstraintMap {
    pub dim: usize,
    pub depth: usize,
    pub segments: usize,
    pub dt: f64,
    /// Grid indices `1..=m` at which the top level is matched, increasing.
    pub targets: Vec<usize>,
    /// Concatenated target tensors.
    pub values: Vec<f64>,
}

impl ConstraintMap {
    pub fn top_len(&self) -> usize {
        self.dim.pow(self.depth as u32)
    }

    pub fn len(&self) -> usize {
        self.targets.len() * self.top_len()
    }

    pub fn vars(&self) -> usize {
        self.segments * self.dim
    }

    fn segment_stack(&self, v: &[f64], i: usize, scratch: &mut Scratch) -> Vec<f64> {
        let mut e = kernel::identity(self.dim, self.depth);
        let w: Vec<f64> = v[i * self.dim..(i + 1) * self.dim].iter().map(|x| x * self.dt).collect();
        kernel::append_segment(&mut e, &w, self.dim, self.depth, scratch);
        e
    }

    /// Residual `c(v)`.
    pub fn eval(&self, v: &[f64], c: &mut [f64]) {
        let top = kernel::level_range(self.dim, self.depth);
        let n = self.top_len();
        let mut scratch = Scratch::new(self.dim, self.depth);
        let mut s = kernel::identity(self.dim, self.depth);
        let mut t = 0;
        for i in 0..self.segments {
            let w: Vec<f64> = v[i * self.dim..(i + 1) * self.dim].iter().map(|x| x * self.dt).collect();
            kernel::append_segment(&mut s, &w, self.dim, self.depth, &mut scratch);
            if t < self.targets.len() && self.targets[t] == i + 1 {
                for (k, (o, y)) in c[t * n..(t + 1) * n].iter_mut().zip(&self.values[t * n..(t + 1) * n]).enumerate() {
                    *o = s[top.start + k] - y;
                }
                t += 1;
            }
        }
    }

    /// Residual and Jacobian (row-major, `len() × vars()`), by propagating
    /// `dS_i = S_{j−1} ∘ dE_j ∘ E_{j+1} ∘ ⋯ ∘ E_i` for each slope coordinate.
    pub fn eval_jacobian(&self, v: &[f64], c: &mut [f64], jac: &mut [f64]) {
        let (d, depth, m) = (self.dim, self.depth, self.segments);
        let top = kernel::level_range(d, depth);
        let n = self.top_len();
        let nv = self.vars();
        let len = kernel::stack_len(d, depth);
        let mut scratch = Scratch::new(d, depth);
        self.eval(v, c);
        jac.fill(0.0);

        let stacks: Vec<Vec<f64>> = (0..m).map(|i| self.segment_stack(v, i, &mut scratch)).collect();
        let mut prefix = Vec::with_capacity(m);
        let mut s = kernel::identity(d, depth);
        let mut tmp = vec![0.0; len];
        for e in &stacks {
            prefix.push(s.clone());
            kernel::chen_mul(&s, e, &mut tmp, d, depth);
            std::mem::swap(&mut s, &mut tmp);
        }
        // first target index at or after each grid index
        let first_target = |i: usize| self.targets.partition_point(|&t| t < i);

        let mut de = vec![0.0; len];
        let mut x = vec![0.0; len];
        for j in 0..m {
            if first_target(j + 1) == self.targets.len() {
                continue;
            }
            let w: Vec<f64> = v[j * d..(j + 1) * d].iter().map(|a| a * self.dt).collect();
            for a in 0..d {
                segment_derivative(&w, a, self.dt, d, depth, &mut de);
                kernel::chen_mul(&prefix[j], &de, &mut x, d, depth);
                let col = j * d + a;
                let mut t = first_target(j + 1);
                for i in j..m {
                    if i > j {
                        kernel::chen_mul(&x, &stacks[i], &mut tmp, d, depth);
                        std::mem::swap(&mut x, &mut tmp);
                    }
                    if t < self.targets.len() && self.targets[t] == i + 1 {
                        for k in 0..n {
                            jac[(t * n + k) * nv + col] = x[top.start + k];
                        }
                        t += 1;
                        if t == self.targets.len() {
                            break;
                        }
                    }
                }
            }
        }
    }
}

/// `∂/∂v_a exp(w)` with `w = dt·v`, via `P_k = P_{k−1} ⊗ w / k` and
/// `D_k = (D_{k−1} ⊗ w + P_{k−1} ⊗ e_a) / k`.
fn segment_derivative(w: &[f64], a: usize, dt: f64, dim: usize, depth: usize, out: &mut [f64]) {
    let mut p = vec![1.0];
    out.fill(0.0);
    for k in 1..=depth {
        let prev = kernel::level_range(dim, k - 1);
        let cur = kernel::level_range(dim, k);
        let inv = 1.0 / k as f64;
        let mut next_p = vec![0.0; cur.len()];
        for i in 0..prev.len() {
            let dp = out[prev.start + i];
            for b in 0..dim {
                next_p[i * dim + b] = p[i] * w[b] * inv;
                out[cur.start + i * dim + b] = dp * w[b] * inv;
            }
            out[cur.start + i * dim + a] += p[i] * dt * inv;
        }
        p = next_p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_map(d: usize, depth: usize, m: usize, targets: Vec<usize>, seed: u64) -> (ConstraintMap, Vec<f64>) {
        let mut r = rng::stream(seed);
        let n = d.pow(depth as u32);
        let map = ConstraintMap {
            dim: d,
            depth,
            segments: m,
            dt: 1.3 / m as f64,
            values: (0..targets.len() * n).map(|_| r.gen_range(-0.1..0.1)).collect(),
            targets,
        };
        let v = (0..m * d).map(|_| r.gen_range(-1.0..1.0)).collect();
        (map, v)
    }

    #[test]
    fn jacobian_matches_central_differences() {
        for (d, depth, m, targets) in [
            (1, 3, 5, vec![5]),
            (2, 2, 4, vec![4]),
            (2, 3, 6, vec![2, 3, 6]),
            (3, 2, 3, vec![1, 2, 3]),
        ] {
            let (map, v) = random_map(d, depth, m, targets, 11);
            let nc = map.len();
            let nv = map.vars();
            let mut c = vec![0.0; nc];
            let mut jac = vec![0.0; nc * nv];
            map.eval_jacobian(&v, &mut c, &mut jac);
            let h = 1e-6;
            for col in 0..nv {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[col] += h;
                vm[col] -= h;
                let mut cp = vec![0.0; nc];
                let mut cm = vec![0.0; nc];
                map.eval(&vp, &mut cp);
                map.eval(&vm, &mut cm);
                for row in 0..nc {
                    let fd = (cp[row] - cm[row]) / (2.0 * h);
                    assert!((fd - jac[row * nv + col]).abs() < 1e-8, "d={d} row {row} col {col}");
                }
            }
        }
    }

    #[test]
    fn one_dim_top_level_is_power_of_endpoint() {
        let (map, v) = random_map(1, 4, 7, vec![7], 2);
        let mut c = vec![0.0];
        map.eval(&v, &mut c);
        let x: f64 = v.iter().sum::<f64>() * map.dt;
        assert!((c[0] + map.values[0] - x.powi(4) / 24.0).abs() < 1e-15);
    }
}
