//! Log-domain Sinkhorn iterations for entropic optimal transport between two
//! uniformly weighted point clouds with squared Euclidean ground cost.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SinkhornPlan {
    /// `n_x x n_y` transport plan from the final potentials.
    pub plan: Tensor,
    /// Dual value `<a, f> + <b, g>` after the last iteration.
    pub cost: f64,
    pub iterations: usize,
    rows: Kernel,
    cols: Kernel,
    /// Per iteration, the shifts entering the `f` and `g` updates. The
    /// backward pass rebuilds each softmax from them and replays the
    /// updates in reverse.
    g_shifts: Vec<Vec<f64>>,
    f_shifts: Vec<Vec<f64>>,
}

fn sq_dist(x: &Tensor, y: &Tensor) -> Tensor {
    let (n, m) = (x.rows(), y.rows());
    let mut c = Vec::with_capacity(n * m);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..m {
            c.push(xi.iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    Tensor::from_vec(n, m, c).unwrap()
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Writes `softmax(shift + kernel)` into `out` and returns the matching
/// log-sum-exp. `shift` and `kernel` have the same length.
fn soft_lse(shift: &[f64], kernel: &[f64], out: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for ((o, s), k) in out.iter_mut().zip(shift).zip(kernel) {
        *o = s + k;
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
    max + sum.ln()
}

/// A factored row sum below this is too close to underflow to trust, and
/// the row is recomputed in the log domain.
const FACTOR_FLOOR: f64 = 1e-100;

/// Kernel entries and weights below this are flushed to zero: every dropped
/// term is negligible next to an accepted row sum, and products of two
/// kept factors never go subnormal.
const FLUSH: f64 = 1e-150;

fn flushed(v: f64) -> f64 {
    if v < FLUSH {
        0.0
    } else {
        v
    }
}

/// Dot product with four independent accumulators so it vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `-C / eps` together with its row-stabilised exponential, so one
/// log-sum-exp row costs a multiply-add per entry instead of an `exp`.
#[derive(Debug, Clone)]
struct Kernel {
    log: Vec<f64>,
    /// `exp(log_ij - row_max_i)`, every row peaking at 1.
    gibbs: Vec<f64>,
    row_max: Vec<f64>,
    cols: usize,
}

/// `exp(shift - max(shift))` and the max, shared by all rows of a step.
struct Weights {
    w: Vec<f64>,
    top: f64,
}

impl Weights {
    fn new(shift: &[f64]) -> Self {
        let top = shift.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { w: shift.iter().map(|s| flushed((s - top).exp())).collect(), top }
    }
}

impl Kernel {
    fn new(log: Vec<f64>, cols: usize) -> Self {
        let row_max: Vec<f64> =
            log.chunks(cols).map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let gibbs =
            log.chunks(cols).zip(&row_max).flat_map(|(r, &mx)| r.iter().map(move |v| flushed((v - mx).exp()))).collect();
        Self { log, gibbs, row_max, cols }
    }

    fn row(&self, i: usize) -> std::ops::Range<usize> {
        i * self.cols..(i + 1) * self.cols
    }

    /// `lse_j(shift_j + log_ij)`, or `None` when the factored sum is
    /// unreliable.
    fn factored_lse(&self, i: usize, w: &Weights) -> Option<(f64, f64)> {
        let sum = dot(&self.gibbs[self.row(i)], &w.w);
        (sum >= FACTOR_FLOOR).then(|| (w.top + self.row_max[i] + sum.ln(), sum))
    }

    fn lse(&self, i: usize, shift: &[f64], w: &Weights) -> f64 {
        match self.factored_lse(i, w) {
            Some((l, _)) => l,
            None => {
                let mut buf = vec![0.0; self.cols];
                soft_lse(shift, &self.log[self.row(i)], &mut buf)
            }
        }
    }

    /// Writes row `i` of `softmax_j(shift_j + log_ij)` into `out`.
    fn softmax(&self, i: usize, shift: &[f64], w: &Weights, out: &mut [f64]) {
        match self.factored_lse(i, w) {
            Some((_, sum)) => {
                let inv = 1.0 / sum;
                for ((o, e), x) in out.iter_mut().zip(&self.gibbs[self.row(i)]).zip(&w.w) {
                    *o = e * x * inv;
                }
            }
            None => {
                soft_lse(shift, &self.log[self.row(i)], out);
            }
        }
    }
}

/// Runs exactly `iters` alternating log-domain dual updates from zero
/// potentials. The returned value is a smooth function of the inputs and
/// [`SinkhornPlan::cost_gradients`] differentiates it exactly, converged
/// or not.
pub fn sinkhorn_plan(x: &Tensor, y: &Tensor, eps: f64, iters: usize) -> Result<SinkhornPlan> {
    if !(eps > 0.0) {
        return Err(Error::input("sinkhorn regularisation must be positive"));
    }
    if x.cols() != y.cols() || x.rows() == 0 || y.rows() == 0 {
        return Err(Error::input("sinkhorn needs two nonempty point sets of equal dimension"));
    }
    let (n, m) = (x.rows(), y.rows());
    let iters = iters.max(1);
    let c = sq_dist(x, y);
    let k: Vec<f64> = c.data().iter().map(|v| -v / eps).collect();
    let rows = Kernel::new(k.clone(), m);
    let cols = Kernel::new(transpose(&k, n, m), n);
    let (log_a, log_b) = (-(n as f64).ln(), -(m as f64).ln());
    let (mut f, mut g) = (vec![0.0; n], vec![0.0; m]);
    // Scaled potentials plus log weights, the shift inside each lse.
    let mut g_shift = vec![log_b; m];
    let mut f_shift = vec![0.0; n];
    let mut g_shifts = Vec::with_capacity(iters);
    let mut f_shifts = Vec::with_capacity(iters);
    for _ in 0..iters {
        let w = Weights::new(&g_shift);
        for (i, (fi, s)) in f.iter_mut().zip(f_shift.iter_mut()).enumerate() {
            *fi = -eps * rows.lse(i, &g_shift, &w);
            *s = log_a + *fi / eps;
        }
        g_shifts.push(std::mem::replace(&mut g_shift, vec![0.0; m]));
        let w = Weights::new(&f_shift);
        for (j, (gj, s)) in g.iter_mut().zip(g_shift.iter_mut()).enumerate() {
            *gj = -eps * cols.lse(j, &f_shift, &w);
            *s = log_b + *gj / eps;
        }
        f_shifts.push(f_shift.clone());
    }
    let cost = f.iter().sum::<f64>() / n as f64 + g.iter().sum::<f64>() / m as f64;
    if !cost.is_finite() {
        return Err(Error::Numeric("sinkhorn produced a non-finite cost".into()));
    }
    let mut plan = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            plan.push((f_shift[i] + g_shift[j] + k[i * m + j]).exp());
        }
    }
    Ok(SinkhornPlan { plan: Tensor::from_vec(n, m, plan)?, cost, iterations: iters, rows, cols, g_shifts, f_shifts })
}

impl SinkhornPlan {
    /// Gradient of the dual value w.r.t. the cost matrix, obtained by
    /// reverse-mode replay of the iterations.
    fn cost_matrix_gradient(&self) -> Tensor {
        let (n, m) = self.plan.shape();
        let mut gc = vec![0.0; n * m];
        // Contributions of the column updates, accumulated transposed.
        let mut gct = vec![0.0; m * n];
        let mut fbar = vec![1.0 / n as f64; n];
        let mut gbar = vec![1.0 / m as f64; m];
        let (mut rs, mut cs) = (vec![0.0; m], vec![0.0; n]);
        for (gs, fs) in self.g_shifts.iter().zip(&self.f_shifts).rev() {
            // g_j = -eps lse_i(log a + (f_i - C_ij) / eps)
            let w = Weights::new(fs);
            for j in 0..m {
                self.cols.softmax(j, fs, &w, &mut cs);
                let gb = gbar[j];
                for ((d, fb), &p) in gct[j * n..(j + 1) * n].iter_mut().zip(fbar.iter_mut()).zip(&cs) {
                    let w = gb * p;
                    *d += w;
                    *fb -= w;
                }
            }
            // f_i = -eps lse_j(log b + (g_j - C_ij) / eps)
            gbar.iter_mut().for_each(|v| *v = 0.0);
            let w = Weights::new(gs);
            for i in 0..n {
                self.rows.softmax(i, gs, &w, &mut rs);
                let fb = fbar[i];
                for ((d, gb), &p) in gc[i * m..(i + 1) * m].iter_mut().zip(gbar.iter_mut()).zip(&rs) {
                    let w = fb * p;
                    *d += w;
                    *gb -= w;
                }
            }
            fbar.iter_mut().for_each(|v| *v = 0.0);
        }
        for (g, t) in gc.iter_mut().zip(transpose(&gct, m, n)) {
            *g += t;
        }
        Tensor::from_vec(n, m, gc).unwrap()
    }

    /// Gradients of the value w.r.t. both point sets.
    pub fn cost_gradients(&self, x: &Tensor, y: &Tensor) -> (Tensor, Tensor) {
        let gc = self.cost_matrix_gradient();
        let (n, m, d) = (x.rows(), y.rows(), x.cols());
        let mut gx = Tensor::zeros(n, d);
        let mut gy = Tensor::zeros(m, d);
        for i in 0..n {
            for j in 0..m {
                let w = gc.get(i, j);
                if w == 0.0 {
                    continue;
                }
                for k in 0..d {
                    let diff = 2.0 * w * (x.get(i, k) - y.get(j, k));
                    gx.data_mut()[i * d + k] += diff;
                    gy.data_mut()[j * d + k] -= diff;
                }
            }
        }
        (gx, gy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_masses() {
        let x = Tensor::from_vec(1, 1, vec![0.0]).unwrap();
        let y = Tensor::from_vec(1, 1, vec![1.0]).unwrap();
        let p = sinkhorn_plan(&x, &y, 0.01, 50).unwrap();
        assert!((p.cost - 1.0).abs() < 0.1);
    }

    #[test]
    fn converged_gradient_matches_plan() {
        // At convergence the derivative w.r.t. the cost matrix is the plan.
        let x = Tensor::from_rows(&[vec![0.0, 0.1], vec![1.0, -0.3], vec![0.4, 0.4]]).unwrap();
        let y = Tensor::from_rows(&[vec![0.2, 0.0], vec![-0.5, 1.0]]).unwrap();
        let p = sinkhorn_plan(&x, &y, 0.5, 400).unwrap();
        let gc = p.cost_matrix_gradient();
        for (a, b) in gc.data().iter().zip(p.plan.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn marginals_are_uniform() {
        let x = Tensor::from_rows(&[vec![0.0, 0.1], vec![1.0, -0.3], vec![0.4, 0.4]]).unwrap();
        let y = Tensor::from_rows(&[vec![0.2, 0.0], vec![-0.5, 1.0]]).unwrap();
        let p = sinkhorn_plan(&x, &y, 0.1, 500).unwrap();
        for i in 0..3 {
            let row: f64 = p.plan.row(i).iter().sum();
            assert!((row - 1.0 / 3.0).abs() < 1e-9);
        }
        for j in 0..2 {
            let col: f64 = (0..3).map(|i| p.plan.get(i, j)).sum();
            assert!((col - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = Tensor::zeros(2, 2);
        assert!(sinkhorn_plan(&x, &Tensor::zeros(2, 3), 0.1, 10).is_err());
        assert!(sinkhorn_plan(&x, &x, 0.0, 10).is_err());
    }

    #[test]
    fn factored_rows_match_the_log_domain() {
        // Spread-out rows force the log-domain fallback on some entries.
        let log: Vec<f64> = (0..12).map(|v| -(v as f64 * 7.3 % 5.0) * 300.0 * (v % 2) as f64).collect();
        let kern = Kernel::new(log.clone(), 4);
        for shift in [vec![0.0, -1.0, 2.0, 0.5], vec![-800.0, 0.0, -900.0, 3.0]] {
            let w = Weights::new(&shift);
            let mut out = vec![0.0; 4];
            for i in 0..3 {
                let mut want = vec![0.0; 4];
                let l = soft_lse(&shift, &log[i * 4..(i + 1) * 4], &mut want);
                let got = kern.lse(i, &shift, &w);
                assert!((l - got).abs() < 1e-12 * l.abs().max(1.0), "{l} vs {got}");
                kern.softmax(i, &shift, &w, &mut out);
                for (a, b) in want.iter().zip(&out) {
                    assert!((a - b).abs() < 1e-14, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn distant_clouds_stay_finite() {
        let x = Tensor::from_rows(&[vec![0.0], vec![0.5]]).unwrap();
        let y = Tensor::from_rows(&[vec![40.0], vec![41.0], vec![-30.0]]).unwrap();
        let p = sinkhorn_plan(&x, &y, 0.1, 50).unwrap();
        assert!(p.cost.is_finite() && p.cost > 0.0);
        let (gx, gy) = p.cost_gradients(&x, &y);
        assert!(gx.data().iter().chain(gy.data()).all(|v| v.is_finite()));
    }
}
