//! Dense primal-dual interior-point solver for
//! `min ½ xᵀHx + gᵀx  s.t.  C x ≤ e`.
//!
//! Constraint rows are stored sparsely; the condensed MPC produces many
//! two-entry friction rows and a few dense ZMP rows. Each iteration forms the
//! reduced normal matrix `H + Cᵀ diag(λ/s) C` and factors it with Cholesky,
//! using Mehrotra's predictor-corrector step.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow<T> {
    pub idx: Vec<usize>,
    pub val: Vec<T>,
}

impl<T: Real> SparseRow<T> {
    pub fn dot(&self, x: &[T]) -> T {
        self.idx.iter().zip(&self.val).map(|(i, v)| *v * x[*i]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem<T> {
    pub n: usize,
    /// Row-major symmetric Hessian, `n × n`.
    pub h: Vec<T>,
    pub g: Vec<T>,
    pub rows: Vec<SparseRow<T>>,
    pub upper: Vec<T>,
}

impl<T: Real> QpProblem<T> {
    pub fn new(n: usize) -> Self {
        Self { n, h: vec![T::zero(); n * n], g: vec![T::zero(); n], rows: Vec::new(), upper: Vec::new() }
    }

    /// Adds `Σ val[i]·x[idx[i]] ≤ upper`; `idx` must be strictly ascending.
    pub fn add_row(&mut self, idx: Vec<usize>, val: Vec<T>, upper: T) {
        debug_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(idx.len(), val.len());
        self.rows.push(SparseRow { idx, val });
        self.upper.push(upper);
    }

    pub fn objective(&self, x: &[T]) -> T {
        let hx = self.hess_mul(x);
        (0..self.n).map(|i| x[i] * (T::lit(0.5) * hx[i] + self.g[i])).sum()
    }

    fn hess_mul(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.h[i * self.n + j] * x[j]).sum()).collect()
    }

    fn ct_mul(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (row, yi) in self.rows.iter().zip(y) {
            for (i, v) in row.idx.iter().zip(&row.val) {
                out[*i] += *v * *yi;
            }
        }
        out
    }

    /// Scaled KKT residual: the largest of relative stationarity, primal
    /// infeasibility, dual sign violation and complementarity.
    pub fn kkt_residual(&self, x: &[T], lambda: &[T]) -> T {
        let hx = self.hess_mul(x);
        let ctl = self.ct_mul(lambda);
        let inf = |v: &[T]| v.iter().fold(T::zero(), |m, a| m.max(a.abs()));
        let scale_d = T::one() + inf(&hx).max(inf(&self.g)).max(inf(&ctl));
        let stat = (0..self.n).map(|i| (hx[i] + self.g[i] + ctl[i]).abs()).fold(T::zero(), |m, a| m.max(a)) / scale_d;
        let scale_p = T::one() + inf(&self.upper);
        let mut prim = T::zero();
        let mut comp = T::zero();
        let mut dual = T::zero();
        for (k, row) in self.rows.iter().enumerate() {
            let slack = self.upper[k] - row.dot(x);
            prim = prim.max(-slack);
            dual = dual.max(-lambda[k]);
            comp = comp.max((lambda[k] * slack).abs());
        }
        stat.max(prim / scale_p).max(dual).max(comp / scale_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub lambda: Vec<T>,
    pub status: QpStatus,
    pub iterations: usize,
    pub kkt_residual: T,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings<T> {
    pub max_iterations: usize,
    pub tolerance: T,
}

impl<T: Real> Default for QpSettings<T> {
    fn default() -> Self {
        Self { max_iterations: 60, tolerance: T::lit(1e-9) }
    }
}

/// In-place lower Cholesky of a row-major SPD matrix. Tiny pivots are
/// regularized rather than rejected so that nearly singular reduced systems
/// late in the iteration still produce a usable direction.
fn cholesky<T: Real>(a: &mut [T], n: usize) -> bool {
    let floor = T::lit(1e-14);
    for j in 0..n {
        let rj = j * n;
        let mut d = a[rj + j] - dot(&a[rj..rj + j], &a[rj..rj + j]);
        if !d.is_finite() {
            return false;
        }
        let scale = T::one().max(a[j * n + j].abs());
        if d <= floor * scale {
            d = floor * scale;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        let (head, tail) = a.split_at_mut((j + 1) * n);
        let row_j = &head[rj..rj + j];
        for i in (j + 1)..n {
            let ri = (i - j - 1) * n;
            let s = tail[ri + j] - dot(&tail[ri..ri + j], row_j);
            tail[ri + j] = s / d;
        }
    }
    true
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four accumulators let the compiler keep several multiplies in flight
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn max_step<T: Real>(v: &[T], dv: &[T]) -> T {
    let mut a = T::one();
    for (x, dx) in v.iter().zip(dv) {
        if *dx < T::zero() {
            a = a.min(-*x / *dx);
        }
    }
    a
}

pub fn solve_qp<T: Real>(p: &QpProblem<T>, settings: &QpSettings<T>, warm: Option<&[T]>) -> QpSolution<T> {
    let n = p.n;
    let m = p.rows.len();
    let mut x: Vec<T> = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
    let mut s: Vec<T> = (0..m).map(|k| (p.upper[k] - p.rows[k].dot(&x)).max(T::one())).collect();
    let mut lam = vec![T::one(); m];
    let tol = settings.tolerance;
    let inf = |v: &[T]| v.iter().fold(T::zero(), |acc, a| acc.max(a.abs()));
    let scale_d = T::one() + inf(&p.g);
    let scale_p = T::one() + inf(&p.upper);
    let mut kmat = vec![T::zero(); n * n];
    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..settings.max_iterations {
        iterations = it + 1;
        let hx = p.hess_mul(&x);
        let ctl = p.ct_mul(&lam);
        let r_d: Vec<T> = (0..n).map(|i| hx[i] + p.g[i] + ctl[i]).collect();
        let r_p: Vec<T> = (0..m).map(|k| p.rows[k].dot(&x) + s[k] - p.upper[k]).collect();
        let mu = if m > 0 { s.iter().zip(&lam).map(|(a, b)| *a * *b).sum::<T>() / T::lit(m as f64) } else { T::zero() };
        if !mu.is_finite() || r_d.iter().chain(&r_p).any(|v| !v.is_finite()) {
            status = QpStatus::Infeasible;
            break;
        }
        if inf(&r_d) <= tol * scale_d && inf(&r_p) <= tol * scale_p && mu <= tol {
            status = QpStatus::Optimal;
            iterations = it;
            break;
        }

        // reduced normal matrix
        kmat.copy_from_slice(&p.h);
        let dvec: Vec<T> = (0..m).map(|k| lam[k] / s[k]).collect();
        for (k, row) in p.rows.iter().enumerate() {
            let dk = dvec[k];
            // row indices are ascending, so the lower triangle is a prefix
            for (ia, (a, va)) in row.idx.iter().zip(&row.val).enumerate() {
                let w = dk * *va;
                let base = *a * n;
                for (b, vb) in row.idx[..=ia].iter().zip(&row.val[..=ia]) {
                    kmat[base + *b] += w * *vb;
                }
            }
        }
        if !cholesky(&mut kmat, n) {
            status = QpStatus::Infeasible;
            break;
        }

        // direction for complementarity target r_c = -s∘λ + corr
        let direction = |r_c: &[T]| -> (Vec<T>, Vec<T>, Vec<T>) {
            let tmp: Vec<T> = (0..m).map(|k| dvec[k] * r_p[k] + r_c[k] / s[k]).collect();
            let ct = p.ct_mul(&tmp);
            let mut dx: Vec<T> = (0..n).map(|i| -r_d[i] - ct[i]).collect();
            cholesky_solve(&kmat, n, &mut dx);
            let dl: Vec<T> = (0..m).map(|k| dvec[k] * (p.rows[k].dot(&dx) + r_p[k]) + r_c[k] / s[k]).collect();
            let ds: Vec<T> = (0..m).map(|k| (r_c[k] - s[k] * dl[k]) / lam[k]).collect();
            (dx, ds, dl)
        };

        let rc_aff: Vec<T> = (0..m).map(|k| -s[k] * lam[k]).collect();
        let (_, ds_a, dl_a) = direction(&rc_aff);
        let a_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a));
        let mu_aff = if m > 0 {
            (0..m).map(|k| (s[k] + a_aff * ds_a[k]) * (lam[k] + a_aff * dl_a[k])).sum::<T>() / T::lit(m as f64)
        } else {
            T::zero()
        };
        let sigma = if mu > T::zero() { (mu_aff / mu).powi(3).min(T::one()) } else { T::zero() };
        let rc: Vec<T> = (0..m).map(|k| -s[k] * lam[k] - ds_a[k] * dl_a[k] + sigma * mu).collect();
        let (dx, ds, dl) = direction(&rc);
        let alpha = (T::lit(0.995) * max_step(&s, &ds).min(max_step(&lam, &dl))).min(T::one());
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for k in 0..m {
            s[k] = (s[k] + alpha * ds[k]).max(T::min_positive_value());
            lam[k] = (lam[k] + alpha * dl[k]).max(T::min_positive_value());
        }
    }

    if status == QpStatus::MaxIterations {
        let r_p = (0..m).map(|k| p.rows[k].dot(&x) - p.upper[k]).fold(T::zero(), |a, v| a.max(v));
        if r_p > T::lit(1e-4) * scale_p {
            status = QpStatus::Infeasible;
        }
    }
    let kkt = p.kkt_residual(&x, &lam);
    QpSolution { x, lambda: lam, status, iterations, kkt_residual: kkt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_minimum() {
        let mut p = QpProblem::new(2);
        p.h = vec![2.0, 0.0, 0.0, 4.0];
        p.g = vec![-2.0, -8.0];
        let sol = solve_qp(&p, &QpSettings::default(), None);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn active_bound() {
        // min (x-3)² s.t. x ≤ 1
        let mut p = QpProblem::new(1);
        p.h = vec![2.0];
        p.g = vec![-6.0];
        p.add_row(vec![0], vec![1.0], 1.0);
        let sol = solve_qp(&p, &QpSettings::default(), None);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(sol.lambda[0], 4.0, epsilon = 1e-6);
        assert!(sol.kkt_residual < 1e-6);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = QpProblem::new(1);
        p.h = vec![1.0];
        p.g = vec![0.0];
        p.add_row(vec![0], vec![1.0], -1.0);
        p.add_row(vec![0], vec![-1.0], -1.0);
        let sol = solve_qp(&p, &QpSettings { max_iterations: 40, tolerance: 1e-9 }, None);
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    fn brute_force_box(h: [[f64; 2]; 2], g: [f64; 2], lo: f64, hi: f64) -> (f64, f64) {
        // candidate points: unconstrained, each face, each corner
        let f = |x: f64, y: f64| 0.5 * (h[0][0] * x * x + 2.0 * h[0][1] * x * y + h[1][1] * y * y) + g[0] * x + g[1] * y;
        let clamp = |v: f64| v.max(lo).min(hi);
        let mut cands = vec![(lo, lo), (lo, hi), (hi, lo), (hi, hi)];
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        cands.push(((-g[0] * h[1][1] + g[1] * h[0][1]) / det, (-g[1] * h[0][0] + g[0] * h[0][1]) / det));
        for fixed in [lo, hi] {
            cands.push((fixed, clamp(-(g[1] + h[0][1] * fixed) / h[1][1])));
            cands.push((clamp(-(g[0] + h[0][1] * fixed) / h[0][0]), fixed));
        }
        cands
            .into_iter()
            .filter(|(x, y)| *x >= lo - 1e-12 && *x <= hi + 1e-12 && *y >= lo - 1e-12 && *y <= hi + 1e-12)
            .min_by(|a, b| f(a.0, a.1).partial_cmp(&f(b.0, b.1)).unwrap())
            .unwrap()
    }

    proptest! {
        #[test]
        fn matches_enumeration_on_boxes(
            a in 0.5f64..5.0, b in 0.5f64..5.0, c in -0.4f64..0.4,
            g0 in -10.0f64..10.0, g1 in -10.0f64..10.0,
        ) {
            let off = c * (a * b).sqrt();
            let mut p = QpProblem::new(2);
            p.h = vec![a, off, off, b];
            p.g = vec![g0, g1];
            for i in 0..2 {
                p.add_row(vec![i], vec![1.0], 1.0);
                p.add_row(vec![i], vec![-1.0], 1.0);
            }
            let sol = solve_qp(&p, &QpSettings::default(), None);
            prop_assert_eq!(sol.status, QpStatus::Optimal);
            prop_assert!(sol.kkt_residual < 1e-6);
            let (x, y) = brute_force_box([[a, off], [off, b]], [g0, g1], -1.0, 1.0);
            prop_assert!((sol.x[0] - x).abs() < 1e-6 && (sol.x[1] - y).abs() < 1e-6);
        }
    }
}
