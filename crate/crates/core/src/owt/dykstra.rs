//! Euclidean projection onto the transport polytope by Dykstra's algorithm.
//!
//! The polytope `{pi >= 0, pi 1 = a, pi^T 1 = b}` is split into the
//! nonnegative matrices with row sums `a` and those with column sums `b`.
//! Each set is a product of scaled simplices with a cheap exact projection.
//!
//! Corrections can be kept between calls. Dykstra is block coordinate
//! ascent on the dual of the projection problem, so any pair of corrections
//! is a valid starting point, and reusing the previous pair makes
//! consecutive projections of nearby inputs cheap.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::owt::SolverConfig;
use crate::plan::TransportPlan;

/// Result of [`project_transport_polytope`].
#[derive(Clone, Debug)]
pub struct Projection {
    pub plan: TransportPlan,
    pub iterations: usize,
    /// `false` when the marginal gap is still above tolerance after the
    /// iteration cap; `plan` then holds the last iterate.
    pub converged: bool,
}

/// Projects `matrix` onto `{pi >= 0, pi 1 = a, pi^T 1 = b}` up to
/// `cfg.marginal_tol`.
pub fn project_transport_polytope(
    matrix: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cfg: &SolverConfig,
) -> Result<Projection> {
    let (r, m) = matrix.dim();
    check_marginal(a, r)?;
    check_marginal(b, m)?;
    let mut proj = DykstraProjector::new(a.to_vec(), b.to_vec());
    let input = matrix.as_standard_layout();
    let mut out = vec![0.0; r * m];
    let stats = proj.project(
        input.as_slice().expect("standard layout"),
        &mut out,
        cfg.marginal_tol,
        cfg.dykstra_max_iters,
    );
    let plan = TransportPlan::new(
        Array2::from_shape_vec((r, m), out).expect("r * m entries"),
        a.to_owned(),
        b.to_owned(),
    )?;
    Ok(Projection {
        plan,
        iterations: stats.iterations,
        converged: stats.converged,
    })
}

fn check_marginal(v: ArrayView1<'_, f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::DegenerateMarginals(
            "marginal has a negative or non-finite entry".into(),
        ));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::DegenerateMarginals(format!(
            "marginal sums to {total}, not 1"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ProjectionStats {
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

/// Reusable projector over flat row-major `r x m` buffers.
///
/// The projection of `Z` is `max(0, Z + alpha 1^T + 1 beta^T)` for the
/// maximizers `(alpha, beta)` of the concave dual
/// `-1/2 |max(0, Z + alpha 1^T + 1 beta^T)|^2 + a.alpha + b.beta`.
/// One sweep maximizes exactly over `beta` (column simplices) and then over
/// `alpha` (row simplices), which is Dykstra's iteration for the column and
/// row sets. Between sweeps a damped semismooth Newton step on the same
/// dual gives fast local convergence. Every sweep ends on the rows, so
/// returned iterates have exact row sums and only the column sums carry
/// the residual.
#[derive(Clone, Debug)]
pub(crate) struct DykstraProjector {
    a: Vec<f64>,
    b: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    newton: bool,
    col_buf: Vec<f64>,
    col_sums: Vec<f64>,
    scratch: Vec<f64>,
    mask: Vec<f64>,
}

impl DykstraProjector {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        let (r, m) = (a.len(), b.len());
        Self {
            a,
            b,
            alpha: vec![0.0; r],
            beta: vec![0.0; m],
            newton: true,
            col_buf: vec![0.0; r],
            col_sums: vec![0.0; m],
            scratch: Vec::with_capacity(r.max(m)),
            mask: vec![0.0; r * m],
        }
    }

    /// Plain sweeps only, without Newton steps.
    #[allow(dead_code)]
    pub fn sweeps_only(mut self) -> Self {
        self.newton = false;
        self
    }

    /// Forgets the warm-start duals.
    #[allow(dead_code)]
    pub fn reset(&mut self) {
        self.alpha.iter_mut().for_each(|c| *c = 0.0);
        self.beta.iter_mut().for_each(|c| *c = 0.0);
    }

    /// Writes the projection of `input` into `out`.
    pub fn project(
        &mut self,
        input: &[f64],
        out: &mut [f64],
        tol: f64,
        max_iters: usize,
    ) -> ProjectionStats {
        let mut gap;
        let mut iterations = 0;
        loop {
            iterations += 1;
            self.update_columns(input);
            self.update_rows(input);
            self.primal(input, out);
            gap = self.column_gap(out);
            if gap <= tol || iterations >= max_iters.max(1) {
                break;
            }
            if self.newton {
                self.newton_step(input, out);
            }
        }
        ProjectionStats {
            iterations,
            gap,
            converged: gap <= tol,
        }
    }

    fn update_rows(&mut self, z: &[f64]) {
        let m = self.b.len();
        for (i, row) in z.chunks_exact(m).enumerate() {
            self.scratch.clear();
            self.scratch
                .extend(row.iter().zip(&self.beta).map(|(v, b)| v + b));
            self.alpha[i] = -simplex_threshold(&mut self.scratch, self.a[i]);
        }
    }

    fn update_columns(&mut self, z: &[f64]) {
        let (r, m) = (self.a.len(), self.b.len());
        for j in 0..m {
            for i in 0..r {
                self.col_buf[i] = z[i * m + j] + self.alpha[i];
            }
            self.scratch.clear();
            self.scratch.extend_from_slice(&self.col_buf);
            self.beta[j] = -simplex_threshold(&mut self.scratch, self.b[j]);
        }
    }

    fn primal(&self, z: &[f64], out: &mut [f64]) {
        let m = self.b.len();
        for ((o, zr), al) in out.chunks_exact_mut(m).zip(z.chunks_exact(m)).zip(&self.alpha) {
            for ((o, v), be) in o.iter_mut().zip(zr).zip(&self.beta) {
                *o = (v + al + be).max(0.0);
            }
        }
    }

    fn dual_value(&self, z: &[f64], alpha: &[f64], beta: &[f64]) -> f64 {
        let m = self.b.len();
        let mut quad = 0.0;
        for (zr, al) in z.chunks_exact(m).zip(alpha) {
            for (v, be) in zr.iter().zip(beta) {
                let p = (v + al + be).max(0.0);
                quad += p * p;
            }
        }
        let lin: f64 = self.a.iter().zip(alpha).map(|(x, y)| x * y).sum::<f64>()
            + self.b.iter().zip(beta).map(|(x, y)| x * y).sum::<f64>();
        lin - 0.5 * quad
    }

    /// One damped Newton step on the dual from the current duals; `pi`
    /// holds the primal iterate they imply.
    fn newton_step(&mut self, z: &[f64], pi: &[f64]) {
        let (r, m) = (self.a.len(), self.b.len());
        let n = r + m;
        let mut grad = vec![0.0; n];
        let mut row_cnt = vec![0.0; r];
        let mut col_cnt = vec![0.0; m];
        for (i, row) in pi.chunks_exact(m).enumerate() {
            let mut total = 0.0;
            for (j, &p) in row.iter().enumerate() {
                total += p;
                grad[r + j] += p;
                let on = if p > 0.0 { 1.0 } else { 0.0 };
                self.mask[i * m + j] = on;
                row_cnt[i] += on;
                col_cnt[j] += on;
            }
            grad[i] = self.a[i] - total;
        }
        for j in 0..m {
            grad[r + j] = self.b[j] - grad[r + j];
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            return;
        }
        let max_cnt = row_cnt.iter().chain(&col_cnt).copied().fold(1.0, f64::max);
        let shift = 1e-10 * max_cnt;
        let diag: Vec<f64> = row_cnt.iter().chain(&col_cnt).map(|c| c + shift).collect();
        let mask = &self.mask;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..r {
                let row = &mask[i * m..(i + 1) * m];
                let xr = x[i];
                let mut acc = diag[i] * xr;
                for j in 0..m {
                    let w = row[j];
                    acc += w * x[r + j];
                    y[r + j] += w * xr;
                }
                y[i] = acc;
            }
        };

        // preconditioned conjugate gradients on (M + shift I) d = grad
        let mut d = vec![0.0; n];
        let mut res = grad.clone();
        let mut zv: Vec<f64> = res.iter().zip(&diag).map(|(x, q)| x / q).collect();
        let mut p = zv.clone();
        let mut rz: f64 = res.iter().zip(&zv).map(|(x, y)| x * y).sum();
        let mut mp = vec![0.0; n];
        let rtol = (1e-2 * gnorm).min(1e-3) * gnorm;
        for _ in 0..200 {
            for (j, v) in mp[r..].iter_mut().enumerate() {
                *v = diag[r + j] * p[r + j];
            }
            apply(&p, &mut mp);
            let pmp: f64 = p.iter().zip(&mp).map(|(x, y)| x * y).sum();
            if !(pmp > 0.0) {
                break;
            }
            let step = rz / pmp;
            for k in 0..n {
                d[k] += step * p[k];
                res[k] -= step * mp[k];
            }
            if res.iter().map(|x| x * x).sum::<f64>().sqrt() <= rtol {
                break;
            }
            for k in 0..n {
                zv[k] = res[k] / diag[k];
            }
            let rz_next: f64 = res.iter().zip(&zv).map(|(x, y)| x * y).sum();
            let ratio = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = zv[k] + ratio * p[k];
            }
        }

        // backtracking on the dual value
        let base = self.dual_value(z, &self.alpha, &self.beta);
        let slope: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
        if !(slope > 0.0) {
            return;
        }
        let mut t = 1.0;
        let mut alpha = vec![0.0; r];
        let mut beta = vec![0.0; m];
        for _ in 0..30 {
            for i in 0..r {
                alpha[i] = self.alpha[i] + t * d[i];
            }
            for j in 0..m {
                beta[j] = self.beta[j] + t * d[r + j];
            }
            if self.dual_value(z, &alpha, &beta) >= base + 1e-4 * t * slope {
                self.alpha.copy_from_slice(&alpha);
                self.beta.copy_from_slice(&beta);
                return;
            }
            t *= 0.5;
        }
    }

    fn column_gap(&mut self, plan: &[f64]) -> f64 {
        let m = self.b.len();
        self.col_sums.iter_mut().for_each(|c| *c = 0.0);
        for row in plan.chunks_exact(m) {
            for (c, v) in self.col_sums.iter_mut().zip(row) {
                *c += v;
            }
        }
        self.col_sums
            .iter()
            .zip(&self.b)
            .map(|(c, b)| (c - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Threshold `tau` with `sum max(0, v - tau) = total` (Michelot's
/// pivoting); `v` is used as scratch. For `total = 0` returns `max v`.
fn simplex_threshold(v: &mut Vec<f64>, total: f64) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if total <= 0.0 || v.is_empty() {
        return max;
    }
    let mut sum: f64 = v.iter().sum();
    let mut tau = (sum - total) / v.len() as f64;
    loop {
        let before = v.len();
        v.retain(|&x| x > tau);
        if v.is_empty() {
            return max - total;
        }
        if v.len() == before {
            return tau;
        }
        sum = v.iter().sum();
        tau = (sum - total) / v.len() as f64;
    }
}

/// Euclidean projection of `matrix` onto the affine set alone (no sign
/// constraint). Exposed for tests and diagnostics.
pub fn project_affine(
    matrix: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> Array2<f64> {
    let (r, m) = matrix.dim();
    let rows = matrix.sum_axis(ndarray::Axis(1));
    let row_shift: Array1<f64> = (&a - &rows) / m as f64;
    let mut out = matrix.clone();
    for (mut row, s) in out.outer_iter_mut().zip(row_shift.iter()) {
        row.mapv_inplace(|v| v + s);
    }
    let cols = out.sum_axis(ndarray::Axis(0));
    let col_shift: Array1<f64> = (&b - &cols) / r as f64;
    for mut row in out.outer_iter_mut() {
        row.iter_mut()
            .zip(col_shift.iter())
            .for_each(|(v, s)| *v += s);
    }
    out
}
