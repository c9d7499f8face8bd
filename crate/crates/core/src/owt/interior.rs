//! Primal-dual interior point method for the weak transport QP.
//!
//! Mehrotra predictor-corrector on
//! `min f(pi)` s.t. row sums `a`, column sums `b`, `pi >= 0`.
//! The Hessian of `f` is block diagonal with one rank-`d` block
//! `(2 / a_i) Y Y^T` per row, so the barrier-augmented blocks are inverted
//! with the Woodbury identity and each Newton system collapses to a dense
//! `(m - 1) x (m - 1)` system in the column multipliers (the last column
//! constraint is implied by the others).

use ndarray::Array2;

use super::{IterationRecord, Problem, Scratch, SolverConfig, SolverTrace};
use crate::linalg::{backward, cholesky_in_place, cholesky_regularized, forward};
use crate::error::Result;

const MAX_ITERS: usize = 200;
const STEP_FRACTION: f64 = 0.995;

/// Row-wise pieces of `Q = H + Z / Pi` for the current iterate.
struct Factor {
    /// `pi / z`, the inverse of the barrier diagonal.
    e: Vec<f64>,
    /// Lower Cholesky factors of `K_i = (a_i / 2) I + Y^T E_i Y`.
    chol: Vec<f64>,
    /// `w_i = Q_i^{-1} 1`.
    w: Vec<f64>,
    /// `1^T Q_i^{-1} 1`.
    s: Vec<f64>,
    /// Cholesky factor of the column Schur complement.
    schur: Vec<f64>,
}

pub(super) fn minimize(problem: &Problem, cfg: &SolverConfig) -> Result<(Vec<f64>, SolverTrace)> {
    let (r, m, d) = (problem.r, problem.m, problem.d);
    let n = r * m;
    let scale = problem.data_scale();
    let mut trace = SolverTrace::default();

    let mut pi: Vec<f64> = Vec::with_capacity(n);
    for &ai in &problem.a {
        for &bj in &problem.b {
            pi.push(ai * bj);
        }
    }
    if scale <= f64::MIN_POSITIVE || m == 1 {
        // every plan is optimal, or the only feasible one
        trace.converged = true;
        return Ok((pi, trace));
    }

    let mut scratch = Scratch::new(problem);
    let mut grad = vec![0.0; n];
    problem.gradient(&pi, &mut grad, &mut scratch);

    // dual start: z = G - alpha with every slack at least `scale`
    let mut alpha: Vec<f64> = grad
        .chunks_exact(m)
        .map(|g| g.iter().copied().fold(f64::INFINITY, f64::min) - scale)
        .collect();
    let mut beta = vec![0.0; m];
    let mut z: Vec<f64> = (0..n).map(|k| grad[k] - alpha[k / m]).collect();

    let gap_target = cfg.obj_tol.min(1e-6) * 1e-5 * scale;

    let mut factor = Factor {
        e: vec![0.0; n],
        chol: vec![0.0; r * d * d],
        w: vec![0.0; n],
        s: vec![0.0; r],
        schur: vec![0.0; (m - 1) * (m - 1)],
    };
    let mut rho = vec![0.0; n];
    let mut rp = vec![0.0; r + m];
    let mut rd = vec![0.0; n];
    let mut dpi_aff = vec![0.0; n];
    let mut dz_aff = vec![0.0; n];
    let mut dpi = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dalpha = vec![0.0; r];
    let mut dbeta = vec![0.0; m];
    let mut hdpi = vec![0.0; n];
    // smallest complementarity among iterates with accurate residuals
    let mut best: Option<(f64, Vec<f64>)> = None;

    for _ in 0..MAX_ITERS.min(cfg.max_iters) {
        // residuals
        problem.gradient(&pi, &mut grad, &mut scratch);
        for k in 0..n {
            rd[k] = grad[k] - alpha[k / m] - beta[k % m] - z[k];
        }
        primal_residual(problem, &pi, &mut rp);
        let comp: f64 = pi.iter().zip(&z).map(|(p, q)| p * q).sum();
        let mu = comp / n as f64;
        let feas = rp.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let dual_inf = rd.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let accurate = dual_inf <= 1e-9 * scale && feas <= 1e-14;
        if accurate && comp <= gap_target {
            trace.converged = true;
            break;
        }
        if accurate {
            if best.as_ref().is_none_or(|(c, _)| comp < *c) {
                best = Some((comp, pi.clone()));
            }
        } else if best.is_some() && (dual_inf > 1e-7 * scale || feas > 1e-10) {
            // the Newton systems lost accuracy near the boundary; fall back
            break;
        }

        if !build_factor(problem, &pi, &z, &mut factor) {
            // numerical breakdown; keep the last iterate
            break;
        }

        // predictor
        for k in 0..n {
            rho[k] = -rd[k] - z[k];
        }
        solve_newton(problem, &factor, &rho, &rp, &mut dpi_aff, &mut dalpha, &mut dbeta, &mut hdpi);
        for k in 0..n {
            dz_aff[k] = -z[k] - z[k] / pi[k] * dpi_aff[k];
        }
        let step_aff = max_step(&pi, &dpi_aff).min(max_step(&z, &dz_aff)).min(1.0);
        let mu_aff: f64 = (0..n)
            .map(|k| (pi[k] + step_aff * dpi_aff[k]) * (z[k] + step_aff * dz_aff[k]))
            .sum::<f64>()
            / n as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // corrector
        for k in 0..n {
            let target = sigma * mu - dpi_aff[k] * dz_aff[k];
            rho[k] = -rd[k] - z[k] + target / pi[k];
        }
        solve_newton(problem, &factor, &rho, &rp, &mut dpi, &mut dalpha, &mut dbeta, &mut hdpi);
        for k in 0..n {
            let target = sigma * mu - dpi_aff[k] * dz_aff[k];
            dz[k] = (target - pi[k] * z[k] - z[k] * dpi[k]) / pi[k];
        }
        let step = (STEP_FRACTION * max_step(&pi, &dpi).min(max_step(&z, &dz))).min(1.0);
        if !step.is_finite() || dpi.iter().chain(&dz).any(|v| !v.is_finite()) {
            break;
        }
        for k in 0..n {
            pi[k] += step * dpi[k];
            z[k] += step * dz[k];
        }
        for i in 0..r {
            alpha[i] += step * dalpha[i];
        }
        for j in 0..m {
            beta[j] += step * dbeta[j];
        }
        trace.records.push(IterationRecord {
            objective: problem.objective_with(&pi, &mut scratch.cond),
            step_size: step,
            feasibility_gap: feas,
        });
        if step < 1e-12 {
            break;
        }
    }
    trace.iterations_used = trace.records.len();
    if !trace.converged {
        // near the floor of double precision the target may be out of
        // reach; accept the best accurate iterate if its gap is small
        // relative to the objective
        if let Some((comp, best_pi)) = best {
            let f = problem.objective_with(&best_pi, &mut scratch.cond);
            trace.converged = comp <= 1e3 * gap_target || comp <= cfg.obj_tol * f.abs().max(1e-6 * scale);
            pi = best_pi;
        }
    }
    Ok((pi, trace))
}

fn primal_residual(problem: &Problem, pi: &[f64], rp: &mut [f64]) {
    let (r, m) = (problem.r, problem.m);
    rp.iter_mut().for_each(|v| *v = 0.0);
    for (i, row) in pi.chunks_exact(m).enumerate() {
        let mut total = 0.0;
        for (j, &p) in row.iter().enumerate() {
            total += p;
            rp[r + j] += p;
        }
        rp[i] = total - problem.a[i];
    }
    for j in 0..m {
        rp[r + j] -= problem.b[j];
    }
    rp[r + m - 1] = 0.0;
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn build_factor(problem: &Problem, pi: &[f64], z: &[f64], fac: &mut Factor) -> bool {
    let (r, m, d) = (problem.r, problem.m, problem.d);
    let cols = d + 1;
    let mut wmat = Array2::<f64>::zeros((m, r * cols));
    let mut diag = vec![0.0; m];
    let mut k_mat = vec![0.0; d * d];
    let mut ye = vec![0.0; d];
    let mut t = vec![0.0; d];

    for i in 0..r {
        let e = &mut fac.e[i * m..(i + 1) * m];
        for j in 0..m {
            e[j] = pi[i * m + j] / z[i * m + j];
            diag[j] += e[j];
        }
        // K = (a_i / 2) I + Y^T E Y
        k_mat.iter_mut().for_each(|v| *v = 0.0);
        ye.iter_mut().for_each(|v| *v = 0.0);
        for (j, y) in problem.y.chunks_exact(d).enumerate() {
            for p in 0..d {
                ye[p] += e[j] * y[p];
                for q in 0..=p {
                    k_mat[p * d + q] += e[j] * y[p] * y[q];
                }
            }
        }
        for p in 0..d {
            k_mat[p * d + p] += 0.5 * problem.a[i];
        }
        let l = &mut fac.chol[i * d * d..(i + 1) * d * d];
        l.copy_from_slice(&k_mat);
        if !cholesky_in_place(l, d) {
            return false;
        }
        // t = L^{-1} Y^T E 1
        t.copy_from_slice(&ye);
        forward(l, d, &mut t);
        // columns E Y L^{-T}: row j holds L^{-1} (E_j y_j)
        let w = &mut fac.w[i * m..(i + 1) * m];
        let mut s = 0.0;
        let mut u = vec![0.0; d];
        let mut tt = t.clone();
        backward(l, d, &mut tt); // K^{-1} Y^T E 1
        for (j, y) in problem.y.chunks_exact(d).enumerate() {
            for p in 0..d {
                u[p] = e[j] * y[p];
            }
            forward(l, d, &mut u);
            for p in 0..d {
                wmat[[j, i * cols + p]] = u[p];
            }
            let proj: f64 = y.iter().zip(&tt).map(|(a, b)| a * b).sum();
            w[j] = e[j] - e[j] * proj;
            s += w[j];
        }
        fac.s[i] = s;
        let inv = 1.0 / s.sqrt();
        for j in 0..m {
            wmat[[j, i * cols + d]] = w[j] * inv;
        }
    }

    let mut schur = wmat.dot(&wmat.t());
    schur.mapv_inplace(|v| -v);
    for j in 0..m {
        schur[[j, j]] += diag[j];
    }
    let k = m - 1;
    for p in 0..k {
        for q in 0..k {
            fac.schur[p * k + q] = schur[[p, q]];
        }
    }
    cholesky_regularized(&mut fac.schur, k);
    fac.schur.iter().all(|v| v.is_finite())
}

/// `out = Q_i^{-1} v` for row `i`.
fn apply_qinv(problem: &Problem, fac: &Factor, i: usize, v: &[f64], out: &mut [f64], u: &mut [f64]) {
    let (m, d) = (problem.m, problem.d);
    let e = &fac.e[i * m..(i + 1) * m];
    let l = &fac.chol[i * d * d..(i + 1) * d * d];
    u.iter_mut().for_each(|x| *x = 0.0);
    for (j, y) in problem.y.chunks_exact(d).enumerate() {
        let t = e[j] * v[j];
        out[j] = t;
        for p in 0..d {
            u[p] += t * y[p];
        }
    }
    forward(l, d, u);
    backward(l, d, u);
    for (j, y) in problem.y.chunks_exact(d).enumerate() {
        let proj: f64 = y.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        out[j] -= e[j] * proj;
    }
}

/// Solves `Q dpi - B^T dlam = rho`, `B dpi = -rp`, followed by rounds of
/// iterative refinement on the full residual of both equations.
#[allow(clippy::too_many_arguments)]
fn solve_newton(
    problem: &Problem,
    fac: &Factor,
    rho: &[f64],
    rp: &[f64],
    dpi: &mut [f64],
    dalpha: &mut [f64],
    dbeta: &mut [f64],
    buf: &mut [f64],
) {
    let (r, m, d) = (problem.r, problem.m, problem.d);
    let n = r * m;
    solve_once(problem, fac, rho, rp, dpi, dalpha, dbeta, buf);
    let mut res_d = vec![0.0; n];
    let mut res_p = vec![0.0; r + m];
    let mut cpi = vec![0.0; n];
    let mut ca = vec![0.0; r];
    let mut cb = vec![0.0; m];
    let mut hy = vec![0.0; d];
    for _round in 0..2 {
        // res_d = rho - (H + Z / Pi) dpi + dalpha 1^T + 1 dbeta^T
        for i in 0..r {
            let row = &dpi[i * m..(i + 1) * m];
            hy.iter_mut().for_each(|v| *v = 0.0);
            for (p, y) in row.iter().zip(problem.y.chunks_exact(d)) {
                for k in 0..d {
                    hy[k] += p * y[k];
                }
            }
            let c = 2.0 / problem.a[i];
            for (j, y) in problem.y.chunks_exact(d).enumerate() {
                let h: f64 = c * y.iter().zip(&hy).map(|(u, v)| u * v).sum::<f64>();
                let k = i * m + j;
                res_d[k] = rho[k] - h - row[j] / fac.e[k] + dalpha[i] + dbeta[j];
            }
        }
        // correction must satisfy B c = -rp - B dpi, i.e. "rp" = rp + B dpi
        primal_residual_of_step(problem, dpi, &mut res_p);
        for k in 0..r + m {
            res_p[k] += rp[k];
        }
        solve_once(problem, fac, &res_d, &res_p, &mut cpi, &mut ca, &mut cb, buf);
        for k in 0..n {
            dpi[k] += cpi[k];
        }
        for i in 0..r {
            dalpha[i] += ca[i];
        }
        for j in 0..m {
            dbeta[j] += cb[j];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_once(
    problem: &Problem,
    fac: &Factor,
    rho: &[f64],
    rp: &[f64],
    dpi: &mut [f64],
    dalpha: &mut [f64],
    dbeta: &mut [f64],
    buf: &mut [f64],
) {
    let (r, m, d) = (problem.r, problem.m, problem.d);
    let mut u = vec![0.0; d];
    // dpi = Q^{-1} rho
    for i in 0..r {
        apply_qinv(problem, fac, i, &rho[i * m..(i + 1) * m], &mut dpi[i * m..(i + 1) * m], &mut u);
    }
    let mut h = vec![0.0; r + m];
    // h = -rp - B Q^{-1} rho
    primal_residual_of_step(problem, dpi, &mut h);
    for k in 0..r + m {
        h[k] = -rp[k] - h[k];
    }
    h[r + m - 1] = 0.0;
    solve_multipliers(problem, fac, &h, dalpha, dbeta);
    // dpi += Q^{-1} (dalpha 1 + dbeta)
    for i in 0..r {
        apply_qinv(problem, fac, i, dbeta, &mut buf[i * m..(i + 1) * m], &mut u);
        for j in 0..m {
            dpi[i * m + j] += buf[i * m + j] + dalpha[i] * fac.w[i * m + j];
        }
    }
}

fn primal_residual_of_step(problem: &Problem, dpi: &[f64], out: &mut [f64]) {
    let (r, m) = (problem.r, problem.m);
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, row) in dpi.chunks_exact(m).enumerate() {
        let mut total = 0.0;
        for (j, &p) in row.iter().enumerate() {
            total += p;
            out[r + j] += p;
        }
        out[i] = total;
    }
    out[r + m - 1] = 0.0;
}

/// Solves `B Q^{-1} B^T (da, db) = h` with `db[m - 1] = 0`.
fn solve_multipliers(problem: &Problem, fac: &Factor, h: &[f64], da: &mut [f64], db: &mut [f64]) {
    let (r, m) = (problem.r, problem.m);
    let k = m - 1;
    let mut rhs: Vec<f64> = h[r..r + k].to_vec();
    for i in 0..r {
        let c = h[i] / fac.s[i];
        let w = &fac.w[i * m..(i + 1) * m];
        for j in 0..k {
            rhs[j] -= w[j] * c;
        }
    }
    forward(&fac.schur, k, &mut rhs);
    backward(&fac.schur, k, &mut rhs);
    db[..k].copy_from_slice(&rhs);
    db[k] = 0.0;
    for i in 0..r {
        let w = &fac.w[i * m..(i + 1) * m];
        let dot: f64 = w[..k].iter().zip(&rhs).map(|(a, b)| a * b).sum();
        da[i] = (h[i] - dot) / fac.s[i];
    }
}
