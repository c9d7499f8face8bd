//! Entropic OT with the product of the marginals as reference measure.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{backward, cholesky_regularized, forward};
use crate::measures::DiscreteMeasure;
use crate::ot::exact::squared_cost;
use crate::plan::TransportPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkhornDomain {
    /// Scaling vectors; fails with [`Error::NumericalUnderflow`] when the
    /// kernel vanishes.
    Linear,
    /// Log-sum-exp updates of the dual potentials.
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Largest allowed column-marginal deviation after a row update.
    pub marginal_tol: f64,
    pub domain: SinkhornDomain,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iters: 100_000,
            marginal_tol: 1e-9,
            domain: SinkhornDomain::Log,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(Error::InvalidConfig("marginal_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornSolution {
    pub plan: TransportPlan,
    /// `<C, pi>`, without the entropy term.
    pub transport_cost: f64,
    pub iterations: usize,
    pub marginal_error: f64,
}

/// Entropic plan between two measures under the squared Euclidean cost.
pub fn sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &SinkhornConfig) -> Result<SinkhornSolution> {
    mu.check_dim(nu.dim())?;
    let cost = squared_cost(mu, nu);
    sinkhorn_with_cost(mu.weights(), nu.weights(), cost.view(), cfg)
}

/// Minimizes `<C, pi> + eps KL(pi | a b^T)` over couplings of `a` and `b`.
pub fn sinkhorn_with_cost(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    let (r, m) = cost.dim();
    if a.len() != r || b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: r * m,
            found: a.len() * b.len(),
        });
    }
    let (ta, tb) = (a.sum(), b.sum());
    if (ta - tb).abs() > 1e-9 * ta.max(tb).max(1.0) {
        return Err(Error::DegenerateMarginals(format!(
            "total masses differ: {ta} vs {tb}"
        )));
    }
    let (matrix, iterations, err) = match cfg.domain {
        SinkhornDomain::Linear => linear(a, b, cost, cfg)?,
        SinkhornDomain::Log => log_domain(a, b, cost, cfg),
    };
    if !(err <= cfg.marginal_tol) {
        return Err(Error::NotConverged {
            iterations,
            residual: err,
        });
    }
    let transport_cost = (&matrix * &cost).sum();
    let plan = TransportPlan::new(matrix, a.to_owned(), b.to_owned())?;
    Ok(SinkhornSolution {
        plan,
        transport_cost,
        iterations,
        marginal_error: err,
    })
}

fn col_error(p: &Array2<f64>, b: ArrayView1<'_, f64>) -> f64 {
    p.sum_axis(Axis(0))
        .iter()
        .zip(b.iter())
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max)
}

fn linear(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<(Array2<f64>, usize, f64)> {
    let (r, m) = cost.dim();
    let kernel = Array2::from_shape_fn((r, m), |(i, j)| a[i] * b[j] * (-cost[[i, j]] / cfg.epsilon).exp());
    let underflow = || Error::NumericalUnderflow {
        epsilon: cfg.epsilon,
    };
    for i in 0..r {
        if a[i] > 0.0 && kernel.row(i).iter().all(|&k| k == 0.0) {
            return Err(underflow());
        }
    }
    let mut u = Array1::<f64>::ones(r);
    let mut v = Array1::<f64>::ones(m);
    let plan_of = |u: &Array1<f64>, v: &Array1<f64>| {
        Array2::from_shape_fn((r, m), |(i, j)| u[i] * kernel[[i, j]] * v[j])
    };
    let mut err = f64::INFINITY;
    let mut it = 0;
    while it < cfg.max_iters {
        it += 1;
        let kv = kernel.dot(&v);
        for i in 0..r {
            u[i] = if a[i] > 0.0 { a[i] / kv[i] } else { 0.0 };
        }
        let ktu = kernel.t().dot(&u);
        for j in 0..m {
            v[j] = if b[j] > 0.0 { b[j] / ktu[j] } else { 0.0 };
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(underflow());
        }
        if it % 10 == 0 || it == cfg.max_iters {
            // columns are exact after the v update; measure the rows
            let p = plan_of(&u, &v);
            err = p
                .sum_axis(Axis(1))
                .iter()
                .zip(a.iter())
                .map(|(s, t)| (s - t).abs())
                .fold(0.0, f64::max);
            if err <= cfg.marginal_tol {
                return Ok((p, it, err));
            }
        }
    }
    Ok((plan_of(&u, &v), it, err))
}

/// Iterations per intermediate stage of the epsilon ladder.
const STAGE_ITERS: usize = 20;

/// Log-domain iterations on a geometric ladder of regularizations that
/// ends at `cfg.epsilon`; each stage starts from the previous potentials.
fn log_domain(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> (Array2<f64>, usize, f64) {
    let (r, m) = cost.dim();
    let log_a: Vec<f64> = a.iter().map(|&w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|&w| w.ln()).collect();
    let mut f = vec![0.0; r];
    let mut g = vec![0.0; m];
    let mut buf = vec![0.0; r.max(m)];

    // f_i = -eps log sum_j b_j exp((g_j - C_ij) / eps)
    let update_f = |f: &mut [f64], g: &[f64], buf: &mut [f64], eps: f64| {
        for i in 0..r {
            for j in 0..m {
                buf[j] = log_b[j] + (g[j] - cost[[i, j]]) / eps;
            }
            f[i] = -eps * log_sum_exp(&buf[..m]);
        }
    };
    let update_g = |g: &mut [f64], f: &[f64], buf: &mut [f64], eps: f64| {
        for j in 0..m {
            for i in 0..r {
                buf[i] = log_a[i] + (f[i] - cost[[i, j]]) / eps;
            }
            g[j] = -eps * log_sum_exp(&buf[..r]);
        }
    };
    let plan_of = |f: &[f64], g: &[f64]| {
        Array2::from_shape_fn((r, m), |(i, j)| {
            if a[i] > 0.0 && b[j] > 0.0 {
                (log_a[i] + log_b[j] + (f[i] + g[j] - cost[[i, j]]) / cfg.epsilon).exp()
            } else {
                0.0
            }
        })
    };

    let eps = cfg.epsilon;
    let top = cost.iter().copied().fold(0.0f64, f64::max);
    let mut it = 0;
    let mut stage = top;
    while stage > 2.0 * eps && it + STAGE_ITERS < cfg.max_iters {
        for _ in 0..STAGE_ITERS {
            update_f(&mut f, &g, &mut buf, stage);
            update_g(&mut g, &f, &mut buf, stage);
        }
        it += STAGE_ITERS;
        stage *= 0.5;
    }

    let mut err = f64::INFINITY;
    let first = it;
    let mut polished = false;
    while it < cfg.max_iters {
        it += 1;
        update_f(&mut f, &g, &mut buf, eps);
        update_g(&mut g, &f, &mut buf, eps);
        if (it - first) % 10 == 0 || it == cfg.max_iters {
            let p = plan_of(&f, &g);
            err = marginal_error(&p, a, b);
            if err <= cfg.marginal_tol {
                return (p, it, err);
            }
            if !polished && it - first >= NEWTON_AFTER && r.min(m) <= NEWTON_MAX_SIDE {
                // slow sweeps signal a nearly decoupled plan; Newton steps
                // on the dual converge quadratically there
                polished = true;
                let budget = NEWTON_STEPS.min(cfg.max_iters - it);
                let (steps, newton_err) = newton_polish(a, b, cost, eps, &mut f, &mut g, cfg.marginal_tol, budget);
                it += steps;
                if newton_err <= cfg.marginal_tol {
                    let p = plan_of(&f, &g);
                    let err = marginal_error(&p, a, b);
                    return (p, it, err);
                }
            }
        }
    }
    (plan_of(&f, &g), it, err)
}

/// Final-stage sweeps after which Newton polishing is tried.
const NEWTON_AFTER: usize = 100;
/// Largest smaller side for which the dense Newton system is formed.
const NEWTON_MAX_SIDE: usize = 2000;
const NEWTON_STEPS: usize = 50;

fn marginal_error(p: &Array2<f64>, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    p.sum_axis(Axis(1))
        .iter()
        .zip(a.iter())
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max)
        .max(col_error(p, b))
}

/// Damped Newton ascent on the dual
/// `<a, f> + <b, g> - eps sum_ij a_i b_j exp((f_i + g_j - C_ij) / eps)`.
///
/// The Hessian couples the potentials only through the plan, so the
/// larger side is eliminated and the smaller one solved densely with its
/// last entry pinned (the dual is invariant under `(f + t, g - t)`).
/// Returns the number of steps taken and the final marginal error; the
/// potentials are only ever moved uphill.
#[allow(clippy::too_many_arguments)]
fn newton_polish(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
    eps: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    max_steps: usize,
) -> (usize, f64) {
    let (r, m) = cost.dim();
    if a.iter().chain(b.iter()).any(|&w| w <= 0.0) {
        return (0, f64::INFINITY);
    }
    let plan = |f: &[f64], g: &[f64]| {
        Array2::from_shape_fn((r, m), |(i, j)| a[i] * b[j] * ((f[i] + g[j] - cost[[i, j]]) / eps).exp())
    };
    let dual = |f: &[f64], g: &[f64], p: &Array2<f64>| {
        let lin: f64 = a.iter().zip(f).map(|(w, v)| w * v).sum::<f64>() + b.iter().zip(g).map(|(w, v)| w * v).sum::<f64>();
        lin - eps * p.sum()
    };
    let mut p = plan(f, g);
    let mut value = dual(f, g, &p);
    let mut err = marginal_error(&p, a, b);
    let mut steps = 0;
    while steps < max_steps && err > tol {
        steps += 1;
        let rows = p.sum_axis(Axis(1));
        let cols = p.sum_axis(Axis(0));
        let ra = &a - &rows;
        let rb = &b - &cols;
        // with (u, v) = (df, dg) / eps:
        // diag(rows) u + P v = ra,  P^T u + diag(cols) v = rb
        let (u, v) = if m <= r {
            let scaled = &p / &rows.view().insert_axis(Axis(1));
            let schur = -p.t().dot(&scaled);
            let rhs = &rb - &scaled.t().dot(&ra);
            let v = solve_pinned(schur, &cols, rhs);
            let u = (&ra - &p.dot(&v)) / &rows;
            (u, v)
        } else {
            let scaled = &p / &cols.view().insert_axis(Axis(0));
            let schur = -scaled.dot(&p.t());
            let rhs = &ra - &scaled.dot(&rb);
            let u = solve_pinned(schur, &rows, rhs);
            let v = (&rb - &p.t().dot(&u)) / &cols;
            (u, v)
        };
        let Some((u, v)) = u.iter().chain(v.iter()).all(|x| x.is_finite()).then_some((u, v)) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let nf: Vec<f64> = f.iter().zip(u.iter()).map(|(x, d)| x + t * eps * d).collect();
            let ng: Vec<f64> = g.iter().zip(v.iter()).map(|(x, d)| x + t * eps * d).collect();
            let np = plan(&nf, &ng);
            let nv = dual(&nf, &ng, &np);
            if nv.is_finite() && nv >= value {
                f.copy_from_slice(&nf);
                g.copy_from_slice(&ng);
                p = np;
                value = nv;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        err = marginal_error(&p, a, b);
    }
    (steps, err)
}

/// Solves `(diag(d) + off) x = rhs` with the last unknown fixed at zero.
fn solve_pinned(mut off: Array2<f64>, d: &Array1<f64>, rhs: Array1<f64>) -> Array1<f64> {
    let n = d.len();
    let k = n - 1;
    let mut x = Array1::zeros(n);
    if k == 0 {
        return x;
    }
    for i in 0..n {
        off[[i, i]] += d[i];
    }
    let mut mat: Vec<f64> = Vec::with_capacity(k * k);
    for i in 0..k {
        mat.extend(off.row(i).iter().take(k));
    }
    let mut sol: Vec<f64> = rhs.iter().take(k).copied().collect();
    cholesky_regularized(&mut mat, k);
    forward(&mat, k, &mut sol);
    backward(&mat, k, &mut sol);
    for i in 0..k {
        x[i] = sol[i];
    }
    x
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
