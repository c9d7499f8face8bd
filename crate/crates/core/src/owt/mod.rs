//! Optimal weak transport between discrete measures.
//!
//! For `mu = sum a_i delta_{x_i}` and `nu = sum b_j delta_{y_j}` the weak
//! cost is the quadratic program
//!
//! ```text
//! V(mu | nu) = min_{pi in Pi(a, b)} sum_i a_i |x_i - (pi y)_i / a_i|^2
//! ```
//!
//! solved here either by a primal-dual interior point method or by
//! (accelerated) projected gradient, projecting onto the transport polytope
//! with Dykstra's algorithm. The objective only sees a
//! plan through its conditional means, so the optimal plan is generally not
//! unique; the value and the barycentric map are.

mod dykstra;
mod interior;

pub use dykstra::{project_affine, project_transport_polytope, Projection};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::plan::{barycentric_projection, BarycentricMap, TransportPlan};
use dykstra::DykstraProjector;

/// Algorithm used by [`solve_owt`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OwtMethod {
    /// Projected gradient (FISTA by default) with Dykstra projections.
    ProximalGradient,
    /// Primal-dual interior point method; much faster to high accuracy.
    #[default]
    InteriorPoint,
}

/// Iteration controls for [`solve_owt`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once the objective decrease relative to the objective (floored
    /// at `1e-6` times the data spread) stays below this for several
    /// consecutive iterations. The interior point method reads it as a
    /// relative duality gap.
    pub obj_tol: f64,
    /// Largest accepted deviation of plan marginals.
    pub marginal_tol: f64,
    pub dykstra_max_iters: usize,
    /// Backtracking factor in `(0, 1)`.
    pub line_search_shrink: f64,
    /// First trial step; `None` uses the inverse Lipschitz constant of the
    /// gradient, which the backtracking test then never rejects.
    pub initial_step: Option<f64>,
    /// Function-value restart of the momentum; keeps the trace monotone.
    pub restart_on_increase: bool,
    /// FISTA extrapolation. `false` gives the plain proximal iteration.
    pub accelerated: bool,
    /// Seeds the perturbation of the initial independent coupling.
    pub seed: u64,
    pub method: OwtMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            obj_tol: 1e-7,
            marginal_tol: 1e-8,
            dykstra_max_iters: 2000,
            line_search_shrink: 0.5,
            initial_step: None,
            restart_on_increase: true,
            accelerated: true,
            seed: 0,
            method: OwtMethod::InteriorPoint,
        }
    }
}

impl SolverConfig {
    /// Defaults with the interior point method.
    pub fn interior_point() -> Self {
        Self {
            method: OwtMethod::InteriorPoint,
            ..Self::default()
        }
    }

    /// Defaults with accelerated projected gradient.
    pub fn proximal() -> Self {
        Self {
            method: OwtMethod::ProximalGradient,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.obj_tol > 0.0 && self.marginal_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::InvalidConfig(
                "line_search_shrink must lie in (0, 1)".into(),
            ));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig("initial_step must be positive".into()));
            }
        }
        if self.max_iters == 0 || self.dykstra_max_iters == 0 {
            return Err(Error::InvalidConfig("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub step_size: f64,
    pub feasibility_gap: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Output of [`solve_owt`].
#[derive(Clone, Debug)]
pub struct OwtSolution {
    pub plan: TransportPlan,
    /// `V(mu | nu)`, the objective at `plan`.
    pub value: f64,
    pub map: BarycentricMap,
    pub trace: SolverTrace,
}

/// `sum_i a_i |x_i - (pi y)_i / a_i|^2`.
pub fn owt_objective(plan: &TransportPlan, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let problem = Problem::new(mu, nu, None)?;
    plan.check_shape(mu, nu)?;
    Ok(problem.objective(plan.matrix().as_standard_layout().as_slice().unwrap()))
}

/// Gradient of [`owt_objective`] with respect to the plan entries:
/// `2 (s_i - x_i) . y_j` with `s_i` the conditional mean of row `i`.
pub fn owt_gradient(
    plan: &TransportPlan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<Array2<f64>> {
    let problem = Problem::new(mu, nu, None)?;
    plan.check_shape(mu, nu)?;
    let mut grad = vec![0.0; problem.r * problem.m];
    let mut scratch = Scratch::new(&problem);
    problem.gradient(
        plan.matrix().as_standard_layout().as_slice().unwrap(),
        &mut grad,
        &mut scratch,
    );
    Ok(Array2::from_shape_vec((problem.r, problem.m), grad).expect("r * m entries"))
}

/// Solves the weak transport problem from the seeded default start.
pub fn solve_owt(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &SolverConfig) -> Result<OwtSolution> {
    solve_owt_from(mu, nu, cfg, None)
}

/// Like [`solve_owt`], starting from `init` when given (for instance the
/// plan of a previous solve between measures with the same weights). The
/// interior point method always starts from the independent coupling and
/// ignores `init`.
pub fn solve_owt_from(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &SolverConfig,
    init: Option<&TransportPlan>,
) -> Result<OwtSolution> {
    cfg.validate()?;
    mu.check_dim(nu.dim())?;
    if let Some(p) = init {
        p.check_shape(mu, nu)?;
    }
    if mu == nu {
        return identity_solution(mu);
    }
    let center = nu.mean();
    let problem = Problem::new(mu, nu, Some(center.view()))?;
    let (matrix, trace) = match cfg.method {
        OwtMethod::ProximalGradient => problem.minimize(cfg, init)?,
        OwtMethod::InteriorPoint => {
            let (pi, trace) = interior::minimize(&problem, cfg)?;
            (to_matrix(pi, problem.r, problem.m), trace)
        }
    };

    let plan = TransportPlan::new(matrix, mu.weights().to_owned(), nu.weights().to_owned())?;
    let value = owt_objective(&plan, mu, nu)?;
    let map = barycentric_projection(&plan, mu, nu)?;
    Ok(OwtSolution {
        plan,
        value,
        map,
        trace,
    })
}

/// The diagonal coupling of a measure with itself is optimal with value zero.
fn identity_solution(mu: &DiscreteMeasure) -> Result<OwtSolution> {
    Problem::new(mu, mu, None)?;
    let a = mu.weights().to_owned();
    let plan = TransportPlan::new(Array2::from_diag(&a), a.clone(), a)?;
    Ok(OwtSolution {
        plan,
        value: 0.0,
        map: BarycentricMap::identity(mu),
        trace: SolverTrace {
            records: vec![],
            iterations_used: 0,
            converged: true,
        },
    })
}

/// Flat row-major copy of the data, optionally shifted by a common center.
struct Problem {
    r: usize,
    m: usize,
    d: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

struct Scratch {
    cond: Vec<f64>,
    resid: Vec<f64>,
}

impl Scratch {
    fn new(p: &Problem) -> Self {
        Self {
            cond: vec![0.0; p.r * p.d],
            resid: vec![0.0; p.r * p.d],
        }
    }
}

impl Problem {
    fn new(
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        center: Option<ndarray::ArrayView1<'_, f64>>,
    ) -> Result<Self> {
        mu.check_dim(nu.dim())?;
        let a = mu.weights().to_vec();
        if let Some(row) = a.iter().position(|&w| w <= 0.0) {
            return Err(Error::ZeroRowWeight { row });
        }
        let d = mu.dim();
        let flatten = |m: &DiscreteMeasure| -> Vec<f64> {
            let mut out = Vec::with_capacity(m.len() * d);
            for p in m.points().outer_iter() {
                for (k, v) in p.iter().enumerate() {
                    out.push(v - center.map_or(0.0, |c| c[k]));
                }
            }
            out
        };
        Ok(Self {
            r: mu.len(),
            m: nu.len(),
            d,
            a,
            b: nu.weights().to_vec(),
            x: flatten(mu),
            y: flatten(nu),
        })
    }

    /// Conditional means `s_i = (pi y)_i / a_i` into `cond`.
    fn conditional_means(&self, pi: &[f64], cond: &mut [f64]) {
        let (m, d) = (self.m, self.d);
        cond.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in pi.chunks_exact(m).enumerate() {
            let s = &mut cond[i * d..(i + 1) * d];
            for (p, y) in row.iter().zip(self.y.chunks_exact(d)) {
                if *p != 0.0 {
                    for (sk, yk) in s.iter_mut().zip(y) {
                        *sk += p * yk;
                    }
                }
            }
            let inv = 1.0 / self.a[i];
            s.iter_mut().for_each(|v| *v *= inv);
        }
    }

    fn objective(&self, pi: &[f64]) -> f64 {
        let mut cond = vec![0.0; self.r * self.d];
        self.objective_with(pi, &mut cond)
    }

    fn objective_with(&self, pi: &[f64], cond: &mut [f64]) -> f64 {
        self.conditional_means(pi, cond);
        let d = self.d;
        cond.chunks_exact(d)
            .zip(self.x.chunks_exact(d))
            .zip(&self.a)
            .map(|((s, x), a)| a * s.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
            .sum()
    }

    /// Writes the gradient into `grad` and returns the objective.
    fn gradient(&self, pi: &[f64], grad: &mut [f64], scratch: &mut Scratch) -> f64 {
        let (m, d) = (self.m, self.d);
        let f = self.objective_with(pi, &mut scratch.cond);
        for ((e, s), x) in scratch
            .resid
            .iter_mut()
            .zip(&scratch.cond)
            .zip(&self.x)
        {
            *e = 2.0 * (s - x);
        }
        for (i, grow) in grad.chunks_exact_mut(m).enumerate() {
            let e = &scratch.resid[i * d..(i + 1) * d];
            for (g, y) in grow.iter_mut().zip(self.y.chunks_exact(d)) {
                *g = e.iter().zip(y).map(|(u, v)| u * v).sum();
            }
        }
        f
    }

    /// Upper bound on the Lipschitz constant of the gradient:
    /// `2 lambda_max(Y^T Y) / min_i a_i`.
    fn lipschitz(&self) -> f64 {
        let d = self.d;
        let mut gram = vec![0.0; d * d];
        for y in self.y.chunks_exact(d) {
            for k in 0..d {
                for l in 0..d {
                    gram[k * d + l] += y[k] * y[l];
                }
            }
        }
        let lmax = top_eigenvalue(&gram, d);
        let amin = self.a.iter().copied().fold(f64::INFINITY, f64::min);
        2.0 * lmax / amin
    }

    /// Spread of the (centered) data, used to scale the stopping test.
    fn data_scale(&self) -> f64 {
        let d = self.d;
        let sx: f64 = self
            .x
            .chunks_exact(d)
            .zip(&self.a)
            .map(|(x, a)| a * x.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let sy: f64 = self
            .y
            .chunks_exact(d)
            .zip(&self.b)
            .map(|(y, b)| b * y.iter().map(|v| v * v).sum::<f64>())
            .sum();
        sx + sy
    }

    fn initial_plan(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.r * self.m);
        for &ai in &self.a {
            for &bj in &self.b {
                out.push(ai * bj * (1.0 + rng.random_range(-0.5..0.5)));
            }
        }
        out
    }

    fn minimize(
        &self,
        cfg: &SolverConfig,
        init: Option<&TransportPlan>,
    ) -> Result<(Array2<f64>, SolverTrace)> {
        const PATIENCE: usize = 5;
        let n = self.r * self.m;
        let mut proj = DykstraProjector::new(self.a.clone(), self.b.clone());
        let mut scratch = Scratch::new(self);

        let start = match init {
            Some(p) => p.matrix().as_standard_layout().as_slice().unwrap().to_vec(),
            None => self.initial_plan(cfg.seed),
        };
        let mut current = vec![0.0; n];
        proj.project(&start, &mut current, inner_tol(cfg), cfg.dykstra_max_iters);
        let mut f_current = self.objective_with(&current, &mut scratch.cond);

        let lipschitz = self.lipschitz();
        let mut step = match cfg.initial_step {
            Some(s) => s,
            None if lipschitz > 0.0 => 1.0 / lipschitz,
            None => 1.0,
        };
        let scale = self.data_scale();

        let mut previous = current.clone();
        let mut extrap = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut trial_in = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut t = 1.0f64;
        let mut calm = 0usize;
        let mut trace = SolverTrace::default();

        if scale <= f64::MIN_POSITIVE {
            // every support point coincides with the target mean; any plan is optimal
            trace.converged = true;
            return Ok((to_matrix(current, self.r, self.m), trace));
        }

        for _ in 0..cfg.max_iters {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let omega = if cfg.accelerated { (t - 1.0) / t_next } else { 0.0 };
            for ((e, c), p) in extrap.iter_mut().zip(&current).zip(&previous) {
                *e = c + omega * (c - p);
            }

            let (mut f_trial, mut gap) =
                self.backtrack(cfg, &extrap, &mut grad, &mut trial_in, &mut trial, &mut step, &mut proj, &mut scratch);

            let mut accepted = true;
            if cfg.restart_on_increase && f_trial > f_current {
                t = 1.0;
                if omega != 0.0 {
                    extrap.copy_from_slice(&current);
                    let redo = self.backtrack(
                        cfg, &extrap, &mut grad, &mut trial_in, &mut trial, &mut step, &mut proj, &mut scratch,
                    );
                    f_trial = redo.0;
                    gap = redo.1;
                }
                accepted = f_trial <= f_current;
            } else {
                t = t_next;
            }

            let decrease = if accepted {
                let dec = f_current - f_trial;
                std::mem::swap(&mut previous, &mut current);
                current.copy_from_slice(&trial);
                f_current = f_trial;
                dec
            } else {
                previous.copy_from_slice(&current);
                0.0
            };
            trace.records.push(IterationRecord {
                objective: f_current,
                step_size: step,
                feasibility_gap: if accepted { gap } else { trace.records.last().map_or(gap, |r| r.feasibility_gap) },
            });

            if decrease.abs() <= cfg.obj_tol * f_current.abs().max(1e-6 * scale) {
                calm += 1;
                if calm >= PATIENCE {
                    trace.converged = true;
                    break;
                }
            } else {
                calm = 0;
            }
        }
        trace.iterations_used = trace.records.len();

        // tighten the returned plan to the marginal tolerance
        let mut last = vec![0.0; n];
        let stats = proj.project(&current, &mut last, cfg.marginal_tol, cfg.dykstra_max_iters);
        if !stats.converged {
            trace.converged = false;
        }
        Ok((to_matrix(last, self.r, self.m), trace))
    }

    /// One projected gradient step from `from` with backtracking on the
    /// quadratic upper model. Returns the objective and marginal gap of
    /// the accepted point, which is left in `out`.
    #[allow(clippy::too_many_arguments)]
    fn backtrack(
        &self,
        cfg: &SolverConfig,
        from: &[f64],
        grad: &mut [f64],
        trial_in: &mut [f64],
        out: &mut [f64],
        step: &mut f64,
        proj: &mut DykstraProjector,
        scratch: &mut Scratch,
    ) -> (f64, f64) {
        let f_from = self.gradient(from, grad, scratch);
        let mut shrinks = 0;
        loop {
            for ((z, p), g) in trial_in.iter_mut().zip(from).zip(grad.iter()) {
                *z = p - *step * g;
            }
            let stats = proj.project(trial_in, out, inner_tol(cfg), cfg.dykstra_max_iters);
            let f_out = self.objective_with(out, &mut scratch.cond);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((o, p), g) in out.iter().zip(from).zip(grad.iter()) {
                let delta = o - p;
                lin += g * delta;
                sq += delta * delta;
            }
            let model = f_from + lin + sq / (2.0 * *step);
            if f_out <= model + 1e-14 * f_from.abs() || shrinks >= 60 {
                return (f_out, stats.gap);
            }
            *step *= cfg.line_search_shrink;
            shrinks += 1;
        }
    }
}

/// Column residual tolerated inside the iterations. Objective differences
/// between iterates shrink far below `marginal_tol`, so inner projections
/// are held tighter than the reported plan.
fn inner_tol(cfg: &SolverConfig) -> f64 {
    cfg.marginal_tol.min(1e-13)
}

fn to_matrix(v: Vec<f64>, r: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_vec((r, m), v).expect("r * m entries")
}

/// Largest eigenvalue of a symmetric positive semidefinite `d x d` matrix
/// by power iteration, inflated slightly so it stays an upper bound.
fn top_eigenvalue(mat: &[f64], d: usize) -> f64 {
    let trace: f64 = (0..d).map(|k| mat[k * d + k]).sum();
    if trace <= 0.0 {
        return 0.0;
    }
    let mut v: Array1<f64> = Array1::from_iter((0..d).map(|k| 1.0 + k as f64 * 0.1));
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Array1<f64> = Array1::from_iter(
            (0..d).map(|k| (0..d).map(|l| mat[k * d + l] * v[l]).sum::<f64>()),
        );
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            break;
        }
        let next = norm / v.dot(&v).sqrt();
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    (lambda * 1.001).min(trace)
}

#[cfg(test)]
mod tests;
