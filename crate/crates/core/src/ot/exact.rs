//! Exact discrete optimal transport by the transportation simplex method.
//!
//! The basis is a spanning tree over the `r + m` row and column nodes with
//! `r + m - 1` basic cells, started from the north-west corner rule.
//! Entering cells come from block pricing on reduced costs; the cycle
//! closed by the entering cell is found through parent pointers, and the
//! tree (parents, depths, dual potentials) is rebuilt by a breadth-first
//! pass after each pivot.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::measures::{sq_dist, DiscreteMeasure};
use crate::plan::TransportPlan;

/// Default cap on `r * m` for exact solves.
pub const DEFAULT_MAX_ENTRIES: usize = 10_000;

/// Optimal plan of a transportation LP with its duals.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub plan: Array2<f64>,
    pub cost: f64,
    /// Row potentials `u` and column potentials `v` with
    /// `c_ij - u_i - v_j >= 0`, tight on basic cells.
    pub row_potential: Array1<f64>,
    pub col_potential: Array1<f64>,
    pub pivots: usize,
}

/// Exact OT between two measures under the squared Euclidean cost.
/// Returns the plan and `W2^2`.
pub fn solve_exact_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(TransportPlan, f64)> {
    solve_exact_ot_capped(mu, nu, DEFAULT_MAX_ENTRIES)
}

pub fn solve_exact_ot_capped(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    max_entries: usize,
) -> Result<(TransportPlan, f64)> {
    mu.check_dim(nu.dim())?;
    let entries = mu.len() * nu.len();
    if entries > max_entries {
        return Err(Error::InstanceTooLarge {
            entries,
            cap: max_entries,
        });
    }
    let cost = squared_cost(mu, nu);
    let sol = transport_lp(mu.weights(), nu.weights(), cost.view())?;
    let plan = TransportPlan::new(sol.plan, mu.weights().to_owned(), nu.weights().to_owned())?;
    Ok((plan, sol.cost))
}

/// `W2^2(mu, nu)`.
pub fn w2_squared(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    solve_exact_ot(mu, nu).map(|(_, c)| c)
}

pub fn w2_squared_capped(mu: &DiscreteMeasure, nu: &DiscreteMeasure, max_entries: usize) -> Result<f64> {
    solve_exact_ot_capped(mu, nu, max_entries).map(|(_, c)| c)
}

pub fn squared_cost(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Array2<f64> {
    Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| sq_dist(mu.point(i), nu.point(j)))
}

/// Solves `min <C, pi>` over nonnegative `pi` with row sums `a` and column
/// sums `b`. Optimality is certified against the recovered duals; a
/// failed certificate is reported as [`Error::NotConverged`].
pub fn transport_lp(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
) -> Result<LpSolution> {
    let (r, m) = cost.dim();
    if a.len() != r || b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: r * m,
            found: a.len() * b.len(),
        });
    }
    if r == 0 || m == 0 {
        return Err(Error::EmptySupport);
    }
    if a.iter().chain(b.iter()).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::DegenerateMarginals("negative or non-finite mass".into()));
    }
    let (ta, tb): (f64, f64) = (a.sum(), b.sum());
    if (ta - tb).abs() > 1e-9 * ta.max(tb).max(1.0) {
        return Err(Error::DegenerateMarginals(format!(
            "total masses differ: {ta} vs {tb}"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteValue { row: 0 });
    }

    let mut simplex = Simplex::new(a, b, cost);
    let pivots = simplex.run()?;
    let scale = cost.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let worst = simplex.min_reduced_cost();
    if worst < -1e-9 * scale {
        return Err(Error::NotConverged {
            iterations: pivots,
            residual: -worst,
        });
    }
    let plan = simplex.plan();
    let cost_value = (&plan * &cost).sum();
    Ok(LpSolution {
        plan,
        cost: cost_value,
        row_potential: Array1::from(simplex.u.clone()),
        col_potential: Array1::from(simplex.v.clone()),
        pivots,
    })
}

struct Simplex<'c> {
    r: usize,
    m: usize,
    cost: ArrayView2<'c, f64>,
    /// Flow on basic cells, keyed by cell index `i * m + j`.
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cells incident to each node; rows are `0..r`, columns `r..r + m`.
    adjacency: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
    tol: f64,
    cursor: usize,
}

const NONE: usize = usize::MAX;

impl<'c> Simplex<'c> {
    fn new(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, cost: ArrayView2<'c, f64>) -> Self {
        let (r, m) = cost.dim();
        let mut s = Self {
            r,
            m,
            cost,
            flow: vec![0.0; r * m],
            basic: vec![false; r * m],
            adjacency: vec![Vec::new(); r + m],
            parent: vec![NONE; r + m],
            parent_cell: vec![NONE; r + m],
            depth: vec![0; r + m],
            u: vec![0.0; r],
            v: vec![0.0; m],
            tol: 0.0,
            cursor: 0,
        };
        let scale = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        s.tol = 1e-12 * scale.max(1e-300);
        s.north_west(a, b);
        s.rebuild_tree();
        s
    }

    fn north_west(&mut self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) {
        let (r, m) = (self.r, self.m);
        let mut ra: Vec<f64> = a.to_vec();
        let mut rb: Vec<f64> = b.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = ra[i].min(rb[j]).max(0.0);
            self.add_basic(i, j, x);
            ra[i] -= x;
            rb[j] -= x;
            if i == r - 1 && j == m - 1 {
                break;
            }
            if i == r - 1 {
                j += 1;
            } else if j == m - 1 {
                i += 1;
            } else if ra[i] <= rb[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    fn add_basic(&mut self, i: usize, j: usize, x: f64) {
        let k = i * self.m + j;
        self.basic[k] = true;
        self.flow[k] = x;
        self.adjacency[i].push(k);
        self.adjacency[self.r + j].push(k);
    }

    fn remove_basic(&mut self, k: usize) {
        let (i, j) = (k / self.m, k % self.m);
        self.basic[k] = false;
        self.flow[k] = 0.0;
        self.adjacency[i].retain(|&c| c != k);
        self.adjacency[self.r + j].retain(|&c| c != k);
    }

    /// Breadth-first pass from row 0 setting parents, depths and potentials.
    fn rebuild_tree(&mut self) {
        let (r, m) = (self.r, self.m);
        self.parent.iter_mut().for_each(|p| *p = NONE);
        let mut queue = VecDeque::with_capacity(r + m);
        self.parent[0] = 0;
        self.parent_cell[0] = NONE;
        self.depth[0] = 0;
        self.u[0] = 0.0;
        queue.push_back(0usize);
        while let Some(node) = queue.pop_front() {
            for idx in 0..self.adjacency[node].len() {
                let k = self.adjacency[node][idx];
                let (i, j) = (k / m, k % m);
                let other = if node < r { r + j } else { i };
                if self.parent[other] != NONE {
                    continue;
                }
                self.parent[other] = node;
                self.parent_cell[other] = k;
                self.depth[other] = self.depth[node] + 1;
                let c = self.cost[[i, j]];
                if other < r {
                    self.u[i] = c - self.v[j];
                } else {
                    self.v[j] = c - self.u[i];
                }
                queue.push_back(other);
            }
        }
    }

    fn reduced(&self, k: usize) -> f64 {
        let (i, j) = (k / self.m, k % self.m);
        self.cost[[i, j]] - self.u[i] - self.v[j]
    }

    /// Block pricing: most negative reduced cost within the first block
    /// (scanning cyclically) that contains a candidate.
    fn entering(&mut self) -> Option<usize> {
        let n = self.r * self.m;
        let block = ((n as f64).sqrt() as usize).max(32).min(n);
        let mut scanned = 0;
        let mut best = NONE;
        let mut best_val = -self.tol;
        let mut k = self.cursor;
        while scanned < n {
            let end = (scanned + block).min(n);
            while scanned < end {
                if !self.basic[k] {
                    let rc = self.reduced(k);
                    if rc < best_val {
                        best_val = rc;
                        best = k;
                    }
                }
                k += 1;
                if k == n {
                    k = 0;
                }
                scanned += 1;
            }
            if best != NONE {
                self.cursor = k;
                return Some(best);
            }
        }
        None
    }

    fn pivot(&mut self, enter: usize) {
        let (r, m) = (self.r, self.m);
        let (ei, ej) = (enter / m, enter % m);
        // walk from both endpoints to their common ancestor; cells at even
        // distance from either endpoint lose flow
        let mut x = ei;
        let mut y = r + ej;
        let mut dx = 0usize;
        let mut dy = 0usize;
        let mut minus: Vec<usize> = Vec::new();
        let mut plus: Vec<usize> = Vec::new();
        while x != y {
            if self.depth[x] >= self.depth[y] {
                let c = self.parent_cell[x];
                if dx % 2 == 0 { minus.push(c) } else { plus.push(c) }
                dx += 1;
                x = self.parent[x];
            } else {
                let c = self.parent_cell[y];
                if dy % 2 == 0 { minus.push(c) } else { plus.push(c) }
                dy += 1;
                y = self.parent[y];
            }
        }
        let mut leave = minus[0];
        let mut theta = self.flow[leave];
        for &c in &minus[1..] {
            if self.flow[c] < theta {
                theta = self.flow[c];
                leave = c;
            }
        }
        let theta = theta.max(0.0);
        for &c in &minus {
            self.flow[c] = (self.flow[c] - theta).max(0.0);
        }
        for &c in &plus {
            self.flow[c] += theta;
        }
        self.remove_basic(leave);
        self.add_basic(ei, ej, theta);
        self.rebuild_tree();
    }

    fn run(&mut self) -> Result<usize> {
        let cap = 50 * (self.r + self.m) * (self.r + self.m) + 10_000;
        let mut pivots = 0;
        while let Some(k) = self.entering() {
            self.pivot(k);
            pivots += 1;
            if pivots > cap {
                return Err(Error::NotConverged {
                    iterations: pivots,
                    residual: -self.reduced(k),
                });
            }
        }
        Ok(pivots)
    }

    fn min_reduced_cost(&self) -> f64 {
        (0..self.r * self.m)
            .map(|k| self.reduced(k))
            .fold(f64::INFINITY, f64::min)
    }

    fn plan(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.r, self.m), self.flow.clone()).expect("r * m entries")
    }
}
