//! Discrete probability measures on R^d and convex-order checks.
//!
//! A [`DiscreteMeasure`] is a weighted point cloud. Duplicate support points
//! are allowed and never merged: every algorithm in the crate works on rows,
//! and a pushforward must keep row `i` of the image aligned with row `i` of
//! the source.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted point cloud `sum_i a_i delta_{x_i}` with weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from an `n x d` point matrix. Weights default to
    /// uniform and are otherwise normalized to sum to one.
    pub fn new(points: Array2<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 {
            return Err(Error::EmptySupport);
        }
        if d == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for (row, p) in points.outer_iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row });
            }
        }
        let weights = match weights {
            None => Array1::from_elem(n, 1.0 / n as f64),
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: w.len(),
                    });
                }
                for (index, &value) in w.iter().enumerate() {
                    if !value.is_finite() {
                        return Err(Error::NonFiniteValue { row: index });
                    }
                    if value < 0.0 {
                        return Err(Error::NegativeWeight { index, value });
                    }
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::ZeroTotalWeight);
                }
                // weights that already sum to one up to rounding are kept bit for bit
                if (total - 1.0).abs() <= 4.0 * n as f64 * f64::EPSILON {
                    Array1::from_vec(w)
                } else {
                    Array1::from_iter(w.into_iter().map(|v| v / total))
                }
            }
        };
        Ok(Self { points, weights })
    }

    /// Builds a measure from nested rows, checking that all rows share one
    /// dimension.
    pub fn from_rows(rows: &[Vec<f64>], weights: Option<Vec<f64>>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptySupport)?;
        let d = first.len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        let points = Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked above");
        Self::new(points, weights)
    }

    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::from_rows(&[point.to_vec()], None)
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Number of support rows (duplicates counted).
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// `sum_i a_i x_i`.
    pub fn mean(&self) -> Array1<f64> {
        let mut m = Array1::zeros(self.dim());
        for (w, p) in self.weights.iter().zip(self.points.outer_iter()) {
            m.scaled_add(*w, &p);
        }
        m
    }

    /// `sum_i a_i |x_i|^2`.
    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.points.outer_iter())
            .map(|(w, p)| w * p.dot(&p))
            .sum()
    }

    /// Trace of the covariance, `sum_i a_i |x_i - mean|^2`.
    pub fn total_variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(self.points.outer_iter())
            .map(|(w, p)| w * sq_dist(p, m.view()))
            .sum()
    }

    /// Largest pairwise distance between support points.
    pub fn support_diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(sq_dist(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }

    /// Pushforward under a map given by its values on the support: row `i`
    /// of `images` receives weight `a_i`.
    pub fn push_forward(&self, images: Array2<f64>) -> Result<Self> {
        if images.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: images.nrows(),
            });
        }
        if images.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: 0,
            });
        }
        for (row, p) in images.outer_iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row });
            }
        }
        Ok(Self {
            points: images,
            weights: self.weights.clone(),
        })
    }

    /// Same weights, every point shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        self.check_dim(offset.len())?;
        let mut pts = self.points.clone();
        for mut row in pts.outer_iter_mut() {
            row.iter_mut().zip(offset).for_each(|(x, c)| *x += c);
        }
        self.push_forward(pts)
    }

    /// Same weights, points mapped by `x -> center + s (x - center)`.
    pub fn scaled_about(&self, center: &[f64], s: f64) -> Result<Self> {
        self.check_dim(center.len())?;
        let mut pts = self.points.clone();
        for mut row in pts.outer_iter_mut() {
            row.iter_mut()
                .zip(center)
                .for_each(|(x, c)| *x = c + s * (*x - c));
        }
        self.push_forward(pts)
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: d,
            });
        }
        Ok(())
    }

    /// Expectation of `f` under the measure.
    pub fn integrate(&self, f: impl Fn(ArrayView1<'_, f64>) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(self.points.outer_iter())
            .map(|(w, p)| w * f(p))
            .sum()
    }
}

/// Convenience constructor mirroring [`DiscreteMeasure::from_rows`].
pub fn make_measure(points: &[Vec<f64>], weights: Option<Vec<f64>>) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_rows(points, weights)
}

pub fn mean(m: &DiscreteMeasure) -> Array1<f64> {
    m.mean()
}

pub fn push_forward(m: &DiscreteMeasure, images: Array2<f64>) -> Result<DiscreteMeasure> {
    m.push_forward(images)
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Outcome of a convex-order test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Holds,
    Fails,
    Inconclusive,
}

/// What exhibited a violation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Witness {
    /// `t` where `E(X - t)_+` of the smaller measure exceeds that of the larger.
    Threshold(f64),
    /// The means differ; a linear test function separates the measures.
    MeanGap,
    /// Index into the test family of [`convex_order_certificate`]:
    /// `0` is `|x|^2`, `1..=2d` are `x_k` and `-x_k`, the rest are random.
    TestFunction(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderVerdict {
    pub decision: Decision,
    pub max_violation: f64,
    pub witness: Option<Witness>,
}

/// Exact test of `eta <=_c nu` for one-dimensional discrete measures.
///
/// Compares means and the integrated survival functions
/// `t -> E(X - t)_+` at every point of the merged support. Both functions
/// are piecewise linear with kinks only at support points, and agree left
/// of the support once the means agree, so the finite comparison decides
/// dominance on the whole line.
pub fn check_convex_order_1d(
    eta: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tol: f64,
) -> Result<ConvexOrderVerdict> {
    for m in [eta, nu] {
        if m.dim() != 1 {
            return Err(Error::DimensionError {
                required: 1,
                found: m.dim(),
            });
        }
    }
    let mean_gap = (eta.mean()[0] - nu.mean()[0]).abs();

    let mut knots: Vec<f64> = eta
        .points()
        .iter()
        .chain(nu.points().iter())
        .copied()
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let eta_stop = integrated_survival(eta);
    let nu_stop = integrated_survival(nu);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = knots[0];
    for &t in &knots {
        let gap = eta_stop(t) - nu_stop(t);
        if gap > worst {
            worst = gap;
            worst_at = t;
        }
    }

    let max_violation = mean_gap.max(worst).max(0.0);
    let (decision, witness) = if worst > tol {
        (Decision::Fails, Some(Witness::Threshold(worst_at)))
    } else if mean_gap > tol {
        (Decision::Fails, Some(Witness::MeanGap))
    } else {
        (Decision::Holds, None)
    };
    Ok(ConvexOrderVerdict {
        decision,
        max_violation,
        witness,
    })
}

fn integrated_survival(m: &DiscreteMeasure) -> impl Fn(f64) -> f64 + '_ {
    move |t| {
        m.weights()
            .iter()
            .zip(m.points().iter())
            .map(|(w, x)| w * (x - t).max(0.0))
            .sum()
    }
}

/// Randomized falsifier for `eta <=_c nu` in any dimension.
///
/// Evaluates a fixed family (`|x|^2`, every coordinate and its negation)
/// plus `num_funcs` random convex functions `max(0, u1.x - c1, u2.x - c2)`
/// with directions uniform on the sphere and offsets drawn from the range
/// of the projected supports. Returns `Fails` with the first worst witness,
/// otherwise `Inconclusive`; it never returns `Holds`.
pub fn convex_order_certificate(
    eta: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    num_funcs: usize,
    seed: u64,
    tol: f64,
) -> Result<ConvexOrderVerdict> {
    let d = nu.dim();
    eta.check_dim(d)?;

    let mut worst = f64::NEG_INFINITY;
    let mut worst_idx = 0usize;
    let mut consider = |idx: usize, f: &dyn Fn(ArrayView1<'_, f64>) -> f64| {
        let gap = eta.integrate(f) - nu.integrate(f);
        if gap > worst {
            worst = gap;
            worst_idx = idx;
        }
    };

    consider(0, &|x| x.dot(&x));
    for k in 0..d {
        consider(1 + 2 * k, &|x| x[k]);
        consider(2 + 2 * k, &|x| -x[k]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_points = ndarray::concatenate(Axis(0), &[eta.points(), nu.points()])
        .expect("dimensions checked");
    for f in 0..num_funcs {
        let mut pieces = Vec::with_capacity(2);
        for _ in 0..2 {
            let dir = random_direction(&mut rng, d);
            let proj = all_points.dot(&dir);
            let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let offset = if hi > lo { rng.random_range(lo..hi) } else { lo };
            pieces.push((dir, offset));
        }
        consider(1 + 2 * d + f, &|x| {
            pieces
                .iter()
                .map(|(u, c)| u.dot(&x) - c)
                .fold(0.0, f64::max)
        });
    }

    let max_violation = worst.max(0.0);
    let (decision, witness) = if worst > tol {
        (Decision::Fails, Some(Witness::TestFunction(worst_idx)))
    } else {
        (Decision::Inconclusive, None)
    };
    Ok(ConvexOrderVerdict {
        decision,
        max_violation,
        witness,
    })
}

fn random_direction(rng: &mut impl Rng, d: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}
