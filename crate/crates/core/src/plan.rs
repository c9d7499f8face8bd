//! Transport plans and the barycentric maps they induce.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::measures::{sq_dist, DiscreteMeasure};

/// Nonnegative `r x m` coupling together with its prescribed marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
    feasibility_gap: f64,
}

impl TransportPlan {
    /// Wraps a matrix, clamping negative entries to zero and recording the
    /// largest deviation of its row and column sums from `a` and `b`.
    pub fn new(mut matrix: Array2<f64>, a: Array1<f64>, b: Array1<f64>) -> Result<Self> {
        let (r, m) = matrix.dim();
        if a.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: a.len(),
            });
        }
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: b.len(),
            });
        }
        matrix.mapv_inplace(|v| v.max(0.0));
        let feasibility_gap = marginal_gap(&matrix, a.view(), b.view());
        Ok(Self {
            matrix,
            row_marginal: a,
            col_marginal: b,
            feasibility_gap,
        })
    }

    /// The independent coupling `a b^T`.
    pub fn independent(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let a = mu.weights().to_owned();
        let b = nu.weights().to_owned();
        let matrix = outer(a.view(), b.view());
        Self::new(matrix, a, b).expect("shapes agree")
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> ArrayView1<'_, f64> {
        self.row_marginal.view()
    }

    pub fn col_marginal(&self) -> ArrayView1<'_, f64> {
        self.col_marginal.view()
    }

    pub fn feasibility_gap(&self) -> f64 {
        self.feasibility_gap
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    /// `sum_ij pi_ij |x_i - y_j|^2`.
    pub fn transport_cost(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        self.check_shape(mu, nu)?;
        let mut total = 0.0;
        for (i, row) in self.matrix.outer_iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    total += p * sq_dist(mu.point(i), nu.point(j));
                }
            }
        }
        Ok(total)
    }

    pub(crate) fn check_shape(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
        let (r, m) = self.shape();
        if mu.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                found: mu.len(),
            });
        }
        if nu.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: nu.len(),
            });
        }
        mu.check_dim(nu.dim())
    }
}

pub(crate) fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

pub(crate) fn marginal_gap(
    matrix: &Array2<f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> f64 {
    let rows = matrix.sum_axis(ndarray::Axis(1));
    let cols = matrix.sum_axis(ndarray::Axis(0));
    let row_gap = rows
        .iter()
        .zip(a.iter())
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max);
    let col_gap = cols
        .iter()
        .zip(b.iter())
        .map(|(s, t)| (s - t).abs())
        .fold(0.0, f64::max);
    row_gap.max(col_gap)
}

/// Map `x_i -> (sum_j pi_ij y_j) / a_i` on the support of the source.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycentricMap {
    source: DiscreteMeasure,
    images: Array2<f64>,
}

impl BarycentricMap {
    pub(crate) fn identity(source: &DiscreteMeasure) -> Self {
        Self {
            source: source.clone(),
            images: source.points().to_owned(),
        }
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    /// One row per source atom.
    pub fn images(&self) -> &Array2<f64> {
        &self.images
    }

    pub fn image(&self, i: usize) -> ArrayView1<'_, f64> {
        self.images.row(i)
    }

    /// `S # mu`.
    pub fn push_forward(&self) -> DiscreteMeasure {
        self.source
            .push_forward(self.images.clone())
            .expect("one finite image per source atom")
    }

    /// `max_{i != j} |S(x_i) - S(x_j)| / |x_i - x_j|` over pairs of distinct
    /// source points; `0` when the support has a single distinct point.
    pub fn lipschitz_ratio(&self) -> f64 {
        let n = self.images.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = sq_dist(self.source.point(i), self.source.point(j)).sqrt();
                if dx <= 1e-12 {
                    continue;
                }
                let ds = sq_dist(self.images.row(i), self.images.row(j)).sqrt();
                worst = worst.max(ds / dx);
            }
        }
        worst
    }

    /// Pairs `(i, j)` whose image distance exceeds `|x_i - x_j| + slack`.
    pub fn lipschitz_violations(&self, slack: f64) -> Vec<(usize, usize)> {
        let n = self.images.nrows();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = sq_dist(self.source.point(i), self.source.point(j)).sqrt();
                let ds = sq_dist(self.images.row(i), self.images.row(j)).sqrt();
                if ds > dx + slack {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Barycentric projection of any plan: the conditional means of its rows.
pub fn barycentric_projection(
    plan: &TransportPlan,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<BarycentricMap> {
    plan.check_shape(mu, nu)?;
    let a = mu.weights();
    if let Some(row) = a.iter().position(|&w| w <= 0.0) {
        return Err(Error::ZeroRowWeight { row });
    }
    let mut images = plan.matrix().dot(&nu.points());
    for (mut img, &w) in images.outer_iter_mut().zip(a.iter()) {
        img.mapv_inplace(|v| v / w);
    }
    Ok(BarycentricMap {
        source: mu.clone(),
        images,
    })
}
