//! Instance generators and solver-independent oracles shared by the
//! integration tests.
#![allow(dead_code)]

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use weak_barycenter::measures::DiscreteMeasure;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points with i.i.d. `N(0, scale^2)` coordinates plus `shift`, and
/// weights uniform or drawn from `U(0.2, 1)`.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64, weighted: bool) -> DiscreteMeasure {
    let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pts = Array2::from_shape_fn((n, d), |(_, k)| shift[k] + scale * rng.sample::<f64, _>(StandardNormal));
    let w = weighted.then(|| (0..n).map(|_| rng.random_range(0.2..1.0)).collect());
    DiscreteMeasure::new(pts, w).unwrap()
}

/// Weak cost of a plan matrix, evaluated straight from its definition.
pub fn weak_cost(plan: &Array2<f64>, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let a = mu.weights();
    let cond = plan.dot(&nu.points());
    (0..mu.len())
        .map(|i| {
            let s = cond.row(i).mapv(|v| v / a[i]);
            a[i] * (&s - &mu.point(i)).mapv(|v| v * v).sum()
        })
        .sum()
}

/// Exhaustive grid search over the transport polytope of an instance with
/// at most three atoms on each side.
///
/// The entries `pi_ij` with `i < r-1` and `j < m-1` are free coordinates;
/// the last row and column follow from the marginals. Each round evaluates
/// a uniform grid of `points^k` free vectors around the incumbent, keeps
/// the best feasible one and shrinks the box by 0.6.
pub fn grid_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let (r, m) = (mu.len(), nu.len());
    assert!(r <= 3 && m <= 3);
    let a = mu.weights().to_vec();
    let b = nu.weights().to_vec();
    let free: Vec<(usize, usize)> = (0..r.saturating_sub(1))
        .flat_map(|i| (0..m.saturating_sub(1)).map(move |j| (i, j)))
        .collect();
    let complete = |t: &[f64]| -> Option<Array2<f64>> {
        let mut p = Array2::zeros((r, m));
        for (&(i, j), &v) in free.iter().zip(t) {
            p[[i, j]] = v;
        }
        for i in 0..r - 1 {
            p[[i, m - 1]] = a[i] - (0..m - 1).map(|j| p[[i, j]]).sum::<f64>();
        }
        for j in 0..m {
            p[[r - 1, j]] = b[j] - (0..r - 1).map(|i| p[[i, j]]).sum::<f64>();
        }
        p.iter().all(|&v| v >= -1e-15).then(|| p.mapv(|v| v.max(0.0)))
    };
    let k = free.len();
    let mut center: Vec<f64> = free.iter().map(|&(i, j)| a[i] * b[j]).collect();
    let mut best = weak_cost(&complete(&center).unwrap(), mu, nu);
    let mut half: Vec<f64> = free.iter().map(|&(i, j)| a[i].min(b[j])).collect();
    let points = match k {
        0 => return best,
        1 => 201,
        2 => 41,
        3 => 17,
        _ => 11,
    };
    for _ in 0..40 {
        let mut idx = vec![0usize; k];
        let mut round_best = center.clone();
        loop {
            let t: Vec<f64> = (0..k)
                .map(|c| {
                    let frac = idx[c] as f64 / (points - 1) as f64;
                    center[c] - half[c] + 2.0 * half[c] * frac
                })
                .collect();
            if let Some(p) = complete(&t) {
                let f = weak_cost(&p, mu, nu);
                if f < best {
                    best = f;
                    round_best = t;
                }
            }
            let mut c = 0;
            while c < k {
                idx[c] += 1;
                if idx[c] < points {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
            if c == k {
                break;
            }
        }
        center = round_best;
        half.iter_mut().for_each(|h| *h *= 0.6);
    }
    best
}

/// Writes one result line past the test harness's output capture, so the
/// line shows up in the plain `cargo test` log.
pub fn report(label: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "[{verdict}] {label}: {detail}");
}
