//! Seeded synthetic families of point clouds and outlier corruption.
//!
//! Measure `k` of a spec is drawn from its own ChaCha8 stream (`seed`,
//! stream `k`), so any single measure can be regenerated without the
//! others and streaming consumers can draw measures lazily.

mod image;

pub use image::{image_to_measure, noisy_digit, parse_pgm, Grid};

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Shape family of a generated measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// Isotropic normal with standard deviation `std` and mean uniform in
    /// the box `[mean_low, mean_high]`.
    Gaussian {
        mean_low: Vec<f64>,
        mean_high: Vec<f64>,
        std: f64,
    },
    /// Archimedean spiral `r = ratio * theta` over `turns` turns, centered
    /// at the origin, with `ratio` uniform in the given range.
    Spiral { ratio: [f64; 2], turns: f64 },
    /// Ellipse with center uniform in `center_box` (each coordinate) and
    /// semi-axes uniform in `axes`.
    Ellipse { center_box: [f64; 2], axes: [f64; 2] },
    /// Union of two such ellipses; the first semi-axis of each is drawn
    /// from `minor_axes`, the second from `major_axes`.
    PairOfEllipses {
        center_box: [f64; 2],
        minor_axes: [f64; 2],
        major_axes: [f64; 2],
    },
}

/// Recipe for a family of uniform-weight point clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    /// Inclusive range of the number of samples per measure.
    pub samples: [usize; 2],
    pub num_measures: usize,
    pub seed: u64,
    /// Standard deviation of the isotropic noise added to curve families.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.05
}

impl GeneratorSpec {
    /// `num_measures` unit-covariance Gaussians with means uniform on
    /// `(-3, 3) x (-5, 5)`, `samples` points each.
    pub fn gaussians(num_measures: usize, samples: usize, seed: u64) -> Self {
        Self {
            family: Family::Gaussian {
                mean_low: vec![-3.0, -5.0],
                mean_high: vec![3.0, 5.0],
                std: 1.0,
            },
            samples: [samples, samples],
            num_measures,
            seed,
            jitter: default_jitter(),
        }
    }

    /// Spirals with ratio in `(0, 3)` and 200 to 225 points.
    pub fn spirals(num_measures: usize, seed: u64) -> Self {
        Self {
            family: Family::Spiral {
                ratio: [0.0, 3.0],
                turns: 2.0,
            },
            samples: [200, 225],
            num_measures,
            seed,
            jitter: default_jitter(),
        }
    }

    /// Ellipses centered in `(-5, 5)^2` with semi-axes in `(6, 14)`.
    pub fn ellipses(num_measures: usize, samples: usize, seed: u64) -> Self {
        Self {
            family: Family::Ellipse {
                center_box: [-5.0, 5.0],
                axes: [6.0, 14.0],
            },
            samples: [samples, samples],
            num_measures,
            seed,
            jitter: default_jitter(),
        }
    }

    /// Pairs of ellipses centered in `(-5, 5)^2` with semi-axes in `(1, 7)`
    /// and `(7, 13)`, 200 to 300 points.
    pub fn pairs_of_ellipses(num_measures: usize, seed: u64) -> Self {
        Self {
            family: Family::PairOfEllipses {
                center_box: [-5.0, 5.0],
                minor_axes: [1.0, 7.0],
                major_axes: [7.0, 13.0],
            },
            samples: [200, 300],
            num_measures,
            seed,
            jitter: default_jitter(),
        }
    }

    /// Named preset with its default size: `gaussian`, `spiral`, `ellipse`
    /// or `pair-of-ellipses`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::gaussians(15, 100, seed)),
            "spiral" => Ok(Self::spirals(10, seed)),
            "ellipse" => Ok(Self::ellipses(15, 100, seed)),
            "pair-of-ellipses" => Ok(Self::pairs_of_ellipses(10, seed)),
            other => Err(Error::InvalidSpec(format!("unknown family {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.num_measures == 0 {
            return bad("num_measures must be at least 1");
        }
        if self.samples[0] == 0 || self.samples[0] > self.samples[1] {
            return bad("samples must be a nonempty range of positive counts");
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad("jitter must be nonnegative");
        }
        let range_ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        match &self.family {
            Family::Gaussian {
                mean_low,
                mean_high,
                std,
            } => {
                if mean_low.is_empty() || mean_low.len() != mean_high.len() {
                    return bad("mean box bounds must share a positive dimension");
                }
                if mean_low
                    .iter()
                    .zip(mean_high)
                    .any(|(l, h)| !range_ok(&[*l, *h]))
                {
                    return bad("mean box is empty");
                }
                if !(*std > 0.0 && std.is_finite()) {
                    return bad("std must be positive");
                }
            }
            Family::Spiral { ratio, turns } => {
                if !range_ok(ratio) || ratio[0] < 0.0 || ratio[1] <= 0.0 {
                    return bad("spiral ratio range must be nonnegative and nonempty");
                }
                if !(*turns > 0.0 && turns.is_finite()) {
                    return bad("turns must be positive");
                }
            }
            Family::Ellipse { center_box, axes } => {
                if !range_ok(center_box) || !range_ok(axes) || axes[0] <= 0.0 {
                    return bad("ellipse ranges must be nonempty with positive axes");
                }
            }
            Family::PairOfEllipses {
                center_box,
                minor_axes,
                major_axes,
            } => {
                if !range_ok(center_box)
                    || !range_ok(minor_axes)
                    || !range_ok(major_axes)
                    || minor_axes[0] <= 0.0
                    || major_axes[0] <= 0.0
                {
                    return bad("ellipse ranges must be nonempty with positive axes");
                }
            }
        }
        Ok(())
    }

    /// Dimension of the generated points.
    pub fn dim(&self) -> usize {
        match &self.family {
            Family::Gaussian { mean_low, .. } => mean_low.len(),
            _ => 2,
        }
    }

    /// Measure `k` of the family.
    pub fn measure(&self, k: usize) -> Result<DiscreteMeasure> {
        self.validate()?;
        let mut rng = substream(self.seed, k as u64);
        let n = rng.random_range(self.samples[0]..=self.samples[1]);
        let points = match &self.family {
            Family::Gaussian {
                mean_low,
                mean_high,
                std,
            } => {
                let mean: Vec<f64> = mean_low
                    .iter()
                    .zip(mean_high)
                    .map(|(l, h)| uniform(&mut rng, *l, *h))
                    .collect();
                let mut pts = Array2::zeros((n, mean.len()));
                for mut row in pts.outer_iter_mut() {
                    for (x, m) in row.iter_mut().zip(&mean) {
                        *x = m + std * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                pts
            }
            Family::Spiral { ratio, turns } => {
                let c = uniform(&mut rng, ratio[0], ratio[1]);
                let mut pts = spiral_points(c, *turns, n, &mut rng);
                add_jitter(&mut pts, self.jitter, &mut rng);
                pts
            }
            Family::Ellipse { center_box, axes } => {
                let e = Ellipse {
                    center: [uniform(&mut rng, center_box[0], center_box[1]), uniform(&mut rng, center_box[0], center_box[1])],
                    axes: [uniform(&mut rng, axes[0], axes[1]), uniform(&mut rng, axes[0], axes[1])],
                };
                let mut pts = curve_points(&[e], n, &mut rng);
                add_jitter(&mut pts, self.jitter, &mut rng);
                pts
            }
            Family::PairOfEllipses {
                center_box,
                minor_axes,
                major_axes,
            } => {
                let draw = |rng: &mut ChaCha8Rng| Ellipse {
                    center: [uniform(rng, center_box[0], center_box[1]), uniform(rng, center_box[0], center_box[1])],
                    axes: [uniform(rng, minor_axes[0], minor_axes[1]), uniform(rng, major_axes[0], major_axes[1])],
                };
                let pair = [draw(&mut rng), draw(&mut rng)];
                let mut pts = curve_points(&pair, n, &mut rng);
                add_jitter(&mut pts, self.jitter, &mut rng);
                pts
            }
        };
        DiscreteMeasure::uniform(points)
    }

    /// Lazily generated measures `0..num_measures`.
    pub fn stream(&self) -> impl Iterator<Item = Result<DiscreteMeasure>> + '_ {
        (0..self.num_measures).map(move |k| self.measure(k))
    }
}

/// All measures of a spec.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<DiscreteMeasure>> {
    spec.validate()?;
    spec.stream().collect()
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn add_jitter(pts: &mut Array2<f64>, sigma: f64, rng: &mut impl Rng) {
    if sigma > 0.0 {
        pts.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
    }
}

#[derive(Clone, Copy)]
struct Ellipse {
    center: [f64; 2],
    axes: [f64; 2],
}

impl Ellipse {
    fn at(&self, t: f64) -> [f64; 2] {
        [
            self.center[0] + self.axes[0] * t.cos(),
            self.center[1] + self.axes[1] * t.sin(),
        ]
    }

    fn speed(&self, t: f64) -> f64 {
        (self.axes[0] * t.sin()).hypot(self.axes[1] * t.cos())
    }
}

/// Points uniform in arc length on the union of the ellipses, by rejection
/// on the angle.
fn curve_points(curves: &[Ellipse], n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let top = curves
        .iter()
        .map(|e| e.axes[0].max(e.axes[1]))
        .fold(0.0, f64::max);
    let mut pts = Array2::zeros((n, 2));
    for mut row in pts.outer_iter_mut() {
        loop {
            let e = &curves[rng.random_range(0..curves.len())];
            let t = rng.random_range(0.0..TAU);
            if rng.random::<f64>() * top <= e.speed(t) {
                let p = e.at(t);
                row[0] = p[0];
                row[1] = p[1];
                break;
            }
        }
    }
    pts
}

/// Points uniform in arc length on `r = c * theta`, `theta` in
/// `[0, 2 pi turns]`.
fn spiral_points(c: f64, turns: f64, n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let end = TAU * turns;
    // arc length up to theta, divided by c
    let arc = |t: f64| 0.5 * (t * (1.0 + t * t).sqrt() + t.asinh());
    let total = arc(end);
    let mut pts = Array2::zeros((n, 2));
    for mut row in pts.outer_iter_mut() {
        let target = rng.random::<f64>() * total;
        let (mut lo, mut hi) = (0.0, end);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if arc(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        row[0] = c * t * t.cos();
        row[1] = c * t * t.sin();
    }
    pts
}

/// `n` points uniform in arc length on the centered ellipse with the given
/// semi-axes, plus isotropic noise of size `jitter`.
pub fn centered_ellipse(semi_axes: [f64; 2], n: usize, jitter: f64, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::EmptySupport);
    }
    if !(semi_axes[0] > 0.0 && semi_axes[1] > 0.0 && jitter >= 0.0) {
        return Err(Error::InvalidSpec("semi-axes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = Ellipse {
        center: [0.0, 0.0],
        axes: semi_axes,
    };
    let mut pts = curve_points(&[e], n, &mut rng);
    add_jitter(&mut pts, jitter, &mut rng);
    DiscreteMeasure::uniform(pts)
}

/// `n` draws of `N(mean, std^2 I)` with uniform weights.
pub fn gaussian_cloud(mean: &[f64], std: f64, n: usize, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n, mean.len()));
    for mut row in pts.outer_iter_mut() {
        for (x, m) in row.iter_mut().zip(mean) {
            *x = m + std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    DiscreteMeasure::uniform(pts).expect("finite gaussian samples")
}

/// Law of the offset applied to a corrupted atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TranslationSampler {
    Constant { offset: Vec<f64> },
    /// Direction uniform on the sphere, length uniform in `[min, max]`.
    UniformDirection { min: f64, max: f64 },
}

impl Default for TranslationSampler {
    fn default() -> Self {
        TranslationSampler::UniformDirection { min: 5.0, max: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub bernoulli_p: f64,
    #[serde(default)]
    pub translation: TranslationSampler,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(bernoulli_p: f64, seed: u64) -> Self {
        Self {
            bernoulli_p,
            translation: TranslationSampler::default(),
            seed,
        }
    }
}

/// Translates each atom independently with probability `bernoulli_p`;
/// weights are untouched.
pub fn corrupt_outliers(m: &DiscreteMeasure, spec: &CorruptionSpec) -> Result<DiscreteMeasure> {
    let p = spec.bernoulli_p;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidSpec(format!("bernoulli_p = {p} outside [0, 1]")));
    }
    let d = m.dim();
    match &spec.translation {
        TranslationSampler::Constant { offset } => m.check_dim(offset.len())?,
        TranslationSampler::UniformDirection { min, max } => {
            if !(*min >= 0.0 && min <= max && max.is_finite()) {
                return Err(Error::InvalidSpec("translation magnitudes must satisfy 0 <= min <= max".into()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pts = m.points().to_owned();
    for mut row in pts.outer_iter_mut() {
        if !rng.random_bool(p) {
            continue;
        }
        match &spec.translation {
            TranslationSampler::Constant { offset } => {
                row.iter_mut().zip(offset).for_each(|(x, c)| *x += c);
            }
            TranslationSampler::UniformDirection { min, max } => {
                let dir = loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break v.into_iter().map(|x| x / norm).collect::<Vec<_>>();
                    }
                };
                let len = uniform(&mut rng, *min, *max);
                row.iter_mut().zip(&dir).for_each(|(x, u)| *x += len * u);
            }
        }
    }
    m.push_forward(pts)
}
