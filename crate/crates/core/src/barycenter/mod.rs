//! Weak barycenters of finite families and of streams of measures.
//!
//! The finite scheme iterates `mu <- (sum_i lambda_i S_i) # mu`, where `S_i`
//! is the barycentric map from `mu` to `nu_i`. The streaming scheme blends
//! the identity with the map to one freshly drawn measure per step. Both
//! accept any [`MapProvider`]; only the weak transport provider targets the
//! weak barycenter objective; the others give the "OT barycenter" variants.

mod schedule;
mod stream;

pub use schedule::{make_schedule, StepSchedule};
pub use stream::{stream_barycenter, stream_barycenter_step, StreamConfig};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::ot::{sinkhorn, solve_exact_ot_capped, SinkhornConfig, DEFAULT_MAX_ENTRIES};
use crate::owt::{owt_objective, solve_owt, SolverConfig};
use crate::plan::{barycentric_projection, BarycentricMap};

const SINKHORN_MAP_TOL: f64 = 1e-6;

/// A weighted family of input measures.
#[derive(Clone, Debug)]
pub struct BarycenterProblem {
    inputs: Vec<DiscreteMeasure>,
    lambdas: Vec<f64>,
}

impl BarycenterProblem {
    /// `lambdas = None` gives uniform weights. Given weights must be
    /// nonnegative with positive total and are normalized to sum to one.
    pub fn new(inputs: Vec<DiscreteMeasure>, lambdas: Option<Vec<f64>>) -> Result<Self> {
        let first = inputs.first().ok_or(Error::EmptySupport)?;
        let d = first.dim();
        for m in &inputs {
            first.check_dim(m.dim())?;
        }
        debug_assert!(inputs.iter().all(|m| m.dim() == d));
        let n = inputs.len();
        let lambdas = match lambdas {
            None => vec![1.0 / n as f64; n],
            Some(l) => {
                if l.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: l.len(),
                    });
                }
                for (index, &value) in l.iter().enumerate() {
                    if !value.is_finite() {
                        return Err(Error::NonFiniteValue { row: index });
                    }
                    if value < 0.0 {
                        return Err(Error::NegativeWeight { index, value });
                    }
                }
                let total: f64 = l.iter().sum();
                if total <= 0.0 {
                    return Err(Error::ZeroTotalWeight);
                }
                l.into_iter().map(|v| v / total).collect()
            }
        };
        Ok(Self { inputs, lambdas })
    }

    pub fn inputs(&self) -> &[DiscreteMeasure] {
        &self.inputs
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].dim()
    }

    /// `sum_i lambda_i mean(nu_i)`.
    pub fn weighted_mean(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        for (m, &l) in self.inputs.iter().zip(&self.lambdas) {
            out.scaled_add(l, &m.mean());
        }
        out
    }
}

/// Source of the barycentric maps used by the iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapProvider {
    /// Optimal weak transport map.
    Owt(SolverConfig),
    /// Barycentric projection of an exact optimal transport plan.
    ExactOt { max_entries: usize },
    /// Barycentric projection of an entropic transport plan.
    Sinkhorn(SinkhornConfig),
}

impl Default for MapProvider {
    fn default() -> Self {
        MapProvider::Owt(SolverConfig::default())
    }
}

/// Map from `mu` to one target, with the weak objective of the plan it came
/// from.
#[derive(Clone, Debug)]
pub struct ProvidedMap {
    pub map: BarycentricMap,
    /// `owt_objective` of the provider's plan; equals `V(mu | nu)` for the
    /// weak transport provider and bounds it from above otherwise.
    pub energy: f64,
}

impl MapProvider {
    pub fn exact_ot() -> Self {
        MapProvider::ExactOt {
            max_entries: DEFAULT_MAX_ENTRIES,
        }
    }

    /// Sinkhorn provider with marginals matched to `1e-6`, which moves the
    /// barycentric images far less than the regularization does.
    pub fn sinkhorn(epsilon: f64) -> Self {
        MapProvider::Sinkhorn(SinkhornConfig {
            marginal_tol: SINKHORN_MAP_TOL,
            ..SinkhornConfig::with_epsilon(epsilon)
        })
    }

    /// Label used in reports and traces.
    pub fn label(&self) -> &'static str {
        match self {
            MapProvider::Owt(_) => "weak barycenter",
            MapProvider::ExactOt { .. } => "OT barycenter",
            MapProvider::Sinkhorn(_) => "OT Sinkhorn barycenter",
        }
    }

    /// Short name matching the command-line flag.
    pub fn name(&self) -> &'static str {
        match self {
            MapProvider::Owt(_) => "owt",
            MapProvider::ExactOt { .. } => "ot",
            MapProvider::Sinkhorn(_) => "sinkhorn",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MapProvider::Owt(cfg) => cfg.validate(),
            MapProvider::ExactOt { max_entries } => {
                if *max_entries == 0 {
                    return Err(Error::InvalidConfig("max_entries must be positive".into()));
                }
                Ok(())
            }
            MapProvider::Sinkhorn(cfg) => cfg.validate(),
        }
    }

    pub fn map(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ProvidedMap> {
        match self {
            MapProvider::Owt(cfg) => {
                let sol = solve_owt(mu, nu, cfg)?;
                Ok(ProvidedMap {
                    map: sol.map,
                    energy: sol.value,
                })
            }
            MapProvider::ExactOt { max_entries } => {
                let (plan, _) = solve_exact_ot_capped(mu, nu, *max_entries)?;
                Ok(ProvidedMap {
                    map: barycentric_projection(&plan, mu, nu)?,
                    energy: owt_objective(&plan, mu, nu)?,
                })
            }
            MapProvider::Sinkhorn(cfg) => {
                let sol = sinkhorn(mu, nu, cfg)?;
                Ok(ProvidedMap {
                    map: barycentric_projection(&sol.plan, mu, nu)?,
                    energy: owt_objective(&sol.plan, mu, nu)?,
                })
            }
        }
    }
}

/// `sum_i lambda_i V(mu | nu_i)`.
pub fn weak_barycenter_energy(
    mu: &DiscreteMeasure,
    prob: &BarycenterProblem,
    cfg: &SolverConfig,
) -> Result<f64> {
    let provider = MapProvider::Owt(cfg.clone());
    let maps = provider_maps(mu, prob, &provider)?;
    Ok(weighted_energy(&maps, prob))
}

/// Value of the weak barycenter problem:
/// `sum_i lambda_i |m_i|^2 - |sum_i lambda_i m_i|^2` with `m_i = mean(nu_i)`.
pub fn optimal_energy_closed_form(prob: &BarycenterProblem) -> f64 {
    let avg = prob.weighted_mean();
    // centered form of the same quantity, free of cancellation
    prob.inputs
        .iter()
        .zip(&prob.lambdas)
        .map(|(m, &l)| {
            let d = m.mean() - &avg;
            l * d.dot(&d)
        })
        .sum()
}

/// One application of `mu -> (sum_i lambda_i S_i) # mu`.
pub fn fixed_point_step(
    mu: &DiscreteMeasure,
    prob: &BarycenterProblem,
    provider: &MapProvider,
) -> Result<DiscreteMeasure> {
    let maps = provider_maps(mu, prob, provider)?;
    mu.push_forward(averaged_images(&maps, prob))
}

fn provider_maps(
    mu: &DiscreteMeasure,
    prob: &BarycenterProblem,
    provider: &MapProvider,
) -> Result<Vec<ProvidedMap>> {
    mu.check_dim(prob.dim())?;
    prob.inputs
        .par_iter()
        .map(|nu| provider.map(mu, nu))
        .collect()
}

fn weighted_energy(maps: &[ProvidedMap], prob: &BarycenterProblem) -> f64 {
    maps.iter()
        .zip(&prob.lambdas)
        .map(|(m, &l)| l * m.energy)
        .sum()
}

fn averaged_images(maps: &[ProvidedMap], prob: &BarycenterProblem) -> Array2<f64> {
    let mut out = Array2::zeros(maps[0].map.images().dim());
    for (m, &l) in maps.iter().zip(&prob.lambdas) {
        out.scaled_add(l, m.map.images());
    }
    out
}

/// Stopping and initialization controls for [`weak_barycenter`].
#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterConfig {
    /// Stop once the energy changes by less than this between iterates.
    pub stop_tol: f64,
    pub max_steps: usize,
    /// Stop on the displacement `sum_i a_i |x_i - G(x_i)|^2` instead of
    /// the energy change.
    pub displacement_stop: bool,
    /// Starting measure; `None` starts from the first input.
    pub init: Option<DiscreteMeasure>,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self {
            stop_tol: 1e-5,
            max_steps: 100,
            displacement_stop: false,
            init: None,
        }
    }
}

/// One row of an iteration trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// Weighted provider energy at the iterate (finite mode) or the weak
    /// cost to the streamed measure (streaming mode).
    pub energy: f64,
    pub step_size: f64,
    pub support_diameter: f64,
}

#[derive(Clone, Debug)]
pub struct BarycenterResult {
    pub barycenter: DiscreteMeasure,
    pub steps: Vec<StepRecord>,
    /// Number of updates applied to the starting measure.
    pub iterations: usize,
    pub converged: bool,
    /// Running mean of the per-step weak costs (streaming mode only).
    pub population_energy_estimate: Option<f64>,
    pub provider: &'static str,
}

impl BarycenterResult {
    pub fn energy_trace(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.energy).collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.energy)
    }
}

/// Fixed-point iteration for the barycenter of a finite family.
///
/// The trace holds the energy of every iterate, starting with the initial
/// measure. Iteration also stops early when the energy already equals the
/// closed-form optimum within `stop_tol`.
pub fn weak_barycenter(
    prob: &BarycenterProblem,
    provider: &MapProvider,
    cfg: &BarycenterConfig,
) -> Result<BarycenterResult> {
    provider.validate()?;
    if !(cfg.stop_tol > 0.0) {
        return Err(Error::InvalidConfig("stop_tol must be positive".into()));
    }
    let mut mu = match &cfg.init {
        Some(m) => {
            m.check_dim(prob.dim())?;
            m.clone()
        }
        None => prob.inputs[0].clone(),
    };
    let optimum = optimal_energy_closed_form(prob);
    let mut maps = provider_maps(&mu, prob, provider)?;
    let mut energy = weighted_energy(&maps, prob);
    let mut steps = vec![StepRecord {
        k: 0,
        energy,
        step_size: 0.0,
        support_diameter: mu.support_diameter(),
    }];
    let mut converged = energy - optimum < cfg.stop_tol;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_steps {
        let images = averaged_images(&maps, prob);
        let displacement: f64 = mu
            .weights()
            .iter()
            .zip(mu.points().outer_iter().zip(images.outer_iter()))
            .map(|(w, (x, g))| w * (&x - &g).mapv(|v| v * v).sum())
            .sum();
        mu = mu.push_forward(images)?;
        iterations += 1;
        maps = provider_maps(&mu, prob, provider)?;
        let next = weighted_energy(&maps, prob);
        steps.push(StepRecord {
            k: iterations,
            energy: next,
            step_size: 1.0,
            support_diameter: mu.support_diameter(),
        });
        converged = if cfg.displacement_stop {
            displacement < cfg.stop_tol
        } else {
            (next - energy).abs() < cfg.stop_tol
        } || next - optimum < cfg.stop_tol;
        energy = next;
    }
    Ok(BarycenterResult {
        barycenter: mu,
        steps,
        iterations,
        converged,
        population_energy_estimate: None,
        provider: provider.label(),
    })
}
