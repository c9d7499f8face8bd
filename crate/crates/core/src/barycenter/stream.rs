use ndarray::Zip;

use super::{BarycenterResult, MapProvider, StepRecord, StepSchedule};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Controls for [`stream_barycenter`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamConfig {
    pub schedule: StepSchedule,
    /// Number of updates; the stream must yield `steps + 1` measures.
    pub steps: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            steps: 100,
        }
    }
}

/// `[(1 - gamma) id + gamma S] # mu` with `S` the provider's map to `nu`.
pub fn stream_barycenter_step(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    gamma: f64,
    provider: &MapProvider,
) -> Result<DiscreteMeasure> {
    blend_step(mu, nu, gamma, provider).map(|(m, _)| m)
}

fn blend_step(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    gamma: f64,
    provider: &MapProvider,
) -> Result<(DiscreteMeasure, f64)> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidScheduleParameter(format!(
            "step size {gamma} outside [0, 1]"
        )));
    }
    mu.check_dim(nu.dim())?;
    let provided = provider.map(mu, nu)?;
    let mut images = mu.points().to_owned();
    // x + gamma (S(x) - x) keeps x bit-exact wherever S(x) = x
    Zip::from(&mut images)
        .and(provided.map.images())
        .for_each(|x, &s| *x += gamma * (s - *x));
    Ok((mu.push_forward(images)?, provided.energy))
}

/// Streaming barycenter iteration.
///
/// The first measure of `stream` is the starting point; each later one is
/// pulled only when its step begins. Step `k` records the weak cost from
/// the current iterate to the streamed measure, the step size, and the
/// support diameter of the updated iterate.
pub fn stream_barycenter<I>(stream: I, provider: &MapProvider, cfg: &StreamConfig) -> Result<BarycenterResult>
where
    I: IntoIterator<Item = Result<DiscreteMeasure>>,
{
    provider.validate()?;
    let required = cfg.steps + 1;
    let mut stream = stream.into_iter();
    let mut mu = stream.next().ok_or(Error::StreamExhausted {
        available: 0,
        required,
    })??;
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut running = 0.0;
    for k in 0..cfg.steps {
        let nu = stream.next().ok_or(Error::StreamExhausted {
            available: k + 1,
            required,
        })??;
        let gamma = cfg.schedule.gamma(k);
        let (next, energy) = blend_step(&mu, &nu, gamma, provider)?;
        mu = next;
        running += (energy - running) / (k + 1) as f64;
        steps.push(StepRecord {
            k,
            energy,
            step_size: gamma,
            support_diameter: mu.support_diameter(),
        });
    }
    Ok(BarycenterResult {
        barycenter: mu,
        steps,
        iterations: cfg.steps,
        converged: true,
        population_energy_estimate: (cfg.steps > 0).then_some(running),
        provider: provider.label(),
    })
}
