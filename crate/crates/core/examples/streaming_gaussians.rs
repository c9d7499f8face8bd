//! Streaming barycenter of 15 Gaussian clouds with the weak transport and
//! the exact OT providers; the weak one is less spread out.

use weak_barycenter::barycenter::{stream_barycenter, MapProvider, StepSchedule, StreamConfig};
use weak_barycenter::datagen::GeneratorSpec;

fn main() -> weak_barycenter::Result<()> {
    let spec = GeneratorSpec::gaussians(15, 100, 2024);
    let cfg = StreamConfig {
        schedule: StepSchedule::harmonic(1.0)?,
        steps: spec.num_measures - 1,
    };
    for provider in [MapProvider::default(), MapProvider::exact_ot()] {
        // measures are generated one at a time as the stream is consumed
        let res = stream_barycenter(spec.stream(), &provider, &cfg)?;
        println!(
            "{:<16} total variance {:.4}, population energy estimate {:.4}",
            res.provider,
            res.barycenter.total_variance(),
            res.population_energy_estimate.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
