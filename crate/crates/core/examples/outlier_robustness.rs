//! 50 small Gaussian samples, each point translated far away with
//! probability 0.05; compares how far each barycenter moves.

use weak_barycenter::barycenter::{stream_barycenter, MapProvider, StreamConfig};
use weak_barycenter::datagen::{corrupt_outliers, generate, CorruptionSpec, GeneratorSpec};
use weak_barycenter::measures::DiscreteMeasure;
use weak_barycenter::ot::w2_squared;

fn stream(inputs: &[DiscreteMeasure], provider: &MapProvider) -> weak_barycenter::Result<DiscreteMeasure> {
    let cfg = StreamConfig {
        schedule: Default::default(),
        steps: inputs.len() - 1,
    };
    Ok(stream_barycenter(inputs.iter().cloned().map(Ok), provider, &cfg)?.barycenter)
}

fn main() -> weak_barycenter::Result<()> {
    let mut spec = GeneratorSpec::gaussians(50, 25, 11);
    spec.samples = [20, 30];
    let clean = generate(&spec)?;
    let corrupted = clean
        .iter()
        .enumerate()
        .map(|(k, m)| corrupt_outliers(m, &CorruptionSpec::new(0.05, 100 + k as u64)))
        .collect::<weak_barycenter::Result<Vec<_>>>()?;
    for provider in [MapProvider::default(), MapProvider::exact_ot()] {
        let a = stream(&clean, &provider)?;
        let b = stream(&corrupted, &provider)?;
        println!("{:<14} moved by W2 = {:.4}", provider.label(), w2_squared(&a, &b)?.sqrt());
    }
    Ok(())
}
