//! Streaming barycenters with Sinkhorn maps for a range of regularizations,
//! compared with the weak barycenter of the same stream.

use weak_barycenter::barycenter::{stream_barycenter, MapProvider, StreamConfig};
use weak_barycenter::datagen::GeneratorSpec;
use weak_barycenter::ot::w2_squared;

fn main() -> weak_barycenter::Result<()> {
    let spec = GeneratorSpec::gaussians(15, 100, 7);
    let cfg = StreamConfig {
        schedule: Default::default(),
        steps: spec.num_measures - 1,
    };
    let weak = stream_barycenter(spec.stream(), &MapProvider::default(), &cfg)?.barycenter;
    let ot = stream_barycenter(spec.stream(), &MapProvider::exact_ot(), &cfg)?.barycenter;
    println!("weak barycenter: total variance {:.4}", weak.total_variance());
    println!("OT barycenter:   total variance {:.4}, W2^2 to weak {:.4}", ot.total_variance(), w2_squared(&ot, &weak)?);
    for eps in [0.1, 1.0, 5.0, 1e3] {
        let s = stream_barycenter(spec.stream(), &MapProvider::sinkhorn(eps), &cfg)?.barycenter;
        println!(
            "eps = {eps:<6} total variance {:.4}, W2^2 to weak {:.4}",
            s.total_variance(),
            w2_squared(&s, &weak)?
        );
    }
    Ok(())
}
