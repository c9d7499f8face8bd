//! Reads a directory of two-marker CSV tables, one per sample, and streams
//! them into a barycenter that is written back as CSV.

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use weak_barycenter::barycenter::{stream_barycenter, MapProvider, StreamConfig};
use weak_barycenter::io::{glob_paths, measure_stream, read_measure, write_measure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("weak_barycenter_cytometry");
    fs::create_dir_all(&dir)?;

    // two populations per sample, shifted a little from file to file
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..6 {
        let shift = 0.3 * rng.sample::<f64, _>(StandardNormal);
        let mut text = String::from("CD4,CD8\n");
        for i in 0..150 {
            let (cx, cy) = if i % 3 == 0 { (1.0, 4.0) } else { (4.0, 1.5) };
            let x = cx + shift + 0.4 * rng.sample::<f64, _>(StandardNormal);
            let y = cy - shift + 0.4 * rng.sample::<f64, _>(StandardNormal);
            text.push_str(&format!("{x},{y}\n"));
        }
        let path = dir.join(format!("sample_{k:02}.csv"));
        fs::write(&path, text)?;
    }

    let paths = glob_paths(&format!("{}/sample_*.csv", dir.display()))?;
    let cfg = StreamConfig {
        schedule: Default::default(),
        steps: paths.len() - 1,
    };
    let res = stream_barycenter(measure_stream(paths), &MapProvider::default(), &cfg)?;
    let out = dir.join("barycenter.csv");
    write_measure(&out, &res.barycenter)?;
    let back = read_measure(&out)?;
    println!("streamed {} samples; barycenter mean {:?}", res.iterations + 1, back.mean().to_vec());
    println!("written to {}", out.display());
    Ok(())
}
