//! Two noisy copies of a synthetic digit "8" and their barycenters after
//! 30 fixed-point steps, drawn as text.

use weak_barycenter::barycenter::{weak_barycenter, BarycenterConfig, BarycenterProblem, MapProvider};
use weak_barycenter::datagen::{image_to_measure, noisy_digit, parse_pgm};
use weak_barycenter::measures::DiscreteMeasure;

const SIDE: usize = 28;

/// Plain PGM of two stacked rings.
fn eight_pgm() -> String {
    let mut s = format!("P2\n# synthetic eight\n{SIDE} {SIDE}\n255\n");
    for row in 0..SIDE {
        let line: Vec<String> = (0..SIDE)
            .map(|col| {
                let (x, y) = (col as f64, row as f64);
                let ring = |cy: f64, r: f64| (((x - 13.5).powi(2) + (y - cy).powi(2)).sqrt() - r).abs() < 1.3;
                if ring(8.5, 4.5) || ring(19.0, 5.5) { "255" } else { "0" }.to_string()
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn render(m: &DiscreteMeasure) -> String {
    let mut grid = vec![0.0; SIDE * SIDE];
    for (p, w) in m.points().outer_iter().zip(m.weights()) {
        let col = p[0].round().clamp(0.0, (SIDE - 1) as f64) as usize;
        let row = SIDE - 1 - p[1].round().clamp(0.0, (SIDE - 1) as f64) as usize;
        grid[row * SIDE + col] += w;
    }
    let top = grid.iter().copied().fold(0.0, f64::max);
    grid.chunks(SIDE)
        .map(|r| r.iter().map(|&v| if v > 0.5 * top { '#' } else if v > 0.0 { '+' } else { '.' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() -> weak_barycenter::Result<()> {
    let bytes = eight_pgm().into_bytes();
    let (grid, _) = parse_pgm(&bytes)?;
    let prototype = image_to_measure(&bytes)?;
    let first = noisy_digit(&prototype, grid, 0.1, 1)?;
    let second = noisy_digit(&prototype, grid, 0.1, 2)?;
    let prob = BarycenterProblem::new(vec![first, second], None)?;
    let cfg = BarycenterConfig {
        stop_tol: 1e-12,
        max_steps: 30,
        ..Default::default()
    };
    for provider in [MapProvider::default(), MapProvider::ExactOt { max_entries: 1_000_000 }, MapProvider::sinkhorn(1.0)] {
        let res = weak_barycenter(&prob, &provider, &cfg)?;
        println!("{} ({} atoms)\n{}\n", res.provider, res.barycenter.len(), render(&res.barycenter));
    }
    Ok(())
}
