//! Fixed-point iteration between two centered ellipses with swapped axes;
//! the weak barycenter ends up close to a circle inside both.

use weak_barycenter::barycenter::{
    optimal_energy_closed_form, weak_barycenter, BarycenterConfig, BarycenterProblem, MapProvider,
};
use weak_barycenter::datagen::centered_ellipse;

fn main() -> weak_barycenter::Result<()> {
    let a = centered_ellipse([2f64.sqrt(), 1.0], 300, 0.0, 3)?;
    let b = centered_ellipse([1.0, 2f64.sqrt()], 300, 0.0, 4)?;
    let prob = BarycenterProblem::new(vec![a, b], None)?;
    let res = weak_barycenter(&prob, &MapProvider::default(), &BarycenterConfig::default())?;

    for s in &res.steps {
        println!("step {:>2}: energy {:.6e}, step size {:.3e}", s.k, s.energy, s.step_size);
    }
    println!("converged: {} after {} iterations", res.converged, res.iterations);
    println!("closed-form optimum: {:.6e}", optimal_energy_closed_form(&prob));

    let radii: Vec<f64> = res
        .barycenter
        .points()
        .outer_iter()
        .map(|p| p.dot(&p).sqrt())
        .collect();
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max);
    println!("barycenter radii in [{lo:.3}, {hi:.3}]");
    Ok(())
}
