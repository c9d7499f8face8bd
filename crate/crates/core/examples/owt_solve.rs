//! Weak transport between two small point clouds, solved with both
//! solvers, next to the classical transport cost.

use weak_barycenter::datagen::gaussian_cloud;
use weak_barycenter::ot::w2_squared;
use weak_barycenter::owt::{solve_owt, SolverConfig};

fn main() -> weak_barycenter::Result<()> {
    let mu = gaussian_cloud(&[0.0, 0.0], 1.0, 30, 1);
    let nu = gaussian_cloud(&[1.0, -0.5], 2.0, 40, 2);

    let ipm = solve_owt(&mu, &nu, &SolverConfig::interior_point())?;
    let fista = solve_owt(&mu, &nu, &SolverConfig::proximal())?;
    println!("interior point: V = {:.8} in {} iterations", ipm.value, ipm.trace.iterations_used);
    println!("FISTA:          V = {:.8} in {} iterations", fista.value, fista.trace.iterations_used);
    println!("W2^2            = {:.8}", w2_squared(&mu, &nu)?);

    // the barycentric map of an optimal plan is 1-Lipschitz
    println!("Lipschitz ratio of the map: {:.6}", ipm.map.lipschitz_ratio());
    for i in 0..3 {
        println!("x = {:?} -> S(x) = {:?}", mu.point(i).to_vec(), ipm.map.image(i).to_vec());
    }
    Ok(())
}
