//! Weak cost, weak cost of the OT plan and W2^2 on Gaussian samples of
//! sizes 50 and 60, in increasing order.

use weak_barycenter::datagen::gaussian_cloud;
use weak_barycenter::ot::solve_exact_ot;
use weak_barycenter::owt::{owt_objective, solve_owt, SolverConfig};

fn main() -> weak_barycenter::Result<()> {
    println!("{:>4} {:>10} {:>14} {:>10}", "seed", "V", "weak(pi_OT)", "W2^2");
    for seed in 0..5 {
        let mu = gaussian_cloud(&[0.0, 0.0], 1.0, 50, 2 * seed);
        let nu = gaussian_cloud(&[0.0, 0.0], 1.0, 60, 2 * seed + 1);
        let v = solve_owt(&mu, &nu, &SolverConfig::default())?.value;
        let (plan, w2) = solve_exact_ot(&mu, &nu)?;
        let weak_ot = owt_objective(&plan, &mu, &nu)?;
        println!("{seed:>4} {v:>10.4} {weak_ot:>14.4} {w2:>10.4}");
    }
    Ok(())
}
