use super::*;
use crate::measures::{check_convex_order_1d, Decision};
use ndarray::array;
use rand_distr::StandardNormal;

fn line(xs: &[f64]) -> DiscreteMeasure {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    DiscreteMeasure::from_rows(&rows, None).unwrap()
}

fn plan(m: Array2<f64>, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> TransportPlan {
    TransportPlan::new(m, mu.weights().to_owned(), nu.weights().to_owned()).unwrap()
}

fn gaussian_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DiscreteMeasure {
    let pts = Array2::from_shape_fn((n, d), |_| scale * rng.sample::<f64, _>(StandardNormal));
    DiscreteMeasure::uniform(pts).unwrap()
}

fn both_methods() -> [SolverConfig; 2] {
    [SolverConfig::interior_point(), SolverConfig::proximal()]
}

/// Central differences on the raw plan entries, without projection.
fn fd_gradient(p: &TransportPlan, mu: &DiscreteMeasure, nu: &DiscreteMeasure, h: f64) -> Array2<f64> {
    let f = |m: &Array2<f64>| -> f64 {
        // direct evaluation of sum_i a_i |x_i - (m y)_i / a_i|^2
        let a = mu.weights();
        let cond = m.dot(&nu.points());
        (0..mu.len())
            .map(|i| {
                let s = cond.row(i).mapv(|v| v / a[i]);
                a[i] * (&s - &mu.point(i)).mapv(|v| v * v).sum()
            })
            .sum()
    };
    let base = p.matrix().clone();
    Array2::from_shape_fn(base.dim(), |(i, j)| {
        let mut up = base.clone();
        up[[i, j]] += h;
        let mut dn = base.clone();
        dn[[i, j]] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

#[test]
fn objective_examples() {
    let mu = line(&[0.0, 2.0]);
    let p = plan(array![[0.5, 0.0], [0.0, 0.5]], &mu, &mu);
    assert_eq!(owt_objective(&p, &mu, &mu).unwrap(), 0.0);

    let delta = line(&[0.0]);
    let nu = line(&[-1.0, 3.0]);
    let p = plan(array![[0.5, 0.5]], &delta, &nu);
    assert!((owt_objective(&p, &delta, &nu).unwrap() - 1.0).abs() < 1e-15);

    let mu = line(&[-1.0, 1.0]);
    let nu = line(&[-2.0, 2.0]);
    let p = plan(array![[0.375, 0.125], [0.125, 0.375]], &mu, &nu);
    assert!(owt_objective(&p, &mu, &nu).unwrap().abs() < 1e-15);
}

#[test]
fn objective_errors() {
    let mu = line(&[0.0, 1.0]);
    let nu = line(&[0.0, 1.0, 2.0]);
    let p = TransportPlan::independent(&mu, &mu);
    assert!(matches!(
        owt_objective(&p, &mu, &nu),
        Err(Error::DimensionMismatch { .. })
    ));
    let zero = DiscreteMeasure::from_rows(&[vec![0.0], vec![1.0]], Some(vec![0.0, 1.0])).unwrap();
    let p = TransportPlan::independent(&zero, &nu);
    assert!(matches!(
        owt_objective(&p, &zero, &nu),
        Err(Error::ZeroRowWeight { row: 0 })
    ));
}

#[test]
fn gradient_dirac_pair() {
    let mu = line(&[0.0]);
    let nu = line(&[1.0]);
    let p = plan(array![[1.0]], &mu, &nu);
    let g = owt_gradient(&p, &mu, &nu).unwrap();
    assert!((g[[0, 0]] - 2.0).abs() < 1e-15);
    let fd = fd_gradient(&p, &mu, &nu, 1e-6);
    assert!((fd[[0, 0]] - 2.0).abs() < 1e-6);
}

#[test]
fn gradient_vanishes_when_conditional_means_match() {
    let mu = line(&[-1.0, 1.0]);
    let nu = line(&[-2.0, 2.0]);
    let p = plan(array![[0.375, 0.125], [0.125, 0.375]], &mu, &nu);
    let g = owt_gradient(&p, &mu, &nu).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn gradient_matches_finite_differences_seed_7() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mu = gaussian_cloud(&mut rng, 3, 2, 1.0);
    let nu = gaussian_cloud(&mut rng, 3, 2, 1.5);
    let raw = Array2::from_shape_fn((3, 3), |_| rng.random_range(0.0..1.0 / 3.0));
    let p = plan(raw, &mu, &nu);
    let g = owt_gradient(&p, &mu, &nu).unwrap();
    let fd = fd_gradient(&p, &mu, &nu, 1e-6);
    for (x, y) in g.iter().zip(fd.iter()) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

#[test]
fn solve_identical_measures_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mu = gaussian_cloud(&mut rng, 12, 2, 1.0);
    for cfg in both_methods() {
        let sol = solve_owt(&mu, &mu, &cfg).unwrap();
        assert!(sol.value.abs() < 1e-7, "V = {}", sol.value);
        assert!(sol.plan.feasibility_gap() <= 1e-8);
    }
}

#[test]
fn solve_dirac_source() {
    let mu = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
    let nu = DiscreteMeasure::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]], None).unwrap();
    let sol = solve_owt(&mu, &nu, &SolverConfig::default()).unwrap();
    assert!((sol.value - 2.0).abs() < 1e-9);
    assert!((sol.map.image(0)[0] - 1.0).abs() < 1e-9);
    assert!((sol.map.image(0)[1] - 1.0).abs() < 1e-9);
}

#[test]
fn solve_nested_symmetric_pair() {
    let mu = line(&[-1.0, 1.0]);
    let nu = line(&[-2.0, 2.0]);
    for cfg in both_methods() {
        let sol = solve_owt(&mu, &nu, &cfg).unwrap();
        assert!(sol.value.abs() < 1e-7, "V = {}", sol.value);
        assert!((sol.map.image(0)[0] + 1.0).abs() < 1e-3);
        assert!((sol.map.image(1)[0] - 1.0).abs() < 1e-3);
    }
}

#[test]
fn solution_beats_random_feasible_plans() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for cfg in both_methods().iter().cycle().take(4) {
        let mu = gaussian_cloud(&mut rng, 6, 2, 1.0);
        let nu = gaussian_cloud(&mut rng, 5, 2, 0.7);
        let sol = solve_owt(&mu, &nu, cfg).unwrap();
        for _ in 0..100 {
            let raw = Array2::from_shape_fn((6, 5), |(i, j)| {
                mu.weights()[i] * nu.weights()[j] * rng.random_range(0.0..3.0)
            });
            let q = project_transport_polytope(&raw, mu.weights(), nu.weights(), cfg)
                .unwrap()
                .plan;
            let fq = owt_objective(&q, &mu, &nu).unwrap();
            assert!(sol.value <= fq + cfg.obj_tol, "{} > {}", sol.value, fq);
        }
    }
}

#[test]
fn translation_and_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mu = gaussian_cloud(&mut rng, 8, 2, 1.0);
    let nu = gaussian_cloud(&mut rng, 9, 2, 0.6);
    let cfg = SolverConfig::default();
    let base = solve_owt(&mu, &nu, &cfg).unwrap();

    let c = [3.0, -7.5];
    let shifted = solve_owt(&mu.translated(&c).unwrap(), &nu.translated(&c).unwrap(), &cfg).unwrap();
    assert!((shifted.value - base.value).abs() < 1e-8);
    for i in 0..mu.len() {
        for k in 0..2 {
            let moved = shifted.map.image(i)[k] - c[k];
            assert!((moved - base.map.image(i)[k]).abs() < 1e-4);
        }
    }

    let s = 2.5;
    let scaled = solve_owt(
        &mu.scaled_about(&[0.0, 0.0], s).unwrap(),
        &nu.scaled_about(&[0.0, 0.0], s).unwrap(),
        &cfg,
    )
    .unwrap();
    assert!((scaled.value - s * s * base.value).abs() < 1e-6 * (1.0 + base.value));
}

#[test]
fn accelerated_trace_is_monotone_with_restart() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mu = gaussian_cloud(&mut rng, 20, 2, 1.0);
    let nu = gaussian_cloud(&mut rng, 25, 2, 0.8);
    let cfg = SolverConfig::proximal();
    let sol = solve_owt(&mu, &nu, &cfg).unwrap();
    assert!(sol.trace.records.len() <= cfg.max_iters);
    for w in sol.trace.records.windows(2) {
        assert!(w[1].objective <= w[0].objective);
    }
}

#[test]
fn map_properties_on_random_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mu = gaussian_cloud(&mut rng, 15, 2, 1.2);
    let nu = gaussian_cloud(&mut rng, 12, 2, 1.0);
    let cfg = SolverConfig::default();
    let sol = solve_owt(&mu, &nu, &cfg).unwrap();
    let slack = 10.0 * cfg.obj_tol.sqrt();
    assert!(sol.map.lipschitz_violations(slack).is_empty());

    let pushed = sol.map.push_forward().mean();
    let diam = nu.support_diameter();
    let target = nu.mean();
    for k in 0..2 {
        assert!((pushed[k] - target[k]).abs() <= cfg.marginal_tol * diam.max(1.0));
    }
}

#[test]
fn pushforward_is_dominated_in_1d() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let mu = gaussian_cloud(&mut rng, 7, 1, 1.0);
        let nu = gaussian_cloud(&mut rng, 6, 1, 1.0);
        let sol = solve_owt(&mu, &nu, &SolverConfig::proximal()).unwrap();
        let v = check_convex_order_1d(&sol.map.push_forward(), &nu, 1e-5).unwrap();
        assert_ne!(v.decision, Decision::Fails, "{v:?}");
    }
}

#[test]
fn rejects_zero_source_weight_and_bad_config() {
    let mu = DiscreteMeasure::from_rows(&[vec![0.0], vec![1.0]], Some(vec![0.0, 1.0])).unwrap();
    let nu = line(&[0.0, 1.0]);
    assert!(matches!(
        solve_owt(&mu, &nu, &SolverConfig::default()),
        Err(Error::ZeroRowWeight { row: 0 })
    ));
    let cfg = SolverConfig {
        line_search_shrink: 1.5,
        ..SolverConfig::default()
    };
    assert!(matches!(solve_owt(&nu, &nu, &cfg), Err(Error::InvalidConfig(_))));
}

#[test]
fn warm_start_is_honored() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mu = gaussian_cloud(&mut rng, 10, 2, 1.0);
    let nu = gaussian_cloud(&mut rng, 10, 2, 0.5);
    let cfg = SolverConfig::proximal();
    let cold = solve_owt(&mu, &nu, &cfg).unwrap();
    let warm = solve_owt_from(&mu, &nu, &cfg, Some(&cold.plan)).unwrap();
    assert!(warm.trace.iterations_used <= cold.trace.iterations_used);
    assert!((warm.value - cold.value).abs() < 1e-7);
}

#[test]
fn top_eigenvalue_bounds() {
    let m = [2.0, 0.0, 0.0, 1.0];
    let l = top_eigenvalue(&m, 2);
    assert!(l >= 2.0 && l <= 2.0 * 1.001 + 1e-12);
    let m = [1.0, 1.0, 1.0, 1.0];
    assert!(top_eigenvalue(&m, 2) >= 2.0 - 1e-9);
}

/// `<G, pi> - min_q <G, q>` bounds the suboptimality of `pi`; the inner
/// minimum is an exact transport LP.
fn certified_gap(sol: &OwtSolution, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let g = owt_gradient(&sol.plan, mu, nu).unwrap();
    let lp = crate::ot::transport_lp(mu.weights(), nu.weights(), g.view()).unwrap();
    (&g * sol.plan.matrix()).sum() - lp.cost
}

#[test]
fn interior_point_gap_is_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (r, m) in [(5, 7), (20, 20), (40, 30)] {
        let mu = gaussian_cloud(&mut rng, r, 2, 1.0);
        let nu = gaussian_cloud(&mut rng, m, 2, 0.8);
        let sol = solve_owt(&mu, &nu, &SolverConfig::interior_point()).unwrap();
        assert!(sol.trace.converged);
        let gap = certified_gap(&sol, &mu, &nu);
        assert!(gap < 1e-9, "gap {gap}");
        let fista = solve_owt(&mu, &nu, &SolverConfig::proximal()).unwrap();
        assert!(fista.value >= sol.value - 1e-9);
        assert!(fista.value - sol.value < 1e-4);
    }
}

#[test]
fn interior_point_survives_degenerate_translation_optimum() {
    // a translate of mu is below nu in convex order, so V is the squared
    // mean difference and the map a pure shift while the optimal plan is
    // far from unique; the Newton systems lose accuracy near the boundary
    let mu = line(&[
        -1.5019353115225664, -2.3329641194090303, -1.773922060803772, -2.194779506651811,
        -0.17029857136252335, -0.6830824817394098, 0.3056156759226336, 1.6604131210100577,
        -1.8548530278015374, -0.6047739169216816, -1.1135873761843342, -3.4474378643415005,
        -0.4554871196270942, -1.9508009631482799, -0.4685591676661012, -0.35781586833977774,
        -1.8728009487817803, -2.0437399798704226, -2.757878423479302, -1.4010904384244176,
        0.2088100023547752, -1.9832788811659805, -1.8679977331607982,
    ]);
    let nu = line(&[
        0.5595842701818725, -1.4909683602399375, 2.8680958604743623, 3.704874855182135,
        -1.8057214000812254, -0.08908322961940157, -0.26650105073305497, -0.6953009028760055,
        0.1817537923396967, 2.236306041621424, 2.916767127159729, 3.5950684187300452,
        0.042322741467233374, 1.7917157693815473, 0.29635066692620526, 2.1669239515471728,
        -0.0744767766761324, 0.6489688271066321, -1.5956211449573745, -0.5357625813210268,
        1.8613166885075518,
    ]);
    let shift = nu.mean()[0] - mu.mean()[0];
    let eta = mu.translated(&[shift]).unwrap();
    assert_eq!(check_convex_order_1d(&eta, &nu, 1e-12).unwrap().decision, Decision::Holds);
    let sol = solve_owt(&mu, &nu, &SolverConfig::interior_point()).unwrap();
    assert!(sol.trace.converged);
    assert!((sol.value - shift * shift).abs() < 1e-8, "{} vs {}", sol.value, shift * shift);
    for i in 0..mu.len() {
        assert!((sol.map.image(i)[0] - mu.point(i)[0] - shift).abs() < 1e-6);
    }
}
