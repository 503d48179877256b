use mfsmp_core::mfbsde::{
    backward_sweep, picard_bsde, solve_linear, BsdeConfig, FnDriver, LinearDriver,
};
use mfsmp_core::mfsde::{
    interacting_particle_solve, ControlPath, EnsembleConfig, OrnsteinUhlenbeck, ParticleEnsemble,
};
use mfsmp_core::noise::{IntensityModel, LevyGrid, TimeGrid};
use mfsmp_core::regression::RegressionBasis;

/// Brownian forward state `X = G` (no jumps) or a jump-diffusion OU.
fn forward(n: usize, steps: usize, block: u64, jumps: bool) -> ParticleEnsemble {
    let (levy, lam_h, ou) = if jumps {
        (
            LevyGrid::new(vec![-0.5, 0.5], vec![1.0, 1.0], 0.1).unwrap(),
            1.0,
            OrnsteinUhlenbeck {
                rev: 1.0,
                level: 0.0,
                sigma: 0.5,
                jump_scale: 0.5,
            },
        )
    } else {
        (
            LevyGrid::gaussian_only(),
            0.0,
            OrnsteinUhlenbeck {
                rev: 0.0,
                level: 0.0,
                sigma: 1.0,
                jump_scale: 0.0,
            },
        )
    };
    let cfg = EnsembleConfig::new(
        TimeGrid::new(1.0, steps).unwrap(),
        n,
        42,
        IntensityModel::constant(1.0, lam_h),
        levy,
    )
    .with_block(block)
    .keeping_noise(true);
    interacting_particle_solve(&ou, 0.0, &cfg, &ControlPath::zero()).unwrap()
}

#[test]
fn zero_driver_constant_terminal_is_exact() {
    let e = forward(400, 20, 0, true);
    let sol = backward_sweep(|_, _| 0.0, &vec![1.7; 400], &e, &RegressionBasis::default()).unwrap();
    for i in 0..=20 {
        assert!(sol.y_knot(i).iter().all(|&y| y == 1.7));
    }
    for i in 0..20 {
        for n in 0..400 {
            assert!(sol.z(i, n).iter().all(|&z| z == 0.0));
        }
    }
    assert_eq!(sol.terminal_residual, 0.0);
}

#[test]
fn representation_of_a_stochastic_integral() {
    let n = 4000;
    let e = forward(n, 50, 1, false);
    let terminal: Vec<f64> = (0..n).map(|p| e.value(p, 50)).collect();
    let sol = backward_sweep(|_, _| 0.0, &terminal, &e, &RegressionBasis::default()).unwrap();
    let dt = e.grid().dt();
    let z0: f64 = (0..50).map(|i| sol.mean_z(i, 0)).sum::<f64>() / 50.0;
    assert!((z0 - 1.0).abs() < 0.05, "mean Z(0) = {z0}");
    // Y tracks the running integral.
    let err: f64 = (0..n)
        .map(|p| (sol.y(25, p) - e.value(p, 25)).powi(2))
        .sum::<f64>()
        / n as f64;
    assert!(err < 1e-2, "{err}");
    // Isometry of the extracted Z against Var(F).
    let energy: Vec<f64> = (0..n)
        .map(|p| (0..50).map(|i| sol.z(i, p)[0].powi(2) * dt).sum())
        .collect();
    let mean_f = terminal.iter().sum::<f64>() / n as f64;
    let sq: Vec<f64> = terminal.iter().map(|f| (f - mean_f).powi(2)).collect();
    let diff: Vec<f64> = energy.iter().zip(&sq).map(|(a, b)| a - b).collect();
    let m = diff.iter().sum::<f64>() / n as f64;
    let se =
        (diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
    assert!(m.abs() <= 5.0 * se, "gap {m}, se {se}");
}

#[test]
fn linear_ode_in_y() {
    let e = forward(200, 100, 2, true);
    let (a, c) = (0.7, 2.0);
    let sol = backward_sweep(
        |_, arg| a * arg.y,
        &vec![c; 200],
        &e,
        &RegressionBasis::default(),
    )
    .unwrap();
    for i in [0, 50, 100] {
        let t = e.grid().knot(i);
        let oracle = c * (-a * (1.0 - t)).exp();
        assert!(
            (sol.y(i, 0) - oracle).abs() < 2.0 * 0.01 * a * c,
            "knot {i}: {} vs {oracle}",
            sol.y(i, 0)
        );
    }
}

#[test]
fn driver_without_primed_arguments_converges_in_two_iterations() {
    let e = forward(300, 20, 3, true);
    let copy = forward(300, 20, 4, true);
    let h = FnDriver::new(1.0, |_, own, _| -own.y + 1.0).without_primed();
    let f: Vec<f64> = (0..300).map(|p| e.value(p, 20)).collect();
    let fc: Vec<f64> = (0..300).map(|p| copy.value(p, 20)).collect();
    let run = picard_bsde(&h, &f, &fc, &e, &copy, &BsdeConfig::default()).unwrap();
    assert_eq!(run.solution.trace.len(), 2);
    assert_eq!(run.solution.trace[1], 0.0);
    assert!(run.solution.converged);
}

#[test]
fn mean_field_driver_on_the_copy_mean() {
    let (n, c) = (2000, 1.5);
    let e = forward(n, 100, 5, true);
    let copy = forward(n, 100, 6, true);
    let h = LinearDriver::constant(0.0, 0.0, 1.0, e.levy().n_slots());
    let run = solve_linear(
        &h,
        &vec![c; n],
        &vec![c; n],
        &e,
        &copy,
        &BsdeConfig::default(),
    )
    .unwrap();
    let sol = &run.solution;
    assert!(sol.converged);
    for i in [0, 30, 60, 100] {
        let t = e.grid().knot(i);
        let oracle = c * (-(1.0 - t)).exp();
        assert!(((sol.mean_y(i) - oracle) / oracle).abs() < 1e-2, "knot {i}");
    }
    let ratios = sol.contraction_ratios();
    assert!(!ratios.is_empty());
    assert!(ratios.iter().all(|&r| r <= 1.0 / 3.0 + 0.05), "{ratios:?}");
}

#[test]
fn general_driver_agrees_with_the_linear_fast_path() {
    let n = 300;
    let e = forward(n, 20, 7, true);
    let copy = forward(n, 20, 8, true);
    let f: Vec<f64> = (0..n).map(|p| e.value(p, 20).sin()).collect();
    let fc: Vec<f64> = (0..n).map(|p| copy.value(p, 20).sin()).collect();
    let lin = LinearDriver::constant(0.3, -0.5, 0.8, e.levy().n_slots());
    let gen = FnDriver::new(0.8, |_, own, p| 0.3 - 0.5 * own.y + 0.8 * p.y);
    let a = solve_linear(&lin, &f, &fc, &e, &copy, &BsdeConfig::default()).unwrap();
    let b = picard_bsde(
        &gen,
        &f,
        &fc,
        &e,
        &copy,
        &BsdeConfig {
            beta: Some(a.solution.beta),
            ..Default::default()
        },
    )
    .unwrap();
    for i in 0..=20 {
        for p in 0..n {
            assert!((a.solution.y(i, p) - b.solution.y(i, p)).abs() < 1e-10);
        }
    }
}

#[test]
fn linear_examples() {
    let n = 200;
    let e = forward(n, 100, 9, true);
    let copy = forward(n, 100, 10, true);
    let slots = e.levy().n_slots();
    let cfg = BsdeConfig::default();

    let zero = solve_linear(
        &LinearDriver::constant(0.0, 0.0, 0.0, slots),
        &vec![2.0; n],
        &vec![2.0; n],
        &e,
        &copy,
        &cfg,
    )
    .unwrap();
    assert!((0..=100).all(|i| zero.solution.y_knot(i).iter().all(|&y| y == 2.0)));

    let unit = solve_linear(
        &LinearDriver::constant(1.0, 0.0, 0.0, slots),
        &vec![0.0; n],
        &vec![0.0; n],
        &e,
        &copy,
        &cfg,
    )
    .unwrap();
    for i in [0, 40, 100] {
        let t = e.grid().knot(i);
        assert!((unit.solution.y(i, 0) + (1.0 - t)).abs() < 1e-9);
    }

    let b = 0.6;
    let growth = solve_linear(
        &LinearDriver::constant(0.0, b, 0.0, slots),
        &vec![1.0; n],
        &vec![1.0; n],
        &e,
        &copy,
        &cfg,
    )
    .unwrap();
    let oracle = (-b * 1.0f64).exp();
    assert!(
        (growth.solution.y(0, 0) - oracle).abs() < 0.01 * b,
        "{}",
        growth.solution.y(0, 0)
    );
}
