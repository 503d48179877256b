//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line and
//! then asserts. Run with `cargo test --test acceptance -- --nocapture`.

use mfsmp_core::control::{difference_quotient_errors, gateaux_derivative, ControlPath};
use mfsmp_core::measures::{empirical, wasserstein2};
use mfsmp_core::mfbsde::{backward_sweep, solve_linear, BsdeConfig, LinearDriver};
use mfsmp_core::mfsde::{
    interacting_particle_solve, picard_law_solve, EnsembleConfig, LinearMeanField,
    OrnsteinUhlenbeck, ParticleEnsemble, PicardConfig,
};
use mfsmp_core::noise::{
    half_windows, isometry_check, sample_intensity, sample_noise, window_moments, Integrand,
    IntensityModel, LevyGrid, SquareRootParams, TimeGrid,
};
use mfsmp_core::regression::RegressionBasis;
use mfsmp_core::vasicek::{
    build_curved_scenario, build_mean_field_scenario, chaos_study, reduced_cost, riccati_oracle,
    run_example, VasicekRunConfig, VasicekScenario,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, title: &str, pass: bool, detail: String) {
    println!(
        "criterion {n}: {} {title} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn marks() -> LevyGrid {
    LevyGrid::new(vec![-0.5, 1.0], vec![1.5, 0.5], 0.0).unwrap()
}

fn square_root() -> IntensityModel {
    let p = SquareRootParams {
        init: 1.0,
        mean_reversion: 2.0,
        level: 1.0,
        vol: 0.3,
    };
    IntensityModel::SquareRoot { b: p, h: p }
}

#[test]
fn criterion_1_isometry() {
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for phi in Integrand::ALL {
        let s = isometry_check(phi, &square_root(), &marks(), &grid, 10_000, 101).unwrap();
        worst = worst.max((s.ratio - 1.0).abs() / s.ratio_se);
        pass &= s.within(5.0);
    }
    verdict(
        1,
        "isometry",
        pass,
        format!("5 integrands, worst |ratio - 1| = {worst:.2} SE"),
    );
}

#[test]
fn criterion_2_conditional_moments() {
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let (a, b) = half_windows(&grid, &marks());
    let m = window_moments(&a, &b, &square_root(), &marks(), &grid, 10_000, 202).unwrap();
    let z = |s: mfsmp_core::noise::ZeroMeanStat| s.mean / s.std_error;
    verdict(
        2,
        "centering and orthogonality",
        m.within(5.0),
        format!(
            "z-scores: mean {:.2}, product {:.2}, second moment {:.2}",
            z(m.centering),
            z(m.orthogonality),
            z(m.second_moment)
        ),
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn criterion_3_wasserstein_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in 1..=6 {
        let perms = permutations(n);
        for _ in 0..200 {
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let q: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let brute = perms
                .iter()
                .map(|s| {
                    s.iter()
                        .enumerate()
                        .map(|(i, &j)| (p[i] - q[j]).powi(2))
                        .sum::<f64>()
                        / n as f64
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            let sorted = wasserstein2(&empirical(&p).unwrap(), &empirical(&q).unwrap());
            worst = worst.max((sorted - brute).abs());
            count += 1;
        }
    }
    verdict(
        3,
        "sorted coupling is optimal",
        worst <= 1e-12,
        format!("{count} instances, max gap {worst:.1e}"),
    );
}

#[test]
fn criterion_4_picard_contraction() {
    let (a, c) = (-1.0, 0.5);
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let pc = PicardConfig {
        tol: 1e-12,
        max_iter: 40,
    };
    let mut noisy = LinearMeanField::new(a, c);
    noisy.sigma = 0.4;
    noisy.jump_scale = 0.5;
    let cfg = EnsembleConfig::new(
        grid.clone(),
        10_000,
        404,
        IntensityModel::constant(1.0, 1.0),
        marks(),
    );
    let out = picard_law_solve(&noisy, 1.0, &cfg, &ControlPath::zero(), &pc).unwrap();
    let rho = out.diagnostics.max_ratio_from(2).unwrap_or(f64::INFINITY);

    let quiet = LinearMeanField::new(a, c);
    let det = picard_law_solve(&quiet, 1.0, &cfg, &ControlPath::zero(), &pc).unwrap();
    let rho_det = det.diagnostics.max_ratio_from(2).unwrap_or(0.0);
    let mut rel: f64 = 0.0;
    let mut noisy_z: f64 = 0.0;
    for i in 0..=1000 {
        let exact = ((a + c) * grid.knot(i)).exp();
        rel = rel.max((det.ensemble.mean(i) - exact).abs() / exact);
        noisy_z = noisy_z.max(
            (out.ensemble.mean(i) - exact).abs() / (out.ensemble.mean_std_error(i) + 1e-3 * exact),
        );
    }
    let pass =
        out.diagnostics.converged && rho <= 0.9 && rho_det <= 0.9 && rel <= 1e-3 && noisy_z <= 5.0;
    verdict(
        4,
        "Picard contraction on the law",
        pass,
        format!(
            "{} iterations, max ratio {rho:.3} (noise-free {rho_det:.3}), mean rel. error {rel:.1e}, noisy mean within {noisy_z:.2} x (SE + 1e-3)",
            out.diagnostics.iterations
        ),
    );
}

fn bsde_forward(n: usize, steps: usize, block: u64, jumps: bool) -> ParticleEnsemble {
    let (levy, lam_h, ou) = if jumps {
        (
            marks(),
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
        505,
        IntensityModel::constant(1.0, lam_h),
        levy,
    )
    .with_block(block)
    .keeping_noise(true);
    interacting_particle_solve(&ou, 0.0, &cfg, &ControlPath::zero()).unwrap()
}

#[test]
fn criterion_5_mean_field_bsde() {
    let basis = RegressionBasis::default();
    let e = bsde_forward(1000, 50, 0, true);
    let sol = backward_sweep(|_, _| 0.0, &vec![1.3; 1000], &e, &basis).unwrap();
    let exact = (0..=50).all(|i| sol.y_knot(i).iter().all(|&y| y == 1.3))
        && (0..50).all(|i| sol.z_step(i).iter().all(|&z| z == 0.0));

    let n = 10_000;
    let w = bsde_forward(n, 50, 1, false);
    let terminal: Vec<f64> = (0..n).map(|p| w.value(p, 50)).collect();
    let rep = backward_sweep(|_, _| 0.0, &terminal, &w, &basis).unwrap();
    let z0 = (0..50).map(|i| rep.mean_z(i, 0)).sum::<f64>() / 50.0;

    let c = 1.5;
    let main = bsde_forward(4000, 100, 2, true);
    let copy = bsde_forward(4000, 100, 3, true);
    let h = LinearDriver::constant(0.0, 0.0, 1.0, main.levy().n_slots());
    let run = solve_linear(
        &h,
        &vec![c; 4000],
        &vec![c; 4000],
        &main,
        &copy,
        &BsdeConfig::default(),
    )
    .unwrap();
    let mean_err = (0..=100)
        .map(|i| {
            let oracle = c * (-(1.0 - main.grid().knot(i))).exp();
            ((run.solution.mean_y(i) - oracle) / oracle).abs()
        })
        .fold(0.0, f64::max);
    let ratios = run.solution.contraction_ratios();
    let rho = ratios.iter().copied().fold(0.0, f64::max);
    let pass =
        exact && (z0 - 1.0).abs() <= 0.05 && mean_err <= 1e-2 && !ratios.is_empty() && rho <= 0.9;
    verdict(
        5,
        "mean-field BSDE",
        pass,
        format!("(i) exact {exact}, (ii) mean Z(0) {z0:.4}, (iii) rel. error {mean_err:.1e}, (iv) max ratio {rho:.3}"),
    );
}

#[test]
fn criterion_6_gateaux_derivative() {
    let vs = VasicekScenario::standard(0.3, 2000, 100, 606);
    let s = build_mean_field_scenario(&vs).unwrap();
    let base = ControlPath::Deterministic(
        (0..101)
            .map(|i| 0.5 + 0.3 * (i as f64 / 15.0).sin())
            .collect(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(6060);
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for _ in 0..20 {
        let amp: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let freq: f64 = rng.random_range(0.5..6.0);
        let v = ControlPath::Deterministic(
            (0..101)
                .map(|i| {
                    let t = i as f64 / 100.0;
                    (amp[0] + amp[1] * (freq * t).sin() + amp[2] * t) / 3.0
                })
                .collect(),
        );
        let g = gateaux_derivative(&s, &base, &v, 1e-3).unwrap();
        let slack = 5.0 * g.formula_se.max(g.finite_difference_se) + 1e-4;
        worst = worst.max(g.gap() / slack);
        pass &= g.gap() <= slack;
    }
    let curved = build_curved_scenario(&VasicekScenario::standard(0.3, 1000, 100, 607)).unwrap();
    let dir = ControlPath::Deterministic((0..101).map(|i| (i as f64 / 12.0).cos()).collect());
    let errs = difference_quotient_errors(&curved, &base, &dir, &[1e-1, 1e-2, 1e-3]).unwrap();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    verdict(
        6,
        "Gateaux derivative",
        pass && decreasing,
        format!(
            "20 directions, worst gap/slack {worst:.3}; quotient errors {:.2e} {:.2e} {:.2e}",
            errs[0], errs[1], errs[2]
        ),
    );
}

/// Minimum of `int (u^2 + 2 m^2) dt`, `m' = -theta u`, over controls constant
/// on `segments` pieces, from the normal equations of the exact quadratic.
fn brute_force_reduced_cost(theta: f64, r0: f64, horizon: f64, segments: usize) -> f64 {
    let (h, s) = (horizon / segments as f64, segments);
    let a = DMatrix::from_fn(s + 1, s, |j, l| if l < j { theta * h } else { 0.0 });
    let w = DMatrix::from_fn(s + 1, s + 1, |i, j| match (i, j) {
        _ if i == j && (i == 0 || i == s) => 1.0,
        _ if i == j => 2.0,
        _ if i.abs_diff(j) == 1 => 0.5,
        _ => 0.0,
    });
    let ones = DVector::from_element(s + 1, 1.0);
    let q = DMatrix::identity(s, s) * h + a.transpose() * &w * &a * (2.0 * h / 3.0);
    let c = q
        .lu()
        .solve(&(a.transpose() * &w * &ones * (2.0 * h / 3.0 * r0)))
        .unwrap();
    let m = &ones * r0 - &a * &c;
    h * c.dot(&c) + 2.0 * h / 3.0 * m.dot(&(&w * &m))
}

#[test]
fn criterion_7_maximum_principle() {
    // Oracle validation against an independent search.
    let search = brute_force_reduced_cost(1.0, 1.0, 1.0, 20);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let oracle = riccati_oracle(1.0, 1.0, &grid);
    let achieved = reduced_cost(1.0, 1.0, &grid, &oracle.u_star);
    let fine = riccati_oracle(1.0, 1.0, &TimeGrid::new(1.0, 400).unwrap()).value();
    let oracle_ok = (achieved - search).abs() <= 1e-3 && (fine - search).abs() <= 1e-3;

    let cfg = VasicekRunConfig::default();
    let quiet = run_example(
        &VasicekScenario::standard(0.0, 500, 100, 707),
        &VasicekRunConfig {
            perturbations: 0,
            ..cfg
        },
    )
    .unwrap();
    let rel = quiet.report.control_rel_l2_error.unwrap();

    let noisy = run_example(&VasicekScenario::standard(0.3, 2000, 100, 708), &cfg).unwrap();
    let r = &noisy.report;
    let stationary = r.max_principle.verdicts.stationarity == Some(true)
        && r.max_principle.boundary_violations == 0;
    let concave = r.max_principle.concavity_violations == Some(0);
    let p = r.perturbations.as_ref().unwrap();
    let pass = oracle_ok && rel <= 1e-2 && stationary && concave && p.fraction >= 0.95;
    verdict(
        7,
        "maximum principle on the Vasicek model",
        pass,
        format!(
            "oracle cost {achieved:.6} (fine grid {fine:.6}) vs search {search:.6}; (a) rel. L2 {rel:.2e}; (b) max |mean|/SE {:.2}; (c) {} concavity violations; (d) {}/{} dominated",
            r.max_principle.max_stationarity_score,
            r.max_principle.concavity_violations.unwrap_or(usize::MAX),
            p.dominated,
            p.trials
        ),
    );
}

#[test]
fn criterion_8_propagation_of_chaos() {
    let vs = VasicekScenario::standard(0.5, 100, 100, 808);
    let study = chaos_study(&vs, &[100, 1000, 10_000], 32, &ControlPath::Constant(0.2)).unwrap();
    let slope = study.slope.unwrap();
    let rows: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("N={} d={:.2e}", r.n, r.distance))
        .collect();
    verdict(
        8,
        "propagation of chaos",
        (-0.8..=-0.2).contains(&slope),
        format!("slope {slope:.3}; {}", rows.join(", ")),
    );
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf);
    buf
}

#[test]
fn criterion_9_reproducibility() {
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let noise_csv = || {
        let ip = sample_intensity(&square_root(), &grid, 9).unwrap();
        csv_bytes(|b| sample_noise(&ip, &marks(), 9).write_csv(b).unwrap())
    };
    let vs = VasicekScenario::standard(0.3, 400, 50, 909);
    let cfg = VasicekRunConfig {
        perturbations: 4,
        ..Default::default()
    };
    let vasicek = || {
        let run = run_example(&vs, &cfg).unwrap();
        (
            csv_bytes(|b| run.report.write_series_csv(b).unwrap()),
            csv_bytes(|b| run.ensemble.write_csv(b).unwrap()),
            run.ensemble.paths().to_vec(),
        )
    };
    let (s1, e1, p1) = vasicek();
    let (s2, e2, _) = vasicek();
    let identical = noise_csv() == noise_csv() && s1 == s2 && e1 == e2;

    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let mut lin = LinearMeanField::new(-0.5, 0.8);
                lin.sigma = 0.5;
                lin.jump_scale = 1.0;
                let ens = EnsembleConfig::new(grid.clone(), 500, 99, square_root(), marks());
                let picard = picard_law_solve(
                    &lin,
                    1.0,
                    &ens,
                    &ControlPath::zero(),
                    &PicardConfig::default(),
                )
                .unwrap();
                (picard.ensemble.paths().to_vec(), vasicek().2)
            })
    };
    let (a1, v1) = in_pool(1);
    let (a4, v4) = in_pool(4);
    let dev = a1
        .iter()
        .flatten()
        .zip(a4.iter().flatten())
        .chain(v1.iter().flatten().zip(v4.iter().flatten()))
        .chain(p1.iter().flatten().zip(v1.iter().flatten()))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    verdict(
        9,
        "reproducibility",
        identical && dev <= 1e-12,
        format!("byte-identical CSVs {identical}; max deviation 1 vs 4 threads {dev:.1e}"),
    );
}
