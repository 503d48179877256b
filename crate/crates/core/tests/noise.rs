use mfsmp_core::noise::{
    build_grid, discretize_levy, half_windows, isometry_check, lambda_measure, lambda_seminorm,
    sample_intensity, sample_noise, window_moments, Integrand, IntensityModel, LevyGrid, LevySpec,
    MarkFunction, MarkSet, SquareRootParams, Window,
};
use proptest::prelude::*;
use rayon::prelude::*;

fn single_mark(nu: f64) -> LevyGrid {
    LevyGrid::new(vec![1.0], vec![nu], 0.0).unwrap()
}

fn two_marks() -> LevyGrid {
    LevyGrid::new(vec![-0.5, 1.0], vec![1.5, 0.5], 0.0).unwrap()
}

fn sqrt_model() -> IntensityModel {
    let p = SquareRootParams {
        init: 1.0,
        mean_reversion: 2.0,
        level: 1.0,
        vol: 0.3,
    };
    IntensityModel::SquareRoot { b: p, h: p }
}

#[test]
fn grid_examples() {
    let g = build_grid(1.0, 4).unwrap();
    assert_eq!(g.knots(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(build_grid(1.0, 1).unwrap().knots(), &[0.0, 1.0]);
    assert!((build_grid(2.0, 200).unwrap().dt() - 0.01).abs() < 1e-15);
    assert!(build_grid(0.0, 3).is_err());
    assert!(build_grid(1.0, 0).is_err());
}

#[test]
fn intensity_examples() {
    let g = build_grid(1.0, 10).unwrap();
    let ip = sample_intensity(&IntensityModel::constant(1.0, 0.5), &g, 3).unwrap();
    assert!(ip.lam_b().iter().all(|v| *v == 1.0) && ip.lam_h().iter().all(|v| *v == 0.5));
    let ip = sample_intensity(
        &IntensityModel::function(|t| (t, t)),
        &build_grid(1.0, 2).unwrap(),
        0,
    )
    .unwrap();
    assert_eq!(ip.lam_b(), &[0.0, 0.5, 1.0]);
    assert!(sample_intensity(&IntensityModel::constant(-1.0, 0.0), &g, 0).is_err());

    let g = build_grid(1.0, 100).unwrap();
    let model = sqrt_model();
    let nonneg = (0..10_000u64).into_par_iter().all(|s| {
        let ip = sample_intensity(&model, &g, s).unwrap();
        ip.lam_b().iter().chain(ip.lam_h()).all(|v| *v >= 0.0)
    });
    assert!(nonneg);
    assert_eq!(
        sample_intensity(&model, &g, 7).unwrap(),
        sample_intensity(&model, &g, 7).unwrap()
    );
}

#[test]
fn levy_examples() {
    let atoms = discretize_levy(
        &LevySpec::FiniteAtoms {
            marks: vec![1.0, -1.0],
            weights: vec![0.5, 0.5],
        },
        1,
        0.0,
    )
    .unwrap();
    assert_eq!(atoms.marks(), &[1.0, -1.0]);
    assert_eq!(atoms.weights(), &[0.5, 0.5]);
    let uniform = discretize_levy(
        &LevySpec::Uniform {
            density: 1.0,
            a: 1.0,
        },
        2,
        0.5,
    )
    .unwrap();
    assert_eq!(uniform.len(), 4);
    assert!((uniform.second_moment() - 7.0 / 12.0).abs() < 1e-6);
    assert!(discretize_levy(
        &LevySpec::Uniform {
            density: 1.0,
            a: 1.0
        },
        2,
        1.0
    )
    .is_err());
}

#[test]
fn sampling_examples() {
    let g = build_grid(1.0, 50).unwrap();
    let null = sample_intensity(&IntensityModel::constant(0.0, 0.0), &g, 0).unwrap();
    let z = sample_noise(&null, &two_marks(), 5);
    assert!((0..50).all(|i| z.d_g(i) == 0.0 && z.d_j(i, 0) == 0.0 && z.d_j(i, 1) == 0.0));

    let ip = sample_intensity(&IntensityModel::constant(1.0, 0.0), &g, 0).unwrap();
    let totals: Vec<f64> = (0..10_000u64)
        .map(|s| {
            (0..50)
                .map(|i| sample_noise(&ip, &LevyGrid::gaussian_only(), s).d_g(i))
                .sum()
        })
        .collect();
    let m = totals.iter().sum::<f64>() / 1e4;
    let var = totals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 9999.0;
    assert!((var - 1.0).abs() < 0.05, "{var}");

    let ip = sample_intensity(&IntensityModel::constant(0.0, 1.0), &g, 0).unwrap();
    let lg = single_mark(2.0);
    let counts: f64 = (0..10_000u64)
        .map(|s| {
            let z = sample_noise(&ip, &lg, s);
            (0..50).map(|i| z.count(i, 0) as f64).sum::<f64>()
        })
        .sum::<f64>()
        / 1e4;
    assert!((counts - 2.0).abs() < 0.1, "{counts}");
}

#[test]
fn lambda_measure_examples() {
    let g = build_grid(1.0, 100).unwrap();
    let ip = sample_intensity(&IntensityModel::constant(1.0, 0.0), &g, 0).unwrap();
    let lg = single_mark(3.0);
    assert!(
        (lambda_measure(&Window::new(0.0, 1.0, MarkSet::gaussian()), &ip, &lg).unwrap() - 1.0)
            .abs()
            < 1e-12
    );
    let ip = sample_intensity(&IntensityModel::constant(0.0, 2.0), &g, 0).unwrap();
    assert!(
        (lambda_measure(&Window::new(0.0, 0.5, MarkSet::jumps(&lg)), &ip, &lg).unwrap() - 3.0)
            .abs()
            < 1e-12
    );
    assert_eq!(
        lambda_measure(&Window::new(0.0, 0.5, MarkSet::none()), &ip, &lg).unwrap(),
        0.0
    );
    assert!(lambda_measure(&Window::new(0.6, 0.5, MarkSet::none()), &ip, &lg).is_err());
}

#[test]
fn seminorm_examples() {
    let none = LevyGrid::gaussian_only();
    assert_eq!(
        lambda_seminorm(&MarkFunction::zeros(0), 1.0, 1.0, &none),
        0.0
    );
    assert_eq!(
        lambda_seminorm(&MarkFunction::new(1.0, vec![]), 4.0, 0.0, &none),
        2.0
    );
    assert_eq!(
        lambda_seminorm(
            &MarkFunction::new(0.0, vec![2.0]),
            0.0,
            1.0,
            &single_mark(1.0)
        ),
        2.0
    );
}

#[test]
fn isometry_holds_for_every_integrand() {
    let g = build_grid(1.0, 50).unwrap();
    for model in [IntensityModel::constant(1.0, 0.8), sqrt_model()] {
        for phi in Integrand::ALL {
            let s = isometry_check(phi, &model, &two_marks(), &g, 4000, 21).unwrap();
            assert!(s.within(5.0), "{s:?}");
        }
    }
    let zero = isometry_check(
        Integrand::Unit,
        &IntensityModel::constant(0.0, 0.0),
        &two_marks(),
        &g,
        10,
        1,
    );
    assert!(zero.unwrap().second_moment == 0.0);
}

#[test]
fn disjoint_windows_are_centred_and_orthogonal() {
    let g = build_grid(1.0, 40).unwrap();
    let lg = two_marks();
    let (a, b) = half_windows(&g, &lg);
    let m = window_moments(&a, &b, &sqrt_model(), &lg, &g, 4000, 5).unwrap();
    assert!(m.within(5.0), "{m:?}");
    // Same time window, disjoint marks.
    let ga = Window::new(0.0, 1.0, MarkSet::gaussian());
    let ja = Window::new(0.0, 1.0, MarkSet::jumps(&lg));
    assert!(window_moments(&ga, &ja, &sqrt_model(), &lg, &g, 4000, 6)
        .unwrap()
        .within(5.0));
    assert!(window_moments(&a, &a, &sqrt_model(), &lg, &g, 10, 6).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identical_seeds_give_identical_noise(seed in any::<u64>(), steps in 1usize..40) {
        let g = build_grid(1.0, steps).unwrap();
        let ip = sample_intensity(&sqrt_model(), &g, seed).unwrap();
        prop_assert_eq!(sample_noise(&ip, &two_marks(), seed), sample_noise(&ip, &two_marks(), seed));
    }

    #[test]
    fn lambda_measure_is_additive(split in 1usize..19, lb in 0.0f64..3.0, lh in 0.0f64..3.0) {
        let g = build_grid(1.0, 20).unwrap();
        let ip = sample_intensity(&IntensityModel::constant(lb, lh), &g, 0).unwrap();
        let lg = two_marks();
        let c = split as f64 / 20.0;
        let all = MarkSet::all(&lg);
        let whole = lambda_measure(&Window::new(0.0, 1.0, all.clone()), &ip, &lg).unwrap();
        let left = lambda_measure(&Window::new(0.0, c, all.clone()), &ip, &lg).unwrap();
        let right = lambda_measure(&Window::new(c, 1.0, all), &ip, &lg).unwrap();
        prop_assert!((whole - left - right).abs() < 1e-12);
        prop_assert!(whole >= 0.0);
    }

    #[test]
    fn seminorm_is_absolutely_homogeneous(v0 in -5.0f64..5.0, v1 in -5.0f64..5.0, v2 in -5.0f64..5.0, c in -3.0f64..3.0) {
        let lg = two_marks();
        let a = MarkFunction::new(v0, vec![v1, v2]);
        let ca = MarkFunction::new(c * v0, vec![c * v1, c * v2]);
        let lhs = lambda_seminorm(&ca, 1.3, 0.7, &lg);
        let rhs = c.abs() * lambda_seminorm(&a, 1.3, 0.7, &lg);
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs));
    }
}
