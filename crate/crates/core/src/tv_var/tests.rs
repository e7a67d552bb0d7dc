use super::*;
use crate::synth::{simulate, DgpKind, DgpSpec};
use crate::var_base::fit_var_ols;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn var1_panel(n: usize, t: usize, seed: u64, a: f64, sd: f64) -> AlignedPanel {
    let coefs = vec![(0..n).map(|i| (0..n).map(|j| if i == j { a } else { 0.05 }).collect()).collect()];
    simulate(&DgpSpec {
        kind: DgpKind::ConstantVar { coefs },
        innovation_sd: sd,
        intercept: Some(vec![0.001; n]),
        ..DgpSpec::white_noise(n, t, seed)
    })
    .unwrap()
    .panel
}

fn cfg(q: usize, lambda: f64) -> TvVarConfig {
    TvVarConfig {
        q,
        lambda,
        ..Default::default()
    }
}

#[test]
fn dimension_counts_full_size() {
    let panel = var1_panel(3, 1685, 1, 0.1, 0.01);
    let sys = build_stacked_system(&panel, &cfg(1, 1.0)).unwrap();
    assert_eq!(sys.n_time_varying_unknowns(), 15_156);
    assert_eq!(sys.n_intercepts(), 3);
    assert_eq!(sys.n_observation_rows(), 5_052);
    assert_eq!(sys.n_smoothness_rows(), 15_147);
    // Bandwidth of the banded form does not depend on T.
    assert_eq!(sys.block_size(), 3);
    let (bordered, _, _) = sys.normal_equations();
    assert_eq!(bordered.tri.n_blocks(), 1684);
    assert_eq!(bordered.tri.block_size(), 3);
}

#[test]
fn dimension_counts_smallest_case() {
    let panel = var1_panel(1, 4, 1, 0.1, 0.01);
    let sys = build_stacked_system(&panel, &cfg(1, 1.0)).unwrap();
    assert_eq!(sys.n_time_varying_unknowns(), 3);
    assert_eq!(sys.n_intercepts(), 1);
    assert_eq!(sys.n_observation_rows(), 3);
    assert_eq!(sys.n_smoothness_rows(), 2);
    let (w, y) = sys.dense_design();
    assert_eq!(w.shape(), (5, 4));
    assert_eq!(y.len(), 5);
    assert!(build_stacked_system(&var1_panel(1, 3, 1, 0.1, 0.01), &cfg(1, 1.0)).is_err());
}

#[test]
fn banded_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..12 {
        let n = rng.random_range(1..=3);
        let q = rng.random_range(1..=2);
        let t = rng.random_range(12..=40);
        let lambda = [0.5, 1.0, 10.0][case % 3];
        let panel = var1_panel(n, t, case as u64, 0.2, 1.0);
        let sys = build_stacked_system(&panel, &cfg(q, lambda)).unwrap();
        let a = solve_system(&sys, Solver::BandedCholesky).unwrap();
        let b = solve_system(&sys, Solver::DenseReference).unwrap();
        assert!((&a.nu - &b.nu).amax() < 1e-8);
        for (x, y) in a.betas.iter().zip(&b.betas) {
            assert!((x - y).amax() < 1e-8, "case {case}");
        }
    }
}

#[test]
fn infinite_smoothing_recovers_constant_var() {
    let panel = var1_panel(3, 300, 8, 0.2, 0.01);
    let tv = fit_tv_var(&panel, &cfg(1, 1e8)).unwrap();
    let ols = fit_var_ols(&panel, 1).unwrap();
    for a in &tv.a_path {
        assert!((&a[0] - &ols.coefs[0]).norm() < 1e-4);
    }
    assert!((&tv.nu - &ols.nu).amax() < 1e-4);
}

#[test]
fn zero_panel_gives_zero_fit() {
    let panel = AlignedPanel::synthetic_returns(DMatrix::zeros(30, 2), NaiveDate::from_ymd_opt(2000, 1, 1).unwrap());
    let est = fit_tv_var(&panel, &cfg(1, 1.0)).unwrap();
    assert!(est.nu.iter().all(|v| *v == 0.0));
    assert!(est.a_path.iter().all(|a| a[0].iter().all(|v| *v == 0.0)));
    assert!(est.ridge > 0.0);
}

#[test]
fn stored_residuals_reproduce() {
    let panel = var1_panel(2, 80, 3, 0.3, 0.01);
    let est = fit_tv_var(&panel, &cfg(2, 1.0)).unwrap();
    assert_eq!(est.a_path.len(), 78);
    assert_eq!(est.dates[0], panel.dates[2]);
    for t in 0..est.effective_obs {
        let x = panel.values.row(t + 2).transpose();
        let mut pred = est.nu.clone();
        for l in 0..2 {
            pred += &est.a_path[t][l] * panel.values.row(t + 1 - l).transpose();
        }
        let e = x - pred;
        for i in 0..2 {
            assert!((e[i] - est.residuals[(t, i)]).abs() < 1e-10);
        }
    }
}

#[test]
fn solution_is_optimal() {
    let panel = var1_panel(2, 60, 4, 0.3, 1.0);
    let sys = build_stacked_system(&panel, &cfg(1, 2.0)).unwrap();
    let sol = solve_system(&sys, Solver::BandedCholesky).unwrap();
    let base = sys.objective(&sol.nu, &sol.betas);
    let packed = sys.pack(&sol.nu, &sol.betas);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let dir = DVector::from_fn(packed.len(), |_, _| rng.random_range(-1.0..1.0));
        let moved = &packed + dir.normalize() * 1e-4;
        let (nu, betas) = sys.unpack(&moved);
        assert!(sys.objective(&nu, &betas) >= base);
    }
}

#[test]
fn dense_objective_matches_structured_objective() {
    let panel = var1_panel(2, 20, 6, 0.3, 1.0);
    let sys = build_stacked_system(&panel, &cfg(2, 3.0)).unwrap();
    let sol = solve_system(&sys, Solver::BandedCholesky).unwrap();
    let (w, y) = sys.dense_design();
    let v = sys.pack(&sol.nu, &sol.betas);
    let dense = (w * v - y).norm_squared();
    assert!((dense - sys.objective(&sol.nu, &sol.betas)).abs() < 1e-10 * (1.0 + dense));
}

#[test]
fn reversing_observation_order_reverses_path() {
    // Penalty is symmetric in time, so reversing the (target, regressor)
    // pairs reverses the solution.
    let panel = var1_panel(1, 50, 9, 0.5, 1.0);
    let sys = build_stacked_system(
        &panel,
        &TvVarConfig {
            intercept: InterceptMode::Excluded,
            ..cfg(1, 1.5)
        },
    )
    .unwrap();
    let mut rev = sys.clone();
    let n = sys.n_periods();
    rev.targets = DMatrix::from_fn(n, 1, |t, j| sys.targets[(n - 1 - t, j)]);
    rev.regressors = DMatrix::from_fn(n, 1, |t, j| sys.regressors[(n - 1 - t, j)]);
    let a = solve_system(&sys, Solver::BandedCholesky).unwrap();
    let b = solve_system(&rev, Solver::BandedCholesky).unwrap();
    for t in 0..n {
        assert!((a.betas[t][(0, 0)] - b.betas[n - 1 - t][(0, 0)]).abs() < 1e-6);
    }
}

#[test]
fn recovers_constant_coefficients() {
    let mut total = 0.0;
    let seeds = 100;
    for seed in 0..seeds {
        let spec = DgpSpec {
            kind: DgpKind::ConstantVar {
                coefs: vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]],
            },
            ..DgpSpec::white_noise(2, 500, 1000 + seed)
        };
        let panel = simulate(&spec).unwrap().panel;
        let est = fit_tv_var(&panel, &cfg(1, 1.0)).unwrap();
        let truth = DMatrix::<f64>::identity(2, 2) * 0.5;
        let mean_err: f64 = est.a_path.iter().map(|a| (&a[0] - &truth).norm()).sum::<f64>() / est.a_path.len() as f64;
        total += mean_err;
    }
    let avg = total / seeds as f64;
    assert!(avg < 0.15, "average Frobenius error {avg}");
}

#[test]
fn two_pass_reestimates_lambda() {
    let panel = var1_panel(2, 200, 10, 0.3, 0.01);
    let est = fit_tv_var(
        &panel,
        &TvVarConfig {
            lambda_mode: LambdaMode::TwoPass,
            ..cfg(1, 1.0)
        },
    )
    .unwrap();
    assert!(est.lambda_used > 0.0 && est.lambda_used != 1.0);
    assert_eq!(est.config.lambda, 1.0);
}

#[test]
fn invalid_config_rejected() {
    let panel = var1_panel(2, 50, 1, 0.3, 0.01);
    assert!(matches!(fit_tv_var(&panel, &cfg(0, 1.0)), Err(Error::Config(_))));
    assert!(matches!(fit_tv_var(&panel, &cfg(1, 0.0)), Err(Error::Config(_))));
    assert!(matches!(fit_tv_var(&panel, &cfg(1, -1.0)), Err(Error::Config(_))));
}

#[test]
fn smoothing_profile_behaviour() {
    let panel = var1_panel(2, 120, 11, 0.3, 0.01);
    let prof = smoothing_profile(&panel, &cfg(1, 1.0), &[0.1, 1.0, 10.0, 1e8]).unwrap();
    for w in prof.windows(2) {
        assert!(w[1].rss >= w[0].rss * (1.0 - 1e-12));
        assert!(w[1].edf <= w[0].edf + 1e-9);
    }
    assert!(prof[3].roughness < 1e-8);
    // Near-constant coefficients: 4 slopes + 2 intercepts.
    assert!((prof[3].edf - 6.0).abs() < 1e-3, "{}", prof[3].edf);
    assert!(smoothing_profile(&panel, &cfg(1, 1.0), &[]).is_err());
}

#[test]
fn edf_matches_dense_hat_trace() {
    let panel = var1_panel(2, 25, 12, 0.3, 1.0);
    let c = cfg(1, 2.0);
    let sys = build_stacked_system(&panel, &c).unwrap();
    let edf = smoothing_profile(&panel, &c, &[2.0]).unwrap()[0].edf;
    let (w, _) = sys.dense_design();
    let obs = sys.n_observation_rows();
    let wo = w.rows(0, obs).into_owned();
    let m = (w.transpose() * &w).try_inverse().unwrap();
    let hat = &wo * m * wo.transpose();
    assert!((hat.trace() - edf).abs() < 1e-8, "{} vs {edf}", hat.trace());
}

#[test]
fn tiny_lambda_interpolates() {
    // One observation per period and one coefficient per period: the data
    // can be fitted exactly unless a regressor is zero.
    let panel = var1_panel(1, 60, 13, 0.4, 1.0);
    let c = TvVarConfig {
        intercept: InterceptMode::Excluded,
        ..cfg(1, 1e-6)
    };
    let est = fit_tv_var(&panel, &c).unwrap();
    let tss = panel.values.norm_squared();
    assert!(est.rss() < 1e-6 * tss, "rss {}", est.rss());

    let mut v = panel.values.clone();
    v[(30, 0)] = 0.0; // regressor for period 30 vanishes, target at 31 stays
    let mut p2 = panel.clone();
    p2.values = v;
    let est2 = fit_tv_var(&p2, &c).unwrap();
    let unreachable = p2.values[(31, 0)].powi(2);
    assert!(est2.rss() >= unreachable * (1.0 - 1e-9));
    assert!(est2.rss() > 0.0);
}

#[test]
fn coefficient_export_long_format() {
    let panel = var1_panel(2, 10, 1, 0.3, 0.01);
    let est = fit_tv_var(&panel, &cfg(1, 1.0)).unwrap();
    let mut buf = Vec::new();
    est.write_coefficients_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "date,l,row,col,value");
    assert_eq!(lines.len(), 1 + 9 * 4);
    assert!(lines[1].starts_with("2000-01-02,1,x1,x1,"));
}
