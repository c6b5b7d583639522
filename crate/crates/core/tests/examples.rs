mod common;

use std::f64::consts::PI;

use common::{random_potential, rng, R_LIST};
use twisted_kahler::base_point::loglog_slope;
use twisted_kahler::continuity::{
    df_r_solve_with_stats, fourth_order_residual, psi_step, reduced_residual,
};
use twisted_kahler::elliptic::SolverSettings;
use twisted_kahler::hermitian::{laplacian, ricci};
use twisted_kahler::{
    corrected_base, integral, make_background, metric, omega_average, solve_twisted, synthesize,
    theta, Error, FourierTerm, Grid, JacobianMode, ScalarField, SolveConfig, Solver,
};

#[test]
fn synthesize_and_quadrature() {
    let g = Grid::new(1, 64).unwrap();
    assert_eq!(synthesize(&[], &g).unwrap().sup_norm(), 0.0);
    let f = synthesize(&[FourierTerm::cos(&[1, 0], 0.8)], &g).unwrap();
    assert_eq!(f.at(0), 0.8);
    assert!((f.at(32 * 64) + 0.8).abs() < 1e-15);
    let two = synthesize(&[FourierTerm::cos(&[1, 0], 0.5), FourierTerm::sin(&[0, 2], 0.25)], &g).unwrap();
    let direct = ScalarField::from_fn(&g, |p| 0.5 * p[0].cos() + 0.25 * (2.0 * p[1]).sin());
    assert!((&two - &direct).sup_norm() < 1e-15);

    let one = ScalarField::constant(&g, 1.0);
    let cos = ScalarField::from_fn(&g, |p| p[0].cos());
    let rho = ScalarField::from_fn(&g, |p| 1.0 - 0.2 * p[0].cos());
    assert!((integral(&ScalarField::constant(&g, 3.0), &one) - 3.0 * 4.0 * PI * PI).abs() < 1e-12);
    assert!(integral(&cos, &one).abs() < 1e-13);
    assert!((integral(&cos, &rho) + 0.2 * PI * 2.0 * PI).abs() < 1e-12);
    assert!((omega_average(&cos, &rho) + 0.1).abs() < 1e-14);
}

#[test]
fn metric_and_ricci_oracles() {
    let g = Grid::new(1, 64).unwrap();
    let psi = synthesize(&common::n1_family(), &g).unwrap();
    let m = metric(&psi, &ScalarField::zeros(&g)).unwrap();
    assert!((m.min_eigenvalue() - 0.8).abs() < 1e-13);
    assert!((m.max_eigenvalue() - 1.2).abs() < 1e-13);
    let ric = ricci(&m);
    assert!((ric.entry(0, 0, 0).re + 0.0625).abs() < 1e-10);
    assert!((ric.entry(32 * 64, 0, 0).re - 1.0 / 24.0).abs() < 1e-10);
    let bad = synthesize(&[FourierTerm::cos(&[1, 0], 5.0)], &g).unwrap();
    assert!(matches!(metric(&bad, &ScalarField::zeros(&g)), Err(Error::NotPositive { .. })));
}

#[test]
fn base_point_examples_and_theta_taylor_remainder() {
    let solver = Solver::new(SolveConfig::default_n1(0.05)).unwrap();
    let bg = solver.background();
    let exp = solver.expansion();
    let s = SolverSettings::default();
    assert!((exp.u1.at(0) + 0.2331943).abs() < 1e-6);
    assert!((&exp.u2 - &bg.scalar_curvature.scale(-2.0)).sup_norm() < 1e-10);
    let lap_u1 = laplacian(&bg.g, &exp.u1);
    assert!(integral(&lap_u1, bg.density()).abs() < 1e-12);

    let order1 = corrected_base(bg, exp, 0.1, 1).unwrap();
    assert!((order1.at(0) + 0.02331943).abs() < 1e-7);

    let theta1 = exp.u2.scale(-0.5);
    let theta2 = exp.u3.scale(-1.0 / 3.0);
    let remainder: Vec<(f64, f64)> = R_LIST
        .iter()
        .map(|&r| {
            let phi = corrected_base(bg, exp, r, 3).unwrap();
            let th = theta(bg, &phi, &s).unwrap().theta;
            let mut model = exp.theta0.clone();
            model.axpy(r, &theta1);
            model.axpy(0.5 * r * r, &theta2);
            (r, (&th - &model).sup_norm())
        })
        .collect();
    let slope = loglog_slope(&remainder);
    assert!((slope - 3.0).abs() <= 0.2, "theta remainder slope {slope}");
}

#[test]
fn linear_solve_examples() {
    let solver = Solver::new(SolveConfig::default_n1(0.05)).unwrap();
    let bg = solver.background();
    let st = solver.jacobian_state(0.05).unwrap();
    let s = SolverSettings::default();
    let f = bg.mean_free(&st.f_r(0.05));
    let (_, stats) = df_r_solve_with_stats(bg, 0.05, &st, &f, &s).unwrap();
    assert!(stats.iterations <= 60, "{} Krylov iterations", stats.iterations);
}

#[test]
fn psi_is_a_contraction_on_sampled_pairs() {
    for cfg in [SolveConfig::default_n1(0.05), SolveConfig::default_n2(0.05)] {
        let r = cfg.r;
        let solver = Solver::new(cfg).unwrap();
        let bg = solver.background();
        let s = solver.config().linear;
        let jac = solver.jacobian_state(r).unwrap();
        let phi1 = solver.base_point(r).unwrap();
        let mut rng = rng(9);
        for _ in 0..3 {
            let mut a = phi1.clone();
            a.axpy(r * r, &random_potential(&mut rng, bg, 0.5));
            let mut b = phi1.clone();
            b.axpy(r * r, &random_potential(&mut rng, bg, 0.5));
            let pa = psi_step(bg, r, &jac, &a, false, &s).unwrap().phi;
            let pb = psi_step(bg, r, &jac, &b, false, &s).unwrap().phi;
            let before = (&a - &b).sup_norm();
            let after = (&pa - &pb).sup_norm();
            assert!(after <= 0.5 * before, "{after:e} vs {before:e}");
        }
    }
}

#[test]
fn solve_examples() {
    let flat = solve_twisted(&SolveConfig::new(2, 8, vec![], 0.5)).unwrap();
    assert!(flat.converged && flat.iterations == 0 && flat.phi_sup == 0.0);

    let solver = Solver::new(SolveConfig::default_n1(0.05)).unwrap();
    let rep = solver.solve(0.05).unwrap();
    assert!(rep.converged && rep.iterations <= 10 && rep.final_residual <= 1e-11);
    assert!(rep.step_norms()[0] <= 1e-4);
    assert!(rep.contraction_ratios().iter().all(|&q| q <= 0.5));

    let mut cfg = SolveConfig::default_n1(0.05);
    cfg.base_order = 0;
    let naive = solve_twisted(&cfg).unwrap();
    assert!(naive.converged);
    assert!(naive.iterations > rep.iterations, "{} vs {}", naive.iterations, rep.iterations);

    cfg.base_order = 3;
    cfg.jacobian = JacobianMode::Newton;
    let newton = solve_twisted(&cfg).unwrap();
    assert!(newton.converged);
    assert!((&newton.phi - &rep.phi).sup_norm() < 1e-10);
}

#[test]
fn divergence_carries_the_report() {
    let mut cfg = SolveConfig::default_n1(0.05);
    cfg.base_order = 0;
    cfg.max_fixed_point_iterations = 1;
    match solve_twisted(&cfg) {
        Err(Error::Diverged { report, .. }) => {
            assert!(!report.converged);
            assert_eq!(report.records.len(), 2);
            assert!(report.final_residual > cfg.tol_residual);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    let mut cfg = SolveConfig::default_n1(40.0);
    cfg.base_order = 1;
    assert!(matches!(solve_twisted(&cfg), Err(Error::NotPositive { .. })));
}

#[test]
fn fourth_order_identity_on_random_potentials() {
    let s = SolverSettings::default();
    for (n, points) in [(1, 64), (2, 16)] {
        let grid = Grid::new(n, points).unwrap();
        let psi = if n == 1 {
            common::n1_family()
        } else {
            SolveConfig::default_n2(0.1).psi
        };
        let bg = make_background(&psi, &grid).unwrap();
        let mut rng = rng(40 + n as u64);
        for _ in 0..3 {
            let phi = random_potential(&mut rng, &bg, 0.2);
            let direct = fourth_order_residual(&bg, &phi, 0.3).unwrap();
            let reduced = reduced_residual(&bg, &phi, 0.3, &s).unwrap();
            assert!((&direct - &reduced).sup_norm() <= 1e-8);
        }
    }
}
