//! Runtime invariant suite used by `twk verify`.

use serde::Serialize;

use crate::continuity::{fourth_order_residual, reduced_residual, Solver, SolveConfig};
use crate::error::Result;
use crate::grid::ScalarField;
use crate::hermitian::{laplacian, scalar_curvature};
use crate::spectral::complex_hessian;
use crate::twisted::{theta, RBAR_TOLERANCE};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// θ-consistency, mean normalisations, the reduction identity, fixed-point
/// convergence, the fourth-order equation and local uniqueness for `config`.
pub fn run_suite(config: &SolveConfig) -> Result<Vec<Check>> {
    let solver = Solver::new(config.clone())?;
    let bg = solver.background();
    let s = &config.linear;
    let r = config.r;
    let mut checks = vec![
        Check::new("rbar", bg.rbar.abs(), RBAR_TOLERANCE),
        Check::new("metric_inverse", bg.g.inverse_defect(), 1e-12),
        Check::new("ricci_hermitian", bg.ric.hermiticity_defect(), 1e-14),
    ];

    let exp = solver.expansion();
    let mean = [&exp.u1, &exp.u2, &exp.u3]
        .iter()
        .map(|u| bg.average(u).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new("expansion_means", mean, 1e-12));

    let phi1 = solver.base_point(r)?;
    let st = theta(bg, &phi1, s)?;
    let r_phi = scalar_curvature(&st.g);
    let consistency = (&laplacian(&st.g, &st.theta) - &r_phi).add_constant(bg.rbar);
    checks.push(Check::new(
        "theta_consistency",
        consistency.sup_norm(),
        1e-8 * (1.0 + r_phi.sup_norm()),
    ));
    checks.push(Check::new("theta_mean", bg.average(&st.theta).abs(), 1e-12));

    let t = r / (1.0 + r);
    let identity = &fourth_order_residual(bg, &phi1, t)? - &reduced_residual(bg, &phi1, t, s)?;
    checks.push(Check::new("reduction_identity", identity.sup_norm(), 1e-8));

    let report = solver.solve(r)?;
    checks.push(Check::new("fixed_point_residual", report.final_residual, config.tol_residual));
    let worst_ratio = report.contraction_ratios().into_iter().fold(0.0, f64::max);
    checks.push(Check::new("contraction_ratio", worst_ratio, 0.5));
    checks.push(Check::new("damping_events", report.damping_events as f64, 0.0));
    let g_inf = bg.metric_for(&report.phi)?;
    let r_inf = scalar_curvature(&g_inf);
    checks.push(Check::new(
        "fourth_order",
        fourth_order_residual(bg, &report.phi, t)?.sup_norm(),
        1e-7 * (1.0 + r_inf.sup_norm()),
    ));

    let w = bg.mean_free(&ScalarField::from_fn(bg.grid(), |p| {
        p.iter().enumerate().map(|(a, x)| (x + a as f64).sin()).sum::<f64>() / p.len() as f64
    }));
    let mut start = phi1.clone();
    start.axpy(r * r, &w);
    let other = solver.solve_from(r, &start)?;
    checks.push(Check::new(
        "local_uniqueness",
        (&other.phi - &report.phi).sup_norm(),
        1e-9,
    ));
    checks.push(Check::new(
        "hessian_hermitian",
        complex_hessian(&report.phi).hermiticity_defect(),
        1e-14,
    ));
    Ok(checks)
}
