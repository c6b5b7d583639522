//! Linear field solves: the mean-normalised equation `Δ_φu = f` and general
//! nonsymmetric operator equations, both by right-preconditioned restarted
//! GMRES. Every returned solution satisfies the sup-norm residual contract
//! `‖A(u) − f‖_sup ≤ rel_tol·‖f‖_sup + abs_tol`; anything else is an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mean_free, omega_average, ScalarField};
use crate::hermitian::{laplacian, MetricField};
use crate::spectral::flat_laplacian_pinv;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iterations: usize,
    pub restart: usize,
    /// Relative allowance for the `ω_φⁿ`-mean of a Laplace source.
    pub compat_tol: f64,
    /// Absolute floor added to the compatibility allowance.
    pub compat_abs_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            max_iterations: 500,
            restart: 40,
            compat_tol: 1e-8,
            compat_abs_tol: 1e-12,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.rel_tol, self.abs_tol, self.compat_tol, self.compat_abs_tol]
            .iter()
            .all(|&t| t > 0.0 && t.is_finite());
        if !positive || self.rel_tol >= 1.0 || self.max_iterations == 0 || self.restart == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid solver settings {self:?}"
            )));
        }
        Ok(())
    }

    fn target(&self, rhs_scale: f64) -> f64 {
        self.rel_tol * rhs_scale + self.abs_tol
    }
}

/// A linear map on scalar fields with an optional approximate inverse.
pub trait LinearFieldOperator {
    fn apply(&self, u: &ScalarField) -> Result<ScalarField>;

    /// Approximate inverse used for right preconditioning.
    fn precondition(&self, r: &ScalarField) -> ScalarField {
        r.clone()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual_sup: f64,
    pub target: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

fn rms(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

/// Restarted right-preconditioned GMRES until the sup-norm residual reaches
/// `target`. Inner products are node averages, so Arnoldi norms are RMS
/// values; the stopping test is always re-checked on the true residual.
fn gmres(
    op: &dyn LinearFieldOperator,
    rhs: &ScalarField,
    target: f64,
    settings: &SolverSettings,
) -> Result<(ScalarField, SolveStats)> {
    let grid = rhs.grid().clone();
    let len = grid.len();
    let mut x = ScalarField::zeros(&grid);
    let mut residual = rhs.clone();
    let mut res_sup = residual.sup_norm();
    let mut iterations = 0;
    let m = settings.restart;
    let mut best = (res_sup, x.clone());
    let mut stalled_cycles = 0;

    while res_sup > target {
        if iterations >= settings.max_iterations || stalled_cycles >= 3 {
            return Err(Error::NoConvergence {
                iterations,
                residual: best.0,
                target,
            });
        }
        let beta = rms(residual.values());
        // RMS goal that maps to the sup-norm target for this residual shape.
        let goal = 0.5 * target * beta / res_sup;

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(residual.values().iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < settings.max_iterations {
            let z = op.precondition(&ScalarField::from_raw(&grid, basis[k].clone()));
            let mut w = op.apply(&z)?.into_values();
            iterations += 1;
            // Modified Gram-Schmidt, applied twice for a clean basis near roundoff.
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let h = dot(v, &w);
                    hess[i][k] += h;
                    for (wj, vj) in w.iter_mut().zip(v) {
                        *wj -= h * vj;
                    }
                }
            }
            let h_next = rms(&w);
            hess[k + 1][k] = h_next;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let (c, s) = givens(hess[k][k], hess[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            hess[k][k] = c * hess[k][k] + s * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k += 1;
            if g[k].abs() <= goal || h_next <= 1e-300 {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }

        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[i][j] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        let mut combo = vec![0.0; len];
        for (v, &yi) in basis.iter().zip(&y) {
            for (c, &vj) in combo.iter_mut().zip(v) {
                *c += yi * vj;
            }
        }
        let update = op.precondition(&ScalarField::from_raw(&grid, combo));
        x.axpy(1.0, &update);
        residual = rhs - &op.apply(&x)?;
        res_sup = residual.sup_norm();
        if res_sup < 0.5 * best.0 {
            stalled_cycles = 0;
        } else {
            stalled_cycles += 1;
        }
        if res_sup < best.0 {
            best = (res_sup, x.clone());
        } else {
            // Restart from the best iterate rather than a worse one.
            x = best.1.clone();
            residual = rhs - &op.apply(&x)?;
            res_sup = best.0;
        }
    }
    Ok((
        x,
        SolveStats {
            iterations,
            residual_sup: res_sup,
            target,
        },
    ))
}

/// `u ↦ Δ_g u`, preconditioned by the flat pseudo-inverse.
struct LaplaceOperator<'a> {
    g: &'a MetricField,
}

impl LinearFieldOperator for LaplaceOperator<'_> {
    fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        Ok(laplacian(self.g, u))
    }

    fn precondition(&self, r: &ScalarField) -> ScalarField {
        flat_laplacian_pinv(r)
    }
}

/// Solve `Δ_φu = f` with `∫u ωⁿ = 0`.
///
/// Compatibility is measured against `ω_φⁿ` (the density of `g_phi`), the
/// normalisation against `bg_density` (the density of `ω`).
pub fn solve_laplace(
    g_phi: &MetricField,
    f: &ScalarField,
    bg_density: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    solve_laplace_with_stats(g_phi, f, bg_density, settings).map(|(u, _)| u)
}

pub fn solve_laplace_with_stats(
    g_phi: &MetricField,
    f: &ScalarField,
    bg_density: &ScalarField,
    settings: &SolverSettings,
) -> Result<(ScalarField, SolveStats)> {
    solve_laplace_scaled(g_phi, f, bg_density, f.sup_norm(), settings)
}

/// As [`solve_laplace_with_stats`], with relative tolerances measured against
/// `scale` instead of `‖f‖_sup`. Callers whose source is a cancelling sum
/// pass the size of its terms, so roundoff-level sources are not asked for
/// more relative accuracy than the terms carry.
pub fn solve_laplace_scaled(
    g_phi: &MetricField,
    f: &ScalarField,
    bg_density: &ScalarField,
    scale: f64,
    settings: &SolverSettings,
) -> Result<(ScalarField, SolveStats)> {
    if !f.grid().same_as(g_phi.grid()) || !f.grid().same_as(bg_density.grid()) {
        return Err(Error::GridMismatch);
    }
    if !(scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be non-negative, got {scale}")));
    }
    let scale = scale.max(f.sup_norm());
    let mean = omega_average(f, g_phi.det());
    let allowed = settings.compat_tol * scale + settings.compat_abs_tol;
    if mean.abs() > allowed {
        return Err(Error::IncompatibleSource { mean, allowed });
    }
    let source = f.add_constant(-mean);
    let op = LaplaceOperator { g: g_phi };
    let (u, stats) = gmres(&op, &source, settings.target(scale), settings)?;
    Ok((mean_free(&u, bg_density), stats))
}

/// Solve `A(u) = f` for a general (nonsymmetric) linear operator.
pub fn solve_general(
    op: &dyn LinearFieldOperator,
    f: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    solve_general_with_stats(op, f, settings).map(|(u, _)| u)
}

pub fn solve_general_with_stats(
    op: &dyn LinearFieldOperator,
    f: &ScalarField,
    settings: &SolverSettings,
) -> Result<(ScalarField, SolveStats)> {
    gmres(op, f, settings.target(f.sup_norm()), settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integral, synthesize, FourierTerm, Grid};
    use crate::hermitian::{metric, scalar_curvature};
    use crate::spectral::{flat_helmholtz_inv, flat_laplacian};

    struct Identity;
    impl LinearFieldOperator for Identity {
        fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
            Ok(u.clone())
        }
    }

    struct FlatHelmholtz {
        r: f64,
    }
    impl LinearFieldOperator for FlatHelmholtz {
        fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
            let mut out = u.clone();
            out.axpy(-self.r, &flat_laplacian(u));
            Ok(out)
        }
        fn precondition(&self, r: &ScalarField) -> ScalarField {
            flat_helmholtz_inv(r, self.r)
        }
    }

    /// Unpreconditioned variant, to exercise several Krylov iterations.
    struct BareHelmholtz {
        r: f64,
    }
    impl LinearFieldOperator for BareHelmholtz {
        fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
            FlatHelmholtz { r: self.r }.apply(u)
        }
    }

    fn n1() -> (Grid, ScalarField) {
        let grid = Grid::new(1, 64).unwrap();
        let psi = synthesize(&[FourierTerm::cos(&[1, 0], 0.8)], &grid).unwrap();
        (grid, psi)
    }

    #[test]
    fn zero_source_gives_zero() {
        let (grid, psi) = n1();
        let g = metric(&psi, &ScalarField::zeros(&grid)).unwrap();
        let u = solve_laplace(&g, &ScalarField::zeros(&grid), g.det(), &Default::default()).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
    }

    #[test]
    fn flat_laplace_cosine() {
        let (grid, _) = n1();
        let z = ScalarField::zeros(&grid);
        let g = metric(&z, &z).unwrap();
        let f = synthesize(&[FourierTerm::cos(&[1, 0], 1.0)], &grid).unwrap();
        let u = solve_laplace(&g, &f, g.det(), &Default::default()).unwrap();
        assert!((&u - &f.scale(-4.0)).sup_norm() < 1e-12);
    }

    #[test]
    fn curved_laplace_matches_closed_form() {
        let (grid, psi) = n1();
        let g = metric(&psi, &ScalarField::zeros(&grid)).unwrap();
        let r = scalar_curvature(&g);
        let settings = SolverSettings::default();
        let (u, stats) = solve_laplace_with_stats(&g, &r, g.det(), &settings).unwrap();
        assert!(stats.residual_sup <= stats.target);
        let expected = ScalarField::from_fn(&grid, |p| -(1.0 - 0.2 * p[0].cos()).ln() + 0.0100507);
        assert!((&u - &expected).sup_norm() < 1e-6);
        assert!((u.at(0) - 0.2331943).abs() < 1e-6);
        assert!(omega_average(&u, g.det()).abs() < 1e-13 * u.sup_norm());
        let res = &laplacian(&g, &u) - &r;
        assert!(res.sup_norm() <= settings.rel_tol * r.sup_norm() + settings.abs_tol);
    }

    #[test]
    fn incompatible_source_is_rejected() {
        let (grid, psi) = n1();
        let g = metric(&psi, &ScalarField::zeros(&grid)).unwrap();
        let f = ScalarField::constant(&grid, 1.0);
        let err = solve_laplace(&g, &f, g.det(), &Default::default()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleSource { .. }));
    }

    #[test]
    fn general_solves() {
        let (grid, _) = n1();
        let f = synthesize(&[FourierTerm::cos(&[1, 0], 1.0)], &grid).unwrap();
        let u = solve_general(&Identity, &f, &Default::default()).unwrap();
        assert!((&u - &f).sup_norm() < 1e-15);

        let u = solve_general(&FlatHelmholtz { r: 0.1 }, &f, &Default::default()).unwrap();
        assert!((&u - &f.scale(1.0 / 1.025)).sup_norm() < 1e-12);
    }

    #[test]
    fn general_roundtrip() {
        let (grid, _) = n1();
        let u0 = ScalarField::from_fn(&grid, |p| (0.4 * p[0].sin() + 0.2 * (2.0 * p[1]).cos()).exp());
        let op = BareHelmholtz { r: 0.05 };
        let f = op.apply(&u0).unwrap();
        let (u, stats) = solve_general_with_stats(&op, &f, &Default::default()).unwrap();
        assert!(stats.iterations > 1);
        assert!((&u - &u0).sup_norm() <= 1e-9 * u0.sup_norm());
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let (grid, _) = n1();
        let f = ScalarField::from_fn(&grid, |p| (p[0].sin() + (3.0 * p[1]).cos()).exp());
        let settings = SolverSettings {
            max_iterations: 2,
            ..Default::default()
        };
        let err = solve_general(&BareHelmholtz { r: 1.0 }, &f, &settings).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2, .. }));
    }

    #[test]
    fn laplace_output_integrates_flat_laplacian_to_zero() {
        let (grid, _) = n1();
        let u = ScalarField::from_fn(&grid, |p| (p[0].cos() * p[1].sin()).exp());
        let one = ScalarField::constant(&grid, 1.0);
        assert!(integral(&flat_laplacian(&u), &one).abs() < 1e-12);
    }
}
