//! The linearised operator `DF_r|_{φ₁}`, the frozen-Jacobian map
//! `Ψ(φ) = φ − (DF_r|_{φ₁})⁻¹F_r(φ)`, the fixed-point loop started from the
//! corrected base point, r-sweeps, and the direct check of the fourth-order
//! equation `t(R_φ − R̄) − (1−t)(tr_φω − n) = 0`.

use std::time::Instant;

use serde::Serialize;

use crate::base_point::{corrected_base, expansion, loglog_slope, BasePointExpansion};
use crate::elliptic::{solve_general_with_stats, LinearFieldOperator, SolverSettings};
use crate::error::{Error, Result};
use crate::grid::{FourierTerm, Grid, ScalarField};
use crate::hermitian::{laplacian, scalar_curvature, trace_wrt};
use crate::spectral::{complex_hessian, flat_helmholtz_inv};
use crate::twisted::{dp_lin_from_hessian, make_background, theta, BackgroundGeometry, PotentialState};

/// Smallest damping factor tried before a step is declared divergent.
pub const MIN_DAMPING: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JacobianMode {
    /// `DF_r` evaluated once at `φ₁`.
    Frozen,
    /// `DF_r` re-evaluated at every iterate. For comparison only.
    Newton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub n: usize,
    pub points: usize,
    pub psi: Vec<FourierTerm>,
    pub r: f64,
    pub base_order: usize,
    pub linear: SolverSettings,
    pub tol_residual: f64,
    pub max_fixed_point_iterations: usize,
    pub damping_enabled: bool,
    pub jacobian: JacobianMode,
    pub dealias: bool,
}

impl SolveConfig {
    pub fn new(n: usize, points: usize, psi: Vec<FourierTerm>, r: f64) -> Self {
        Self {
            n,
            points,
            psi,
            r,
            base_order: 3,
            linear: SolverSettings::default(),
            tol_residual: 1e-11,
            max_fixed_point_iterations: 50,
            damping_enabled: true,
            jacobian: JacobianMode::Frozen,
            dealias: false,
        }
    }

    /// `ψ = 0.8cos(x¹)` on `N = 64`.
    pub fn default_n1(r: f64) -> Self {
        Self::new(1, 64, vec![FourierTerm::cos(&[1, 0], 0.8)], r)
    }

    /// `ψ = 0.6cos(x¹) + 0.4cos(x² + y¹)` on `N = 16`.
    pub fn default_n2(r: f64) -> Self {
        Self::new(
            2,
            16,
            vec![
                FourierTerm::cos(&[1, 0, 0, 0], 0.6),
                FourierTerm::cos(&[0, 1, 1, 0], 0.4),
            ],
            r,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {}", self.r)));
        }
        if self.base_order > 3 {
            return Err(Error::InvalidArgument(format!(
                "base_order must be 0..=3, got {}",
                self.base_order
            )));
        }
        if !(self.tol_residual > 0.0 && self.tol_residual.is_finite()) {
            return Err(Error::InvalidArgument("tol_residual must be positive".into()));
        }
        if self.max_fixed_point_iterations == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        self.linear.validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::with_dealiasing(self.n, self.points, self.dealias)
    }
}

/// `u ↦ −rΔ_{φ₁}u + (1 − rR̄)u + r(avg_ω(Δ_{φ₁}u) + DP|_{φ₁}(u))`,
/// preconditioned by `(−rΔ_flat + 1)⁻¹`.
pub struct DfrOperator<'a> {
    pub bg: &'a BackgroundGeometry,
    pub state: &'a PotentialState,
    pub r: f64,
    pub settings: SolverSettings,
}

impl LinearFieldOperator for DfrOperator<'_> {
    fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        let r = self.r;
        let mut out = u.scale(1.0 - r * self.bg.rbar);
        if r == 0.0 {
            return Ok(out);
        }
        let hess = complex_hessian(u);
        let lap = trace_wrt(&self.state.g, &hess);
        out.axpy(-r, &lap);
        out = out.add_constant(r * self.bg.average(&lap));
        let dp = dp_lin_from_hessian(self.bg, self.state, &hess, &self.settings)?;
        out.axpy(r, &dp);
        Ok(out)
    }

    fn precondition(&self, residual: &ScalarField) -> ScalarField {
        flat_helmholtz_inv(residual, self.r)
    }
}

pub fn df_r_apply(
    bg: &BackgroundGeometry,
    r: f64,
    state: &PotentialState,
    u: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("r must be non-negative, got {r}")));
    }
    DfrOperator {
        bg,
        state,
        r,
        settings: *settings,
    }
    .apply(u)
}

pub fn df_r_solve(
    bg: &BackgroundGeometry,
    r: f64,
    state: &PotentialState,
    f: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    df_r_solve_with_stats(bg, r, state, f, settings).map(|(u, _)| u)
}

/// Solve `DF_r|_{φ₁}u = f` for ωⁿ-mean-zero `f`; the result is re-centred.
pub fn df_r_solve_with_stats(
    bg: &BackgroundGeometry,
    r: f64,
    state: &PotentialState,
    f: &ScalarField,
    settings: &SolverSettings,
) -> Result<(ScalarField, crate::elliptic::SolveStats)> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
    }
    let mean = bg.average(f);
    let allowed = settings.compat_tol * f.sup_norm() + settings.compat_abs_tol;
    if mean.abs() > allowed {
        return Err(Error::IncompatibleSource { mean, allowed });
    }
    let op = DfrOperator {
        bg,
        state,
        r,
        settings: *settings,
    };
    let (u, stats) = solve_general_with_stats(&op, f, settings)?;
    Ok((bg.mean_free(&u), stats))
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub phi: ScalarField,
    /// Number of halvings applied to the step.
    pub halvings: usize,
    pub damping: f64,
    pub krylov_iterations: usize,
}

/// One application of `Ψ` given `F_r(φ_k)` already evaluated.
fn step_from_residual(
    bg: &BackgroundGeometry,
    r: f64,
    jacobian_state: &PotentialState,
    phi: &ScalarField,
    residual: &ScalarField,
    damping_enabled: bool,
    settings: &SolverSettings,
) -> Result<StepOutcome> {
    let (delta, stats) = df_r_solve_with_stats(bg, r, jacobian_state, residual, settings)?;
    let mut damping = 1.0;
    let mut halvings = 0;
    loop {
        let mut next = phi.clone();
        next.axpy(-damping, &delta);
        let next = bg.mean_free(&next);
        match bg.metric_for(&next) {
            Ok(_) => {
                return Ok(StepOutcome {
                    phi: next,
                    halvings,
                    damping,
                    krylov_iterations: stats.iterations,
                })
            }
            Err(err @ Error::NotPositive { .. }) => {
                if !damping_enabled || damping <= MIN_DAMPING {
                    return Err(err);
                }
                damping *= 0.5;
                halvings += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

/// `Ψ(φ_k) = φ_k − (DF_r|_{φ₁})⁻¹F_r(φ_k)`, re-centred, with optional damping
/// on cone exit.
pub fn psi_step(
    bg: &BackgroundGeometry,
    r: f64,
    jacobian_state: &PotentialState,
    phi: &ScalarField,
    damping_enabled: bool,
    settings: &SolverSettings,
) -> Result<StepOutcome> {
    let residual = theta(bg, phi, settings)?.f_r(r);
    if residual.sup_norm() == 0.0 {
        return Ok(StepOutcome {
            phi: phi.clone(),
            halvings: 0,
            damping: 1.0,
            krylov_iterations: 0,
        });
    }
    step_from_residual(bg, r, jacobian_state, phi, &residual, damping_enabled, settings)
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    /// Iterate index; record `k` describes `φ_k` (`k = 0` is the base point).
    pub k: usize,
    pub residual_sup: f64,
    /// `‖φ_k − φ_{k−1}‖_sup`.
    pub step_norm: Option<f64>,
    /// `‖φ_k − φ_{k−1}‖ / ‖φ_{k−1} − φ_{k−2}‖`.
    pub contraction_ratio: Option<f64>,
    pub min_eigenvalue: f64,
    pub damping_halvings: usize,
    pub krylov_iterations: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub background_seconds: f64,
    pub base_point_seconds: f64,
    pub jacobian_seconds: f64,
    pub iteration_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub n: usize,
    pub points: usize,
    pub r: f64,
    pub t: f64,
    pub base_order: usize,
    pub jacobian: JacobianMode,
    pub tol_residual: f64,
    pub base_residual: f64,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Number of `Ψ` applications performed.
    pub iterations: usize,
    pub final_residual: f64,
    pub damping_events: usize,
    pub phi_sup: f64,
    pub timings: Timings,
    #[serde(skip)]
    pub phi: ScalarField,
}

impl SolveReport {
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.contraction_ratio).collect()
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.step_norm).collect()
    }

    pub fn max_krylov_iterations(&self) -> usize {
        self.records.iter().map(|r| r.krylov_iterations).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,residual_sup,step_norm,contraction_ratio,min_eigenvalue,damping_halvings,krylov_iterations\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for rec in &self.records {
            out.push_str(&format!(
                "{},{:e},{},{},{:.12},{},{}\n",
                rec.k,
                rec.residual_sup,
                opt(rec.step_norm),
                opt(rec.contraction_ratio),
                rec.min_eigenvalue,
                rec.damping_halvings,
                rec.krylov_iterations
            ));
        }
        out
    }
}

/// Background and base-point expansion built once and shared by every run
/// on the same `ψ` and grid.
pub struct Solver {
    config: SolveConfig,
    bg: BackgroundGeometry,
    expansion: BasePointExpansion,
    setup: Timings,
}

impl Solver {
    pub fn new(config: SolveConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let start = Instant::now();
        let bg = make_background(&config.psi, &grid)?;
        let background_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let expansion = expansion(&bg, &config.linear)?;
        let base_point_seconds = start.elapsed().as_secs_f64();
        Ok(Self {
            config,
            bg,
            expansion,
            setup: Timings {
                background_seconds,
                base_point_seconds,
                ..Default::default()
            },
        })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    pub fn background(&self) -> &BackgroundGeometry {
        &self.bg
    }

    pub fn expansion(&self) -> &BasePointExpansion {
        &self.expansion
    }

    /// `φ₁` at the configured order.
    pub fn base_point(&self, r: f64) -> Result<ScalarField> {
        corrected_base(&self.bg, &self.expansion, r, self.config.base_order)
    }

    /// `DF_r` is linearised at this state in frozen mode.
    pub fn jacobian_state(&self, r: f64) -> Result<PotentialState> {
        theta(&self.bg, &self.base_point(r)?, &self.config.linear)
    }

    pub fn solve(&self, r: f64) -> Result<SolveReport> {
        let start = self.base_point(r)?;
        self.solve_from(r, &start)
    }

    /// Iterate `Ψ` from `start`, with the Jacobian still frozen at `φ₁`.
    pub fn solve_from(&self, r: f64, start: &ScalarField) -> Result<SolveReport> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
        }
        let cfg = &self.config;
        let s = &cfg.linear;
        let mut timings = self.setup.clone();

        let clock = Instant::now();
        let frozen = self.jacobian_state(r)?;
        let base_residual = frozen.f_r(r).sup_norm();
        timings.jacobian_seconds = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut state = theta(&self.bg, &self.bg.mean_free(start), s)?;
        let mut records = Vec::new();
        let mut previous_step: Option<f64> = None;
        let mut step_norm = None;
        let mut halvings = 0;
        let mut krylov = 0;
        let mut damping_events = 0;
        let mut failure = None;
        let mut converged = false;

        for k in 0.. {
            let residual = state.f_r(r);
            let residual_sup = residual.sup_norm();
            let contraction_ratio = match (step_norm, previous_step) {
                (Some(now), Some(before)) => Some(now / before),
                _ => None,
            };
            records.push(IterationRecord {
                k,
                residual_sup,
                step_norm,
                contraction_ratio,
                min_eigenvalue: state.g.min_eigenvalue(),
                damping_halvings: halvings,
                krylov_iterations: krylov,
            });
            if !residual_sup.is_finite() {
                failure = Some(format!("non-finite residual at iteration {k}"));
                break;
            }
            if residual_sup <= cfg.tol_residual {
                converged = true;
                break;
            }
            if k >= cfg.max_fixed_point_iterations {
                failure = Some(format!(
                    "no convergence after {k} iterations (residual {residual_sup:e})"
                ));
                break;
            }
            let linearised_at = match cfg.jacobian {
                JacobianMode::Frozen => &frozen,
                JacobianMode::Newton => &state,
            };
            let outcome = step_from_residual(
                &self.bg,
                r,
                linearised_at,
                &state.phi,
                &residual,
                cfg.damping_enabled,
                s,
            );
            let outcome = match outcome {
                Ok(o) => o,
                Err(err) => {
                    failure = Some(format!("step {} failed: {err}", k + 1));
                    break;
                }
            };
            let step = (&outcome.phi - &state.phi).sup_norm();
            previous_step = step_norm;
            step_norm = Some(step);
            halvings = outcome.halvings;
            krylov = outcome.krylov_iterations;
            if halvings > 0 {
                damping_events += 1;
            }
            state = theta(&self.bg, &outcome.phi, s)?;
        }
        timings.iteration_seconds = clock.elapsed().as_secs_f64();

        let last = records.last().expect("at least one record");
        let report = SolveReport {
            n: cfg.n,
            points: cfg.points,
            r,
            t: t_of_r(r)?,
            base_order: cfg.base_order,
            jacobian: cfg.jacobian,
            tol_residual: cfg.tol_residual,
            base_residual,
            iterations: records.len() - 1,
            final_residual: last.residual_sup,
            converged,
            damping_events,
            phi_sup: state.phi.sup_norm(),
            records,
            timings,
            phi: state.phi,
        };
        match failure {
            None => Ok(report),
            Some(reason) => Err(Error::Diverged {
                reason,
                report: Box::new(report),
            }),
        }
    }
}

/// Build the background for `config` and iterate at `config.r`.
pub fn solve_twisted(config: &SolveConfig) -> Result<SolveReport> {
    Solver::new(config.clone())?.solve(config.r)
}

/// `t(R_φ − R̄) − (1−t)(tr_φω − n)` from fourth-order spectral derivatives of
/// `ψ + φ`.
pub fn fourth_order_residual(
    bg: &BackgroundGeometry,
    phi: &ScalarField,
    t: f64,
) -> Result<ScalarField> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("t must lie in (0, 1), got {t}")));
    }
    let g = bg.metric_for(phi)?;
    let r_phi = scalar_curvature(&g);
    let trace = trace_wrt(&g, bg.g.matrix());
    let n = bg.n() as f64;
    Ok(r_phi
        .add_constant(-bg.rbar)
        .scale(t)
        .zip_map(&trace, |a, tr| a - (1.0 - t) * (tr - n)))
}

pub fn verify_fourth_order(bg: &BackgroundGeometry, phi: &ScalarField, t: f64) -> Result<f64> {
    Ok(fourth_order_residual(bg, phi, t)?.sup_norm())
}

/// `Δ_φ(tθ_φ + (1−t)φ)`, which equals the fourth-order residual.
pub fn reduced_residual(
    bg: &BackgroundGeometry,
    phi: &ScalarField,
    t: f64,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    let st = theta(bg, phi, settings)?;
    let mut combo = st.theta.scale(t);
    combo.axpy(1.0 - t, phi);
    Ok(laplacian(&st.g, &combo))
}

pub fn r_of_t(t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t must lie in [0, 1), got {t}")));
    }
    Ok(t / (1.0 - t))
}

pub fn t_of_r(r: f64) -> Result<f64> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("r must be non-negative, got {r}")));
    }
    Ok(r / (1.0 + r))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub r: f64,
    pub base_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub damping_events: usize,
    pub final_residual: f64,
    pub phi_sup: f64,
    /// `‖φ_∞ + rθ_{φ₀}‖_sup`.
    pub correction_sup: f64,
    pub max_contraction_ratio: Option<f64>,
    pub fourth_order_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub n: usize,
    pub points: usize,
    pub base_order: usize,
    pub rows: Vec<SweepRow>,
    pub base_residual_slope: f64,
    pub phi_slope: f64,
    pub correction_slope: f64,
    pub reports: Vec<SolveReport>,
}

impl OrderReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "r,base_residual,iterations,converged,damping_events,final_residual,phi_sup,correction_sup,max_contraction_ratio,fourth_order_residual\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:e},{:e},{},{},{},{:e},{:e},{:e},{},{:e}\n",
                row.r,
                row.base_residual,
                row.iterations,
                row.converged,
                row.damping_events,
                row.final_residual,
                row.phi_sup,
                row.correction_sup,
                row.max_contraction_ratio.map(|v| format!("{v:e}")).unwrap_or_default(),
                row.fourth_order_residual
            ));
        }
        out
    }
}

impl Solver {
    /// Solve at every `r` concurrently and fit the scaling slopes.
    pub fn sweep(&self, r_list: &[f64]) -> Result<OrderReport> {
        use rayon::prelude::*;
        if r_list.len() < 2 {
            return Err(Error::InvalidArgument("a sweep needs at least two r values".into()));
        }
        let reports = r_list
            .par_iter()
            .map(|&r| self.solve(r))
            .collect::<Result<Vec<_>>>()?;
        let theta0 = &self.expansion.theta0;
        let rows = reports
            .iter()
            .map(|rep| {
                let mut corr = rep.phi.clone();
                corr.axpy(rep.r, theta0);
                Ok(SweepRow {
                    r: rep.r,
                    base_residual: rep.base_residual,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    damping_events: rep.damping_events,
                    final_residual: rep.final_residual,
                    phi_sup: rep.phi_sup,
                    correction_sup: corr.sup_norm(),
                    max_contraction_ratio: rep.contraction_ratios().into_iter().reduce(f64::max),
                    fourth_order_residual: verify_fourth_order(&self.bg, &rep.phi, rep.t)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let fit = |f: fn(&SweepRow) -> f64| {
            loglog_slope(&rows.iter().map(|row| (row.r, f(row))).collect::<Vec<_>>())
        };
        Ok(OrderReport {
            n: self.config.n,
            points: self.config.points,
            base_order: self.config.base_order,
            base_residual_slope: fit(|row| row.base_residual),
            phi_slope: fit(|row| row.phi_sup),
            correction_slope: fit(|row| row.correction_sup),
            rows,
            reports,
        })
    }
}

pub fn sweep(template: &SolveConfig, r_list: &[f64]) -> Result<OrderReport> {
    Solver::new(template.clone())?.sweep(r_list)
}
