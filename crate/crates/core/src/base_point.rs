//! The Taylor-corrected starting point `φ₁ = ru₁ + (r²/2)u₂ + (r³/6)u₃`
//! around `φ₀ = 0`, and the residual-order diagnostics that go with it.
//!
//! The coefficients cancel the `r`, `r²` and `r³` terms of `F_r(φ₁)`:
//!
//! ```text
//! u₁ = −θ_{φ₀}
//! u₂ = −2(−Δu₁ − R̄u₁ + avg(Δu₁) + DP(u₁))
//! u₃ = −3(−Δu₂ − R̄u₂ + avg(Δu₂) + DP(u₂) + |∂∂̄u₁|² − avg|∂∂̄u₁|² + D²P(u₁,u₁))
//! ```
//!
//! with all operators taken at `φ₀` and averages against `ωⁿ`.

use serde::Serialize;

use crate::elliptic::SolverSettings;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hermitian::{laplacian, pairing};
use crate::spectral::complex_hessian;
use crate::twisted::{dp_lin, dp_second, theta, BackgroundGeometry, PotentialState};

/// Allowed `ωⁿ`-mean of each expansion coefficient.
pub const MEAN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BasePointExpansion {
    pub u1: ScalarField,
    pub u2: ScalarField,
    pub u3: ScalarField,
    /// `θ_{φ₀}`.
    pub theta0: ScalarField,
}

fn check_mean(bg: &BackgroundGeometry, name: &str, f: &ScalarField) -> Result<f64> {
    let mean = bg.average(f);
    if mean.abs() > MEAN_TOLERANCE * (1.0 + f.sup_norm()) {
        return Err(Error::Invariant(format!("{name} has ωⁿ-mean {mean:e}")));
    }
    Ok(mean)
}

/// `(∂θ/∂r)` pieces that are linear in the direction: `−Δv − R̄v + avg(Δv) + DP(v)`.
fn linear_part(
    bg: &BackgroundGeometry,
    st0: &PotentialState,
    v: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    let lap = laplacian(&st0.g, v);
    let lap_mean = bg.average(&lap);
    // ∫Δ_{φ₀}v ωⁿ vanishes at φ₀ = 0 because ω_{φ₀} = ω.
    if lap_mean.abs() > MEAN_TOLERANCE * (1.0 + lap.sup_norm()) {
        return Err(Error::Invariant(format!(
            "∫Δ_φ₀ v ωⁿ = {lap_mean:e} should vanish"
        )));
    }
    let mut out = lap.scale(-1.0).add_constant(lap_mean);
    out.axpy(-bg.rbar, v);
    out.axpy(1.0, &dp_lin(bg, st0, v, settings)?);
    Ok(out)
}

pub fn expansion(bg: &BackgroundGeometry, settings: &SolverSettings) -> Result<BasePointExpansion> {
    let grid = bg.grid();
    let st0 = theta(bg, &ScalarField::zeros(grid), settings)?;

    let u1 = st0.theta.scale(-1.0);
    check_mean(bg, "u1", &u1)?;

    let u2 = linear_part(bg, &st0, &u1, settings)?.scale(-2.0);
    check_mean(bg, "u2", &u2)?;

    let h1 = complex_hessian(&u1);
    let q = pairing(&st0.g, &h1, &h1);
    let mut second = linear_part(bg, &st0, &u2, settings)?;
    second.axpy(1.0, &q);
    second = second.add_constant(-bg.average(&q));
    second.axpy(1.0, &dp_second(bg, &st0, &u1, settings)?);
    let u3 = second.scale(-3.0);
    check_mean(bg, "u3", &u3)?;

    Ok(BasePointExpansion {
        u1: bg.mean_free(&u1),
        u2: bg.mean_free(&u2),
        u3: bg.mean_free(&u3),
        theta0: st0.theta,
    })
}

impl BasePointExpansion {
    /// The series truncated after `order` terms (order 0 is `φ₀ = 0`).
    pub fn truncated(&self, r: f64, order: usize) -> Result<ScalarField> {
        if order > 3 {
            return Err(Error::InvalidArgument(format!(
                "base-point order must be 0..=3, got {order}"
            )));
        }
        if !(r >= 0.0) {
            return Err(Error::InvalidArgument(format!("r must be non-negative, got {r}")));
        }
        let mut phi = ScalarField::zeros(self.u1.grid());
        let coeffs = [(r, &self.u1), (r * r / 2.0, &self.u2), (r * r * r / 6.0, &self.u3)];
        for &(c, u) in coeffs.iter().take(order) {
            phi.axpy(c, u);
        }
        Ok(phi)
    }
}

/// `φ₁` at the requested order, checked to stay inside the Kähler cone.
pub fn corrected_base(
    bg: &BackgroundGeometry,
    exp: &BasePointExpansion,
    r: f64,
    order: usize,
) -> Result<ScalarField> {
    let phi = exp.truncated(r, order)?;
    bg.metric_for(&phi)?;
    Ok(phi)
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorRow {
    pub r: f64,
    pub residual_sup: f64,
    /// Slope fitted on this row and all earlier ones; `None` for the first.
    pub slope_so_far: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorTable {
    pub order: usize,
    pub rows: Vec<TaylorRow>,
    pub slope: f64,
}

impl TaylorTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,residual_sup,slope_so_far\n");
        for row in &self.rows {
            let slope = row.slope_so_far.map(|s| format!("{s:.6}")).unwrap_or_default();
            out.push_str(&format!("{:e},{:e},{}\n", row.r, row.residual_sup, slope));
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `‖F_r(φ₁)‖_sup` over `r_list` and its log-log slope.
pub fn taylor_orders(
    bg: &BackgroundGeometry,
    exp: &BasePointExpansion,
    r_list: &[f64],
    order: usize,
    settings: &SolverSettings,
) -> Result<TaylorTable> {
    use rayon::prelude::*;
    if r_list.len() < 2 {
        return Err(Error::InvalidArgument("need at least two r values".into()));
    }
    let residuals = r_list
        .par_iter()
        .map(|&r| {
            let phi = corrected_base(bg, exp, r, order)?;
            Ok((r, theta(bg, &phi, settings)?.f_r(r).sup_norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = residuals
        .iter()
        .enumerate()
        .map(|(i, &(r, residual_sup))| TaylorRow {
            r,
            residual_sup,
            slope_so_far: (i > 0).then(|| loglog_slope(&residuals[..=i])),
        })
        .collect();
    Ok(TaylorTable {
        order,
        rows,
        slope: loglog_slope(&residuals),
    })
}
