//! The nonlinear objects of the reduced equation: the background package,
//! `P_φ`, `θ_φ`, `F_r(φ) = rθ_φ + φ`, and the first and diagonal second
//! variations of `P`.
//!
//! Every normalisation integral `∫ · ωⁿ` is taken as an `ωⁿ`-average (divided
//! by the volume), with `ωⁿ` represented by the density `det g_ω`.

use crate::elliptic::{solve_laplace, solve_laplace_scaled, SolverSettings};
use crate::error::{Error, Result};
use crate::grid::{omega_average, synthesize, FourierTerm, Grid, ScalarField};
use crate::hermitian::{
    pairing, ricci, scalar_curvature, trace_wrt, triple_contraction, HermitianField, MetricField,
};
use crate::spectral::complex_hessian;

/// Tolerance on `|R̄|`; the torus has vanishing first Chern class.
pub const RBAR_TOLERANCE: f64 = 1e-10;

/// Fixed data derived once from the background potential `ψ`.
#[derive(Clone, Debug)]
pub struct BackgroundGeometry {
    pub psi: ScalarField,
    pub g: MetricField,
    pub ric: HermitianField,
    pub scalar_curvature: ScalarField,
    pub rbar: f64,
    pub vol: f64,
    /// `Ric(ω) − R̄·g_ω`.
    pub twist: HermitianField,
    /// `log det g_ω`.
    pub log_det: ScalarField,
}

impl BackgroundGeometry {
    pub fn from_potential(psi: ScalarField) -> Result<Self> {
        let grid = psi.grid().clone();
        let g = MetricField::from_hermitian(
            complex_hessian(&psi).add(&HermitianField::scalar(&grid, 1.0)),
        )?;
        let ric = ricci(&g);
        let scalar_curvature = scalar_curvature(&g);
        let rbar = omega_average(&scalar_curvature, g.det());
        if !(rbar.abs() <= RBAR_TOLERANCE) {
            return Err(Error::Invariant(format!(
                "average scalar curvature {rbar:e} should vanish on the torus"
            )));
        }
        let vol = crate::grid::integral(&ScalarField::constant(&grid, 1.0), g.det());
        let twist = ric.sub(&g.matrix().scale(rbar));
        let log_det = g.det().map(f64::ln);
        Ok(Self {
            psi,
            g,
            ric,
            scalar_curvature,
            rbar,
            vol,
            twist,
            log_det,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.psi.grid()
    }

    pub fn n(&self) -> usize {
        self.grid().n_complex()
    }

    /// The density of `ωⁿ`.
    pub fn density(&self) -> &ScalarField {
        self.g.det()
    }

    /// `ωⁿ`-average.
    pub fn average(&self, f: &ScalarField) -> f64 {
        omega_average(f, self.density())
    }

    pub fn mean_free(&self, f: &ScalarField) -> ScalarField {
        f.add_constant(-self.average(f))
    }

    /// `g_φ = g_ω + ∂∂̄φ`.
    pub fn metric_for(&self, phi: &ScalarField) -> Result<MetricField> {
        if !phi.grid().same_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        self.g.perturbed(phi)
    }
}

pub fn make_background(psi_terms: &[FourierTerm], grid: &Grid) -> Result<BackgroundGeometry> {
    BackgroundGeometry::from_potential(synthesize(psi_terms, grid)?)
}

/// Everything derived from one potential `φ`.
#[derive(Clone, Debug)]
pub struct PotentialState {
    pub phi: ScalarField,
    pub g: MetricField,
    /// `log(det g_φ / det g_ω)`.
    pub log_ratio: ScalarField,
    pub p: ScalarField,
    pub theta: ScalarField,
    /// `∂∂̄P_φ − (Ric(ω) − R̄ω)`, the coefficient form of `DP|_φ`.
    pub p_defect: HermitianField,
    /// `|∂∂̄P_φ|_φ + |Ric(ω) − R̄ω|_φ`, the size of the terms cancelling in
    /// `p_defect`.
    pub p_scale: ScalarField,
}

/// Solve `Δ_φP = tr_φ(Ric(ω) − R̄ω)` with `∫P ωⁿ = 0`.
pub fn p_potential(
    bg: &BackgroundGeometry,
    g_phi: &MetricField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    let source = trace_wrt(g_phi, &bg.twist);
    solve_laplace(g_phi, &source, bg.density(), settings)
}

/// `θ_φ = −log(ω_φⁿ/ωⁿ) − R̄φ + ∫log(ω_φⁿ/ωⁿ)ωⁿ + P_φ`, with the state needed
/// by the linearisations.
pub fn theta(
    bg: &BackgroundGeometry,
    phi: &ScalarField,
    settings: &SolverSettings,
) -> Result<PotentialState> {
    let g = bg.metric_for(phi)?;
    let log_ratio = &g.det().map(f64::ln) - &bg.log_det;
    let p = p_potential(bg, &g, settings)?;
    let shift = bg.average(&log_ratio);
    let mut theta = log_ratio.scale(-1.0).add_constant(shift);
    theta.axpy(-bg.rbar, phi);
    theta.axpy(1.0, &p);
    let hp = complex_hessian(&p);
    let p_defect = hp.sub(&bg.twist);
    let p_scale = &pointwise_norm(&g, &hp) + &pointwise_norm(&g, &bg.twist);
    Ok(PotentialState {
        phi: phi.clone(),
        g,
        log_ratio,
        p,
        theta,
        p_defect,
        p_scale,
    })
}

impl PotentialState {
    /// `F_r(φ) = rθ_φ + φ`.
    pub fn f_r(&self, r: f64) -> ScalarField {
        let mut out = self.phi.clone();
        out.axpy(r, &self.theta);
        out
    }
}

/// `F_r(φ) = rθ_φ + φ`.
pub fn f_r(
    bg: &BackgroundGeometry,
    r: f64,
    phi: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("r must be non-negative, got {r}")));
    }
    Ok(theta(bg, phi, settings)?.f_r(r))
}

/// `DP|_φ(u)`: `Δ_φ DP = ⟨∂∂̄u, ∂∂̄P_φ − (Ric(ω) − R̄ω)⟩_φ`, `∫DP ωⁿ = 0`.
pub fn dp_lin(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    u: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    dp_lin_from_hessian(bg, state, &complex_hessian(u), settings)
}

pub(crate) fn dp_lin_from_hessian(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    hess_u: &HermitianField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    let source = pairing(&state.g, hess_u, &state.p_defect);
    let scale = (&pointwise_norm(&state.g, hess_u) * &state.p_scale).sup_norm();
    Ok(solve_laplace_scaled(&state.g, &source, bg.density(), scale, settings)?.0)
}

/// `|A|_g = ⟨A, A⟩_g^{1/2}` at every node.
fn pointwise_norm(g: &MetricField, a: &HermitianField) -> ScalarField {
    pairing(g, a, a).map(|v| v.max(0.0).sqrt())
}

/// Diagonal second variation `(∂/∂φ DP)|_φ(u, u)`:
/// `Δ_φf = 2⟨∂∂̄u, ∂∂̄DP(u)⟩_φ − 2·tr(G⁻¹U·G⁻¹U·G⁻¹K)` with `U = ∂∂̄u`,
/// `K = ∂∂̄P_φ − (Ric(ω) − R̄ω)`, and `∫f ωⁿ = 0`.
///
/// The two index contractions `u_{ip̄}u_{pj̄}K_{jī}` and `u_{ip̄}u_{jī}K_{pj̄}`
/// coincide after raising indices with `g_φ`, hence the factor 2.
pub fn dp_second(
    bg: &BackgroundGeometry,
    state: &PotentialState,
    u: &ScalarField,
    settings: &SolverSettings,
) -> Result<ScalarField> {
    let hu = complex_hessian(u);
    let dp = dp_lin_from_hessian(bg, state, &hu, settings)?;
    let hdp = complex_hessian(&dp);
    let mut source = pairing(&state.g, &hu, &hdp).scale(2.0);
    source.axpy(-2.0, &triple_contraction(&state.g, &hu, &hu, &state.p_defect));
    let nu = pointwise_norm(&state.g, &hu);
    let terms = &pointwise_norm(&state.g, &hdp) + &(&nu * &state.p_scale);
    let scale = (&nu * &terms).scale(2.0).sup_norm();
    Ok(solve_laplace_scaled(&state.g, &source, bg.density(), scale, settings)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::laplacian;

    fn n1_bg() -> BackgroundGeometry {
        let grid = Grid::new(1, 64).unwrap();
        make_background(&[FourierTerm::cos(&[1, 0], 0.8)], &grid).unwrap()
    }

    #[test]
    fn flat_background() {
        let grid = Grid::new(2, 8).unwrap();
        let bg = make_background(&[], &grid).unwrap();
        assert_eq!(bg.rbar, 0.0);
        assert!(bg.ric.sup_norm() < 1e-15);
        assert!(bg.twist.sup_norm() < 1e-15);
        let s = SolverSettings::default();
        let st = theta(&bg, &ScalarField::zeros(&grid), &s).unwrap();
        assert!(st.theta.sup_norm() < 1e-15);
        assert!(st.p.sup_norm() < 1e-15);
        let phi = ScalarField::from_fn(&grid, |p| 0.1 * (p[0] + p[3]).cos());
        assert!(p_potential(&bg, &bg.metric_for(&phi).unwrap(), &s).unwrap().sup_norm() < 1e-15);
        assert!(f_r(&bg, 0.3, &ScalarField::zeros(&grid), &s).unwrap().sup_norm() < 1e-15);
    }

    #[test]
    fn cosine_background_curvature() {
        let bg = n1_bg();
        assert!((bg.scalar_curvature.at(0) + 0.078125).abs() < 1e-12);
        assert!(bg.rbar.abs() < 1e-12);
        assert!(bg.twist.hermiticity_defect() == 0.0);
    }

    #[test]
    fn two_dimensional_background_is_positive_with_vanishing_rbar() {
        let grid = Grid::new(2, 16).unwrap();
        let bg = make_background(
            &[FourierTerm::cos(&[1, 0, 0, 0], 0.6), FourierTerm::cos(&[0, 1, 1, 0], 0.4)],
            &grid,
        )
        .unwrap();
        assert!(bg.g.min_eigenvalue() > 0.0);
        assert!(bg.rbar.abs() < 1e-10);
    }

    #[test]
    fn theta_at_origin_matches_closed_form() {
        let bg = n1_bg();
        let grid = bg.grid().clone();
        let s = SolverSettings::default();
        let st = theta(&bg, &ScalarField::zeros(&grid), &s).unwrap();
        assert!((st.theta.at(0) - 0.2331943).abs() < 1e-6);
        assert!((st.theta.sup_norm() - 0.2331943).abs() < 1e-6);
        assert!((&st.theta - &st.p).sup_norm() < 1e-14);
        let fr = f_r(&bg, 0.05, &ScalarField::zeros(&grid), &s).unwrap();
        assert!((fr.sup_norm() - 0.01165972).abs() < 1e-7);
        assert!(f_r(&bg, -1.0, &ScalarField::zeros(&grid), &s).is_err());
    }

    #[test]
    fn r_zero_returns_phi() {
        let bg = n1_bg();
        let phi = bg.mean_free(&ScalarField::from_fn(bg.grid(), |p| 0.05 * p[1].sin()));
        let out = f_r(&bg, 0.0, &phi, &SolverSettings::default()).unwrap();
        assert!((&out - &phi).sup_norm() == 0.0);
    }

    #[test]
    fn one_dimensional_identities() {
        let bg = n1_bg();
        let s = SolverSettings::default();
        let phi = bg.mean_free(&ScalarField::from_fn(bg.grid(), |p| {
            0.3 * (p[0] + p[1]).sin() + 0.2 * (2.0 * p[1]).cos()
        }));
        let st = theta(&bg, &phi, &s).unwrap();
        // ∂∂̄P_φ = Ric(ω) and θ_φ = mean-free part of −log det g_φ.
        assert!(complex_hessian(&st.p).sub(&bg.ric).sup_norm() < 1e-9);
        let expected = bg.mean_free(&st.g.det().map(|d| -d.ln()));
        assert!((&st.theta - &expected).sup_norm() < 1e-9);
        let u = ScalarField::from_fn(bg.grid(), |p| p[0].cos() + 0.5 * p[1].sin());
        assert!(dp_lin(&bg, &st, &u, &s).unwrap().sup_norm() < 1e-9 * u.sup_norm());
        assert!(dp_second(&bg, &st, &u, &s).unwrap().sup_norm() < 1e-9);
        // Defining property Δ_φθ = R_φ − R̄.
        let r_phi = scalar_curvature(&st.g);
        let defect = &(&laplacian(&st.g, &st.theta) - &r_phi).add_constant(bg.rbar);
        assert!(defect.sup_norm() <= 1e-8 * (1.0 + r_phi.sup_norm()));
    }
}
