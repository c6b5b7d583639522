//! Pseudospectral construction of twisted constant-scalar-curvature Kähler
//! potentials on flat complex tori `(R/2πZ)^{2n}`, `n ∈ {1, 2}`.
//!
//! The fourth-order path equation `t(R_φ − R̄) − (1−t)(tr_φω − n) = 0` is
//! reduced to `F_r(φ) = rθ_φ + φ = 0` with `r = t/(1−t)`, solved by the
//! frozen-Jacobian iteration `φ_{k+1} = φ_k − (DF_r|_{φ₁})⁻¹F_r(φ_k)` from a
//! third-order Taylor base point `φ₁`.

pub mod base_point;
pub mod config;
pub mod continuity;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod hermitian;
pub mod invariants;
pub mod io;
pub mod spectral;
pub mod twisted;

pub use base_point::{corrected_base, expansion, taylor_orders, BasePointExpansion, TaylorTable};
pub use continuity::{
    df_r_apply, df_r_solve, psi_step, r_of_t, solve_twisted, sweep, t_of_r, verify_fourth_order,
    JacobianMode, OrderReport, SolveConfig, SolveReport, Solver,
};
pub use elliptic::{solve_general, solve_laplace, LinearFieldOperator, SolverSettings};
pub use error::{Error, Result};
pub use grid::{integral, omega_average, sup_norm, synthesize, FourierTerm, Grid, Harmonic, ScalarField};
pub use hermitian::{metric, ricci, scalar_curvature, HermitianField, MetricField};
pub use spectral::complex_hessian;
pub use twisted::{dp_lin, dp_second, f_r, make_background, p_potential, theta, BackgroundGeometry, PotentialState};
