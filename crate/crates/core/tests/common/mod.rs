#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use twisted_kahler::elliptic::{solve_general, LinearFieldOperator, SolverSettings};
use twisted_kahler::hermitian::laplacian;
use twisted_kahler::spectral::flat_helmholtz_inv;
use twisted_kahler::{
    make_background, BackgroundGeometry, FourierTerm, Grid, Harmonic, Result, ScalarField,
};

pub const R_LIST: [f64; 4] = [0.08, 0.04, 0.02, 0.01];

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random low-frequency terms with `|k_a| ≤ kmax` and total amplitude `budget`.
pub fn random_terms(rng: &mut StdRng, dims: usize, count: usize, kmax: i32, budget: f64) -> Vec<FourierTerm> {
    let mut terms: Vec<FourierTerm> = (0..count)
        .map(|_| {
            let mut k: Vec<i32> = (0..dims).map(|_| rng.gen_range(-kmax..=kmax)).collect();
            if k.iter().all(|&c| c == 0) {
                k[rng.gen_range(0..dims)] = 1;
            }
            FourierTerm {
                harmonic: if rng.gen_bool(0.5) { Harmonic::Cos } else { Harmonic::Sin },
                wavevector: k,
                amplitude: rng.gen_range(-1.0..1.0),
            }
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.amplitude.abs()).sum();
    for t in &mut terms {
        t.amplitude *= budget / total;
    }
    terms
}

/// `Σ|a|·|k|²/4` bounds the eigenvalues of `∂∂̄` of the synthesised field, so
/// `budget` is chosen to keep metrics well inside the cone.
pub fn random_background(rng: &mut StdRng, grid: &Grid) -> BackgroundGeometry {
    loop {
        let terms = random_terms(rng, grid.dims(), 3, 2, 0.5);
        if let Ok(bg) = make_background(&terms, grid) {
            if bg.g.min_eigenvalue() > 0.3 {
                return bg;
            }
        }
    }
}

/// A random `ω`-mean-zero potential with `ω_φ` still positive.
pub fn random_potential(rng: &mut StdRng, bg: &BackgroundGeometry, budget: f64) -> ScalarField {
    loop {
        let terms = random_terms(rng, bg.grid().dims(), 3, 2, budget);
        let phi = bg.mean_free(&twisted_kahler::synthesize(&terms, bg.grid()).unwrap());
        if let Ok(g) = bg.metric_for(&phi) {
            if g.min_eigenvalue() > 0.2 {
                return phi;
            }
        }
    }
}

pub fn n1_family() -> Vec<FourierTerm> {
    vec![FourierTerm::cos(&[1, 0], 0.8)]
}

/// Residual `r(−log det g_φ + avg_ω log det g_φ) + φ` of the scalar reduced
/// equation in complex dimension one.
pub fn scalar_residual(bg: &BackgroundGeometry, r: f64, phi: &ScalarField) -> Result<ScalarField> {
    let g = bg.metric_for(phi)?;
    let log_det = g.det().map(f64::ln);
    let mut out = phi.clone();
    out.axpy(-r, &log_det);
    Ok(out.add_constant(r * bg.average(&log_det)))
}

struct ScalarJacobian<'a> {
    bg: &'a BackgroundGeometry,
    g: twisted_kahler::MetricField,
    r: f64,
}

impl LinearFieldOperator for ScalarJacobian<'_> {
    fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        let lap = laplacian(&self.g, u);
        let mut out = u.clone();
        out.axpy(-self.r, &lap);
        Ok(out.add_constant(self.r * self.bg.average(&lap)))
    }

    fn precondition(&self, residual: &ScalarField) -> ScalarField {
        flat_helmholtz_inv(residual, self.r)
    }
}

/// Damped Newton on the scalar reduced equation, from `φ = 0`.
pub fn newton_oracle(bg: &BackgroundGeometry, r: f64, tol: f64) -> (ScalarField, usize) {
    let settings = SolverSettings {
        rel_tol: 1e-13,
        abs_tol: 1e-16,
        ..Default::default()
    };
    let mut phi = ScalarField::zeros(bg.grid());
    let mut res = scalar_residual(bg, r, &phi).unwrap();
    for it in 0..50 {
        if res.sup_norm() <= tol {
            return (phi, it);
        }
        let jac = ScalarJacobian {
            bg,
            g: bg.metric_for(&phi).unwrap(),
            r,
        };
        let delta = solve_general(&jac, &res, &settings).unwrap();
        let mut lambda = 1.0;
        loop {
            let mut trial = phi.clone();
            trial.axpy(-lambda, &delta);
            let trial = bg.mean_free(&trial);
            if let Ok(tr) = scalar_residual(bg, r, &trial) {
                if tr.sup_norm() < res.sup_norm() || lambda < 1e-3 {
                    phi = trial;
                    res = tr;
                    break;
                }
            }
            lambda *= 0.5;
        }
    }
    panic!("newton oracle did not converge: residual {:e}", res.sup_norm());
}

/// Prints one acceptance line and returns the verdict. The line goes straight
/// to the process stdout so it shows up without `--nocapture`.
pub fn verdict(criterion: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    use std::io::Write;
    let line = format!("{} criterion {criterion}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}
