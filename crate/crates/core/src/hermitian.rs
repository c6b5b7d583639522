//! Pointwise Hermitian matrices and the Kähler geometry built from them.
//!
//! Conventions (no factors of 2 anywhere):
//!
//! * `g_{jk̄} = δ_{jk} + ∂_j∂_k̄(ψ + φ)`, stored as the matrix `G[j][k]`;
//! * `Δ_g u = g^{jk̄}∂_j∂_k̄u = tr(G⁻¹·∂∂̄u)`;
//! * `tr_g η = tr(G⁻¹η)` and `⟨A, B⟩_g = tr(G⁻¹A·G⁻¹B)`;
//! * `Ric_{jk̄} = −∂_j∂_k̄ log det G` and `R = tr_g Ric`.
//!
//! Only `n ≤ 2` is supported, so determinants and inverses use closed forms.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::spectral::complex_hessian;

/// Minimum eigenvalue below which a metric is treated as degenerate.
pub const POSITIVITY_THRESHOLD: f64 = 1e-8;

/// A complex matrix of size at most 2×2; entries beyond `n` stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat(pub [[Complex64; 2]; 2]);

impl Mat {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero();
        for j in 0..n {
            m.0[j][j] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn scalar(n: usize, value: f64) -> Self {
        let mut m = Self::zero();
        for j in 0..n {
            m.0[j][j] = Complex64::new(value, 0.0);
        }
        m
    }

    fn add(&self, other: &Mat) -> Mat {
        let mut m = *self;
        for (row, orow) in m.0.iter_mut().zip(&other.0) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v += o;
            }
        }
        m
    }

    fn scaled(&self, a: f64) -> Mat {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= a;
            }
        }
        m
    }

    pub fn mul(&self, other: &Mat, n: usize) -> Mat {
        let mut m = Mat::zero();
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::default();
                for k in 0..n {
                    acc += self.0[i][k] * other.0[k][j];
                }
                m.0[i][j] = acc;
            }
        }
        m
    }

    pub fn trace(&self, n: usize) -> f64 {
        (0..n).map(|j| self.0[j][j].re).sum()
    }

    /// `Re tr(A·B)`.
    pub fn trace_product(&self, other: &Mat, n: usize) -> f64 {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += (self.0[j][k] * other.0[k][j]).re;
            }
        }
        acc
    }

    pub fn det(&self, n: usize) -> f64 {
        match n {
            1 => self.0[0][0].re,
            _ => (self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]).re,
        }
    }

    pub fn inverse(&self, n: usize) -> Mat {
        let det = self.det(n);
        let mut m = Mat::zero();
        match n {
            1 => m.0[0][0] = Complex64::new(1.0 / det, 0.0),
            _ => {
                let s = 1.0 / det;
                m.0[0][0] = self.0[1][1] * s;
                m.0[1][1] = self.0[0][0] * s;
                m.0[0][1] = -self.0[0][1] * s;
                m.0[1][0] = -self.0[1][0] * s;
            }
        }
        m
    }

    /// Smallest eigenvalue of a Hermitian matrix.
    pub fn min_eigenvalue(&self, n: usize) -> f64 {
        match n {
            1 => self.0[0][0].re,
            _ => {
                let tr = self.trace(2);
                let det = self.det(2);
                let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
                0.5 * (tr - disc)
            }
        }
    }

    fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.norm()))
    }
}

/// A Hermitian `n×n` matrix at every node.
#[derive(Clone)]
pub struct HermitianField {
    grid: Grid,
    entries: Vec<Mat>,
}

impl std::fmt::Debug for HermitianField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HermitianField")
            .field("grid", &self.grid)
            .field("sup_norm", &self.sup_norm())
            .finish_non_exhaustive()
    }
}

impl HermitianField {
    pub fn from_entries(grid: &Grid, entries: Vec<Mat>) -> Self {
        assert_eq!(entries.len(), grid.len());
        Self {
            grid: grid.clone(),
            entries,
        }
    }

    pub fn constant(grid: &Grid, m: Mat) -> Self {
        Self::from_entries(grid, vec![m; grid.len()])
    }

    /// `value·δ_{jk}` everywhere.
    pub fn scalar(grid: &Grid, value: f64) -> Self {
        Self::constant(grid, Mat::scalar(grid.n_complex(), value))
    }

    /// Diagonal field `f·δ_{jk}`.
    pub fn from_scalar(f: &ScalarField) -> Self {
        let n = f.grid().n_complex();
        Self::from_entries(
            f.grid(),
            f.values().iter().map(|&v| Mat::scalar(n, v)).collect(),
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n_complex()
    }

    pub fn at(&self, index: usize) -> &Mat {
        &self.entries[index]
    }

    pub fn entry(&self, index: usize, j: usize, k: usize) -> Complex64 {
        self.entries[index].0[j][k]
    }

    pub fn entries(&self) -> &[Mat] {
        &self.entries
    }

    pub fn add(&self, other: &HermitianField) -> HermitianField {
        assert!(self.grid.same_as(&other.grid), "grid mismatch");
        Self::from_entries(
            &self.grid,
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> HermitianField {
        Self::from_entries(&self.grid, self.entries.iter().map(|m| m.scaled(a)).collect())
    }

    pub fn sub(&self, other: &HermitianField) -> HermitianField {
        self.add(&other.scale(-1.0))
    }

    /// Largest entry modulus over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, e| m.max(e.max_abs()))
    }

    /// Largest deviation from `H = H*` over all nodes.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0_f64;
        for m in &self.entries {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max((m.0[j][k] - m.0[k][j].conj()).norm());
                }
            }
        }
        worst
    }

    fn pointwise(&self, f: impl Fn(&Mat) -> f64) -> ScalarField {
        ScalarField::from_raw(&self.grid, self.entries.iter().map(f).collect())
    }
}

/// A positive-definite metric with its determinant and inverse cached.
#[derive(Clone, Debug)]
pub struct MetricField {
    g: HermitianField,
    det: ScalarField,
    inv: HermitianField,
    min_eigenvalue: f64,
}

impl MetricField {
    /// Wrap a Hermitian field after checking positivity.
    pub fn from_hermitian(g: HermitianField) -> Result<Self> {
        let n = g.n();
        let min_eigenvalue = g
            .entries
            .iter()
            .map(|m| m.min_eigenvalue(n))
            .fold(f64::INFINITY, f64::min);
        if !(min_eigenvalue > POSITIVITY_THRESHOLD) {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        let det = g.pointwise(|m| m.det(n));
        let inv = HermitianField::from_entries(
            &g.grid,
            g.entries.iter().map(|m| m.inverse(n)).collect(),
        );
        Ok(Self {
            g,
            det,
            inv,
            min_eigenvalue,
        })
    }

    /// `g + ∂∂̄φ`.
    pub fn perturbed(&self, phi: &ScalarField) -> Result<Self> {
        Self::from_hermitian(self.g.add(&complex_hessian(phi)))
    }

    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn matrix(&self) -> &HermitianField {
        &self.g
    }

    pub fn det(&self) -> &ScalarField {
        &self.det
    }

    pub fn inverse(&self) -> &HermitianField {
        &self.inv
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let n = self.n();
        self.g
            .entries
            .iter()
            .map(|m| match n {
                1 => m.0[0][0].re,
                _ => m.trace(2) - m.min_eigenvalue(2),
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|G⁻¹G − I|` entry over the grid.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.n();
        let id = Mat::identity(n);
        self.g
            .entries
            .iter()
            .zip(&self.inv.entries)
            .map(|(g, inv)| {
                let p = inv.mul(g, n);
                (0..n)
                    .flat_map(|j| (0..n).map(move |k| (j, k)))
                    .map(|(j, k)| (p.0[j][k] - id.0[j][k]).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// `g = I + ∂∂̄ψ + ∂∂̄φ`.
pub fn metric(psi: &ScalarField, phi: &ScalarField) -> Result<MetricField> {
    if !psi.grid().same_as(phi.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = psi.grid();
    let h = complex_hessian(&(psi + phi));
    MetricField::from_hermitian(h.add(&HermitianField::scalar(grid, 1.0)))
}

/// `Ric_{jk̄} = −∂_j∂_k̄ log det g`.
pub fn ricci(g: &MetricField) -> HermitianField {
    complex_hessian(&g.det.map(|d| -d.ln()))
}

/// `R = g^{jk̄}Ric_{jk̄}`.
pub fn scalar_curvature(g: &MetricField) -> ScalarField {
    trace_wrt(g, &ricci(g))
}

/// `Δ_g u = g^{jk̄}∂_j∂_k̄u`.
pub fn laplacian(g: &MetricField, u: &ScalarField) -> ScalarField {
    trace_wrt(g, &complex_hessian(u))
}

/// `tr_g η = g^{jk̄}η_{jk̄}`.
pub fn trace_wrt(g: &MetricField, eta: &HermitianField) -> ScalarField {
    assert!(g.grid().same_as(eta.grid()), "grid mismatch");
    let n = g.n();
    ScalarField::from_raw(
        g.grid(),
        g.inv
            .entries
            .iter()
            .zip(&eta.entries)
            .map(|(inv, e)| inv.trace_product(e, n))
            .collect(),
    )
}

/// `⟨A, B⟩_g = g^{il̄}g^{kj̄}A_{ij̄}B_{kl̄}`.
pub fn pairing(g: &MetricField, a: &HermitianField, b: &HermitianField) -> ScalarField {
    assert!(g.grid().same_as(a.grid()) && a.grid().same_as(b.grid()), "grid mismatch");
    let n = g.n();
    let values = g
        .inv
        .entries
        .iter()
        .zip(a.entries.iter().zip(&b.entries))
        .map(|(inv, (a, b))| inv.mul(a, n).trace_product(&inv.mul(b, n), n))
        .collect();
    ScalarField::from_raw(g.grid(), values)
}

/// `tr(G⁻¹A·G⁻¹B·G⁻¹C)`, the cubic contraction in the second variation of `P`.
pub fn triple_contraction(
    g: &MetricField,
    a: &HermitianField,
    b: &HermitianField,
    c: &HermitianField,
) -> ScalarField {
    let n = g.n();
    let values = (0..g.grid().len())
        .map(|i| {
            let inv = g.inv.at(i);
            let ab = inv.mul(a.at(i), n).mul(&inv.mul(b.at(i), n), n);
            ab.trace_product(&inv.mul(c.at(i), n), n)
        })
        .collect();
    ScalarField::from_raw(g.grid(), values)
}
