//! Uniform periodic grids on the flat torus `(R / 2πZ)^{2n}` and the real
//! scalar fields that live on them.
//!
//! Axes are ordered `(x¹, y¹, …, xⁿ, yⁿ)` and node values are stored
//! row-major, so the last axis varies fastest. Node `j` on an axis sits at
//! `2πj/N`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

struct GridInner {
    n_complex: usize,
    points: usize,
    dealias: bool,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// A uniform grid with `N` points on each of the `2n` real axes.
///
/// Cloning is cheap; the FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl Grid {
    pub fn new(n_complex: usize, points: usize) -> Result<Self> {
        Self::with_dealiasing(n_complex, points, false)
    }

    /// Like [`Grid::new`], but spectral derivatives drop every mode with a
    /// wavenumber component beyond `N/3` (the 2/3 rule).
    pub fn with_dealiasing(n_complex: usize, points: usize, dealias: bool) -> Result<Self> {
        if !(1..=2).contains(&n_complex) {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must be 1 or 2, got {n_complex}"
            )));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 8, got {points}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        let len = points.pow(2 * n_complex as u32);
        Ok(Self {
            inner: Arc::new(GridInner {
                n_complex,
                points,
                dealias,
                len,
                forward,
                inverse,
            }),
        })
    }

    /// Complex dimension `n`.
    pub fn n_complex(&self) -> usize {
        self.inner.n_complex
    }

    /// Points per axis `N`.
    pub fn points(&self) -> usize {
        self.inner.points
    }

    /// Number of real axes, `2n`.
    pub fn dims(&self) -> usize {
        2 * self.inner.n_complex
    }

    /// Total node count `N^{2n}`.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dealias(&self) -> bool {
        self.inner.dealias
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.inner.points as f64
    }

    /// Quadrature weight of a single node, `(2π/N)^{2n}`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims() as i32)
    }

    /// Largest alias-free wavenumber magnitude, `floor(N/3)`.
    pub fn alias_limit(&self) -> usize {
        self.inner.points / 3
    }

    pub(crate) fn forward_plan(&self) -> &Arc<dyn Fft<f64>> {
        &self.inner.forward
    }

    pub(crate) fn inverse_plan(&self) -> &Arc<dyn Fft<f64>> {
        &self.inner.inverse
    }

    /// Per-axis integer indices of a flat node index.
    pub fn digits(&self, index: usize, out: &mut [usize]) {
        let n = self.points();
        let mut rest = index;
        for slot in out.iter_mut().rev() {
            *slot = rest % n;
            rest /= n;
        }
    }

    /// Coordinates `(x¹, y¹, …)` of node `index`.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        let mut digits = vec![0; self.dims()];
        self.digits(index, &mut digits);
        let h = self.spacing();
        digits.iter().map(|&d| d as f64 * h).collect()
    }

    /// Flat index of the node with the given per-axis indices.
    pub fn index_of(&self, digits: &[usize]) -> usize {
        let n = self.points();
        digits.iter().fold(0, |acc, &d| acc * n + (d % n))
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.n_complex() == other.n_complex()
                && self.points() == other.points()
                && self.dealias() == other.dealias())
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_complex", &self.n_complex())
            .field("points", &self.points())
            .field("dealias", &self.dealias())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// A real value at every grid node.
#[derive(Clone)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("sup_norm", &self.sup_norm())
            .finish_non_exhaustive()
    }
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite field value".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Evaluate `f` at the coordinates of every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coordinates(i))).collect();
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.same_as(&other.grid), "grid mismatch");
        Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        assert!(self.grid.same_as(&other.grid), "grid mismatch");
        for (v, &w) in self.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(self)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.map(|v| -v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Harmonic {
    Cos,
    Sin,
}

/// One exact trigonometric term `a·cos(k·p)` or `a·sin(k·p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub harmonic: Harmonic,
    pub wavevector: Vec<i32>,
    pub amplitude: f64,
}

impl FourierTerm {
    pub fn cos(wavevector: &[i32], amplitude: f64) -> Self {
        Self {
            harmonic: Harmonic::Cos,
            wavevector: wavevector.to_vec(),
            amplitude,
        }
    }

    pub fn sin(wavevector: &[i32], amplitude: f64) -> Self {
        Self {
            harmonic: Harmonic::Sin,
            wavevector: wavevector.to_vec(),
            amplitude,
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        let phase: f64 = self
            .wavevector
            .iter()
            .zip(p)
            .map(|(&k, &x)| k as f64 * x)
            .sum();
        match self.harmonic {
            Harmonic::Cos => self.amplitude * phase.cos(),
            Harmonic::Sin => self.amplitude * phase.sin(),
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.wavevector.len() != grid.dims() {
            return Err(Error::InvalidArgument(format!(
                "wavevector {:?} has {} components, grid has {} axes",
                self.wavevector,
                self.wavevector.len(),
                grid.dims()
            )));
        }
        let limit = grid.alias_limit();
        if self
            .wavevector
            .iter()
            .any(|&k| k.unsigned_abs() as usize > limit)
        {
            return Err(Error::AliasedWavevector {
                wavevector: self.wavevector.clone(),
                points: grid.points(),
                limit,
            });
        }
        Ok(())
    }
}

/// Pointwise sum of the given harmonics.
pub fn synthesize(terms: &[FourierTerm], grid: &Grid) -> Result<ScalarField> {
    for term in terms {
        term.check(grid)?;
    }
    Ok(ScalarField::from_fn(grid, |p| {
        terms.iter().map(|t| t.eval(p)).sum()
    }))
}

/// Trapezoid quadrature `∫ f·ρ` over the torus.
pub fn integral(f: &ScalarField, density: &ScalarField) -> f64 {
    assert!(f.grid.same_as(&density.grid), "grid mismatch");
    let sum: f64 = f
        .values
        .iter()
        .zip(&density.values)
        .map(|(&a, &b)| a * b)
        .sum();
    sum * f.grid.cell_volume()
}

/// `∫ f·ρ / ∫ ρ`.
pub fn omega_average(f: &ScalarField, density: &ScalarField) -> f64 {
    assert!(f.grid.same_as(&density.grid), "grid mismatch");
    let (num, den) = f
        .values
        .iter()
        .zip(&density.values)
        .fold((0.0, 0.0), |(n, d), (&a, &b)| (n + a * b, d + b));
    num / den
}

/// Subtract the `ρ`-weighted average.
pub fn mean_free(f: &ScalarField, density: &ScalarField) -> ScalarField {
    f.add_constant(-omega_average(f, density))
}

pub fn sup_norm(f: &ScalarField) -> f64 {
    f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
