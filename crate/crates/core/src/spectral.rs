//! Fourier differentiation on the periodic grid.
//!
//! Derivatives use the wavenumber `j` for `j < N/2`, `j − N` above, and `0`
//! at the Nyquist index. With the Nyquist component zeroed the symbol of
//! `∂_j∂_k̄` is the rank-one matrix `−a_j·conj(a_k)`, which keeps the
//! discrete analogues of `∫ ∂∂̄f ∧ ω^{n−1} = 0` exact to roundoff.

use rustfft::num_complex::Complex64;

use crate::grid::{Grid, ScalarField};
use crate::hermitian::{HermitianField, Mat};

const MAX_DIMS: usize = 4;

/// In-place multidimensional DFT (unnormalised forward, normalised inverse).
fn transform(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.points();
    let dims = grid.dims();
    let len = grid.len();
    let plan = if inverse {
        grid.inverse_plan()
    } else {
        grid.forward_plan()
    };
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); len];
    for axis in 0..dims {
        let stride = n.pow((dims - 1 - axis) as u32);
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = stride * n;
        let mut line = 0;
        for outer in (0..len).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                let dst = &mut buf[line * n..(line + 1) * n];
                for (t, slot) in dst.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                line += 1;
            }
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        line = 0;
        for outer in (0..len).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                let src = &buf[line * n..(line + 1) * n];
                for (t, &v) in src.iter().enumerate() {
                    data[base + t * stride] = v;
                }
                line += 1;
            }
        }
    }
    if inverse {
        let s = 1.0 / len as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

pub(crate) fn forward(f: &ScalarField) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(f.grid(), &mut data, false);
    data
}

pub(crate) fn inverse(grid: &Grid, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
    transform(grid, &mut spectrum, true);
    spectrum
}

fn inverse_real(grid: &Grid, spectrum: Vec<Complex64>) -> ScalarField {
    let values = inverse(grid, spectrum).into_iter().map(|c| c.re).collect();
    ScalarField::from_raw(grid, values)
}

/// Visit every Fourier mode with its derivative wavenumbers and whether it
/// survives dealiasing.
fn for_each_mode(grid: &Grid, mut visit: impl FnMut(usize, &[f64], bool)) {
    let n = grid.points();
    let dims = grid.dims();
    let half = n / 2;
    let limit = grid.alias_limit();
    let dealias = grid.dealias();
    let mut digits = [0usize; MAX_DIMS];
    let mut k = [0.0f64; MAX_DIMS];
    for idx in 0..grid.len() {
        grid.digits(idx, &mut digits[..dims]);
        let mut kept = true;
        for a in 0..dims {
            let j = digits[a];
            let signed = if j <= half { j as i64 } else { j as i64 - n as i64 };
            if dealias && signed.unsigned_abs() as usize > limit {
                kept = false;
            }
            k[a] = if j == half { 0.0 } else { signed as f64 };
        }
        visit(idx, &k[..dims], kept);
    }
}

/// Multiply by a real Fourier symbol. Modes removed by dealiasing pass the
/// `kept = false` flag so the symbol can decide what to do with them.
pub(crate) fn apply_real_symbol(
    f: &ScalarField,
    symbol: impl Fn(&[f64], bool) -> f64,
) -> ScalarField {
    let mut spec = forward(f);
    for_each_mode(f.grid(), |idx, k, kept| spec[idx] *= symbol(k, kept));
    inverse_real(f.grid(), spec)
}

/// Symbol of `∂_j` for complex coordinate `j`: `½(i·k_{x^j} + k_{y^j})`.
fn holomorphic_symbol(k: &[f64], j: usize) -> Complex64 {
    Complex64::new(0.5 * k[2 * j + 1], 0.5 * k[2 * j])
}

/// Flat `∂∂̄f`: `f_{jk̄} = ¼(∂_{x^j}∂_{x^k} + ∂_{y^j}∂_{y^k})f + (i/4)(∂_{x^j}∂_{y^k} − ∂_{y^j}∂_{x^k})f`.
pub fn complex_hessian(f: &ScalarField) -> HermitianField {
    let grid = f.grid();
    let n = grid.n_complex();
    let spec = forward(f);
    let mut entries: Vec<Mat> = vec![Mat::zero(); grid.len()];
    for j in 0..n {
        for l in j..n {
            let mut out = vec![Complex64::default(); grid.len()];
            for_each_mode(grid, |idx, k, kept| {
                if kept {
                    let sigma = -holomorphic_symbol(k, j) * holomorphic_symbol(k, l).conj();
                    out[idx] = sigma * spec[idx];
                }
            });
            let field = inverse(grid, out);
            for (m, v) in entries.iter_mut().zip(field) {
                if j == l {
                    m.0[j][j] = Complex64::new(v.re, 0.0);
                } else {
                    m.0[j][l] = v;
                    m.0[l][j] = v.conj();
                }
            }
        }
    }
    HermitianField::from_entries(grid, entries)
}

/// `Δ_flat f = Σ_j ∂_j∂_j̄ f`, symbol `−¼|k|²`.
pub fn flat_laplacian(f: &ScalarField) -> ScalarField {
    apply_real_symbol(f, |k, kept| if kept { -0.25 * dot(k) } else { 0.0 })
}

/// Pseudo-inverse of `Δ_flat`: modes with zero symbol map to zero.
pub fn flat_laplacian_pinv(f: &ScalarField) -> ScalarField {
    apply_real_symbol(f, |k, kept| {
        let s = 0.25 * dot(k);
        if kept && s > 0.0 {
            -1.0 / s
        } else {
            0.0
        }
    })
}

/// Inverse of `−rΔ_flat + 1`.
pub fn flat_helmholtz_inv(f: &ScalarField, r: f64) -> ScalarField {
    apply_real_symbol(f, |k, kept| {
        let k2 = if kept { dot(k) } else { 0.0 };
        1.0 / (1.0 + 0.25 * r * k2)
    })
}

fn dot(k: &[f64]) -> f64 {
    k.iter().map(|x| x * x).sum()
}
