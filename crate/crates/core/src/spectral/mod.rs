//! Finite Hermite expansions in one and two dimensions.
//!
//! A [`SpectralFunction`] is `f = Σ c_n h_n` (d = 1) or `Σ c_{ij} h_i ⊗ h_j`
//! (d = 2) with `h_n` the L²-orthonormal Hermite functions. Differentiation
//! and multiplication by a coordinate act exactly on the coefficients through
//! the ladder identities
//!
//! ```text
//! h_n'  = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}
//! x h_n = sqrt(n/2) h_{n-1} + sqrt((n+1)/2) h_{n+1}
//! ```
//!
//! so every derivative used downstream is exact up to rounding, and only the
//! integrals of non-polynomial weights go through quadrature.

pub mod basis;
pub mod integrate;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use basis::{gaussian_factor, hermite_functions, scaled_complex_hermite, ScaledComplex};

pub use integrate::{integrate_table, integrate_weighted_squares, mass, weighted_norm, Integral, NormEstimate, Region};

/// Largest Hermite degree accepted per axis for user-constructed expansions.
pub const N_TRUNC_CAP: usize = 64;

/// Margin added to the classical turning point `sqrt(2N+1)` beyond which an
/// expansion of degree `N` is treated as numerically zero.
pub const TAIL_MARGIN: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunction {
    dim: usize,
    /// Number of coefficients per axis (`[n, 1]` in one dimension).
    shape: [usize; 2],
    /// Row-major coefficients, `coeffs[i * shape[1] + j] = c_{ij}`.
    coeffs: Vec<f64>,
}

/// Result of evaluating the entire extension at a complex point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEval {
    pub scaled: ScaledComplex,
    /// Set when `|F(z)|` exceeds the floating range; use `log_modulus` then.
    pub overflow: bool,
}

impl ComplexEval {
    pub fn value(&self) -> Option<Complex64> {
        if self.overflow {
            None
        } else {
            self.scaled.to_complex()
        }
    }

    pub fn log_modulus(&self) -> f64 {
        self.scaled.log_modulus()
    }
}

fn check_coeffs(coeffs: &[f64]) -> Result<()> {
    if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
        return Err(Error::domain("coeffs", format!("non-finite coefficient {bad}")));
    }
    Ok(())
}

impl SpectralFunction {
    /// One-dimensional expansion `Σ c_n h_n`, degree at most [`N_TRUNC_CAP`].
    pub fn new_1d(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() > N_TRUNC_CAP + 1 {
            return Err(Error::domain(
                "coeffs",
                format!("degree {} exceeds truncation cap {N_TRUNC_CAP}", coeffs.len() - 1),
            ));
        }
        check_coeffs(&coeffs)?;
        Ok(Self::from_raw(1, [coeffs.len().max(1), 1], pad(coeffs, 1)))
    }

    /// Two-dimensional expansion with `rows × cols` row-major coefficients.
    pub fn new_2d(rows: usize, cols: usize, coeffs: Vec<f64>) -> Result<Self> {
        if rows.max(cols) > N_TRUNC_CAP + 1 {
            return Err(Error::domain("coeffs", format!("shape {rows}x{cols} exceeds truncation cap")));
        }
        if rows * cols != coeffs.len() || rows == 0 || cols == 0 {
            return Err(Error::domain(
                "coeffs",
                format!("expected {rows}x{cols} coefficients, got {}", coeffs.len()),
            ));
        }
        check_coeffs(&coeffs)?;
        Ok(Self::from_raw(2, [rows, cols], coeffs))
    }

    pub(crate) fn from_raw(dim: usize, shape: [usize; 2], coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(shape[0] * shape[1], coeffs.len());
        SpectralFunction { dim, shape, coeffs }
    }

    pub fn zero(dim: usize) -> Result<Self> {
        match dim {
            1 => Self::new_1d(vec![0.0]),
            2 => Self::new_2d(1, 1, vec![0.0]),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    /// The basis function `h_n` (d = 1).
    pub fn hermite(n: usize) -> Result<Self> {
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        Self::new_1d(c)
    }

    /// The basis function `h_i ⊗ h_j` (d = 2).
    pub fn hermite_2d(i: usize, j: usize) -> Result<Self> {
        let mut c = vec![0.0; (i + 1) * (j + 1)];
        c[i * (j + 1) + j] = 1.0;
        Self::new_2d(i + 1, j + 1, c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i < self.shape[0] && j < self.shape[1] {
            self.coeffs[i * self.shape[1] + j]
        } else {
            0.0
        }
    }

    /// Highest Hermite degree along any axis.
    pub fn max_degree(&self) -> usize {
        self.shape[0].max(if self.dim == 2 { self.shape[1] } else { 1 }) - 1
    }

    /// `‖f‖²_{L²}` by Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Radius beyond which the expansion is numerically negligible.
    pub fn cutoff_radius(&self) -> f64 {
        (2.0 * self.max_degree() as f64 + 1.0).sqrt() + TAIL_MARGIN
    }

    fn check_point_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }

    /// `f(x)` at a real point.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_point_dim(x.len())?;
        Ok(match self.dim {
            1 => self.eval_1d(x[0]),
            _ => self.eval_2d(x[0], x[1]),
        })
    }

    pub(crate) fn eval_1d(&self, x: f64) -> f64 {
        let mut h = vec![0.0; self.shape[0]];
        hermite_functions(x, &mut h);
        h.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn eval_2d(&self, x: f64, y: f64) -> f64 {
        let mut hx = vec![0.0; self.shape[0]];
        let mut hy = vec![0.0; self.shape[1]];
        hermite_functions(x, &mut hx);
        hermite_functions(y, &mut hy);
        self.contract_2d(&hx, &hy)
    }

    pub(crate) fn contract_2d(&self, hx: &[f64], hy: &[f64]) -> f64 {
        let cols = self.shape[1];
        let mut acc = 0.0;
        for (i, row) in self.coeffs.chunks(cols).enumerate() {
            let inner: f64 = row.iter().zip(hy).map(|(c, h)| c * h).sum();
            acc += hx[i] * inner;
        }
        acc
    }

    /// The entire extension `F(z)` at a complex point.
    ///
    /// The Gaussian factor `e^{-z²/2}` is kept in log form, so the returned
    /// log modulus stays meaningful even when `|F(z)|` overflows.
    pub fn eval_complex(&self, z: &[Complex64]) -> Result<ComplexEval> {
        self.check_point_dim(z.len())?;
        let scaled = match self.dim {
            1 => {
                let (p, ls) = scaled_complex_hermite(z[0], self.shape[0]);
                let sum: Complex64 = p.iter().zip(&self.coeffs).map(|(a, &c)| a * c).sum();
                let (phase, lg) = gaussian_factor(z[0]);
                ScaledComplex {
                    mantissa: sum * phase,
                    log_scale: ls + lg,
                }
            }
            _ => {
                let (px, lx) = scaled_complex_hermite(z[0], self.shape[0]);
                let (py, ly) = scaled_complex_hermite(z[1], self.shape[1]);
                let cols = self.shape[1];
                let mut sum = Complex64::new(0.0, 0.0);
                for (i, row) in self.coeffs.chunks(cols).enumerate() {
                    let inner: Complex64 = row.iter().zip(&py).map(|(&c, p)| p * c).sum();
                    sum += px[i] * inner;
                }
                let (phx, gx) = gaussian_factor(z[0]);
                let (phy, gy) = gaussian_factor(z[1]);
                ScaledComplex {
                    mantissa: sum * phx * phy,
                    log_scale: lx + ly + gx + gy,
                }
            }
        };
        let overflow = scaled.log_modulus() > f64::MAX.ln() - 1.0;
        Ok(ComplexEval { scaled, overflow })
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.dim {
            return Err(Error::domain("axis", format!("axis {axis} out of range for d = {}", self.dim)));
        }
        Ok(())
    }

    /// Applies a one-dimensional ladder map `c -> c'` (length grows by one)
    /// along `axis`.
    fn ladder(&self, axis: usize, sign: f64) -> Result<Self> {
        self.check_axis(axis)?;
        let step = |c: &[f64], out: &mut [f64]| {
            for (n, &cn) in c.iter().enumerate() {
                if cn == 0.0 {
                    continue;
                }
                let nf = n as f64;
                if n > 0 {
                    out[n - 1] += cn * (nf / 2.0).sqrt();
                }
                out[n + 1] += sign * cn * ((nf + 1.0) / 2.0).sqrt();
            }
        };
        let [rows, cols] = self.shape;
        if self.dim == 1 {
            let mut out = vec![0.0; rows + 1];
            step(&self.coeffs, &mut out);
            return Ok(Self::from_raw(1, [rows + 1, 1], out));
        }
        if axis == 0 {
            let mut out = vec![0.0; (rows + 1) * cols];
            let mut col = vec![0.0; rows];
            let mut res = vec![0.0; rows + 1];
            for j in 0..cols {
                for i in 0..rows {
                    col[i] = self.coeffs[i * cols + j];
                }
                res.iter_mut().for_each(|v| *v = 0.0);
                step(&col, &mut res);
                for i in 0..=rows {
                    out[i * cols + j] = res[i];
                }
            }
            Ok(Self::from_raw(2, [rows + 1, cols], out))
        } else {
            let mut out = vec![0.0; rows * (cols + 1)];
            for i in 0..rows {
                step(
                    &self.coeffs[i * cols..(i + 1) * cols],
                    &mut out[i * (cols + 1)..(i + 1) * (cols + 1)],
                );
            }
            Ok(Self::from_raw(2, [rows, cols + 1], out))
        }
    }

    /// Exact partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Result<Self> {
        self.ladder(axis, -1.0)
    }

    /// Exact product with the coordinate `x_axis`.
    pub fn multiply_coordinate(&self, axis: usize) -> Result<Self> {
        self.ladder(axis, 1.0)
    }

    /// `∂^β f` for a multi-index `β` of length `dim`.
    pub fn partial(&self, beta: &[usize]) -> Result<Self> {
        self.check_point_dim(beta.len())?;
        let mut g = self.clone();
        for (axis, &k) in beta.iter().enumerate() {
            for _ in 0..k {
                g = g.derivative(axis)?;
            }
        }
        Ok(g)
    }

    /// Projection onto the first `n` Hermite functions per axis.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.max(1);
        let rows = self.shape[0].min(n);
        let cols = if self.dim == 2 { self.shape[1].min(n) } else { 1 };
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = self.coeff(i, j);
            }
        }
        Self::from_raw(self.dim, [rows, cols], out)
    }

    /// Same expansion with coefficients mapped through `op(index, c)`; the
    /// index is the total degree `i + j`.
    pub fn map_by_degree(&self, op: impl Fn(usize, f64) -> f64) -> Self {
        let cols = self.shape[1];
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let deg = if self.dim == 1 { k } else { k / cols + k % cols };
                op(deg, c)
            })
            .collect();
        Self::from_raw(self.dim, self.shape, coeffs)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_by_degree(|_, c| factor * c)
    }

    /// Coefficients drawn uniformly from `[-1, 1]` (seeded), `n` per axis.
    pub fn random(dim: usize, n: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        match dim {
            1 => Self::new_1d((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()),
            2 => Self::new_2d(n, n, (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect()),
            d => Err(Error::UnsupportedDimension(d)),
        }
    }
}

fn pad(mut coeffs: Vec<f64>, min: usize) -> Vec<f64> {
    if coeffs.len() < min {
        coeffs.resize(min, 0.0);
    }
    coeffs
}

/// All multi-indices `β ∈ ℕ₀^d` with `|β| = m`, in lexicographic order.
pub fn multi_indices(dim: usize, m: usize) -> Vec<Vec<usize>> {
    match dim {
        1 => vec![vec![m]],
        _ => (0..=m).rev().map(|a| vec![a, m - a]).collect(),
    }
}

/// `β! = Π β_i!`
pub fn multi_factorial(beta: &[usize]) -> f64 {
    beta.iter().map(|&b| (1..=b).map(|k| k as f64).product::<f64>()).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn eval_ground_state_and_trivial_cases() {
        let h0 = SpectralFunction::hermite(0).unwrap();
        assert_abs_diff_eq!(h0.eval(&[0.0]).unwrap(), PI.powf(-0.25), epsilon = 1e-15);
        assert_abs_diff_eq!(h0.eval(&[0.0]).unwrap(), 0.7511, epsilon = 1e-4);
        let z = SpectralFunction::zero(1).unwrap();
        assert_eq!(z.eval(&[1.3]).unwrap(), 0.0);
        let h1 = SpectralFunction::hermite(1).unwrap();
        assert_eq!(h1.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        let h0 = SpectralFunction::hermite(0).unwrap();
        assert_eq!(
            h0.eval(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
    }

    #[test]
    fn complex_ground_state_on_imaginary_axis() {
        let h0 = SpectralFunction::hermite(0).unwrap();
        let v = h0.eval_complex(&[Complex64::new(0.0, 1.0)]).unwrap().value().unwrap();
        assert_abs_diff_eq!(v.re, PI.powf(-0.25) * 0.5f64.exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(v.re, 1.2384, epsilon = 1e-4);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        let v0 = h0.eval_complex(&[Complex64::new(0.0, 0.0)]).unwrap().value().unwrap();
        assert_abs_diff_eq!(v0.re, PI.powf(-0.25), epsilon = 1e-15);
    }

    #[test]
    fn complex_overflow_is_flagged() {
        let h0 = SpectralFunction::hermite(0).unwrap();
        let e = h0.eval_complex(&[Complex64::new(0.0, 40.0)]).unwrap();
        assert!(e.overflow);
        assert!(e.value().is_none());
        assert_abs_diff_eq!(e.log_modulus(), 800.0 + PI.powf(-0.25).ln(), epsilon = 1e-9);
    }

    #[test]
    fn ladder_identities() {
        let d0 = SpectralFunction::hermite(0).unwrap().derivative(0).unwrap();
        assert_abs_diff_eq!(d0.coeff(1, 0), -FRAC_1_SQRT_2, epsilon = 1e-15);
        let d1 = SpectralFunction::hermite(1).unwrap().derivative(0).unwrap();
        assert_abs_diff_eq!(d1.coeff(0, 0), FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(d1.coeff(2, 0), -1.0, epsilon = 1e-15);
        let x0 = SpectralFunction::hermite(0).unwrap().multiply_coordinate(0).unwrap();
        assert_abs_diff_eq!(x0.coeff(1, 0), FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(x0.norm_sq(), 0.5, epsilon = 1e-15);
        assert!(SpectralFunction::zero(1).unwrap().multiply_coordinate(0).unwrap().is_zero());
    }

    #[test]
    fn derivative_matches_central_differences() {
        let f = SpectralFunction::new_1d(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.25]).unwrap();
        let df = f.derivative(0).unwrap();
        let h = 1e-5;
        for k in 0..40 {
            let x = -4.0 + 0.2 * k as f64;
            let fd = (f.eval_1d(x + h) - f.eval_1d(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(df.eval_1d(x), fd, epsilon = 1e-8);
        }
        // second derivative of h0 at the origin: -π^{-1/4}
        let d2 = SpectralFunction::hermite(0).unwrap().partial(&[2]).unwrap();
        let h0 = SpectralFunction::hermite(0).unwrap();
        let hh = 1e-4;
        let fd2 = (h0.eval_1d(hh) - 2.0 * h0.eval_1d(0.0) + h0.eval_1d(-hh)) / (hh * hh);
        assert_abs_diff_eq!(d2.eval_1d(0.0), -PI.powf(-0.25), epsilon = 1e-12);
        assert_abs_diff_eq!(d2.eval_1d(0.0), fd2, epsilon = 1e-6);
    }

    #[test]
    fn two_dimensional_ladder_acts_per_axis() {
        let f = SpectralFunction::hermite_2d(1, 2).unwrap();
        let dx = f.derivative(0).unwrap();
        let dy = f.derivative(1).unwrap();
        let (x, y, h) = (0.4, -0.7, 1e-5);
        let fdx = (f.eval(&[x + h, y]).unwrap() - f.eval(&[x - h, y]).unwrap()) / (2.0 * h);
        let fdy = (f.eval(&[x, y + h]).unwrap() - f.eval(&[x, y - h]).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(dx.eval(&[x, y]).unwrap(), fdx, epsilon = 1e-8);
        assert_abs_diff_eq!(dy.eval(&[x, y]).unwrap(), fdy, epsilon = 1e-8);
        assert!(f.derivative(2).is_err());
    }

    #[test]
    fn truncation_cap_enforced() {
        assert!(SpectralFunction::new_1d(vec![1.0; N_TRUNC_CAP + 1]).is_ok());
        assert!(SpectralFunction::new_1d(vec![1.0; N_TRUNC_CAP + 2]).is_err());
        assert!(SpectralFunction::new_1d(vec![f64::NAN]).is_err());
    }

    #[test]
    fn multi_index_sums() {
        // Σ_{|β|=m} 1/β! = d^m / m!
        for m in 0..8 {
            let s: f64 = multi_indices(2, m).iter().map(|b| 1.0 / multi_factorial(b)).sum();
            let mf: f64 = (1..=m).map(|k| k as f64).product();
            assert_abs_diff_eq!(s, 2f64.powi(m as i32) / mf, epsilon = 1e-12);
        }
    }
}
