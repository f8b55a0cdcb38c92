//! Observability constants of the harmonic oscillator flow on a sensor set.
//!
//! With `λ_n = n + ½` and `A_{mn} = ∫_ω h_m h_n`, the time integral of the
//! observed energy is the quadratic form of
//!
//! ```text
//! G_{mn} = A_{mn} (1 − e^{−(λ_m+λ_n)T}) / (λ_m+λ_n),
//! ```
//!
//! and the best constant in `‖T(T)g‖² ≤ C ∫₀ᵀ ‖T(t)g‖²_{L²(ω)} dt` over the
//! span of `h_0..h_{N−1}` is the largest eigenvalue of the pencil
//! `(diag e^{−2λ_n T}, G)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SensorSet;
use crate::spectral::basis::hermite_functions;
use crate::spectral::integrate::region_nodes;
use crate::spectral::Region;

/// Largest truncation accepted by the pencil solver.
pub const N_TRUNC_MAX: usize = 48;
/// Largest entrywise change tolerated between the two quadrature levels.
pub const MASS_MATRIX_TOL: f64 = 1e-10;

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > N_TRUNC_MAX {
        return Err(Error::domain("n_trunc", format!("{n} not in 1..={N_TRUNC_MAX}")));
    }
    Ok(())
}

pub fn eigenvalue(n: usize) -> f64 {
    n as f64 + 0.5
}

fn mass_matrix_level(pieces: &[(f64, f64)], n: usize, cutoff: f64, level: u32) -> Result<DMatrix<f64>> {
    let nodes = region_nodes(&Region::intervals(pieces.to_vec()), 1, cutoff, 0, level)?;
    let chunks: Vec<DMatrix<f64>> = nodes
        .points
        .par_chunks(256)
        .zip(nodes.weights.par_chunks(256))
        .map(|(xs, ws)| {
            let mut a = DMatrix::zeros(n, n);
            let mut h = vec![0.0; n];
            for (&x, &w) in xs.iter().zip(ws) {
                hermite_functions(x, &mut h);
                for i in 0..n {
                    let wi = w * h[i];
                    for j in 0..=i {
                        a[(i, j)] += wi * h[j];
                    }
                }
            }
            a
        })
        .collect();
    let mut a = DMatrix::zeros(n, n);
    for c in chunks {
        a += c;
    }
    for i in 0..n {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
    Ok(a)
}

/// `A_{mn} = ∫_ω h_m h_n` for `m, n < N` (d = 1).
pub fn mass_matrix(omega: &SensorSet, n: usize) -> Result<DMatrix<f64>> {
    check_n(n)?;
    if omega.dim() != 1 {
        return Err(Error::UnsupportedDimension(omega.dim()));
    }
    if omega.is_whole() {
        return Ok(DMatrix::identity(n, n));
    }
    let cutoff = (2.0 * n as f64 + 1.0).sqrt() + 15.0;
    let pieces = omega.pieces_in(-cutoff, cutoff)?;
    let coarse = mass_matrix_level(&pieces, n, cutoff, 0)?;
    let fine = mass_matrix_level(&pieces, n, cutoff, 1)?;
    let change = (&fine - &coarse).amax();
    if change > MASS_MATRIX_TOL {
        return Err(Error::QuadratureNotConverged {
            what: "mass_matrix",
            rel_change: change,
        });
    }
    Ok(fine)
}

/// `G_{mn} = A_{mn}(1 − e^{−(λ_m+λ_n)T})/(λ_m+λ_n)`.
pub fn gramian_from_mass(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        let l = eigenvalue(i) + eigenvalue(j);
        a[(i, j)] * -(-l * t).exp_m1() / l
    })
}

pub fn observability_gramian(omega: &SensorSet, t: f64, n: usize) -> Result<DMatrix<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain("T", format!("{t} must be ≥ 0")));
    }
    Ok(gramian_from_mass(&mass_matrix(omega, n)?, t))
}

/// Smallest eigenvalue relative to the largest (PSD check).
pub fn min_relative_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let e = SymmetricEigen::new(g.clone()).eigenvalues;
    let max = e.amax();
    if max == 0.0 {
        return 0.0;
    }
    e.min() / max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PencilSolution {
    pub c_obs: f64,
    /// Condition number of the Gramian.
    pub conditioning: f64,
}

/// Largest eigenvalue of `(diag e^{−2λ_n T}, G)` via Cholesky reduction.
pub fn pencil_max(g: &DMatrix<f64>, t: f64) -> Result<PencilSolution> {
    let n = g.nrows();
    let eig = SymmetricEigen::new(g.clone()).eigenvalues;
    let conditioning = eig.max() / eig.min();
    let chol = g.clone().cholesky().ok_or_else(|| {
        Error::numerical(
            "empirical_constant",
            "Gramian is not positive definite: ω is too thin for this truncation",
        )
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("empirical_constant", "singular Cholesky factor"))?;
    let e = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| (-2.0 * eigenvalue(i) * t).exp()));
    let mut m = &linv * e * linv.transpose();
    m = (&m + m.transpose()) * 0.5;
    let c_obs = SymmetricEigen::new(m).eigenvalues.max();
    if !c_obs.is_finite() || !(conditioning > 0.0) {
        return Err(Error::numerical("empirical_constant", "pencil eigenvalue is not finite"));
    }
    Ok(PencilSolution { c_obs, conditioning })
}

pub fn empirical_constant(omega: &SensorSet, t: f64, n: usize) -> Result<PencilSolution> {
    if !(t > 0.0) {
        return Err(Error::domain("T", format!("{t} must be > 0")));
    }
    pencil_max(&observability_gramian(omega, t, n)?, t)
}

/// `max_n 2λ_n e^{−2λ_n T}/(1 − e^{−2λ_n T})` (the pencil for ω = ℝ).
pub fn whole_line_constant(t: f64, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let l2 = 2.0 * eigenvalue(i);
            l2 * (-l2 * t).exp() / -(-l2 * t).exp_m1()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub n: f64,
    /// `4r₂/(1−s)`
    pub exponent: f64,
    pub finite: bool,
}

/// Smallest `N ≥ 1` with `log C(T) ≤ log N + N T^{−p}`, `p = 4r₂/(1−s)`, on
/// every grid point.
pub fn bound_shape_fit(t_grid: &[f64], c_obs: &[f64], r2: f64, s: f64) -> Result<ShapeFit> {
    if t_grid.len() != c_obs.len() || t_grid.is_empty() {
        return Err(Error::domain("t_grid", "T grid and constants must be nonempty and of equal length"));
    }
    if !(0.0..1.0).contains(&s) || !(r2 >= 0.0) {
        return Err(Error::domain("s", format!("need r₂ ≥ 0 and s ∈ [0, 1), got r₂ = {r2}, s = {s}")));
    }
    let p = 4.0 * r2 / (1.0 - s);
    let mut n_fit: f64 = 1.0;
    for (&t, &c) in t_grid.iter().zip(c_obs) {
        let target = c.ln();
        let g = |n: f64| n.ln() + n * t.powf(-p);
        if g(n_fit) >= target {
            continue;
        }
        // g is increasing in N; bisect in log N.
        let (mut lo, mut hi) = (n_fit.ln(), n_fit.ln() + 1.0);
        while g(hi.exp()) < target {
            lo = hi;
            hi *= 2.0;
            if hi > 700.0 {
                return Ok(ShapeFit {
                    n: f64::INFINITY,
                    exponent: p,
                    finite: false,
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid.exp()) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        n_fit = hi.exp();
    }
    Ok(ShapeFit {
        n: n_fit,
        exponent: p,
        finite: n_fit.is_finite(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub omega: String,
    pub n_trunc: usize,
    pub t_grid: Vec<f64>,
    pub c_obs: Vec<f64>,
    pub conditioning: Vec<f64>,
    pub min_relative_eigenvalue: Vec<f64>,
    pub nonincreasing: bool,
    pub r2: f64,
    pub s: f64,
    pub fit: ShapeFit,
}

/// Constants on a T grid and the fitted bound shape.
pub fn observability_report(omega: &SensorSet, t_grid: &[f64], n: usize, r2: f64, s: f64) -> Result<ObservabilityReport> {
    if t_grid.is_empty() {
        return Err(Error::domain("t_grid", "empty T grid"));
    }
    let a = mass_matrix(omega, n)?;
    let mut c_obs = Vec::new();
    let mut conditioning = Vec::new();
    let mut min_rel = Vec::new();
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::domain("t_grid", format!("T = {t} must be > 0")));
        }
        let g = gramian_from_mass(&a, t);
        min_rel.push(min_relative_eigenvalue(&g));
        let sol = pencil_max(&g, t)?;
        c_obs.push(sol.c_obs);
        conditioning.push(sol.conditioning);
    }
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&i, &j| t_grid[i].total_cmp(&t_grid[j]));
    let nonincreasing = order
        .windows(2)
        .all(|w| c_obs[w[1]] <= c_obs[w[0]] * (1.0 + 1e-10));
    let fit = bound_shape_fit(t_grid, &c_obs, r2, s)?;
    Ok(ObservabilityReport {
        omega: omega.description.clone(),
        n_trunc: n,
        t_grid: t_grid.to_vec(),
        c_obs,
        conditioning,
        min_relative_eigenvalue: min_rel,
        nonincreasing,
        r2,
        s,
        fit,
    })
}
