//! Model smoothing semigroups and their Gelfand-Shilov certificates.
//!
//! Two flows are provided: the harmonic oscillator `H = ½(-Δ + |x|²)`,
//! diagonal in the Hermite basis with eigenvalues `|n| + d/2`, and the 1D
//! fractional Shubin operators `(½((-d²/dx²)^m + x^{2k}))^θ` by Galerkin
//! truncation. The factor ½ makes `k = m = θ = 1` coincide with `H`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::spectral::{integrate_table, multi_indices, Region, SpectralFunction, N_TRUNC_CAP};

/// Largest `n + |β|` used when fitting or validating bounds.
pub const FIT_ORDER_CAP: usize = 12;
/// Relative change between full and halved Galerkin truncation above which
/// a flow is flagged as truncation-unstable.
pub const GALERKIN_STABILITY_TOL: f64 = 1e-4;
/// Relative quadrature refinement tolerance for grid norms.
pub const NORM_TOL: f64 = 1e-8;

fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Constants taken from a known theoretical result.
    Declared,
    Fitted,
}

/// Constants `(C, t₀, ν, μ, r₁, r₂)` of the smoothing estimate
///
/// ```text
/// ‖(1+|x|²)^{n/2} ∂^β T(t)g‖ ≤ C^{1+n+|β|} t^{-r₁-r₂(n+|β|)} (n!)^ν (|β|!)^μ ‖g‖,  t ∈ (0, t₀).
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCertificate {
    pub c: f64,
    pub t0: f64,
    pub nu: f64,
    pub mu: f64,
    pub r1: f64,
    pub r2: f64,
    pub provenance: Provenance,
    /// Times the constants were fitted on (empty for declared certificates).
    pub fitted_on: Vec<f64>,
}

impl SmoothingCertificate {
    pub fn declared(c: f64, t0: f64, nu: f64, mu: f64, r1: f64, r2: f64) -> Result<Self> {
        let cert = SmoothingCertificate {
            c,
            t0,
            nu,
            mu,
            r1,
            r2,
            provenance: Provenance::Declared,
            fitted_on: Vec::new(),
        };
        cert.validate()?;
        if nu + mu < 1.0 {
            return Err(Error::domain("nu", format!("declared certificates need ν + μ ≥ 1, got {}", nu + mu)));
        }
        Ok(cert)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c >= 1.0) {
            return Err(Error::domain("c", format!("{} < 1", self.c)));
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(Error::domain("t0", format!("{} not in (0, 1)", self.t0)));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::domain("nu", format!("{} < 0", self.nu)));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::domain("mu", format!("{} not in [0, 1)", self.mu)));
        }
        if !(self.r1 >= 0.0) || !(self.r2 > 0.0) {
            return Err(Error::domain("r2", format!("need r1 ≥ 0 and r2 > 0, got ({}, {})", self.r1, self.r2)));
        }
        Ok(())
    }

    /// `ln` of the right-hand side without the `‖g‖` factor.
    pub fn log_rhs(&self, t: f64, n: usize, beta_abs: usize) -> f64 {
        let k = (n + beta_abs) as f64;
        (1.0 + k) * self.c.ln() - (self.r1 + self.r2 * k) * t.ln()
            + self.nu * ln_factorial(n)
            + self.mu * ln_factorial(beta_abs)
    }
}

/// Constants of `‖(1+|x|²)^{δn/2} ∂^β f‖ ≤ D₁ D₂^{n+|β|} (n!)^ν (|β|!)^μ`.
///
/// `weight_delta = 1` is the plain weighted estimate; a bound produced by
/// [`delta_weight_transfer`] carries the weaker weight and the exponent
/// pair `(δν, μ)`, so that `s = nu + mu` in either case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSBound {
    pub d1: f64,
    pub d2: f64,
    pub nu: f64,
    pub mu: f64,
    pub weight_delta: f64,
    pub derived_from: Option<(SmoothingCertificate, f64)>,
}

impl GSBound {
    pub fn new(d1: f64, d2: f64, nu: f64, mu: f64) -> Result<Self> {
        if !(d1 >= 0.0 && d1.is_finite()) {
            return Err(Error::domain("d1", format!("{d1} is not a finite nonnegative number")));
        }
        if !(d2 >= 1.0 && d2.is_finite()) {
            return Err(Error::domain("d2", format!("{d2} < 1")));
        }
        Ok(GSBound {
            d1,
            d2,
            nu,
            mu,
            weight_delta: 1.0,
            derived_from: None,
        })
    }

    /// `D₁ = C t^{-r₁} ‖g‖`, `D₂ = C t^{-r₂}`.
    pub fn from_certificate(cert: &SmoothingCertificate, t: f64, g_norm: f64) -> Result<Self> {
        if !(t > 0.0 && t < cert.t0) {
            return Err(Error::domain("t", format!("{t} not in (0, t0 = {})", cert.t0)));
        }
        let mut b = GSBound::new(
            cert.c * t.powf(-cert.r1) * g_norm,
            cert.c * t.powf(-cert.r2),
            cert.nu,
            cert.mu,
        )?;
        b.derived_from = Some((cert.clone(), t));
        Ok(b)
    }

    /// `s = δν + μ` (the stored `nu` already includes the factor δ).
    pub fn s(&self) -> f64 {
        self.nu + self.mu
    }

    /// `ln(D₁ D₂^{n+|β|} (n!)^ν (|β|!)^μ)`.
    pub fn log_rhs(&self, n: usize, beta_abs: usize) -> f64 {
        self.d1.ln()
            + (n + beta_abs) as f64 * self.d2.ln()
            + self.nu * ln_factorial(n)
            + self.mu * ln_factorial(beta_abs)
    }
}

/// Harmonic oscillator flow: `c_n ↦ e^{-(|n|+d/2)t} c_n`.
pub fn harmonic_flow(g: &SpectralFunction, t: f64) -> Result<SpectralFunction> {
    if !(t >= 0.0) {
        return Err(Error::domain("t", format!("{t} < 0")));
    }
    let half_d = g.dim() as f64 / 2.0;
    Ok(g.map_by_degree(|n, c| c * (-(n as f64 + half_d) * t).exp()))
}

/// Output of a Galerkin Shubin flow.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinFlow {
    pub output: SpectralFunction,
    /// `‖u_N − u_{N/2}‖ / ‖u_N‖`.
    pub stability: f64,
    pub unstable: bool,
}

struct Spectral {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

type SpectralCache = Mutex<HashMap<(usize, usize, u64, usize), Arc<Spectral>>>;

fn spectral_cache() -> &'static SpectralCache {
    static CACHE: OnceLock<SpectralCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Galerkin matrix of `½((-d²)^m + x^{2k})` on `span{h_0..h_{n-1}}`.
///
/// Products are formed in a basis enlarged by `max(k, m)` so that the
/// leading `n × n` block is exact.
pub fn shubin_matrix(k: usize, m: usize, n: usize) -> DMatrix<f64> {
    let big = n + k.max(m) + 1;
    let mut x = DMatrix::<f64>::zeros(big, big);
    let mut d = DMatrix::<f64>::zeros(big, big);
    for j in 1..big {
        let a = (j as f64 / 2.0).sqrt();
        x[(j - 1, j)] = a;
        x[(j, j - 1)] = a;
        d[(j - 1, j)] = a;
        d[(j, j - 1)] = -a;
    }
    let minus_d2 = d.transpose() * &d;
    let mut p = DMatrix::<f64>::identity(big, big);
    for _ in 0..m {
        p = &p * &minus_d2;
    }
    let x2 = &x * &x;
    let mut v = DMatrix::<f64>::identity(big, big);
    for _ in 0..k {
        v = &v * &x2;
    }
    let a = (p + v) * 0.5;
    let mut out = a.view((0, 0), (n, n)).into_owned();
    // Symmetrize against rounding in the products.
    out = (&out + out.transpose()) * 0.5;
    out
}

fn shubin_spectral(k: usize, m: usize, theta: f64, n: usize) -> Arc<Spectral> {
    let key = (k, m, theta.to_bits(), n);
    if let Some(s) = spectral_cache().lock().expect("spectral cache poisoned").get(&key) {
        return s.clone();
    }
    let eig = shubin_matrix(k, m, n).symmetric_eigen();
    let values = eig.eigenvalues.map(|l| l.max(0.0).powf(theta));
    let s = Arc::new(Spectral {
        vectors: eig.eigenvectors,
        values,
    });
    spectral_cache().lock().expect("spectral cache poisoned").insert(key, s.clone());
    s
}

fn galerkin_apply(g: &SpectralFunction, t: f64, k: usize, m: usize, theta: f64, n: usize) -> Vec<f64> {
    let s = shubin_spectral(k, m, theta, n);
    let c = DVector::from_iterator(n, (0..n).map(|i| g.coeff(i, 0)));
    let modal = s.vectors.transpose() * c;
    let damped = modal.zip_map(&s.values, |a, l| a * (-t * l).exp());
    (&s.vectors * damped).iter().copied().collect()
}

/// Eigenvalues of the truncated operator `(½((-d²)^m + x^{2k}))^θ`, ascending.
pub fn shubin_eigenvalues(k: usize, m: usize, theta: f64, n: usize) -> Vec<f64> {
    let s = shubin_spectral(k, m, theta, n);
    let mut v: Vec<f64> = s.values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn check_shubin(k: usize, m: usize, theta: f64) -> Result<()> {
    if k == 0 || m == 0 {
        return Err(Error::domain("k", format!("k = {k} and m = {m} must be ≥ 1")));
    }
    if !(theta > 1.0 / (2.0 * m as f64)) || !theta.is_finite() {
        return Err(Error::domain("theta", format!("θ = {theta} must exceed 1/(2m) = {}", 0.5 / m as f64)));
    }
    Ok(())
}

/// `e^{-tA^θ} g` for the truncated Shubin operator on `N_TRUNC_CAP + 1`
/// Hermite functions, with the stability indicator from a run on half as
/// many.
pub fn shubin_galerkin_flow(g: &SpectralFunction, t: f64, k: usize, m: usize, theta: f64) -> Result<GalerkinFlow> {
    if g.dim() != 1 {
        return Err(Error::UnsupportedDimension(g.dim()));
    }
    check_shubin(k, m, theta)?;
    if !(t >= 0.0) {
        return Err(Error::domain("t", format!("{t} < 0")));
    }
    let n = N_TRUNC_CAP + 1;
    let full = galerkin_apply(g, t, k, m, theta, n);
    let half = galerkin_apply(g, t, k, m, theta, n / 2 + 1);
    let norm: f64 = full.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: f64 = full
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let h = half.get(i).copied().unwrap_or(0.0);
            (v - h) * (v - h)
        })
        .sum::<f64>()
        .sqrt();
    let stability = if norm > 0.0 { diff / norm } else { diff };
    Ok(GalerkinFlow {
        output: SpectralFunction::from_raw(1, [n, 1], full),
        stability,
        unstable: stability > GALERKIN_STABILITY_TOL,
    })
}

/// A semigroup usable by validation and experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Flow {
    Harmonic,
    Shubin { k: usize, m: usize, theta: f64 },
}

impl Flow {
    pub fn apply(&self, g: &SpectralFunction, t: f64) -> Result<SpectralFunction> {
        match *self {
            Flow::Harmonic => harmonic_flow(g, t),
            Flow::Shubin { k, m, theta } => {
                if (k, m, theta) == (1, 1, 1.0) && g.dim() == 2 {
                    return harmonic_flow(g, t);
                }
                Ok(shubin_galerkin_flow(g, t, k, m, theta)?.output)
            }
        }
    }

    /// Exponent pair `(ν, μ)` of the flow.
    pub fn exponents(&self) -> Result<(f64, f64)> {
        match *self {
            Flow::Harmonic => shubin_exponents(1, 1, 1.0),
            Flow::Shubin { k, m, theta } => shubin_exponents(k, m, theta),
        }
    }
}

/// `(ν, μ) = (max{1/(2kθ), m/(k+m)}, max{1/(2mθ), k/(k+m)})` in exact
/// rational arithmetic.
pub fn shubin_exponents_exact(k: i64, m: i64, theta: Rational64) -> Result<(Rational64, Rational64)> {
    if k < 1 || m < 1 {
        return Err(Error::domain("k", format!("k = {k} and m = {m} must be ≥ 1")));
    }
    if theta <= Rational64::new(1, 2 * m) {
        return Err(Error::domain("theta", format!("θ = {theta} must exceed 1/(2m)")));
    }
    let one = Rational64::from_integer(1);
    let nu = (one / (Rational64::from_integer(2 * k) * theta)).max(Rational64::new(m, k + m));
    let mu = (one / (Rational64::from_integer(2 * m) * theta)).max(Rational64::new(k, k + m));
    Ok((nu, mu))
}

pub fn shubin_exponents(k: usize, m: usize, theta: f64) -> Result<(f64, f64)> {
    check_shubin(k, m, theta)?;
    let (k, m) = (k as f64, m as f64);
    Ok((
        (1.0 / (2.0 * k * theta)).max(m / (k + m)),
        (1.0 / (2.0 * m * theta)).max(k / (k + m)),
    ))
}

/// One entry `W(n, β) = ‖(1+|x|²)^{δn/2} ∂^β f‖` of a norm grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridNorm {
    pub n: usize,
    pub beta: Vec<usize>,
    pub value: f64,
}

impl GridNorm {
    pub fn order(&self) -> usize {
        self.n + self.beta.iter().sum::<usize>()
    }
}

/// `W(n, β)` for `n ≤ n_max`, `|β| ≤ beta_max`, `n + |β| ≤ order_cap`, on `region`.
pub fn norm_grid(
    f: &SpectralFunction,
    n_max: usize,
    beta_max: usize,
    order_cap: usize,
    delta: f64,
    region: &Region,
) -> Result<Vec<GridNorm>> {
    let mut betas = Vec::new();
    for m in 0..=beta_max.min(order_cap) {
        betas.extend(multi_indices(f.dim(), m));
    }
    let derivs = betas.iter().map(|b| f.partial(b)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SpectralFunction> = derivs.iter().collect();
    let mut pairs = Vec::new();
    let mut keys = Vec::new();
    for (i, b) in betas.iter().enumerate() {
        let ba: usize = b.iter().sum();
        for n in 0..=n_max {
            if n + ba <= order_cap {
                pairs.push((i, n as f64 * delta));
                keys.push((n, i));
            }
        }
    }
    let ints = integrate_table(&refs, &pairs, region)?;
    let mut out = Vec::with_capacity(keys.len());
    for ((n, i), int) in keys.into_iter().zip(ints) {
        if !int.value.is_finite() {
            return Err(Error::numerical("norm_grid", format!("non-finite norm at n = {n}, β = {:?}", betas[i])));
        }
        if !int.converged(NORM_TOL) {
            return Err(Error::QuadratureNotConverged {
                what: "norm_grid",
                rel_change: int.rel_change,
            });
        }
        out.push(GridNorm {
            n,
            beta: betas[i].clone(),
            value: int.value.max(0.0).sqrt(),
        });
    }
    out.sort_by(|a, b| (a.n, &a.beta).cmp(&(b.n, &b.beta)));
    Ok(out)
}

/// A fitted bound together with the per-grid-point slack
/// `ln(D₁D₂^{n+|β|}(n!)^ν(|β|!)^μ) − ln W(n, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBound {
    pub bound: GSBound,
    pub grid: Vec<GridNorm>,
    pub log_slack: Vec<f64>,
}

/// Least `(D₁, D₂)` dominating `W(n, β)` on the grid.
///
/// `D₁` is pinned by the `(0, 0)` entry (`D₁ ≥ ‖f‖` is forced there); `D₂`
/// is then the least value `≥ 1` covering every other grid point. Both are
/// computed in log space.
pub fn fit_gs_bound(f: &SpectralFunction, nu: f64, mu: f64, n_max: usize, beta_max: usize) -> Result<FittedBound> {
    if n_max > FIT_ORDER_CAP || beta_max > FIT_ORDER_CAP {
        return Err(Error::domain("n_max", format!("grid limits must be ≤ {FIT_ORDER_CAP}")));
    }
    let grid = norm_grid(f, n_max, beta_max, FIT_ORDER_CAP, 1.0, &Region::Whole)?;
    let scaled = |g: &GridNorm| {
        let ba: usize = g.beta.iter().sum();
        g.value.ln() - nu * ln_factorial(g.n) - mu * ln_factorial(ba)
    };
    let a = scaled(&grid[0]);
    if !a.is_finite() {
        // Zero function: every bound with D₁ = 0 holds.
        let bound = GSBound::new(0.0, 1.0, nu, mu)?;
        let log_slack = vec![f64::INFINITY; grid.len()];
        return Ok(FittedBound { bound, grid, log_slack });
    }
    let mut b: f64 = 0.0;
    for g in grid.iter().skip(1) {
        let y = scaled(g);
        if y.is_finite() {
            b = b.max((y - a) / g.order() as f64);
        }
    }
    let bound = GSBound::new(a.exp(), b.exp(), nu, mu)?;
    let log_slack = grid
        .iter()
        .map(|g| bound.log_rhs(g.n, g.beta.iter().sum()) - g.value.ln())
        .collect();
    Ok(FittedBound { bound, grid, log_slack })
}

/// Worst ratio `W / rhs` of a bound on a norm grid (weights use the
/// bound's own `weight_delta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub worst_ratio: f64,
    pub worst_n: usize,
    pub worst_beta: Vec<usize>,
    pub points: usize,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

pub fn check_gs_bound(f: &SpectralFunction, bound: &GSBound, n_max: usize, beta_max: usize) -> Result<BoundCheck> {
    let grid = norm_grid(f, n_max, beta_max, n_max + beta_max, bound.weight_delta, &Region::Whole)?;
    let mut best = BoundCheck {
        worst_ratio: 0.0,
        worst_n: 0,
        worst_beta: vec![0; f.dim()],
        points: grid.len(),
    };
    for g in &grid {
        let r = (g.value.ln() - bound.log_rhs(g.n, g.beta.iter().sum())).exp();
        if r > best.worst_ratio {
            best.worst_ratio = r;
            best.worst_n = g.n;
            best.worst_beta = g.beta.clone();
        }
    }
    Ok(best)
}

/// Result of validating a smoothing certificate on an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingValidation {
    pub worst_ratio: f64,
    pub worst: Option<WorstCase>,
    pub checked: usize,
    /// Times outside `(0, t₀)` that were skipped.
    pub excluded_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub g_index: usize,
    pub t: f64,
    pub n: usize,
    pub beta: Vec<usize>,
}

impl SmoothingValidation {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst_ratio <= tol
    }
}

fn flow_grids(
    flow: &Flow,
    ensemble: &[SpectralFunction],
    times: &[f64],
    n_max: usize,
    beta_max: usize,
) -> Result<Vec<(usize, f64, f64, Vec<GridNorm>)>> {
    let jobs: Vec<(usize, f64)> = (0..ensemble.len())
        .flat_map(|i| times.iter().map(move |&t| (i, t)))
        .collect();
    jobs.par_iter()
        .map(|&(i, t)| {
            let g = &ensemble[i];
            let f = flow.apply(g, t)?;
            // Total order is capped at max(n_max, beta_max).
            let grid = norm_grid(&f, n_max, beta_max, n_max.max(beta_max), 1.0, &Region::Whole)?;
            Ok((i, t, g.norm(), grid))
        })
        .collect()
}

/// Checks `W_t(n, β) ≤ C^{1+n+|β|} t^{-r₁-r₂(n+|β|)} (n!)^ν (|β|!)^μ ‖g‖` on
/// every ensemble member, time in `(0, t₀)` and grid point.
pub fn validate_smoothing(
    cert: &SmoothingCertificate,
    flow: &Flow,
    ensemble: &[SpectralFunction],
    times: &[f64],
    n_max: usize,
    beta_max: usize,
) -> Result<SmoothingValidation> {
    let (kept, excluded_t): (Vec<f64>, Vec<f64>) = times.iter().partition(|&&t| t > 0.0 && t < cert.t0);
    let runs = flow_grids(flow, ensemble, &kept, n_max, beta_max)?;
    let mut out = SmoothingValidation {
        worst_ratio: 0.0,
        worst: None,
        checked: 0,
        excluded_t,
    };
    for (i, t, gnorm, grid) in runs {
        for g in grid {
            out.checked += 1;
            if g.value == 0.0 {
                continue;
            }
            let log_ratio = g.value.ln() - gnorm.ln() - cert.log_rhs(t, g.n, g.beta.iter().sum());
            let r = log_ratio.exp();
            if r > out.worst_ratio {
                out.worst_ratio = r;
                out.worst = Some(WorstCase {
                    g_index: i,
                    t,
                    n: g.n,
                    beta: g.beta,
                });
            }
        }
    }
    Ok(out)
}

/// Fits `(C, r₁, r₂)` for fixed `(ν, μ)` so that the smoothing estimate holds
/// on the ensemble and times given.
///
/// In the unknowns `c = ln C ≥ 0`, `r₁ ≥ 0`, `r₂ ≥ 0` every grid point is a
/// linear constraint; the fit minimizes the summed log slack over the
/// binding constraints (one per `(t, n+|β|)` group) by enumerating the
/// vertices of this three-variable linear program.
pub fn fit_smoothing_certificate(
    flow: &Flow,
    ensemble: &[SpectralFunction],
    times: &[f64],
    nu: f64,
    mu: f64,
    t0: f64,
    n_max: usize,
    beta_max: usize,
) -> Result<SmoothingCertificate> {
    if times.iter().any(|&t| !(t > 0.0 && t < t0)) || !(t0 < 1.0) {
        return Err(Error::domain("times", "fit times must lie in (0, t0) with t0 < 1"));
    }
    let runs = flow_grids(flow, ensemble, times, n_max, beta_max)?;
    // (order k, time index) -> max of ln W - ln‖g‖ - ν ln n! - μ ln|β|!
    let mut groups: Vec<((usize, usize), f64)> = Vec::new();
    for (_, t, gnorm, grid) in &runs {
        if *gnorm == 0.0 {
            continue;
        }
        let ti = times.iter().position(|s| s == t).expect("time from grid");
        for g in grid {
            if g.value == 0.0 {
                continue;
            }
            let ba: usize = g.beta.iter().sum();
            let y = g.value.ln() - gnorm.ln() - nu * ln_factorial(g.n) - mu * ln_factorial(ba);
            let key = (g.order(), ti);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => *v = v.max(y),
                None => groups.push((key, y)),
            }
        }
    }
    groups.sort_by_key(|g| g.0);
    // Constraint rows a·v ≥ y with v = (c, r1, r2).
    let mut rows: Vec<([f64; 3], f64)> = groups
        .iter()
        .map(|&((k, ti), y)| {
            let l = -times[ti].ln();
            let k = k as f64;
            ([1.0 + k, l, k * l], y)
        })
        .collect();
    let objective = rows.iter().fold([0.0; 3], |acc, (a, _)| [acc[0] + a[0], acc[1] + a[1], acc[2] + a[2]]);
    rows.push(([1.0, 0.0, 0.0], 0.0));
    rows.push(([0.0, 1.0, 0.0], 0.0));
    rows.push(([0.0, 0.0, 1.0], 0.0));
    let v = lp_vertex_min(&rows, objective)
        .ok_or_else(|| Error::numerical("fit_smoothing_certificate", "no feasible vertex"))?;
    let r2 = if v[2] > 0.0 { v[2] } else { f64::EPSILON };
    Ok(SmoothingCertificate {
        c: v[0].exp(),
        t0,
        nu,
        mu,
        r1: v[1],
        r2,
        provenance: Provenance::Fitted,
        fitted_on: times.to_vec(),
    })
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::from_fn(|i, j| a[i][j]);
    let rhs = nalgebra::Vector3::new(b[0], b[1], b[2]);
    let lu = m.lu();
    if m.determinant().abs() < 1e-12 {
        return None;
    }
    lu.solve(&rhs).map(|x| [x[0], x[1], x[2]])
}

/// Minimizes `obj·v` subject to `a_i·v ≥ y_i` by vertex enumeration.
fn lp_vertex_min(rows: &[([f64; 3], f64)], obj: [f64; 3]) -> Option<[f64; 3]> {
    let n = rows.len();
    let mut best: Option<(f64, [f64; 3])> = None;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let Some(v) = solve3([rows[i].0, rows[j].0, rows[k].0], [rows[i].1, rows[j].1, rows[k].1]) else {
                    continue;
                };
                let feasible = rows.iter().all(|(a, y)| {
                    let lhs = a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
                    lhs >= y - 1e-9 * (1.0 + y.abs())
                });
                if !feasible {
                    continue;
                }
                let val = obj[0] * v[0] + obj[1] * v[1] + obj[2] * v[2];
                if best.is_none_or(|(b, _)| val < b - 1e-12) {
                    best = Some((val, v));
                }
            }
        }
    }
    // Nudge up by a relative hair so rounding in the solve never leaves a
    // binding constraint marginally violated.
    best.map(|(_, v)| v.map(|x| if x > 0.0 { x * (1.0 + 1e-12) + 1e-12 } else { 0.0 }))
}

/// `r = D₂ / sqrt(ε/2)`.
pub fn tail_radius(d2: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::domain("eps", format!("ε = {eps} not in (0, 1]")));
    }
    if !(d2 >= 1.0) {
        return Err(Error::domain("d2", format!("D₂ = {d2} < 1")));
    }
    Ok(d2 / (eps / 2.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub r: f64,
    pub tail_mass: f64,
    /// `εD₁²/2`
    pub allowed: f64,
    pub ratio: f64,
    pub passed: bool,
}

/// `‖f‖²_{L²(ℝ^d ∖ B(0, r))} ≤ εD₁²/2` with `r = tail_radius(D₂, ε)`.
pub fn tail_mass_check(f: &SpectralFunction, bound: &GSBound, eps: f64) -> Result<TailReport> {
    let r = tail_radius(bound.d2, eps)?;
    let tail_mass = crate::spectral::mass(f, &Region::Exterior { radius: r })?;
    let allowed = eps * bound.d1 * bound.d1 / 2.0;
    let ratio = if allowed > 0.0 {
        tail_mass / allowed
    } else if tail_mass > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(TailReport {
        r,
        tail_mass,
        allowed,
        ratio,
        passed: tail_mass <= allowed,
    })
}

/// Bound for the weaker weight `w_δ`: exponents `(δν, μ)` and
/// `D̃₂ = 8^ν e^ν D₂` when `δ < 1`, `D̃₂ = D₂` when `δ = 1`.
pub fn delta_weight_transfer(bound: &GSBound, delta: f64) -> Result<GSBound> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::domain("delta", format!("δ = {delta} not in [0, 1]")));
    }
    if bound.weight_delta != 1.0 {
        return Err(Error::domain("bound", "transfer applies to a bound with the full weight"));
    }
    let tilde = if delta < 1.0 {
        (8.0f64 * std::f64::consts::E).powf(bound.nu) * bound.d2
    } else {
        bound.d2
    };
    Ok(GSBound {
        d1: bound.d1,
        d2: tilde,
        nu: delta * bound.nu,
        mu: bound.mu,
        weight_delta: delta,
        derived_from: bound.derived_from.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h(n: usize) -> SpectralFunction {
        SpectralFunction::hermite(n).unwrap()
    }

    fn sample() -> SpectralFunction {
        SpectralFunction::new_1d(vec![0.6, -0.3, 0.2, 0.5, -0.1, 0.05, 0.3]).unwrap()
    }

    #[test]
    fn harmonic_flow_ground_state() {
        let f = harmonic_flow(&h(0), 1.0).unwrap();
        assert_abs_diff_eq!(f.coeff(0, 0), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.norm(), 0.6065, epsilon = 1e-4);
        assert_eq!(harmonic_flow(&sample(), 0.0).unwrap(), sample());
        assert!(harmonic_flow(&h(0), -1.0).is_err());
    }

    #[test]
    fn ground_state_is_an_eigenfunction() {
        // H h0 = ½(-h0'' + x² h0) = ½ h0
        let h0 = h(0);
        let d2 = h0.partial(&[2]).unwrap();
        let x2 = h0.multiply_coordinate(0).unwrap().multiply_coordinate(0).unwrap();
        for i in 0..3 {
            let v = 0.5 * (-d2.coeff(i, 0) + x2.coeff(i, 0));
            assert_abs_diff_eq!(v, 0.5 * h0.coeff(i, 0), epsilon = 1e-15);
        }
    }

    #[test]
    fn galerkin_reduces_to_harmonic_flow() {
        let g = sample();
        for t in [0.0, 0.1, 0.7] {
            let a = shubin_galerkin_flow(&g, t, 1, 1, 1.0).unwrap();
            let b = harmonic_flow(&g, t).unwrap();
            for i in 0..a.output.shape()[0] {
                assert_abs_diff_eq!(a.output.coeff(i, 0), b.coeff(i, 0), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn shubin_matrix_is_positive_definite() {
        let ev = shubin_eigenvalues(1, 2, 1.0, 40);
        assert_eq!(ev.len(), 40);
        assert!(ev[0] > 0.0);
        assert!(check_shubin(1, 2, 0.25).is_err());
    }

    #[test]
    fn quartic_flow_is_stable_and_contracting() {
        let out = shubin_galerkin_flow(&h(0), 0.5, 2, 1, 1.0).unwrap();
        assert!(out.output.norm() < 1.0);
        assert!(out.stability < 1e-4, "stability {}", out.stability);
        assert!(!out.unstable);
    }

    #[test]
    fn galerkin_semigroup_property() {
        let g = sample();
        let a = shubin_galerkin_flow(&g, 0.2, 1, 2, 1.0).unwrap().output;
        let ab = shubin_galerkin_flow(&a, 0.3, 1, 2, 1.0).unwrap().output;
        let c = shubin_galerkin_flow(&g, 0.5, 1, 2, 1.0).unwrap().output;
        for i in 0..c.shape()[0] {
            assert_abs_diff_eq!(ab.coeff(i, 0), c.coeff(i, 0), epsilon = 1e-6);
        }
    }

    #[test]
    fn exponent_examples() {
        let r = |a, b| Rational64::new(a, b);
        assert_eq!(shubin_exponents_exact(1, 1, r(1, 1)).unwrap(), (r(1, 2), r(1, 2)));
        assert_eq!(shubin_exponents_exact(1, 2, r(1, 1)).unwrap(), (r(2, 3), r(1, 3)));
        assert_eq!(shubin_exponents_exact(2, 1, r(1, 1)).unwrap(), (r(1, 3), r(2, 3)));
        assert!(shubin_exponents_exact(1, 1, r(1, 2)).is_err());
        assert!(shubin_exponents(0, 1, 1.0).is_err());
    }

    #[test]
    fn fitted_bound_dominates_grid() {
        let fit = fit_gs_bound(&h(0), 0.5, 0.5, 6, 6).unwrap();
        assert!(fit.log_slack.iter().all(|&s| s >= -1e-12));
        assert!(fit.bound.d2 >= 1.0);
        let hi = fit_gs_bound(&h(30), 0.5, 0.5, 4, 4).unwrap();
        assert_abs_diff_eq!(hi.bound.d1, 1.0, epsilon = 1e-9);
        assert!(fit_gs_bound(&h(0), 0.5, 0.5, 13, 0).is_err());
    }

    #[test]
    fn fitted_d2_decreases_with_time() {
        let g = sample();
        let d2: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&t| fit_gs_bound(&harmonic_flow(&g, t).unwrap(), 0.5, 0.5, 4, 4).unwrap().bound.d2)
            .collect();
        assert!(d2[0] >= d2[1] && d2[1] >= d2[2], "{d2:?}");
    }

    #[test]
    fn tail_radius_examples() {
        assert_abs_diff_eq!(tail_radius(2.0, 0.08).unwrap(), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tail_radius(1.0, 1.0).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(tail_radius(1.0, 2.0).is_err());
        assert!(tail_radius(1.0, 0.0).is_err());
    }

    #[test]
    fn tail_mass_examples() {
        let fit = fit_gs_bound(&h(0), 0.5, 0.5, 4, 4).unwrap();
        let rep = tail_mass_check(&h(0), &fit.bound, 0.5).unwrap();
        assert!(rep.passed && rep.ratio <= 1.0);
        let zero = SpectralFunction::zero(1).unwrap();
        let zb = fit_gs_bound(&zero, 0.5, 0.5, 2, 2).unwrap();
        let zr = tail_mass_check(&zero, &zb.bound, 0.5).unwrap();
        assert_eq!(zr.tail_mass, 0.0);
        assert!(zr.passed);
    }

    #[test]
    fn delta_transfer_examples() {
        let b = GSBound::new(1.0, 1.0, 0.5, 0.5).unwrap();
        let t = delta_weight_transfer(&b, 0.5).unwrap();
        assert_abs_diff_eq!(t.d2, (8.0 * std::f64::consts::E).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(t.d2, 4.6633, epsilon = 1e-4);
        assert_eq!(delta_weight_transfer(&b, 1.0).unwrap().d2, 1.0);
        assert_abs_diff_eq!(delta_weight_transfer(&b, 0.0).unwrap().s(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn transfer_preserves_validity_on_grid() {
        let f = harmonic_flow(&sample(), 0.3).unwrap();
        let fit = fit_gs_bound(&f, 0.5, 0.5, 5, 5).unwrap();
        assert!(check_gs_bound(&f, &fit.bound, 5, 5).unwrap().worst_ratio <= 1.0 + 1e-9);
        for delta in [0.0, 0.25, 0.5, 0.75] {
            let t = delta_weight_transfer(&fit.bound, delta).unwrap();
            assert!(check_gs_bound(&f, &t, 5, 5).unwrap().passed(), "δ = {delta}");
        }
    }

    #[test]
    fn validation_handles_zero_and_excluded_times() {
        let cert = SmoothingCertificate::declared(2.0, 0.5, 0.5, 0.5, 0.0, 0.5).unwrap();
        let zero = SpectralFunction::zero(1).unwrap();
        let rep = validate_smoothing(&cert, &Flow::Harmonic, &[zero], &[0.1, 0.7], 3, 3).unwrap();
        assert_eq!(rep.worst_ratio, 0.0);
        assert_eq!(rep.excluded_t, vec![0.7]);
    }

    #[test]
    fn fitted_certificate_validates_on_fit_grid() {
        let ens = vec![sample(), h(0), h(3)];
        let cert = fit_smoothing_certificate(&Flow::Harmonic, &ens, &[0.1, 0.2], 0.5, 0.5, 0.5, 4, 4).unwrap();
        let rep = validate_smoothing(&cert, &Flow::Harmonic, &ens, &[0.1, 0.2], 4, 4).unwrap();
        assert!(rep.worst_ratio <= 1.0 + 1e-9, "{}", rep.worst_ratio);
        assert!(cert.c >= 1.0 && cert.r2 > 0.0);
    }
}
