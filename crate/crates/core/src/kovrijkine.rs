//! Good/bad classification of covering balls and the analytic local
//! estimate on good balls.
//!
//! A ball `Q` is good for `f` when, for every `m`,
//!
//! ```text
//! Σ_{|β|=m} (1/β!) ‖w^m ∂^β f‖²_{L²(Q)} ≤ (2κ/ε) · 2^{m+1} d^m q_m² / m! · ‖f‖²_{L²(Q)},
//! q_m = D̃₂^{2m} (m!)^s,   w(x) = (1+|x|²)^{δ/2}.
//! ```
//!
//! Orders `m ≤ m_cap` are checked by quadrature. Orders above the cap are
//! certified from the δ-weighted bound `‖w^m ∂^β f‖ ≤ D₁ q_m`, which gives
//! `LHS_m ≤ d^m D₁² q_m² / m!`; this is below `RHS_m` for every `m > m_cap`
//! as soon as `2^{m_cap+2} ≥ ε D₁² / (2κ ‖f‖²_Q)`. Balls for which that
//! tail certificate fails are classified bad.
//!
//! All comparisons with large exponents are made in log space.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{Ball, Covering, RadiusProfile, SensorSet};
use crate::semigroup::GSBound;
use crate::spectral::integrate::{integrate_table, values_at, Integral, NodeSet};
use crate::spectral::{multi_factorial, multi_indices, Region, SpectralFunction};

/// Largest classification order checked by quadrature.
pub const M_CAP_MAX: usize = 24;
/// `‖f‖²_Q ≤ DEGENERATE_REL · ‖f‖²` marks a ball as numerically empty.
pub const DEGENERATE_REL: f64 = 1e-200;
/// Relative refinement tolerance for local integrals.
pub const LOCAL_REL_TOL: f64 = 1e-8;
/// Absolute tolerance, relative to the global value of the same integrand.
pub const LOCAL_ABS_TOL: f64 = 1e-13;

fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

fn accept(int: &Integral, scale: f64, what: &'static str) -> Result<f64> {
    let diff = (int.value - int.coarse).abs();
    if diff <= LOCAL_REL_TOL * int.value.abs() + LOCAL_ABS_TOL * scale {
        Ok(int.value.max(0.0))
    } else {
        Err(Error::QuadratureNotConverged {
            what,
            rel_change: int.rel_change,
        })
    }
}

fn ln_pos(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub eps: f64,
    pub kappa: usize,
    pub tilde_d2: f64,
    pub s: f64,
    pub m_cap: usize,
    pub delta: f64,
    /// `D₁` of the δ-weighted bound, used by the tail certificate.
    pub d1: f64,
    pub dim: usize,
}

impl ClassifierConfig {
    /// Configuration from a δ-weighted bound (see
    /// [`crate::semigroup::delta_weight_transfer`]).
    pub fn from_bound(eps: f64, kappa: usize, bound: &GSBound, m_cap: usize, dim: usize) -> Result<Self> {
        let cfg = ClassifierConfig {
            eps,
            kappa,
            tilde_d2: bound.d2,
            s: bound.s(),
            m_cap,
            delta: bound.weight_delta,
            d1: bound.d1,
            dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::domain("eps", format!("ε = {} not in (0, 1]", self.eps)));
        }
        if self.kappa == 0 {
            return Err(Error::domain("kappa", "κ must be ≥ 1"));
        }
        if !(self.tilde_d2 >= 1.0) {
            return Err(Error::domain("tilde_d2", format!("{} < 1", self.tilde_d2)));
        }
        if !(0.0..1.0).contains(&self.s) {
            return Err(Error::domain("s", format!("s = {} not in [0, 1)", self.s)));
        }
        if self.m_cap > M_CAP_MAX {
            return Err(Error::domain("m_cap", format!("{} > {M_CAP_MAX}", self.m_cap)));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::domain("delta", format!("{} not in [0, 1]", self.delta)));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        if !self.log_q(self.m_cap).exp().is_finite() {
            return Err(Error::domain("tilde_d2", "q_m overflows below m_cap"));
        }
        Ok(())
    }

    /// `ln q_m = 2m ln D̃₂ + s ln m!`.
    pub fn log_q(&self, m: usize) -> f64 {
        2.0 * m as f64 * self.tilde_d2.ln() + self.s * ln_factorial(m)
    }

    /// `ln` of the right-hand side of the good-ball inequality.
    pub fn log_rhs(&self, m: usize, mass_q: f64) -> f64 {
        let mf = m as f64;
        (2.0 * self.kappa as f64 / self.eps).ln() + (mf + 1.0) * std::f64::consts::LN_2 + mf * (self.dim as f64).ln()
            + 2.0 * self.log_q(m)
            - ln_factorial(m)
            + ln_pos(mass_q)
    }

    /// `ln` of the pointwise derivative bound at order `m` on `ball`.
    pub fn log_pointwise_bound(&self, m: usize, ball: &Ball, mass_q: f64) -> f64 {
        let mf = m as f64;
        let y = ball.center.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gap = (y - ball.radius).max(0.0);
        let log_c = 2.0 * self.log_q(m) - self.delta * mf * (1.0 + gap * gap).ln();
        0.5 * (2.0 * self.kappa as f64 / self.eps).ln()
            + (mf + 1.0) * std::f64::consts::LN_2
            + 0.5 * mf * (self.dim as f64).ln()
            + 0.5 * log_c
            + 0.5 * ln_pos(mass_q)
            - 0.5 * ball.volume().ln()
    }

    /// Whether orders above `m_cap` are certified on a ball with mass `mass_q`.
    pub fn tail_certified(&self, mass_q: f64) -> bool {
        let need = (self.eps * self.d1 * self.d1 / (2.0 * self.kappa as f64)).ln() - ln_pos(mass_q);
        (self.m_cap as f64 + 2.0) * std::f64::consts::LN_2 >= need
    }
}

/// `∂^β f` for every `|β| ≤ m_cap`, with whole-space weighted norms.
pub struct DerivativeTable {
    pub m_cap: usize,
    pub delta: f64,
    pub betas: Vec<Vec<usize>>,
    pub orders: Vec<usize>,
    pub funcs: Vec<SpectralFunction>,
    /// `‖w^{|β|} ∂^β f‖²_{L²(ℝ^d)}`
    pub global: Vec<f64>,
    pub norm_sq: f64,
}

impl DerivativeTable {
    pub fn new(f: &SpectralFunction, m_cap: usize, delta: f64) -> Result<Self> {
        let mut betas = Vec::new();
        let mut orders = Vec::new();
        for m in 0..=m_cap {
            for b in multi_indices(f.dim(), m) {
                betas.push(b);
                orders.push(m);
            }
        }
        let funcs = betas.iter().map(|b| f.partial(b)).collect::<Result<Vec<_>>>()?;
        let mut table = DerivativeTable {
            m_cap,
            delta,
            betas,
            orders,
            funcs,
            global: Vec::new(),
            norm_sq: f.norm_sq(),
        };
        let refs: Vec<&SpectralFunction> = table.funcs.iter().collect();
        let ints = integrate_table(&refs, &table.pairs(), &Region::Whole)?;
        table.global = ints
            .iter()
            .zip(&table.funcs)
            .map(|(i, g)| accept(i, g.norm_sq().max(f64::MIN_POSITIVE), "derivative_table"))
            .collect::<Result<_>>()?;
        Ok(table)
    }

    fn pairs(&self) -> Vec<(usize, f64)> {
        self.orders.iter().enumerate().map(|(i, &m)| (i, m as f64 * self.delta)).collect()
    }

    pub fn f(&self) -> &SpectralFunction {
        &self.funcs[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub is_good: bool,
    pub failing_m: Option<usize>,
    pub degenerate: bool,
    pub tail_certified: bool,
    pub mass_q: f64,
    pub m_cap: usize,
    pub log_lhs: Vec<f64>,
    pub log_rhs: Vec<f64>,
}

/// Good-ball test against a precomputed derivative table.
pub fn classify(table: &DerivativeTable, ball: &Ball, cfg: &ClassifierConfig) -> Result<Classification> {
    if table.m_cap < cfg.m_cap || table.delta != cfg.delta {
        return Err(Error::domain("table", "derivative table does not match the classifier configuration"));
    }
    let refs: Vec<&SpectralFunction> = table.funcs.iter().collect();
    let pairs: Vec<(usize, f64)> = table.pairs().into_iter().filter(|&(i, _)| table.orders[i] <= cfg.m_cap).collect();
    let ints = integrate_table(&refs, &pairs, &ball.region())?;
    let mut lhs = vec![0.0; cfg.m_cap + 1];
    for (&(i, _), int) in pairs.iter().zip(&ints) {
        let v = accept(int, table.global[i], "good_ball_test")?;
        lhs[table.orders[i]] += v / multi_factorial(&table.betas[i]);
    }
    let mass_q = lhs[0];
    let log_lhs: Vec<f64> = lhs.iter().map(|&v| ln_pos(v)).collect();
    if mass_q <= DEGENERATE_REL * table.norm_sq {
        return Ok(Classification {
            is_good: true,
            failing_m: None,
            degenerate: true,
            tail_certified: true,
            mass_q,
            m_cap: cfg.m_cap,
            log_lhs,
            log_rhs: vec![f64::NEG_INFINITY; cfg.m_cap + 1],
        });
    }
    let log_rhs: Vec<f64> = (0..=cfg.m_cap).map(|m| cfg.log_rhs(m, mass_q)).collect();
    let failing_m = (0..=cfg.m_cap).find(|&m| log_lhs[m] > log_rhs[m]);
    let tail_certified = cfg.tail_certified(mass_q);
    Ok(Classification {
        is_good: failing_m.is_none() && tail_certified,
        failing_m,
        degenerate: false,
        tail_certified,
        mass_q,
        m_cap: cfg.m_cap,
        log_lhs,
        log_rhs,
    })
}

/// Good-ball test for a single function and ball.
pub fn good_ball_test(f: &SpectralFunction, ball: &Ball, cfg: &ClassifierConfig) -> Result<Classification> {
    cfg.validate()?;
    let table = DerivativeTable::new(f, cfg.m_cap, cfg.delta)?;
    classify(&table, ball, cfg)
}

fn ball_grid(ball: &Ball, per_axis: usize) -> NodeSet {
    let mut set = NodeSet {
        dim: ball.dim(),
        ..Default::default()
    };
    let h = 2.0 * ball.radius / per_axis as f64;
    let c = &ball.center;
    if ball.dim() == 1 {
        for i in 0..per_axis {
            set.points.push(c[0] - ball.radius + (i as f64 + 0.5) * h);
            set.weights.push(0.0);
        }
    } else {
        for i in 0..per_axis {
            for j in 0..per_axis {
                let p = [c[0] - ball.radius + (i as f64 + 0.5) * h, c[1] - ball.radius + (j as f64 + 0.5) * h];
                if ball.contains(&p) {
                    set.points.extend_from_slice(&p);
                    set.weights.push(0.0);
                }
            }
        }
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x_k: Option<Vec<f64>>,
    pub verified: bool,
    pub grid_points: usize,
    pub refined: bool,
    /// `min_β (ln bound − ln |∂^β f(x_k)|)` at the witness.
    pub log_margin: f64,
}

/// First grid point `x ∈ Q` with `|∂^β f(x)|` below the pointwise bound for
/// all `|β| ≤ m_cap`; the grid is refined once (×4 per axis) before giving up.
pub fn pointwise_witness(
    table: &DerivativeTable,
    ball: &Ball,
    cfg: &ClassifierConfig,
    mass_q: f64,
) -> Result<Witness> {
    let bounds: Vec<f64> = (0..=cfg.m_cap).map(|m| cfg.log_pointwise_bound(m, ball, mass_q)).collect();
    let refs: Vec<&SpectralFunction> = table
        .funcs
        .iter()
        .zip(&table.orders)
        .filter(|(_, &m)| m <= cfg.m_cap)
        .map(|(g, _)| g)
        .collect();
    let base = if ball.dim() == 1 { 1000 } else { 32 };
    let mut total = 0;
    for (pass, per_axis) in [base, 4 * base].into_iter().enumerate() {
        let nodes = ball_grid(ball, per_axis);
        total += nodes.len();
        let vals = values_at(&refs, &nodes);
        let nf = refs.len();
        for k in 0..nodes.len() {
            let row = &vals[k * nf..(k + 1) * nf];
            let margin = row
                .iter()
                .enumerate()
                .map(|(i, v)| bounds[table.orders[i]] - ln_pos(v.abs()))
                .fold(f64::INFINITY, f64::min);
            if margin >= 0.0 {
                return Ok(Witness {
                    x_k: Some(nodes.point(k).to_vec()),
                    verified: true,
                    grid_points: total,
                    refined: pass > 0,
                    log_margin: margin,
                });
            }
        }
    }
    Ok(Witness {
        x_k: None,
        verified: false,
        grid_points: total,
        refined: true,
        log_margin: f64::NEG_INFINITY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MkBruteForce {
    pub log_mk: f64,
    /// `ln sup |F|` over the sampled set (before normalization).
    pub log_sup: f64,
    pub samples: usize,
    pub refinements: usize,
    pub converged: bool,
    pub overflow: bool,
}

fn stadium_boundary(a: f64, b: f64, r: f64, n: usize) -> Vec<Complex64> {
    // Upper half suffices: F is real on ℝ, so |F(z̄)| = |F(z)|.
    let mut pts = Vec::with_capacity(2 * n + 2);
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        pts.push(Complex64::new(x, r));
    }
    for i in 0..=n {
        let th = std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
        pts.push(Complex64::new(b + r * th.sin(), r * th.cos()));
        pts.push(Complex64::new(a - r * th.sin(), r * th.cos()));
    }
    pts
}

fn log_sup_1d(f: &SpectralFunction, pts: &[Complex64]) -> Result<(f64, bool)> {
    let evals = pts
        .par_iter()
        .map(|z| f.eval_complex(&[*z]))
        .collect::<Result<Vec<_>>>()?;
    Ok(evals
        .iter()
        .fold((f64::NEG_INFINITY, false), |(m, o), e| (m.max(e.log_modulus()), o || e.overflow)))
}

fn log_sup_2d(f: &SpectralFunction, ball: &Ball, r: f64, nq: usize, nt: usize) -> Result<(f64, bool, usize)> {
    let mut xs = Vec::new();
    let h = 2.0 * ball.radius / nq as f64;
    for i in 0..=nq {
        for j in 0..=nq {
            let p = [ball.center[0] - ball.radius + i as f64 * h, ball.center[1] - ball.radius + j as f64 * h];
            let d = ((p[0] - ball.center[0]).powi(2) + (p[1] - ball.center[1]).powi(2)).sqrt();
            // Points just outside are pulled onto the closed ball.
            if d <= ball.radius + 0.5 * h {
                let s = if d > ball.radius { ball.radius / d } else { 1.0 };
                xs.push([
                    ball.center[0] + (p[0] - ball.center[0]) * s,
                    ball.center[1] + (p[1] - ball.center[1]) * s,
                ]);
            }
        }
    }
    let ths: Vec<Complex64> = (0..nt)
        .map(|k| Complex64::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / nt as f64))
        .collect();
    let res = xs
        .par_iter()
        .map(|x| {
            let mut best = (f64::NEG_INFINITY, false);
            for w1 in &ths {
                for w2 in &ths {
                    let e = f.eval_complex(&[x[0] + w1, x[1] + w2])?;
                    best = (best.0.max(e.log_modulus()), best.1 || e.overflow);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = xs.len() * nt * nt;
    let (m, o) = res.into_iter().fold((f64::NEG_INFINITY, false), |(m, o), (a, b)| (m.max(a), o || b));
    Ok((m, o, samples))
}

/// `M_k = sqrt|Q| / ‖f‖_{L²(Q)} · sup_{Q + D_{8ρ_k}} |F|`, floored at 1.
///
/// The supremum is taken over the boundary of `Q + D_{8ρ_k}` (a stadium in
/// d = 1; ball grid × distinguished torus in d = 2), doubling the sampling
/// until `ln M_k` changes by less than 0.01.
pub fn mk_bruteforce(f: &SpectralFunction, ball: &Ball, rho_k: f64, mass_q: f64) -> Result<MkBruteForce> {
    if !(mass_q > 0.0) {
        return Err(Error::domain("mass_q", "M_k needs ‖f‖_{L²(Q)} > 0"));
    }
    let r = 8.0 * rho_k;
    let norm = 0.5 * ball.volume().ln() - 0.5 * mass_q.ln();
    let mut prev = f64::NAN;
    let mut out = MkBruteForce {
        log_mk: 0.0,
        log_sup: f64::NEG_INFINITY,
        samples: 0,
        refinements: 0,
        converged: false,
        overflow: false,
    };
    let (max_pass, n0) = if ball.dim() == 1 { (10, 64) } else { (3, 4) };
    for pass in 0..max_pass {
        let (log_sup, overflow, samples) = if ball.dim() == 1 {
            let pts = stadium_boundary(ball.center[0] - ball.radius, ball.center[0] + ball.radius, r, n0 << pass);
            let (s, o) = log_sup_1d(f, &pts)?;
            (s, o, pts.len())
        } else {
            log_sup_2d(f, ball, r, n0 << pass, 4 * (n0 << pass))?
        };
        out.log_sup = log_sup;
        out.overflow |= overflow;
        out.samples = samples;
        out.refinements = pass;
        out.log_mk = (norm + log_sup).max(0.0);
        if (out.log_mk - prev).abs() < 0.01 {
            out.converged = true;
            break;
        }
        prev = out.log_mk;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBound {
    pub d: f64,
    pub s: f64,
    /// `ln Σ D^m/(m!)^{1−s}`, including the certified remainder.
    pub log_sum: f64,
    pub sum: Option<f64>,
    /// `ln(2 (2D)^{3(2D)^{1/(1−s)}})`
    pub log_bound: f64,
    pub bound: Option<f64>,
    pub terms: usize,
    /// Certified tail bound relative to the partial sum.
    pub remainder_rel: f64,
    pub holds: bool,
}

/// Largest number of series terms summed explicitly.
pub const SERIES_MAX_TERMS: usize = 200_000_000;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `Σ_{m≥0} D^m/(m!)^{1−s}` by partial sums with a ratio-test remainder,
/// compared with `2(2D)^{3(2D)^{1/(1−s)}}`.
pub fn series_bound(d: f64, s: f64) -> Result<SeriesBound> {
    if !(d >= 0.5 && d.is_finite()) {
        return Err(Error::domain("D", format!("{d} < 1/2")));
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::domain("s", format!("{s} not in [0, 1)")));
    }
    let a = 1.0 - s;
    let ld = d.ln();
    let mut log_sum = f64::NEG_INFINITY;
    let mut term = 0.0; // ln of the m-th term
    let mut m = 0usize;
    let remainder_rel;
    loop {
        log_sum = log_add(log_sum, term);
        let next = term + ld - a * ((m + 1) as f64).ln();
        // Every later ratio is at most D/(m+2)^{1−s}.
        let ratio = ld - a * ((m + 2) as f64).ln();
        if ratio < 0.0 {
            let log_rem = next - (-ratio.exp()).ln_1p();
            if log_rem - log_sum < (1e-13f64).ln() {
                remainder_rel = (log_rem - log_sum).exp();
                break;
            }
        }
        m += 1;
        term = next;
        if m >= SERIES_MAX_TERMS {
            return Err(Error::numerical("series_bound", "term budget exhausted"));
        }
    }
    let log_sum = log_sum + remainder_rel.ln_1p();
    let log_bound = std::f64::consts::LN_2 + 3.0 * (2.0 * d).powf(1.0 / a) * (2.0 * d).ln();
    let finite = |l: f64| {
        let v = l.exp();
        v.is_finite().then_some(v)
    };
    Ok(SeriesBound {
        d,
        s,
        log_sum,
        sum: finite(log_sum),
        log_bound,
        bound: finite(log_bound),
        terms: m + 1,
        remainder_rel,
        holds: log_sum <= log_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkBound {
    /// `D = 40 d^{3/2} D̃₂² R max{r₀, (1−η)^{-1}}`
    pub d_const: f64,
    /// `log 4 + ½ log(2κ/ε) + 3(2D)^{2/(1−s)}`
    pub log_bound: f64,
    /// `log 4 + ½ log(2κ/ε) + 3(2D)^{1/(1−s)} log(2D)`
    pub log_intermediate: f64,
    /// `log 2 + ½ log(2κ/ε) + log Σ D^m/(m!)^{1−s}` when the series is summable
    /// within the term budget.
    pub log_series: Option<f64>,
}

pub fn mk_bound(cfg: &ClassifierConfig, profile: &RadiusProfile) -> Result<MkBound> {
    cfg.validate()?;
    let d = cfg.dim as f64;
    let d_const =
        40.0 * d.powf(1.5) * cfg.tilde_d2 * cfg.tilde_d2 * profile.r_big * profile.r0.max(1.0 / (1.0 - profile.eta));
    let a = 1.0 - cfg.s;
    let half_log = 0.5 * (2.0 * cfg.kappa as f64 / cfg.eps).ln();
    let log4 = 4f64.ln();
    let log_bound = log4 + half_log + 3.0 * (2.0 * d_const).powf(2.0 / a);
    let log_intermediate = log4 + half_log + 3.0 * (2.0 * d_const).powf(1.0 / a) * (2.0 * d_const).ln();
    // Explicit summation needs roughly D^{1/(1−s)} terms.
    let log_series = if d_const.powf(1.0 / a) < 2e7 {
        Some(std::f64::consts::LN_2 + half_log + series_bound(d_const, cfg.s)?.log_sum)
    } else {
        None
    };
    Ok(MkBound {
        d_const,
        log_bound: if log_bound.is_nan() { f64::INFINITY } else { log_bound },
        log_intermediate,
        log_series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub q_measure: f64,
    pub q_omega_measure: f64,
    pub mass_q: f64,
    pub mass_q_omega: f64,
    /// `1 + 4 log M_k / log 2`
    pub exponent: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub inapplicable: bool,
    pub passed: bool,
}

impl LocalEstimate {
    pub fn log_ratio(&self) -> f64 {
        self.log_lhs - self.log_rhs
    }

    /// `ln(24 d 2^d |Q|/|Q∩ω|)`
    pub fn log_base(&self, dim: usize) -> f64 {
        (24.0 * dim as f64 * 2f64.powi(dim as i32) * self.q_measure / self.q_omega_measure).ln()
    }
}

/// Region `Q ∩ ω` for quadrature (d = 1, or ω the whole space).
pub fn ball_sensor_region(ball: &Ball, omega: &SensorSet) -> Result<Region> {
    if omega.dim() != ball.dim() {
        return Err(Error::DimensionMismatch {
            expected: ball.dim(),
            found: omega.dim(),
        });
    }
    if omega.is_whole() {
        return Ok(ball.region());
    }
    if ball.dim() != 1 {
        return Err(Error::domain("omega", "Q ∩ ω quadrature in d = 2 is only available for ω = ℝ²"));
    }
    let c = ball.center[0];
    Ok(Region::intervals(omega.pieces_in(c - ball.radius, c + ball.radius)?))
}

/// `(24d2^d |Q|/|Q∩ω|)^{1+4 log M_k/log 2} ‖f‖²_{Q∩ω} ≥ ‖f‖²_Q`, in log space.
pub fn local_estimate_check(f: &SpectralFunction, ball: &Ball, omega: &SensorSet, log_mk: f64) -> Result<LocalEstimate> {
    let region = ball_sensor_region(ball, omega)?;
    let q_measure = ball.volume();
    let q_omega_measure = omega.ball_measure(&ball.center, ball.radius)?.value;
    let scale = f.norm_sq().max(f64::MIN_POSITIVE);
    let ints = integrate_table(&[f], &[(0, 0.0)], &ball.region())?;
    let mass_q = accept(&ints[0], scale, "local_estimate")?;
    let exponent = 1.0 + 4.0 * log_mk.max(0.0) / std::f64::consts::LN_2;
    if !(q_omega_measure > 0.0) {
        return Ok(LocalEstimate {
            q_measure,
            q_omega_measure,
            mass_q,
            mass_q_omega: 0.0,
            exponent,
            log_lhs: f64::NEG_INFINITY,
            log_rhs: ln_pos(mass_q),
            inapplicable: true,
            passed: false,
        });
    }
    let mass_q_omega = if omega.is_whole() {
        mass_q
    } else {
        accept(&integrate_table(&[f], &[(0, 0.0)], &region)?[0], scale, "local_estimate")?
    };
    let d = ball.dim();
    let log_base = (24.0 * d as f64 * 2f64.powi(d as i32) * q_measure / q_omega_measure).ln();
    let log_lhs = exponent * log_base + ln_pos(mass_q_omega);
    let log_rhs = ln_pos(mass_q);
    Ok(LocalEstimate {
        q_measure,
        q_omega_measure,
        mass_q,
        mass_q_omega,
        exponent,
        log_lhs,
        log_rhs,
        inapplicable: false,
        passed: log_lhs >= log_rhs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticityReport {
    pub premise_violations: Vec<Vec<usize>>,
    pub premise_holds: bool,
    pub premise_order: usize,
    pub taylor_degree: usize,
    /// Largest fitted geometric decay ratio of the Taylor residuals.
    pub fitted_ratio: f64,
    /// Largest residual `|S_K(x) − f(x)|` at the final degree.
    pub final_residual: f64,
    /// Residuals per test point and degree.
    pub residuals: Vec<Vec<f64>>,
    pub test_points: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Order of the derivative-bound premise check.
pub const ANALYTICITY_ORDER: usize = 12;
/// Degree of the Taylor partial sums.
pub const TAYLOR_DEGREE: usize = 40;

fn taylor_residuals(f: &SpectralFunction, y: &[f64], xs: &[Vec<f64>], degree: usize) -> Result<Vec<Vec<f64>>> {
    // Derivatives at y, grouped by total order.
    let mut by_order: Vec<Vec<(Vec<usize>, f64)>> = Vec::with_capacity(degree + 1);
    if f.dim() == 1 {
        let mut g = f.clone();
        for m in 0..=degree {
            by_order.push(vec![(vec![m], g.eval(y)?)]);
            g = g.derivative(0)?;
        }
    } else {
        let mut gx = f.clone();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for a in 0..=degree {
            let mut g = gx.clone();
            let mut row = Vec::new();
            for _ in 0..=(degree - a) {
                row.push(g.eval(y)?);
                g = g.derivative(1)?;
            }
            rows.push(row);
            gx = gx.derivative(0)?;
        }
        for m in 0..=degree {
            by_order.push((0..=m).map(|a| (vec![a, m - a], rows[a][m - a])).collect());
        }
    }
    xs.iter()
        .map(|x| {
            let fx = f.eval(x)?;
            let mut partial = 0.0;
            Ok(by_order
                .iter()
                .map(|terms| {
                    for (alpha, dv) in terms {
                        let mono: f64 = alpha
                            .iter()
                            .zip(x.iter().zip(y))
                            .map(|(&k, (xi, yi))| (xi - yi).powi(k as i32))
                            .product();
                        partial += dv * mono / multi_factorial(alpha);
                    }
                    (partial - fx).abs()
                })
                .collect())
        })
        .collect()
}

fn fitted_decay(res: &[f64], floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = res
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > floor)
        .map(|(k, &r)| (k as f64, r.ln()))
        .collect();
    if pts.len() < 3 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx) * (p.0 - mx)));
    (num / den).exp()
}

/// Derivative-bound premise `‖∂^β f‖ ≤ C₁ C₂^{|β|} β!` for `|β| ≤ 12` and
/// Taylor convergence around `y` on `|x − y| < τ`.
pub fn analyticity_check(f: &SpectralFunction, c1: f64, c2: f64, y: &[f64], tau: f64) -> Result<AnalyticityReport> {
    if y.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: y.len(),
        });
    }
    if !(tau > 0.0) || !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(Error::domain("tau", "τ, C₁ and C₂ must be positive"));
    }
    let mut violations = Vec::new();
    for m in 0..=ANALYTICITY_ORDER {
        for beta in multi_indices(f.dim(), m) {
            let lhs = f.partial(&beta)?.norm();
            let rhs = c1 * c2.powi(m as i32) * multi_factorial(&beta);
            if lhs > rhs {
                violations.push(beta);
            }
        }
    }
    let test_points: Vec<Vec<f64>> = if f.dim() == 1 {
        [-0.9, -0.5, 0.5, 0.9].iter().map(|t| vec![y[0] + t * tau]).collect()
    } else {
        (0..4)
            .map(|k| {
                let th = std::f64::consts::FRAC_PI_2 * k as f64 + 0.3;
                vec![y[0] + 0.9 * tau * th.cos(), y[1] + 0.9 * tau * th.sin()]
            })
            .collect()
    };
    let residuals = taylor_residuals(f, y, &test_points, TAYLOR_DEGREE)?;
    let floor = 1e-13 * f.coeffs().iter().map(|c| c.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let fitted_ratio = residuals.iter().map(|r| fitted_decay(r, floor)).fold(0.0, f64::max);
    let final_residual = residuals.iter().map(|r| *r.last().unwrap_or(&0.0)).fold(0.0, f64::max);
    Ok(AnalyticityReport {
        premise_holds: violations.is_empty(),
        premise_violations: violations,
        premise_order: ANALYTICITY_ORDER,
        taylor_degree: TAYLOR_DEGREE,
        fitted_ratio,
        final_residual,
        residuals,
        test_points,
        converged: fitted_ratio < 1.0 && final_residual <= 1e-8 * (1.0 + floor / 1e-13),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallAudit {
    pub index: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub classification: Classification,
    /// `|Q ∩ ω| / |Q|`
    pub density: f64,
    pub witness: Option<Witness>,
    pub mk_bruteforce: Option<MkBruteForce>,
    pub log_mk_bound: f64,
    pub local: Option<LocalEstimate>,
}

impl BallAudit {
    pub fn is_good(&self) -> bool {
        self.classification.is_good
    }

    /// Good and not degenerate: the ball enters the local estimates.
    pub fn is_active(&self) -> bool {
        self.classification.is_good && !self.classification.degenerate
    }

    pub fn mk_within_bound(&self) -> Option<bool> {
        self.mk_bruteforce.map(|m| m.log_mk <= self.log_mk_bound)
    }
}

/// Classification, witness search, `M_k` and local estimate for one ball.
///
/// Bad and degenerate balls stop after classification.
pub fn audit_ball(
    table: &DerivativeTable,
    index: usize,
    ball: &Ball,
    cfg: &ClassifierConfig,
    omega: &SensorSet,
    profile: &RadiusProfile,
    log_mk_bound: f64,
) -> Result<BallAudit> {
    let classification = classify(table, ball, cfg)?;
    let density = omega.ball_density(&ball.center, ball.radius)?.value;
    let mut audit = BallAudit {
        index,
        center: ball.center.clone(),
        radius: ball.radius,
        classification,
        density,
        witness: None,
        mk_bruteforce: None,
        log_mk_bound,
        local: None,
    };
    if !audit.is_active() {
        return Ok(audit);
    }
    let mass_q = audit.classification.mass_q;
    let witness = pointwise_witness(table, ball, cfg, mass_q)?;
    if let Some(x_k) = &witness.x_k {
        let mk = mk_bruteforce(table.f(), ball, profile.rho(x_k), mass_q)?;
        audit.local = Some(local_estimate_check(table.f(), ball, omega, mk.log_mk)?);
        audit.mk_bruteforce = Some(mk);
    }
    audit.witness = Some(witness);
    Ok(audit)
}

/// Audits every ball of a covering in parallel.
pub fn audit_covering(
    f: &SpectralFunction,
    covering: &Covering,
    cfg: &ClassifierConfig,
    omega: &SensorSet,
    profile: &RadiusProfile,
    log_mk_bound: f64,
) -> Result<Vec<BallAudit>> {
    cfg.validate()?;
    let table = DerivativeTable::new(f, cfg.m_cap, cfg.delta)?;
    (0..covering.len())
        .into_par_iter()
        .map(|k| audit_ball(&table, k, &covering.ball(k), cfg, omega, profile, log_mk_bound))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadMassReport {
    /// Mass on bad balls, degenerate balls included.
    pub bad_mass: f64,
    /// Upper bound for `‖f‖²_{Q₀}`: the mass outside `B(0, r_cov)`.
    pub q0_mass: f64,
    pub lhs: f64,
    /// `εD₁²`
    pub rhs: f64,
    pub n_bad: usize,
    pub n_degenerate: usize,
    pub passed: bool,
}

/// `Σ_bad ‖f‖²_{Q_k} + ‖f‖²_{Q₀} ≤ εD₁²` from finished classifications.
pub fn bad_mass_report(classes: &[&Classification], q0_mass: f64, eps: f64, d1: f64) -> BadMassReport {
    let mut bad_mass = 0.0;
    let mut n_bad = 0;
    let mut n_degenerate = 0;
    for c in classes {
        if c.degenerate {
            n_degenerate += 1;
            bad_mass += c.mass_q;
        } else if !c.is_good {
            n_bad += 1;
            bad_mass += c.mass_q;
        }
    }
    let lhs = bad_mass + q0_mass;
    let rhs = eps * d1 * d1;
    BadMassReport {
        bad_mass,
        q0_mass,
        lhs,
        rhs,
        n_bad,
        n_degenerate,
        passed: lhs <= rhs,
    }
}

/// Classifies every ball of `covering` and checks the bad-mass inequality.
pub fn bad_mass_bound(
    f: &SpectralFunction,
    covering: &Covering,
    cfg: &ClassifierConfig,
    bound: &GSBound,
) -> Result<BadMassReport> {
    cfg.validate()?;
    let table = DerivativeTable::new(f, cfg.m_cap, cfg.delta)?;
    let classes = (0..covering.len())
        .into_par_iter()
        .map(|k| classify(&table, &covering.ball(k), cfg))
        .collect::<Result<Vec<_>>>()?;
    let q0_mass = crate::spectral::mass(f, &Region::Exterior { radius: covering.target_radius })?;
    let refs: Vec<&Classification> = classes.iter().collect();
    Ok(bad_mass_report(&refs, q0_mass, cfg.eps, bound.d1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sensor_periodic;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn h(n: usize) -> SpectralFunction {
        SpectralFunction::hermite(n).unwrap()
    }

    fn cfg(eps: f64, tilde_d2: f64, s: f64) -> ClassifierConfig {
        ClassifierConfig {
            eps,
            kappa: 1,
            tilde_d2,
            s,
            m_cap: 24,
            delta: 0.0,
            d1: 1.0,
            dim: 1,
        }
    }

    #[test]
    fn zeroth_order_condition_always_holds() {
        let c = cfg(1.0, 1.0, 0.0);
        for mass in [1e-30, 0.3, 7.0] {
            assert!(c.log_rhs(0, mass) >= mass.ln() + 2f64.ln() - 1e-12);
        }
    }

    #[test]
    fn ground_state_is_good_with_large_constant() {
        let r = good_ball_test(&h(0), &Ball::new(vec![0.0], 1.0), &cfg(1.0, 10.0, 0.0)).unwrap();
        assert!(r.is_good, "{r:?}");
        assert!(!r.degenerate);
    }

    #[test]
    fn oscillating_function_is_bad_on_small_ball() {
        let r = good_ball_test(&h(40), &Ball::new(vec![0.0], 0.25), &cfg(1.0, 1.0, 0.0)).unwrap();
        assert!(!r.is_good);
        let m = r.failing_m.expect("some order fails");
        assert!(m <= 24);
    }

    #[test]
    fn classification_is_monotone_in_eps() {
        let ball = Ball::new(vec![0.5], 0.5);
        let f = h(12);
        let mut was_good = false;
        for eps in [1.0, 0.1, 1e-3, 1e-6, 1e-12] {
            let r = good_ball_test(&f, &ball, &cfg(eps, 1.5, 0.5)).unwrap();
            assert!(!was_good || r.is_good, "ε = {eps}");
            was_good = r.is_good;
        }
    }

    #[test]
    fn far_ball_is_degenerate() {
        let r = good_ball_test(&h(0), &Ball::new(vec![60.0], 1.0), &cfg(1.0, 1.0, 0.0)).unwrap();
        assert!(r.degenerate && r.is_good);
    }

    #[test]
    fn witness_sup_formula_and_existence() {
        let c = ClassifierConfig { delta: 1.0, ..cfg(1.0, 1.0, 0.0) };
        let ball = Ball::new(vec![3.0], 1.0);
        // C(k,m) = q_m² (1 + (|y|−ρ)²)^{−δm}
        let m = 3;
        let direct = c.log_pointwise_bound(m, &ball, 1.0);
        let log_c = 2.0 * c.log_q(m) - m as f64 * 5f64.ln();
        let want = 0.5 * 2f64.ln() + 4.0 * 2f64.ln() + 0.5 * log_c - 0.5 * 2f64.ln();
        assert_abs_diff_eq!(direct, want, epsilon = 1e-12);

        let c = cfg(1.0, 10.0, 0.0);
        let ball = Ball::new(vec![0.0], 1.0);
        let table = DerivativeTable::new(&h(0), 24, 0.0).unwrap();
        let cl = classify(&table, &ball, &c).unwrap();
        let w = pointwise_witness(&table, &ball, &c, cl.mass_q).unwrap();
        assert!(w.verified && w.x_k.is_some());
        assert!(!w.refined);
    }

    #[test]
    fn mk_of_ground_state_matches_closed_form() {
        let ball = Ball::new(vec![0.0], 1.0);
        let mass = crate::spectral::mass(&h(0), &ball.region()).unwrap();
        let mk = mk_bruteforce(&h(0), &ball, 1.0, mass).unwrap();
        // sup over the stadium of π^{-1/4} e^{(y²−x²)/2} is attained at z = 8i.
        let want = 0.5 * 2f64.ln() - 0.5 * mass.ln() - 0.25 * PI.ln() + 32.0;
        assert_abs_diff_eq!(mk.log_mk, want, epsilon = 1e-9);
        assert!(mk.converged && !mk.overflow);
    }

    #[test]
    fn mk_bound_examples() {
        let p = RadiusProfile::new(1.0, 0.0, 0.5, 1.0).unwrap();
        let b = mk_bound(&cfg(1.0, 1.0, 0.0), &p).unwrap();
        assert_eq!(b.d_const, 80.0);
        let want = 4f64.ln() + 0.5 * 2f64.ln() + 76800.0;
        assert_abs_diff_eq!(b.log_bound, want, epsilon = 1e-9);
        assert!(b.log_intermediate <= b.log_bound);
        let ball = Ball::new(vec![0.0], 0.5);
        let mass = crate::spectral::mass(&h(0), &ball.region()).unwrap();
        let mk = mk_bruteforce(&h(0), &ball, 0.5, mass).unwrap();
        assert!(mk.log_mk <= b.log_bound);
    }

    #[test]
    fn series_examples() {
        let a = series_bound(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(a.sum.unwrap(), 0.5f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.sum.unwrap(), 1.64872, epsilon = 1e-5);
        assert_abs_diff_eq!(a.bound.unwrap(), 2.0, epsilon = 1e-12);
        assert!(a.holds && a.remainder_rel < 1e-12);
        for s in [0.1, 0.5, 0.9] {
            assert_abs_diff_eq!(series_bound(0.5, s).unwrap().bound.unwrap(), 2.0, epsilon = 1e-12);
        }
        let b = series_bound(2.0, 0.5).unwrap();
        // Independent partial sums of 2^m / sqrt(m!).
        let mut want = 0.0;
        let mut t = 1.0;
        for m in 0..200 {
            want += t;
            t *= 2.0 / ((m + 1) as f64).sqrt();
        }
        assert_abs_diff_eq!(b.sum.unwrap(), want, epsilon = 1e-10 * want);
        assert_abs_diff_eq!(b.log_bound, 2f64.ln() + 48.0 * 4f64.ln(), epsilon = 1e-9);
        assert!(series_bound(0.4, 0.0).is_err());
        assert!(series_bound(1.0, 1.0).is_err());
    }

    #[test]
    fn local_estimate_examples() {
        let ball = Ball::new(vec![0.0], 1.0);
        let whole = SensorSet::whole(1).unwrap();
        let r = local_estimate_check(&h(0), &ball, &whole, 0.0).unwrap();
        assert!(r.passed);
        let omega = sensor_periodic(1.0, 0.5).unwrap();
        for n in [0, 5] {
            let f = h(n);
            let mass = crate::spectral::mass(&f, &ball.region()).unwrap();
            let mk = mk_bruteforce(&f, &ball, 1.0, mass).unwrap();
            let r = local_estimate_check(&f, &ball, &omega, mk.log_mk).unwrap();
            assert!(r.passed && r.log_ratio() >= 0.0, "n = {n}");
        }
        let gap = SensorSet::intervals(vec![(5.0, 6.0)], "far").unwrap();
        assert!(local_estimate_check(&h(0), &ball, &gap, 0.0).unwrap().inapplicable);
    }

    #[test]
    fn analyticity_examples() {
        let r = analyticity_check(&h(0), 1.0, 1.0, &[0.0], 0.5).unwrap();
        assert!(r.premise_holds && r.converged, "{r:?}");
        assert!(r.residuals.iter().all(|res| res[20] < 1e-10));
        let z = SpectralFunction::zero(1).unwrap();
        let rz = analyticity_check(&z, 1e-9, 1e-9, &[0.0], 0.5).unwrap();
        assert!(rz.premise_holds && rz.final_residual == 0.0);
        let bad = analyticity_check(&h(6), 1e-3, 1.0, &[0.0], 0.5).unwrap();
        assert!(!bad.premise_holds);
    }

    #[test]
    fn bad_mass_examples() {
        let p = RadiusProfile::new(1.0, 0.0, 0.5, 1.0).unwrap();
        let f = h(0);
        let bound = crate::semigroup::fit_gs_bound(&f, 0.5, 0.5, 8, 8).unwrap().bound;
        let t = crate::semigroup::delta_weight_transfer(&bound, 0.0).unwrap();
        let r = crate::semigroup::tail_radius(bound.d2, 1.0).unwrap();
        let cover = crate::geometry::besicovitch_cover(&p, r, 1).unwrap();
        let c = ClassifierConfig::from_bound(1.0, 4, &t, 24, 1).unwrap();
        let rep = bad_mass_bound(&f, &cover, &c, &bound).unwrap();
        assert!(rep.passed, "{rep:?}");
        let z = SpectralFunction::zero(1).unwrap();
        let rz = bad_mass_bound(&z, &cover, &c, &bound).unwrap();
        assert_eq!(rz.lhs, 0.0);
        assert!(rz.passed);
    }

    #[test]
    fn audit_of_ground_state_ball() {
        let p = RadiusProfile::new(1.0, 0.0, 0.5, 1.0).unwrap();
        let omega = sensor_periodic(1.0, 0.5).unwrap();
        let c = cfg(1.0, 10.0, 0.0);
        let table = DerivativeTable::new(&h(0), 24, 0.0).unwrap();
        let bound = mk_bound(&c, &p).unwrap().log_bound;
        let a = audit_ball(&table, 0, &Ball::new(vec![0.0], 1.0), &c, &omega, &p, bound).unwrap();
        assert!(a.is_active());
        assert_eq!(a.mk_within_bound(), Some(true));
        assert!(a.local.unwrap().passed);
        assert_abs_diff_eq!(a.density, 0.5, epsilon = 1e-12);
    }
}
