//! End-to-end runs of the uncertainty inequality
//!
//! ```text
//! ‖f‖² ≤ e^{K(1+log(1/ε)+D₂^{4/(1−s)})} ‖f‖²_ω + εD₁²
//! ```
//!
//! and its decaying-density variant, with every intermediate inequality of
//! the argument evaluated on the concrete instance:
//!
//! tail radius → covering → good/bad classification → bad mass → pointwise
//! witness, `M_k` and local estimate on each good ball → overlap summation.
//!
//! Premise violations (an invalid bound, an uncertified density, `s ≥ 1`)
//! abort with [`Error::Premise`]. Inequalities that the argument asserts are
//! recorded as [`StepAudit`]s; a failing step leaves `passed = false` and
//! names itself in `failed_step`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{besicovitch_cover, coverage_check, DensityTarget, RadiusProfile, SensorSet};
use crate::kovrijkine::{
    audit_ball, bad_mass_report, mk_bound, BadMassReport, BallAudit, Classification, ClassifierConfig,
    DerivativeTable, MkBound, M_CAP_MAX,
};
use crate::semigroup::{delta_weight_transfer, tail_mass_check, GSBound, TailReport};
use crate::spectral::{integrate_table, Region, SpectralFunction};

/// Relative slack for comparisons of quadrature-computed quantities.
pub const MEASURE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub label: String,
    pub m_cap: usize,
    pub coverage_samples: usize,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            label: "f".into(),
            m_cap: M_CAP_MAX,
            coverage_samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub step: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Whether `lhs` and `rhs` are natural logarithms.
    pub log_space: bool,
    pub passed: bool,
}

impl StepAudit {
    fn new(step: &str, lhs: f64, rhs: f64, log_space: bool) -> Self {
        StepAudit {
            step: step.into(),
            lhs,
            rhs,
            log_space,
            passed: lhs <= rhs,
        }
    }

    /// `rhs − lhs` (log slack when `log_space`).
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineInputs {
    pub label: String,
    pub omega: String,
    pub eps: f64,
    pub density: DensityTarget,
    pub profile: RadiusProfile,
    pub bound: GSBound,
    /// The bound transferred to the weight `(1+|x|²)^{δ/2}`.
    pub bound_delta: GSBound,
    pub m_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringSummary {
    pub balls: usize,
    pub target_radius: f64,
    pub kappa_measured: usize,
    pub kappa_declared: usize,
    pub coverage_samples: usize,
    pub uncovered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub kind: String,
    pub inputs: PipelineInputs,
    pub tail: TailReport,
    pub r: f64,
    pub covering: CoveringSummary,
    pub n_good: usize,
    pub n_bad: usize,
    pub n_degenerate: usize,
    pub audits: Vec<BallAudit>,
    pub bad_mass: BadMassReport,
    pub mk_bound: MkBound,
    pub norm_sq: f64,
    pub omega_mass: f64,
    /// `1 + 4 log(M_k bound)/log 2`
    pub formal_exponent: f64,
    /// Largest `ln(24 d 2^d |Q|/|Q∩ω|)` admitted by the density premise.
    pub log_formal_base: f64,
    /// `ln κ + formal_exponent · log_formal_base`
    pub log_pipeline_constant: f64,
    /// `1 + log(1/ε) + D₂^{4/(1−s)}`
    pub phi: f64,
    pub k_effective: f64,
    /// `K` measured against `Φ²` (decaying density).
    pub k_effective_squared: f64,
    pub error_term_dominated: bool,
    pub steps: Vec<StepAudit>,
    pub failed_step: Option<String>,
    /// `ln ‖f‖²`
    pub lhs: f64,
    /// `ln` of the right-hand side with the pipeline constant.
    pub rhs: f64,
    /// `ln` of the right-hand side assembled from measured local estimates.
    pub rhs_observed: f64,
    pub passed: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_pos(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `‖f‖²_{L²(ω)}`; in d = 1 over the pieces of ω inside the cutoff radius.
pub fn sensor_mass(f: &SpectralFunction, omega: &SensorSet) -> Result<f64> {
    if omega.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: omega.dim(),
        });
    }
    if omega.is_whole() {
        return Ok(f.norm_sq());
    }
    if f.dim() != 1 {
        return Err(Error::domain("omega", "‖f‖²_ω in d = 2 is only available for ω = ℝ²"));
    }
    let l = f.cutoff_radius();
    let pieces = omega.pieces_in(-l, l)?;
    if pieces.is_empty() {
        return Ok(0.0);
    }
    let int = integrate_table(&[f], &[(0, 0.0)], &Region::intervals(pieces))?[0];
    let scale = f.norm_sq();
    if (int.value - int.coarse).abs() > 1e-8 * int.value.abs() + 1e-13 * scale {
        return Err(Error::QuadratureNotConverged {
            what: "sensor_mass",
            rel_change: int.rel_change,
        });
    }
    Ok(int.value.max(0.0))
}

/// `Φ = 1 + log(1/ε) + D₂^{4/(1−s)}`.
pub fn phi(eps: f64, d2: f64, s: f64) -> f64 {
    1.0 + (1.0 / eps).ln() + d2.powf(4.0 / (1.0 - s))
}

/// Smallest `K ≥ 0` with `‖f‖² ≤ e^{KΦ}‖f‖²_ω + εD₁²`, and whether the error
/// term alone already covers `‖f‖²`.
pub fn k_effective(norm_sq: f64, omega_mass: f64, eps: f64, d1: f64, phi: f64) -> (f64, bool) {
    let excess = norm_sq - eps * d1 * d1;
    if excess <= MEASURE_SLACK * norm_sq {
        return (0.0, true);
    }
    if omega_mass <= 0.0 {
        return (f64::INFINITY, false);
    }
    ((excess / omega_mass).ln().max(0.0) / phi, false)
}

fn validate_common(bound: &GSBound, profile: &RadiusProfile, eps: f64, f: &SpectralFunction) -> Result<GSBound> {
    profile.validate()?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::domain("eps", format!("ε = {eps} not in (0, 1]")));
    }
    let transferred = delta_weight_transfer(bound, profile.delta)?;
    if !(transferred.s() < 1.0) {
        return Err(Error::domain(
            "delta",
            format!("s = δν+μ = {} must be < 1", transferred.s()),
        ));
    }
    if !(1..=2).contains(&f.dim()) {
        return Err(Error::UnsupportedDimension(f.dim()));
    }
    Ok(transferred)
}

/// Diagonal `‖w^m ∂^β f‖ ≤ D₁ q_m` for `|β| = m ≤ m_cap`.
fn premise_bound(table: &DerivativeTable, bound_delta: &GSBound) -> Result<()> {
    for (i, &m) in table.orders.iter().enumerate() {
        let lhs = 0.5 * ln_pos(table.global[i]);
        let rhs = bound_delta.log_rhs(m, m);
        if lhs > rhs + MEASURE_SLACK {
            return Err(Error::Premise {
                step: "gs_bound",
                detail: format!(
                    "‖w^{m} ∂^{:?} f‖ = {:.6e} exceeds D₁ q_{m} = {:.6e}",
                    table.betas[i],
                    lhs.exp(),
                    rhs.exp()
                ),
            });
        }
    }
    Ok(())
}

fn premise_density(audits: &[BallAudit], target: &DensityTarget) -> Result<()> {
    for a in audits {
        let need = target.at(&a.center);
        if a.density < need * (1.0 - MEASURE_SLACK) {
            return Err(Error::Premise {
                step: "density",
                detail: format!(
                    "|Q∩ω|/|Q| = {:.6} < {:.6} on the ball centered at {:?}; ω must be certified on B(0, r_cov + ρ)",
                    a.density, need, a.center
                ),
            });
        }
    }
    Ok(())
}

fn run_pipeline(
    kind: &str,
    f: &SpectralFunction,
    bound: &GSBound,
    profile: &RadiusProfile,
    omega: &SensorSet,
    target: DensityTarget,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<UncertaintyReport> {
    let bound_delta = validate_common(bound, profile, eps, f)?;
    let dim = f.dim();
    if omega.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: omega.dim(),
        });
    }
    let norm_sq = f.norm_sq();
    let mut steps = Vec::new();

    let tail = tail_mass_check(f, bound, eps)?;
    steps.push(StepAudit::new("tail", tail.tail_mass, tail.allowed * (1.0 + MEASURE_SLACK), false));
    let r = tail.r;

    let cover = besicovitch_cover(profile, r.max(1.0), dim)?;
    let coverage = coverage_check(&cover, opts.coverage_samples, opts.seed);
    let covering = CoveringSummary {
        balls: cover.len(),
        target_radius: cover.target_radius,
        kappa_measured: cover.kappa_measured,
        kappa_declared: cover.kappa_declared,
        coverage_samples: coverage.samples,
        uncovered: coverage.uncovered,
    };
    steps.push(StepAudit::new("coverage", coverage.uncovered as f64, 0.0, false));
    steps.push(StepAudit::new(
        "overlap_constant",
        cover.kappa_measured as f64,
        cover.kappa_declared as f64,
        false,
    ));
    let kappa = cover.kappa_declared;

    let cfg = ClassifierConfig::from_bound(eps, kappa, &bound_delta, opts.m_cap, dim)?;
    let table = DerivativeTable::new(f, cfg.m_cap, cfg.delta)?;
    premise_bound(&table, &bound_delta)?;
    let mkb = mk_bound(&cfg, profile)?;

    use rayon::prelude::*;
    let audits = (0..cover.len())
        .into_par_iter()
        .map(|k| audit_ball(&table, k, &cover.ball(k), &cfg, omega, profile, mkb.log_bound))
        .collect::<Result<Vec<_>>>()?;
    premise_density(&audits, &target)?;

    let classes: Vec<&Classification> = audits.iter().map(|a| &a.classification).collect();
    let q0_mass = crate::spectral::mass(f, &Region::Exterior { radius: cover.target_radius })?;
    let bad = bad_mass_report(&classes, q0_mass, eps, bound.d1);
    steps.push(StepAudit::new("good_bad", bad.lhs, bad.rhs * (1.0 + MEASURE_SLACK), false));

    let active: Vec<&BallAudit> = audits.iter().filter(|a| a.is_active()).collect();
    let no_witness = active
        .iter()
        .filter(|a| !a.witness.as_ref().is_some_and(|w| w.verified))
        .count();
    steps.push(StepAudit::new("pointwise_witness", no_witness as f64, 0.0, false));
    let worst_mk = active
        .iter()
        .filter_map(|a| a.mk_bruteforce.map(|m| m.log_mk))
        .fold(f64::NEG_INFINITY, f64::max);
    let mk_overflow = active.iter().any(|a| a.mk_bruteforce.is_some_and(|m| m.overflow));
    steps.push(StepAudit::new(
        "mk_bound",
        if mk_overflow { f64::INFINITY } else { worst_mk },
        mkb.log_bound,
        true,
    ));
    let worst_local = active
        .iter()
        .filter_map(|a| a.local.as_ref().map(|l| if l.passed { -l.log_ratio() } else { f64::INFINITY }))
        .fold(f64::NEG_INFINITY, f64::max);
    steps.push(StepAudit::new("local_estimate", worst_local, 0.0, true));

    let omega_mass = sensor_mass(f, omega)?;
    let good_omega: f64 = active.iter().filter_map(|a| a.local.as_ref().map(|l| l.mass_q_omega)).sum();
    steps.push(StepAudit::new(
        "overlap_sum",
        good_omega,
        kappa as f64 * omega_mass * (1.0 + MEASURE_SLACK),
        false,
    ));
    let all_mass: f64 = audits.iter().map(|a| a.classification.mass_q).sum::<f64>() + q0_mass;
    steps.push(StepAudit::new("partition", norm_sq * (1.0 - MEASURE_SLACK), all_mass, false));

    // Measured chain: local estimates with brute-force M_k.
    let mut rhs_observed = ln_pos(bad.lhs);
    for a in &active {
        if let Some(l) = &a.local {
            rhs_observed = log_add(rhs_observed, l.log_lhs);
        }
    }
    let lhs = ln_pos(norm_sq);
    steps.push(StepAudit::new("measured_chain", lhs, rhs_observed + MEASURE_SLACK, true));

    let d = dim as f64;
    let base_const = 24.0 * d * 2f64.powi(dim as i32);
    let (log_formal_base, density_shape) = match target {
        DensityTarget::Constant { gamma } => ((base_const / gamma).ln(), None),
        DensityTarget::Decaying { gamma0, a } => {
            let center_rhs = (1.0 + a) * 2f64.ln() + a * profile.r0.ln() - a * (1.0 - profile.eta).ln() + a * r.ln();
            let center_lhs = audits
                .iter()
                .map(|b| {
                    let y = b.center.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (1.0 + y.powf(a)).ln()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            steps.push(StepAudit::new("center_bound", center_lhs, center_rhs, true));
            ((base_const / gamma0).ln() + center_rhs, Some(()))
        }
    };
    let formal_exponent = 1.0 + 4.0 * mkb.log_bound / std::f64::consts::LN_2;
    let log_pipeline_constant = (kappa as f64).ln() + formal_exponent * log_formal_base;
    let rhs = log_add(log_pipeline_constant + ln_pos(omega_mass), ln_pos(eps * bound.d1 * bound.d1));
    steps.push(StepAudit::new("formal_chain", lhs, rhs, true));

    let phi_v = phi(eps, bound.d2, bound_delta.s());
    let (k_effective, dominated) = k_effective(norm_sq, omega_mass, eps, bound.d1, phi_v);
    let k_effective_squared = if density_shape.is_some() {
        k_effective / phi_v
    } else {
        k_effective
    };

    let failed_step = steps.iter().find(|s| !s.passed).map(|s| s.step.clone());
    let n_good = audits.iter().filter(|a| a.is_good() && !a.classification.degenerate).count();
    Ok(UncertaintyReport {
        kind: kind.into(),
        inputs: PipelineInputs {
            label: opts.label.clone(),
            omega: omega.description.clone(),
            eps,
            density: target,
            profile: *profile,
            bound: bound.clone(),
            bound_delta,
            m_cap: cfg.m_cap,
        },
        tail,
        r,
        covering,
        n_good,
        n_bad: bad.n_bad,
        n_degenerate: bad.n_degenerate,
        audits,
        bad_mass: bad,
        mk_bound: mkb,
        norm_sq,
        omega_mass,
        formal_exponent,
        log_formal_base,
        log_pipeline_constant,
        phi: phi_v,
        k_effective,
        k_effective_squared,
        error_term_dominated: dominated,
        passed: failed_step.is_none(),
        failed_step,
        steps,
        lhs,
        rhs,
        rhs_observed,
    })
}

/// Full pipeline for a sensor set of constant density `γ`.
pub fn verify_uncertainty(
    f: &SpectralFunction,
    bound: &GSBound,
    profile: &RadiusProfile,
    omega: &SensorSet,
    gamma: f64,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<UncertaintyReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain("gamma", format!("γ = {gamma} not in (0, 1]")));
    }
    run_pipeline(
        "uncertainty",
        f,
        bound,
        profile,
        omega,
        DensityTarget::Constant { gamma },
        eps,
        opts,
    )
}

/// Full pipeline for density `γ₀/(1+|x|^a)`; also checks the center bound
/// `1+|y_k|^a ≤ 2^{1+a} r₀^a (1−η)^{−a} r^a` and reports `K` against `Φ²`.
#[allow(clippy::too_many_arguments)]
pub fn verify_uncertainty_decay(
    f: &SpectralFunction,
    bound: &GSBound,
    profile: &RadiusProfile,
    omega: &SensorSet,
    gamma0: f64,
    a: f64,
    eps: f64,
    opts: &PipelineOptions,
) -> Result<UncertaintyReport> {
    if !(gamma0 > 0.0 && gamma0 <= 1.0) {
        return Err(Error::domain("gamma0", format!("γ₀ = {gamma0} not in (0, 1]")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::domain("a", format!("a = {a} must be ≥ 0")));
    }
    run_pipeline(
        "uncertainty-decay",
        f,
        bound,
        profile,
        omega,
        DensityTarget::Decaying { gamma0, a },
        eps,
        opts,
    )
}

/// One member of a `K_effective` sweep.
#[derive(Debug, Clone)]
pub struct SweepMember {
    pub label: String,
    pub f: SpectralFunction,
    pub bound: GSBound,
    pub omega: SensorSet,
    pub gamma: f64,
    /// `s` of the transferred bound.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub gamma: f64,
    pub eps: f64,
    pub omega_mass: f64,
    pub k_effective: f64,
    /// `K_effective / (1 + log(1/ε))`
    pub normalized: f64,
    pub error_term_dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Per label: `max/min` of the normalized `K_effective` over the ε grid,
    /// restricted to rows that are not error-term dominated and have `K > 0`.
    pub spread: Vec<(String, Option<f64>)>,
    pub max_spread: Option<f64>,
}

/// `K_effective` for each member across an ε grid.
pub fn k_effective_sweep(members: &[SweepMember], eps_grid: &[f64]) -> Result<SweepTable> {
    let mut rows = Vec::new();
    let mut spread = Vec::new();
    for m in members {
        let omega_mass = sensor_mass(&m.f, &m.omega)?;
        if omega_mass <= 0.0 && m.f.norm_sq() > 0.0 {
            return Err(Error::domain("omega", format!("{}: ω carries no mass of f", m.label)));
        }
        let mut vals = Vec::new();
        for &eps in eps_grid {
            let p = phi(eps, m.bound.d2, m.s);
            let (k, dominated) = k_effective(m.f.norm_sq(), omega_mass, eps, m.bound.d1, p);
            let normalized = k / (1.0 + (1.0 / eps).ln());
            if !dominated && k > 0.0 {
                vals.push(normalized);
            }
            rows.push(SweepRow {
                label: m.label.clone(),
                gamma: m.gamma,
                eps,
                omega_mass,
                k_effective: k,
                normalized,
                error_term_dominated: dominated,
            });
        }
        let s = if vals.len() >= 2 {
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            Some(hi / lo)
        } else {
            None
        };
        spread.push((m.label.clone(), s));
    }
    let max_spread = spread.iter().filter_map(|(_, s)| *s).reduce(f64::max);
    Ok(SweepTable { rows, spread, max_spread })
}
