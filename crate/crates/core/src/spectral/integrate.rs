//! Quadrature of squared Hermite expansions over regions of ℝ^d.
//!
//! One-dimensional regions use composite Gauss-Legendre panels clipped to
//! the numerical support `[-X, X]` of the integrand (see
//! [`SpectralFunction::cutoff_radius`]). Two-dimensional balls use a polar
//! rule (radial Gauss-Legendre panels, trapezoidal angles); the whole plane
//! uses a tensor Gauss-Hermite rule with Hermite-function weights.
//!
//! Every integral is computed at two refinement levels (panel count or
//! Hermite order doubled) and reported together with the relative change.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::hermite_functions;
use super::SpectralFunction;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_legendre, hermite_function_weights};

pub const PANEL_LENGTH: f64 = 0.5;
pub const PANEL_ORDER: usize = 20;
/// Relative change under refinement accepted as converged.
pub const REFINEMENT_TOL: f64 = 1e-8;
/// Integrals below this are treated as exact zeros by the refinement check.
pub const NEGLIGIBLE: f64 = 1e-280;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Whole,
    Ball { center: Vec<f64>, radius: f64 },
    /// `ℝ^d ∖ B(0, radius)`
    Exterior { radius: f64 },
    /// Finite union of intervals (d = 1); endpoints may be infinite.
    Intervals { pieces: Vec<(f64, f64)> },
}

impl Region {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        Region::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn intervals(pieces: Vec<(f64, f64)>) -> Self {
        Region::Intervals { pieces }
    }
}

/// A squared-norm style integral with its refinement record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub coarse: f64,
    pub rel_change: f64,
}

impl Integral {
    pub fn converged(&self, tol: f64) -> bool {
        self.rel_change <= tol
    }
}

/// `‖w_δ^n ∂^β f‖_{L²(region)}` together with the refinement record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub rel_change: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct NodeSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeSet {
    fn push(&mut self, p: &[f64], w: f64) {
        self.points.extend_from_slice(p);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }
}

/// Composite Gauss-Legendre nodes on `[a, b]`.
pub(crate) fn push_line_nodes(a: f64, b: f64, level: u32, set: &mut NodeSet) {
    if !(b > a) {
        return;
    }
    let h = PANEL_LENGTH / f64::from(1u32 << level);
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let rule = gauss_legendre(PANEL_ORDER).expect("fixed panel order is valid");
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (x, w) in rule.mapped_to(lo, lo + width) {
            set.push(&[x], w);
        }
    }
}

fn polar_ball_nodes(center: &[f64], radius: f64, cutoff: f64, level: u32, set: &mut NodeSet) {
    let h = PANEL_LENGTH / f64::from(1u32 << level);
    let mut radial = NodeSet {
        dim: 1,
        ..Default::default()
    };
    push_line_nodes(0.0, radius, level, &mut radial);
    let angles = ((2.0 * std::f64::consts::PI * radius / h).ceil() as usize * PANEL_ORDER).max(32);
    let dtheta = 2.0 * std::f64::consts::PI / angles as f64;
    for (&r, &wr) in radial.points.iter().zip(&radial.weights) {
        for a in 0..angles {
            let th = a as f64 * dtheta;
            let p = [center[0] + r * th.cos(), center[1] + r * th.sin()];
            if p[0].hypot(p[1]) > cutoff {
                continue;
            }
            set.push(&p, wr * r * dtheta);
        }
    }
}

fn hermite_tensor_nodes(order: usize) -> Result<NodeSet> {
    let rule = gauss_hermite(order)?;
    let fw = hermite_function_weights(&rule);
    let mut set = NodeSet {
        dim: 2,
        ..Default::default()
    };
    for (&x, &wx) in rule.nodes.iter().zip(&fw) {
        for (&y, &wy) in rule.nodes.iter().zip(&fw) {
            set.push(&[x, y], wx * wy);
        }
    }
    Ok(set)
}

/// Nodes for `region` at a refinement level. `cutoff` is the numerical
/// support radius; `hermite_order` is used for the whole plane only.
pub(crate) fn region_nodes(
    region: &Region,
    dim: usize,
    cutoff: f64,
    hermite_order: usize,
    level: u32,
) -> Result<NodeSet> {
    let mut set = NodeSet {
        dim,
        ..Default::default()
    };
    match (dim, region) {
        (1, Region::Whole) => push_line_nodes(-cutoff, cutoff, level, &mut set),
        (1, Region::Ball { center, radius }) => {
            check_len(center, 1)?;
            let a = (center[0] - radius).max(-cutoff);
            let b = (center[0] + radius).min(cutoff);
            push_line_nodes(a, b, level, &mut set);
        }
        (1, Region::Exterior { radius }) => {
            push_line_nodes(-cutoff, -radius, level, &mut set);
            push_line_nodes(*radius, cutoff, level, &mut set);
        }
        (1, Region::Intervals { pieces }) => {
            for &(a, b) in pieces {
                push_line_nodes(a.max(-cutoff), b.min(cutoff), level, &mut set);
            }
        }
        (2, Region::Whole) => {
            let order = (hermite_order << level).min(1024);
            return hermite_tensor_nodes(order);
        }
        (2, Region::Ball { center, radius }) => {
            check_len(center, 2)?;
            polar_ball_nodes(center, *radius, cutoff, level, &mut set);
        }
        (2, Region::Exterior { .. }) => {
            return Err(Error::domain("region", "exterior regions in d = 2 are integrated as whole minus ball"));
        }
        (2, Region::Intervals { .. }) => {
            return Err(Error::domain("region", "interval regions require d = 1"));
        }
        (d, _) => return Err(Error::UnsupportedDimension(d)),
    }
    Ok(set)
}

fn check_len(center: &[f64], dim: usize) -> Result<()> {
    if center.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: center.len(),
        });
    }
    Ok(())
}

/// Values of every function at every node, laid out `[node][func]`.
pub(crate) fn values_at(funcs: &[&SpectralFunction], nodes: &NodeSet) -> Vec<f64> {
    let nf = funcs.len();
    let mut out = vec![0.0; nodes.len() * nf];
    if nf == 0 {
        return out;
    }
    let dim = nodes.dim;
    let len0 = funcs.iter().map(|f| f.shape()[0]).max().unwrap_or(1);
    let len1 = funcs.iter().map(|f| f.shape()[1]).max().unwrap_or(1);
    out.par_chunks_mut(nf).enumerate().for_each_init(
        || (vec![0.0; len0], vec![0.0; len1]),
        |(hx, hy), (k, slot)| {
            let p = nodes.point(k);
            hermite_functions(p[0], hx);
            if dim == 1 {
                for (s, f) in slot.iter_mut().zip(funcs) {
                    *s = f.coeffs().iter().zip(hx.iter()).map(|(c, h)| c * h).sum();
                }
            } else {
                hermite_functions(p[1], hy);
                for (s, f) in slot.iter_mut().zip(funcs) {
                    *s = f.contract_2d(hx, hy);
                }
            }
        },
    );
    out
}

fn relative_change(fine: f64, coarse: f64) -> f64 {
    if fine.abs() < NEGLIGIBLE && coarse.abs() < NEGLIGIBLE {
        0.0
    } else {
        (fine - coarse).abs() / fine.abs().max(coarse.abs())
    }
}

fn weight_at(p: &[f64], power: f64) -> f64 {
    if power == 0.0 {
        1.0
    } else {
        (1.0 + p.iter().map(|x| x * x).sum::<f64>()).powf(power)
    }
}

fn integrate_level(
    funcs: &[&SpectralFunction],
    pairs: &[(usize, f64)],
    region: &Region,
    dim: usize,
    cutoff: f64,
    hermite_order: usize,
    level: u32,
) -> Result<Vec<f64>> {
    if dim == 2 {
        if let Region::Exterior { radius } = region {
            let whole = integrate_level(funcs, pairs, &Region::Whole, 2, cutoff, hermite_order, level)?;
            let ball = integrate_level(
                funcs,
                pairs,
                &Region::ball(&[0.0, 0.0], *radius),
                2,
                cutoff,
                hermite_order,
                level,
            )?;
            return Ok(whole.iter().zip(&ball).map(|(w, b)| (w - b).max(0.0)).collect());
        }
    }
    let nodes = region_nodes(region, dim, cutoff, hermite_order, level)?;
    let vals = values_at(funcs, &nodes);
    let nf = funcs.len();
    let mut sums = vec![0.0; pairs.len()];
    for k in 0..nodes.len() {
        let p = nodes.point(k);
        let w = nodes.weights[k];
        for (s, &(i, power)) in sums.iter_mut().zip(pairs) {
            let v = vals[k * nf + i];
            *s += w * weight_at(p, power) * v * v;
        }
    }
    Ok(sums)
}

/// `∫_region (1+|x|²)^p g_i(x)² dx` for every `(i, p)` in `pairs`, at two
/// refinement levels. Each function is evaluated once per node, however
/// many powers refer to it.
pub fn integrate_table(
    funcs: &[&SpectralFunction],
    pairs: &[(usize, f64)],
    region: &Region,
) -> Result<Vec<Integral>> {
    let Some(first) = funcs.first() else {
        return Ok(Vec::new());
    };
    let dim = first.dim();
    if funcs.iter().any(|f| f.dim() != dim) {
        return Err(Error::domain("funcs", "mixed dimensions in one integration batch"));
    }
    if let Some(&(i, _)) = pairs.iter().find(|(i, _)| *i >= funcs.len()) {
        return Err(Error::domain("pairs", format!("function index {i} out of range")));
    }
    let max_deg = funcs.iter().map(|f| f.max_degree()).max().unwrap_or(0) as f64;
    let max_pow = pairs.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let cutoff = (2.0 * (max_deg + max_pow) + 1.0).sqrt() + super::TAIL_MARGIN;
    let hermite_order = max_deg as usize + max_pow.ceil() as usize + 8;
    let coarse = integrate_level(funcs, pairs, region, dim, cutoff, hermite_order, 0)?;
    let fine = integrate_level(funcs, pairs, region, dim, cutoff, hermite_order, 1)?;
    Ok(fine
        .into_iter()
        .zip(coarse)
        .map(|(value, coarse)| Integral {
            value,
            coarse,
            rel_change: relative_change(value, coarse),
        })
        .collect())
}

/// `∫_region (1+|x|²)^{p_i} g_i(x)² dx` for each function `g_i` and power
/// `p_i`, at two refinement levels.
pub fn integrate_weighted_squares(
    funcs: &[&SpectralFunction],
    powers: &[f64],
    region: &Region,
) -> Result<Vec<Integral>> {
    assert_eq!(funcs.len(), powers.len(), "one weight power per function");
    let pairs: Vec<(usize, f64)> = powers.iter().copied().enumerate().collect();
    integrate_table(funcs, &pairs, region)
}

/// `‖f‖²_{L²(region)}`, failing if the refinement check does not pass.
pub fn mass(f: &SpectralFunction, region: &Region) -> Result<f64> {
    let r = integrate_weighted_squares(&[f], &[0.0], region)?[0];
    if !r.converged(REFINEMENT_TOL) {
        return Err(Error::QuadratureNotConverged {
            what: "mass",
            rel_change: r.rel_change,
        });
    }
    Ok(r.value)
}

/// `‖w_δ^n ∂^β f‖_{L²(region)}` with `w_δ(x) = (1+|x|²)^{δ/2}`.
///
/// The derivative is exact (ladder operators); the weight is integrated by
/// quadrature at two refinement levels, and a relative change above
/// [`REFINEMENT_TOL`] is reported as an error.
pub fn weighted_norm(
    f: &SpectralFunction,
    n: usize,
    beta: &[usize],
    weight_delta: f64,
    region: &Region,
) -> Result<NormEstimate> {
    if !(0.0..=1.0).contains(&weight_delta) {
        return Err(Error::domain("weight_delta", format!("{weight_delta} not in [0, 1]")));
    }
    let g = f.partial(beta)?;
    let r = integrate_weighted_squares(&[&g], &[n as f64 * weight_delta], region)?[0];
    if !r.converged(REFINEMENT_TOL) {
        return Err(Error::QuadratureNotConverged {
            what: "weighted_norm",
            rel_change: r.rel_change,
        });
    }
    Ok(NormEstimate {
        norm: r.value.max(0.0).sqrt(),
        rel_change: r.rel_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn h(n: usize) -> SpectralFunction {
        SpectralFunction::hermite(n).unwrap()
    }

    #[test]
    fn weighted_norm_examples() {
        let h0 = h(0);
        let a = weighted_norm(&h0, 1, &[0], 1.0, &Region::Whole).unwrap();
        assert_abs_diff_eq!(a.norm, 1.5f64.sqrt(), epsilon = 1e-12);
        let b = weighted_norm(&h0, 0, &[0], 1.0, &Region::Whole).unwrap();
        assert_abs_diff_eq!(b.norm, 1.0, epsilon = 1e-12);
        let c = weighted_norm(&h0, 0, &[1], 1.0, &Region::Whole).unwrap();
        assert_abs_diff_eq!(c.norm, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(weighted_norm(&h(0), 1, &[0], 1.5, &Region::Whole).is_err());
    }

    #[test]
    fn parseval_holds_for_high_degree() {
        let coeffs: Vec<f64> = (0..=64).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let f = SpectralFunction::new_1d(coeffs).unwrap();
        let q = mass(&f, &Region::Whole).unwrap();
        assert!((q - f.norm_sq()).abs() < 1e-10 * f.norm_sq().max(1.0));
    }

    #[test]
    fn ball_and_exterior_partition_the_line() {
        let f = SpectralFunction::new_1d(vec![0.5, -0.3, 0.8, 0.1]).unwrap();
        let inside = mass(&f, &Region::ball(&[0.0], 1.7)).unwrap();
        let outside = mass(&f, &Region::Exterior { radius: 1.7 }).unwrap();
        assert_abs_diff_eq!(inside + outside, f.norm_sq(), epsilon = 1e-12);
    }

    #[test]
    fn two_dimensional_ball_mass_of_ground_state() {
        // ∫_{B(0,R)} h0(x)² h0(y)² = 1 - e^{-R²}
        let f = SpectralFunction::hermite_2d(0, 0).unwrap();
        for r in [0.5, 1.0, 2.0] {
            let m = mass(&f, &Region::ball(&[0.0, 0.0], r)).unwrap();
            assert_abs_diff_eq!(m, 1.0 - (-r * r).exp(), epsilon = 1e-12);
        }
        let whole = mass(&f, &Region::Whole).unwrap();
        assert_abs_diff_eq!(whole, 1.0, epsilon = 1e-12);
        let ext = mass(&f, &Region::Exterior { radius: 1.0 }).unwrap();
        assert_abs_diff_eq!(ext, (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn two_dimensional_parseval() {
        let coeffs: Vec<f64> = (0..30).map(|k| ((k * 7 % 5) as f64 - 2.0) / 3.0).collect();
        let f = SpectralFunction::new_2d(5, 6, coeffs).unwrap();
        let q = mass(&f, &Region::Whole).unwrap();
        assert_abs_diff_eq!(q, f.norm_sq(), epsilon = 1e-10);
    }
}
