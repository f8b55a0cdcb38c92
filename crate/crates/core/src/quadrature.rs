//! Gaussian quadrature rules.
//!
//! Nodes come from the Golub-Welsch eigenvalue problem and are then polished
//! with a few Newton steps on the three-term recurrence, so the rules stay
//! accurate at the orders used here (a few hundred nodes at most).
//!
//! Rules are immutable and cached per order; [`gauss_legendre`] and
//! [`gauss_hermite`] hand out shared references.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::basis::hermite_functions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Weight `e^{-x^2}` on the real line.
    GaussHermite,
    /// Unit weight on an interval (stored on `[-1, 1]`).
    GaussLegendre,
    /// Tensor product of two one-dimensional rules.
    TensorProduct,
}

/// A quadrature rule: nodes, positive weights and the number of points.
///
/// For one-dimensional rules `nodes` holds scalars; tensor rules store
/// interleaved `(x, y)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// Highest polynomial degree integrated exactly (per axis for tensor rules).
    pub fn exact_degree(&self) -> usize {
        2 * self.order - 1
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integrates a scalar function with this rule (one-dimensional rules).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Maps a Gauss-Legendre rule from `[-1, 1]` onto `[a, b]`.
    pub fn mapped_to(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// Tensor product of two one-dimensional rules.
pub fn tensor_product(a: &QuadratureRule, b: &QuadratureRule) -> QuadratureRule {
    let mut nodes = Vec::with_capacity(2 * a.len() * b.len());
    let mut weights = Vec::with_capacity(a.len() * b.len());
    for (&x, &wx) in a.nodes.iter().zip(&a.weights) {
        for (&y, &wy) in b.nodes.iter().zip(&b.weights) {
            nodes.push(x);
            nodes.push(y);
            weights.push(wx * wy);
        }
    }
    QuadratureRule {
        kind: QuadratureKind::TensorProduct,
        nodes,
        weights,
        order: a.order.min(b.order),
    }
}

fn golub_welsch(order: usize, offdiag: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = offdiag(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn build_gauss_legendre(order: usize) -> QuadratureRule {
    let (mut nodes, _) = golub_welsch(order, |k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    });
    let mut weights = Vec::with_capacity(order);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = legendre_with_derivative(order, *x);
            *x -= p / dp;
        }
        let (_, dp) = legendre_with_derivative(order, *x);
        weights.push(2.0 / ((1.0 - *x * *x) * dp * dp));
    }
    QuadratureRule {
        kind: QuadratureKind::GaussLegendre,
        nodes,
        weights,
        order,
    }
}

fn build_gauss_hermite(order: usize) -> QuadratureRule {
    let (mut nodes, _) = golub_welsch(order, |k| (k as f64 / 2.0).sqrt());
    let mut buf = vec![0.0; order + 1];
    let mut weights = Vec::with_capacity(order);
    for x in nodes.iter_mut() {
        // Newton on h_n, using h_n' = sqrt(2n) h_{n-1} - x h_n.
        for _ in 0..3 {
            hermite_functions(*x, &mut buf);
            let h = buf[order];
            let dh = (2.0 * order as f64).sqrt() * buf[order - 1] - *x * h;
            if dh != 0.0 {
                *x -= h / dh;
            }
        }
        hermite_functions(*x, &mut buf);
        // Christoffel number times e^{x^2}: 1 / sum_{k<n} h_k(x)^2.
        let s: f64 = buf[..order].iter().map(|h| h * h).sum();
        weights.push((-*x * *x).exp() / s);
    }
    QuadratureRule {
        kind: QuadratureKind::GaussHermite,
        nodes,
        weights,
        order,
    }
}

/// Gauss-Hermite weights multiplied by `e^{x_i^2}`, computed without
/// over/underflow. These integrate `g(x)` directly when `g` is a product of
/// two Hermite functions (or such a product times a low-degree polynomial).
pub fn hermite_function_weights(rule: &QuadratureRule) -> Vec<f64> {
    let mut buf = vec![0.0; rule.order];
    rule.nodes
        .iter()
        .map(|&x| {
            hermite_functions(x, &mut buf);
            1.0 / buf.iter().map(|h| h * h).sum::<f64>()
        })
        .collect()
}

type Cache = Mutex<HashMap<(QuadratureKind, usize), Arc<QuadratureRule>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(kind: QuadratureKind, order: usize) -> Result<Arc<QuadratureRule>> {
    if order == 0 || order > 1024 {
        return Err(Error::domain("order", format!("{order} not in 1..=1024")));
    }
    if let Some(rule) = cache().lock().expect("quadrature cache poisoned").get(&(kind, order)) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(match kind {
        QuadratureKind::GaussLegendre => build_gauss_legendre(order),
        QuadratureKind::GaussHermite => build_gauss_hermite(order),
        QuadratureKind::TensorProduct => unreachable!("tensor rules are not cached"),
    });
    cache()
        .lock()
        .expect("quadrature cache poisoned")
        .insert((kind, order), rule.clone());
    Ok(rule)
}

/// Gauss-Legendre rule on `[-1, 1]` with `order` nodes.
pub fn gauss_legendre(order: usize) -> Result<Arc<QuadratureRule>> {
    cached(QuadratureKind::GaussLegendre, order)
}

/// Gauss-Hermite rule for the weight `e^{-x^2}` with `order` nodes.
pub fn gauss_hermite(order: usize) -> Result<Arc<QuadratureRule>> {
    cached(QuadratureKind::GaussHermite, order)
}

/// `∫ x^{2k} e^{-x^2} dx = Γ(k + 1/2)`.
pub fn gaussian_even_moment(k: usize) -> f64 {
    // (2k-1)!! / 2^k * sqrt(pi)
    let mut m = PI.sqrt();
    for j in 1..=k {
        m *= (2 * j - 1) as f64 / 2.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_monomials_exactly() {
        for order in [1usize, 2, 5, 16, 32, 64] {
            let rule = gauss_legendre(order).unwrap();
            for deg in 0..=rule.exact_degree() {
                let got = rule.integrate(|x| x.powi(deg as i32));
                let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "order {order} deg {deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn hermite_integrates_even_gaussian_moments() {
        for order in [1usize, 4, 10, 20, 40] {
            let rule = gauss_hermite(order).unwrap();
            for k in 0..order {
                let got = rule.integrate(|x| x.powi(2 * k as i32));
                let want = gaussian_even_moment(k);
                assert!(
                    ((got - want) / want).abs() < 1e-12,
                    "order {order} k {k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn hermite_function_weights_match_plain_weights() {
        let rule = gauss_hermite(30).unwrap();
        let fw = hermite_function_weights(&rule);
        for ((&x, &w), &v) in rule.nodes.iter().zip(&rule.weights).zip(&fw) {
            assert_relative_eq!(w * (x * x).exp(), v, max_relative = 1e-10);
        }
    }

    #[test]
    fn tensor_rule_integrates_separable_moments() {
        let a = gauss_legendre(6).unwrap();
        let t = tensor_product(&a, &a);
        let s: f64 = t
            .nodes
            .chunks(2)
            .zip(&t.weights)
            .map(|(p, w)| w * p[0].powi(2) * p[1].powi(4))
            .sum();
        assert_relative_eq!(s, (2.0 / 3.0) * (2.0 / 5.0), max_relative = 1e-14);
    }

    #[test]
    fn zero_order_rejected() {
        assert!(gauss_legendre(0).is_err());
    }
}
