//! L²-orthonormal Hermite functions via the three-term recurrence
//!
//! ```text
//! h_0(x)     = π^{-1/4} e^{-x²/2}
//! h_{n+1}(x) = sqrt(2/(n+1)) x h_n(x) - sqrt(n/(n+1)) h_{n-1}(x)
//! ```

use num_complex::Complex64;

/// π^{-1/4}
pub const PI_POW_MINUS_QUARTER: f64 = 0.751_125_544_464_942_5;

const RESCALE_AT: f64 = 1e150;
const RESCALE_BY: f64 = 1e-150;
const LN_RESCALE: f64 = 345.387_763_949_107_06; // 150 ln 10

/// Fills `out` with `h_0(x), ..., h_{out.len()-1}(x)`.
///
/// Far in the tail (`x² > 1000`) the Gaussian factor is carried in log form
/// so that high-degree functions do not flush to zero prematurely.
pub fn hermite_functions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if x * x <= 1000.0 {
        out[0] = PI_POW_MINUS_QUARTER * (-0.5 * x * x).exp();
        if out.len() > 1 {
            out[1] = std::f64::consts::SQRT_2 * x * out[0];
        }
        for n in 1..out.len() - 1 {
            let nf = n as f64;
            out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        }
        return;
    }
    // Scaled recurrence: p_n = h_n e^{x²/2 - L}, L the accumulated log scale.
    let mut log_scale = -0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = PI_POW_MINUS_QUARTER;
    out[0] = cur * log_scale.exp();
    for n in 0..out.len() - 1 {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_AT {
            cur *= RESCALE_BY;
            prev *= RESCALE_BY;
            log_scale += LN_RESCALE;
        }
        out[n + 1] = cur * log_scale.exp();
    }
}

/// Complex number stored as `mantissa · e^{log_scale}` so that the entire
/// extension of a Hermite expansion can be represented far into the
/// imaginary direction, where `|h_n(z)| ~ e^{(Im z)²/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledComplex {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl ScaledComplex {
    pub fn zero() -> Self {
        ScaledComplex {
            mantissa: Complex64::new(0.0, 0.0),
            log_scale: 0.0,
        }
    }

    /// `ln |value|` (−∞ for zero).
    pub fn log_modulus(&self) -> f64 {
        let m = self.mantissa.norm();
        if m == 0.0 {
            f64::NEG_INFINITY
        } else {
            m.ln() + self.log_scale
        }
    }

    /// The value in ordinary floating point, or `None` on overflow.
    pub fn to_complex(&self) -> Option<Complex64> {
        let v = self.mantissa * self.log_scale.exp();
        if v.re.is_finite() && v.im.is_finite() {
            Some(v)
        } else {
            None
        }
    }
}

/// Scaled complex Hermite values `p_n(z)` with `h_n(z) = p_n(z) e^{-z²/2 + log_scale}`.
///
/// All `p_n` share one `log_scale`; the recurrence rescales on the fly.
pub(crate) fn scaled_complex_hermite(z: Complex64, len: usize) -> (Vec<Complex64>, f64) {
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    if len == 0 {
        return (out, 0.0);
    }
    let mut log_scale = 0.0;
    out[0] = Complex64::new(PI_POW_MINUS_QUARTER, 0.0);
    if len > 1 {
        out[1] = std::f64::consts::SQRT_2 * z * out[0];
    }
    for n in 1..len.saturating_sub(1) {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * z * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out[n + 1] = next;
        if next.norm() > RESCALE_AT {
            for v in out[..=n + 1].iter_mut() {
                *v *= RESCALE_BY;
            }
            log_scale += LN_RESCALE;
        }
    }
    (out, log_scale)
}

/// `e^{-z²/2}` split into a unit-modulus phase and a real log modulus.
pub(crate) fn gaussian_factor(z: Complex64) -> (Complex64, f64) {
    let w = -0.5 * z * z;
    (Complex64::from_polar(1.0, w.im), w.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_state_at_origin() {
        let mut h = [0.0; 3];
        hermite_functions(0.0, &mut h);
        assert!((h[0] - std::f64::consts::PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(h[1], 0.0);
    }

    #[test]
    fn tail_branch_agrees_with_direct_branch() {
        // Evaluate just inside and just outside the switch-over radius.
        let mut a = vec![0.0; 90];
        let mut b = vec![0.0; 90];
        let x = 1000f64.sqrt();
        hermite_functions(x - 1e-12, &mut a);
        hermite_functions(x + 1e-12, &mut b);
        for n in 0..90 {
            let scale = a[n].abs().max(1e-300);
            assert!((a[n] - b[n]).abs() / scale < 1e-8, "n = {n}: {} vs {}", a[n], b[n]);
        }
    }

    #[test]
    fn deep_tail_keeps_high_degrees_nonzero() {
        let mut h = vec![0.0; 121];
        hermite_functions(35.0, &mut h);
        assert!(h[0] < 1e-260);
        assert!(h[120] > 1e100 * h[0]);
    }
}
