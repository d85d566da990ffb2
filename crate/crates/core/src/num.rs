//! Scalar math shims.
//!
//! In `no_std` builds `f64` has no inherent `exp`/`ln`/... methods, so every
//! transcendental call in this crate goes through these free functions. They
//! delegate to `libm` in all build modes, which keeps test builds (std) and
//! release builds (no_std) bit-identical.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Logistic sigmoid, written to avoid overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// libm and the platform libm may differ in the last ulp, so compare
    /// with a tight relative tolerance rather than bitwise. (Bit-identity
    /// across our own build modes holds trivially: both call libm.)
    fn close(a: f64, b: f64) {
        let tol = 4.0 * f64::EPSILON * b.abs().max(1.0);
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn matches_std() {
        for &x in &[-3.25f64, -0.5, 0.0, 0.7, 2.0, 11.5] {
            close(exp(x), x.exp());
            close(tanh(x), x.tanh());
            close(sin(x), x.sin());
            close(cos(x), x.cos());
        }
        for &x in &[0.1f64, 1.0, 2.5, 100.0] {
            close(ln(x), x.ln());
            close(sqrt(x), x.sqrt());
            close(log10(x), x.log10());
        }
        close(powf(2.0, 0.5), 2.0f64.powf(0.5));
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert!(sigmoid(1000.0) <= 1.0);
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        // Symmetry: sigmoid(-x) = 1 - sigmoid(x).
        for &x in &[0.3f64, 1.7, 5.0, 30.0] {
            assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        }
    }
}
