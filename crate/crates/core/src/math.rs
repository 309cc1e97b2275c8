//! Scalar helpers shared by every layer. All binary values are `±1`.

/// Threshold used for binarizing feature differences: `+1` iff `x > 0`.
#[inline]
pub fn q(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Sign binarization of a latent weight. `sign(0)` is `-1`, same tie rule as [`q`].
#[inline]
pub fn sign(w: f64) -> i8 {
    q(w)
}

/// Straight-through estimator for `sign`: the derivative is taken to be 1.
#[inline]
pub fn ste_sign_grad(upstream: f64) -> f64 {
    upstream
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + libm::log1p(exp(-x))
    } else {
        libm::log1p(exp(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_follows_strict_positivity() {
        assert_eq!(q(0.5), 1);
        assert_eq!(q(-0.3), -1);
        assert_eq!(q(0.0), -1);
        assert_eq!(q(-0.0), -1);
    }

    #[test]
    fn sign_ties_to_minus_one() {
        assert_eq!(sign(0.7), 1);
        assert_eq!(sign(-0.7), -1);
        assert_eq!(sign(0.0), -1);
    }

    #[test]
    fn ste_is_identity() {
        assert_eq!(ste_sign_grad(2.5), 2.5);
        assert_eq!(ste_sign_grad(0.0), 0.0);
        assert_eq!(ste_sign_grad(-1.2), -1.2);
    }
}
