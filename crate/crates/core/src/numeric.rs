//! Scalar helpers shared by the KL and oracle code.

#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;

/// `u - ln(1 + u)`, accurate for small `|u|`. Non-negative for `u > -1`.
pub(crate) fn log1p_gap(u: f64) -> f64 {
    if u.abs() < 0.1 {
        // u^2/2 - u^3/3 + u^4/4 - ...; 24 terms reach f64 precision at |u| = 0.1
        let mut term = u * u;
        let mut sum = 0.0;
        for k in 2..26 {
            sum += term / k as f64;
            term *= -u;
        }
        sum
    } else {
        u - u.ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_series_joins_direct_form() {
        for u in [-0.099_999, 0.099_999, -0.1, 0.1] {
            let direct = u - u.ln_1p();
            assert!((log1p_gap(u) - direct).abs() < 1e-15, "{u}");
        }
        assert_eq!(log1p_gap(0.0), 0.0);
        let tiny = 1e-10;
        assert!((log1p_gap(tiny) / (tiny * tiny / 2.0) - 1.0).abs() < 1e-9);
    }
}
