//! Scalar helpers over `libm` so the crate stays `no_std`.

pub const LOG2_E: f64 = core::f64::consts::LOG2_E;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `ln sum_k w_k exp(e_k)` over pairs with `w_k > 0`, shifted by the largest
/// exponent. Returns `-inf` if every weight is zero.
pub fn log_sum_exp_weighted(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let top = terms.clone().filter(|&(_, w)| w > 0.0).map(|(e, _)| e).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.filter(|&(_, w)| w > 0.0).map(|(e, w)| w * exp(e - top)).sum();
    top + ln(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_log_sum_exp() {
        let v = log_sum_exp_weighted([(0.0, 0.5), (0.0, 0.5)].into_iter());
        assert!(v.abs() < 1e-16);
        let v = log_sum_exp_weighted([(-1000.0, 1.0), (-1001.0, 1.0)].into_iter());
        assert!((v - (-1000.0 + ln(1.0 + exp(-1.0)))).abs() < 1e-12);
        assert_eq!(log_sum_exp_weighted([(3.0, 0.0)].into_iter()), f64::NEG_INFINITY);
    }
}
