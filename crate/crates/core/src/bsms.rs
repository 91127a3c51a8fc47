//! Closed-form nonanticipative rate-distortion function of the binary
//! symmetric Markov source under Hamming distortion.
//!
//! For flip probability `p` and distortion `D <= 1/2`,
//! `R(D) = H(m) - H(D)` with `m = 1 - p - D + 2pD`, and the optimal
//! reproduction is the memory-1 kernel `P(y_i | x_i, y_{i-1})` with
//!
//! ```text
//!            (x,y_prev) = (0,0)   (0,1)   (1,0)   (1,1)
//!   y = 0          alpha    beta  1-beta 1-alpha
//!   y = 1        1-alpha  1-beta    beta   alpha
//! ```
//!
//! where `alpha = (1-p)(1-D)/m` and `beta = p(1-D)/(p+D-2pD)`. Note that
//! `m = P(X_i = Y_{i-1})` in the stationary regime.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg, Result};
use crate::math::ln;
use crate::probability::{entropy_binary, Alphabet, StochasticKernel};
use crate::solver::RdPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsmsClosedForm {
    pub p: f64,
    pub distortion: f64,
    /// `1 - p - D + 2pD`.
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rate_bits: f64,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return arg(alloc::format!("BSMS flip probability {p} must lie in (0, 1)"));
    }
    Ok(())
}

pub fn bsms_rate(p: f64, distortion: f64) -> Result<BsmsClosedForm> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&distortion) {
        return arg(alloc::format!("distortion {distortion} must lie in [0, 1]"));
    }
    let d = distortion;
    let m = 1.0 - p - d + 2.0 * p * d;
    let alpha = (1.0 - p) * (1.0 - d) / m;
    let beta = p * (1.0 - d) / (p + d - 2.0 * p * d);
    let rate_bits = if d <= 0.5 { (entropy_binary(m)? - entropy_binary(d)?).max(0.0) } else { 0.0 };
    Ok(BsmsClosedForm { p, distortion: d, m, alpha, beta, rate_bits })
}

/// Tilt parameter of the optimal kernel, `s = ln(D / (1 - D))` (natural
/// log); zero on the rate-0 branch `D >= 1/2`.
pub fn bsms_tilt(distortion: f64) -> f64 {
    if distortion >= 0.5 {
        0.0
    } else {
        ln(distortion / (1.0 - distortion))
    }
}

/// Optimal reproduction kernel `P(y_i | x_i, y_{i-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionKernel {
    kernel: StochasticKernel,
    alpha: f64,
    beta: f64,
    lossless: bool,
}

impl ReproductionKernel {
    /// Kernel with input factors `(x, y_prev)` and output `y`.
    pub fn kernel(&self) -> &StochasticKernel {
        &self.kernel
    }

    pub fn into_kernel(self) -> StochasticKernel {
        self.kernel
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Set for `D = 0`, where the kernel is `y = x` deterministically.
    pub fn is_lossless(&self) -> bool {
        self.lossless
    }

    /// Rows `y in {0, 1}`, columns `(x, y_prev)` in lexicographic order.
    pub fn as_printed_matrix(&self) -> [[f64; 4]; 2] {
        let mut out = [[0.0; 4]; 2];
        for col in 0..4 {
            for (y, row) in out.iter_mut().enumerate() {
                row[col] = self.kernel.get(col, y);
            }
        }
        out
    }
}

pub fn bsms_kernel(p: f64, distortion: f64) -> Result<ReproductionKernel> {
    check_p(p)?;
    if !(0.0..=0.5).contains(&distortion) {
        return arg(alloc::format!("kernel is defined for distortion in (0, 1/2], got {distortion}"));
    }
    let cf = bsms_rate(p, distortion)?;
    let (a, b) = (cf.alpha, cf.beta);
    // rows (x, y_prev) = (0,0), (0,1), (1,0), (1,1); columns y = 0, 1
    let matrix = vec![a, 1.0 - a, b, 1.0 - b, 1.0 - b, b, 1.0 - a, a];
    let kernel = StochasticKernel::new(vec![Alphabet::binary(), Alphabet::binary()], Alphabet::binary(), matrix)?;
    Ok(ReproductionKernel { kernel, alpha: a, beta: b, lossless: distortion == 0.0 })
}

/// Closed-form rate-distortion curve over an ascending grid.
pub fn bsms_rd_curve(p: f64, grid: &[f64]) -> Result<Vec<RdPoint>> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return arg("distortion grid must be sorted ascending");
    }
    grid.iter()
        .map(|&d| {
            let cf = bsms_rate(p, d)?;
            Ok(RdPoint { distortion: d, rate_bits: cf.rate_bits, s: bsms_tilt(d), iterations: 0, residual: 0.0 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point() {
        let cf = bsms_rate(0.25, 0.1).unwrap();
        assert!((cf.m - 0.7).abs() < 1e-15);
        assert!((cf.alpha - 27.0 / 28.0).abs() < 1e-12);
        assert!((cf.beta - 0.75).abs() < 1e-12);
        // H(0.7) - H(0.1)
        assert!((cf.rate_bits - 0.412_295_305_641_411_5).abs() < 1e-9);
    }

    #[test]
    fn half_distortion_gives_zero_rate() {
        for p in [0.1, 0.25, 0.6] {
            assert!(bsms_rate(p, 0.5).unwrap().rate_bits.abs() < 1e-15);
            assert_eq!(bsms_rate(p, 0.7).unwrap().rate_bits, 0.0);
        }
    }

    #[test]
    fn zero_distortion_is_entropy_rate() {
        let cf = bsms_rate(0.25, 0.0).unwrap();
        assert!((cf.rate_bits - entropy_binary(0.25).unwrap()).abs() < 1e-15);
        assert!((cf.rate_bits - 0.811_278_124_459_132_8).abs() < 1e-12);
        let k = bsms_kernel(0.25, 0.0).unwrap();
        assert!(k.is_lossless());
        assert_eq!((k.alpha(), k.beta()), (1.0, 1.0));
    }

    #[test]
    fn memoryless_case() {
        let cf = bsms_rate(0.5, 0.1).unwrap();
        assert!((cf.m - 0.5).abs() < 1e-15);
        assert!((cf.rate_bits - (1.0 - entropy_binary(0.1).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn printed_matrix_layout() {
        let k = bsms_kernel(0.25, 0.1).unwrap();
        let m = k.as_printed_matrix();
        let (a, b) = (27.0 / 28.0, 0.75);
        let expect = [[a, b, 1.0 - b, 1.0 - a], [1.0 - a, 1.0 - b, b, a]];
        for r in 0..2 {
            for c in 0..4 {
                assert!((m[r][c] - expect[r][c]).abs() < 1e-12);
            }
        }
        // bit flip of (x, y_prev, y)
        for x in 0..2 {
            for yp in 0..2 {
                for y in 0..2 {
                    let v = k.kernel().get(x * 2 + yp, y);
                    let f = k.kernel().get((1 - x) * 2 + (1 - yp), 1 - y);
                    assert_eq!(v, f);
                }
            }
        }
    }

    #[test]
    fn argument_errors() {
        assert!(bsms_rate(0.0, 0.1).is_err());
        assert!(bsms_rate(1.0, 0.1).is_err());
        assert!(bsms_rate(0.3, 1.1).is_err());
        assert!(bsms_kernel(0.3, 0.6).is_err());
        assert!(bsms_kernel(0.3, -0.1).is_err());
        assert!(bsms_rd_curve(0.3, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let c = bsms_rd_curve(0.25, &[0.0, 0.5]).unwrap();
        assert!((c[0].rate_bits - 0.811_278_124_459_132_8).abs() < 1e-12);
        assert!(c[1].rate_bits.abs() < 1e-15);
        let c = bsms_rd_curve(0.3, &[0.2]).unwrap();
        // H(0.62) - H(0.2)
        let expect = entropy_binary(0.62).unwrap() - entropy_binary(0.2).unwrap();
        assert!((c[0].rate_bits - expect).abs() < 1e-15);
        assert!((c[0].rate_bits - 0.236_113_927_338_937_2).abs() < 1e-12);
    }
}
