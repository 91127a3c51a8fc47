//! Hoeffding-type bound for additive functionals of a uniformly ergodic Markov
//! chain, applied to the block distortion `S_n` of uncoded transmission:
//!
//! `P(S_n > (n + 1) d) <= exp(-lambda^2 ((n + 1) delta - 2 |f| m / lambda)^2
//!                             / (2 (n + 1) |f|^2 m^2))`
//!
//! with `d = delta + D`, valid for `n > 2 |f| m / (lambda delta)`.

use alloc::format;
use alloc::vec::Vec;

use crate::bsms::bsms_rate;
use crate::error::{arg, Error, Result};
use crate::math::exp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoeffdingParams {
    /// Minorization coefficient of the pair chain.
    pub lambda: f64,
    /// Sup-norm of the per-step function.
    pub f_norm: f64,
    /// Regeneration constant.
    pub m_regen: f64,
    /// Excess margin above the mean distortion.
    pub delta: f64,
    /// Stationary mean distortion.
    pub mean_distortion: f64,
}

impl HoeffdingParams {
    /// Unit `|f|` and `m`, as for Hamming distortion.
    pub fn new(lambda: f64, delta: f64, mean_distortion: f64) -> Result<Self> {
        let p = HoeffdingParams { lambda, f_norm: 1.0, m_regen: 1.0, delta, mean_distortion };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0)
            || !(self.f_norm > 0.0)
            || !(self.m_regen >= 1.0)
            || !(self.delta > 0.0)
            || !self.mean_distortion.is_finite()
        {
            return arg(format!("invalid Hoeffding parameters {self:?}"));
        }
        Ok(())
    }

    /// The bound holds for `n` strictly above this.
    pub fn threshold(&self) -> f64 {
        2.0 * self.f_norm * self.m_regen / (self.lambda * self.delta)
    }

    /// Per-letter excess threshold `d = delta + D`.
    pub fn d(&self) -> f64 {
        self.delta + self.mean_distortion
    }
}

/// `min{p, 1-p} * min{alpha, beta, 1-alpha, 1-beta}`, a lower bound on every
/// entry of the BSMS pair-chain transition matrix under the optimal kernel.
pub fn lambda_for_bsms(p: f64, distortion: f64) -> Result<f64> {
    if !(distortion > 0.0 && distortion < 0.5) {
        return arg(format!("distortion {distortion} must lie in (0, 1/2)"));
    }
    let cf = bsms_rate(p, distortion)?;
    let k = cf.alpha.min(cf.beta).min(1.0 - cf.alpha).min(1.0 - cf.beta);
    Ok(p.min(1.0 - p) * k)
}

/// Bound parameters for BSMS(p) at distortion `D` with unit `|f|` and `m`.
pub fn bsms_params(p: f64, distortion: f64, delta: f64) -> Result<HoeffdingParams> {
    HoeffdingParams::new(lambda_for_bsms(p, distortion)?, delta, distortion)
}

pub fn excess_bound(params: &HoeffdingParams, n: u64) -> Result<f64> {
    params.validate()?;
    let threshold = params.threshold();
    if !(n as f64 > threshold) {
        return Err(Error::Inapplicable { n, threshold });
    }
    let letters = n as f64 + 1.0;
    let fm = params.f_norm * params.m_regen;
    let gap = letters * params.delta - 2.0 * fm / params.lambda;
    let exponent = params.lambda * params.lambda * gap * gap / (2.0 * letters * fm * fm);
    Ok(exp(-exponent))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub n: u64,
    pub bound: f64,
}

/// Evaluates the bound on a grid. Grid points where the bound does not apply
/// are returned separately rather than failing the whole curve.
pub fn bound_curve(params: &HoeffdingParams, grid: &[u64]) -> Result<(Vec<BoundPoint>, Vec<u64>)> {
    params.validate()?;
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &n in grid {
        match excess_bound(params, n) {
            Ok(bound) => points.push(BoundPoint { n, bound }),
            Err(Error::Inapplicable { .. }) => skipped.push(n),
            Err(e) => return Err(e),
        }
    }
    Ok((points, skipped))
}
