//! Classical (anticipative) block rate-distortion function by brute-force
//! Blahut-Arimoto over the full block alphabet.
//!
//! Serves as an independent oracle: per letter it lower-bounds the
//! nonanticipative rate at the same horizon, and the optimal block kernel is
//! in general anticipative, which [`anticipation_witness`] measures.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg, Error, Result};
use crate::math::{exp, ln, LOG2_E};
use crate::probability::{
    causality_violation, Alphabet, Axis, DistortionSpec, JointMeasure, MarkovSource, StochasticKernel,
};

/// Default cap on `|X|^{n+1} |Y|^{n+1}`.
pub const BLOCK_CELL_BUDGET: u128 = 4096 * 4096;

/// Block source law and block distortion over `X^n -> Y^n` (`n + 1` letters).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInstance {
    horizon: usize,
    nx: usize,
    ny: usize,
    source: Vec<f64>,
    /// Row-major `|X|^{n+1} x |Y|^{n+1}`, summed letter distortions.
    distortion: Vec<f64>,
}

impl BlockInstance {
    pub fn new(source: &MarkovSource, rho: &DistortionSpec, horizon: usize) -> Result<Self> {
        Self::with_budget(source, rho, horizon, BLOCK_CELL_BUDGET)
    }

    pub fn with_budget(source: &MarkovSource, rho: &DistortionSpec, horizon: usize, budget: u128) -> Result<Self> {
        let nx = source.alphabet_size();
        if rho.source_size() != nx {
            return Err(Error::Composition("distortion matrix rows must match the source alphabet".into()));
        }
        let ny = rho.repro_size();
        let len = horizon as u32 + 1;
        let cells = (nx as u128)
            .checked_pow(len)
            .and_then(|a| (ny as u128).checked_pow(len).and_then(|b| a.checked_mul(b)))
            .unwrap_or(u128::MAX);
        if cells > budget {
            return Err(Error::Size { cells, budget });
        }
        let bx = nx.pow(len);
        let by = ny.pow(len);
        let t = source.transition();
        let init = source.initial().probs();
        let digits = |mut idx: usize, base: usize| {
            let mut d = vec![0; len as usize];
            for k in (0..len as usize).rev() {
                d[k] = idx % base;
                idx /= base;
            }
            d
        };
        let xs: Vec<Vec<usize>> = (0..bx).map(|i| digits(i, nx)).collect();
        let ys: Vec<Vec<usize>> = (0..by).map(|i| digits(i, ny)).collect();
        let probs = xs.iter().map(|x| x.windows(2).fold(init[x[0]], |w, p| w * t.get(p[0], p[1]))).collect();
        let mut distortion = Vec::with_capacity(bx * by);
        for x in &xs {
            for y in &ys {
                distortion.push(x.iter().zip(y).map(|(&a, &b)| rho.get(a, b)).sum());
            }
        }
        Ok(BlockInstance { horizon, nx, ny, source: probs, distortion })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn block_source(&self) -> &[f64] {
        &self.source
    }

    fn by(&self) -> usize {
        self.distortion.len() / self.source.len()
    }

    fn letters(&self) -> f64 {
        (self.horizon + 1) as f64
    }

    /// Per-letter `(D_min, D_max)` of the block problem.
    pub fn distortion_range(&self) -> (f64, f64) {
        let by = self.by();
        let d_min: f64 = self
            .source
            .iter()
            .zip(self.distortion.chunks(by))
            .map(|(&w, row)| w * row.iter().copied().fold(f64::INFINITY, f64::min))
            .sum();
        let d_max = (0..by).map(|y| self.expected_distortion_of(y)).fold(f64::INFINITY, f64::min);
        (d_min / self.letters(), d_max / self.letters())
    }

    fn expected_distortion_of(&self, y: usize) -> f64 {
        let by = self.by();
        self.source.iter().enumerate().map(|(x, &w)| w * self.distortion[x * by + y]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub max_iterations: usize,
    /// Stop Blahut-Arimoto once its upper and lower rate bounds are this
    /// close (nats per block).
    pub gap_tol: f64,
    /// Per-letter distortion tolerance of the search over `s`.
    pub d_tol: f64,
    pub max_steps: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig { max_iterations: 500_000, gap_tol: 1e-12, d_tol: 1e-11, max_steps: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSolution {
    pub rate_bits_per_letter: f64,
    pub distortion_per_letter: f64,
    pub s: f64,
    /// Optimal `P(y^n | x^n)`, inputs `X0..Xn`, output the block index of `Y0..Yn`.
    pub kernel: StochasticKernel,
    /// Output law `q(y^n)`.
    pub output: Vec<f64>,
    /// Final Blahut bound gap (nats per block).
    pub gap: f64,
}

struct Sweep {
    q: Vec<f64>,
    rate_nats: f64,
    distortion: f64,
    gap: f64,
}

/// Blahut-Arimoto at fixed slope `s`, starting from `q`.
fn blahut(inst: &BlockInstance, s: f64, q: &mut [f64], config: &BlockConfig) -> Result<Sweep> {
    let by = inst.by();
    let weights: Vec<f64> = inst.distortion.iter().map(|&d| exp(s * d)).collect();
    let mut z = vec![0.0; inst.source.len()];
    for _ in 0..config.max_iterations {
        for (zx, row) in z.iter_mut().zip(weights.chunks(by)) {
            *zx = row.iter().zip(q.iter()).map(|(w, qy)| w * qy).sum();
        }
        let mut c = vec![0.0; by];
        for ((&px, &zx), row) in inst.source.iter().zip(&z).zip(weights.chunks(by)) {
            if px > 0.0 {
                for (cy, w) in c.iter_mut().zip(row) {
                    *cy += px * w / zx;
                }
            }
        }
        // Bounds: I(p, P) is an upper bound, s D - E ln z - max ln c a lower one.
        let mut rate = 0.0;
        let mut dist = 0.0;
        for (x, (&px, &zx)) in inst.source.iter().zip(&z).enumerate() {
            if px == 0.0 {
                continue;
            }
            for y in 0..by {
                let pyx = q[y] * weights[x * by + y] / zx;
                if pyx > 0.0 {
                    rate += px * pyx * ln(pyx / q[y]);
                    dist += px * pyx * inst.distortion[x * by + y];
                }
            }
        }
        // The divergence above uses q as reference; the true mutual
        // information uses the induced output law q * c.
        let out_ln: f64 = q.iter().zip(&c).filter(|(&qy, &cy)| qy * cy > 0.0).map(|(&qy, &cy)| qy * cy * ln(cy)).sum();
        let mi = rate - out_ln;
        let max_ln_c =
            c.iter().zip(q.iter()).filter(|(_, &qy)| qy > 0.0).map(|(&cy, _)| ln(cy)).fold(f64::NEG_INFINITY, f64::max);
        let lower = s * dist
            - inst.source.iter().zip(&z).filter(|(&px, _)| px > 0.0).map(|(&px, &zx)| px * ln(zx)).sum::<f64>()
            - max_ln_c;
        let gap = mi - lower;
        for (qy, cy) in q.iter_mut().zip(&c) {
            *qy *= cy;
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        if gap <= config.gap_tol {
            return Ok(Sweep { q: q.to_vec(), rate_nats: mi.max(0.0), distortion: dist, gap });
        }
    }
    Err(Error::Numerical(format!(
        "block Blahut-Arimoto did not converge at s = {s} within {} iterations",
        config.max_iterations
    )))
}

fn kernel_from(inst: &BlockInstance, s: f64, q: &[f64]) -> Result<StochasticKernel> {
    let by = inst.by();
    let mut m = Vec::with_capacity(inst.distortion.len());
    for row in inst.distortion.chunks(by) {
        let w: Vec<f64> = row.iter().zip(q).map(|(&d, &qy)| qy * exp(s * d)).collect();
        let z: f64 = w.iter().sum();
        m.extend(w.into_iter().map(|v| v / z));
    }
    let input = vec![Alphabet::new(inst.nx)?; inst.horizon + 1];
    StochasticKernel::new(input, Alphabet::new(by)?, m)
}

/// Block rate-distortion function at per-letter distortion `d`.
/// Targets at or above `D_max` give the rate-0 solution.
pub fn block_rdf(inst: &BlockInstance, d: f64, config: &BlockConfig) -> Result<BlockSolution> {
    let (d_min, d_max) = inst.distortion_range();
    if !(d > d_min) {
        return Err(Error::Range { target: d, d_min, d_max });
    }
    let by = inst.by();
    if d >= d_max {
        let best = (0..by)
            .min_by(|&a, &b| inst.expected_distortion_of(a).total_cmp(&inst.expected_distortion_of(b)))
            .unwrap_or(0);
        let mut output = vec![0.0; by];
        output[best] = 1.0;
        let kernel = StochasticKernel::constant(
            vec![Alphabet::new(inst.nx)?; inst.horizon + 1],
            &crate::probability::Distribution::point(by, best)?,
        )?;
        return Ok(BlockSolution {
            rate_bits_per_letter: 0.0,
            distortion_per_letter: d_max,
            s: 0.0,
            kernel,
            output,
            gap: 0.0,
        });
    }
    let letters = inst.letters();
    let uniform = vec![1.0 / by as f64; by];
    let mut warm = uniform.clone();
    let eval = |s: f64, warm: &mut Vec<f64>| -> Result<Sweep> {
        let mut q = warm.clone();
        // Warm starts can sit on a face with zero mass; mix in a little uniform.
        q.iter_mut().zip(&uniform).for_each(|(a, u)| *a = 0.999 * *a + 0.001 * u);
        let sw = blahut(inst, s, &mut q, config)?;
        *warm = sw.q.clone();
        Ok(sw)
    };
    let mut hi = 0.0;
    let mut lo = -1.0;
    let mut cur = eval(lo, &mut warm)?;
    while cur.distortion / letters > d {
        hi = lo;
        lo *= 2.0;
        if lo < -1.0e3 {
            return Err(Error::Range { target: d, d_min, d_max });
        }
        cur = eval(lo, &mut warm)?;
    }
    let mut best = (lo, cur);
    for _ in 0..config.max_steps {
        if (best.1.distortion / letters - d).abs() <= config.d_tol || hi - lo < 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let sw = eval(mid, &mut warm)?;
        if sw.distortion / letters > d {
            hi = mid;
        } else {
            lo = mid;
        }
        if (sw.distortion / letters - d).abs() <= (best.1.distortion / letters - d).abs() {
            best = (mid, sw);
        }
    }
    let (s, sw) = best;
    if (sw.distortion / letters - d).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "block distortion search stalled at {} for target {d}",
            sw.distortion / letters
        )));
    }
    Ok(BlockSolution {
        rate_bits_per_letter: sw.rate_nats * LOG2_E / letters,
        distortion_per_letter: sw.distortion / letters,
        s,
        kernel: kernel_from(inst, s, &sw.q)?,
        output: sw.q,
        gap: sw.gap,
    })
}

/// Largest deviation of the solution from the tilted form
/// `P(y | x) = q(y) exp(s d(x, y)) / Z(x)`.
pub fn tilt_identity_residual(inst: &BlockInstance, sol: &BlockSolution) -> Result<f64> {
    let k = kernel_from(inst, sol.s, &sol.output)?;
    k.max_abs_diff(&sol.kernel).ok_or_else(|| Error::Composition("kernel shape does not match the instance".into()))
}

/// Joint law of `(X0..Xn, Y0..Yn)` under a block kernel.
pub fn block_joint(inst: &BlockInstance, kernel: &StochasticKernel) -> Result<JointMeasure> {
    let by = inst.by();
    if kernel.rows() != inst.source.len() || kernel.cols() != by {
        return arg("block kernel does not match the instance");
    }
    let n = inst.horizon;
    let mut axes: Vec<Axis> = (0..=n).map(|i| Axis::new(format!("X{i}"), inst.nx)).collect();
    axes.extend((0..=n).map(|i| Axis::new(format!("Y{i}"), inst.ny)));
    let mut table = Vec::with_capacity(inst.distortion.len());
    for (x, &px) in inst.source.iter().enumerate() {
        table.extend(kernel.row(x).iter().map(|v| px * v));
    }
    JointMeasure::new(axes, table)
}

/// `max |P(y_i | x^n, y^{i-1}) - P(y_i | x^i, y^{i-1})|`; positive when the
/// block kernel looks ahead.
pub fn anticipation_witness(inst: &BlockInstance, kernel: &StochasticKernel) -> Result<f64> {
    let joint = block_joint(inst, kernel)?;
    let n = inst.horizon;
    let xs: Vec<usize> = (0..=n).collect();
    let ys: Vec<usize> = (n + 1..=2 * n + 1).collect();
    causality_violation(&joint, &xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::{entropy_binary, Distribution};

    #[test]
    fn single_letter_binary_uniform() {
        let src = MarkovSource::iid(Distribution::uniform(2).unwrap()).unwrap();
        let inst = BlockInstance::new(&src, &DistortionSpec::hamming(2), 0).unwrap();
        let sol = block_rdf(&inst, 0.1, &BlockConfig::default()).unwrap();
        let expect = 1.0 - entropy_binary(0.1).unwrap();
        assert!((sol.rate_bits_per_letter - expect).abs() < 1e-9);
        assert!(tilt_identity_residual(&inst, &sol).unwrap() < 1e-12);
    }

    #[test]
    fn rate_zero_above_d_max() {
        let src = MarkovSource::bsms(0.25).unwrap();
        let inst = BlockInstance::new(&src, &DistortionSpec::hamming(2), 1).unwrap();
        assert_eq!(inst.distortion_range(), (0.0, 0.5));
        let sol = block_rdf(&inst, 0.6, &BlockConfig::default()).unwrap();
        assert_eq!(sol.rate_bits_per_letter, 0.0);
        assert!(block_rdf(&inst, 0.0, &BlockConfig::default()).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let src = MarkovSource::bsms(0.25).unwrap();
        let r = BlockInstance::with_budget(&src, &DistortionSpec::hamming(2), 3, 255);
        assert_eq!(r.unwrap_err(), Error::Size { cells: 256, budget: 255 });
    }
}
