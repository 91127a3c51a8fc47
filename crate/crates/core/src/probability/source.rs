use alloc::vec;
use alloc::vec::Vec;

use super::kernel::{Alphabet, Distribution, StochasticKernel};
use super::stationary::stationary_distribution;
use crate::error::{arg, Error, Result};

/// Tolerance for declaring an initial distribution stationary.
pub const STATIONARY_TOL: f64 = 1e-10;

/// First-order Markov source over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSource {
    transition: StochasticKernel,
    initial: Distribution,
    stationary: bool,
}

impl MarkovSource {
    /// Source with an arbitrary initial law; not declared stationary.
    pub fn new(transition: StochasticKernel, initial: Distribution) -> Result<Self> {
        if !transition.is_square() {
            return Err(Error::Composition("source transition must map the alphabet to itself".into()));
        }
        if initial.len() != transition.cols() {
            return Err(Error::Composition("initial law has wrong alphabet size".into()));
        }
        Ok(MarkovSource { transition, initial, stationary: false })
    }

    /// Source started from the (unique) stationary law of `transition`.
    pub fn stationary(transition: StochasticKernel) -> Result<Self> {
        let pi = stationary_distribution(&transition)?;
        let mut src = MarkovSource::new(transition, pi)?;
        src.stationary = true;
        Ok(src)
    }

    /// Declares the given initial law stationary, checking `initial * T = initial`.
    pub fn declared_stationary(transition: StochasticKernel, initial: Distribution) -> Result<Self> {
        let mut src = MarkovSource::new(transition, initial)?;
        let next = src.step(src.initial.probs());
        let dev = next.iter().zip(src.initial.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dev > STATIONARY_TOL {
            return arg(alloc::format!("initial law is not stationary (deviation {dev:e})"));
        }
        src.stationary = true;
        Ok(src)
    }

    /// Binary symmetric Markov source: flips the previous symbol with probability `p`.
    pub fn bsms(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return arg("BSMS flip probability must lie in (0, 1)");
        }
        let t = StochasticKernel::from_rows(&[vec![1.0 - p, p], vec![p, 1.0 - p]])?;
        Ok(MarkovSource { transition: t, initial: Distribution::uniform(2)?, stationary: true })
    }

    /// Memoryless source: every transition row equals `law`.
    pub fn iid(law: Distribution) -> Result<Self> {
        let a = Alphabet::new(law.len())?;
        let t = StochasticKernel::constant(vec![a], &law)?;
        Ok(MarkovSource { transition: t, initial: law, stationary: true })
    }

    pub fn transition(&self) -> &StochasticKernel {
        &self.transition
    }

    pub fn initial(&self) -> &Distribution {
        &self.initial
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn alphabet_size(&self) -> usize {
        self.transition.cols()
    }

    /// One step of the chain applied to a row vector.
    pub fn step(&self, law: &[f64]) -> Vec<f64> {
        let n = self.alphabet_size();
        let mut out = vec![0.0; n];
        for (x, &w) in law.iter().enumerate() {
            for (o, &t) in out.iter_mut().zip(self.transition.row(x)) {
                *o += w * t;
            }
        }
        out
    }
}

/// Per-letter distortion `rho(x, y)` over source x reproduction alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec {
    source_size: usize,
    repro_size: usize,
    values: Vec<f64>,
}

impl DistortionSpec {
    pub fn new(source_size: usize, repro_size: usize, values: Vec<f64>) -> Result<Self> {
        if source_size == 0 || repro_size == 0 {
            return arg("distortion alphabets must be nonempty");
        }
        if values.len() != source_size * repro_size {
            return Err(Error::Composition("distortion matrix has wrong shape".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return arg("distortion values must be finite and nonnegative");
        }
        Ok(DistortionSpec { source_size, repro_size, values })
    }

    /// Hamming distortion on a common alphabet of the given size.
    pub fn hamming(size: usize) -> Self {
        let mut values = vec![1.0; size * size];
        for i in 0..size {
            values[i * size + i] = 0.0;
        }
        DistortionSpec { source_size: size, repro_size: size, values }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.repro_size + y]
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn repro_size(&self) -> usize {
        self.repro_size
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bsms_rejects_degenerate_flip() {
        assert!(MarkovSource::bsms(0.0).is_err());
        assert!(MarkovSource::bsms(1.0).is_err());
        let s = MarkovSource::bsms(0.25).unwrap();
        assert_eq!(s.transition().row(0), &[0.75, 0.25]);
    }

    #[test]
    fn declared_stationary_is_checked() {
        let t = StochasticKernel::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        assert!(MarkovSource::declared_stationary(t.clone(), Distribution::uniform(2).unwrap()).is_err());
        let ok = MarkovSource::declared_stationary(t, Distribution::new(vec![0.75, 0.25]).unwrap());
        assert!(ok.unwrap().is_stationary());
    }

    #[test]
    fn hamming_layout() {
        let h = DistortionSpec::hamming(3);
        assert_eq!(h.get(1, 1), 0.0);
        assert_eq!(h.get(2, 0), 1.0);
        assert_eq!(h.max(), 1.0);
    }
}
