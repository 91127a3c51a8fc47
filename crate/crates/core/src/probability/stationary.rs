//! Stationary distributions of finite Markov chains.
//!
//! The primary route is a direct linear solve of `pi (K - I) = 0` with one
//! equation replaced by the normalization constraint. Reducibility is
//! detected from the rank of `K - I`; in that case, and whenever the direct
//! solve leaves a residual above [`RESIDUAL_TOL`], a lazy power iteration
//! takes over.

use alloc::vec;
use alloc::vec::Vec;

use super::kernel::{Distribution, StochasticKernel};
use crate::error::{Error, Result};

pub const RESIDUAL_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-11;
const POWER_ITERATION_CAP: usize = 1_000_000;

/// `max_j |(pi K)_j - pi_j|`.
pub fn stationary_residual(kernel: &StochasticKernel, pi: &[f64]) -> f64 {
    let next = left_multiply(kernel, pi);
    next.iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn left_multiply(kernel: &StochasticKernel, v: &[f64]) -> Vec<f64> {
    let n = kernel.cols();
    let mut out = vec![0.0; n];
    for (i, &w) in v.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &k) in out.iter_mut().zip(kernel.row(i)) {
            *o += w * k;
        }
    }
    out
}

/// Rank of a dense row-major `n x n` matrix by Gaussian elimination with
/// complete pivoting.
fn rank(mut a: Vec<f64>, n: usize) -> usize {
    let mut r = 0;
    while r < n {
        let (mut pi, mut pj, mut best) = (r, r, 0.0);
        for i in r..n {
            for j in r..n {
                let v = a[i * n + j].abs();
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if best <= RANK_TOL {
            break;
        }
        for j in 0..n {
            a.swap(r * n + j, pi * n + j);
        }
        for i in 0..n {
            a.swap(i * n + r, i * n + pj);
        }
        let piv = a[r * n + r];
        for i in r + 1..n {
            let f = a[i * n + r] / piv;
            if f != 0.0 {
                for j in r..n {
                    a[i * n + j] -= f * a[r * n + j];
                }
            }
        }
        r += 1;
    }
    r
}

/// Solves `A x = b` (row-major `n x n`) with partial pivoting.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))?;
        if a[p * n + c].abs() < 1e-300 {
            return None;
        }
        if p != c {
            for j in 0..n {
                a.swap(c * n + j, p * n + j);
            }
            b.swap(c, p);
        }
        let piv = a[c * n + c];
        for i in c + 1..n {
            let f = a[i * n + c] / piv;
            if f != 0.0 {
                for j in c..n {
                    a[i * n + j] -= f * a[c * n + j];
                }
                b[i] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i * n + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    Some(x)
}

fn normalize(v: &mut [f64]) {
    for w in v.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    for w in v.iter_mut() {
        *w /= s;
    }
}

/// Lazy power iteration `pi <- pi (I + K) / 2` from `start`.
fn power_iterate(kernel: &StochasticKernel, start: Vec<f64>) -> Result<Vec<f64>> {
    let mut pi = start;
    for _ in 0..POWER_ITERATION_CAP {
        let step = left_multiply(kernel, &pi);
        let mut next: Vec<f64> = pi.iter().zip(&step).map(|(a, b)| 0.5 * (a + b)).collect();
        normalize(&mut next);
        pi = next;
        if stationary_residual(kernel, &pi) <= RESIDUAL_TOL / 4.0 {
            return Ok(pi);
        }
    }
    if stationary_residual(kernel, &pi) <= RESIDUAL_TOL {
        Ok(pi)
    } else {
        Err(Error::Numerical("power iteration for the stationary distribution did not converge".into()))
    }
}

/// Stationary distribution `pi` with `pi K = pi`.
///
/// A reducible chain with several closed classes yields
/// [`Error::NonUniqueStationary`] carrying one valid stationary vector.
pub fn stationary_distribution(kernel: &StochasticKernel) -> Result<Distribution> {
    if !kernel.is_square() {
        return Err(Error::Argument("stationary distribution requires a square kernel".into()));
    }
    let n = kernel.cols();
    // A = K^T - I, so that A pi^T = 0.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[j * n + i] = kernel.get(i, j);
        }
        a[i * n + i] -= 1.0;
    }
    if rank(a.clone(), n) < n.saturating_sub(1) {
        let candidate = power_iterate(kernel, vec![1.0 / n as f64; n])?;
        return Err(Error::NonUniqueStationary(Distribution::new(candidate)?));
    }
    for j in 0..n {
        a[(n - 1) * n + j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    let mut pi = match solve(a, b, n) {
        Some(x) => x,
        None => vec![1.0 / n as f64; n],
    };
    normalize(&mut pi);
    if stationary_residual(kernel, &pi) > RESIDUAL_TOL / 4.0 {
        pi = power_iterate(kernel, pi)?;
    }
    Distribution::new(pi)
}
