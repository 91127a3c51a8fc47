//! Entropies, mutual and directed information, and exact conditional
//! independence checks on [`JointMeasure`]s.
//!
//! Everything is accumulated in nats and converted to bits on return.

use alloc::vec;
use alloc::vec::Vec;

use super::joint::JointMeasure;
use crate::error::{arg, Result};
use crate::math::{ln, LOG2_E};

/// Binary entropy `H(q)` in bits, with `0 log 0 = 0`.
pub fn entropy_binary(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return arg(alloc::format!("binary entropy argument {q} outside [0, 1]"));
    }
    Ok(entropy(&[q, 1.0 - q]))
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * ln(p)).sum();
    h * LOG2_E
}

/// Relative entropy `D(p || q)` in bits; `+inf` when `p` is not absolutely
/// continuous with respect to `q`.
pub fn relative_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return arg("relative entropy needs vectors of equal length");
    }
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            d += a * ln(a / b);
        }
    }
    Ok(d.max(0.0) * LOG2_E)
}

/// `I(A; B | C)` in bits by exact summation. `c` may be empty.
pub fn conditional_mutual_information(joint: &JointMeasure, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return arg("mutual information needs nonempty axis groups");
    }
    joint.check_disjoint(&[a, b, c])?;
    let sizes = joint.sizes();
    let na: usize = a.iter().map(|&i| sizes[i]).product();
    let nb: usize = b.iter().map(|&i| sizes[i]).product();
    let keep: Vec<usize> = c.iter().chain(a).chain(b).copied().collect();
    let table = joint.marginal_table(&keep);
    let block = na * nb;
    let mut total = 0.0;
    let mut pa = vec![0.0; na];
    let mut pb = vec![0.0; nb];
    for cab in table.chunks(block) {
        let pc: f64 = cab.iter().sum();
        if pc <= 0.0 {
            continue;
        }
        pa.iter_mut().for_each(|v| *v = 0.0);
        pb.iter_mut().for_each(|v| *v = 0.0);
        for (ia, row) in cab.chunks(nb).enumerate() {
            for (ib, &w) in row.iter().enumerate() {
                pa[ia] += w;
                pb[ib] += w;
            }
        }
        for (ia, row) in cab.chunks(nb).enumerate() {
            for (ib, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    total += w * ln(w * pc / (pa[ia] * pb[ib]));
                }
            }
        }
    }
    Ok(total.max(0.0) * LOG2_E)
}

/// `I(left; right)` in bits.
pub fn mutual_information(joint: &JointMeasure, left: &[usize], right: &[usize]) -> Result<f64> {
    conditional_mutual_information(joint, left, right, &[])
}

/// `I(X^n -> Y^n) = sum_i I(X^i; Y_i | Y^{i-1})` in bits.
pub fn directed_information(joint: &JointMeasure, from: &[usize], to: &[usize]) -> Result<f64> {
    directed_information_given(joint, from, to, &[])
}

/// Directed information with extra conditioning on `given` at every step,
/// `sum_i I(X^i; Y_i | Y^{i-1}, S)`.
pub fn directed_information_given(joint: &JointMeasure, from: &[usize], to: &[usize], given: &[usize]) -> Result<f64> {
    if from.len() != to.len() || from.is_empty() {
        return arg("directed information needs equal-length, nonempty sequences");
    }
    joint.check_disjoint(&[from, to, given])?;
    let mut total = 0.0;
    for i in 0..to.len() {
        let cond: Vec<usize> = to[..i].iter().chain(given).copied().collect();
        total += conditional_mutual_information(joint, &from[..=i], &to[i..=i], &cond)?;
    }
    Ok(total)
}

/// Outcome of a conditional-independence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovCheck {
    pub holds: bool,
    /// `max |P(a | b, c) - P(a | b)|` over cells with positive `P(b, c)`.
    pub max_violation: f64,
    /// Number of `(b, c)` conditioning rows with zero mass.
    pub skipped_rows: usize,
}

impl MarkovCheck {
    fn merge(self, other: MarkovCheck) -> MarkovCheck {
        MarkovCheck {
            holds: self.holds && other.holds,
            max_violation: self.max_violation.max(other.max_violation),
            skipped_rows: self.skipped_rows + other.skipped_rows,
        }
    }

    fn vacuous() -> MarkovCheck {
        MarkovCheck { holds: true, max_violation: 0.0, skipped_rows: 0 }
    }
}

/// Tests the Markov chain `a <-> b <-> c`, i.e. `P(a | b, c) = P(a | b)`.
/// `b` may be empty, in which case this is a test of independence.
pub fn check_markov_chain(
    joint: &JointMeasure,
    a: &[usize],
    b: &[usize],
    c: &[usize],
    tol: f64,
) -> Result<MarkovCheck> {
    if a.is_empty() || c.is_empty() {
        return arg("Markov chain check needs nonempty end groups");
    }
    joint.check_disjoint(&[a, b, c])?;
    let sizes = joint.sizes();
    let na: usize = a.iter().map(|&i| sizes[i]).product();
    let nc: usize = c.iter().map(|&i| sizes[i]).product();
    let keep: Vec<usize> = b.iter().chain(c).chain(a).copied().collect();
    let table = joint.marginal_table(&keep);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    let mut pab = vec![0.0; na];
    for bca in table.chunks(nc * na) {
        let pb: f64 = bca.iter().sum();
        if pb <= 0.0 {
            skipped += nc;
            continue;
        }
        pab.iter_mut().for_each(|v| *v = 0.0);
        for ca in bca.chunks(na) {
            for (v, &w) in pab.iter_mut().zip(ca) {
                *v += w;
            }
        }
        for ca in bca.chunks(na) {
            let pbc: f64 = ca.iter().sum();
            if pbc <= 0.0 {
                skipped += 1;
                continue;
            }
            for (&w, &m) in ca.iter().zip(&pab) {
                worst = worst.max((w / pbc - m / pb).abs());
            }
        }
    }
    Ok(MarkovCheck { holds: worst <= tol, max_violation: worst, skipped_rows: skipped })
}

/// The three conditional-independence forms of nonanticipation of `Y` with
/// respect to `X`, each aggregated over `i = 0..n-1`:
///
/// 1. `X_{i+1}^n <-> (X^i, Y^{i-1}) <-> Y_i`
/// 2. `X_{i+1} <-> X^i <-> Y^i`
/// 3. `X_{i+1}^n <-> X^i <-> Y^i`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonanticipationStatements {
    pub statements: [MarkovCheck; 3],
}

impl NonanticipationStatements {
    /// True when all three statements share the same truth value.
    pub fn agree(&self) -> bool {
        let s = &self.statements;
        s[0].holds == s[1].holds && s[1].holds == s[2].holds
    }
}

pub fn nonanticipation_statements(
    joint: &JointMeasure,
    xs: &[usize],
    ys: &[usize],
    tol: f64,
) -> Result<NonanticipationStatements> {
    if xs.len() != ys.len() || xs.is_empty() {
        return arg("nonanticipation checks need equal-length, nonempty sequences");
    }
    joint.check_disjoint(&[xs, ys])?;
    let n = xs.len() - 1;
    let mut out = [MarkovCheck::vacuous(); 3];
    for i in 0..n {
        let past: Vec<usize> = xs[..=i].iter().chain(&ys[..i]).copied().collect();
        let s1 = check_markov_chain(joint, &ys[i..=i], &past, &xs[i + 1..], tol)?;
        let s2 = check_markov_chain(joint, &xs[i + 1..=i + 1], &xs[..=i], &ys[..=i], tol)?;
        let s3 = check_markov_chain(joint, &xs[i + 1..], &xs[..=i], &ys[..=i], tol)?;
        out[0] = out[0].merge(s1);
        out[1] = out[1].merge(s2);
        out[2] = out[2].merge(s3);
    }
    Ok(NonanticipationStatements { statements: out })
}

/// Largest deviation of `P(y_i | x^n, y^{i-1})` from its causal projection
/// `P(y_i | x^i, y^{i-1})`, over all `i`. Zero for nonanticipative kernels.
pub fn causality_violation(joint: &JointMeasure, xs: &[usize], ys: &[usize]) -> Result<f64> {
    let s = nonanticipation_statements(joint, xs, ys, f64::INFINITY)?;
    Ok(s.statements[0].max_violation)
}
