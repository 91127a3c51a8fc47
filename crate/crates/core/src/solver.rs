//! Nonanticipative rate-distortion solver for stationary first-order Markov
//! sources.
//!
//! The optimal causal reproduction has the tilted form
//! `P(y | x, y_prev) ∝ exp(s rho(x, y)) q(y | y_prev)`, where `q` is the
//! induced reproduction transition and `s <= 0` is the Lagrange multiplier
//! of the distortion constraint. For fixed `s` we alternate
//!
//! 1. tilt `q` into a reproduction kernel,
//! 2. solve for the stationary law of the pair chain `(X_i, Y_i)`,
//! 3. recompute `q(y' | y) = sum_{x, x'} P(x | y) P(x' | x) P(y' | x', y)`,
//!
//! until `q` stops moving, and bisect on `s` to hit a target distortion
//! (achieved distortion is nondecreasing in `s`).

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, log_sum_exp_weighted, LOG2_E};
use crate::probability::{
    pair_chain, stationary_distribution, stationary_residual, Alphabet, DistortionSpec, Distribution, MarkovSource,
    StochasticKernel,
};

/// One point of a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub distortion: f64,
    pub rate_bits: f64,
    /// Tilt / Lagrange parameter, natural-log scale, `<= 0`.
    pub s: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMarginal {
    /// `q(y | y_prev)` starts at the source transition when the alphabets
    /// have equal size, uniform otherwise.
    SourceMatched,
    Uniform,
}

/// Bracketing and bisection settings for the search over `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// First lower bracket; doubled until it undershoots the target.
    pub s_lo: f64,
    /// Most negative `s` tried before giving up.
    pub s_floor: f64,
    /// Stop once `|D - D_target|` is below this.
    pub d_tol: f64,
    /// Stop once the bracket is narrower than this (relative to `|s|`).
    pub s_tol: f64,
    /// Accept the final point only if `|D - D_target|` is below this.
    pub accept_tol: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub fixed_point_tol: f64,
    /// Weight of the new marginal in each update; drops to 0.5 on oscillation.
    pub damping: f64,
    /// Number of past sweeps used for Anderson extrapolation; 0 disables it.
    pub acceleration_depth: usize,
    pub init: InitMarginal,
    pub search: SearchConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100_000,
            fixed_point_tol: 1e-13,
            damping: 1.0,
            acceleration_depth: 5,
            init: InitMarginal::SourceMatched,
            search: SearchConfig {
                s_lo: -1.0,
                s_floor: -1.0e3,
                d_tol: 1e-13,
                s_tol: 1e-15,
                accept_tol: 1e-8,
                max_steps: 300,
            },
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.search;
        let ok = self.max_iterations > 0
            && self.fixed_point_tol > 0.0
            && self.damping > 0.0
            && self.damping <= 1.0
            && s.d_tol > 0.0
            && s.s_tol > 0.0
            && s.accept_tol > 0.0
            && s.s_floor < s.s_lo
            && s.s_lo < 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid solver configuration {self:?}")))
        }
    }
}

/// Self-consistent solver quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// `q(y_i | y_{i-1})`.
    pub marginal: StochasticKernel,
    /// `P(y_i | x_i, y_{i-1})`, inputs `(x, y_prev)`.
    pub reproduction: StochasticKernel,
    /// Stationary law of `(X_i, Y_i)`, indexed `x * |Y| + y`.
    pub pair_stationary: Distribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub state: SolverState,
    pub converged: bool,
    /// The induced pair chain had more than one stationary law.
    pub reducible: bool,
    /// Sweeps summed over all starts.
    pub iterations: usize,
    /// Change of the marginal in the last sweep: max over rows of the row's
    /// max-norm change times the stationary mass of its conditioning symbol.
    pub residual: f64,
}

/// `P(y | x, y_prev) ∝ exp(s rho(x, y)) q(y | y_prev)`.
pub fn tilt_kernel(marginal: &StochasticKernel, rho: &DistortionSpec, s: f64) -> Result<StochasticKernel> {
    if !(s <= 0.0) {
        return Err(Error::Argument(format!("tilt parameter must be <= 0, got {s}")));
    }
    let ny = marginal.cols();
    if !marginal.is_square() || rho.repro_size() != ny {
        return Err(Error::Composition("marginal must be square over the reproduction alphabet of rho".into()));
    }
    let nx = rho.source_size();
    let mut m = vec![0.0; nx * ny * ny];
    for x in 0..nx {
        for yp in 0..ny {
            let q = marginal.row(yp);
            let top = (0..ny).filter(|&y| q[y] > 0.0).map(|y| s * rho.get(x, y)).fold(f64::NEG_INFINITY, f64::max);
            let row = &mut m[(x * ny + yp) * ny..(x * ny + yp + 1) * ny];
            for y in 0..ny {
                row[y] = if q[y] > 0.0 { exp(s * rho.get(x, y) - top) * q[y] } else { 0.0 };
            }
            let z: f64 = row.iter().sum();
            if !(z > 0.0) {
                return Err(Error::Normalization { row: x * ny + yp, sum: z });
            }
            row.iter_mut().for_each(|w| *w /= z);
        }
    }
    StochasticKernel::new(vec![Alphabet::new(nx)?, Alphabet::new(ny)?], Alphabet::new(ny)?, m)
}

fn initial_marginal(source: &MarkovSource, ny: usize, init: InitMarginal) -> Result<StochasticKernel> {
    match init {
        InitMarginal::SourceMatched if source.alphabet_size() == ny => Ok(source.transition().clone()),
        _ => StochasticKernel::constant(vec![Alphabet::new(ny)?], &Distribution::uniform(ny)?),
    }
}

fn check_problem(source: &MarkovSource, rho: &DistortionSpec) -> Result<()> {
    if !source.is_stationary() {
        return Err(Error::Argument("solver requires a stationary source".into()));
    }
    if rho.source_size() != source.alphabet_size() {
        return Err(Error::Composition("distortion matrix rows must match the source alphabet".into()));
    }
    Ok(())
}

/// Tilt, stationary solve and marginal update for one `q`. Also returns the
/// stationary mass of each reproduction symbol.
fn sweep(source: &MarkovSource, rho: &DistortionSpec, s: f64, q: &StochasticKernel) -> Result<(Vec<f64>, Vec<f64>)> {
    let nx = source.alphabet_size();
    let ny = q.cols();
    let reproduction = tilt_kernel(q, rho, s)?;
    let chain = pair_chain(source, &reproduction)?;
    let pair = match stationary_distribution(&chain) {
        Ok(d) | Err(Error::NonUniqueStationary(d)) => d,
        Err(e) => return Err(e),
    };
    let pi = pair.probs();
    let t = source.transition();
    let mut next = vec![0.0; ny * ny];
    let mut y_mass = vec![0.0; ny];
    for x in 0..nx {
        for y in 0..ny {
            let w = pi[x * ny + y];
            if w == 0.0 {
                continue;
            }
            y_mass[y] += w;
            for x2 in 0..nx {
                let wx = w * t.get(x, x2);
                if wx == 0.0 {
                    continue;
                }
                let r = reproduction.row(x2 * ny + y);
                for (o, &v) in next[y * ny..(y + 1) * ny].iter_mut().zip(r) {
                    *o += wx * v;
                }
            }
        }
    }
    for y in 0..ny {
        let row = &mut next[y * ny..(y + 1) * ny];
        if y_mass[y] > 0.0 {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.copy_from_slice(q.row(y));
        }
    }
    Ok((next, y_mass))
}

/// Change of `q` between sweeps, each row weighted by how often its
/// conditioning symbol occurs. Rows of symbols that are (numerically) never
/// emitted do not affect rate or distortion and are left undetermined.
fn weighted_change(old: &[f64], new: &[f64], y_mass: &[f64]) -> f64 {
    let ny = y_mass.len();
    old.chunks(ny)
        .zip(new.chunks(ny))
        .zip(y_mass)
        .map(|((a, b), &w)| w * a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Alternating updates at fixed `s` until the marginal stops moving.
///
/// The objective is not convex in `q` and the iteration can settle on a
/// stationary point that is not the minimizer. We therefore run it from both
/// initial marginals and by continuation from `4s` and `2s`, add the rate-0
/// states that always emit one symbol, and
/// keep the converged candidate with the smallest Lagrangian `R - s D`
/// (ties go to the configured start). Non-convergence of every iterated
/// start is reported through `converged = false`.
pub fn fixed_point_iterate(
    source: &MarkovSource,
    rho: &DistortionSpec,
    s: f64,
    config: &SolverConfig,
) -> Result<FixedPoint> {
    config.validate()?;
    check_problem(source, rho)?;
    let ny = rho.repro_size();
    let other = match config.init {
        InitMarginal::SourceMatched => InitMarginal::Uniform,
        InitMarginal::Uniform => InitMarginal::SourceMatched,
    };
    let mut starts = vec![initial_marginal(source, ny, config.init)?];
    let alt = initial_marginal(source, ny, other)?;
    if alt != starts[0] {
        starts.push(alt);
    }
    // a start whose iterates reach a nearly reducible pair chain, where the
    // stationary law is numerically ill-posed, is dropped while another
    // start succeeds
    let mut candidates = Vec::new();
    let mut failure = None;
    let mut keep = |r: Result<FixedPoint>, out: &mut Vec<FixedPoint>| match r {
        Ok(fp) => {
            out.push(fp);
            Ok(())
        }
        Err(e @ Error::Numerical(_)) => {
            failure = Some(e);
            Ok(())
        }
        Err(e) => Err(e),
    };
    for mut q in starts {
        keep(fixed_point_from(source, rho, s, config, &mut q), &mut candidates)?;
    }
    if s != 0.0 {
        // continuation from steeper slopes follows the high-rate branch,
        // which cold starts can miss when a rate-0 state competes
        let mut q = initial_marginal(source, ny, config.init)?;
        let mut ok = true;
        for t in [4.0 * s, 2.0 * s] {
            ok &= fixed_point_from(source, rho, t, config, &mut q).is_ok();
        }
        if ok {
            keep(fixed_point_from(source, rho, s, config, &mut q), &mut candidates)?;
        }
    }
    if candidates.is_empty() {
        return Err(failure.unwrap_or_else(|| Error::Numerical("no fixed-point start succeeded".into())));
    }
    let iterations = candidates.iter().map(|c| c.iterations).sum();
    for y in 0..ny {
        candidates.push(rate_zero_state(source, rho, s, y)?);
    }
    let primary = candidates[0].clone();
    let mut best: Option<(FixedPoint, f64)> = None;
    for c in candidates.into_iter().filter(|c| c.converged) {
        let l = lagrangian(source, &c.state, s, rho);
        if best.as_ref().is_none_or(|(_, bl)| l < bl - 1e-12) {
            best = Some((c, l));
        }
    }
    let fp = best.map_or(primary, |(fp, _)| fp);
    Ok(FixedPoint { iterations, ..fp })
}

fn fixed_point_from(
    source: &MarkovSource,
    rho: &DistortionSpec,
    s: f64,
    config: &SolverConfig,
    q: &mut StochasticKernel,
) -> Result<FixedPoint> {
    let ny = q.cols();
    let mut damping = config.damping;
    let start = q.clone();
    let mut accel = Anderson::new(config.acceleration_depth);
    let mut revivals = 0;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut last = f64::INFINITY;
    let mut rising = 0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let x = q.matrix().to_vec();
        let (next, y_mass) = sweep(source, rho, s, q)?;
        residual = weighted_change(&x, &next, &y_mass);
        let plain = |next: &[f64]| -> Vec<f64> {
            if damping == 1.0 {
                next.to_vec()
            } else {
                next.iter().zip(&x).map(|(a, b)| damping * a + (1.0 - damping) * b).collect()
            }
        };
        let candidate = if residual <= config.fixed_point_tol {
            let mut v = next;
            if revivals < MAX_REVIVALS && revive(source, rho, s, q, &mut v)? {
                revivals += 1;
                accel.reset();
                last = f64::INFINITY;
            } else {
                converged = true;
            }
            v
        } else {
            match accel.step(&x, &next) {
                Some(v) if v.chunks(ny).all(|r| r.iter().sum::<f64>() > 0.0) => v,
                _ => plain(&next),
            }
        };
        *q = StochasticKernel::new(vec![Alphabet::new(ny)?], Alphabet::new(ny)?, renormalized(candidate, ny))?;
        if converged {
            break;
        }
        if iterations % PRUNE_EVERY == 0 {
            if revivals < MAX_REVIVALS && prune(source, rho, s, q)? {
                revivals += 1;
                accel.reset();
                last = f64::INFINITY;
                continue;
            }
            if residual < POLISH_BELOW {
                if let Some(polished) = newton_polish(source, rho, s, q, config.fixed_point_tol)? {
                    *q = polished;
                    accel.reset();
                    last = f64::INFINITY;
                }
            }
        }
        if residual < 0.5 * best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if accel.depth > 0 && since_best >= STALL_SWEEPS {
            // extrapolation can get trapped on a face of the simplex; fall
            // back to the plain monotone update from the starting point
            accel = Anderson::new(0);
            *q = start.clone();
            damping = config.damping;
            best = f64::INFINITY;
            since_best = 0;
            last = f64::INFINITY;
            continue;
        }
        if residual > last {
            accel.reset();
            rising += 1;
            if rising >= 3 && damping > 0.5 {
                damping = 0.5;
            }
        } else {
            rising = 0;
        }
        last = residual;
    }
    let reproduction = tilt_kernel(q, rho, s)?;
    let chain = pair_chain(source, &reproduction)?;
    let (pair, reducible) = match stationary_distribution(&chain) {
        Ok(d) => (d, false),
        Err(Error::NonUniqueStationary(d)) => (d, true),
        Err(e) => return Err(e),
    };
    Ok(FixedPoint {
        state: SolverState { marginal: q.clone(), reproduction, pair_stationary: pair },
        converged,
        reducible,
        iterations,
        residual,
    })
}

/// Sweeps without halving the best residual before acceleration is dropped.
const STALL_SWEEPS: usize = 200;

/// Cap on active-set corrections (prunes and revivals) per fixed-point solve.
const MAX_REVIVALS: usize = 32;

const PRUNE_EVERY: usize = 50;
/// Residual below which Newton steps on the current support are attempted.
const POLISH_BELOW: f64 = 1e-4;
const NEWTON_STEPS: usize = 30;
const PRUNE_BELOW: f64 = 1e-3;

/// Factor `c(y' | y)` by which one sweep scales `q(y' | y)`; equal to one on
/// the support at a fixed point and well defined where `q` vanishes.
fn multipliers(source: &MarkovSource, rho: &DistortionSpec, s: f64, q: &StochasticKernel) -> Result<Vec<f64>> {
    let nx = source.alphabet_size();
    let ny = q.cols();
    let reproduction = tilt_kernel(q, rho, s)?;
    let chain = pair_chain(source, &reproduction)?;
    let pair = match stationary_distribution(&chain) {
        Ok(d) | Err(Error::NonUniqueStationary(d)) => d,
        Err(e) => return Err(e),
    };
    let pi = pair.probs();
    let t = source.transition();
    // log-partition of each tilted row, shifted by the row's best distortion
    let mut shift = vec![0.0; nx];
    let mut z = vec![0.0; nx * ny];
    for x in 0..nx {
        shift[x] = (0..ny).map(|y| s * rho.get(x, y)).fold(f64::NEG_INFINITY, f64::max);
        for yp in 0..ny {
            z[x * ny + yp] = (0..ny).map(|y| exp(s * rho.get(x, y) - shift[x]) * q.get(yp, y)).sum::<f64>();
        }
    }
    let mut c = vec![0.0; ny * ny];
    for y in 0..ny {
        let mass: f64 = (0..nx).map(|x| pi[x * ny + y]).sum();
        if mass <= 0.0 {
            c[y * ny..(y + 1) * ny].iter_mut().for_each(|v| *v = 1.0);
            continue;
        }
        for x in 0..nx {
            let w = pi[x * ny + y] / mass;
            for x2 in 0..nx {
                let wx = w * t.get(x, x2);
                if wx == 0.0 {
                    continue;
                }
                for y2 in 0..ny {
                    c[y * ny + y2] += wx * exp(s * rho.get(x2, y2) - shift[x2]) / z[x2 * ny + y];
                }
            }
        }
    }
    Ok(c)
}

/// The rate-0 state that emits `y` at every step. It is a fixed point for
/// every `s`, though one the iteration approaches very slowly.
fn rate_zero_state(source: &MarkovSource, rho: &DistortionSpec, s: f64, y: usize) -> Result<FixedPoint> {
    let ny = rho.repro_size();
    let mut m = vec![0.0; ny * ny];
    for row in m.chunks_mut(ny) {
        row[y] = 1.0;
    }
    let q = StochasticKernel::new(vec![Alphabet::new(ny)?], Alphabet::new(ny)?, m)?;
    let reproduction = tilt_kernel(&q, rho, s)?;
    let chain = pair_chain(source, &reproduction)?;
    let (pair, reducible) = match stationary_distribution(&chain) {
        Ok(d) => (d, false),
        Err(Error::NonUniqueStationary(d)) => (d, true),
        Err(e) => return Err(e),
    };
    Ok(FixedPoint {
        state: SolverState { marginal: q, reproduction, pair_stationary: pair },
        converged: true,
        reducible,
        iterations: 0,
        residual: 0.0,
    })
}

/// Zeroes small entries of `q` whose multiplier is below one. Such entries
/// decay geometrically at that rate, which can be close to one for small
/// `|s|`; a wrong cut is undone by `revive` once the iteration settles.
fn prune(source: &MarkovSource, rho: &DistortionSpec, s: f64, q: &mut StochasticKernel) -> Result<bool> {
    let c = multipliers(source, rho, s, q)?;
    let mut m = q.matrix().to_vec();
    let mut changed = false;
    for (v, &k) in m.iter_mut().zip(&c) {
        if *v > 0.0 && *v < PRUNE_BELOW && k < 1.0 - 1e-9 {
            *v = 0.0;
            changed = true;
        }
    }
    if changed {
        let ny = q.cols();
        *q = StochasticKernel::new(vec![Alphabet::new(ny)?], Alphabet::new(ny)?, renormalized(m, ny))?;
    }
    Ok(changed)
}

/// Newton's method for `sweep(q) = q` over the positive entries of `q`, the
/// last positive entry of each row absorbing the normalization. Rows of
/// symbols with no stationary mass are held fixed. The plain update
/// contracts arbitrarily slowly near degenerate optima; Newton does not.
/// Returns the improved marginal once its weighted residual is below `tol`.
fn newton_polish(
    source: &MarkovSource,
    rho: &DistortionSpec,
    s: f64,
    q: &StochasticKernel,
    tol: f64,
) -> Result<Option<StochasticKernel>> {
    let ny = q.cols();
    let (_, y_mass) = sweep(source, rho, s, q)?;
    // (free entry, entry that absorbs it) pairs
    let mut free = Vec::new();
    for (y, &mass) in y_mass.iter().enumerate() {
        if mass < 1e-14 {
            continue;
        }
        let row = q.row(y);
        let support: Vec<usize> = (0..ny).filter(|&k| row[k] > 0.0).collect();
        if let Some((&pivot, rest)) = support.split_last() {
            free.extend(rest.iter().map(|&k| (y * ny + k, y * ny + pivot)));
        }
    }
    if free.is_empty() {
        return Ok(None);
    }
    let dim = free.len();
    let shift = |m: &[f64], dir: &[f64], t: f64| -> Vec<f64> {
        let mut out = m.to_vec();
        for (&(i, p), &d) in free.iter().zip(dir) {
            out[i] += t * d;
            out[p] -= t * d;
        }
        out
    };
    let as_kernel = |m: Vec<f64>| StochasticKernel::new(vec![Alphabet::new(ny)?], Alphabet::new(ny)?, m);
    let gap = |m: &[f64]| -> Result<(Vec<f64>, f64)> {
        let (next, mass) = sweep(source, rho, s, &as_kernel(m.to_vec())?)?;
        let g = free.iter().map(|&(i, _)| next[i] - m[i]).collect();
        Ok((g, weighted_change(m, &next, &mass)))
    };
    let mut m = q.matrix().to_vec();
    let (mut g, mut res) = gap(&m)?;
    for _ in 0..NEWTON_STEPS {
        if res <= tol {
            return Ok(Some(as_kernel(m)?));
        }
        // central-difference Jacobian of g, column by column
        let mut jac = vec![0.0; dim * dim];
        for c in 0..dim {
            let (i, p) = free[c];
            let h = (0.5 * m[i].min(m[p])).min(1e-7);
            let mut e = vec![0.0; dim];
            e[c] = 1.0;
            let (gp, _) = gap(&shift(&m, &e, h))?;
            let (gm, _) = gap(&shift(&m, &e, -h))?;
            for r in 0..dim {
                jac[r * dim + c] = (gp[r] - gm[r]) / (2.0 * h);
            }
        }
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let Some(step) = solve_small(&mut jac, &mut rhs, dim) else {
            return Ok(None);
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let trial = shift(&m, &step, t);
            if free.iter().all(|&(i, p)| trial[i] > 0.0 && trial[p] > 0.0) {
                let (g2, r2) = gap(&trial)?;
                if norm(&g2) < norm(&g) {
                    m = trial;
                    g = g2;
                    res = r2;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(None);
        }
    }
    (res <= tol).then(|| as_kernel(m)).transpose()
}

/// Puts mass back on zero entries of `q` whose multiplier exceeds one.
fn revive(source: &MarkovSource, rho: &DistortionSpec, s: f64, q: &StochasticKernel, next: &mut [f64]) -> Result<bool> {
    if !q.matrix().contains(&0.0) {
        return Ok(false);
    }
    let c = multipliers(source, rho, s, q)?;
    let mut changed = false;
    for ((v, &old), &m) in next.iter_mut().zip(q.matrix()).zip(&c) {
        if old == 0.0 && m > 1.0 + 1e-9 {
            *v = 1e-3;
            changed = true;
        }
    }
    Ok(changed)
}

/// Anderson mixing over the flattened marginal. Near the rate-0 end, and
/// whenever the optimal `q` has zeros, the plain update contracts very
/// slowly; extrapolating from the last few sweeps restores fast convergence.
struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    /// `(delta g, delta f)` pairs, oldest first.
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson { depth, prev: None, history: VecDeque::new() }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.history.clear();
    }

    /// Given the iterate `x` and its image `g`, proposes the next iterate,
    /// or `None` to take the plain step.
    fn step(&mut self, x: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        if self.depth == 0 {
            return None;
        }
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        if let Some((pg, pf)) = self.prev.take() {
            let dg = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
            let df = f.iter().zip(&pf).map(|(a, b)| a - b).collect();
            self.history.push_back((dg, df));
            if self.history.len() > self.depth {
                self.history.pop_front();
            }
        }
        self.prev = Some((g.to_vec(), f.clone()));
        let m = self.history.len();
        if m == 0 {
            return None;
        }
        // least squares min |f - dF gamma| through the normal equations
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m];
        for i in 0..m {
            let di = &self.history[i].1;
            b[i] = dot(di, &f);
            for j in 0..m {
                a[i * m + j] = dot(di, &self.history[j].1);
            }
        }
        let trace: f64 = (0..m).map(|i| a[i * m + i]).sum();
        if !(trace > 0.0) {
            self.reset();
            return None;
        }
        for i in 0..m {
            a[i * m + i] += 1e-12 * trace;
        }
        let Some(gamma) = solve_small(&mut a, &mut b, m) else {
            self.reset();
            return None;
        };
        let mut out = g.to_vec();
        for (k, (dg, _)) in self.history.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(dg) {
                *o -= gamma[k] * d;
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            // entries pushed below zero are taken out of the support; the
            // multiplier check at convergence brings back any that should stay
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            Some(out)
        } else {
            self.reset();
            None
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on an `m x m` system.
fn solve_small(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i * m + c].abs().total_cmp(&a[j * m + c].abs()))?;
        if a[p * m + c] == 0.0 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
            }
            b.swap(p, c);
        }
        for r in c + 1..m {
            let f = a[r * m + c] / a[c * m + c];
            for k in c..m {
                a[r * m + k] -= f * a[c * m + k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| a[r * m + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * m + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn renormalized(mut m: Vec<f64>, cols: usize) -> Vec<f64> {
    for row in m.chunks_mut(cols) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// Average distortion `sum pi(x, y) rho(x, y)` of a pair law.
pub fn pair_distortion(pair: &Distribution, rho: &DistortionSpec) -> f64 {
    let ny = rho.repro_size();
    pair.probs().iter().enumerate().map(|(k, &w)| w * rho.get(k / ny, k % ny)).sum()
}

/// Per-letter rate (bits) and distortion of a self-consistent state:
///
/// `R = s D - sum_{x_prev, y_prev} pi(x_prev, y_prev) sum_x P(x | x_prev)
///      ln sum_y exp(s rho(x, y)) q(y | y_prev)`.
pub fn rate_of_state(source: &MarkovSource, state: &SolverState, s: f64, rho: &DistortionSpec) -> Result<(f64, f64)> {
    check_problem(source, rho)?;
    let nx = source.alphabet_size();
    let ny = rho.repro_size();
    let pi = state.pair_stationary.probs();
    if pi.len() != nx * ny || state.marginal.cols() != ny {
        return Err(Error::Argument("solver state has the wrong shape".into()));
    }
    let tilted = tilt_kernel(&state.marginal, rho, s)?;
    let mismatch = tilted.max_abs_diff(&state.reproduction).unwrap_or(f64::INFINITY);
    let chain = pair_chain(source, &state.reproduction)?;
    let stat = stationary_residual(&chain, pi);
    if mismatch > 1e-10 || stat > 1e-10 {
        return Err(Error::Argument(format!(
            "solver state is not self-consistent (tilt mismatch {mismatch:e}, stationarity residual {stat:e})"
        )));
    }
    let d = pair_distortion(&state.pair_stationary, rho);
    let rate = (s * d + lagrangian(source, state, s, rho)) * LOG2_E;
    Ok((rate.max(0.0), d))
}

/// `R - s D` in nats for a self-consistent state, which equals minus the
/// expected log-partition of the tilted kernel.
fn lagrangian(source: &MarkovSource, state: &SolverState, s: f64, rho: &DistortionSpec) -> f64 {
    let nx = source.alphabet_size();
    let ny = rho.repro_size();
    let pi = state.pair_stationary.probs();
    let t = source.transition();
    let mut expected_log = 0.0;
    for xp in 0..nx {
        for yp in 0..ny {
            let w = pi[xp * ny + yp];
            if w == 0.0 {
                continue;
            }
            let q = state.marginal.row(yp);
            for x in 0..nx {
                let wx = w * t.get(xp, x);
                if wx == 0.0 {
                    continue;
                }
                let terms = (0..ny).map(move |y| (s * rho.get(x, y), q[y]));
                expected_log += wx * log_sum_exp_weighted(terms);
            }
        }
    }
    -expected_log
}

/// Attainable open interval `(D_min, D_max)`: `D_max` is the distortion of the
/// best reproduction that ignores the source, `D_min` that of the per-letter
/// best guess.
pub fn distortion_range(source: &MarkovSource, rho: &DistortionSpec) -> Result<(f64, f64)> {
    check_problem(source, rho)?;
    let pi = source.initial().probs();
    let ny = rho.repro_size();
    let d_max = (0..ny)
        .map(|y| pi.iter().enumerate().map(|(x, &w)| w * rho.get(x, y)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let d_min =
        pi.iter().enumerate().map(|(x, &w)| w * (0..ny).map(|y| rho.get(x, y)).fold(f64::INFINITY, f64::min)).sum();
    Ok((d_min, d_max))
}

/// Finds `s` such that the converged state has average distortion
/// `d_target`, and returns the resulting curve point and state.
pub fn solve_for_distortion(
    source: &MarkovSource,
    rho: &DistortionSpec,
    d_target: f64,
    config: &SolverConfig,
) -> Result<(RdPoint, SolverState)> {
    config.validate()?;
    let (d_min, d_max) = distortion_range(source, rho)?;
    if !(d_target > d_min && d_target < d_max) {
        return Err(Error::Range { target: d_target, d_min, d_max });
    }
    let solve_at = |s: f64| -> Result<(FixedPoint, f64)> {
        let fp = fixed_point_iterate(source, rho, s, config)?;
        if !fp.converged {
            return Err(Error::Numerical(format!(
                "fixed point did not converge at s = {s} (residual {:e} after {} iterations)",
                fp.residual, fp.iterations
            )));
        }
        let d = pair_distortion(&fp.state.pair_stationary, rho);
        Ok((fp, d))
    };

    let search = &config.search;
    let mut hi = 0.0;
    let mut lo = search.s_lo;
    let mut best = solve_at(lo)?;
    let mut hi_d = d_max;
    while best.1 > d_target {
        hi = lo;
        hi_d = best.1;
        lo *= 2.0;
        if lo < search.s_floor {
            return Err(Error::Range { target: d_target, d_min, d_max });
        }
        best = solve_at(lo)?;
    }
    let mut best_s = lo;
    let mut steps = 0;
    // Illinois regula falsi on f(s) = D(s) - target with f(lo) <= 0 < f(hi).
    let mut f_lo = best.1 - d_target;
    let mut f_hi = hi_d - d_target;
    let mut last_side = 0i8;
    while (best.1 - d_target).abs() > search.d_tol
        && hi - lo > search.s_tol * lo.abs().max(1.0)
        && steps < search.max_steps
    {
        steps += 1;
        let mut mid = if f_hi > f_lo { lo - f_lo * (hi - lo) / (f_hi - f_lo) } else { 0.5 * (lo + hi) };
        // Fall back to bisection when interpolation leaves the open bracket or every fourth step.
        if !(mid > lo && mid < hi) || steps % 4 == 0 {
            mid = 0.5 * (lo + hi);
        }
        let cand = solve_at(mid)?;
        if cand.1 > d_target {
            hi = mid;
            f_hi = cand.1 - d_target;
            if last_side == 1 {
                f_lo *= 0.5;
            }
            last_side = 1;
        } else {
            lo = mid;
            f_lo = cand.1 - d_target;
            if last_side == -1 {
                f_hi *= 0.5;
            }
            last_side = -1;
        }
        if (cand.1 - d_target).abs() <= (best.1 - d_target).abs() {
            best = cand;
            best_s = mid;
        }
    }
    let (fp, d) = best;
    if (d - d_target).abs() > search.accept_tol {
        return Err(Error::Numerical(format!("distortion search stalled at D = {d} for target {d_target}")));
    }
    let (rate, _) = rate_of_state(source, &fp.state, best_s, rho)?;
    Ok((
        RdPoint { distortion: d, rate_bits: rate, s: best_s, iterations: fp.iterations, residual: fp.residual },
        fp.state,
    ))
}

/// Solves every grid point; targets at or above `D_max` give the rate-0
/// point with `s = 0`.
pub fn solver_rd_curve(
    source: &MarkovSource,
    rho: &DistortionSpec,
    grid: &[f64],
    config: &SolverConfig,
) -> Result<Vec<RdPoint>> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Argument("distortion grid must be sorted ascending".into()));
    }
    let (_, d_max) = distortion_range(source, rho)?;
    grid.iter()
        .map(|&d| {
            if d >= d_max {
                Ok(RdPoint { distortion: d, rate_bits: 0.0, s: 0.0, iterations: 0, residual: 0.0 })
            } else {
                solve_for_distortion(source, rho, d, config).map(|(p, _)| p)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tilt_returns_marginal() {
        let q = StochasticKernel::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let k = tilt_kernel(&q, &DistortionSpec::hamming(2), 0.0).unwrap();
        for x in 0..2 {
            for yp in 0..2 {
                assert_eq!(k.row(x * 2 + yp), q.row(yp));
            }
        }
        assert!(tilt_kernel(&q, &DistortionSpec::hamming(2), 0.1).is_err());
    }

    #[test]
    fn strong_tilt_concentrates_on_diagonal() {
        let q = StochasticKernel::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.1, 0.8], vec![0.3, 0.3, 0.4]]).unwrap();
        let k = tilt_kernel(&q, &DistortionSpec::hamming(3), -50.0).unwrap();
        for x in 0..3 {
            for yp in 0..3 {
                assert!(k.get(x * 3 + yp, x) >= 1.0 - 1e-15);
            }
        }
    }

    #[test]
    fn zero_tilt_converges_immediately_with_zero_rate() {
        let src = MarkovSource::bsms(0.25).unwrap();
        let rho = DistortionSpec::hamming(2);
        let fp = fixed_point_iterate(&src, &rho, 0.0, &SolverConfig::default()).unwrap();
        assert!(fp.converged);
        // one sweep from each of the two starts
        assert_eq!(fp.iterations, 2);
        let (rate, d) = rate_of_state(&src, &fp.state, 0.0, &rho).unwrap();
        assert_eq!(rate, 0.0);
        assert!((d - 0.5).abs() < 1e-14);
    }

    #[test]
    fn range_errors_name_d_max() {
        let src = MarkovSource::bsms(0.25).unwrap();
        let rho = DistortionSpec::hamming(2);
        let err = solve_for_distortion(&src, &rho, 0.6, &SolverConfig::default()).unwrap_err();
        assert_eq!(err, Error::Range { target: 0.6, d_min: 0.0, d_max: 0.5 });
        assert!(solve_for_distortion(&src, &rho, 0.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn nonstationary_source_rejected() {
        let t = StochasticKernel::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let src = MarkovSource::new(t, Distribution::uniform(2).unwrap()).unwrap();
        let r = fixed_point_iterate(&src, &DistortionSpec::hamming(2), -1.0, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Argument(_))));
    }
}
