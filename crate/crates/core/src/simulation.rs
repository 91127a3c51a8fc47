//! Monte-Carlo simulation of uncoded symbol-by-symbol transmission: the source
//! sequence is fed straight through a memory-1 channel `P(y_i | x_i, y_{i-1})`
//! and the channel output is taken as the reproduction.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). Trial `k` uses the
//! generator seeded by `seed_from_u64(seed)` with its stream set to `k`, so
//! any trial can be replayed on its own and results do not depend on how
//! trials are scheduled. Aggregates are accumulated over fixed chunks of
//! [`CHUNK_TRIALS`] trials and merged in chunk order, which makes parallel
//! and sequential runs bit-identical.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{arg, Error, Result};
use crate::math::sqrt;
use crate::probability::{pair_chain, stationary_distribution, DistortionSpec, MarkovSource, StochasticKernel};

pub const CHUNK_TRIALS: u64 = 1024;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// How the symbols preceding time 0 are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// `(x_{-1}, y_{-1})` from the stationary law of the pair chain, then
    /// `x_0 ~ P(. | x_{-1})`. Both `X_0` and `Y_{-1}` are then stationary.
    Stationary,
    /// `y_{-1}` fixed, `x_0` from the source's initial law.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub source: MarkovSource,
    /// Inputs `(x, y_prev)`, output `y`.
    pub channel: StochasticKernel,
    pub distortion: DistortionSpec,
    /// Last time index; each trial has `n + 1` symbols.
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    /// Per-letter threshold `d` of the excess event `S_n > (n + 1) d`.
    pub d_threshold: f64,
    pub record_trajectory: bool,
    pub initial: InitialCondition,
}

impl SimulationConfig {
    pub fn new(
        source: MarkovSource,
        channel: StochasticKernel,
        distortion: DistortionSpec,
        n: usize,
        trials: u64,
        seed: u64,
        d_threshold: f64,
    ) -> Result<Self> {
        let c = SimulationConfig {
            source,
            channel,
            distortion,
            n,
            trials,
            seed,
            d_threshold,
            record_trajectory: false,
            initial: InitialCondition::Stationary,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.source.alphabet_size();
        let ny = self.channel.cols();
        if self.channel.input_sizes() != [nx, ny] {
            return Err(Error::Composition(format!(
                "channel inputs {:?} do not match (x, y_prev) = ({nx}, {ny})",
                self.channel.input_sizes()
            )));
        }
        if self.distortion.source_size() != nx || self.distortion.repro_size() != ny {
            return Err(Error::Composition("distortion matrix does not match the alphabets".into()));
        }
        if self.trials == 0 {
            return arg("at least one trial is required");
        }
        if !(self.d_threshold >= 0.0) {
            return arg(format!("threshold {} must be nonnegative", self.d_threshold));
        }
        if let InitialCondition::Fixed(y) = self.initial {
            if y >= ny {
                return arg(format!("initial reproduction symbol {y} out of range"));
            }
        }
        Ok(())
    }
}

/// One replayable trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    /// `S_i / (i + 1)` for `i = 0..=n`.
    pub running_distortion: Vec<f64>,
    pub final_distortion: f64,
    /// `(master seed, stream)` of the generator used.
    pub seed_used: (u64, u64),
}

/// Inverse-CDF samplers for every row the simulation needs.
#[derive(Debug, Clone)]
struct Sampler {
    nx: usize,
    ny: usize,
    transition: Vec<f64>,
    channel: Vec<f64>,
    start: Start,
    rho: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Start {
    /// Cumulative pair law over `x * ny + y`.
    Pair(Vec<f64>),
    Fixed {
        y: usize,
        x0: Vec<f64>,
    },
}

fn cumulative(rows: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows.chunks(width) {
        let mut acc = 0.0;
        for (k, &v) in row.iter().enumerate() {
            acc += v;
            // guard the last bin against rounding so every draw lands somewhere
            out.push(if k + 1 == width { f64::INFINITY } else { acc });
        }
    }
    out
}

#[inline]
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

impl Sampler {
    fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let nx = config.source.alphabet_size();
        let ny = config.channel.cols();
        let start = match config.initial {
            InitialCondition::Stationary => {
                let chain = pair_chain(&config.source, &config.channel)?;
                let pi = match stationary_distribution(&chain) {
                    Ok(d) => d,
                    Err(Error::NonUniqueStationary(d)) => d,
                    Err(e) => return Err(e),
                };
                Start::Pair(cumulative(pi.probs(), nx * ny))
            }
            InitialCondition::Fixed(y) => Start::Fixed { y, x0: cumulative(config.source.initial().probs(), nx) },
        };
        let rho = (0..nx * ny).map(|k| config.distortion.get(k / ny, k % ny)).collect();
        Ok(Sampler {
            nx,
            ny,
            transition: cumulative(config.source.transition().matrix(), nx),
            channel: cumulative(config.channel.matrix(), ny),
            start,
            rho,
        })
    }

    fn next_x(&self, rng: &mut ChaCha8Rng, x: usize) -> usize {
        draw(&self.transition[x * self.nx..(x + 1) * self.nx], unit(rng))
    }

    fn next_y(&self, rng: &mut ChaCha8Rng, x: usize, yp: usize) -> usize {
        let r = (x * self.ny + yp) * self.ny;
        draw(&self.channel[r..r + self.ny], unit(rng))
    }

    fn first(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        match &self.start {
            Start::Pair(cdf) => {
                let k = draw(cdf, unit(rng));
                let x0 = self.next_x(rng, k / self.ny);
                (x0, k % self.ny)
            }
            Start::Fixed { y, x0 } => (draw(x0, unit(rng)), *y),
        }
    }

    /// Runs one trial, calling `visit(i, x_i, y_i, rho_i)` at every step.
    fn run(&self, seed: u64, stream: u64, n: usize, mut visit: impl FnMut(usize, usize, usize, f64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (mut x, mut yp) = self.first(&mut rng);
        for i in 0..=n {
            if i > 0 {
                x = self.next_x(&mut rng, x);
            }
            let y = self.next_y(&mut rng, x, yp);
            visit(i, x, y, self.rho[x * self.ny + y]);
            yp = y;
        }
    }
}

/// Replays trial `trial_index` of `config` with its full symbol sequences.
pub fn run_trial(config: &SimulationConfig, trial_index: u64) -> Result<SimulationTrace> {
    let sampler = Sampler::new(config)?;
    let len = config.n + 1;
    let mut xs = Vec::with_capacity(len);
    let mut ys = Vec::with_capacity(len);
    let mut running = Vec::with_capacity(len);
    let mut total = 0.0;
    sampler.run(config.seed, trial_index, config.n, |i, x, y, r| {
        xs.push(x);
        ys.push(y);
        total += r;
        running.push(total / (i + 1) as f64);
    });
    Ok(SimulationTrace {
        xs,
        ys,
        running_distortion: running,
        final_distortion: total / len as f64,
        seed_used: (config.seed, trial_index),
    })
}

/// Aggregate over a set of trials. Merge in trial order for reproducible sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: u64,
    /// Per threshold, number of trials with `S_n > (n + 1) d`.
    pub excess_counts: Vec<u64>,
    /// Sum over trials of the per-letter distortion `S_n / (n + 1)`.
    pub distortion_sum: f64,
    pub distortion_sq_sum: f64,
    /// Per step, sum over trials of `S_i / (i + 1)`; empty unless recorded.
    pub trajectory_sum: Vec<f64>,
}

impl TrialSummary {
    pub fn empty(thresholds: usize, steps: usize) -> Self {
        TrialSummary {
            trials: 0,
            excess_counts: vec![0; thresholds],
            distortion_sum: 0.0,
            distortion_sq_sum: 0.0,
            trajectory_sum: vec![0.0; steps],
        }
    }

    pub fn merge(mut self, other: &TrialSummary) -> Self {
        self.trials += other.trials;
        for (a, b) in self.excess_counts.iter_mut().zip(&other.excess_counts) {
            *a += b;
        }
        self.distortion_sum += other.distortion_sum;
        self.distortion_sq_sum += other.distortion_sq_sum;
        for (a, b) in self.trajectory_sum.iter_mut().zip(&other.trajectory_sum) {
            *a += b;
        }
        self
    }

    pub fn mean_distortion(&self) -> f64 {
        self.distortion_sum / self.trials as f64
    }

    pub fn mean_trajectory(&self) -> Vec<f64> {
        self.trajectory_sum.iter().map(|s| s / self.trials as f64).collect()
    }
}

/// Trial-index ranges of the fixed aggregation chunks.
pub fn chunks(trials: u64) -> Vec<Range<u64>> {
    (0..trials.div_ceil(CHUNK_TRIALS)).map(|c| c * CHUNK_TRIALS..((c + 1) * CHUNK_TRIALS).min(trials)).collect()
}

/// Simulates the trials in `range`, counting excess events for each of
/// `thresholds`.
pub fn run_chunk(config: &SimulationConfig, thresholds: &[f64], range: Range<u64>) -> Result<TrialSummary> {
    let sampler = Sampler::new(config)?;
    Ok(run_chunk_with(&sampler, config, thresholds, range))
}

fn run_chunk_with(sampler: &Sampler, config: &SimulationConfig, thresholds: &[f64], range: Range<u64>) -> TrialSummary {
    let steps = if config.record_trajectory { config.n + 1 } else { 0 };
    let letters = (config.n + 1) as f64;
    let mut out = TrialSummary::empty(thresholds.len(), steps);
    for trial in range {
        let mut total = 0.0;
        let traj = &mut out.trajectory_sum;
        sampler.run(config.seed, trial, config.n, |i, _, _, r| {
            total += r;
            if steps > 0 {
                traj[i] += total / (i + 1) as f64;
            }
        });
        for (count, &d) in out.excess_counts.iter_mut().zip(thresholds) {
            if total > letters * d {
                *count += 1;
            }
        }
        let per_letter = total / letters;
        out.trials += 1;
        out.distortion_sum += per_letter;
        out.distortion_sq_sum += per_letter * per_letter;
    }
    out
}

/// Runs every trial sequentially.
pub fn simulate(config: &SimulationConfig, thresholds: &[f64]) -> Result<TrialSummary> {
    let sampler = Sampler::new(config)?;
    let steps = if config.record_trajectory { config.n + 1 } else { 0 };
    Ok(chunks(config.trials)
        .into_iter()
        .map(|r| run_chunk_with(&sampler, config, thresholds, r))
        .fold(TrialSummary::empty(thresholds.len(), steps), |acc, c| acc.merge(&c)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessDistortionEstimate {
    pub d_threshold: f64,
    pub empirical_prob: f64,
    /// Wilson score interval at 95%.
    pub wilson_interval: (f64, f64),
    pub excess: u64,
    pub trials: u64,
}

pub fn wilson_interval(successes: u64, trials: u64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return arg("Wilson interval needs 0 <= successes <= trials, trials > 0");
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // the endpoints can miss p = 0 or 1 by an ulp
    Ok(((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0)))
}

/// Builds the estimates for each threshold from a summary.
pub fn estimates_from(summary: &TrialSummary, thresholds: &[f64]) -> Result<Vec<ExcessDistortionEstimate>> {
    thresholds
        .iter()
        .zip(&summary.excess_counts)
        .map(|(&d, &k)| {
            Ok(ExcessDistortionEstimate {
                d_threshold: d,
                empirical_prob: k as f64 / summary.trials as f64,
                wilson_interval: wilson_interval(k, summary.trials)?,
                excess: k,
                trials: summary.trials,
            })
        })
        .collect()
}

/// Empirical `P(S_n > (n + 1) d)` at `config.d_threshold`.
pub fn estimate_excess(config: &SimulationConfig) -> Result<ExcessDistortionEstimate> {
    let summary = simulate(config, &[config.d_threshold])?;
    Ok(estimates_from(&summary, &[config.d_threshold])?[0])
}

/// Excess probabilities for several thresholds over the same trials.
pub fn excess_curve(config: &SimulationConfig, thresholds: &[f64]) -> Result<Vec<ExcessDistortionEstimate>> {
    let summary = simulate(config, thresholds)?;
    estimates_from(&summary, thresholds)
}

/// Pointwise average of the running distortion `S_i / (i + 1)` over trials.
pub fn mean_distortion_curve(config: &SimulationConfig) -> Result<Vec<f64>> {
    if !config.record_trajectory {
        return arg("trajectory recording is disabled");
    }
    Ok(simulate(config, &[])?.mean_trajectory())
}
