#![allow(dead_code)]

use nrdf_core::probability::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Random probability vector with entries bounded away from zero.
pub fn random_dist(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..size).map(|_| 0.05 + unit(rng)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

pub fn random_kernel(rng: &mut ChaCha8Rng, inputs: &[usize], output: usize) -> StochasticKernel {
    let rows: usize = inputs.iter().product();
    let matrix = (0..rows).flat_map(|_| random_dist(rng, output)).collect();
    let input = inputs.iter().map(|&n| Alphabet::new(n).unwrap()).collect();
    StochasticKernel::new(input, Alphabet::new(output).unwrap(), matrix).unwrap()
}

/// Random stationary binary (or larger) Markov source.
pub fn random_source(rng: &mut ChaCha8Rng, size: usize) -> MarkovSource {
    MarkovSource::stationary(random_kernel(rng, &[size], size)).unwrap()
}

/// Source followed by a random causal full-history reproduction
/// `P(y_i | x^i, y^{i-1})`.
pub fn random_causal_system(rng: &mut ChaCha8Rng, horizon: usize) -> CascadeSystem {
    let src = random_source(rng, 2);
    let steps = (0..=horizon)
        .map(|i| {
            let parents: Vec<Var> = (0..=i).map(Var::X).chain((0..i).map(Var::Y)).collect();
            let k = random_kernel(rng, &vec![2; parents.len()], 2);
            StepKernel::new(parents, k)
        })
        .collect();
    CascadeSystem::direct(src, horizon, steps, None).unwrap()
}

/// Random source law over `X^n` times a random (generally anticipative)
/// block kernel `P(y^n | x^n)`, laid out as `X0..Xn, Y0..Yn`.
pub fn random_block_joint(rng: &mut ChaCha8Rng, horizon: usize) -> JointMeasure {
    let len = horizon + 1;
    let src = random_source(rng, 2);
    let block = 1usize << len;
    let mut table = Vec::with_capacity(block * block);
    for x in 0..block {
        let bits: Vec<usize> = (0..len).map(|k| (x >> (len - 1 - k)) & 1).collect();
        let px = bits.windows(2).fold(src.initial().probs()[bits[0]], |w, p| w * src.transition().get(p[0], p[1]));
        table.extend(random_dist(rng, block).into_iter().map(|v| px * v));
    }
    let mut axes: Vec<Axis> = (0..len).map(|i| Axis::new(format!("X{i}"), 2)).collect();
    axes.extend((0..len).map(|i| Axis::new(format!("Y{i}"), 2)));
    JointMeasure::new(axes, table).unwrap()
}

/// Random binary encoder / channel / decoder cascade with memory one in
/// every component.
pub fn random_cascade(rng: &mut ChaCha8Rng, horizon: usize) -> CascadeSystem {
    let src = random_source(rng, 2);
    let mut enc = Vec::new();
    let mut chan = Vec::new();
    let mut dec = Vec::new();
    for i in 0..=horizon {
        let (ep, cp, dp) = if i == 0 {
            (vec![Var::X(0)], vec![Var::A(0)], vec![Var::B(0)])
        } else {
            (vec![Var::X(i), Var::A(i - 1)], vec![Var::A(i), Var::B(i - 1)], vec![Var::B(i), Var::Y(i - 1)])
        };
        enc.push(StepKernel::new(ep.clone(), random_kernel(rng, &vec![2; ep.len()], 2)));
        chan.push(StepKernel::new(cp.clone(), random_kernel(rng, &vec![2; cp.len()], 2)));
        dec.push(StepKernel::new(dp.clone(), random_kernel(rng, &vec![2; dp.len()], 2)));
    }
    CascadeSystem::new(src, horizon, enc, chan, dec, None).unwrap()
}

pub fn axes(joint: &JointMeasure, family: &str, horizon: usize) -> Vec<usize> {
    let names: Vec<String> = (0..=horizon).map(|i| format!("{family}{i}")).collect();
    joint.axes_named(&names).unwrap()
}
