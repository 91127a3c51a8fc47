//! Source / encoder / channel / decoder cascades and their exact joint law.
//!
//! Kernels carry an explicit parent list, so each one declares its own memory.
//! The joint table is the ordered product of all kernels, laid out in the
//! order `X0, [S], A0, B0, Y0, X1, A1, B1, Y1, ..` where `S` is an optional
//! initial state (for memory-1 reproductions, the symbol preceding `Y0`).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::joint::{Axis, JointMeasure};
use super::kernel::{Alphabet, StochasticKernel};
use super::source::MarkovSource;
use super::stationary::stationary_distribution;
use crate::error::{Error, Result};

/// Default cap on the number of cells of a joint table.
pub const DEFAULT_CELL_BUDGET: u128 = 100_000_000;

/// A variable of the cascade at a given time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    A(usize),
    B(usize),
    Y(usize),
    /// The optional initial state.
    Init,
}

impl Var {
    pub fn name(&self) -> String {
        match self {
            Var::X(i) => format!("X{i}"),
            Var::A(i) => format!("A{i}"),
            Var::B(i) => format!("B{i}"),
            Var::Y(i) => format!("Y{i}"),
            Var::Init => String::from("S"),
        }
    }
}

/// One time step of an encoder, channel or decoder: a kernel together with
/// the variables it conditions on, in the kernel's input-factor order.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    pub parents: Vec<Var>,
    pub kernel: StochasticKernel,
}

impl StepKernel {
    pub fn new(parents: Vec<Var>, kernel: StochasticKernel) -> Self {
        StepKernel { parents, kernel }
    }
}

/// Initial state `S ~ P(s | x_0)`, sampled right after `X0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub kernel: StochasticKernel,
}

/// How the state preceding the first reproduction is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prehistory {
    /// Averaged into the time-0 kernel.
    Hidden,
    /// Kept as an explicit axis `S` of the joint measure.
    Axis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSystem {
    source: MarkovSource,
    horizon: usize,
    encoder: Vec<StepKernel>,
    channel: Vec<StepKernel>,
    decoder: Vec<StepKernel>,
    initial: Option<InitialState>,
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Encoder,
    Channel,
    Decoder,
    Direct,
}

fn allowed(role: Role, step: usize, parent: Var) -> bool {
    match (role, parent) {
        (_, Var::Init) => true,
        (Role::Encoder, Var::X(j)) => j <= step,
        (Role::Encoder, Var::A(j) | Var::B(j)) => j < step,
        (Role::Channel, Var::X(j) | Var::A(j)) => j <= step,
        (Role::Channel, Var::B(j)) => j < step,
        (Role::Decoder, Var::B(j)) => j <= step,
        (Role::Decoder, Var::Y(j)) => j < step,
        (Role::Direct, Var::X(j)) => j <= step,
        (Role::Direct, Var::Y(j)) => j < step,
        _ => false,
    }
}

impl CascadeSystem {
    /// Full cascade with encoder, channel and decoder; one kernel per step.
    pub fn new(
        source: MarkovSource,
        horizon: usize,
        encoder: Vec<StepKernel>,
        channel: Vec<StepKernel>,
        decoder: Vec<StepKernel>,
        initial: Option<InitialState>,
    ) -> Result<Self> {
        let sys = CascadeSystem { source, horizon, encoder, channel, decoder, initial };
        sys.validate()?;
        Ok(sys)
    }

    /// Source followed directly by a causal reproduction kernel
    /// `P(y_i | x^i, y^{i-1})`; the joint has only `X`, `Y` (and `S`) axes.
    pub fn direct(
        source: MarkovSource,
        horizon: usize,
        reproduction: Vec<StepKernel>,
        initial: Option<InitialState>,
    ) -> Result<Self> {
        let sys =
            CascadeSystem { source, horizon, encoder: Vec::new(), channel: Vec::new(), decoder: reproduction, initial };
        sys.validate()?;
        Ok(sys)
    }

    /// Source followed by a stationary memory-1 reproduction kernel
    /// `P(y_i | x_i, y_{i-1})` at every step.
    pub fn memory_one(
        source: MarkovSource,
        reproduction: &StochasticKernel,
        horizon: usize,
        prehistory: Prehistory,
    ) -> Result<Self> {
        let (first, initial) = first_step(&source, reproduction, prehistory)?;
        let mut steps = vec![StepKernel::new(first.0, first.1)];
        for i in 1..=horizon {
            steps.push(StepKernel::new(vec![Var::X(i), Var::Y(i - 1)], reproduction.clone()));
        }
        CascadeSystem::direct(source, horizon, steps, initial)
    }

    /// Uncoded transmission: identity encoder and decoder, with the memory-1
    /// reproduction kernel acting as the channel `P(b_i | a_i, b_{i-1})`.
    pub fn uncoded(
        source: MarkovSource,
        reproduction: &StochasticKernel,
        horizon: usize,
        prehistory: Prehistory,
    ) -> Result<Self> {
        let nx = source.alphabet_size();
        let identity = StochasticKernel::identity(nx)?;
        let ny = reproduction.cols();
        let decoder_identity = StochasticKernel::identity(ny)?;
        let (first, initial) = first_step(&source, reproduction, prehistory)?;
        let first_parents: Vec<Var> = first
            .0
            .iter()
            .map(|v| match v {
                Var::X(0) => Var::A(0),
                other => *other,
            })
            .collect();
        let mut encoder = Vec::new();
        let mut channel = Vec::new();
        let mut decoder = Vec::new();
        for i in 0..=horizon {
            encoder.push(StepKernel::new(vec![Var::X(i)], identity.clone()));
            decoder.push(StepKernel::new(vec![Var::B(i)], decoder_identity.clone()));
            if i == 0 {
                channel.push(StepKernel::new(first_parents.clone(), first.1.clone()));
            } else {
                channel.push(StepKernel::new(vec![Var::A(i), Var::B(i - 1)], reproduction.clone()));
            }
        }
        CascadeSystem::new(source, horizon, encoder, channel, decoder, initial)
    }

    pub fn source(&self) -> &MarkovSource {
        &self.source
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn has_initial_state(&self) -> bool {
        self.initial.is_some()
    }

    pub fn is_direct(&self) -> bool {
        self.encoder.is_empty() && self.channel.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let steps = self.horizon + 1;
        let direct = self.is_direct();
        if direct {
            if self.decoder.len() != steps {
                return Err(Error::Composition(format!(
                    "reproduction needs {steps} step kernels, got {}",
                    self.decoder.len()
                )));
            }
        } else if self.encoder.len() != steps || self.channel.len() != steps || self.decoder.len() != steps {
            return Err(Error::Composition(format!("encoder, channel and decoder each need {steps} step kernels")));
        }
        if let Some(init) = &self.initial {
            if init.kernel.input_sizes() != [self.source.alphabet_size()] {
                return Err(Error::Composition("initial state kernel must condition on X0 only".into()));
            }
        }
        let size_of = |role: &[StepKernel]| role.first().map(|k| k.kernel.cols());
        let a = size_of(&self.encoder);
        let b = size_of(&self.channel);
        let y = size_of(&self.decoder);
        let groups: [(&[StepKernel], Role, Option<usize>, &str); 3] = if direct {
            [(&[], Role::Encoder, None, "A"), (&[], Role::Channel, None, "B"), (&self.decoder, Role::Direct, y, "Y")]
        } else {
            [
                (&self.encoder, Role::Encoder, a, "A"),
                (&self.channel, Role::Channel, b, "B"),
                (&self.decoder, Role::Decoder, y, "Y"),
            ]
        };
        for (kernels, role, size, label) in groups {
            for (i, step) in kernels.iter().enumerate() {
                if Some(step.kernel.cols()) != size {
                    return Err(Error::Composition(format!("{label}{i} output alphabet differs from {label}0")));
                }
                let expected = step.parents.len();
                if step.kernel.input().len() != expected {
                    return Err(Error::Composition(format!(
                        "{label}{i} kernel has {} input factors for {expected} parents",
                        step.kernel.input().len()
                    )));
                }
                for (p, alpha) in step.parents.iter().zip(step.kernel.input()) {
                    if !allowed(role, i, *p) {
                        return Err(Error::Composition(format!("{label}{i} may not depend on {}", p.name())));
                    }
                    if matches!(p, Var::Init) && self.initial.is_none() {
                        return Err(Error::Composition(format!(
                            "{label}{i} depends on S but the system has no initial state"
                        )));
                    }
                    let psize = self
                        .var_size(*p)
                        .ok_or_else(|| Error::Composition(format!("{label}{i} refers to missing {}", p.name())))?;
                    if psize != alpha.size() {
                        return Err(Error::Composition(format!(
                            "{label}{i}: parent {} has {psize} symbols, kernel expects {}",
                            p.name(),
                            alpha.size()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn var_size(&self, v: Var) -> Option<usize> {
        let first = |k: &[StepKernel]| k.first().map(|s| s.kernel.cols());
        match v {
            Var::X(i) if i <= self.horizon => Some(self.source.alphabet_size()),
            Var::A(i) if i <= self.horizon => first(&self.encoder),
            Var::B(i) if i <= self.horizon => first(&self.channel),
            Var::Y(i) if i <= self.horizon => first(&self.decoder),
            Var::Init => self.initial.as_ref().map(|s| s.kernel.cols()),
            _ => None,
        }
    }

    /// Variables in joint-table order.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for i in 0..=self.horizon {
            out.push(Var::X(i));
            if i == 0 && self.initial.is_some() {
                out.push(Var::Init);
            }
            if !self.is_direct() {
                out.push(Var::A(i));
                out.push(Var::B(i));
            }
            out.push(Var::Y(i));
        }
        out
    }

    /// Number of cells of the joint table.
    pub fn cell_count(&self) -> u128 {
        self.variables().iter().map(|v| self.var_size(*v).unwrap_or(1) as u128).product()
    }
}

type FirstStep = ((Vec<Var>, StochasticKernel), Option<InitialState>);

/// Time-0 reproduction step for a memory-1 kernel, given the prehistory mode.
fn first_step(source: &MarkovSource, reproduction: &StochasticKernel, prehistory: Prehistory) -> Result<FirstStep> {
    let nx = source.alphabet_size();
    let ny = reproduction.cols();
    if reproduction.input_sizes() != [nx, ny] {
        return Err(Error::Composition(format!(
            "memory-1 reproduction must have inputs (x, y_prev) of sizes ({nx}, {ny})"
        )));
    }
    let init = prehistory_kernel(source, reproduction)?;
    match prehistory {
        Prehistory::Axis => {
            Ok(((vec![Var::X(0), Var::Init], reproduction.clone()), Some(InitialState { kernel: init })))
        }
        Prehistory::Hidden => {
            let mut m = vec![0.0; nx * ny];
            for x in 0..nx {
                for s in 0..ny {
                    let w = init.get(x, s);
                    for y in 0..ny {
                        m[x * ny + y] += w * reproduction.get(x * ny + s, y);
                    }
                }
            }
            let k = StochasticKernel::new(vec![Alphabet::new(nx)?], Alphabet::new(ny)?, m)?;
            Ok(((vec![Var::X(0)], k), None))
        }
    }
}

/// Transition kernel of the pair chain `Z_i = (X_i, Y_i)` induced by a
/// source and a memory-1 reproduction:
/// `(x, y) -> (x', y')` with weight `P(x' | x) P(y' | x', y)`.
pub fn pair_chain(source: &MarkovSource, reproduction: &StochasticKernel) -> Result<StochasticKernel> {
    let nx = source.alphabet_size();
    let ny = reproduction.cols();
    if reproduction.input_sizes() != [nx, ny] {
        return Err(Error::Composition("memory-1 reproduction must have inputs (x, y_prev)".into()));
    }
    let n = nx * ny;
    let t = source.transition();
    let mut m = vec![0.0; n * n];
    for x in 0..nx {
        for y in 0..ny {
            let row = &mut m[(x * ny + y) * n..(x * ny + y + 1) * n];
            for x2 in 0..nx {
                let px = t.get(x, x2);
                if px == 0.0 {
                    continue;
                }
                for y2 in 0..ny {
                    row[x2 * ny + y2] = px * reproduction.get(x2 * ny + y, y2);
                }
            }
        }
    }
    let a = Alphabet::new(n)?;
    StochasticKernel::new(vec![a.clone()], a, m)
}

/// `P(y_{-1} | x_0)` in the stationary regime of the pair chain. Rows for
/// source symbols of zero stationary mass fall back to the `Y` marginal.
pub fn prehistory_kernel(source: &MarkovSource, reproduction: &StochasticKernel) -> Result<StochasticKernel> {
    let nx = source.alphabet_size();
    let ny = reproduction.cols();
    let chain = pair_chain(source, reproduction)?;
    let pi = match stationary_distribution(&chain) {
        Ok(d) => d,
        Err(Error::NonUniqueStationary(d)) => d,
        Err(e) => return Err(e),
    };
    let pi = pi.probs();
    let t = source.transition();
    // joint of (x_0, y_{-1})
    let mut joint = vec![0.0; nx * ny];
    let mut y_marginal = vec![0.0; ny];
    for x in 0..nx {
        for y in 0..ny {
            let w = pi[x * ny + y];
            y_marginal[y] += w;
            for x0 in 0..nx {
                joint[x0 * ny + y] += w * t.get(x, x0);
            }
        }
    }
    for row in joint.chunks_mut(ny) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|w| *w /= s);
        } else {
            row.copy_from_slice(&y_marginal);
        }
    }
    StochasticKernel::new(vec![Alphabet::new(nx)?], Alphabet::new(ny)?, joint)
}

/// Exact joint law of every variable of the cascade, as the ordered product
/// of source, encoder, channel and decoder kernels.
pub fn build_joint(system: &CascadeSystem) -> Result<JointMeasure> {
    build_joint_with_budget(system, DEFAULT_CELL_BUDGET)
}

pub fn build_joint_with_budget(system: &CascadeSystem, budget: u128) -> Result<JointMeasure> {
    let cells = system.cell_count();
    if cells > budget {
        return Err(Error::Size { cells, budget });
    }
    let vars = system.variables();
    let sizes: Vec<usize> = vars.iter().map(|v| system.var_size(*v).unwrap_or(1)).collect();
    let position = |v: Var| vars.iter().position(|w| *w == v);

    let mut table: Vec<f64> = system.source.initial().probs().to_vec();
    let mut strides: Vec<usize> = vec![1];
    for (k, var) in vars.iter().enumerate().skip(1) {
        let (parents, kernel): (Vec<usize>, &StochasticKernel) = match *var {
            Var::X(i) => (vec![position(Var::X(i - 1)).expect("previous source symbol")], system.source.transition()),
            Var::Init => {
                (vec![position(Var::X(0)).expect("X0")], &system.initial.as_ref().expect("initial state").kernel)
            }
            Var::A(i) => node(&system.encoder[i], &position),
            Var::B(i) => node(&system.channel[i], &position),
            Var::Y(i) => node(&system.decoder[i], &position),
        };
        let width = sizes[k];
        let mut next = vec![0.0; table.len() * width];
        // current table has axes 0..k; strides are relative to it
        for (cell, &w) in table.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = parents.iter().fold(0, |acc, &p| acc * sizes[p] + (cell / strides[p]) % sizes[p]);
            let probs = kernel.row(row);
            for (slot, &q) in next[cell * width..(cell + 1) * width].iter_mut().zip(probs) {
                *slot = w * q;
            }
        }
        for s in strides.iter_mut() {
            *s *= width;
        }
        strides.push(1);
        table = next;
    }
    let axes = vars.iter().zip(&sizes).map(|(v, &s)| Axis::new(v.name(), s)).collect();
    JointMeasure::new(axes, table)
}

fn node<'a>(step: &'a StepKernel, position: &impl Fn(Var) -> Option<usize>) -> (Vec<usize>, &'a StochasticKernel) {
    let parents = step.parents.iter().map(|p| position(*p).expect("validated parent")).collect();
    (parents, &step.kernel)
}

/// Axis indices of `X0..Xn` and `Y0..Yn` in a joint built from `system`.
pub fn source_and_reproduction_axes(joint: &JointMeasure, horizon: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let xs: Vec<String> = (0..=horizon).map(|i| Var::X(i).name()).collect();
    let ys: Vec<String> = (0..=horizon).map(|i| Var::Y(i).name()).collect();
    Ok((joint.axes_named(&xs)?, joint.axes_named(&ys)?))
}

/// Axis indices of a named variable family (`"X"`, `"A"`, `"B"` or `"Y"`) over `0..=horizon`.
pub fn family_axes(joint: &JointMeasure, family: &str, horizon: usize) -> Result<Vec<usize>> {
    let names: Vec<String> = (0..=horizon).map(|i| format!("{family}{i}")).collect();
    joint.axes_named(&names)
}
