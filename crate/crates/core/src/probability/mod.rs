//! Finite-alphabet probability engine: kernels, joint measures of cascades,
//! information measures and stationary distributions.

pub mod cascade;
pub mod info;
pub mod joint;
pub mod kernel;
pub mod source;
pub mod stationary;

pub use cascade::{
    build_joint, build_joint_with_budget, pair_chain, prehistory_kernel, CascadeSystem, InitialState, Prehistory,
    StepKernel, Var, DEFAULT_CELL_BUDGET,
};
pub use info::{
    causality_violation, check_markov_chain, conditional_mutual_information, directed_information,
    directed_information_given, entropy, entropy_binary, mutual_information, nonanticipation_statements,
    relative_entropy, MarkovCheck, NonanticipationStatements,
};
pub use joint::{Axis, JointMeasure, MASS_TOL};
pub use kernel::{Alphabet, ConditionalKernel, Distribution, StochasticKernel, ROW_TOL};
pub use source::{DistortionSpec, MarkovSource};
pub use stationary::{stationary_distribution, stationary_residual};
