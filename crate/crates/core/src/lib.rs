//! Nonanticipative (causal) rate-distortion functions for finite-alphabet
//! Markov sources.
//!
//! The crate is `no_std` and only needs `alloc`. It provides
//!
//! * an exact probability engine over finite product alphabets
//!   ([`probability`]): kernels, joint laws of source/encoder/channel/decoder
//!   cascades, mutual and directed information, conditional independence;
//! * the closed-form rate and optimal reproduction kernel for the binary
//!   symmetric Markov source ([`bsms`]);
//! * a tilted-kernel fixed-point solver for general stationary first-order
//!   Markov sources ([`solver`]);
//! * a brute-force classical block rate-distortion oracle ([`classical`]);
//! * a seeded Monte-Carlo simulator of uncoded transmission ([`simulation`]);
//! * a Hoeffding-type bound on the excess-distortion probability
//!   ([`concentration`]).
#![no_std]

extern crate alloc;

pub mod bsms;
pub mod classical;
pub mod concentration;
pub mod error;
pub mod math;
pub mod probability;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
