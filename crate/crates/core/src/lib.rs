//! Toolkit for directed information and the feedback capacity of unifilar
//! finite-state channels.
//!
//! The crate is organized around a handful of cooperating modules:
//!
//! - [`probcore`]: exact entropy / KL / conditional-MI primitives, exact
//!   directed information of finite-horizon joints, and the InfoMat.
//! - [`channels`]: unifilar finite-state channel representation, built-in
//!   Ising constructors, validation, and file loading.
//! - [`belief_mdp`]: the average-reward MDP whose state is the decoder's
//!   belief, value iteration, and the closed-form Ising solution.
//! - [`qgraph`]: output-quantizing automata and the induced (S,Q) chain.
//! - [`qbound`]: the Q-graph upper bound as a convex program, BCJR
//!   invariance, and the matching lower bound.
//! - [`duality`]: dual upper bounds through graph-based test distributions,
//!   solved as a finite average-reward MDP.
//! - [`coding`]: posterior-matching feedback coding simulator.
//! - [`estimators`]: plug-in and context-tree-weighting DI estimators with
//!   an exact oracle for Markov sources.
//! - [`ba_di`]: extended Blahut-Arimoto optimization of n-letter directed
//!   information with sandwich bounds.
//!
//! All information quantities are in bits (base-2 logarithms).

// Dense tensor code indexes several parallel arrays per loop; iterator
// rewrites obscure the index bookkeeping the formulas are written in.
#![allow(clippy::needless_range_loop)]

pub mod ba_di;
pub mod belief_mdp;
pub mod channels;
pub mod coding;
pub mod duality;
pub mod error;
pub mod estimators;
pub(crate) mod linalg;
pub(crate) mod opt;
pub mod markov;
pub mod probcore;
pub mod qbound;
pub mod qgraph;

pub use error::{Error, Result};

/// Tool version string, embedded in reports and manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Log base used for every information quantity emitted by this crate.
pub const LOG_BASE: &str = "bits";
