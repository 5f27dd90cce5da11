//! Policies for entanglement distribution in near-term quantum networks.
//!
//! The crate models elementary-link generation and two-link entanglement
//! swapping as Markov decision processes, solves for optimal stationary
//! policies with small linear programs, and provides exact density-matrix
//! computations for the joining protocols, the satellite-to-ground link
//! model, waiting-time statistics and QKD key rates.
//!
//! Module map:
//!
//! * [`simplex_core`]: probability vectors, stochastic matrices, generic MDP
//!   evolution, stationary distributions and absorbing-chain analysis.
//! * [`lp`]: a dense bounded-variable simplex solver and the generic MDP
//!   linear programs.
//! * [`qstate`]: density operators, Kraus channels, swapping/GHZ/graph-state
//!   channels and their closed-form fidelities, distillation.
//! * [`elemlink`]: the single elementary-link MDP.
//! * [`twolink`]: two elementary links joined by entanglement swapping.
//! * [`satlink`]: satellite-to-ground transmission, memory decay and key rates.
//! * [`waiting`]: waiting-time distributions and expectations.
//! * [`mc_oracle`]: seeded Monte Carlo simulation used as a statistical oracle.

pub mod elemlink;
mod error;
pub mod lp;
pub mod mc_oracle;
pub mod qstate;
pub mod satlink;
pub mod simplex_core;
pub mod twolink;
pub mod waiting;

pub use error::{Error, Result};
