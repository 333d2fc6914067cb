//! Chemical master equation generators for reaction networks with fast and
//! slow reactions, reduction onto the slow time scale, and stochastic
//! simulation of both the full and the reduced dynamics.
//!
//! The pipeline: parse a network ([`network`]), enumerate its accessible
//! states and assemble the split generator ([`statespace`]), decompose the
//! fast graph ([`faststructure`]), build the projections and the reduced
//! generator ([`reduction`]), then either integrate the Kolmogorov equations
//! ([`dynamics`]) or run the Gillespie samplers ([`ssa`]).
//!
//! See the `examples/` directory for one runnable program per capability, or
//! the `slowscale` binary for the file-based command line.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod faststructure;
pub mod fixtures;
pub mod io;
mod linalg;
pub mod network;
pub mod reduction;
pub mod rng;
pub mod ssa;
pub mod statespace;

pub use error::{Error, Result};
pub use network::{parse_network, ReactionNetwork};
pub use reduction::{reduce_network, Reduction};
