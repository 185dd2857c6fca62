//! Numerical laboratory for message passing with a virtual node.
//!
//! The crate compiles attention layers (kernelised Performer / Linear
//! Transformer attention, and full softmax attention) into explicit
//! MPNN + virtual-node layer programs, runs them, and measures how far the
//! programs are from the layers they simulate. Equivariant DeepSets layers
//! are compiled the same way and reproduced exactly.

pub mod attention;
pub mod constructions;
pub mod deepsets;
pub mod error;
pub mod graphs;
pub mod mlp;
pub mod mpnnvn;
pub mod numkit;
pub mod separability;

pub use error::{Error, Result};
pub use numkit::{Matrix, Rng};
