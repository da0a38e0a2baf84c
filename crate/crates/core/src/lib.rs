//! Partitioned variational quantum models over simulated cloud providers.
//!
//! A model is a tree of 4-qubit computing nodes. Each node can run on a
//! different provider, so no single provider sees the whole circuit. The
//! [`security`] module measures how much a single provider's fragment is
//! worth, and [`engine`] searches architectures and placements that keep
//! accuracy high while keeping fragments weak.

pub mod arch;
pub mod data;
pub mod engine;
pub mod fleet;
pub mod graph;
pub mod qsim;
pub mod redteam;
pub mod security;
pub mod seed;
