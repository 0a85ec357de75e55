//! Compiler for generalized matrix chains with symbolic sizes.
//!
//! A *generalized matrix chain* is a product `Op(M_1) ... Op(M_n)` where each
//! matrix carries a structure (general, symmetric, triangular) and a property
//! (singular, invertible, SPD, orthogonal), and may be transposed and/or
//! inverted. When the sizes are unknown at compile time, no single sequence
//! of kernel calls is best for every size combination. This crate compiles a
//! chain's *shape* into a small set of provably-near-optimal code variants
//! plus a run-time dispatch rule that picks the cheapest variant once the
//! sizes are known.
//!
//! Pipeline: [`frontend`] parses and normalizes the shape; [`variants`]
//! turns parenthesizations into kernel-call sequences using the [`catalog`];
//! [`selection`] picks a penalty-bounded variant set and expands it
//! greedily; [`emit`] serializes the result as a dispatchable plan; the
//! [`oracle`] provides exhaustive optima and a reference interpreter for
//! validation; [`costmodel`] supplies FLOP- and timing-grid-based costs.
//!
//! See the `examples/` directory for one runnable walkthrough per capability.

pub mod catalog;
pub mod cli;
pub mod costmodel;
pub mod emit;
pub mod experiment;
pub mod frontend;
pub mod oracle;
pub mod poly;
pub mod selection;
pub mod variants;
