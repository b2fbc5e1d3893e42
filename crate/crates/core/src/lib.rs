//! A workbench for hereditarily finite set theory: canonical sets and the
//! finite von Neumann stages, Mostowski collapse, bounded formulas and their
//! evaluation, finite constructible stages, absoluteness checks, and finite
//! model-theoretic completeness checks.

pub mod absoluteness;
pub mod collapse;
pub mod definability;
pub mod eval;
pub mod kernel;
pub mod logic;
pub mod metatheory;

pub use kernel::{Caps, HfSet, KernelError, SetStore};
