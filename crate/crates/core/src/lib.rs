//! Rank-collapse laboratory for attention and message passing.
//!
//! Centered self-attention adds `γ·𝟙𝟙ᵀ/n` to the row-stochastic attention
//! map so that its rows sum to `1 + γ`. At `γ = -1` the rows sum to zero and
//! the leading eigenvalue that drives deep stacks toward rank one is removed.
//! This crate provides the dense linear algebra, attention blocks, rank and
//! similarity experiments, a small reverse-mode autodiff tape and the GCN
//! training stack built on it.

pub mod attention;
pub mod autodiff;
pub mod error;
pub mod gnn;
pub mod lab;
pub mod linalg;
pub mod output;
pub mod rng;

pub use error::{Error, Result};
pub use attention::{AttentionWeights, BlockVariant, InitKind, InitScheme, StackConfig};
pub use linalg::{Matrix, RankConfig};
