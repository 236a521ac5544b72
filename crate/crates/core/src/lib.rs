//! Allocation-only core of contrastforge.
//!
//! Everything in this crate is a pure function of its inputs and an explicit
//! seed: LightGCN propagation and BPR training, negative samplers and their
//! gradient diagnostics, the prompt templates and offline stub generators,
//! the causal attention module, joint training, and top-K evaluation.
//! File formats, the chat-completion client and the CLI live in the
//! `contrastforge` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod causal;
pub mod data;
pub mod encode;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod numerics;
pub mod prompt;
pub mod sampling;
pub mod stub;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
