//! File formats, the generation pipeline, the chat-completion client and
//! the `contrastforge` command line on top of `contrastforge-core`.

pub mod backend;
pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod embfile;
mod error;
pub mod export;
pub mod formats;
pub mod fsutil;
pub mod pipeline;
pub mod run;

pub use contrastforge_core as core;
pub use error::{Error, Result};
