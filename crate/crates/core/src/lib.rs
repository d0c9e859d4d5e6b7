//! Core library for Bi-Link: text-based knowledge-graph link prediction
//! with paired encoders, learned prompt selection, and entity linking.

pub mod checkpoint;
pub mod config;
pub mod el;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod nn;
pub mod prompt;
pub mod train;
pub mod text;

pub use error::{BiLinkError, Result};
