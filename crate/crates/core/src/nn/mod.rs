//! Tensor math, reverse-mode autodiff, optimization, and gradient checking.

pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check4};
pub use optim::{AdamW, AdamWConfig};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
